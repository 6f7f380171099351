//! Numerical verification of the two Lyapunov constructions.
//!
//! * Linear weights `V(x) = Σ αᵢxᵢ + 1` for any memory length when
//!   `Σ (aᵢ)₊ < 1`.
//! * The rational function `V_α(i,j,k) = (i + αj)/(j + αk + 1) + 1` for
//!   `p = 3`, `b < 0`, `c < 0`, `Disc(P) < 0`, with `α = α_Q`, together with
//!   the small set `A = {ai + bj + ck + λ ≤ 0}`.
//!
//! Both drifts are evaluated in closed form (the Poisson mean enters
//! linearly), so scans over boxes of the state space are exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubic;
use crate::model::{transition_pmf, Params, State};
use crate::scalar::relu;
use crate::{Error, Real, Result};

/// Largest box radius the automatic doubling will try.
pub const MAX_AUTO_RADIUS: u64 = 1600;
pub const DEFAULT_RADIUS: u64 = 200;
/// `ε` candidates `2^-1 … 2^-20` for `V_α`.
pub const EPSILON_GRID_DEPTH: i32 = 20;
/// Unsorted full enumeration is refused beyond this many states.
const MAX_FULL_SCAN: u128 = 50_000_000;

/// Outcome of scanning `[0, r]^p` for states where `ΔV + εV > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport<T> {
    pub epsilon: T,
    /// States outside the small set with `ΔV + εV > 0`, in lexicographic order.
    pub violations: Vec<State>,
    /// Max of `ΔV + εV` over the violations and the scanned part of the small set.
    pub k_bound: T,
    pub box_radius: u64,
    /// No violation has a coordinate equal to `box_radius`.
    pub shell_clean: bool,
    pub small_set_verified: bool,
    /// States of the small set beyond the box are covered by the forced-path bound.
    pub analytic_tail: bool,
}

impl<T> DriftReport<T> {
    /// A violation touches the boundary shell, so the box does not certify finiteness.
    pub fn box_too_small(&self) -> bool {
        !self.shell_clean
    }
}

fn check_three<T: Real>(params: &Params<T>) -> Result<(T, T, T)> {
    params
        .abc()
        .ok_or_else(|| Error::Precondition(format!("memory length 3 required, got {}", params.p())))
}

// ---------------------------------------------------------------------------
// Linear weights, general p

/// `αᵢ = η(p−i+1)/p + Σ_{j≥i} (a_j)₊` with `η = 1 − Σ (aᵢ)₊`.
pub fn linear_weights<T: Real>(params: &Params<T>) -> Result<Vec<T>> {
    let eta = T::one() - params.positive_part_sum();
    if !(eta > T::zero()) {
        return Err(Error::Precondition(format!(
            "linear weights need Σ(aᵢ)₊ < 1, got {}",
            params.positive_part_sum()
        )));
    }
    let p = params.p();
    let pt = T::from_count(p as u64);
    let mut tail = T::zero();
    let mut weights = vec![T::zero(); p];
    for i in (0..p).rev() {
        tail = tail + relu(params.coeffs()[i]);
        weights[i] = eta * T::from_count((p - i) as u64) / pt + tail;
    }
    Ok(weights)
}

/// `η = 1 − Σ (aᵢ)₊`.
pub fn eta<T: Real>(params: &Params<T>) -> T {
    T::one() - params.positive_part_sum()
}

/// Coefficients of `xᵢ` in the affine upper bound of `ΔV + εV`:
/// `(aᵢ)₊ + α_{i+1} + αᵢ(ε − 1)`.
pub fn linear_drift_coefficients<T: Real>(params: &Params<T>, epsilon: T) -> Result<Vec<T>> {
    let w = linear_weights(params)?;
    Ok((0..w.len())
        .map(|i| {
            let next = w.get(i + 1).copied().unwrap_or(T::zero());
            relu(params.coeffs()[i]) + next + w[i] * (epsilon - T::one())
        })
        .collect())
}

fn linear_v<T: Real>(weights: &[T], counts: &[u64]) -> T {
    weights
        .iter()
        .zip(counts)
        .fold(T::one(), |acc, (&w, &x)| acc + w * T::from_count(x))
}

fn linear_drift_value<T: Real>(params: &Params<T>, weights: &[T], counts: &[u64], epsilon: T) -> T {
    let s = relu(params.affine(counts));
    // E[V(X₁)] = α₁s + Σ_{i≥2} αᵢx_{i−1} + 1
    let next = weights[1..]
        .iter()
        .zip(counts)
        .fold(weights[0] * s + T::one(), |acc, (&w, &x)| {
            acc + w * T::from_count(x)
        });
    let v = linear_v(weights, counts);
    next - v + epsilon * v
}

/// Exact `ΔV(x) + εV(x)` for the linear weights.
pub fn linear_delta_v<T: Real>(params: &Params<T>, state: &State, epsilon: T) -> Result<T> {
    params.check_dim(state)?;
    let w = linear_weights(params)?;
    Ok(linear_drift_value(params, &w, state.counts(), epsilon))
}

/// `Σ ((aᵢ)₊ + α_{i+1} + αᵢ(ε−1)) xᵢ + ε + λ`, an upper bound of [`linear_delta_v`].
pub fn linear_affine_bound<T: Real>(params: &Params<T>, state: &State, epsilon: T) -> Result<T> {
    params.check_dim(state)?;
    let coeffs = linear_drift_coefficients(params, epsilon)?;
    Ok(coeffs
        .iter()
        .zip(state.counts())
        .fold(epsilon + params.lambda(), |acc, (&k, &x)| {
            acc + k * T::from_count(x)
        }))
}

/// Scans `[0, r]^p` for states with `ΔV + εV > 0` under the linear weights.
///
/// When every drift coefficient and every `α_{i+1} − αᵢ(1−ε)` is negative the
/// drift is nonincreasing in each coordinate, and the scan prunes every
/// subtree whose corner already satisfies the drift inequality.
pub fn scan_linear_violations<T: Real>(
    params: &Params<T>,
    epsilon: T,
    radius: u64,
) -> Result<DriftReport<T>> {
    let weights = linear_weights(params)?;
    let p = params.p();
    let drift = linear_drift_coefficients(params, epsilon)?;
    let monotone = drift.iter().all(|&k| k < T::zero())
        && (0..p).all(|i| {
            let next = weights.get(i + 1).copied().unwrap_or(T::zero());
            next - weights[i] * (T::one() - epsilon) < T::zero()
        });
    if !monotone {
        let size = (radius as u128 + 1)
            .checked_pow(p as u32)
            .unwrap_or(u128::MAX);
        if size > MAX_FULL_SCAN {
            return Err(Error::ScanTooLarge(size));
        }
    }

    struct Walk<'a, T> {
        params: &'a Params<T>,
        weights: &'a [T],
        epsilon: T,
        radius: u64,
        monotone: bool,
        counts: Vec<u64>,
        violations: Vec<State>,
        k_bound: T,
    }

    impl<T: Real> Walk<'_, T> {
        fn go(&mut self, d: usize) {
            let last = d + 1 == self.counts.len();
            for x in 0..=self.radius {
                self.counts[d] = x;
                let f = linear_drift_value(self.params, self.weights, &self.counts, self.epsilon);
                if self.monotone && !(f > T::zero()) {
                    break;
                }
                if last {
                    if f > T::zero() {
                        self.k_bound = self.k_bound.max(f);
                        self.violations
                            .push(State::new(self.counts.clone()).expect("p ≥ 1"));
                    }
                } else {
                    self.go(d + 1);
                }
            }
            self.counts[d] = 0;
        }
    }

    let mut walk = Walk {
        params,
        weights: &weights,
        epsilon,
        radius,
        monotone,
        counts: vec![0; p],
        violations: Vec::new(),
        k_bound: T::zero(),
    };
    walk.go(0);
    let shell_clean = !walk.violations.iter().any(|s| s.max() == radius);
    Ok(DriftReport {
        epsilon,
        violations: walk.violations,
        k_bound: walk.k_bound,
        box_radius: radius,
        shell_clean,
        // finite sets are small for this chain
        small_set_verified: shell_clean,
        analytic_tail: false,
    })
}

// ---------------------------------------------------------------------------
// V_α, p = 3

/// `V_α(i,j,k) = (i + αj)/(j + αk + 1) + 1`.
pub fn v_alpha<T: Real>(alpha: T, state: &State) -> Result<T> {
    match *state.counts() {
        [i, j, k] => Ok(v_alpha_raw(alpha, i, j, k)),
        _ => Err(Error::DimensionMismatch {
            expected: 3,
            found: state.p(),
        }),
    }
}

#[inline]
fn v_alpha_raw<T: Real>(alpha: T, i: u64, j: u64, k: u64) -> T {
    let (i, j, k) = (T::from_count(i), T::from_count(j), T::from_count(k));
    (i + alpha * j) / (j + alpha * k + T::one()) + T::one()
}

/// `ΔV_α` from the closed form `E[V_α(X₁)] = (s + αi)/(i + αj + 1) + 1`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn delta_v_alpha_raw<T: Real>(a: T, b: T, c: T, lambda: T, alpha: T, i: u64, j: u64, k: u64) -> T {
    let (it, jt, kt) = (T::from_count(i), T::from_count(j), T::from_count(k));
    let s = relu(a * it + b * jt + c * kt + lambda);
    (s + alpha * it) / (it + alpha * jt + T::one()) + T::one() - v_alpha_raw(alpha, i, j, k)
}

/// Exact `ΔV_α(x) = E_x[V_α(X₁)] − V_α(x)`.
pub fn delta_v_alpha<T: Real>(params: &Params<T>, alpha: T, state: &State) -> Result<T> {
    let (a, b, c) = check_three(params)?;
    params.check_dim(state)?;
    let [i, j, k] = [state.counts()[0], state.counts()[1], state.counts()[2]];
    Ok(delta_v_alpha_raw(a, b, c, params.lambda(), alpha, i, j, k))
}

/// Membership in `A = {ai + bj + ck + λ ≤ 0}`, where the next count is 0 surely.
pub fn in_small_set<T: Real>(params: &Params<T>, state: &State) -> bool {
    !(params.affine(state.counts()) > T::zero())
}

/// `q(i,j,k) = −i² + (b−α²)j² + cαk² + (a−α)ij + α(a+α)ik + (c+bα)jk`.
pub fn quad_form_q<T: Real>(a: T, b: T, c: T, alpha: T, x: [T; 3]) -> T {
    let [i, j, k] = x;
    -i * i
        + (b - alpha * alpha) * j * j
        + c * alpha * k * k
        + (a - alpha) * i * j
        + alpha * (a + alpha) * i * k
        + (c + b * alpha) * j * k
}

/// Gauss–Lagrange reduced form of `q`; `None` when `R(α) = 0`.
pub fn gauss_reduced_q<T: Real>(a: T, b: T, c: T, alpha: T, x: [T; 3]) -> Option<T> {
    let r = cubic::r_of_alpha(a, b, alpha);
    if r == T::zero() {
        return None;
    }
    let [i, j, k] = x;
    let two = T::lit(2.0);
    let kk = cubic::k_of_alpha(a, b, c, alpha);
    let det = cubic::det3(&cubic::m_alpha(a, b, c, alpha));
    let first = i + (alpha - a) / two * j - alpha * (a + alpha) / two * k;
    let second = j - kk / (two * r) * k;
    Some(-first * first - r * second * second + det / r * k * k)
}

/// Spanning vector of the isotropic line of `q` at `α` (meaningful when `det M_α = 0`).
pub fn isotropic_direction<T: Real>(a: T, b: T, c: T, alpha: T) -> Option<[T; 3]> {
    let r = cubic::r_of_alpha(a, b, alpha);
    if r == T::zero() {
        return None;
    }
    let (two, four) = (T::lit(2.0), T::lit(4.0));
    let kk = cubic::k_of_alpha(a, b, c, alpha);
    Some([
        alpha * (a + alpha) / two + kk * (a - alpha) / (four * r),
        kk / (two * r),
        T::one(),
    ])
}

/// Points of `{x ≥ 0, ‖x‖ = 1}`: the simplex lattice of resolution `density`
/// projected to the sphere, `(density+1)(density+2)/2` points.
pub fn unit_octant_grid<T: Real>(density: usize) -> Vec<[T; 3]> {
    let d = density.max(1);
    let mut out = Vec::with_capacity((d + 1) * (d + 2) / 2);
    for i in 0..=d {
        for j in 0..=d - i {
            let k = d - i - j;
            let v = [i, j, k].map(|n| T::from_count(n as u64));
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            out.push(v.map(|x| x / norm));
        }
    }
    out
}

/// Maximum of `q` over [`unit_octant_grid`]; strictly negative when `q` is
/// negative definite on the closed positive octant.
pub fn q_form_negativity_check<T: Real>(params: &Params<T>, alpha: T, density: usize) -> Result<T> {
    let (a, b, c) = check_three(params)?;
    if !(b < T::zero() && c < T::zero() && cubic::discriminant(a, b, c) < T::zero()) {
        return Err(Error::Precondition(
            "q negativity needs b < 0, c < 0 and Disc(P) < 0".into(),
        ));
    }
    Ok(unit_octant_grid::<T>(density)
        .into_iter()
        .map(|x| quad_form_q(a, b, c, alpha, x))
        .fold(T::neg_infinity(), T::max))
}

fn shell_points(radius: u64) -> impl Iterator<Item = (u64, u64, u64)> {
    (0..=radius).flat_map(move |i| {
        (0..=radius).flat_map(move |j| {
            let full = i == radius || j == radius;
            let ks: Box<dyn Iterator<Item = u64>> = if full {
                Box::new(0..=radius)
            } else {
                Box::new(std::iter::once(radius))
            };
            ks.map(move |k| (i, j, k))
        })
    })
}

/// Largest `ε = 2^-k` (`k = 1..=20`) for which no state on the boundary shell
/// of `[0, r]³` outside `A` violates `ΔV_α + εV_α ≤ 0`.
pub fn largest_clean_epsilon<T: Real>(
    params: &Params<T>,
    alpha: T,
    radius: u64,
) -> Result<Option<T>> {
    let (a, b, c) = check_three(params)?;
    let lambda = params.lambda();
    // violation iff ε > −ΔV/V
    let limit = shell_points(radius)
        .filter(|&(i, j, k)| {
            let (it, jt, kt) = (T::from_count(i), T::from_count(j), T::from_count(k));
            a * it + b * jt + c * kt + lambda > T::zero()
        })
        .map(|(i, j, k)| {
            -delta_v_alpha_raw(a, b, c, lambda, alpha, i, j, k) / v_alpha_raw(alpha, i, j, k)
        })
        .fold(T::infinity(), T::min);
    Ok((1..=EPSILON_GRID_DEPTH)
        .map(|k| T::lit(2f64.powi(-k)))
        .find(|&eps| eps <= limit))
}

/// Scans `[0, r]³` for states outside `A` with `ΔV_α + εV_α > 0`.
pub fn scan_violations<T: Real>(
    params: &Params<T>,
    alpha: T,
    epsilon: T,
    radius: u64,
) -> Result<DriftReport<T>> {
    let (a, b, c) = check_three(params)?;
    if !(epsilon > T::zero() && epsilon <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    let lambda = params.lambda();
    let slabs: Vec<(Vec<State>, T)> = (0..=radius)
        .into_par_iter()
        .map(|i| {
            let mut violations = Vec::new();
            let mut k_bound = T::neg_infinity();
            let it = T::from_count(i);
            for j in 0..=radius {
                let jt = T::from_count(j);
                for k in 0..=radius {
                    let kt = T::from_count(k);
                    let value = delta_v_alpha_raw(a, b, c, lambda, alpha, i, j, k)
                        + epsilon * v_alpha_raw(alpha, i, j, k);
                    if a * it + b * jt + c * kt + lambda > T::zero() {
                        if value > T::zero() {
                            violations.push(State::from([i, j, k]));
                            k_bound = k_bound.max(value);
                        }
                    } else {
                        k_bound = k_bound.max(value);
                    }
                }
            }
            (violations, k_bound)
        })
        .collect();
    let mut violations = Vec::new();
    let mut k_bound = T::zero();
    for (v, k) in slabs {
        violations.extend(v);
        k_bound = k_bound.max(k);
    }
    let shell_clean = !violations.iter().any(|s| s.max() == radius);
    Ok(DriftReport {
        epsilon,
        violations,
        k_bound,
        box_radius: radius,
        shell_clean,
        small_set_verified: false,
        analytic_tail: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSetCheck<T> {
    pub verified: bool,
    /// Smallest `P³(x, 0)` over `A ∩ [0, r]³` (1 when the intersection is empty).
    pub min_probability: T,
    /// `e^{−2λ}`.
    pub bound: T,
    pub states_checked: u64,
    /// Every checked state satisfied `P(x, (0, x₁, x₂)) = 1`.
    pub forced_first_step: bool,
    pub analytic_tail: bool,
}

/// Checks `P³(x, 0) ≥ e^{−2λ}` on `A ∩ [0, r]³` by composing the kernel
/// along the only path `x → (0,x₁,x₂) → (0,0,x₁) → 0`.
pub fn verify_small_set<T: Real>(params: &Params<T>, radius: u64) -> Result<SmallSetCheck<T>> {
    let (_, b, c) = check_three(params)?;
    if b > T::zero() || c > T::zero() {
        return Err(Error::Precondition(format!(
            "small-set check needs b ≤ 0 and c ≤ 0, got b={b}, c={c}"
        )));
    }
    let bound = (-T::lit(2.0) * params.lambda()).exp();
    let slabs: Vec<Result<(T, u64, bool)>> = (0..=radius)
        .into_par_iter()
        .map(|i| {
            let mut min_p = T::one();
            let mut count = 0u64;
            let mut forced = true;
            for j in 0..=radius {
                for k in 0..=radius {
                    let x = State::from([i, j, k]);
                    if !in_small_set(params, &x) {
                        continue;
                    }
                    count += 1;
                    let first = transition_pmf(params, &x, 0)?;
                    forced &= first == T::one();
                    let second = transition_pmf(params, &State::from([0, i, j]), 0)?;
                    let third = transition_pmf(params, &State::from([0, 0, i]), 0)?;
                    min_p = min_p.min(first * second * third);
                }
            }
            Ok((min_p, count, forced))
        })
        .collect();
    let mut min_probability = T::one();
    let mut states_checked = 0;
    let mut forced_first_step = true;
    for slab in slabs {
        let (m, n, f) = slab?;
        min_probability = min_probability.min(m);
        states_checked += n;
        forced_first_step &= f;
    }
    let slack = T::one() - T::lit(64.0) * T::epsilon();
    Ok(SmallSetCheck {
        verified: forced_first_step && min_probability >= bound * slack,
        min_probability,
        bound,
        states_checked,
        forced_first_step,
        analytic_tail: true,
    })
}

/// Every computable premise of the three-memory Lyapunov argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalDriftCheck<T> {
    pub alpha_q: T,
    pub det_residual: T,
    /// `1e-9` times the cube of the largest entry of `M_α` (at least 1).
    pub det_tolerance: T,
    pub r_at_alpha_q: T,
    pub k_at_alpha_q: T,
    pub q_grid_max: T,
    pub q_grid_points: usize,
    pub report: DriftReport<T>,
    pub small_set: SmallSetCheck<T>,
}

impl<T: Real> RationalDriftCheck<T> {
    pub fn passed(&self) -> bool {
        self.det_residual <= self.det_tolerance
            && self.r_at_alpha_q > T::zero()
            && self.k_at_alpha_q < T::zero()
            && self.q_grid_max < T::zero()
            && self.report.shell_clean
            && self.small_set.verified
    }
}

/// Density of the `q` grid used by [`verify_rational_drift`]: 210 unit vectors.
pub const Q_GRID_DENSITY: usize = 19;

/// Runs the whole `V_α` pipeline at `α = α_Q`, doubling the box from
/// `radius` up to [`MAX_AUTO_RADIUS`] until a clean `ε` exists.
pub fn verify_rational_drift<T: Real>(
    params: &Params<T>,
    radius: u64,
) -> Result<RationalDriftCheck<T>> {
    let (a, b, c) = check_three(params)?;
    if !(b < T::zero() && c < T::zero() && cubic::discriminant(a, b, c) < T::zero()) {
        return Err(Error::Precondition(
            "needs b < 0, c < 0 and Disc(P) < 0".into(),
        ));
    }
    let alpha = cubic::alpha_q(a, b, c)?;
    let mut r = radius.max(1);
    let epsilon = loop {
        if let Some(eps) = largest_clean_epsilon(params, alpha, r)? {
            break Some(eps);
        }
        if r >= MAX_AUTO_RADIUS {
            break None;
        }
        r = (r * 2).min(MAX_AUTO_RADIUS);
    };
    let epsilon = epsilon.unwrap_or(T::lit(2f64.powi(-EPSILON_GRID_DEPTH)));
    let mut report = scan_violations(params, alpha, epsilon, r)?;
    let small_set = verify_small_set(params, r)?;
    report.small_set_verified = small_set.verified;
    report.analytic_tail = small_set.analytic_tail;
    let grid = unit_octant_grid::<T>(Q_GRID_DENSITY);
    let scale = cubic::m_alpha(a, b, c, alpha)
        .iter()
        .flatten()
        .fold(T::one(), |m, &x| m.max(x.abs()));
    Ok(RationalDriftCheck {
        alpha_q: alpha,
        det_residual: cubic::det_m_alpha_identity_check(a, b, c, alpha),
        det_tolerance: T::lit(1e-9) * scale * scale * scale,
        r_at_alpha_q: cubic::r_of_alpha(a, b, alpha),
        k_at_alpha_q: cubic::k_of_alpha(a, b, c, alpha),
        q_grid_max: q_form_negativity_check(params, alpha, Q_GRID_DENSITY)?,
        q_grid_points: grid.len(),
        report,
        small_set,
    })
}
