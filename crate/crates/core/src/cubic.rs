//! Closed-form analytics of `P(X) = X³ − aX² − bX − c` and its mirror
//! `Q(X) = X³ + aX² − bX + c = −P(−X)`, together with the matrix `M_α` of the
//! quadratic form used by the three-memory Lyapunov function.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Relative width of the band around `Disc(P) = 0` treated as boundary.
pub const BOUNDARY_REL: f64 = 1e-9;

const NEWTON_POLISH_STEPS: usize = 5;

/// Everything the three-memory theory needs to know about `(a, b, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicReport<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub disc: T,
    /// Real roots of `P`, ascending, repeated by multiplicity when `disc ≥ 0`.
    pub real_roots: Vec<T>,
    pub spectral_radius: T,
    pub c_minus: Option<T>,
    pub c_plus: Option<T>,
    pub alpha_q: Option<T>,
    pub r_at_alpha_q: Option<T>,
    pub k_at_alpha_q: Option<T>,
}

impl<T: Real> CubicReport<T> {
    pub fn analyze(a: T, b: T, c: T) -> Self {
        let disc = discriminant(a, b, c);
        let bounds = c_bounds(a, b);
        let alpha = alpha_q(a, b, c).ok();
        Self {
            a,
            b,
            c,
            disc,
            real_roots: real_roots(a, b, c),
            spectral_radius: spectral_radius(a, b, c),
            c_minus: bounds.map(|(lo, _)| lo),
            c_plus: bounds.map(|(_, hi)| hi),
            alpha_q: alpha,
            r_at_alpha_q: alpha.map(|al| r_of_alpha(a, b, al)),
            k_at_alpha_q: alpha.map(|al| k_of_alpha(a, b, c, al)),
        }
    }

    pub fn is_boundary(&self) -> bool {
        is_boundary(self.a, self.b, self.c)
    }
}

/// `a²b² + 4b³ − 4a³c − 18abc − 27c²`.
pub fn discriminant<T: Real>(a: T, b: T, c: T) -> T {
    let (four, eighteen, twenty_seven) = (T::lit(4.0), T::lit(18.0), T::lit(27.0));
    a * a * b * b + four * b * b * b
        - four * a * a * a * c
        - eighteen * a * b * c
        - twenty_seven * c * c
}

/// Half-width of the boundary band around `Disc = 0`.
pub fn boundary_width<T: Real>(a: T, b: T, c: T) -> T {
    let scale = a.powi(4) + b.abs().powi(3) + c * c;
    T::lit(BOUNDARY_REL) * scale.max(T::one())
}

/// `|Disc(P)|` lies within the boundary band.
pub fn is_boundary<T: Real>(a: T, b: T, c: T) -> bool {
    discriminant(a, b, c).abs() <= boundary_width(a, b, c)
}

/// `Disc(P)` is negative and outside the boundary band.
pub fn disc_negative<T: Real>(a: T, b: T, c: T) -> bool {
    discriminant(a, b, c) < -boundary_width(a, b, c)
}

pub fn p_eval<T: Real>(a: T, b: T, c: T, x: T) -> T {
    ((x - a) * x - b) * x - c
}

pub fn q_eval<T: Real>(a: T, b: T, c: T, x: T) -> T {
    ((x + a) * x - b) * x + c
}

/// Thresholds `c₋ ≤ c₊` outside of which `Disc(P) < 0`; `None` when
/// `a² + 3b < 0`, in which case `Disc(P) < 0` for every `c`.
pub fn c_bounds<T: Real>(a: T, b: T) -> Option<(T, T)> {
    let h = a * a + T::lit(3.0) * b;
    if h < T::zero() {
        return None;
    }
    let base = -T::lit(2.0) * a.powi(3) - T::lit(9.0) * a * b;
    let spread = T::lit(2.0) * h * h.sqrt();
    let t27 = T::lit(27.0);
    Some(((base - spread) / t27, (base + spread) / t27))
}

fn cauchy_bound<T: Real>(a: T, b: T, c: T) -> T {
    T::one() + a.abs().max(b.abs()).max(c.abs())
}

/// Finds a zero of `f` in `[lo, hi]` assuming `f(lo) ≤ 0 ≤ f(hi)`.
fn bisect<T: Real>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let two = T::lit(2.0);
    for _ in 0..2000 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == T::zero() {
            return mid;
        }
        if v < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / two
}

/// Newton iterations that are kept only while they reduce `|f|`.
fn newton_polish<T: Real>(mut x: T, f: impl Fn(T) -> T, df: impl Fn(T) -> T) -> T {
    let mut fx = f(x).abs();
    for _ in 0..NEWTON_POLISH_STEPS {
        let d = df(x);
        if d == T::zero() || !d.is_finite() {
            break;
        }
        let next = x - f(x) / d;
        let fn_ = f(next).abs();
        if !(fn_ < fx) {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}

fn p_deriv<T: Real>(a: T, b: T, x: T) -> T {
    (T::lit(3.0) * x - T::lit(2.0) * a) * x - b
}

/// One real root of `P` and the monic quadratic factor `X² + βX + γ` left after deflation.
fn deflate<T: Real>(a: T, b: T, c: T) -> (T, T, T) {
    let bound = cauchy_bound(a, b, c);
    let f = |x| p_eval(a, b, c, x);
    let r0 = newton_polish(bisect(-bound, bound, f), f, |x| p_deriv(a, b, x));
    let beta = r0 - a;
    let gamma = r0 * beta - b;
    (r0, beta, gamma)
}

/// Real roots of `P` in ascending order.
///
/// When `Disc(P)` is negative beyond the boundary band a single root is
/// returned; otherwise three, counted with multiplicity.
pub fn real_roots<T: Real>(a: T, b: T, c: T) -> Vec<T> {
    let (r0, beta, gamma) = deflate(a, b, c);
    if disc_negative(a, b, c) {
        return vec![r0];
    }
    let two = T::lit(2.0);
    let d = (beta * beta - T::lit(4.0) * gamma).max(T::zero());
    let (r1, r2) = if d == T::zero() {
        (-beta / two, -beta / two)
    } else {
        // numerically stable quadratic formula
        let t = -(beta + beta.signum() * d.sqrt()) / two;
        if t == T::zero() {
            (T::zero(), T::zero())
        } else {
            (t, gamma / t)
        }
    };
    let f = |x| p_eval(a, b, c, x);
    let df = |x| p_deriv(a, b, x);
    let mut roots: Vec<T> = [r0, r1, r2]
        .into_iter()
        .map(|r| newton_polish(r, f, df))
        .collect();
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    roots
}

/// Largest modulus over all complex roots of `P`.
pub fn spectral_radius<T: Real>(a: T, b: T, c: T) -> T {
    let (r0, beta, gamma) = deflate(a, b, c);
    let d = beta * beta - T::lit(4.0) * gamma;
    let other = if d < T::zero() {
        // conjugate pair: |z|² = γ
        gamma.sqrt()
    } else {
        let two = T::lit(2.0);
        let t = -(beta + beta.signum() * d.sqrt()) / two;
        if t == T::zero() {
            T::zero()
        } else {
            t.abs().max((gamma / t).abs())
        }
    };
    r0.abs().max(other)
}

/// The unique real root `α_Q` of `Q`, positive when `Disc(P) < 0` and `c < 0`.
pub fn alpha_q<T: Real>(a: T, b: T, c: T) -> Result<T> {
    if !(discriminant(a, b, c) < T::zero()) {
        return Err(Error::Precondition(format!(
            "alpha_q needs Disc(P) < 0, got {}",
            discriminant(a, b, c)
        )));
    }
    if !(c < T::zero()) {
        return Err(Error::Precondition(format!("alpha_q needs c < 0, got {c}")));
    }
    let f = |x| q_eval(a, b, c, x);
    let df = |x: T| (T::lit(3.0) * x + T::lit(2.0) * a) * x - b;
    let root = bisect(T::zero(), cauchy_bound(a, b, c), f);
    Ok(newton_polish(root, f, df))
}

/// Leading 2×2 minor of `M_α`: `(−a² − 4b + 2aα + 3α²)/4`.
pub fn r_of_alpha<T: Real>(a: T, b: T, alpha: T) -> T {
    (-a * a - T::lit(4.0) * b + T::lit(2.0) * a * alpha + T::lit(3.0) * alpha * alpha) / T::lit(4.0)
}

/// `c + αb − α(α + a)(α − a)/2`.
pub fn k_of_alpha<T: Real>(a: T, b: T, c: T, alpha: T) -> T {
    c + alpha * b - alpha * (alpha + a) * (alpha - a) / T::lit(2.0)
}

/// Symmetric matrix of the quadratic form
/// `q = −i² + (b−α²)j² + cαk² + (a−α)ij + α(a+α)ik + (c+bα)jk`.
pub fn m_alpha<T: Real>(a: T, b: T, c: T, alpha: T) -> [[T; 3]; 3] {
    let half = T::lit(0.5);
    let m01 = (a - alpha) * half;
    let m02 = alpha * (a + alpha) * half;
    let m12 = (c + b * alpha) * half;
    [
        [-T::one(), m01, m02],
        [m01, b - alpha * alpha, m12],
        [m02, m12, c * alpha],
    ]
}

pub fn det3<T: Real>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `|det M_α − Q(α)²/4|`.
pub fn det_m_alpha_identity_check<T: Real>(a: T, b: T, c: T, alpha: T) -> T {
    let q = q_eval(a, b, c, alpha);
    (det3(&m_alpha(a, b, c, alpha)) - q * q / T::lit(4.0)).abs()
}

/// Stability frontier of the two-memory chain: `1` for `a ≤ 0`, `1 − a` on
/// `(0, 2)`, `−a²/4` for `a ≥ 2`.
pub fn b_star<T: Real>(a: T) -> T {
    let two = T::lit(2.0);
    if a <= T::zero() {
        T::one()
    } else if a < two {
        T::one() - a
    } else {
        -a * a / T::lit(4.0)
    }
}
