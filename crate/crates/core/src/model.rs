//! Parameters, states and the one-step transition kernel of the chain.
//!
//! The chain lives on `ℕ^p`; a state holds the last `p` counts, most recent
//! first. Given state `x`, the next count is Poisson with mean
//! `s(x) = (a₁x₁ + … + a_p x_p + λ)₊` and the state shifts by one.

use serde::{Deserialize, Serialize};

use crate::scalar::relu;
use crate::special::ln_gamma;
use crate::{Error, Real, Result};

/// Memory coefficients `a₁..a_p` and baseline `λ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    coeffs: Vec<T>,
    lambda: T,
}

impl<T: Real> Params<T> {
    pub fn new(coeffs: Vec<T>, lambda: T) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "memory length p must be at least 1".into(),
            ));
        }
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient a{} is not finite",
                bad + 1
            )));
        }
        if !lambda.is_finite() || lambda <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "baseline λ must be finite and > 0, got {lambda}"
            )));
        }
        Ok(Self { coeffs, lambda })
    }

    /// Three-memory parameters `(a, b, c)`.
    pub fn three(a: T, b: T, c: T, lambda: T) -> Result<Self> {
        Self::new(vec![a, b, c], lambda)
    }

    /// Memory length `p`.
    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `(a, b, c)` when `p = 3`.
    pub fn abc(&self) -> Option<(T, T, T)> {
        match self.coeffs[..] {
            [a, b, c] => Some((a, b, c)),
            _ => None,
        }
    }

    /// `Σ (aᵢ)₊`.
    pub fn positive_part_sum(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, &a| acc + relu(a))
    }

    /// Mean of the next count from `state`, before clipping.
    pub fn affine(&self, counts: &[u64]) -> T {
        self.coeffs
            .iter()
            .zip(counts)
            .fold(self.lambda, |acc, (&a, &x)| acc + a * T::from_count(x))
    }

    pub(crate) fn check_dim(&self, state: &State) -> Result<()> {
        if state.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: state.p(),
            });
        }
        Ok(())
    }
}

/// Last `p` counts, index 0 the most recent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    counts: Vec<u64>,
}

impl State {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter(
                "state must have at least one coordinate".into(),
            ));
        }
        Ok(Self { counts })
    }

    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "memory length must be positive");
        Self { counts: vec![0; p] }
    }

    pub fn p(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Most recent count `X̃_n`.
    pub fn head(&self) -> u64 {
        self.counts[0]
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&x| x == 0)
    }

    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// `(ℓ, x₁, …, x_{p−1})`: the state after observing `next`.
    pub fn push(&self, next: u64) -> State {
        let mut out = self.clone();
        out.push_in_place(next);
        out
    }

    pub fn push_in_place(&mut self, next: u64) {
        let p = self.counts.len();
        self.counts.copy_within(0..p - 1, 1);
        self.counts[0] = next;
    }
}

impl From<[u64; 3]> for State {
    fn from(v: [u64; 3]) -> Self {
        Self { counts: v.to_vec() }
    }
}

/// `s(x) = max(0, Σ aᵢxᵢ + λ)`.
pub fn intensity<T: Real>(params: &Params<T>, state: &State) -> Result<T> {
    params.check_dim(state)?;
    Ok(relu(params.affine(state.counts())))
}

/// `P(x, (ℓ, x₁, …, x_{p−1}))`.
pub fn transition_pmf<T: Real>(params: &Params<T>, state: &State, next: u64) -> Result<T> {
    Ok(poisson_pmf(intensity(params, state)?, next))
}

/// Poisson probability mass, evaluated in log space; mean 0 is the Dirac mass at 0.
pub fn poisson_pmf<T: Real>(mean: T, k: u64) -> T {
    if mean <= T::zero() {
        return if k == 0 { T::one() } else { T::zero() };
    }
    let k_t = T::from_count(k);
    (k_t * mean.ln() - mean - ln_gamma(k_t + T::one())).exp()
}

/// Shift `next` into `state`.
pub fn push_state(state: &State, next: u64) -> State {
    state.push(next)
}
