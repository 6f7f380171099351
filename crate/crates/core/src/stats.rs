//! Exact binomial confidence intervals and empirical distribution functions.

use serde::{Deserialize, Serialize};

use crate::special::{beta_inc, beta_pdf};
use crate::{Error, Real, Result};

/// Two-sided Clopper–Pearson interval for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub lower: T,
    pub upper: T,
    /// Nominal coverage `1 − α`.
    pub level: T,
    pub successes: u64,
    pub trials: u64,
}

impl<T: Real> ConfidenceInterval<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn contains(&self, p: T) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Exact interval `[B(α/2; X, N−X+1), B(1−α/2; X+1, N−X)]` with the usual
/// conventions at `X = 0` and `X = N`.
pub fn clopper_pearson<T: Real>(
    successes: u64,
    trials: u64,
    alpha: T,
) -> Result<ConfidenceInterval<T>> {
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "number of trials must be at least 1".into(),
        ));
    }
    if successes > trials {
        return Err(Error::InvalidParameter(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let half = alpha / T::lit(2.0);
    let n = T::from_count(trials);
    let x = T::from_count(successes);
    let one = T::one();
    let lower = if successes == 0 {
        T::zero()
    } else if successes == trials {
        half.powf(one / n)
    } else {
        beta_quantile(half, x, n - x + one)
    };
    let upper = if successes == trials {
        one
    } else if successes == 0 {
        one - half.powf(one / n)
    } else {
        beta_quantile(one - half, x + one, n - x)
    };
    Ok(ConfidenceInterval {
        lower,
        upper,
        level: one - alpha,
        successes,
        trials,
    })
}

/// `γ`-quantile of `Beta(x, y)`: bracketed bisection, then Newton polish.
pub fn beta_quantile<T: Real>(gamma: T, x: T, y: T) -> T {
    let zero = T::zero();
    let one = T::one();
    if gamma <= zero {
        return zero;
    }
    if gamma >= one {
        return one;
    }
    let (mut lo, mut hi) = (zero, one);
    let tol = T::lit(1e-12);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if beta_inc(mid, x, y) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut q = (lo + hi) / T::lit(2.0);
    let mut err = (beta_inc(q, x, y) - gamma).abs();
    for _ in 0..5 {
        let d = beta_pdf(q, x, y);
        if !(d > zero) || !d.is_finite() {
            break;
        }
        let next = q - (beta_inc(q, x, y) - gamma) / d;
        if !(next > zero && next < one) {
            break;
        }
        let next_err = (beta_inc(next, x, y) - gamma).abs();
        if !(next_err < err) {
            break;
        }
        q = next;
        err = next_err;
    }
    q
}

/// Right-continuous ECDF support: each distinct value with the fraction of
/// samples `≤` it.
pub fn ecdf(samples: &[u64]) -> Result<Vec<(u64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Empty("ecdf needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Quantile by plain bisection on `I_q(x, y)`; no Newton step.
    fn quantile_oracle(gamma: f64, x: f64, y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if beta_inc(mid, x, y) < gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_successes() {
        let ci = clopper_pearson(0, 100, 0.01f64).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert_relative_eq!(ci.upper, 1.0 - 0.005f64.powf(0.01), epsilon = 1e-15);
        assert!((ci.upper - 0.05161).abs() < 1e-5);
    }

    #[test]
    fn all_successes_mirror_zero() {
        let ci = clopper_pearson(100, 100, 0.01f64).unwrap();
        assert_eq!(ci.upper, 1.0);
        assert_relative_eq!(ci.lower, 0.005f64.powf(0.01), epsilon = 1e-15);
        let zero = clopper_pearson(0, 100, 0.01f64).unwrap();
        assert_relative_eq!(ci.lower, 1.0 - zero.upper, epsilon = 1e-15);
    }

    #[test]
    fn half_successes() {
        let ci = clopper_pearson(5, 10, 0.05f64).unwrap();
        assert_relative_eq!(ci.lower, quantile_oracle(0.025, 5.0, 6.0), epsilon = 1e-10);
        assert_relative_eq!(ci.upper, quantile_oracle(0.975, 6.0, 5.0), epsilon = 1e-10);
        assert!((ci.lower - 0.187).abs() < 1e-3 && (ci.upper - 0.813).abs() < 1e-3);
    }

    #[test]
    fn invalid_inputs() {
        assert!(clopper_pearson(3, 2, 0.05f64).is_err());
        assert!(clopper_pearson(0, 0, 0.05f64).is_err());
        assert!(clopper_pearson(1, 2, 0.0f64).is_err());
        assert!(clopper_pearson(1, 2, 1.0f64).is_err());
    }

    #[test]
    fn beta_quantile_examples() {
        assert_relative_eq!(beta_quantile(0.5f64, 1.0, 1.0), 0.5, epsilon = 1e-12);
        for &(g, n) in &[(0.1f64, 3.0f64), (0.5, 10.0), (0.995, 100.0)] {
            assert_relative_eq!(
                beta_quantile(g, 1.0, n),
                1.0 - (1.0 - g).powf(1.0 / n),
                epsilon = 1e-10
            );
        }
        assert!((beta_quantile(0.975f64, 6.0, 5.0) - 0.813).abs() < 1e-3);
    }

    #[test]
    fn beta_quantile_inverts() {
        for &(g, x, y) in &[
            (0.005f64, 3.0, 99998.0),
            (0.995, 4.0, 99997.0),
            (0.3, 0.7, 2.5),
            (0.9, 50.0, 50.0),
        ] {
            let q = beta_quantile(g, x, y);
            assert!((beta_inc(q, x, y) - g).abs() < 1e-9, "g={g} x={x} y={y}");
        }
    }

    #[test]
    fn monotone_in_successes() {
        let n = 30;
        let cis: Vec<_> = (0..=n)
            .map(|x| clopper_pearson(x, n, 0.01f64).unwrap())
            .collect();
        for w in cis.windows(2) {
            assert!(w[0].lower <= w[1].lower && w[0].upper <= w[1].upper);
        }
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf(&[3, 3, 7]).unwrap(), vec![(3, 2.0 / 3.0), (7, 1.0)]);
        assert_eq!(ecdf(&[4, 4, 4]).unwrap(), vec![(4, 1.0)]);
        assert!(ecdf(&[]).is_err());
        let with_atom = ecdf(&[2, 5, 10_001, 10_001]).unwrap();
        assert_eq!(with_atom.last(), Some(&(10_001, 1.0)));
        assert_eq!(with_atom[with_atom.len() - 2].1, 0.5);
    }
}
