//! Maps parameters to the strongest stability verdict available, recording
//! which rule fired.
//!
//! Rules are checked in a fixed priority order, strongest first. All
//! thresholds are strict with a margin of [`THRESHOLD_TOL`]; parameters that
//! sit on a threshold fall through to `Boundary` or `Unknown`.

use serde::{Deserialize, Serialize};

use crate::cubic::{self, CubicReport};
use crate::model::Params;
use crate::{Error, Real, Result};

pub const THRESHOLD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// `Σ (aᵢ)₊ < 1`, any memory length.
    ErgodicGeneralP,
    /// `p = 3`, `b < 0`, `c < 0`, `Disc(P) < 0`.
    ErgodicDiscNegative,
    /// `c = 0` (or `p = 2`) and `b < b★(a)`.
    ErgodicP2Region,
    /// `p = 3`, `a < 0`, `b < 0`, `c > 1`.
    TransientAxes,
    /// `p = 3`, `b > 1`, `ab + c < 0`.
    TransientOscillating,
    /// All `aᵢ ≥ 0` and `Σ aᵢ > 1`.
    TransientLinear,
    /// `c = 0` (or `p = 2`) and `b > b★(a)`.
    TransientP2Region,
    /// `p = 3`, `b ≤ 1`, `c < 0`, `Disc(P) < 0`, nothing proven.
    ConjecturedErgodic,
    /// `Disc(P)` inside the boundary band where a discriminant rule would decide.
    Boundary,
    Unknown,
}

impl Verdict {
    /// Short stable code used in CSV output.
    pub fn code(self) -> &'static str {
        match self {
            Verdict::ErgodicGeneralP => "EG",
            Verdict::ErgodicDiscNegative => "ED",
            Verdict::ErgodicP2Region => "E2",
            Verdict::TransientAxes => "TA",
            Verdict::TransientOscillating => "TO",
            Verdict::TransientLinear => "TL",
            Verdict::TransientP2Region => "T2",
            Verdict::ConjecturedErgodic => "CE",
            Verdict::Boundary => "BD",
            Verdict::Unknown => "UN",
        }
    }

    pub fn is_proven_ergodic(self) -> bool {
        matches!(
            self,
            Verdict::ErgodicGeneralP | Verdict::ErgodicDiscNegative | Verdict::ErgodicP2Region
        )
    }

    pub fn is_proven_transient(self) -> bool {
        matches!(
            self,
            Verdict::TransientAxes
                | Verdict::TransientOscillating
                | Verdict::TransientLinear
                | Verdict::TransientP2Region
        )
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

pub mod rules {
    pub const POSITIVE_PART_SUM: &str = "positive-part-sum<1";
    pub const LINEAR_SUPERCRITICAL: &str = "nonnegative-coefficients-sum>1";
    pub const DISC_BOUNDARY: &str = "disc-boundary-band";
    pub const COMPLEX_ROOTS_NEGATIVE_BC: &str = "b<0,c<0,disc<0";
    pub const AXIS_CYCLE: &str = "a<0,b<0,c>1";
    pub const TWO_STEP_OSCILLATION: &str = "b>1,ab+c<0";
    pub const MEMORY_TWO_STABLE: &str = "memory-two:b<b*(a)";
    pub const MEMORY_TWO_TRANSIENT: &str = "memory-two:b>b*(a)";
    pub const CONJECTURE: &str = "conjecture:b<=1,c<0,disc<0";
    pub const CONJECTURE_B_ONE: &str = "conjecture:b<=1,c<0,disc<0;boundary_b=1";
    pub const NONE: &str = "none";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel<T> {
    pub verdict: Verdict,
    pub rule: String,
    pub witness: Option<CubicReport<T>>,
}

impl<T> RegionLabel<T> {
    fn new(verdict: Verdict, rule: &str, witness: Option<CubicReport<T>>) -> Self {
        Self {
            verdict,
            rule: rule.to_string(),
            witness,
        }
    }
}

fn lt<T: Real>(x: T, thr: T) -> bool {
    x < thr - T::lit(THRESHOLD_TOL)
}

fn gt<T: Real>(x: T, thr: T) -> bool {
    x > thr + T::lit(THRESHOLD_TOL)
}

/// Two-memory recall: `Some(true)` ergodic, `Some(false)` transient, `None` on `b = b★(a)`.
fn memory_two_region<T: Real>(a: T, b: T) -> Option<bool> {
    let frontier = cubic::b_star(a);
    if lt(b, frontier) {
        Some(true)
    } else if gt(b, frontier) {
        Some(false)
    } else {
        None
    }
}

pub fn classify<T: Real>(params: &Params<T>) -> Result<RegionLabel<T>> {
    let coeffs = params.coeffs();
    let one = T::one();
    let zero = T::zero();

    let general = lt(params.positive_part_sum(), one);
    let sum = coeffs.iter().fold(zero, |acc, &a| acc + a);
    let linear = coeffs.iter().all(|&a| a >= zero) && gt(sum, one);

    let (a, b, c, witness) = match *coeffs {
        [a, b, c] => (a, b, c, Some(CubicReport::analyze(a, b, c))),
        [a, b] => (a, b, zero, None),
        _ => {
            check_consistency(
                &[(general, rules::POSITIVE_PART_SUM)],
                &[(linear, rules::LINEAR_SUPERCRITICAL)],
            )?;
            return Ok(if general {
                RegionLabel::new(Verdict::ErgodicGeneralP, rules::POSITIVE_PART_SUM, None)
            } else if linear {
                RegionLabel::new(Verdict::TransientLinear, rules::LINEAR_SUPERCRITICAL, None)
            } else {
                RegionLabel::new(Verdict::Unknown, rules::NONE, None)
            });
        }
    };
    let three = witness.is_some();

    let disc_neg = three && cubic::disc_negative(a, b, c);
    let in_band = three && cubic::is_boundary(a, b, c);
    let c_neg = three && lt(c, zero);
    let complex_negative = lt(b, zero) && c_neg && disc_neg;
    let axes = three && lt(a, zero) && lt(b, zero) && gt(c, one);
    let oscillation = three && gt(b, one) && lt(a * b + c, zero);
    let memory_two = if c.abs() <= T::lit(THRESHOLD_TOL) {
        memory_two_region(a, b)
    } else {
        None
    };
    let m2_stable = memory_two == Some(true);
    let m2_transient = memory_two == Some(false);

    check_consistency(
        &[
            (general, rules::POSITIVE_PART_SUM),
            (complex_negative, rules::COMPLEX_ROOTS_NEGATIVE_BC),
            (m2_stable, rules::MEMORY_TWO_STABLE),
        ],
        &[
            (linear, rules::LINEAR_SUPERCRITICAL),
            (axes, rules::AXIS_CYCLE),
            (oscillation, rules::TWO_STEP_OSCILLATION),
            (m2_transient, rules::MEMORY_TWO_TRANSIENT),
        ],
    )?;

    let conj_b = !gt(b, one);
    let label = if general {
        RegionLabel::new(Verdict::ErgodicGeneralP, rules::POSITIVE_PART_SUM, witness)
    } else if linear {
        RegionLabel::new(
            Verdict::TransientLinear,
            rules::LINEAR_SUPERCRITICAL,
            witness,
        )
    } else if in_band && c_neg && conj_b {
        RegionLabel::new(Verdict::Boundary, rules::DISC_BOUNDARY, witness)
    } else if complex_negative {
        RegionLabel::new(
            Verdict::ErgodicDiscNegative,
            rules::COMPLEX_ROOTS_NEGATIVE_BC,
            witness,
        )
    } else if axes {
        RegionLabel::new(Verdict::TransientAxes, rules::AXIS_CYCLE, witness)
    } else if oscillation {
        RegionLabel::new(
            Verdict::TransientOscillating,
            rules::TWO_STEP_OSCILLATION,
            witness,
        )
    } else if m2_stable {
        RegionLabel::new(Verdict::ErgodicP2Region, rules::MEMORY_TWO_STABLE, witness)
    } else if m2_transient {
        RegionLabel::new(
            Verdict::TransientP2Region,
            rules::MEMORY_TWO_TRANSIENT,
            witness,
        )
    } else if conj_b && c_neg && disc_neg {
        let rule = if (b - one).abs() <= T::lit(THRESHOLD_TOL) {
            rules::CONJECTURE_B_ONE
        } else {
            rules::CONJECTURE
        };
        RegionLabel::new(Verdict::ConjecturedErgodic, rule, witness)
    } else {
        RegionLabel::new(Verdict::Unknown, rules::NONE, witness)
    };
    Ok(label)
}

fn check_consistency(
    ergodic: &[(bool, &'static str)],
    transient: &[(bool, &'static str)],
) -> Result<()> {
    let e = ergodic.iter().find(|(fired, _)| *fired);
    let t = transient.iter().find(|(fired, _)| *fired);
    match (e, t) {
        (Some(&(_, ergodic)), Some(&(_, transient))) => {
            Err(Error::Contradiction { ergodic, transient })
        }
        _ => Ok(()),
    }
}

/// Inclusive arithmetic grid `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis<T> {
    pub start: T,
    pub stop: T,
    pub step: T,
}

impl<T: Real> GridAxis<T> {
    pub fn new(start: T, stop: T, step: T) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::InvalidParameter("grid bounds must be finite".into()));
        }
        if !(step > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if stop < start {
            return Err(Error::Empty("grid range has stop < start"));
        }
        Ok(Self { start, stop, step })
    }

    pub fn point(x: T) -> Self {
        Self {
            start: x,
            stop: x,
            step: T::one(),
        }
    }

    pub fn len(&self) -> usize {
        let n = ((self.stop - self.start) / self.step + T::lit(1e-9)).floor();
        n.to_usize().unwrap_or(0) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> impl Iterator<Item = T> + Clone + '_ {
        (0..self.len()).map(move |i| self.start + self.step * T::from_count(i as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub label: RegionLabel<T>,
}

/// Row-major sweep (`a` outermost, `c` innermost) classifying every cell.
pub fn classify_grid<T: Real>(
    a: GridAxis<T>,
    b: GridAxis<T>,
    c: GridAxis<T>,
    lambda: T,
) -> Result<impl Iterator<Item = Result<GridCell<T>>>> {
    Params::three(T::zero(), T::zero(), T::zero(), lambda)?;
    let bs: Vec<T> = b.values().collect();
    let cs: Vec<T> = c.values().collect();
    let cells = a
        .values()
        .collect::<Vec<_>>()
        .into_iter()
        .flat_map(move |av| {
            let cs = cs.clone();
            bs.clone()
                .into_iter()
                .flat_map(move |bv| cs.clone().into_iter().map(move |cv| (av, bv, cv)))
        });
    Ok(cells.map(move |(a, b, c)| {
        let label = classify(&Params::three(a, b, c, lambda)?)?;
        Ok(GridCell { a, b, c, label })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn verdict(a: f64, b: f64, c: f64) -> Verdict {
        classify(&Params::three(a, b, c, 1.0).unwrap())
            .unwrap()
            .verdict
    }

    #[test]
    fn reference_parameter_sets() {
        assert_eq!(verdict(0.5, 0.3, 0.1), Verdict::ErgodicGeneralP);
        assert_eq!(verdict(2.5, -1.0, -3.0), Verdict::ErgodicDiscNegative);
        assert_eq!(verdict(-1.0, -1.0, 1.1), Verdict::TransientAxes);
        assert_eq!(verdict(-1.0, 1.1, 0.5), Verdict::TransientOscillating);
        assert_eq!(verdict(3.0, 0.5, -15.0), Verdict::ConjecturedErgodic);
    }

    #[test]
    fn other_memory_lengths() {
        let v = |coeffs: Vec<f64>| {
            classify(&Params::new(coeffs, 1.0).unwrap())
                .unwrap()
                .verdict
        };
        assert_eq!(v(vec![0.4, 0.4]), Verdict::ErgodicGeneralP);
        assert_eq!(v(vec![0.6, 0.6]), Verdict::TransientLinear);
        assert_eq!(v(vec![3.0, -4.0]), Verdict::ErgodicP2Region);
        assert_eq!(v(vec![-1.0, 1.5]), Verdict::TransientP2Region);
        assert_eq!(v(vec![0.9]), Verdict::ErgodicGeneralP);
        assert_eq!(v(vec![1.2, 0.0, 0.0, 0.3, -5.0]), Verdict::Unknown);
        assert_eq!(v(vec![0.5, 0.2, 0.2, 0.3]), Verdict::TransientLinear);
    }

    #[test]
    fn rule_names_recorded() {
        let label = classify(&Params::three(2.5f64, -1.0, -3.0, 1.0).unwrap()).unwrap();
        assert_eq!(label.rule, rules::COMPLEX_ROOTS_NEGATIVE_BC);
        assert!((label.witness.unwrap().disc + 188.25).abs() < 1e-9);
        let at_one = classify(&Params::three(3.0, 1.0, -15.0, 1.0).unwrap()).unwrap();
        assert_eq!(at_one.verdict, Verdict::ConjecturedErgodic);
        assert_eq!(at_one.rule, rules::CONJECTURE_B_ONE);
    }

    #[test]
    fn threshold_values_are_not_classified_by_that_rule() {
        // Σ(aᵢ)₊ = 1 exactly
        assert_ne!(verdict(0.5, 0.5, -1.0), Verdict::ErgodicGeneralP);
        // Disc = 0 with b < 0, c < 0
        let (cm, _) = cubic::c_bounds(3.0f64, -2.0).unwrap();
        let label = classify(&Params::three(3.0, -2.0, cm, 1.0).unwrap()).unwrap();
        assert_eq!(label.verdict, Verdict::Boundary);
        // on the memory-two frontier
        assert_eq!(verdict(1.0, 0.0, 0.0), Verdict::Unknown);
    }

    #[test]
    fn non_finite_parameters_rejected() {
        assert!(Params::three(f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn grid_counts_and_order() {
        let a = GridAxis::point(0.5);
        let b = GridAxis::new(-3.0, 2.0, 0.5).unwrap();
        let c = GridAxis::new(-3.0, 2.0, 0.5).unwrap();
        let cells: Vec<_> = classify_grid(a, b, c, 1.0)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(cells.len(), 121);
        assert_eq!((cells[0].b, cells[0].c), (-3.0, -3.0));
        assert_eq!((cells[1].b, cells[1].c), (-3.0, -2.5));
        assert_eq!((cells[11].b, cells[11].c), (-2.5, -3.0));
    }

    #[test]
    fn grid_cell_matches_pointwise() {
        let cells: Vec<_> = classify_grid(
            GridAxis::point(3.0),
            GridAxis::new(-2.0, 0.0, 1.0).unwrap(),
            GridAxis::new(-4.0, -2.0, 1.0).unwrap(),
            1.0,
        )
        .unwrap()
        .collect::<Result<_>>()
        .unwrap();
        let cell = cells.iter().find(|c| c.b == -1.0 && c.c == -3.0).unwrap();
        assert_eq!(
            cell.label,
            classify(&Params::three(3.0, -1.0, -3.0, 1.0).unwrap()).unwrap()
        );
        assert!(cell.label.verdict.is_proven_ergodic());

        let single: Vec<_> = classify_grid(
            GridAxis::point(2.5),
            GridAxis::point(-1.0),
            GridAxis::point(-3.0),
            1.0,
        )
        .unwrap()
        .collect();
        assert_eq!(single.len(), 1);
        assert_eq!(
            single[0].as_ref().unwrap().label.verdict,
            Verdict::ErgodicDiscNegative
        );
    }

    #[test]
    fn grid_errors() {
        assert!(GridAxis::new(1.0, 0.0, 0.5).is_err());
        assert!(GridAxis::new(0.0, 1.0, 0.0).is_err());
        assert!(GridAxis::new(0.0, f64::NAN, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn general_rule_iff_positive_parts_below_one(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let s = a.max(0.0) + b.max(0.0) + c.max(0.0);
            prop_assume!((s - 1.0).abs() > 1e-9);
            prop_assert_eq!(verdict(a, b, c) == Verdict::ErgodicGeneralP, s < 1.0);
        }

        #[test]
        fn never_contradicts(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            prop_assert!(classify(&Params::three(a, b, c, 1.0).unwrap()).is_ok());
        }

        #[test]
        fn supercritical_complex_roots_are_oscillating(a in 1.0f64..10.0, b in 1.0f64..10.0, c in -200.0f64..0.0) {
            prop_assume!(a > 1.0 + 1e-9 && b > 1.0 + 1e-9 && c < -1e-9 && cubic::disc_negative(a, b, c));
            prop_assert_eq!(verdict(a, b, c), Verdict::TransientOscillating);
        }

        #[test]
        fn c_zero_matches_memory_two(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!((b - cubic::b_star(a)).abs() > 1e-9);
            let three = verdict(a, b, 0.0);
            let expect_ergodic = b < cubic::b_star(a);
            prop_assert_eq!(three.is_proven_ergodic(), expect_ergodic, "{:?}", three);
            prop_assert_eq!(three.is_proven_transient(), !expect_ergodic, "{:?}", three);
        }
    }
}
