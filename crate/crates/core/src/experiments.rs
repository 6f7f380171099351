//! Batch drivers producing the Monte Carlo data sets: explosion-proportion
//! sweeps, ECDFs of the truncated return time, galleries of exploding
//! excursions and sign-of-discriminant grids.
//!
//! Every swept value reuses the same replica streams `0..N`, so neighbouring
//! points are coupled and output is independent of thread scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, GridAxis, Verdict};
use crate::cubic;
use crate::model::Params;
use crate::simulate::{
    detect_alternation, run_batch, run_excursion, run_excursion_traced, OutcomeKind, SimConfig,
    Trajectory,
};
use crate::stats::{clopper_pearson, ecdf, ConfidenceInterval};
use crate::{Error, Result};

pub const DEFAULT_REPLICAS: u64 = 100_000;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const GALLERY_REPLICA_CAP: u64 = 10_000_000;
pub const GALLERY_PREFIX_LEN: usize = 30;
const GALLERY_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    A,
    B,
    C,
    Lambda,
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coordinate::A => "a",
            Coordinate::B => "b",
            Coordinate::C => "c",
            Coordinate::Lambda => "lambda",
        })
    }
}

impl FromStr for Coordinate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "a" => Ok(Coordinate::A),
            "b" => Ok(Coordinate::B),
            "c" => Ok(Coordinate::C),
            "lambda" | "l" => Ok(Coordinate::Lambda),
            other => Err(Error::InvalidParameter(format!(
                "unknown coordinate {other:?}, expected a, b, c or lambda"
            ))),
        }
    }
}

/// A one-dimensional sweep of the three-memory chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Base values of `(a, b, c)`; the swept entry is overwritten.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub coordinate: Coordinate,
    pub values: Vec<f64>,
    pub replicas: u64,
    pub sim: SimConfig,
    /// Intervals are at level `1 − alpha`.
    pub alpha: f64,
}

impl SweepSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        lambda: f64,
        coordinate: Coordinate,
        values: Vec<f64>,
        replicas: u64,
        seed: u64,
    ) -> Self {
        Self {
            a,
            b,
            c,
            lambda,
            coordinate,
            values,
            replicas,
            sim: SimConfig::new(3, seed),
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn params_at(&self, value: f64) -> Result<Params<f64>> {
        let (mut a, mut b, mut c, mut lambda) = (self.a, self.b, self.c, self.lambda);
        match self.coordinate {
            Coordinate::A => a = value,
            Coordinate::B => b = value,
            Coordinate::C => c = value,
            Coordinate::Lambda => lambda = value,
        }
        Params::three(a, b, c, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Empty("swept values"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "swept value {v} is not finite"
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter(
                "replica count must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        for &v in &self.values {
            self.sim.validate(&self.params_at(v)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_value: f64,
    pub exploded: u64,
    pub returned: u64,
    pub censored: u64,
    pub replicas: u64,
    pub proportion: f64,
    pub ci: ConfidenceInterval<f64>,
    /// Mean of `τ̂₀` over the excursions that returned; `None` when none did.
    pub mean_tau_returned: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    exploded: u64,
    returned: u64,
    censored: u64,
    tau_sum: u128,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            exploded: self.exploded + o.exploded,
            returned: self.returned + o.returned,
            censored: self.censored + o.censored,
            tau_sum: self.tau_sum + o.tau_sum,
        }
    }
}

/// One row per swept value with the exploded count and its exact interval.
pub fn sweep_explosion(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|&value| {
            let params = spec.params_at(value)?;
            let tally = (0..spec.replicas)
                .into_par_iter()
                .map(|r| {
                    let out = run_excursion(&params, &spec.sim, r)?;
                    let mut t = Tally::default();
                    match out.kind {
                        OutcomeKind::Exploded => t.exploded = 1,
                        OutcomeKind::Censored => t.censored = 1,
                        OutcomeKind::Returned => {
                            t.returned = 1;
                            t.tau_sum = out.steps as u128;
                        }
                    }
                    Ok::<_, Error>(t)
                })
                .try_reduce(Tally::default, |x, y| Ok(x.merge(y)))?;
            Ok(SweepRow {
                swept_value: value,
                exploded: tally.exploded,
                returned: tally.returned,
                censored: tally.censored,
                replicas: spec.replicas,
                proportion: tally.exploded as f64 / spec.replicas as f64,
                ci: clopper_pearson(tally.exploded, spec.replicas, spec.alpha)?,
                mean_tau_returned: (tally.returned > 0)
                    .then(|| tally.tau_sum as f64 / tally.returned as f64),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEcdf {
    pub swept_value: f64,
    pub exploded: u64,
    pub replicas: u64,
    pub max_tau: u64,
    /// Support points of the ECDF of `τ̂₀`, the sentinel `n + 1` included.
    pub points: Vec<(u64, f64)>,
}

impl TauEcdf {
    /// Probability mass of the ECDF at `value`.
    pub fn mass_at(&self, value: u64) -> f64 {
        let i = match self.points.iter().position(|&(v, _)| v == value) {
            Some(i) => i,
            None => return 0.0,
        };
        let below = if i == 0 { 0.0 } else { self.points[i - 1].1 };
        self.points[i].1 - below
    }
}

/// ECDF of `τ̂₀` for each swept value.
pub fn tau_cdf_experiment(spec: &SweepSpec) -> Result<Vec<TauEcdf>> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|&value| {
            let params = spec.params_at(value)?;
            let outcomes = run_batch(&params, &spec.sim, spec.replicas)?;
            let taus: Vec<u64> = outcomes.iter().map(|o| o.steps).collect();
            Ok(TauEcdf {
                swept_value: value,
                exploded: outcomes
                    .iter()
                    .filter(|o| o.kind == OutcomeKind::Exploded)
                    .count() as u64,
                replicas: spec.replicas,
                max_tau: taus.iter().copied().max().unwrap_or(0),
                points: ecdf(&taus)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub replica: u64,
    /// First counts `X̃₀, X̃₁, …` of the excursion.
    pub prefix: Vec<u64>,
    /// Onset of the zero/positive alternation on the full excursion.
    pub onset: Option<usize>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    pub entries: Vec<GalleryEntry>,
    pub replicas_run: u64,
    /// The replica cap was hit before `want` explosions were found.
    pub partial: bool,
}

/// Collects the first `want` exploding excursions in replica order, scanning
/// at most `replica_cap` replicas.
pub fn exploding_gallery(
    params: &Params<f64>,
    cfg: &SimConfig,
    want: usize,
    prefix_len: usize,
    replica_cap: u64,
) -> Result<Gallery> {
    if want == 0 || prefix_len == 0 {
        return Err(Error::InvalidParameter(
            "gallery needs want ≥ 1 and prefix_len ≥ 1".into(),
        ));
    }
    cfg.validate(params)?;
    let mut entries = Vec::with_capacity(want);
    let mut start = 0u64;
    while entries.len() < want && start < replica_cap {
        let end = (start + GALLERY_CHUNK).min(replica_cap);
        let hits: Vec<u64> = (start..end)
            .into_par_iter()
            .map(|r| run_excursion(params, cfg, r).map(|o| (r, o.kind)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|&(_, k)| k == OutcomeKind::Exploded)
            .map(|(r, _)| r)
            .collect();
        for r in hits {
            if entries.len() == want {
                // replicas past the last hit in this chunk were still run
                break;
            }
            let (out, trace) = run_excursion_traced(params, cfg, r)?;
            entries.push(GalleryEntry {
                replica: r,
                onset: detect_alternation(&trace),
                prefix: trace.into_iter().take(prefix_len).collect(),
                steps: out.steps,
            });
        }
        start = end;
    }
    Ok(Gallery {
        partial: entries.len() < want,
        entries,
        replicas_run: start,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscCell {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub disc: f64,
    /// `-1`, `0` (inside the boundary band) or `1`.
    pub disc_sign: i8,
    pub spectral_radius: f64,
    pub linearly_stable: bool,
    pub verdict: Verdict,
    pub rule: String,
}

/// Sign of the discriminant, linear stability and the fired rule on every
/// cell of `a_values × b × c`, row-major.
pub fn disc_grid(
    a_values: &[f64],
    b: &GridAxis<f64>,
    c: &GridAxis<f64>,
    lambda: f64,
) -> Result<Vec<DiscCell>> {
    if a_values.is_empty() {
        return Err(Error::Empty("a values"));
    }
    let cs: Vec<f64> = c.values().collect();
    let mut out = Vec::with_capacity(a_values.len() * b.len() * cs.len());
    for &a in a_values {
        for bv in b.values() {
            for &cv in &cs {
                let label = classify(&Params::three(a, bv, cv, lambda)?)?;
                let disc = cubic::discriminant(a, bv, cv);
                let rho = cubic::spectral_radius(a, bv, cv);
                let disc_sign = if cubic::is_boundary(a, bv, cv) {
                    0
                } else if disc < 0.0 {
                    -1
                } else {
                    1
                };
                out.push(DiscCell {
                    a,
                    b: bv,
                    c: cv,
                    disc,
                    disc_sign,
                    spectral_radius: rho,
                    linearly_stable: rho < 1.0,
                    verdict: label.verdict,
                    rule: label.rule,
                });
            }
        }
    }
    Ok(out)
}

pub const SWEEP_HEADER: [&str; 7] = [
    "swept_value",
    "exploded",
    "N",
    "proportion",
    "ci_lower",
    "ci_upper",
    "mean_tau_returned",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            r.swept_value.to_string(),
            r.exploded.to_string(),
            r.replicas.to_string(),
            r.proportion.to_string(),
            r.ci.lower.to_string(),
            r.ci.upper.to_string(),
            r.mean_tau_returned
                .map(|m| m.to_string())
                .unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ecdf_csv<W: Write>(points: &[(u64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tau_hat", "fraction"])?;
    for (v, f) in points {
        out.write_record([v.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_grid_csv<W: Write>(cells: &[DiscCell], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "a",
        "b",
        "c",
        "disc",
        "disc_sign",
        "spectral_radius",
        "linearly_stable",
        "verdict",
        "rule",
    ])?;
    for cell in cells {
        out.write_record([
            cell.a.to_string(),
            cell.b.to_string(),
            cell.c.to_string(),
            cell.disc.to_string(),
            cell.disc_sign.to_string(),
            cell.spectral_radius.to_string(),
            cell.linearly_stable.to_string(),
            cell.verdict.code().to_string(),
            cell.rule.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `t,count` rows for `X̃₁, X̃₂, …`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "count"])?;
    for (t, x) in traj.counts().iter().enumerate() {
        out.write_record([(t + 1).to_string(), x.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_gallery_csv<W: Write>(gallery: &Gallery, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replica", "t", "count", "onset"])?;
    for e in &gallery.entries {
        let onset = e.onset.map(|o| o.to_string()).unwrap_or_default();
        for (t, x) in e.prefix.iter().enumerate() {
            out.write_record([
                e.replica.to_string(),
                t.to_string(),
                x.to_string(),
                onset.clone(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// JSON mirror of a sweep, carrying its definition as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(values: Vec<f64>, replicas: u64) -> SweepSpec {
        let mut s = SweepSpec::new(3.0, 0.0, -15.0, 1.0, Coordinate::B, values, replicas, 11);
        s.sim = s.sim.with_horizon(2_000);
        s
    }

    #[test]
    fn coordinate_round_trip() {
        for c in [
            Coordinate::A,
            Coordinate::B,
            Coordinate::C,
            Coordinate::Lambda,
        ] {
            assert_eq!(c.to_string().parse::<Coordinate>().unwrap(), c);
        }
        assert!("d".parse::<Coordinate>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(spec(vec![], 10).validate().is_err());
        assert!(spec(vec![f64::NAN], 10).validate().is_err());
        assert!(spec(vec![1.0], 0).validate().is_err());
        let mut s = spec(vec![1.0], 10);
        s.alpha = 1.0;
        assert!(s.validate().is_err());
        let mut s = spec(vec![1.0], 10);
        s.coordinate = Coordinate::Lambda;
        s.values = vec![0.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn sweep_rows_recount_outcomes() {
        let s = spec(vec![0.5, 4.0], 400);
        let rows = sweep_explosion(&s).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            let params = s.params_at(row.swept_value).unwrap();
            let outs = run_batch(&params, &s.sim, s.replicas).unwrap();
            let exploded = outs
                .iter()
                .filter(|o| o.kind == OutcomeKind::Exploded)
                .count() as u64;
            assert_eq!(row.exploded, exploded);
            assert_eq!(row.exploded + row.returned + row.censored, row.replicas);
            assert_eq!(row.proportion, exploded as f64 / 400.0);
            assert!(row.ci.contains(row.proportion));
        }
        assert_eq!(rows[0].exploded, 0);
    }

    #[test]
    fn sweep_is_deterministic() {
        let s = spec(vec![3.0], 300);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&sweep_explosion(&s).unwrap(), &mut a).unwrap();
        write_sweep_csv(&sweep_explosion(&s).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "swept_value,exploded,N,proportion,ci_lower,ci_upper,mean_tau_returned\n"
        ));
    }

    #[test]
    fn single_replica_ecdf() {
        let e = tau_cdf_experiment(&spec(vec![0.5], 1)).unwrap();
        assert_eq!(e[0].points.len(), 1);
        assert_eq!(e[0].points[0].1, 1.0);
    }

    #[test]
    fn ecdf_atom_matches_explosions() {
        let s = spec(vec![4.0], 500);
        let e = &tau_cdf_experiment(&s).unwrap()[0];
        let atom = e.mass_at(s.sim.horizon_n + 1);
        assert!((atom - e.exploded as f64 / 500.0).abs() < 1e-12);
    }

    #[test]
    fn gallery_trivial_cases() {
        let ergodic = Params::three(0.2, -0.5, 0.1, 1.0).unwrap();
        let cfg = SimConfig::new(3, 1).with_horizon(200);
        let g = exploding_gallery(&ergodic, &cfg, 2, 30, 1_000).unwrap();
        assert!(g.partial && g.entries.is_empty());
        assert_eq!(g.replicas_run, 1_000);
        assert!(exploding_gallery(&ergodic, &cfg, 0, 30, 10).is_err());

        let explosive = Params::three(3.0, 4.0, -15.0, 1.0).unwrap();
        let g = exploding_gallery(&explosive, &cfg, 3, 1, 1_000_000).unwrap();
        assert!(!g.partial);
        assert_eq!(g.entries.len(), 3);
        assert!(g.entries.iter().all(|e| e.prefix == vec![0]));
        assert!(g.entries.windows(2).all(|w| w[0].replica < w[1].replica));
    }

    #[test]
    fn disc_grid_single_cell_is_pointwise() {
        let cells = disc_grid(&[2.5], &GridAxis::point(-1.0), &GridAxis::point(-3.0), 1.0).unwrap();
        assert_eq!(cells.len(), 1);
        let cell = &cells[0];
        assert!((cell.disc + 188.25).abs() < 1e-9);
        assert_eq!(cell.disc_sign, -1);
        assert_eq!(cell.verdict, Verdict::ErgodicDiscNegative);
        assert_eq!(
            cell.spectral_radius,
            cubic::spectral_radius(2.5, -1.0, -3.0)
        );
    }

    #[test]
    fn disc_grid_slices() {
        let b = GridAxis::new(-2.0, 2.0, 0.5).unwrap();
        let c = GridAxis::new(-2.0, 2.0, 0.5).unwrap();
        let cells = disc_grid(&[0.5, 3.0], &b, &c, 1.0).unwrap();
        assert!(cells
            .iter()
            .any(|x| x.a == 0.5 && x.verdict == Verdict::ErgodicGeneralP));
        assert!(cells
            .iter()
            .filter(|x| x.a == 3.0)
            .all(|x| !x.linearly_stable));
    }
}
