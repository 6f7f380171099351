//! Trajectories and excursions of the chain.
//!
//! Every replica draws from its own ChaCha8 stream selected by
//! `(master_seed, replica_index)`, so results do not depend on how replicas
//! are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{intensity, Params, State};
use crate::{Error, Result};

pub const DEFAULT_HORIZON: u64 = 10_000;
pub const DEFAULT_EXPLOSION_THRESHOLD: u64 = 1_000_000_000;
/// Largest admissible explosion threshold, `2⁶³ − 1`.
pub const MAX_EXPLOSION_THRESHOLD: u64 = i64::MAX as u64;

/// Means at or above this saturate to `u64::MAX`, which is always beyond the threshold.
const SATURATING_MEAN: f64 = 9.2e18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizon `n` for the truncated return time `τ₀ ∧ n`.
    pub horizon_n: u64,
    /// Explosion threshold `M`.
    pub explosion_threshold_m: u64,
    pub master_seed: u64,
    pub initial_state: State,
}

impl SimConfig {
    /// Default configuration for memory length `p`, started from the zero state.
    pub fn new(p: usize, master_seed: u64) -> Self {
        Self {
            horizon_n: DEFAULT_HORIZON,
            explosion_threshold_m: DEFAULT_EXPLOSION_THRESHOLD,
            master_seed,
            initial_state: State::zeros(p),
        }
    }

    pub fn with_horizon(mut self, n: u64) -> Self {
        self.horizon_n = n;
        self
    }

    pub fn with_threshold(mut self, m: u64) -> Self {
        self.explosion_threshold_m = m;
        self
    }

    pub fn validate(&self, params: &Params<f64>) -> Result<()> {
        if self.horizon_n == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.explosion_threshold_m == 0 || self.explosion_threshold_m > MAX_EXPLOSION_THRESHOLD {
            return Err(Error::InvalidParameter(format!(
                "explosion threshold must lie in [1, 2^63-1], got {}",
                self.explosion_threshold_m
            )));
        }
        if self.initial_state.max() > self.explosion_threshold_m {
            return Err(Error::InvalidParameter(
                "initial state already beyond the explosion threshold".into(),
            ));
        }
        params.check_dim(&self.initial_state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Returned,
    Exploded,
    Censored,
}

/// Fate of one excursion. `steps` is the sentinel-adjusted return time `τ̂₀`:
/// the return step, `n` when censored, `n + 1` when exploded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionOutcome {
    pub kind: OutcomeKind,
    pub steps: u64,
    pub peak: u64,
}

/// RNG for one replica.
pub fn replica_rng(master_seed: u64, replica_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica_index);
    rng
}

/// Exact Poisson draw; mean 0 gives 0.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean >= SATURATING_MEAN {
        return u64::MAX;
    }
    let dist = Poisson::new(mean).expect("mean is positive and finite");
    let x: f64 = dist.sample(rng);
    x as u64
}

/// One transition of the chain.
pub fn step<R: Rng + ?Sized>(params: &Params<f64>, state: &State, rng: &mut R) -> Result<State> {
    let s = intensity(params, state)?;
    Ok(state.push(sample_poisson(s, rng)))
}

/// Steps the chain in place, calling `visit` with each freshly drawn count.
/// `visit` returns `false` to stop.
fn drive<R: Rng>(
    params: &Params<f64>,
    state: &mut State,
    rng: &mut R,
    mut visit: impl FnMut(u64, &State) -> bool,
) {
    let coeffs = params.coeffs();
    let lambda = params.lambda();
    loop {
        let mean = coeffs
            .iter()
            .zip(state.counts())
            .fold(lambda, |acc, (&a, &x)| acc + a * x as f64);
        let next = sample_poisson(mean, rng);
        state.push_in_place(next);
        if !visit(next, state) {
            break;
        }
    }
}

fn excursion_impl(
    params: &Params<f64>,
    cfg: &SimConfig,
    replica_index: u64,
    mut trace: Option<&mut Vec<u64>>,
) -> ExcursionOutcome {
    let mut rng = replica_rng(cfg.master_seed, replica_index);
    let mut state = cfg.initial_state.clone();
    let n = cfg.horizon_n;
    let m = cfg.explosion_threshold_m;
    let mut peak = state.max();
    let mut k = 0u64;
    let mut outcome = ExcursionOutcome {
        kind: OutcomeKind::Censored,
        steps: n,
        peak,
    };
    if let Some(t) = trace.as_deref_mut() {
        t.push(state.head());
    }
    drive(params, &mut state, &mut rng, |x, st| {
        k += 1;
        peak = peak.max(x);
        if let Some(t) = trace.as_deref_mut() {
            t.push(x);
        }
        if x > m {
            outcome = ExcursionOutcome {
                kind: OutcomeKind::Exploded,
                steps: n + 1,
                peak,
            };
            return false;
        }
        if st.is_zero() {
            outcome = ExcursionOutcome {
                kind: OutcomeKind::Returned,
                steps: k,
                peak,
            };
            return false;
        }
        if k == n {
            outcome = ExcursionOutcome {
                kind: OutcomeKind::Censored,
                steps: n,
                peak,
            };
            return false;
        }
        true
    });
    outcome
}

/// Runs one excursion from `cfg.initial_state` until the first return to the
/// zero state, the first count above the threshold, or the horizon.
pub fn run_excursion(
    params: &Params<f64>,
    cfg: &SimConfig,
    replica_index: u64,
) -> Result<ExcursionOutcome> {
    cfg.validate(params)?;
    Ok(excursion_impl(params, cfg, replica_index, None))
}

/// Same as [`run_excursion`], also returning the counts `X̃₀, X̃₁, …` visited.
pub fn run_excursion_traced(
    params: &Params<f64>,
    cfg: &SimConfig,
    replica_index: u64,
) -> Result<(ExcursionOutcome, Vec<u64>)> {
    cfg.validate(params)?;
    let mut trace = Vec::new();
    let out = excursion_impl(params, cfg, replica_index, Some(&mut trace));
    Ok((out, trace))
}

/// Runs replicas `0..replicas` in parallel; output is ordered by replica index.
pub fn run_batch(
    params: &Params<f64>,
    cfg: &SimConfig,
    replicas: u64,
) -> Result<Vec<ExcursionOutcome>> {
    cfg.validate(params)?;
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| excursion_impl(params, cfg, r, None))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States `X₁, X₂, …` after the initial state.
    pub states: Vec<State>,
    /// The last state carries a count above the threshold.
    pub exploded: bool,
}

impl Trajectory {
    /// Most recent counts `X̃₁, X̃₂, …`.
    pub fn counts(&self) -> Vec<u64> {
        self.states.iter().map(State::head).collect()
    }
}

/// First `length` states of the chain, stopping early on explosion.
pub fn run_trajectory(
    params: &Params<f64>,
    cfg: &SimConfig,
    length: usize,
    replica_index: u64,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(Error::InvalidParameter(
            "trajectory length must be at least 1".into(),
        ));
    }
    cfg.validate(params)?;
    let mut rng = replica_rng(cfg.master_seed, replica_index);
    let mut state = cfg.initial_state.clone();
    let mut states = Vec::with_capacity(length);
    let mut exploded = false;
    drive(params, &mut state, &mut rng, |x, st| {
        states.push(st.clone());
        if x > cfg.explosion_threshold_m {
            exploded = true;
            return false;
        }
        states.len() < length
    });
    Ok(Trajectory { states, exploded })
}

/// Minimum length of the alternating tail for [`detect_alternation`] to report it.
pub const MIN_ALTERNATION_RUN: usize = 4;

/// Smallest index `t` such that from `t` onwards the counts alternate between
/// zero and positive values (in either phase).
pub fn detect_alternation(trajectory: &[u64]) -> Option<usize> {
    if trajectory.len() < MIN_ALTERNATION_RUN {
        return None;
    }
    let mut onset = trajectory.len() - 1;
    while onset > 0 && (trajectory[onset - 1] == 0) != (trajectory[onset] == 0) {
        onset -= 1;
    }
    (trajectory.len() - onset >= MIN_ALTERNATION_RUN).then_some(onset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3(a: f64, b: f64, c: f64, lambda: f64) -> Params<f64> {
        Params::three(a, b, c, lambda).unwrap()
    }

    #[test]
    fn poisson_zero_mean() {
        let mut rng = replica_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_poisson(0.0, &mut rng), 0);
        }
        assert_eq!(sample_poisson(1e19, &mut rng), u64::MAX);
    }

    #[test]
    fn poisson_moments_at_four() {
        let mut rng = replica_rng(7, 0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_poisson(4.0, &mut rng) as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 4.0).abs() < 0.02, "mean {mean}");
        assert!((var - 4.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn poisson_moments_at_one_million() {
        let mut rng = replica_rng(8, 0);
        let n = 10_000;
        let mu = 1e6;
        let z: Vec<f64> = (0..n)
            .map(|_| (sample_poisson(mu, &mut rng) as f64 - mu) / mu.sqrt())
            .collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard errors: 1/sqrt(n) for the mean, sqrt(2/n) for the variance
        assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");
        assert!(
            (var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(),
            "var {var}"
        );
    }

    #[test]
    fn zero_intensity_step_is_forced() {
        // a·i + λ ≤ 0 at (i, 0, 0)
        let params = p3(-1.0, -1.0, 1.1, 1.0);
        let mut rng = replica_rng(3, 0);
        for _ in 0..50 {
            assert_eq!(
                step(&params, &State::from([5, 0, 0]), &mut rng).unwrap(),
                State::from([0, 5, 0])
            );
        }
    }

    #[test]
    fn step_replays_with_same_seed() {
        let params = p3(2.5, -1.0, -3.0, 1.0);
        let s = State::from([4, 2, 1]);
        let a = step(&params, &s, &mut replica_rng(11, 5)).unwrap();
        let b = step(&params, &s, &mut replica_rng(11, 5)).unwrap();
        assert_eq!(a, b);
        assert!(step(&params, &State::zeros(2), &mut replica_rng(11, 5)).is_err());
    }

    #[test]
    fn strongly_inhibited_chain_returns_quickly() {
        let params = p3(-5.0, -5.0, -5.0, 0.01);
        let cfg = SimConfig::new(3, 99);
        let outcomes = run_batch(&params, &cfg, 1000).unwrap();
        let quick = outcomes
            .iter()
            .filter(|o| o.kind == OutcomeKind::Returned && o.steps <= 3)
            .count();
        assert!(quick >= 900, "{quick}");
        assert!(outcomes
            .iter()
            .all(|o| o.kind == OutcomeKind::Returned && o.steps >= 1));
    }

    #[test]
    fn outcome_invariants() {
        let params = p3(3.0, 4.0, -15.0, 1.0);
        let cfg = SimConfig::new(3, 5).with_horizon(300);
        for o in run_batch(&params, &cfg, 2000).unwrap() {
            match o.kind {
                OutcomeKind::Returned => assert!(o.steps >= 1 && o.steps <= 300),
                OutcomeKind::Exploded => {
                    assert_eq!(o.steps, 301);
                    assert!(o.peak > cfg.explosion_threshold_m);
                }
                OutcomeKind::Censored => assert_eq!(o.steps, 300),
            }
        }
    }

    #[test]
    fn batch_is_order_independent() {
        let params = p3(3.0, 1.5, -15.0, 1.0);
        let cfg = SimConfig::new(3, 2024).with_horizon(2000);
        let batch = run_batch(&params, &cfg, 500).unwrap();
        let serial: Vec<_> = (0..500)
            .map(|r| run_excursion(&params, &cfg, r).unwrap())
            .collect();
        assert_eq!(batch, serial);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        assert_eq!(
            pool.install(|| run_batch(&params, &cfg, 500).unwrap()),
            batch
        );
    }

    #[test]
    fn traced_matches_untraced() {
        let params = p3(3.0, 2.0, -15.0, 1.0);
        let cfg = SimConfig::new(3, 1);
        for r in 0..200 {
            let plain = run_excursion(&params, &cfg, r).unwrap();
            let (traced, path) = run_excursion_traced(&params, &cfg, r).unwrap();
            assert_eq!(plain, traced);
            assert_eq!(path[0], 0);
            if plain.kind == OutcomeKind::Returned {
                assert_eq!(path.len() as u64, plain.steps + 1);
            }
            assert_eq!(*path.iter().max().unwrap(), plain.peak);
        }
    }

    #[test]
    fn trajectory_basics() {
        let params = p3(2.5, -1.0, -3.0, 1.0);
        let cfg = SimConfig::new(3, 7);
        let t = run_trajectory(&params, &cfg, 1, 0).unwrap();
        assert_eq!(t.states.len(), 1);
        let mut rng = replica_rng(7, 0);
        assert_eq!(
            t.states[0],
            step(&params, &State::zeros(3), &mut rng).unwrap()
        );
        assert_eq!(
            run_trajectory(&params, &cfg, 50, 3).unwrap(),
            run_trajectory(&params, &cfg, 50, 3).unwrap()
        );
        assert!(run_trajectory(&params, &cfg, 0, 0).is_err());
    }

    #[test]
    fn axis_cycle_in_transient_regime() {
        let params = p3(-1.0, -1.0, 1.1, 1.0);
        let cfg = SimConfig::new(3, 7).with_threshold(MAX_EXPLOSION_THRESHOLD);
        // find a replica that escapes, then check the tail cycles along the axes
        let t = (0..200)
            .map(|r| run_trajectory(&params, &cfg, 600, r).unwrap())
            .find(|t| t.states.last().unwrap().max() > 1000)
            .expect("some trajectory escapes");
        for s in &t.states[t.states.len() - 30..] {
            let nonzero = s.counts().iter().filter(|&&x| x > 0).count();
            assert_eq!(nonzero, 1, "{s:?}");
        }
    }

    #[test]
    fn trajectory_stops_on_explosion() {
        let params = Params::new(vec![0.6, 0.6], 1.0).unwrap();
        let cfg = SimConfig::new(2, 1).with_threshold(1000);
        let t = run_trajectory(&params, &cfg, 10_000, 0).unwrap();
        assert!(t.exploded);
        assert!(t.states.last().unwrap().head() > 1000);
        assert!(t.states[..t.states.len() - 1]
            .iter()
            .all(|s| s.head() <= 1000));
    }

    #[test]
    fn alternation_examples() {
        assert_eq!(detect_alternation(&[5, 0, 7, 0, 9, 0]), Some(0));
        assert_eq!(detect_alternation(&[0, 5, 0, 7, 0, 9]), Some(0));
        assert_eq!(detect_alternation(&[3, 4, 5, 6, 7]), None);
        assert_eq!(detect_alternation(&[3, 4, 5, 0, 7, 0, 9]), Some(2));
        assert_eq!(detect_alternation(&[0, 0, 1, 0, 2]), Some(1));
        assert_eq!(detect_alternation(&[1, 1, 0]), None);
        assert_eq!(detect_alternation(&[1, 1, 1, 0, 1]), None);
    }

    #[test]
    fn config_validation() {
        let params = p3(0.1, 0.1, 0.1, 1.0);
        assert!(SimConfig::new(3, 0)
            .with_horizon(0)
            .validate(&params)
            .is_err());
        assert!(SimConfig::new(3, 0)
            .with_threshold(0)
            .validate(&params)
            .is_err());
        assert!(SimConfig::new(3, 0)
            .with_threshold(u64::MAX)
            .validate(&params)
            .is_err());
        assert!(SimConfig::new(2, 0).validate(&params).is_err());
        assert!(run_excursion(&params, &SimConfig::new(2, 0), 0).is_err());
    }
}
