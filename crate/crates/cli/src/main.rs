#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hawkes_inhibit::classify::{classify, GridAxis};
use hawkes_inhibit::cubic::{self, CubicReport};
use hawkes_inhibit::drift;
use hawkes_inhibit::experiments::{self, SweepOutput, SweepSpec};
use hawkes_inhibit::model::Params;
use hawkes_inhibit::simulate::{self, run_trajectory, SimConfig};
use hawkes_inhibit::{Error, State};
use serde::Serialize;

mod config;

use config::{parse_fix, parse_list, parse_range, parse_sweep, CommandName, RunConfig};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_LAMBDA: f64 = 1.0;
const DEFAULT_LENGTH: usize = 100;
const DEFAULT_GALLERY_WANT: usize = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Anomaly(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Anomaly(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Anomaly(m) => write!(f, "numerical anomaly: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(m) => CliError::Io(m),
            e @ Error::Contradiction { .. } => CliError::Anomaly(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Simulate, classify and verify discrete-time Hawkes processes with inhibition.
#[derive(Parser, Debug)]
#[command(name = "hawkes", version)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true, env = "HAWKES_SEED")]
    seed: Option<u64>,

    /// Output directory; without it the main table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stability verdict, fired rule and cubic diagnostics.
    Classify(Common),
    /// One trajectory as CSV.
    Simulate(Common),
    /// Explosion proportions along one coordinate.
    Sweep(Common),
    /// ECDF of the truncated return time per swept value.
    Ecdf(Common),
    /// First exploding excursions and their alternation onset.
    Gallery(Common),
    /// Lyapunov drift verification.
    Drift(Common),
    /// Sign of the discriminant and fired rule on a grid.
    Grid(Common),
}

impl Command {
    fn split(self) -> (CommandName, Common) {
        match self {
            Command::Classify(c) => (CommandName::Classify, c),
            Command::Simulate(c) => (CommandName::Simulate, c),
            Command::Sweep(c) => (CommandName::Sweep, c),
            Command::Ecdf(c) => (CommandName::Ecdf, c),
            Command::Gallery(c) => (CommandName::Gallery, c),
            Command::Drift(c) => (CommandName::Drift, c),
            Command::Grid(c) => (CommandName::Grid, c),
        }
    }
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Memory length.
    #[arg(short = 'p', long)]
    p: Option<usize>,
    #[arg(short = 'a', allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(short = 'b', allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(short = 'c', allow_negative_numbers = true)]
    c: Option<f64>,
    /// Comma-separated coefficients a1,...,ap.
    #[arg(long, allow_hyphen_values = true)]
    coeffs: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Fixed coordinates, e.g. `a=3,c=-15`.
    #[arg(long, allow_hyphen_values = true)]
    fix: Option<String>,
    /// Swept coordinate, e.g. `b=0:4:0.25` or `a=0.5,1,2`.
    #[arg(long, allow_hyphen_values = true)]
    sweep: Option<String>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Horizon n of the truncated return time.
    #[arg(long)]
    horizon: Option<u64>,
    /// Explosion threshold M.
    #[arg(long)]
    threshold: Option<u64>,
    /// Intervals are at level 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Trajectory length for `simulate`.
    #[arg(long)]
    length: Option<usize>,
    /// Replica stream for `simulate`.
    #[arg(long)]
    replica: Option<u64>,
    /// Initial box radius for `drift`.
    #[arg(long)]
    radius: Option<u64>,
    /// Number of exploding excursions for `gallery`.
    #[arg(long)]
    want: Option<usize>,
    /// Prefix length for `gallery`.
    #[arg(long)]
    prefix: Option<usize>,
    /// Replica cap for `gallery`.
    #[arg(long)]
    cap: Option<u64>,
    /// Values of a for `grid`, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    a_values: Option<String>,
    /// `start:stop:step` for b in `grid`.
    #[arg(long, allow_hyphen_values = true)]
    b_range: Option<String>,
    /// `start:stop:step` for c in `grid`.
    #[arg(long, allow_hyphen_values = true)]
    c_range: Option<String>,
}

impl Common {
    fn into_config(self, command: CommandName) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig {
            command: Some(command),
            ..Default::default()
        };
        let p = &mut cfg.params;
        if let Some(fix) = &self.fix {
            parse_fix(fix, p)?;
        }
        p.p = self.p;
        p.a = self.a.or(p.a);
        p.b = self.b.or(p.b);
        p.c = self.c.or(p.c);
        p.lambda = self.lambda.or(p.lambda);
        p.coeffs = self.coeffs.as_deref().map(parse_list).transpose()?;
        cfg.sim.horizon = self.horizon;
        cfg.sim.threshold = self.threshold;
        cfg.sim.replicas = self.replicas;
        cfg.sim.length = self.length;
        cfg.sim.replica = self.replica;
        cfg.sweep.values = self.sweep;
        cfg.sweep.alpha = self.alpha;
        cfg.drift.radius = self.radius;
        cfg.gallery.want = self.want;
        cfg.gallery.prefix = self.prefix;
        cfg.gallery.cap = self.cap;
        cfg.grid.a_values = self.a_values.as_deref().map(parse_list).transpose()?;
        cfg.grid.b_range = self.b_range;
        cfg.grid.c_range = self.c_range;
        Ok(cfg)
    }
}

fn resolve_params(cfg: &mut RunConfig) -> Result<Params<f64>, CliError> {
    let p = &mut cfg.params;
    let lambda = *p.lambda.get_or_insert(DEFAULT_LAMBDA);
    let coeffs = match &p.coeffs {
        Some(c) => {
            if p.p.is_some_and(|n| n != c.len()) {
                return Err(CliError::Usage(format!(
                    "-p {} disagrees with {} coefficients",
                    p.p.unwrap(),
                    c.len()
                )));
            }
            c.clone()
        }
        None => {
            let n = p.p.unwrap_or(3);
            let named = [p.a, p.b, p.c];
            if n == 0 || n > 3 {
                return Err(CliError::Usage(format!("-p {n} needs --coeffs")));
            }
            if named[n..].iter().any(Option::is_some) {
                return Err(CliError::Usage(format!("too many coefficients for -p {n}")));
            }
            named[..n]
                .iter()
                .zip(["a", "b", "c"])
                .map(|(v, name)| v.ok_or_else(|| CliError::Usage(format!("missing -{name}"))))
                .collect::<Result<_, _>>()?
        }
    };
    p.p = Some(coeffs.len());
    Ok(Params::new(coeffs, lambda)?)
}

fn sim_config(cfg: &mut RunConfig, p: usize) -> Result<SimConfig, CliError> {
    let seed = *cfg.seed.get_or_insert(DEFAULT_SEED);
    let s = &mut cfg.sim;
    let mut sim = SimConfig::new(p, seed)
        .with_horizon(*s.horizon.get_or_insert(simulate::DEFAULT_HORIZON))
        .with_threshold(
            *s.threshold
                .get_or_insert(simulate::DEFAULT_EXPLOSION_THRESHOLD),
        );
    if let Some(init) = &s.initial_state {
        sim.initial_state = State::new(init.clone())?;
    }
    Ok(sim)
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        if let Some(dir) = &cfg.out {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        Ok(Self {
            dir: cfg.out.clone(),
        })
    }

    fn file(&self, name: &str) -> Result<Option<BufWriter<File>>, CliError> {
        match &self.dir {
            None => Ok(None),
            Some(dir) => {
                let path = dir.join(name);
                let f = File::create(&path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                Ok(Some(BufWriter::new(f)))
            }
        }
    }

    /// Writes to `name` under the output directory, or to stdout without one.
    fn primary(
        &self,
        name: &str,
        write: impl FnOnce(&mut dyn Write) -> hawkes_inhibit::Result<()>,
    ) -> Result<(), CliError> {
        match self.file(name)? {
            Some(mut f) => {
                write(&mut f)?;
                f.flush()?;
            }
            None => {
                let stdout = io::stdout();
                write(&mut stdout.lock())?;
            }
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        if let Some(mut f) = self.file(name)? {
            experiments::write_json(value, &mut f)?;
            f.flush()?;
        }
        Ok(())
    }

    fn echo(&self, cfg: &RunConfig) -> Result<(), CliError> {
        if let Some(mut f) = self.file("run.toml")? {
            f.write_all(cfg.to_toml().as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ClassifyReport {
    coeffs: Vec<f64>,
    lambda: f64,
    verdict: String,
    code: String,
    rule: String,
    cubic: Option<CubicReport<f64>>,
}

fn cmd_classify(cfg: &mut RunConfig) -> Result<(), CliError> {
    let params = resolve_params(cfg)?;
    let label = classify(&params)?;
    println!("verdict: {}", label.verdict);
    println!("rule: {}", label.rule);
    let report = label
        .witness
        .clone()
        .or_else(|| params.abc().map(|(a, b, c)| CubicReport::analyze(a, b, c)));
    if let Some(r) = &report {
        println!("disc: {}", r.disc);
        let roots: Vec<String> = r.real_roots.iter().map(f64::to_string).collect();
        println!("real roots: {}", roots.join(", "));
        println!("spectral radius: {}", r.spectral_radius);
        if let Some(alpha) = r.alpha_q {
            println!("alpha_q: {alpha}");
            println!("R(alpha_q): {}", r.r_at_alpha_q.unwrap_or(f64::NAN));
            println!("K(alpha_q): {}", r.k_at_alpha_q.unwrap_or(f64::NAN));
        }
    }
    let out = Output::new(cfg)?;
    out.json(
        "classify.json",
        &ClassifyReport {
            coeffs: params.coeffs().to_vec(),
            lambda: params.lambda(),
            verdict: format!("{:?}", label.verdict),
            code: label.verdict.code().into(),
            rule: label.rule.clone(),
            cubic: report,
        },
    )?;
    out.echo(cfg)
}

fn cmd_simulate(cfg: &mut RunConfig) -> Result<(), CliError> {
    let params = resolve_params(cfg)?;
    let sim = sim_config(cfg, params.p())?;
    let length = *cfg.sim.length.get_or_insert(DEFAULT_LENGTH);
    let replica = *cfg.sim.replica.get_or_insert(0);
    let traj = run_trajectory(&params, &sim, length, replica)?;
    let out = Output::new(cfg)?;
    out.primary("trajectory.csv", |w| {
        experiments::write_trajectory_csv(&traj, w)
    })?;
    out.echo(cfg)?;
    eprintln!(
        "simulated {} steps, exploded: {}, peak: {}",
        traj.states.len(),
        traj.exploded,
        traj.counts().iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn sweep_spec(cfg: &mut RunConfig) -> Result<SweepSpec, CliError> {
    let text = cfg
        .sweep
        .values
        .clone()
        .ok_or_else(|| CliError::Usage("missing --sweep coord=values".into()))?;
    let (coord, values) = parse_sweep(&text)?;
    let p = &mut cfg.params;
    if p.coeffs.is_some() || p.p.is_some_and(|n| n != 3) {
        return Err(CliError::Usage(
            "sweeps use the three-memory parameters a, b, c".into(),
        ));
    }
    p.p = Some(3);
    let (a, b, c) = (
        *p.a.get_or_insert(0.0),
        *p.b.get_or_insert(0.0),
        *p.c.get_or_insert(0.0),
    );
    let lambda = *p.lambda.get_or_insert(DEFAULT_LAMBDA);
    let replicas = *cfg
        .sim
        .replicas
        .get_or_insert(experiments::DEFAULT_REPLICAS);
    let sim = sim_config(cfg, 3)?;
    let mut spec = SweepSpec::new(a, b, c, lambda, coord, values, replicas, sim.master_seed);
    spec.sim = sim;
    spec.alpha = *cfg.sweep.alpha.get_or_insert(experiments::DEFAULT_ALPHA);
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(cfg: &mut RunConfig) -> Result<(), CliError> {
    let spec = sweep_spec(cfg)?;
    let rows = experiments::sweep_explosion(&spec)?;
    let out = Output::new(cfg)?;
    out.primary("sweep.csv", |w| experiments::write_sweep_csv(&rows, w))?;
    let total: u64 = rows.iter().map(|r| r.exploded).sum();
    eprintln!(
        "{} swept values, {} replicas each, {total} exploded in total",
        rows.len(),
        spec.replicas
    );
    out.json("sweep.json", &SweepOutput { spec, rows })?;
    out.echo(cfg)
}

fn cmd_ecdf(cfg: &mut RunConfig) -> Result<(), CliError> {
    let spec = sweep_spec(cfg)?;
    let ecdfs = experiments::tau_cdf_experiment(&spec)?;
    let out = Output::new(cfg)?;
    for e in &ecdfs {
        let name = format!("ecdf_{}={}.csv", spec.coordinate, e.swept_value);
        if out.dir.is_none() {
            println!("# {}={}", spec.coordinate, e.swept_value);
        }
        out.primary(&name, |w| experiments::write_ecdf_csv(&e.points, w))?;
        eprintln!(
            "{}={}: max tau {}, atom at n+1 {}",
            spec.coordinate,
            e.swept_value,
            e.max_tau,
            e.mass_at(spec.sim.horizon_n + 1)
        );
    }
    out.json("ecdf.json", &ecdfs)?;
    out.echo(cfg)
}

fn cmd_gallery(cfg: &mut RunConfig) -> Result<(), CliError> {
    let params = resolve_params(cfg)?;
    let sim = sim_config(cfg, params.p())?;
    let want = *cfg.gallery.want.get_or_insert(DEFAULT_GALLERY_WANT);
    let prefix = *cfg
        .gallery
        .prefix
        .get_or_insert(experiments::GALLERY_PREFIX_LEN);
    let cap = *cfg
        .gallery
        .cap
        .get_or_insert(experiments::GALLERY_REPLICA_CAP);
    let gallery = experiments::exploding_gallery(&params, &sim, want, prefix, cap)?;
    let out = Output::new(cfg)?;
    out.primary("gallery.csv", |w| {
        experiments::write_gallery_csv(&gallery, w)
    })?;
    out.json("gallery.json", &gallery)?;
    out.echo(cfg)?;
    let onsets: Vec<String> = gallery
        .entries
        .iter()
        .map(|e| e.onset.map_or("-".into(), |o| o.to_string()))
        .collect();
    eprintln!(
        "{} exploding excursions in {} replicas, onsets [{}]",
        gallery.entries.len(),
        gallery.replicas_run,
        onsets.join(", ")
    );
    if gallery.partial {
        return Err(CliError::Anomaly(format!(
            "replica cap {cap} reached with {} of {want} explosions",
            gallery.entries.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
enum DriftOutput {
    Rational(drift::RationalDriftCheck<f64>),
    /// `b ≥ 0`: the scan runs but the zero-intensity set is not claimed small.
    Exploratory {
        alpha_q: f64,
        report: drift::DriftReport<f64>,
    },
    Linear {
        weights: Vec<f64>,
        drift_coefficients: Vec<f64>,
        report: drift::DriftReport<f64>,
    },
}

fn cmd_drift(cfg: &mut RunConfig) -> Result<(), CliError> {
    let params = resolve_params(cfg)?;
    let radius = *cfg.drift.radius.get_or_insert(drift::DEFAULT_RADIUS);
    let rational = params
        .abc()
        .is_some_and(|(a, b, c)| b < 0.0 && c < 0.0 && cubic::discriminant(a, b, c) < 0.0);
    let out = Output::new(cfg)?;
    let (summary, clean) = if rational {
        let chk = drift::verify_rational_drift(&params, radius)?;
        let rep = &chk.report;
        let summary = format!(
            "rational: alpha_q={} epsilon={} radius={} violations={} k_bound={} shell_clean={} small_set_verified={} q_max={}",
            chk.alpha_q,
            rep.epsilon,
            rep.box_radius,
            rep.violations.len(),
            rep.k_bound,
            rep.shell_clean,
            rep.small_set_verified,
            chk.q_grid_max
        );
        let clean = chk.passed();
        out.json("drift.json", &DriftOutput::Rational(chk))?;
        (summary, clean)
    } else if let Some((a, b, c)) = params
        .abc()
        .filter(|&(a, b, c)| c < 0.0 && cubic::discriminant(a, b, c) < 0.0)
    {
        let alpha = cubic::alpha_q(a, b, c)?;
        let eps = drift::largest_clean_epsilon(&params, alpha, radius)?
            .unwrap_or(2f64.powi(-drift::EPSILON_GRID_DEPTH));
        let report = drift::scan_violations(&params, alpha, eps, radius)?;
        let summary = format!(
            "exploratory (b={b} >= 0, no ergodicity claim): alpha_q={alpha} epsilon={eps} radius={radius} violations={} shell_clean={}",
            report.violations.len(),
            report.shell_clean
        );
        out.json(
            "drift.json",
            &DriftOutput::Exploratory {
                alpha_q: alpha,
                report,
            },
        )?;
        (summary, true)
    } else {
        if !(params.positive_part_sum() < 1.0) {
            return Err(CliError::Usage("no drift construction applies: need sum of positive parts < 1, or p=3 with b<0, c<0, disc<0".into()));
        }
        let eps = drift::eta(&params) / (2.0 * params.p() as f64);
        let report = drift::scan_linear_violations(&params, eps, radius)?;
        let coeffs = drift::linear_drift_coefficients(&params, eps)?;
        let clean = report.shell_clean && coeffs.iter().all(|&k| k < 0.0);
        let summary = format!(
            "linear: epsilon={} radius={} violations={} k_bound={} shell_clean={} small_set_verified={}",
            eps,
            radius,
            report.violations.len(),
            report.k_bound,
            report.shell_clean,
            report.small_set_verified
        );
        out.json(
            "drift.json",
            &DriftOutput::Linear {
                weights: drift::linear_weights(&params)?,
                drift_coefficients: coeffs,
                report,
            },
        )?;
        (summary, clean)
    };
    println!("{summary}");
    out.echo(cfg)?;
    if !clean {
        return Err(CliError::Anomaly(
            "drift verification did not pass (see report)".into(),
        ));
    }
    Ok(())
}

fn cmd_grid(cfg: &mut RunConfig) -> Result<(), CliError> {
    let lambda = *cfg.params.lambda.get_or_insert(DEFAULT_LAMBDA);
    let g = &mut cfg.grid;
    let a_values = g.a_values.get_or_insert_with(|| vec![0.5, 3.0]).clone();
    let b: GridAxis<f64> = parse_range(g.b_range.get_or_insert_with(|| "-4:4:0.1".into()))?;
    let c: GridAxis<f64> = parse_range(g.c_range.get_or_insert_with(|| "-4:4:0.1".into()))?;
    let cells = experiments::disc_grid(&a_values, &b, &c, lambda)?;
    let out = Output::new(cfg)?;
    out.primary("grid.csv", |w| experiments::write_grid_csv(&cells, w))?;
    out.json("grid.json", &cells)?;
    out.echo(cfg)?;
    let negative = cells.iter().filter(|x| x.disc_sign < 0).count();
    eprintln!(
        "{} cells, {negative} with negative discriminant",
        cells.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut flags = match cli.command {
        Some(cmd) => {
            let (name, common) = cmd.split();
            common.into_config(name)?
        }
        None => RunConfig::default(),
    };
    flags.seed = cli.seed;
    flags.out = cli.out;
    let mut cfg = base.overlay(flags);
    let command = cfg.command.ok_or_else(|| {
        CliError::Usage("no command given on the command line or in the config".into())
    })?;
    match command {
        CommandName::Classify => cmd_classify(&mut cfg),
        CommandName::Simulate => cmd_simulate(&mut cfg),
        CommandName::Sweep => cmd_sweep(&mut cfg),
        CommandName::Ecdf => cmd_ecdf(&mut cfg),
        CommandName::Gallery => cmd_gallery(&mut cfg),
        CommandName::Drift => cmd_drift(&mut cfg),
        CommandName::Grid => cmd_grid(&mut cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hawkes: {e}");
            ExitCode::from(e.code())
        }
    }
}
