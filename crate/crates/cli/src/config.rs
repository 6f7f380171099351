//! Declarative run configuration. A file, the `HAWKES_SEED` variable and the
//! command-line flags are each parsed into a [`RunConfig`] and overlaid in
//! that order; the resolved result is echoed next to the outputs.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use hawkes_inhibit::classify::GridAxis;
use hawkes_inhibit::experiments::Coordinate;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Classify,
    Simulate,
    Sweep,
    Ecdf,
    Gallery,
    Drift,
    Grid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: ParamBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub drift: DriftBlock,
    #[serde(default)]
    pub gallery: GalleryBlock,
    #[serde(default)]
    pub grid: GridBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    /// Trajectory length for `simulate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    /// Replica stream used by `simulate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replica: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// `coord=start:stop:step` or `coord=v1,v2,...`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalleryBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub want: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_values: Option<Vec<f64>>,
    /// `start:stop:step`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_range: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fields set in `top` replace those of `self`.
    pub fn overlay(mut self, top: RunConfig) -> RunConfig {
        overlay!(self, top; command, seed, out);
        overlay!(self.params, top.params; p, coeffs, a, b, c, lambda);
        overlay!(self.sim, top.sim; horizon, threshold, replicas, length, replica, initial_state);
        overlay!(self.sweep, top.sweep; values, alpha);
        overlay!(self.drift, top.drift; radius);
        overlay!(self.gallery, top.gallery; want, prefix, cap);
        overlay!(self.grid, top.grid; a_values, b_range, c_range);
        self
    }
}

/// `a=3,c=-15,lambda=1` into the parameter block.
pub fn parse_fix(text: &str, params: &mut ParamBlock) -> Result<(), CliError> {
    for part in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value in --fix, got {part:?}")))?;
        let v = parse_f64(value)?;
        match key
            .trim()
            .parse::<Coordinate>()
            .map_err(|e| CliError::Usage(e.to_string()))?
        {
            Coordinate::A => params.a = Some(v),
            Coordinate::B => params.b = Some(v),
            Coordinate::C => params.c = Some(v),
            Coordinate::Lambda => params.lambda = Some(v),
        }
    }
    Ok(())
}

pub fn parse_f64(s: &str) -> Result<f64, CliError> {
    let v = f64::from_str(s.trim()).map_err(|_| CliError::Usage(format!("not a number: {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("not a finite number: {s:?}")))
    }
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_range(s: &str) -> Result<GridAxis<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(GridAxis::point(parse_f64(single)?)),
        [start, stop, step] => GridAxis::new(parse_f64(start)?, parse_f64(stop)?, parse_f64(step)?)
            .map_err(|e| CliError::Usage(e.to_string())),
        _ => Err(CliError::Usage(format!(
            "expected start:stop:step, got {s:?}"
        ))),
    }
}

/// `b=0:4:0.25` or `b=0,0.5,1`.
pub fn parse_sweep(s: &str) -> Result<(Coordinate, Vec<f64>), CliError> {
    let (key, rest) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected coord=values in --sweep, got {s:?}")))?;
    let coord = key
        .parse::<Coordinate>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let values = if rest.contains(':') {
        parse_range(rest)?.values().collect()
    } else {
        parse_list(rest)?
    };
    Ok((coord, values))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_f64)
        .collect()
}
