//! Run configuration: a TOML file with one section per concern, plus
//! command-line overrides. Configs are meant to be checked in next to the
//! outputs they produce.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use twistframe::GridSpec;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub generators: Vec<String>,
    #[serde(default)]
    pub verify_tsp: VerifyTspSection,
    #[serde(default)]
    pub frameop: FrameopSection,
    #[serde(default)]
    pub decompose: DecomposeSection,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<usize>,
    pub half_width: Option<u32>,
    pub samples: Option<u32>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub kmax: Option<usize>,
    pub eps_support: Option<f64>,
    pub eps_rank: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifyTspSection {
    pub operator: Option<String>,
    pub trials: Option<usize>,
    pub pmax: Option<i64>,
    pub basis_pmax: Option<i64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FrameopSection {
    pub kmax: Option<usize>,
    pub membership_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSection {
    pub zero_threshold: Option<f64>,
}

/// Fully-resolved configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: GridSpec,
    pub generators: Vec<String>,
    pub seed: u64,
    pub kmax: usize,
    pub eps_support: f64,
    pub eps_rank: f64,
    pub output_dir: PathBuf,
    pub operator: String,
    pub trials: usize,
    pub pmax: i64,
    pub basis_pmax: i64,
    pub frameop_kmax: usize,
    pub membership_tol: f64,
    pub zero_threshold: f64,
}

/// Command-line overrides applied on top of the file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kmax: Option<usize>,
    pub grid_samples: Option<u32>,
    pub grid_half_width: Option<u32>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config '{}': {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("bad config '{}': {e}", path.display())))?;
    resolve(raw, overrides)
}

pub fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let n = raw.grid.n.unwrap_or(1);
    let half_width = overrides
        .grid_half_width
        .or(raw.grid.half_width)
        .unwrap_or(8);
    let samples = overrides.grid_samples.or(raw.grid.samples).unwrap_or(16);
    let spec = GridSpec::new(n, half_width, samples)
        .map_err(|e| CliError::Config(format!("invalid grid: {e}")))?;

    let kmax = overrides.kmax.or(raw.run.kmax).unwrap_or(6);
    let max_kmax = (half_width as usize).saturating_sub(2);
    if kmax < 1 || kmax > max_kmax {
        return Err(CliError::Config(format!(
            "kmax = {kmax} outside 1..={max_kmax} (needs kmax <= L-2)"
        )));
    }
    let frameop_kmax = raw.frameop.kmax.unwrap_or(kmax);
    if frameop_kmax < 1 || frameop_kmax > max_kmax {
        return Err(CliError::Config(format!(
            "frameop kmax = {frameop_kmax} outside 1..={max_kmax}"
        )));
    }

    let eps_support = raw.run.eps_support.unwrap_or(1e-8);
    let eps_rank = raw.run.eps_rank.unwrap_or(1e-8);
    if !(eps_support > 0.0 && eps_support < 1.0) || !(eps_rank > 0.0 && eps_rank < 1.0) {
        return Err(CliError::Config(
            "eps_support and eps_rank must lie in (0, 1)".into(),
        ));
    }

    Ok(RunConfig {
        spec,
        generators: raw.generators,
        seed: overrides.seed.or(raw.run.seed).unwrap_or(42),
        kmax,
        eps_support,
        eps_rank,
        output_dir: overrides
            .output_dir
            .clone()
            .or(raw.run.output_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        operator: raw
            .verify_tsp
            .operator
            .unwrap_or_else(|| "identity".to_string()),
        trials: raw.verify_tsp.trials.unwrap_or(4),
        pmax: raw.verify_tsp.pmax.unwrap_or(2),
        basis_pmax: raw.verify_tsp.basis_pmax.unwrap_or(2),
        frameop_kmax,
        membership_tol: raw.frameop.membership_tol.unwrap_or(1e-4),
        zero_threshold: raw.decompose.zero_threshold.unwrap_or(1e-4),
    })
}
