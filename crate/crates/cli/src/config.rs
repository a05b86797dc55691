//! Run configuration: JSON file values overridden by command-line flags,
//! resolved into one effective configuration that is written next to every
//! artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use vri::descriptors::{LdConfig, SectionSpec};
use vri::dynamics::IntegratorConfig;
use vri::experiments::{c_grid, default_c_values, BranchingConfig, Quantity};
use vri::manifolds::DEFAULT_QUANTILE;
use vri::potential::{DomainRect, SystemParams};

use crate::args::Overrides;
use crate::CliError;

/// A scalar or a list in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Grid size as `600` or `[n_y, n_p]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Square(usize),
    Pair([usize; 2]),
}

impl GridSpec {
    fn dims(&self) -> (usize, usize) {
        match *self {
            GridSpec::Square(n) => (n, n),
            GridSpec::Pair([a, b]) => (a, b),
        }
    }
}

/// Contents of a `--config` JSON file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub c: Option<OneOrMany<f64>>,
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub c_step: Option<f64>,
    pub h0: Option<f64>,
    pub tau: Option<f64>,
    pub p_exponent: Option<f64>,
    pub step: Option<f64>,
    pub grid: Option<GridSpec>,
    pub y_range: Option<(f64, f64)>,
    pub py_range: Option<(f64, f64)>,
    pub quantile: Option<f64>,
    pub n_traj: Option<usize>,
    pub t_max: Option<f64>,
    pub ic_line_x: Option<f64>,
    pub entry_level: Option<f64>,
    pub quantities: Option<Vec<String>>,
    pub flatness_grid: Option<usize>,
    pub critical_c: Option<bool>,
    pub field_cache: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub json: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::Validation)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(CliError::Validation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CriticalPoints,
    LdField,
    Branching,
    Sweep,
    Fit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CriticalPoints => "critical-points",
            Command::LdField => "ld-field",
            Command::Branching => "branching",
            Command::Sweep => "sweep",
            Command::Fit => "fit",
        }
    }
}

/// The fully resolved configuration of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub command: Command,
    pub version: &'static str,
    pub c_values: Vec<f64>,
    pub params: SystemParams,
    pub section: SectionSpec,
    pub ld: LdConfig,
    pub ridge_quantile: f64,
    pub branching: BranchingConfig,
    pub quantities: Vec<Quantity>,
    pub flatness_top: DomainRect,
    pub flatness_bottom: DomainRect,
    pub critical_c: bool,
    pub field_cache: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: usize,
    pub json: bool,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(anyhow!(msg.into()))
}

/// Merges flags over file values over defaults and validates the result.
pub fn resolve(command: Command, flags: Overrides, file: FileConfig) -> Result<Effective, CliError> {
    let explicit_c = flags.c.clone().or_else(|| file.c.clone().map(OneOrMany::into_vec));
    let range = (
        flags.c_min.or(file.c_min),
        flags.c_max.or(file.c_max),
        flags.c_step.or(file.c_step),
    );
    let c_values = match (explicit_c, range) {
        (Some(c), (None, None, None)) => c,
        (Some(_), _) => return Err(invalid("give either explicit c values or a c range, not both")),
        (None, (None, None, None)) => match command {
            Command::Sweep => default_c_values(),
            _ => vec![0.0],
        },
        (None, (lo, hi, step)) => {
            c_grid(lo.unwrap_or(0.0), hi.unwrap_or(0.5), step.unwrap_or(0.025)).map_err(|e| invalid(e.to_string()))?
        }
    };
    if c_values.is_empty() {
        return Err(invalid("no c values given"));
    }
    if c_values.iter().any(|c| !c.is_finite()) {
        return Err(invalid("c values must be finite"));
    }

    let h0 = pick(flags.h0, file.h0, SystemParams::DEFAULT_ENERGY);
    let params = SystemParams::new(c_values[0]).with_energy(h0);
    params.validate().map_err(|e| invalid(e.to_string()))?;
    if command == Command::Sweep {
        for &c in &c_values {
            params
                .with_c(c)
                .validate_sweep_range()
                .map_err(|e| invalid(e.to_string()))?;
        }
    }

    let step = pick(flags.step, file.step, IntegratorConfig::DEFAULT_STEP);
    let integrator = IntegratorConfig::default().with_step(step);
    integrator.validate().map_err(|e| invalid(e.to_string()))?;

    let mut section = SectionSpec {
        h0,
        ..SectionSpec::default()
    };
    let grid = flags.grid.or_else(|| file.grid.as_ref().map(GridSpec::dims));
    if let Some((n_y, n_p)) = grid {
        section = section.with_grid(n_y, n_p);
    }
    if let Some(r) = file.y_range {
        section.y_range = r;
    }
    if let Some(r) = file.py_range {
        section.py_range = r;
    }
    section.validate().map_err(|e| invalid(e.to_string()))?;

    let ld = LdConfig {
        tau: pick(flags.tau, file.tau, LdConfig::default().tau),
        p_exponent: pick(flags.p_exponent, file.p_exponent, LdConfig::default().p_exponent),
        integrator,
    };
    ld.validate().map_err(|e| invalid(e.to_string()))?;

    let ridge_quantile = pick(flags.quantile, file.quantile, DEFAULT_QUANTILE);
    if !(ridge_quantile > 0.0 && ridge_quantile < 1.0) {
        return Err(invalid(format!("quantile must lie in (0, 1), got {ridge_quantile}")));
    }

    let defaults = BranchingConfig::default();
    let branching = BranchingConfig {
        n: pick(flags.n_traj, file.n_traj, defaults.n),
        ic_line_x: pick(None, file.ic_line_x, defaults.ic_line_x),
        t_max: pick(flags.t_max, file.t_max, defaults.t_max),
        entry_level: pick(None, file.entry_level, defaults.entry_level),
        integrator: integrator.with_record_stride(0),
        ..defaults
    };
    branching.validate().map_err(|e| invalid(e.to_string()))?;

    let names = flags.quantities.or(file.quantities);
    let quantities = match names {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<Quantity>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(e.to_string()))?,
        None => vec![
            Quantity::DepthTop,
            Quantity::DepthBottom,
            Quantity::FlatnessTop,
            Quantity::FlatnessBottom,
            Quantity::RatioTop,
            Quantity::RatioBottom,
        ],
    };
    if quantities.is_empty() {
        return Err(invalid("no quantities requested"));
    }

    let fg = pick(flags.flatness_grid, file.flatness_grid, DomainRect::top_well().n_x);
    let flatness_top = DomainRect::top_well().with_resolution(fg, fg);
    let flatness_bottom = DomainRect::bottom_well().with_resolution(fg, fg);
    flatness_top.validate().map_err(|e| invalid(e.to_string()))?;

    let input = flags.input.or(file.input);
    if command == Command::Fit && input.is_none() {
        return Err(invalid("fit needs --input pointing at a sweep CSV"));
    }

    let out = flags
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("vri-out").join(command.name()));

    Ok(Effective {
        command,
        version: env!("CARGO_PKG_VERSION"),
        c_values,
        params,
        section,
        ld,
        ridge_quantile,
        branching,
        quantities,
        flatness_top,
        flatness_bottom,
        critical_c: flags.critical_c || file.critical_c.unwrap_or(false),
        field_cache: flags.field_cache.or(file.field_cache),
        input,
        out,
        threads: pick(flags.threads, file.threads, 0),
        json: flags.json || file.json.unwrap_or(false),
    })
}
