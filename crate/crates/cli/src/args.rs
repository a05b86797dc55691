use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "vri",
    version,
    about = "Phase-space analysis of an asymmetric valley-ridge-inflection Hamiltonian"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Locate and classify the four equilibria of the surface.
    CriticalPoints(Overrides),
    /// Lagrangian descriptor field on the section, manifolds and lobes.
    LdField(Overrides),
    /// Branching ratios of trajectories launched from the entrance line.
    Branching(Overrides),
    /// Evaluate depth, flatness, lobe areas and ratios over a range of c.
    Sweep(Overrides),
    /// Fit the polynomial laws to a sweep table.
    Fit(Overrides),
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Asymmetry parameter(s), comma separated or repeated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub c: Option<Vec<f64>>,
    #[arg(long)]
    pub c_min: Option<f64>,
    #[arg(long)]
    pub c_max: Option<f64>,
    #[arg(long)]
    pub c_step: Option<f64>,
    /// Total energy.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Descriptor integration time.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Exponent of the p-norm descriptor.
    #[arg(long)]
    pub p_exponent: Option<f64>,
    /// Integrator step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Section grid as `N` or `NYxNP`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Gradient quantile for ridge extraction.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Number of initial conditions per branching run.
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Sweep quantities, comma separated (e.g. depth-bottom,ratio-bottom).
    #[arg(long, value_delimiter = ',')]
    pub quantities: Option<Vec<String>>,
    /// Points per axis of the flatness grids.
    #[arg(long)]
    pub flatness_grid: Option<usize>,
    /// Also estimate the critical c of the branching ratio.
    #[arg(long)]
    pub critical_c: bool,
    /// Directory of descriptor fields to reuse (and fill) during sweeps.
    #[arg(long)]
    pub field_cache: Option<PathBuf>,
    /// Sweep table to fit.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 uses all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print machine-readable JSON to stdout.
    #[arg(long)]
    pub json: bool,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad grid size '{s}'"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("600").unwrap(), (600, 600));
        assert_eq!(parse_grid("21x11").unwrap(), (21, 11));
        assert!(parse_grid("ax3").is_err());
    }
}
