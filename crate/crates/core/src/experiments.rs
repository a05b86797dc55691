//! Branching-ratio runs, sweeps over the asymmetry parameter and the
//! polynomial laws fitted to them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{compute_field_with, LdConfig, LdField, SectionSpec};
use crate::dynamics::{EventSpec, IntegratorConfig, PhaseState, Termination};
use crate::manifolds::{extract_manifolds, identify_lobes, LobePair, DEFAULT_QUANTILE};
use crate::numerics::pairwise_sum;
use crate::potential::{
    depth_from, eval_potential, find_critical_points, flatness, CriticalPointSet, DomainRect, SystemParams, Well,
    DEFAULT_SEEDS, NEWTON_TOL,
};
use crate::ExperimentError;

// ---------------------------------------------------------------------------
// Branching
// ---------------------------------------------------------------------------

/// Initial-condition family and stopping rules of a branching run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    pub n: usize,
    pub ic_line_x: f64,
    pub t_max: f64,
    /// Entering a well means crossing `y = +level` or `y = -level`.
    pub entry_level: f64,
    /// Trajectories whose energy drifts further than this are unresolved.
    pub energy_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            ic_line_x: -0.005,
            t_max: 100.0,
            entry_level: 0.5,
            energy_tol: 1e-6,
            integrator: IntegratorConfig::default().with_record_stride(0),
        }
    }
}

impl BranchingConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n < 2 {
            return Err(ExperimentError::InvalidInput(format!(
                "at least 2 initial conditions are needed, got {}",
                self.n
            )));
        }
        if !self.ic_line_x.is_finite() || !(self.t_max > 0.0) || !(self.entry_level > 0.0) {
            return Err(ExperimentError::InvalidInput(
                "initial line must be finite; t_max and entry level positive".into(),
            ));
        }
        if !(self.energy_tol > 0.0) {
            return Err(ExperimentError::InvalidInput(
                "energy tolerance must be positive".into(),
            ));
        }
        self.integrator.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Top,
    Bottom,
    Unresolved,
}

impl Outcome {
    pub fn from_termination(t: Termination) -> Self {
        match t {
            Termination::EnteredTop => Outcome::Top,
            Termination::EnteredBottom => Outcome::Bottom,
            _ => Outcome::Unresolved,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Outcome::Top => Outcome::Bottom,
            Outcome::Bottom => Outcome::Top,
            Outcome::Unresolved => Outcome::Unresolved,
        }
    }
}

/// One initial condition and where it went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcOutcome {
    pub y0: f64,
    pub outcome: Outcome,
    pub termination: Termination,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingResult {
    pub c: f64,
    pub n_total: usize,
    pub n_top: usize,
    pub n_bottom: usize,
    pub n_unresolved: usize,
    pub ratio_top: f64,
    pub ratio_bottom: f64,
    /// Unresolved because the energy error exceeded the tolerance.
    pub n_energy_violations: usize,
    /// The accessible `y` interval the initial conditions span.
    pub interval: (f64, f64),
}

impl BranchingResult {
    pub fn from_outcomes(c: f64, interval: (f64, f64), outcomes: &[IcOutcome], violations: usize) -> Self {
        let count = |o: Outcome| outcomes.iter().filter(|r| r.outcome == o).count();
        let (n_top, n_bottom) = (count(Outcome::Top), count(Outcome::Bottom));
        let resolved = n_top + n_bottom;
        let (ratio_top, ratio_bottom) = if resolved > 0 {
            (n_top as f64 / resolved as f64, n_bottom as f64 / resolved as f64)
        } else {
            (0.0, 0.0)
        };
        Self {
            c,
            n_total: outcomes.len(),
            n_top,
            n_bottom,
            n_unresolved: outcomes.len() - resolved,
            ratio_top,
            ratio_bottom,
            n_energy_violations: violations,
            interval,
        }
    }
}

/// Largest interval of `y` on the line `x = x0` where the energy lift is
/// real, searched within the escape radius.
pub fn accessible_interval(x0: f64, params: &SystemParams, radius: f64) -> Result<(f64, f64), ExperimentError> {
    const SCAN: usize = 4001;
    let f = |y: f64| params.h0 - eval_potential(x0, y, params) > 0.0;
    let ys: Vec<f64> = (0..SCAN)
        .map(|i| -radius + 2.0 * radius * i as f64 / (SCAN - 1) as f64)
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < SCAN {
        if f(ys[i]) {
            let start = i;
            while i + 1 < SCAN && f(ys[i + 1]) {
                i += 1;
            }
            if best.is_none_or(|(a, b)| i - start > b - a) {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    let (a, b) = best.ok_or(ExperimentError::InaccessibleLine(x0))?;
    // Boundary between an inaccessible `out` and an accessible `inside`.
    let edge = |mut out: f64, mut inside: f64| {
        for _ in 0..200 {
            let m = 0.5 * (out + inside);
            if m == out || m == inside {
                break;
            }
            if f(m) {
                inside = m;
            } else {
                out = m;
            }
        }
        inside
    };
    let lo = if a == 0 { ys[0] } else { edge(ys[a - 1], ys[a]) };
    let hi = if b == SCAN - 1 {
        ys[SCAN - 1]
    } else {
        edge(ys[b + 1], ys[b])
    };
    Ok((lo, hi))
}

/// `n` equally spaced points strictly inside `(lo, hi)`. The family is
/// mirror-symmetric: a symmetric interval gives exactly negated pairs.
pub fn interior_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..n)
        .map(|i| mid + half * (2.0 * i as f64 + 1.0 - n as f64) / (n as f64 + 1.0))
        .collect()
}

/// Accessible interval, per-IC outcomes, and the number of energy violations.
pub type BranchingOutcomes = ((f64, f64), Vec<IcOutcome>, usize);

/// Integrates every initial condition of the run and labels its fate.
pub fn branching_outcomes(params: &SystemParams, cfg: &BranchingConfig) -> Result<BranchingOutcomes, ExperimentError> {
    cfg.validate()?;
    params.validate()?;
    let (lo, hi) = accessible_interval(cfg.ic_line_x, params, cfg.integrator.escape_radius)?;
    let ys = interior_points(lo, hi, cfg.n);
    let events = EventSpec::well_entry(cfg.entry_level);
    let results: Vec<Result<(IcOutcome, bool), ExperimentError>> = ys
        .par_iter()
        .map(|&y0| {
            let px = (2.0 * params.m_x * (params.h0 - eval_potential(cfg.ic_line_x, y0, params))).sqrt();
            let s0 = PhaseState::new(cfg.ic_line_x, y0, px, 0.0);
            let traj = cfg
                .integrator
                .integrate(s0, params, cfg.t_max, &events, cfg.energy_tol)?;
            let valid = traj.is_valid();
            let outcome = if valid {
                Outcome::from_termination(traj.termination)
            } else {
                Outcome::Unresolved
            };
            Ok((
                IcOutcome {
                    y0,
                    outcome,
                    termination: traj.termination,
                    time: traj.termination_time,
                },
                !valid,
            ))
        })
        .collect();
    let mut outcomes = Vec::with_capacity(cfg.n);
    let mut violations = 0;
    for r in results {
        let (o, bad) = r?;
        violations += bad as usize;
        outcomes.push(o);
    }
    Ok(((lo, hi), outcomes, violations))
}

/// Fraction of trajectories from the initial line that enter each well.
pub fn branching_run(params: &SystemParams, cfg: &BranchingConfig) -> Result<BranchingResult, ExperimentError> {
    let (interval, outcomes, violations) = branching_outcomes(params, cfg)?;
    Ok(BranchingResult::from_outcomes(
        params.c, interval, &outcomes, violations,
    ))
}

/// Smallest `c` beyond which no trajectory enters the top well.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalC {
    pub estimate: f64,
    /// Last `c` with a top entry and first `c` without.
    pub bracket: (f64, f64),
    pub runs: Vec<BranchingResult>,
}

/// Scans `c_values` (ascending) for the first value with no top entries,
/// then bisects the preceding gap down to `width`.
pub fn estimate_critical_c(
    template: &SystemParams,
    c_values: &[f64],
    cfg: &BranchingConfig,
    width: f64,
) -> Result<CriticalC, ExperimentError> {
    if c_values.is_empty() || !(width > 0.0) {
        return Err(ExperimentError::InvalidInput(
            "critical-c search needs sample values and a positive width".into(),
        ));
    }
    if c_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::InvalidInput(
            "c values must be strictly increasing".into(),
        ));
    }
    let mut runs = Vec::new();
    let mut first_zero = None;
    for (k, &c) in c_values.iter().enumerate() {
        let r = branching_run(&template.with_c(c), cfg)?;
        let zero = r.n_top == 0 && r.n_bottom > 0;
        runs.push(r);
        if zero {
            first_zero = Some(k);
            break;
        }
    }
    let Some(k) = first_zero else {
        return Err(ExperimentError::InvalidInput(
            "top entries persist over the whole c range".into(),
        ));
    };
    if k == 0 {
        return Ok(CriticalC {
            estimate: c_values[0],
            bracket: (c_values[0], c_values[0]),
            runs,
        });
    }
    let (mut lo, mut hi) = (c_values[k - 1], c_values[k]);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let r = branching_run(&template.with_c(mid), cfg)?;
        if r.n_top == 0 && r.n_bottom > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
        runs.push(r);
    }
    Ok(CriticalC {
        estimate: 0.5 * (lo + hi),
        bracket: (lo, hi),
        runs,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    DepthTop,
    DepthBottom,
    FlatnessTop,
    FlatnessBottom,
    LobeAreaTop,
    LobeAreaBottom,
    RatioTop,
    RatioBottom,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::DepthTop,
        Quantity::DepthBottom,
        Quantity::FlatnessTop,
        Quantity::FlatnessBottom,
        Quantity::LobeAreaTop,
        Quantity::LobeAreaBottom,
        Quantity::RatioTop,
        Quantity::RatioBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::DepthTop => "depth-top",
            Quantity::DepthBottom => "depth-bottom",
            Quantity::FlatnessTop => "flatness-top",
            Quantity::FlatnessBottom => "flatness-bottom",
            Quantity::LobeAreaTop => "lobe-area-top",
            Quantity::LobeAreaBottom => "lobe-area-bottom",
            Quantity::RatioTop => "ratio-top",
            Quantity::RatioBottom => "ratio-bottom",
        }
    }

    fn is_depth(self) -> bool {
        matches!(self, Quantity::DepthTop | Quantity::DepthBottom)
    }

    fn is_lobe(self) -> bool {
        matches!(self, Quantity::LobeAreaTop | Quantity::LobeAreaBottom)
    }

    fn is_ratio(self) -> bool {
        matches!(self, Quantity::RatioTop | Quantity::RatioBottom)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quantity::ALL
            .iter()
            .copied()
            .find(|q| q.name() == s)
            .ok_or_else(|| ExperimentError::InvalidInput(format!("unknown quantity '{s}'")))
    }
}

/// Everything a sweep needs besides the `c` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub quantities: Vec<Quantity>,
    pub branching: BranchingConfig,
    pub section: SectionSpec,
    pub ld: LdConfig,
    pub ridge_quantile: f64,
    /// Flatness domain of the top well.
    pub flatness_top: DomainRect,
    pub flatness_bottom: DomainRect,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            quantities: Quantity::ALL.to_vec(),
            branching: BranchingConfig::default(),
            section: SectionSpec::default(),
            ld: LdConfig::default(),
            ridge_quantile: DEFAULT_QUANTILE,
            flatness_top: DomainRect::top_well(),
            flatness_bottom: DomainRect::bottom_well(),
        }
    }
}

/// `n` points from `lo` to `hi` inclusive.
pub fn c_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, ExperimentError> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(ExperimentError::InvalidInput(format!(
            "bad c grid: from {lo} to {hi} in steps of {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            if i + 1 == n && ((hi - lo) / step - (n - 1) as f64).abs() < 1e-9 {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect())
}

/// Default sweep grid: `c` from 0 to 0.5 in steps of 0.025.
pub fn default_c_values() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.025).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub c: f64,
    pub quantity: Quantity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    /// `None` where the evaluation failed.
    pub values: BTreeMap<Quantity, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub quantities: Vec<Quantity>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
    /// Lobe diagnostics per `c`, when lobes were requested.
    pub lobe_diagnostics: Vec<(f64, Vec<String>)>,
}

impl SweepTable {
    pub fn column(&self, q: Quantity) -> Option<Vec<(f64, f64)>> {
        if !self.quantities.contains(&q) {
            return None;
        }
        Some(
            self.rows
                .iter()
                .filter_map(|r| r.values.get(&q).copied().flatten().map(|v| (r.c, v)))
                .collect(),
        )
    }

    /// CSV with a `c` column followed by one column per quantity; failed
    /// cells are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        let header: Vec<&str> = std::iter::once("c")
            .chain(self.quantities.iter().map(|q| q.name()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut line = format!("{}", row.c);
            for q in &self.quantities {
                line.push(',');
                if let Some(Some(v)) = row.values.get(q) {
                    line.push_str(&v.to_string());
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Lobes of a computed field with the default ridge extraction.
pub fn lobes_for(field: &LdField, quantile: f64) -> Result<LobePair, ExperimentError> {
    let set = extract_manifolds(field, quantile)?;
    Ok(identify_lobes(&set.stable, &set.unstable, field)?)
}

/// Evaluates the requested quantities at each `c`.
///
/// Critical points are continued in `c`: each value's solutions seed the
/// next. Failures are recorded per cell and the sweep moves on.
pub fn sweep(template: &SystemParams, c_values: &[f64], cfg: &SweepConfig) -> Result<SweepTable, ExperimentError> {
    sweep_with_fields(template, c_values, cfg, |p| {
        compute_field_with(&cfg.section, p, &cfg.ld).map_err(ExperimentError::from)
    })
}

/// As [`sweep`], with a caller-supplied source of descriptor fields (for
/// caching or reuse of fields already on disk).
pub fn sweep_with_fields<F>(
    template: &SystemParams,
    c_values: &[f64],
    cfg: &SweepConfig,
    mut field_for: F,
) -> Result<SweepTable, ExperimentError>
where
    F: FnMut(&SystemParams) -> Result<LdField, ExperimentError>,
{
    if c_values.is_empty() {
        return Err(ExperimentError::InvalidInput("sweep needs at least one c value".into()));
    }
    if cfg.quantities.is_empty() {
        return Err(ExperimentError::InvalidInput(
            "sweep needs at least one quantity".into(),
        ));
    }
    template.validate()?;
    cfg.flatness_top.validate()?;
    cfg.flatness_bottom.validate()?;
    if cfg.quantities.iter().any(|q| q.is_ratio()) {
        cfg.branching.validate()?;
    }
    if cfg.quantities.iter().any(|q| q.is_lobe()) {
        cfg.section.validate()?;
        cfg.ld.validate()?;
    }
    let mut quantities = cfg.quantities.clone();
    quantities.sort();
    quantities.dedup();

    let mut rows = Vec::with_capacity(c_values.len());
    let mut failures = Vec::new();
    let mut lobe_diagnostics = Vec::new();
    let mut seeds: Vec<(f64, f64)> = DEFAULT_SEEDS.to_vec();

    for &c in c_values {
        let params = template.with_c(c);
        let mut values = BTreeMap::new();
        let mut fail = |q: Quantity, msg: String, values: &mut BTreeMap<Quantity, Option<f64>>| {
            values.insert(q, None);
            failures.push(CellFailure {
                c,
                quantity: q,
                message: msg,
            });
        };

        if quantities.iter().any(|q| q.is_depth()) {
            let set: Result<CriticalPointSet, _> = find_critical_points(&params, &seeds, NEWTON_TOL);
            match set {
                Ok(set) => {
                    if let Some(next) = set.as_seeds() {
                        seeds = next;
                    }
                    for (q, w) in [(Quantity::DepthTop, Well::Top), (Quantity::DepthBottom, Well::Bottom)] {
                        if !quantities.contains(&q) {
                            continue;
                        }
                        match depth_from(&set, w) {
                            Ok(d) => {
                                values.insert(q, Some(d));
                            }
                            Err(e) => fail(q, e.to_string(), &mut values),
                        }
                    }
                }
                Err(e) => {
                    for q in [Quantity::DepthTop, Quantity::DepthBottom] {
                        if quantities.contains(&q) {
                            fail(q, e.to_string(), &mut values);
                        }
                    }
                }
            }
        }

        for (q, dom) in [
            (Quantity::FlatnessTop, &cfg.flatness_top),
            (Quantity::FlatnessBottom, &cfg.flatness_bottom),
        ] {
            if quantities.contains(&q) {
                match flatness(&params, dom) {
                    Ok(v) => {
                        values.insert(q, Some(v));
                    }
                    Err(e) => fail(q, e.to_string(), &mut values),
                }
            }
        }

        if quantities.iter().any(|q| q.is_lobe()) {
            match field_for(&params).and_then(|f| lobes_for(&f, cfg.ridge_quantile)) {
                Ok(lobes) => {
                    for (q, lobe) in [
                        (Quantity::LobeAreaTop, &lobes.top),
                        (Quantity::LobeAreaBottom, &lobes.bottom),
                    ] {
                        if quantities.contains(&q) {
                            values.insert(q, Some(lobe.area));
                        }
                    }
                    let mut diags = lobes.diagnostics.clone();
                    for lobe in [&lobes.top, &lobes.bottom] {
                        if let Some(d) = &lobe.diagnostic {
                            diags.push(format!("{}: {d}", lobe.label.as_str()));
                        }
                    }
                    lobe_diagnostics.push((c, diags));
                }
                Err(e) => {
                    for q in [Quantity::LobeAreaTop, Quantity::LobeAreaBottom] {
                        if quantities.contains(&q) {
                            fail(q, e.to_string(), &mut values);
                        }
                    }
                }
            }
        }

        if quantities.iter().any(|q| q.is_ratio()) {
            match branching_run(&params, &cfg.branching) {
                Ok(r) => {
                    let resolved = r.n_top + r.n_bottom > 0;
                    for (q, v) in [
                        (Quantity::RatioTop, r.ratio_top),
                        (Quantity::RatioBottom, r.ratio_bottom),
                    ] {
                        if !quantities.contains(&q) {
                            continue;
                        }
                        if resolved {
                            values.insert(q, Some(v));
                        } else {
                            fail(q, "no trajectory entered either well".into(), &mut values);
                        }
                    }
                }
                Err(e) => {
                    for q in [Quantity::RatioTop, Quantity::RatioBottom] {
                        if quantities.contains(&q) {
                            fail(q, e.to_string(), &mut values);
                        }
                    }
                }
            }
        }

        rows.push(SweepRow { c, values });
    }

    Ok(SweepTable {
        quantities,
        rows,
        failures,
        lobe_diagnostics,
    })
}

/// Reads a table written by [`SweepTable::write_csv`].
pub fn read_sweep_csv(text: &str) -> Result<SweepTable, ExperimentError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| ExperimentError::InvalidInput("empty sweep table".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"c") {
        return Err(ExperimentError::InvalidInput(
            "sweep table must start with a 'c' column".into(),
        ));
    }
    let quantities = cols[1..]
        .iter()
        .map(|s| s.parse::<Quantity>())
        .collect::<Result<Vec<_>, _>>()?;
    let num = |s: &str, line: usize| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| ExperimentError::InvalidInput(format!("line {line}: '{s}' is not a number")))
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(ExperimentError::InvalidInput(format!(
                "line {}: expected {} cells, got {}",
                k + 2,
                cols.len(),
                cells.len()
            )));
        }
        let c = num(cells[0], k + 2)?;
        let mut values = BTreeMap::new();
        for (q, cell) in quantities.iter().zip(&cells[1..]) {
            let v = if cell.trim().is_empty() {
                None
            } else {
                Some(num(cell, k + 2)?)
            };
            values.insert(*q, v);
        }
        rows.push(SweepRow { c, values });
    }
    Ok(SweepTable {
        quantities,
        rows,
        failures: Vec::new(),
        lobe_diagnostics: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `linear`, `quadratic`, `cubic`, `quartic` or `degree-N`.
    pub model: String,
    pub degree: usize,
    /// Highest degree first.
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    /// Coefficient of determination.
    pub r_squared: f64,
    pub domain: (f64, f64),
    pub n_points: usize,
}

impl FitResult {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, a| acc * x + a)
    }
}

pub fn model_name(degree: usize) -> String {
    match degree {
        1 => "linear".into(),
        2 => "quadratic".into(),
        3 => "cubic".into(),
        4 => "quartic".into(),
        d => format!("degree-{d}"),
    }
}

/// Least-squares polynomial fit through a Householder QR factorisation of
/// the Vandermonde matrix.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Result<FitResult, ExperimentError> {
    let n = xs.len();
    let m = degree + 1;
    if n != ys.len() {
        return Err(ExperimentError::InvalidInput(format!(
            "{} abscissae but {} ordinates",
            n,
            ys.len()
        )));
    }
    if n < m {
        return Err(ExperimentError::InvalidInput(format!(
            "a degree-{degree} fit needs at least {m} points, got {n}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(ExperimentError::InvalidInput("fit data must be finite".into()));
    }
    // Roundoff can hide exact rank loss from the QR test, so count distinct abscissae first.
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < m {
        return Err(ExperimentError::RankDeficient {
            rank: sorted.len(),
            needed: m,
        });
    }
    let a = DMatrix::from_fn(n, m, |i, j| xs[i].powi((degree - j) as i32));
    let b = DVector::from_column_slice(ys);
    let qr = a.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let diag_max = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = diag_max * f64::EPSILON * n.max(m) as f64;
    let rank = (0..m).filter(|&i| r[(i, i)].abs() > tol).count();
    if rank < m {
        return Err(ExperimentError::RankDeficient { rank, needed: m });
    }
    let rhs = q.transpose() * &b;
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or(ExperimentError::RankDeficient { rank, needed: m })?;
    let coefficients: Vec<f64> = coef.iter().copied().collect();
    let fit = |x: f64| coefficients.iter().fold(0.0, |acc, c| acc * x + c);
    let sq: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| (y - fit(x)).powi(2)).collect();
    let ss_res = pairwise_sum(&sq);
    let mean = pairwise_sum(ys) / n as f64;
    let tot: Vec<f64> = ys.iter().map(|y| (y - mean).powi(2)).collect();
    let ss_tot = pairwise_sum(&tot);
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        model: model_name(degree),
        degree,
        coefficients,
        residual_rms: (ss_res / n as f64).sqrt(),
        r_squared,
        domain: (lo, hi),
        n_points: n,
    })
}

/// Published coefficients of a fitted law, highest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLaw {
    pub symbols: Vec<String>,
    pub coefficients: Vec<f64>,
}

/// Largest `c` used in the branching-ratio fit; beyond it the ratio is
/// saturated.
pub const RATIO_FIT_C_MAX: f64 = 0.375;

/// The law fitted to each quantity: degree, optional cap on `c`, reference.
pub fn law_for(q: Quantity) -> (usize, Option<f64>, Option<ReferenceLaw>) {
    let law = |symbols: &[&str], coefficients: &[f64]| {
        Some(ReferenceLaw {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            coefficients: coefficients.to_vec(),
        })
    };
    match q {
        Quantity::DepthBottom => (1, None, law(&["d1", "d2"], &[1.042, 1.943])),
        Quantity::DepthTop => (1, None, None),
        Quantity::FlatnessTop => (2, None, law(&["f1", "f2", "f3"], &[0.2749, 0.04992, 3.241])),
        Quantity::FlatnessBottom => (2, None, law(&["f4", "-f5", "f6"], &[0.2207, -0.04926, 3.24])),
        Quantity::LobeAreaBottom => (1, None, law(&["b1", "b2"], &[0.2629, 0.2993])),
        Quantity::LobeAreaTop => (1, None, None),
        Quantity::RatioBottom => (
            4,
            Some(RATIO_FIT_C_MAX),
            law(&["a1", "a2", "a3", "a4", "a5"], &[72.96, -40.89, 7.854, 0.2581, 0.504]),
        ),
        Quantity::RatioTop => (4, Some(RATIO_FIT_C_MAX), None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub quantity: Quantity,
    pub fit: Option<FitResult>,
    pub reference: Option<ReferenceLaw>,
    /// `|fit - reference| / |reference|` per coefficient.
    pub relative_deviation: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Fits each quantity in the table with its law and compares the
/// coefficients with the published ones.
pub fn fit_scaling_laws(table: &SweepTable) -> Vec<LawReport> {
    Quantity::ALL
        .iter()
        .filter(|q| table.quantities.contains(q))
        .map(|&q| {
            let (degree, c_max, reference) = law_for(q);
            let column = table.column(q).unwrap_or_default();
            let data: Vec<(f64, f64)> = column
                .into_iter()
                .filter(|(c, _)| c_max.is_none_or(|m| *c <= m + 1e-12))
                .collect();
            let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
            let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
            match fit_polynomial(&xs, &ys, degree) {
                Ok(fit) => {
                    let relative_deviation = reference
                        .as_ref()
                        .map(|r| {
                            r.coefficients
                                .iter()
                                .zip(&fit.coefficients)
                                .map(|(a, b)| (b - a).abs() / a.abs())
                                .collect()
                        })
                        .unwrap_or_default();
                    LawReport {
                        quantity: q,
                        fit: Some(fit),
                        reference,
                        relative_deviation,
                        diagnostic: None,
                    }
                }
                Err(e) => LawReport {
                    quantity: q,
                    fit: None,
                    reference,
                    relative_deviation: Vec::new(),
                    diagnostic: Some(format!("{q} skipped: {e}")),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_fit_is_exact() {
        let f = fit_polynomial(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], 1).unwrap();
        assert!((f.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((f.coefficients[1] - 1.0).abs() < 1e-14);
        assert!(f.residual_rms < 1e-14);
        assert_eq!(f.model, "linear");
        assert_eq!(f.domain, (0.0, 2.0));
    }

    #[test]
    fn degenerate_fits_rejected() {
        assert!(matches!(
            fit_polynomial(&[1.0], &[2.0], 1),
            Err(ExperimentError::InvalidInput(_))
        ));
        assert!(matches!(
            fit_polynomial(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1),
            Err(ExperimentError::RankDeficient { rank: 1, needed: 2 })
        ));
        assert!(matches!(
            fit_polynomial(&[0.1, 0.1, 0.1], &[2.0, 2.0, 2.0], 1),
            Err(ExperimentError::RankDeficient { rank: 1, needed: 2 })
        ));
        assert!(matches!(
            fit_polynomial(&[0.0, 0.1, 0.1, 0.0], &[1.0; 4], 2),
            Err(ExperimentError::RankDeficient { rank: 2, needed: 3 })
        ));
        assert!(fit_polynomial(&[1.0, 2.0], &[1.0], 1).is_err());
    }

    proptest! {
        #[test]
        fn quartic_recovered(coef in prop::collection::vec(-50.0f64..50.0, 5)) {
            let xs: Vec<f64> = (0..16).map(|i| i as f64 * 0.025).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| coef.iter().fold(0.0, |a, c| a * x + c)).collect();
            let f = fit_polynomial(&xs, &ys, 4).unwrap();
            for (a, b) in f.coefficients.iter().zip(&coef) {
                prop_assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn interior_points_mirror_exactly() {
        let ys = interior_points(-0.7, 0.7, 1000);
        assert_eq!(ys.len(), 1000);
        for i in 0..1000 {
            assert_eq!(ys[i], -ys[999 - i]);
        }
        assert!(ys[0] > -0.7 && ys[999] < 0.7);
        let step = ys[1] - ys[0];
        assert!((ys[0] + 0.7 - step).abs() < 1e-12);
    }

    #[test]
    fn interval_is_symmetric_without_asymmetry() {
        let p = SystemParams::new(0.0);
        let (lo, hi) = accessible_interval(-0.005, &p, 10.0).unwrap();
        assert_eq!(lo, -hi);
        assert!(hi > 0.4 && hi < 0.5);
        let v = eval_potential(-0.005, hi, &p);
        assert!((v - p.h0).abs() < 1e-12);
    }

    #[test]
    fn inaccessible_line_is_an_error() {
        let p = SystemParams::new(0.0).with_energy(-5.0);
        assert!(matches!(
            branching_run(&p, &BranchingConfig::default().with_n(10)),
            Err(ExperimentError::InaccessibleLine(_))
        ));
        assert!(branching_run(&SystemParams::new(0.0), &BranchingConfig::default().with_n(1)).is_err());
    }

    #[test]
    fn symmetric_run_has_mirrored_labels() {
        let cfg = BranchingConfig::default().with_n(40);
        let (_, out, _) = branching_outcomes(&SystemParams::new(0.0), &cfg).unwrap();
        for i in 0..40 {
            assert_eq!(out[i].y0, -out[39 - i].y0);
            assert_eq!(out[i].outcome, out[39 - i].outcome.mirrored());
        }
        let r = BranchingResult::from_outcomes(0.0, (0.0, 0.0), &out, 0);
        assert_eq!(r.n_top, r.n_bottom);
        assert_eq!(r.n_top + r.n_bottom + r.n_unresolved, r.n_total);
    }

    #[test]
    fn c_grid_includes_end() {
        let g = c_grid(0.0, 0.5, 0.05).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 0.5);
        assert_eq!(default_c_values().len(), 21);
        assert!(c_grid(0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn depth_sweep_examples() {
        let cfg = SweepConfig {
            quantities: vec![Quantity::DepthBottom, Quantity::DepthTop],
            ..SweepConfig::default()
        };
        let t = sweep(&SystemParams::new(0.0), &[0.0, 0.2, 0.4], &cfg).unwrap();
        let col = t.column(Quantity::DepthBottom).unwrap();
        for ((_, v), want) in col.iter().zip([1.9477, 2.1481, 2.3592]) {
            assert!((v - want).abs() < 1e-3, "{v} vs {want}");
        }
        let top = t.column(Quantity::DepthTop).unwrap();
        assert!((top[0].1 - col[0].1).abs() < 1e-12);
        assert!(t.failures.is_empty());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let cfg = SweepConfig {
            quantities: vec![Quantity::FlatnessTop, Quantity::DepthBottom],
            ..SweepConfig::default()
        };
        let t = sweep(&SystemParams::new(0.0), &[0.0, 0.1], &cfg).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("c,depth-bottom,flatness-top\n"));
        let back = read_sweep_csv(&text).unwrap();
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let cfg = SweepConfig {
            quantities: vec![Quantity::RatioBottom],
            branching: BranchingConfig::default().with_n(4),
            ..SweepConfig::default()
        };
        let t = sweep(&SystemParams::new(0.0).with_energy(-5.0), &[0.0], &cfg).unwrap();
        assert_eq!(t.rows[0].values[&Quantity::RatioBottom], None);
        assert_eq!(t.failures.len(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "c,ratio-bottom\n0,\n");
    }

    #[test]
    fn laws_skip_missing_data() {
        let table = SweepTable {
            quantities: vec![Quantity::DepthBottom],
            rows: vec![SweepRow {
                c: 0.0,
                values: BTreeMap::from([(Quantity::DepthBottom, Some(1.9))]),
            }],
            failures: Vec::new(),
            lobe_diagnostics: Vec::new(),
        };
        let r = fit_scaling_laws(&table);
        assert_eq!(r.len(), 1);
        assert!(r[0].fit.is_none());
        assert!(r[0].diagnostic.is_some());
    }

    #[test]
    fn ratio_law_uses_capped_range() {
        let rows = default_c_values()
            .into_iter()
            .map(|c| SweepRow {
                c,
                values: BTreeMap::from([(Quantity::RatioBottom, Some(if c <= 0.375 { 0.5 + c } else { 1.0 }))]),
            })
            .collect();
        let table = SweepTable {
            quantities: vec![Quantity::RatioBottom],
            rows,
            failures: Vec::new(),
            lobe_diagnostics: Vec::new(),
        };
        let r = &fit_scaling_laws(&table)[0];
        let fit = r.fit.as_ref().unwrap();
        assert_eq!(fit.n_points, 16);
        assert!((fit.coefficients[4] - 0.5).abs() < 1e-9);
        assert_eq!(r.relative_deviation.len(), 5);
    }
}
