//! The asymmetric valley-ridge-inflection potential energy surface.
//!
//! ```text
//! V(x, y) = 8/3 x^3 - 4 x^2 + y^2 / 2 + x (y^4 - 2 y^2) + c x y
//! ```
//!
//! The surface has an entrance channel guarded by an index-1 saddle pinned at
//! the origin (the upper saddle), a second index-1 saddle near `(1, 0)` (the
//! lower saddle) and two wells above and below the `x` axis. The parameter `c`
//! tilts the wells against each other.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::pairwise_sum;
use crate::PotentialError;

/// Physical parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Asymmetry of the wells.
    pub c: f64,
    pub m_x: f64,
    pub m_y: f64,
    /// Total energy of the trajectories.
    pub h0: f64,
}

impl SystemParams {
    pub const DEFAULT_ENERGY: f64 = 0.1;

    /// Unit masses at the default energy `H0 = 0.1`.
    pub fn new(c: f64) -> Self {
        Self {
            c,
            m_x: 1.0,
            m_y: 1.0,
            h0: Self::DEFAULT_ENERGY,
        }
    }

    pub fn with_energy(mut self, h0: f64) -> Self {
        self.h0 = h0;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if !(self.m_x > 0.0 && self.m_y > 0.0) {
            return Err(PotentialError::InvalidParams(format!(
                "masses must be positive (m_x = {}, m_y = {})",
                self.m_x, self.m_y
            )));
        }
        if !self.c.is_finite() || !self.h0.is_finite() {
            return Err(PotentialError::InvalidParams("c and H0 must be finite".into()));
        }
        Ok(())
    }

    /// Extra check applied by parameter sweeps.
    pub fn validate_sweep_range(&self) -> Result<(), PotentialError> {
        self.validate()?;
        if !(0.0..=0.5).contains(&self.c) {
            return Err(PotentialError::InvalidParams(format!(
                "c = {} is outside the studied range [0, 0.5]",
                self.c
            )));
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::new(0.0)
    }
}

#[inline]
pub fn eval_potential(x: f64, y: f64, params: &SystemParams) -> f64 {
    let y2 = y * y;
    8.0 / 3.0 * x * x * x - 4.0 * x * x + 0.5 * y2 + x * (y2 * y2 - 2.0 * y2) + params.c * x * y
}

/// `(dV/dx, dV/dy)`.
#[inline]
pub fn eval_gradient(x: f64, y: f64, params: &SystemParams) -> (f64, f64) {
    let c = params.c;
    let y2 = y * y;
    let dx = 8.0 * x * x - 8.0 * x + y2 * y2 - 2.0 * y2 + c * y;
    let dy = y + 4.0 * x * y2 * y - 4.0 * x * y + c * x;
    (dx, dy)
}

/// Analytic Hessian of the potential. The mixed partial is computed once, so
/// the result is exactly symmetric.
pub fn eval_hessian(x: f64, y: f64, params: &SystemParams) -> Matrix2<f64> {
    let y2 = y * y;
    let dxx = 16.0 * x - 8.0;
    let dyy = 1.0 + 12.0 * x * y2 - 4.0 * x;
    let dxy = 4.0 * y2 * y - 4.0 * y + params.c;
    Matrix2::new(dxx, dxy, dxy, dyy)
}

/// The four equilibria of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    #[serde(rename = "index1-saddle-upper")]
    SaddleUpper,
    #[serde(rename = "index1-saddle-lower")]
    SaddleLower,
    WellTop,
    WellBottom,
}

impl CriticalKind {
    pub const ALL: [CriticalKind; 4] = [
        CriticalKind::SaddleUpper,
        CriticalKind::SaddleLower,
        CriticalKind::WellTop,
        CriticalKind::WellBottom,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CriticalKind::SaddleUpper => "index-1 saddle (upper)",
            CriticalKind::SaddleLower => "index-1 saddle (lower)",
            CriticalKind::WellTop => "potential well (top)",
            CriticalKind::WellBottom => "potential well (bottom)",
        }
    }
}

/// Linear stability of the equilibrium in the four-dimensional phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    SaddleCenter,
    Center,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::SaddleCenter => "saddle x center",
            Stability::Center => "center",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub position: (f64, f64),
    pub energy: f64,
    pub kind: CriticalKind,
    pub stability: Stability,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: (f64, f64),
}

/// A Newton seed that did not converge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: (f64, f64),
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Result of [`find_critical_points`]: converged points, failed seeds and
/// any degeneracy warnings raised during classification.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
    pub failures: Vec<SeedFailure>,
    pub warnings: Vec<String>,
}

impl CriticalPointSet {
    pub fn get(&self, kind: CriticalKind) -> Option<&CriticalPoint> {
        self.points.iter().find(|p| p.kind == kind)
    }

    pub fn require(&self, kind: CriticalKind) -> Result<&CriticalPoint, PotentialError> {
        self.get(kind)
            .ok_or_else(|| PotentialError::MissingCriticalPoint(kind.label().to_string()))
    }

    /// Positions ordered as the default seeds, for continuation in `c`.
    pub fn as_seeds(&self) -> Option<Vec<(f64, f64)>> {
        CriticalKind::ALL
            .iter()
            .map(|k| self.get(*k).map(|p| p.position))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.warnings.is_empty() && CriticalKind::ALL.iter().all(|k| self.get(*k).is_some())
    }
}

/// Locations of the equilibria of the symmetric surface.
pub const DEFAULT_SEEDS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.1071, 0.8799), (1.1071, -0.8799)];

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-12;
pub const DEDUP_RADIUS: f64 = 1e-6;
pub const EIGEN_ZERO: f64 = 1e-10;

/// Newton iteration on the gradient from each seed, followed by
/// deduplication and Hessian classification.
///
/// Saddles are told apart by energy (the upper saddle is the higher one) and
/// wells by the sign of `y`.
pub fn find_critical_points(
    params: &SystemParams,
    seeds: &[(f64, f64)],
    tol: f64,
) -> Result<CriticalPointSet, PotentialError> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(PotentialError::InvalidParams(format!(
            "Newton tolerance must be positive, got {tol}"
        )));
    }
    if seeds.is_empty() {
        return Err(PotentialError::InvalidParams("no Newton seeds given".into()));
    }

    let mut set = CriticalPointSet::default();
    let mut converged: Vec<(f64, f64)> = Vec::new();
    for &seed in seeds {
        match newton(seed, params, tol) {
            Ok(q) => {
                let dup = converged.iter().any(|p| (p.0 - q.0).hypot(p.1 - q.1) < DEDUP_RADIUS);
                if !dup {
                    converged.push(q);
                }
            }
            Err(f) => set.failures.push(f),
        }
    }

    let mut saddles = Vec::new();
    let mut wells = Vec::new();
    for q in converged {
        let h = eval_hessian(q.0, q.1, params);
        let eig = SymmetricEigen::new(h).eigenvalues;
        let (lo, hi) = if eig[0] <= eig[1] {
            (eig[0], eig[1])
        } else {
            (eig[1], eig[0])
        };
        if lo.abs() < EIGEN_ZERO || hi.abs() < EIGEN_ZERO {
            set.warnings.push(format!(
                "degenerate equilibrium at ({:.6}, {:.6}): eigenvalues {lo:e}, {hi:e}",
                q.0, q.1
            ));
            continue;
        }
        let energy = eval_potential(q.0, q.1, params);
        match (lo < 0.0, hi < 0.0) {
            (true, false) => saddles.push((q, energy, (lo, hi))),
            (false, false) => wells.push((q, energy, (lo, hi))),
            _ => set
                .warnings
                .push(format!("unexpected maximum at ({:.6}, {:.6})", q.0, q.1)),
        }
    }

    saddles.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (i, (q, energy, eig)) in saddles.iter().enumerate() {
        let kind = match i {
            0 => CriticalKind::SaddleUpper,
            1 => CriticalKind::SaddleLower,
            _ => {
                set.warnings.push(format!("extra saddle at ({:.6}, {:.6})", q.0, q.1));
                continue;
            }
        };
        set.points.push(CriticalPoint {
            position: *q,
            energy: *energy,
            kind,
            stability: Stability::SaddleCenter,
            eigenvalues: *eig,
        });
    }

    wells.sort_by(|a, b| b.0 .1.total_cmp(&a.0 .1));
    for (i, (q, energy, eig)) in wells.iter().enumerate() {
        let kind = match i {
            0 => CriticalKind::WellTop,
            1 => CriticalKind::WellBottom,
            _ => {
                set.warnings.push(format!("extra well at ({:.6}, {:.6})", q.0, q.1));
                continue;
            }
        };
        set.points.push(CriticalPoint {
            position: *q,
            energy: *energy,
            kind,
            stability: Stability::Center,
            eigenvalues: *eig,
        });
    }

    set.points.sort_by_key(|p| p.kind as u8);
    Ok(set)
}

fn newton(seed: (f64, f64), params: &SystemParams, tol: f64) -> Result<(f64, f64), SeedFailure> {
    let mut q = Vector2::new(seed.0, seed.1);
    let mut norm = f64::INFINITY;
    for it in 0..=NEWTON_MAX_ITER {
        let (gx, gy) = eval_gradient(q[0], q[1], params);
        norm = gx.hypot(gy);
        if norm < tol {
            return Ok((q[0], q[1]));
        }
        if it == NEWTON_MAX_ITER || !norm.is_finite() {
            break;
        }
        let h = eval_hessian(q[0], q[1], params);
        match h.lu().solve(&Vector2::new(gx, gy)) {
            Some(dq) => q -= dq,
            None => break,
        }
    }
    Err(SeedFailure {
        seed,
        iterations: NEWTON_MAX_ITER,
        gradient_norm: norm,
    })
}

/// Critical points from the default seeds.
pub fn critical_points(params: &SystemParams) -> Result<CriticalPointSet, PotentialError> {
    find_critical_points(params, &DEFAULT_SEEDS, NEWTON_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Well {
    Top,
    Bottom,
}

impl Well {
    pub fn kind(self) -> CriticalKind {
        match self {
            Well::Top => CriticalKind::WellTop,
            Well::Bottom => CriticalKind::WellBottom,
        }
    }
}

/// Energy drop from the upper saddle to the selected well, from an already
/// resolved set of critical points.
pub fn depth_from(set: &CriticalPointSet, which: Well) -> Result<f64, PotentialError> {
    let us = set.require(CriticalKind::SaddleUpper)?;
    let well = set.require(which.kind())?;
    Ok(us.energy - well.energy)
}

pub fn depth(params: &SystemParams, which: Well) -> Result<f64, PotentialError> {
    let set = critical_points(params)?;
    if !set.failures.is_empty() {
        return Err(PotentialError::NewtonFailed(set.failures.len()));
    }
    depth_from(&set, which)
}

/// Rectangular configuration-space domain sampled on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub n_x: usize,
    pub n_y: usize,
}

impl DomainRect {
    pub const DEFAULT_RESOLUTION: usize = 101;

    pub fn new(x: (f64, f64), y: (f64, f64), n_x: usize, n_y: usize) -> Result<Self, PotentialError> {
        let d = Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            n_x,
            n_y,
        };
        d.validate()?;
        Ok(d)
    }

    /// Domain holding the top well, `[0.6, 1.5] x [0, 1.5]`.
    pub fn top_well() -> Self {
        Self {
            x_min: 0.6,
            x_max: 1.5,
            y_min: 0.0,
            y_max: 1.5,
            n_x: Self::DEFAULT_RESOLUTION,
            n_y: Self::DEFAULT_RESOLUTION,
        }
    }

    /// Domain holding the bottom well, `[0.6, 1.5] x [-1.5, 0]`.
    pub fn bottom_well() -> Self {
        Self {
            y_min: -1.5,
            y_max: 0.0,
            ..Self::top_well()
        }
    }

    pub fn for_well(which: Well) -> Self {
        match which {
            Well::Top => Self::top_well(),
            Well::Bottom => Self::bottom_well(),
        }
    }

    pub fn with_resolution(mut self, n_x: usize, n_y: usize) -> Self {
        self.n_x = n_x;
        self.n_y = n_y;
        self
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(PotentialError::InvalidDomain(format!(
                "bounds [{}, {}] x [{}, {}] are not an open rectangle",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.n_x < 2 || self.n_y < 2 {
            return Err(PotentialError::InvalidDomain(format!(
                "grid needs at least 2 points per axis, got {} x {}",
                self.n_x, self.n_y
            )));
        }
        Ok(())
    }

    /// Grid node `(i, j)`, boundaries included.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (
            lerp(self.x_min, self.x_max, i, self.n_x),
            lerp(self.y_min, self.y_max, j, self.n_y),
        )
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// Mean Euclidean norm of the gradient over the nodes of `domain`.
///
/// Node values are computed in parallel and reduced by pairwise summation in
/// a fixed order, so the result does not depend on the thread count.
pub fn flatness(params: &SystemParams, domain: &DomainRect) -> Result<f64, PotentialError> {
    params.validate()?;
    domain.validate()?;
    let n = domain.n_x * domain.n_y;
    let norms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (x, y) = domain.node(k % domain.n_x, k / domain.n_x);
            let (gx, gy) = eval_gradient(x, y, params);
            gx.hypot(gy)
        })
        .collect();
    Ok(pairwise_sum(&norms) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fd_gradient(x: f64, y: f64, p: &SystemParams, h: f64) -> (f64, f64) {
        let dx = (eval_potential(x + h, y, p) - eval_potential(x - h, y, p)) / (2.0 * h);
        let dy = (eval_potential(x, y + h, p) - eval_potential(x, y - h, p)) / (2.0 * h);
        (dx, dy)
    }

    #[test]
    fn potential_values() {
        assert_eq!(eval_potential(0.0, 0.0, &SystemParams::new(0.3)), 0.0);
        assert_abs_diff_eq!(
            eval_potential(1.0, 0.0, &SystemParams::new(0.2)),
            -4.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            eval_potential(1.1071, 0.8799, &SystemParams::new(0.0)),
            -1.9477,
            epsilon = 5e-4
        );
    }

    #[test]
    fn gradient_values() {
        for c in [0.0, 0.2, 0.5] {
            assert_eq!(eval_gradient(0.0, 0.0, &SystemParams::new(c)), (0.0, 0.0));
        }
        let (gx, gy) = eval_gradient(0.9994, 0.0671, &SystemParams::new(0.2));
        assert!(gx.abs() < 1e-3 && gy.abs() < 1e-3, "{gx} {gy}");

        let p = SystemParams::new(0.0);
        let (gx, gy) = eval_gradient(0.5, 0.5, &p);
        let (fx, fy) = fd_gradient(0.5, 0.5, &p, 1e-6);
        assert_abs_diff_eq!(gx, fx, epsilon = 1e-6);
        assert_abs_diff_eq!(gy, fy, epsilon = 1e-6);
    }

    #[test]
    fn hessian_at_origin() {
        let h = eval_hessian(0.0, 0.0, &SystemParams::new(0.0));
        assert_eq!(h, Matrix2::new(-8.0, 0.0, 0.0, 1.0));
        let h = eval_hessian(0.3, -0.7, &SystemParams::new(0.41));
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        let eig = SymmetricEigen::new(eval_hessian(1.1071, 0.8799, &SystemParams::new(0.0)));
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn symmetric_case_table() {
        let set = critical_points(&SystemParams::new(0.0)).unwrap();
        assert!(set.is_complete(), "{set:?}");
        let expect = [
            (CriticalKind::SaddleUpper, 0.0, 0.0, 0.0),
            (CriticalKind::SaddleLower, 1.0, 0.0, -4.0 / 3.0),
            (CriticalKind::WellTop, 1.1071, 0.8799, -1.9477),
            (CriticalKind::WellBottom, 1.1071, -0.8799, -1.9477),
        ];
        for (kind, x, y, v) in expect {
            let p = set.require(kind).unwrap();
            assert_abs_diff_eq!(p.position.0, x, epsilon = 1e-3);
            assert_abs_diff_eq!(p.position.1, y, epsilon = 1e-3);
            assert_abs_diff_eq!(p.energy, v, epsilon = 1e-3);
            let (gx, gy) = eval_gradient(p.position.0, p.position.1, &SystemParams::new(0.0));
            assert!(gx.hypot(gy) < 1e-10);
        }
    }

    #[test]
    fn asymmetric_rows() {
        let set = critical_points(&SystemParams::new(0.2)).unwrap();
        let lower = set.require(CriticalKind::SaddleLower).unwrap();
        assert_abs_diff_eq!(lower.position.0, 0.9994, epsilon = 1e-3);
        assert_abs_diff_eq!(lower.position.1, 0.0671, epsilon = 1e-3);
        assert_abs_diff_eq!(lower.energy, -1.3266, epsilon = 1e-3);
        assert_eq!(lower.stability, Stability::SaddleCenter);

        let set = critical_points(&SystemParams::new(0.4)).unwrap();
        let bw = set.require(CriticalKind::WellBottom).unwrap();
        // Independent root-finder reference: (1.1485151, -0.9425612).
        assert_abs_diff_eq!(bw.position.0, 1.1485151, epsilon = 1e-6);
        assert_abs_diff_eq!(bw.position.1, -0.9431, epsilon = 1e-3);
        assert_abs_diff_eq!(bw.energy, -2.3592, epsilon = 1e-3);
        assert_eq!(bw.stability, Stability::Center);
    }

    #[test]
    fn diverging_seed_is_reported() {
        let set = find_critical_points(&SystemParams::new(0.0), &[(1e200, 1e200), (0.01, 0.0)], 1e-12).unwrap();
        assert_eq!(set.failures.len(), 1);
        assert_eq!(set.points.len(), 1);
        assert!(find_critical_points(&SystemParams::new(0.0), &[], 1e-12).is_err());
        assert!(find_critical_points(&SystemParams::new(0.0), &DEFAULT_SEEDS, 0.0).is_err());
    }

    #[test]
    fn duplicate_seeds_collapse() {
        let seeds = [(0.0, 0.0), (1e-3, -1e-3), (1.0, 0.0)];
        let set = find_critical_points(&SystemParams::new(0.0), &seeds, 1e-12).unwrap();
        assert_eq!(set.points.len(), 2);
    }

    #[test]
    fn depth_values() {
        let p = SystemParams::new(0.0);
        let bottom = depth(&p, Well::Bottom).unwrap();
        assert_abs_diff_eq!(bottom, 1.9477, epsilon = 1e-3);
        assert_abs_diff_eq!(depth(&p, Well::Top).unwrap() - bottom, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            depth(&SystemParams::new(0.2), Well::Bottom).unwrap(),
            2.1481,
            epsilon = 1e-3
        );
    }

    #[test]
    fn flatness_values() {
        let f = flatness(&SystemParams::new(0.0), &DomainRect::top_well()).unwrap();
        assert_abs_diff_eq!(f, 3.24, epsilon = 0.05);
        let g = flatness(&SystemParams::new(0.0), &DomainRect::bottom_well()).unwrap();
        assert!((f - g).abs() < 1e-12);
    }

    #[test]
    fn domain_validation() {
        assert!(DomainRect::new((1.0, 0.0), (0.0, 1.0), 3, 3).is_err());
        assert!(DomainRect::new((0.0, 1.0), (0.0, 1.0), 1, 3).is_err());
        let d = DomainRect::new((0.0, 1.0), (-1.0, 1.0), 2, 5).unwrap();
        assert_eq!(d.node(1, 4), (1.0, 1.0));
        assert_eq!(d.node(0, 2), (0.0, 0.0));
    }

    #[test]
    fn bad_params() {
        let mut p = SystemParams::new(0.1);
        p.m_x = 0.0;
        assert!(p.validate().is_err());
        assert!(SystemParams::new(0.6).validate_sweep_range().is_err());
    }
}
