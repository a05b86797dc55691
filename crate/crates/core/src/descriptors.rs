//! p-norm Lagrangian descriptors on the Poincaré section
//! `x = 0.05, p_x > 0` of the energy shell `H = H0`.
//!
//! For an initial condition the descriptor accumulates `sum_k |v_k|^p` along
//! the trajectory over `[-tau, tau]`, split into a backward part (unstable
//! manifolds show up as its singular features) and a forward part (stable
//! manifolds).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{vector_field, IntegratorConfig, PhaseState};
use crate::numerics::linspace;
use crate::potential::{eval_potential, SystemParams};
use crate::DescriptorError;

/// Abscissa of the Poincaré section.
pub const SECTION_X: f64 = 0.05;
pub const DEFAULT_TAU: f64 = 8.0;
pub const DEFAULT_P: f64 = 0.5;

/// Grid on the section, in `(y, p_y)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub x_section: f64,
    pub h0: f64,
    pub y_range: (f64, f64),
    pub py_range: (f64, f64),
    pub n_y: usize,
    pub n_p: usize,
}

impl Default for SectionSpec {
    fn default() -> Self {
        Self {
            x_section: SECTION_X,
            h0: SystemParams::DEFAULT_ENERGY,
            y_range: (-1.2, 1.2),
            py_range: (-0.7, 0.7),
            n_y: 600,
            n_p: 600,
        }
    }
}

impl SectionSpec {
    pub fn with_grid(mut self, n_y: usize, n_p: usize) -> Self {
        self.n_y = n_y;
        self.n_p = n_p;
        self
    }

    pub fn with_ranges(mut self, y: (f64, f64), py: (f64, f64)) -> Self {
        self.y_range = y;
        self.py_range = py;
        self
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.n_y < 2 || self.n_p < 2 {
            return Err(DescriptorError::InvalidSection(format!(
                "grid needs at least 2 nodes per axis, got {} x {}",
                self.n_y, self.n_p
            )));
        }
        let vals = [
            self.x_section,
            self.h0,
            self.y_range.0,
            self.y_range.1,
            self.py_range.0,
            self.py_range.1,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::InvalidSection("non-finite section bounds".into()));
        }
        if self.y_range.0 >= self.y_range.1 || self.py_range.0 >= self.py_range.1 {
            return Err(DescriptorError::InvalidSection("empty section ranges".into()));
        }
        Ok(())
    }

    pub fn ys(&self) -> Vec<f64> {
        linspace(self.y_range.0, self.y_range.1, self.n_y)
    }

    pub fn pys(&self) -> Vec<f64> {
        linspace(self.py_range.0, self.py_range.1, self.n_p)
    }

    pub fn dy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / (self.n_y - 1) as f64
    }

    pub fn dpy(&self) -> f64 {
        (self.py_range.1 - self.py_range.0) / (self.n_p - 1) as f64
    }

    /// The same section at twice the resolution; every node of `self` is a
    /// node of the refined grid.
    pub fn refined(&self) -> Self {
        Self {
            n_y: 2 * self.n_y - 1,
            n_p: 2 * self.n_p - 1,
            ..*self
        }
    }
}

/// Lifts a section point to phase space, choosing the positive root for
/// `p_x`. Returns `None` where the energy shell does not reach the node.
pub fn lift_to_phase_space(y: f64, py: f64, section: &SectionSpec, params: &SystemParams) -> Option<PhaseState> {
    let x = section.x_section;
    let radicand = 2.0 * params.m_x * (section.h0 - eval_potential(x, y, params) - py * py / (2.0 * params.m_y));
    if radicand > 0.0 {
        Some(PhaseState::new(x, y, radicand.sqrt(), py))
    } else {
        None
    }
}

/// Descriptor settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdConfig {
    pub tau: f64,
    pub p_exponent: f64,
    pub integrator: IntegratorConfig,
}

impl Default for LdConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            p_exponent: DEFAULT_P,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl LdConfig {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(DescriptorError::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.p_exponent > 0.0 && self.p_exponent <= 1.0) {
            return Err(DescriptorError::InvalidConfig(format!(
                "p must lie in (0, 1], got {}",
                self.p_exponent
            )));
        }
        self.integrator
            .validate()
            .map_err(|e| DescriptorError::InvalidConfig(e.to_string()))
    }
}

/// Descriptor value at one initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdValue {
    pub forward: f64,
    pub backward: f64,
    pub total: f64,
    /// The trajectory escaped (or blew up) before reaching `|t| = tau` in at
    /// least one direction; the values are partial.
    pub truncated: bool,
}

#[inline]
fn integrand(v: &PhaseState, p: f64) -> f64 {
    let c = v.components();
    if p == 0.5 {
        c.iter().map(|x| x.abs().sqrt()).sum()
    } else {
        c.iter().map(|x| x.abs().powf(p)).sum()
    }
}

/// One-sided descriptor integral over `[0, tau]` of the forward flow.
///
/// Simpson's rule on every RK4 step; the midpoint state comes from the cubic
/// Hermite interpolant through the step endpoints.
fn half_integral(start: PhaseState, params: &SystemParams, cfg: &LdConfig) -> (f64, bool) {
    let h = cfg.integrator.step;
    let p = cfg.p_exponent;
    let n_steps = (cfg.tau / h - 1e-9).ceil().max(1.0) as usize;
    let mut s0 = start;
    let mut f0 = vector_field(&s0, params);
    let mut acc = 0.0;
    for i in 0..n_steps {
        let t0 = i as f64 * h;
        let hi = if i + 1 == n_steps { cfg.tau - t0 } else { h };
        let k2 = vector_field(&(s0 + f0 * (0.5 * hi)), params);
        let k3 = vector_field(&(s0 + k2 * (0.5 * hi)), params);
        let k4 = vector_field(&(s0 + k3 * hi), params);
        let s1 = s0 + (f0 + (k2 + k3) * 2.0 + k4) * (hi / 6.0);
        let f1 = vector_field(&s1, params);
        let s_mid = (s0 + s1) * 0.5 + (f0 - f1) * (hi / 8.0);
        let fm = vector_field(&s_mid, params);
        let inc = hi / 6.0 * (integrand(&f0, p) + 4.0 * integrand(&fm, p) + integrand(&f1, p));
        if !inc.is_finite() || !s1.is_finite() {
            return (acc, true);
        }
        acc += inc;
        if cfg.integrator.escaped(&s1) {
            return (acc, true);
        }
        s0 = s1;
        f0 = f1;
    }
    (acc, false)
}

/// Descriptor of a single phase-space point under `cfg`.
pub fn ld_point_with(state: &PhaseState, params: &SystemParams, cfg: &LdConfig) -> LdValue {
    let (forward, tf) = half_integral(*state, params, cfg);
    // Backward time is forward time of the momentum-reversed state; |v_k| is
    // unchanged by the reversal.
    let (backward, tb) = half_integral(state.time_reversed(), params, cfg);
    LdValue {
        forward,
        backward,
        total: forward + backward,
        truncated: tf || tb,
    }
}

pub fn ld_point(
    state: &PhaseState,
    params: &SystemParams,
    tau: f64,
    p_exponent: f64,
) -> Result<LdValue, DescriptorError> {
    let cfg = LdConfig {
        tau,
        p_exponent,
        ..LdConfig::default()
    };
    cfg.validate()?;
    Ok(ld_point_with(state, params, &cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeStatus {
    Inaccessible = 0,
    Complete = 1,
    Truncated = 2,
}

impl NodeStatus {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Inaccessible),
            1 => Some(Self::Complete),
            2 => Some(Self::Truncated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldPart {
    Forward,
    Backward,
    Total,
}

/// Everything needed to reproduce a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub section: SectionSpec,
    pub params: SystemParams,
    pub tau: f64,
    pub p_exponent: f64,
    pub step: f64,
    pub escape_radius: f64,
}

/// Descriptor values on the section grid. Arrays are indexed `[[i_p, i_y]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdField {
    pub meta: FieldMeta,
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
    pub total: Array2<f64>,
    pub status: Array2<NodeStatus>,
}

impl LdField {
    /// Assembles a field from precomputed parts; `total` is their sum.
    pub fn from_parts(
        meta: FieldMeta,
        forward: Array2<f64>,
        backward: Array2<f64>,
        status: Array2<NodeStatus>,
    ) -> Result<Self, DescriptorError> {
        let dim = (meta.section.n_p, meta.section.n_y);
        if forward.dim() != dim || backward.dim() != dim || status.dim() != dim {
            return Err(DescriptorError::InvalidConfig(format!(
                "array shapes must be {dim:?} to match the section grid"
            )));
        }
        let total = &forward + &backward;
        Ok(Self {
            meta,
            forward,
            backward,
            total,
            status,
        })
    }

    pub fn part(&self, part: FieldPart) -> &Array2<f64> {
        match part {
            FieldPart::Forward => &self.forward,
            FieldPart::Backward => &self.backward,
            FieldPart::Total => &self.total,
        }
    }

    pub fn section(&self) -> &SectionSpec {
        &self.meta.section
    }

    pub fn is_usable(&self, ip: usize, iy: usize) -> bool {
        self.status[[ip, iy]] == NodeStatus::Complete
    }

    pub fn count(&self, status: NodeStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }

    /// Section coordinates `(y, p_y)` of node `[[ip, iy]]`.
    pub fn coords(&self, ip: usize, iy: usize) -> (f64, f64) {
        let s = &self.meta.section;
        (grid_coord(s.y_range, iy, s.n_y), grid_coord(s.py_range, ip, s.n_p))
    }
}

fn grid_coord(range: (f64, f64), i: usize, n: usize) -> f64 {
    if i + 1 == n {
        range.1
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
    }
}

/// Evaluates the descriptor at every accessible node of `section`.
///
/// Nodes are independent; the result does not depend on evaluation order or
/// the size of the worker pool.
pub fn compute_field_with(
    section: &SectionSpec,
    params: &SystemParams,
    cfg: &LdConfig,
) -> Result<LdField, DescriptorError> {
    section.validate()?;
    cfg.validate()?;
    params
        .validate()
        .map_err(|e| DescriptorError::InvalidConfig(e.to_string()))?;
    let ys = section.ys();
    let pys = section.pys();
    let (n_y, n_p) = (section.n_y, section.n_p);

    let values: Vec<(f64, f64, NodeStatus)> = (0..n_y * n_p)
        .into_par_iter()
        .map(|k| {
            let (ip, iy) = (k / n_y, k % n_y);
            match lift_to_phase_space(ys[iy], pys[ip], section, params) {
                None => (0.0, 0.0, NodeStatus::Inaccessible),
                Some(state) => {
                    let v = ld_point_with(&state, params, cfg);
                    let status = if v.truncated {
                        NodeStatus::Truncated
                    } else {
                        NodeStatus::Complete
                    };
                    (v.forward, v.backward, status)
                }
            }
        })
        .collect();

    let forward = Array2::from_shape_fn((n_p, n_y), |(i, j)| values[i * n_y + j].0);
    let backward = Array2::from_shape_fn((n_p, n_y), |(i, j)| values[i * n_y + j].1);
    let total = &forward + &backward;
    let status = Array2::from_shape_fn((n_p, n_y), |(i, j)| values[i * n_y + j].2);
    Ok(LdField {
        meta: FieldMeta {
            section: *section,
            params: *params,
            tau: cfg.tau,
            p_exponent: cfg.p_exponent,
            step: cfg.integrator.step,
            escape_radius: cfg.integrator.escape_radius,
        },
        forward,
        backward,
        total,
        status,
    })
}

pub fn compute_field(section: &SectionSpec, params: &SystemParams, tau: f64) -> Result<LdField, DescriptorError> {
    compute_field_with(section, params, &LdConfig::default().with_tau(tau))
}

const BINARY_MAGIC: &[u8; 8] = b"VRILDF1\n";

impl LdField {
    /// Binary dump: an 8-byte magic line, one line of JSON metadata, then the
    /// forward, backward and total arrays as little-endian `f64` in row-major
    /// `[[i_p, i_y]]` order, then one status byte per node.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<(), DescriptorError> {
        let mut w = BufWriter::new(w);
        w.write_all(BINARY_MAGIC)?;
        serde_json::to_writer(&mut w, &self.meta)?;
        w.write_all(b"\n")?;
        for arr in [&self.forward, &self.backward, &self.total] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let bytes: Vec<u8> = self.status.iter().map(|s| *s as u8).collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self, DescriptorError> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(DescriptorError::Format("bad magic".into()));
        }
        let mut header = String::new();
        r.read_line(&mut header)?;
        let meta: FieldMeta = serde_json::from_str(header.trim_end())?;
        meta.section.validate()?;
        let (n_p, n_y) = (meta.section.n_p, meta.section.n_y);
        let n = n_p * n_y;
        let read_array = |r: &mut BufReader<R>| -> Result<Array2<f64>, DescriptorError> {
            let mut buf = vec![0u8; 8 * n];
            r.read_exact(&mut buf)?;
            let vals: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok(Array2::from_shape_vec((n_p, n_y), vals).expect("shape matches header"))
        };
        let forward = read_array(&mut r)?;
        let backward = read_array(&mut r)?;
        let total = read_array(&mut r)?;
        let mut sbuf = vec![0u8; n];
        r.read_exact(&mut sbuf)?;
        let status: Vec<NodeStatus> = sbuf
            .into_iter()
            .map(|b| NodeStatus::from_u8(b).ok_or_else(|| DescriptorError::Format(format!("bad status byte {b}"))))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            meta,
            forward,
            backward,
            total,
            status: Array2::from_shape_vec((n_p, n_y), status).expect("shape matches header"),
        })
    }

    pub fn save_binary(&self, path: &Path) -> Result<(), DescriptorError> {
        self.write_binary(std::fs::File::create(path)?)
    }

    pub fn load_binary(path: &Path) -> Result<Self, DescriptorError> {
        Self::read_binary(std::fs::File::open(path)?)
    }

    /// CSV with columns `y,p_y,forward,backward,total,mask`; `mask` is 0 for
    /// inaccessible, 1 for complete and 2 for truncated nodes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DescriptorError> {
        let mut w = BufWriter::new(w);
        writeln!(w, "y,p_y,forward,backward,total,mask")?;
        let (n_p, n_y) = self.total.dim();
        for ip in 0..n_p {
            for iy in 0..n_y {
                let (y, py) = self.coords(ip, iy);
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    y,
                    py,
                    self.forward[[ip, iy]],
                    self.backward[[ip, iy]],
                    self.total[[ip, iy]],
                    self.status[[ip, iy]] as u8
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lift_examples() {
        let p = SystemParams::new(0.0);
        let sec = SectionSpec::default();
        let s = lift_to_phase_space(0.0, 0.0, &sec, &p).unwrap();
        assert_abs_diff_eq!(s.px, 0.46833, epsilon = 1e-5);
        assert_eq!(s.x, SECTION_X);
        // Radicand exactly zero.
        let v = eval_potential(SECTION_X, 0.0, &p);
        let edge = SectionSpec { h0: v, ..sec };
        assert!(lift_to_phase_space(0.0, 0.0, &edge, &p).is_none());
        assert!(lift_to_phase_space(1.0, 0.0, &sec, &p).is_none());
    }

    #[test]
    fn equilibrium_has_zero_descriptor() {
        let v = ld_point(&PhaseState::default(), &SystemParams::new(0.0), 2.0, 0.5).unwrap();
        assert_eq!((v.forward, v.backward, v.total), (0.0, 0.0, 0.0));
        assert!(!v.truncated);
    }

    #[test]
    fn descriptor_is_time_independent() {
        let p = SystemParams::new(0.2);
        let s = lift_to_phase_space(0.1, -0.2, &SectionSpec::default(), &p).unwrap();
        let a = ld_point(&s, &p, 3.0, 0.5).unwrap();
        let b = ld_point(&s, &p, 3.0, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_exponent() {
        let s = PhaseState::default();
        let p = SystemParams::new(0.0);
        assert!(ld_point(&s, &p, 1.0, 0.0).is_err());
        assert!(ld_point(&s, &p, 1.0, 1.5).is_err());
        assert!(ld_point(&s, &p, -1.0, 0.5).is_err());
    }

    #[test]
    fn general_exponent_matches_sqrt_path() {
        let p = SystemParams::new(0.1);
        let s = lift_to_phase_space(0.2, 0.1, &SectionSpec::default(), &p).unwrap();
        let a = ld_point(&s, &p, 1.0, 0.5).unwrap();
        let b = ld_point(&s, &p, 1.0, 0.5 + 1e-12).unwrap();
        assert_abs_diff_eq!(a.total, b.total, epsilon = 1e-8);
    }

    #[test]
    fn binary_and_csv_output() {
        let sec = SectionSpec::default().with_grid(5, 4);
        let field = compute_field(&sec, &SystemParams::new(0.1), 0.5).unwrap();
        let mut buf = Vec::new();
        field.write_binary(&mut buf).unwrap();
        let back = LdField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, field);
        assert!(LdField::read_binary(&b"garbage\n"[..]).is_err());

        let mut csv = Vec::new();
        field.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("y,p_y,forward,backward,total,mask\n"));
        assert_eq!(text.lines().count(), 1 + 20);
    }

    #[test]
    fn refined_grid_contains_nodes() {
        let s = SectionSpec::default().with_grid(11, 7);
        let r = s.refined();
        let (a, b) = (s.ys(), r.ys());
        for (i, y) in a.iter().enumerate() {
            assert_abs_diff_eq!(*y, b[2 * i], epsilon = 1e-15);
        }
    }
}
