//! Hamilton's equations for the model, a fixed-step RK4 propagator and
//! event detection (well-entry lines and section crossings).

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::potential::{eval_potential, SystemParams};
use crate::DynamicsError;

/// A point `(x, y, p_x, p_y)` of the four-dimensional phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl PhaseState {
    pub const fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        Self { x, y, px, py }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.px.is_finite() && self.py.is_finite()
    }

    /// Image under `(y, p_y) -> (-y, -p_y)`, the reflection symmetry of the
    /// symmetric surface.
    pub fn mirrored(&self) -> Self {
        Self::new(self.x, -self.y, self.px, -self.py)
    }

    /// Same configuration, momenta negated.
    pub fn time_reversed(&self) -> Self {
        Self::new(self.x, self.y, -self.px, -self.py)
    }

    pub fn components(&self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).components().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Add for PhaseState {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.px + o.px, self.py + o.py)
    }
}

impl Sub for PhaseState {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.px - o.px, self.py - o.py)
    }
}

impl Mul<f64> for PhaseState {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.px * s, self.py * s)
    }
}

impl Neg for PhaseState {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

pub fn hamiltonian(state: &PhaseState, params: &SystemParams) -> f64 {
    state.px * state.px / (2.0 * params.m_x)
        + state.py * state.py / (2.0 * params.m_y)
        + eval_potential(state.x, state.y, params)
}

/// Right-hand side of Hamilton's equations.
#[inline]
pub fn vector_field(s: &PhaseState, params: &SystemParams) -> PhaseState {
    let c = params.c;
    let (x, y) = (s.x, s.y);
    let y2 = y * y;
    PhaseState {
        x: s.px / params.m_x,
        y: s.py / params.m_y,
        px: 8.0 * x * (1.0 - x) + y2 * (2.0 - y2) - c * y,
        py: y * (4.0 * x * (1.0 - y2) - 1.0) - c * x,
    }
}

/// One classical RK4 step. Also returns the field at the start point, which
/// callers reuse for interpolation and quadrature.
#[inline]
pub fn rk4_step_with_slope(s: &PhaseState, params: &SystemParams, h: f64) -> (PhaseState, PhaseState) {
    let k1 = vector_field(s, params);
    let k2 = vector_field(&(*s + k1 * (0.5 * h)), params);
    let k3 = vector_field(&(*s + k2 * (0.5 * h)), params);
    let k4 = vector_field(&(*s + k3 * h), params);
    (*s + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0), k1)
}

#[inline]
pub fn rk4_step(s: &PhaseState, params: &SystemParams, h: f64) -> PhaseState {
    rk4_step_with_slope(s, params, h).0
}

/// Settings of the fixed-step propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: f64,
    /// A trajectory with `|x|` or `|y|` beyond this bound has left the
    /// region of interest; the surface is unbounded below as `x -> -inf`.
    pub escape_radius: f64,
    /// Time tolerance of event bisection.
    pub event_tol: f64,
    /// Keep every `record_stride`-th step in the returned samples; `0` keeps
    /// only the first and last states.
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub const DEFAULT_STEP: f64 = 1e-3;

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(DynamicsError::InvalidInput(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.escape_radius > 0.0) || !(self.event_tol > 0.0) {
            return Err(DynamicsError::InvalidInput(
                "escape radius and event tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn escaped(&self, s: &PhaseState) -> bool {
        s.x.abs() > self.escape_radius || s.y.abs() > self.escape_radius
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: Self::DEFAULT_STEP,
            escape_radius: 10.0,
            event_tol: 1e-10,
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// `y` crosses `threshold`.
    LineCrossingY,
    /// `x` crosses `threshold`.
    SectionCrossingX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    EnteredTop,
    EnteredBottom,
    TimeLimit,
    LeftDomain,
    /// A terminal event without a well label; carries the event index.
    Event(usize),
    /// Stopped after the requested number of recorded events.
    EventLimit,
}

/// What happens when an event fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventAction {
    Terminate(Termination),
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub threshold: f64,
    pub direction: Direction,
    pub momentum_sign: Option<Sign>,
    pub action: EventAction,
}

impl EventSpec {
    /// Entry into the top well: `y` rising through `level`.
    pub fn enter_top(level: f64) -> Self {
        Self {
            kind: EventKind::LineCrossingY,
            threshold: level,
            direction: Direction::Rising,
            momentum_sign: None,
            action: EventAction::Terminate(Termination::EnteredTop),
        }
    }

    /// Entry into the bottom well: `y` falling through `level`.
    pub fn enter_bottom(level: f64) -> Self {
        Self {
            kind: EventKind::LineCrossingY,
            threshold: level,
            direction: Direction::Falling,
            momentum_sign: None,
            action: EventAction::Terminate(Termination::EnteredBottom),
        }
    }

    /// The two well-entry lines `y = +level` and `y = -level`.
    pub fn well_entry(level: f64) -> [Self; 2] {
        [Self::enter_top(level), Self::enter_bottom(-level)]
    }

    /// Crossing of `x = x_section` with `p_x > 0`, recorded without stopping.
    pub fn section(x_section: f64) -> Self {
        Self {
            kind: EventKind::SectionCrossingX,
            threshold: x_section,
            direction: Direction::Rising,
            momentum_sign: Some(Sign::Positive),
            action: EventAction::Record,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.threshold.is_finite() {
            return Err(DynamicsError::InvalidInput("event threshold must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    fn value(&self, s: &PhaseState) -> f64 {
        match self.kind {
            EventKind::LineCrossingY => s.y - self.threshold,
            EventKind::SectionCrossingX => s.x - self.threshold,
        }
    }

    #[inline]
    fn brackets(&self, g0: f64, g1: f64) -> bool {
        match self.direction {
            Direction::Rising => g0 < 0.0 && g1 >= 0.0,
            Direction::Falling => g0 > 0.0 && g1 <= 0.0,
            Direction::Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
        }
    }

    fn momentum_ok(&self, s: &PhaseState) -> bool {
        match self.momentum_sign {
            None => true,
            Some(Sign::Positive) => s.px > 0.0,
            Some(Sign::Negative) => s.px < 0.0,
        }
    }
}

/// A located event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventHit {
    pub event: usize,
    pub time: f64,
    pub state: PhaseState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<(f64, PhaseState)>,
    pub termination: Termination,
    pub termination_time: f64,
    pub events: Vec<EventHit>,
    pub initial_energy: f64,
    pub max_energy_error: f64,
    /// First time at which the energy error exceeded the tolerance.
    pub energy_violation: Option<f64>,
}

impl Trajectory {
    pub fn is_valid(&self) -> bool {
        self.energy_violation.is_none()
    }

    pub fn final_state(&self) -> PhaseState {
        self.samples.last().map(|s| s.1).unwrap_or_default()
    }
}

/// Integrates with the default configuration.
pub fn integrate(
    initial: PhaseState,
    params: &SystemParams,
    t_max: f64,
    events: &[EventSpec],
    energy_tol: f64,
) -> Result<Trajectory, DynamicsError> {
    IntegratorConfig::default().integrate(initial, params, t_max, events, energy_tol)
}

impl IntegratorConfig {
    /// Fixed-step RK4 until `t_max`, the first terminal event or escape.
    pub fn integrate(
        &self,
        initial: PhaseState,
        params: &SystemParams,
        t_max: f64,
        events: &[EventSpec],
        energy_tol: f64,
    ) -> Result<Trajectory, DynamicsError> {
        self.run(initial, params, t_max, events, energy_tol, None)
    }

    /// Successive transversal crossings of `x = x_section` with `p_x > 0`,
    /// up to `n_max` of them. The initial state is never counted.
    pub fn section_crossings(
        &self,
        initial: PhaseState,
        params: &SystemParams,
        x_section: f64,
        t_max: f64,
        n_max: usize,
    ) -> Result<Vec<(f64, f64)>, DynamicsError> {
        if n_max == 0 {
            return Ok(Vec::new());
        }
        let quiet = Self {
            record_stride: 0,
            ..*self
        };
        let traj = quiet.run(
            initial,
            params,
            t_max,
            &[EventSpec::section(x_section)],
            f64::INFINITY,
            Some(n_max),
        )?;
        Ok(traj.events.iter().map(|e| (e.state.y, e.state.py)).collect())
    }

    fn run(
        &self,
        initial: PhaseState,
        params: &SystemParams,
        t_max: f64,
        events: &[EventSpec],
        energy_tol: f64,
        max_records: Option<usize>,
    ) -> Result<Trajectory, DynamicsError> {
        self.validate()?;
        if !(t_max > 0.0) {
            return Err(DynamicsError::InvalidInput(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        if !(energy_tol > 0.0) {
            return Err(DynamicsError::InvalidInput(format!(
                "energy tolerance must be positive, got {energy_tol}"
            )));
        }
        for e in events {
            e.validate()?;
        }
        if !initial.is_finite() {
            return Err(DynamicsError::NonFinite { time: 0.0 });
        }

        let h0 = hamiltonian(&initial, params);
        let mut traj = Trajectory {
            samples: vec![(0.0, initial)],
            termination: Termination::TimeLimit,
            termination_time: t_max,
            events: Vec::new(),
            initial_energy: h0,
            max_energy_error: 0.0,
            energy_violation: None,
        };

        let mut state = initial;
        let mut gvals: Vec<f64> = events.iter().map(|e| e.value(&state)).collect();
        let mut step_index: usize = 0;
        let mut t = 0.0;

        loop {
            if t >= t_max {
                break;
            }
            // Step count rather than accumulated time keeps sample times exact.
            let t_next = ((step_index + 1) as f64 * self.step).min(t_max);
            let h = t_next - t;
            let next = rk4_step(&state, params, h);
            if !next.is_finite() {
                return Err(DynamicsError::NonFinite { time: t_next });
            }

            // Earliest event inside this step.
            let mut first: Option<(usize, f64, PhaseState)> = None;
            for (i, ev) in events.iter().enumerate() {
                let g1 = ev.value(&next);
                if ev.brackets(gvals[i], g1) {
                    let (dt, s) = self.locate(ev, &state, params, h);
                    if ev.momentum_ok(&s) && first.is_none_or(|f| dt < f.1) {
                        first = Some((i, dt, s));
                    }
                }
            }

            if let Some((i, dt, s)) = first {
                let hit = EventHit {
                    event: i,
                    time: t + dt,
                    state: s,
                };
                match events[i].action {
                    EventAction::Terminate(label) => {
                        traj.events.push(hit);
                        self.check_energy(&mut traj, &s, params, hit.time, energy_tol);
                        traj.samples.push((hit.time, s));
                        traj.termination = match label {
                            Termination::Event(_) => Termination::Event(i),
                            other => other,
                        };
                        traj.termination_time = hit.time;
                        return Ok(traj);
                    }
                    EventAction::Record => {
                        traj.events.push(hit);
                        if max_records.is_some_and(|n| traj.events.len() >= n) {
                            traj.samples.push((hit.time, s));
                            traj.termination = Termination::EventLimit;
                            traj.termination_time = hit.time;
                            return Ok(traj);
                        }
                    }
                }
            }

            state = next;
            t = t_next;
            step_index += 1;
            for (g, ev) in gvals.iter_mut().zip(events) {
                *g = ev.value(&state);
            }
            self.check_energy(&mut traj, &state, params, t, energy_tol);

            if self.escaped(&state) {
                traj.samples.push((t, state));
                traj.termination = Termination::LeftDomain;
                traj.termination_time = t;
                return Ok(traj);
            }
            if self.record_stride > 0 && step_index.is_multiple_of(self.record_stride) && t < t_max {
                traj.samples.push((t, state));
            }
        }

        traj.samples.push((t, state));
        traj.termination_time = t;
        Ok(traj)
    }

    fn check_energy(&self, traj: &mut Trajectory, s: &PhaseState, params: &SystemParams, t: f64, tol: f64) {
        let err = (hamiltonian(s, params) - traj.initial_energy).abs();
        if err > traj.max_energy_error {
            traj.max_energy_error = err;
        }
        if err > tol && traj.energy_violation.is_none() {
            traj.energy_violation = Some(t);
        }
    }

    /// Bisection on the sub-step length for the zero of the event function.
    fn locate(&self, ev: &EventSpec, start: &PhaseState, params: &SystemParams, h: f64) -> (f64, PhaseState) {
        let g0 = ev.value(start);
        let (mut lo, mut hi) = (0.0, h);
        let mut s_hi = rk4_step(start, params, h);
        while hi - lo > self.event_tol {
            let mid = 0.5 * (lo + hi);
            let s_mid = rk4_step(start, params, mid);
            let g_mid = ev.value(&s_mid);
            if (g_mid < 0.0) == (g0 < 0.0) && g_mid != 0.0 {
                lo = mid;
            } else {
                hi = mid;
                s_hi = s_mid;
            }
        }
        (hi, s_hi)
    }
}

/// Section crossings with the default configuration at `x = 0.05`.
pub fn section_crossings(
    initial: PhaseState,
    params: &SystemParams,
    t_max: f64,
    n_max: usize,
) -> Result<Vec<(f64, f64)>, DynamicsError> {
    IntegratorConfig::default().section_crossings(initial, params, crate::descriptors::SECTION_X, t_max, n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::eval_gradient;
    use approx::assert_abs_diff_eq;

    #[test]
    fn energy_examples() {
        assert_eq!(hamiltonian(&PhaseState::default(), &SystemParams::new(0.0)), 0.0);
        assert_abs_diff_eq!(
            hamiltonian(&PhaseState::new(1.0, 0.0, 0.0, 0.0), &SystemParams::new(0.4)),
            -4.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hamiltonian(&PhaseState::new(0.05, 0.0, 0.46833, 0.0), &SystemParams::new(0.0)),
            0.1,
            epsilon = 1e-4
        );
    }

    #[test]
    fn field_examples() {
        for c in [0.0, 0.3] {
            assert_eq!(
                vector_field(&PhaseState::default(), &SystemParams::new(c)),
                PhaseState::default()
            );
        }
        let v = vector_field(&PhaseState::new(1.0, 0.0, 0.0, 0.0), &SystemParams::new(0.3));
        assert_eq!(v.x, 0.0);
        assert_eq!(v.y, 0.0);
        assert_eq!(v.px, 0.0);
        assert_abs_diff_eq!(v.py, -0.3, epsilon = 1e-15);
    }

    #[test]
    fn field_matches_gradient() {
        let p = SystemParams::new(0.2);
        let s = PhaseState::new(0.37, -0.81, 0.12, -0.44);
        let v = vector_field(&s, &p);
        let (gx, gy) = eval_gradient(s.x, s.y, &p);
        assert_abs_diff_eq!(v.x, s.px, epsilon = 1e-14);
        assert_abs_diff_eq!(v.y, s.py, epsilon = 1e-14);
        assert_abs_diff_eq!(v.px, -gx, epsilon = 1e-14);
        assert_abs_diff_eq!(v.py, -gy, epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_stays_put() {
        let traj = integrate(PhaseState::default(), &SystemParams::new(0.0), 10.0, &[], 1e-9).unwrap();
        assert_eq!(traj.termination, Termination::TimeLimit);
        assert!(traj
            .samples
            .iter()
            .all(|(_, s)| s.distance(&PhaseState::default()) < 1e-12));
        let times: Vec<f64> = traj.samples.iter().map(|s| s.0).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_abs_diff_eq!(*times.last().unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn event_location_is_tight() {
        let p = SystemParams::new(0.0);
        let s0 = PhaseState::new(0.0, 0.1, 0.3, 0.4);
        let ev = [EventSpec::enter_top(0.3)];
        let traj = integrate(s0, &p, 5.0, &ev, 1e-6).unwrap();
        assert_eq!(traj.termination, Termination::EnteredTop);
        let hit = traj.events[0];
        assert!((hit.state.y - 0.3).abs() < 1e-9, "{}", hit.state.y);
        assert_eq!(traj.termination_time, hit.time);
    }

    #[test]
    fn escape_is_reported() {
        let p = SystemParams::new(0.0);
        let traj = integrate(PhaseState::new(-0.5, 0.0, -1.0, 0.0), &p, 100.0, &[], 1e-3).unwrap();
        assert_eq!(traj.termination, Termination::LeftDomain);
        assert!(traj.termination_time < 100.0);
    }

    #[test]
    fn energy_violation_flagged() {
        let p = SystemParams::new(0.0);
        let cfg = IntegratorConfig::default().with_step(0.2);
        let traj = cfg
            .integrate(PhaseState::new(0.9, 0.6, 0.0, 0.8), &p, 20.0, &[], 1e-12)
            .unwrap();
        assert!(!traj.is_valid());
        assert!(traj.energy_violation.unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let p = SystemParams::new(0.0);
        assert!(integrate(PhaseState::default(), &p, 0.0, &[], 1e-9).is_err());
        assert!(integrate(PhaseState::default(), &p, 1.0, &[], 0.0).is_err());
        assert!(matches!(
            integrate(PhaseState::new(f64::NAN, 0.0, 0.0, 0.0), &p, 1.0, &[], 1.0),
            Err(DynamicsError::NonFinite { .. })
        ));
    }

    #[test]
    fn first_crossing_is_a_return() {
        let p = SystemParams::new(0.0);
        // On the section, heading into the well region.
        let s = PhaseState::new(0.05, 0.0, 0.46833, 0.0);
        let xs = section_crossings(s, &p, 50.0, 3).unwrap();
        for (y, py) in &xs {
            assert!(y.is_finite() && py.is_finite());
        }
        // Heading out of the entrance channel: never comes back.
        let out = section_crossings(PhaseState::new(0.05, 0.0, -0.5, 0.0), &p, 50.0, 3).unwrap();
        assert!(out.is_empty());
    }
}
