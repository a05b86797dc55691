//! Phase-space analysis of a two degree-of-freedom Hamiltonian system on an
//! asymmetric valley-ridge-inflection potential energy surface.
//!
//! The crate is organised bottom-up:
//!
//! - [`potential`]: the surface, its derivatives, critical points, depth and
//!   flatness.
//! - [`dynamics`]: Hamilton's equations, a fixed-step RK4 propagator with
//!   event location.
//! - [`descriptors`]: p-norm Lagrangian descriptors on the Poincaré section.
//! - [`manifolds`]: ridge extraction of invariant manifolds from descriptor
//!   gradients, lobes and their areas.
//! - [`experiments`]: branching-ratio runs, parameter sweeps and polynomial
//!   fits.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptors;
pub mod dynamics;
pub mod experiments;
pub mod manifolds;
pub mod numerics;
pub mod potential;

mod error;

pub use descriptors::{
    compute_field, compute_field_with, ld_point, lift_to_phase_space, FieldPart, LdConfig, LdField, LdValue,
    NodeStatus, SectionSpec,
};
pub use dynamics::{
    hamiltonian, integrate, section_crossings, vector_field, EventSpec, IntegratorConfig, PhaseState, Termination,
    Trajectory,
};
pub use error::{DescriptorError, DynamicsError, ExperimentError, ManifoldError, PotentialError};
pub use experiments::{
    branching_run, fit_polynomial, fit_scaling_laws, sweep, BranchingConfig, BranchingResult, FitResult, Quantity,
    SweepConfig, SweepTable,
};
pub use manifolds::{
    extract_manifolds, identify_lobes, polygon_area, LobePair, LobeRegion, ManifoldCurve, ManifoldKind,
};
pub use potential::{
    critical_points, depth, eval_gradient, eval_hessian, eval_potential, find_critical_points, flatness, CriticalKind,
    CriticalPoint, DomainRect, Stability, SystemParams, Well,
};
