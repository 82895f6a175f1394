//! The magnetic flow: field models, ODE integration, closed-orbit
//! detection, small-orbit asymptotics, and the Liouville action.

mod flow;
mod orbits;
mod system;

pub use flow::{
    closure_check, closure_check_with, integrate, integrate_sampled, ode_rhs, Closure, ClosureOptions, FlowIntegrator,
    FlowState, Trajectory,
};
pub use orbits::{
    circle_state, closed_orbit, constant_field_circle, liouville_action, small_circle_radius, small_orbit_liouville,
    small_orbit_period, CircleOrbit, LiouvilleReport, SmallOrbitReport,
};
pub use system::{
    bump_phi, bump_phi_prime, octagon_inradius, BumpParams, BumpProfile, FieldKind, MagneticSystem, TurnConvention,
    EULER_CHARACTERISTIC, SURFACE_AREA,
};

use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("bump support reaches distance {reach} from the octagon center, beyond the inradius {inradius}")]
    BumpOutsideDomain { reach: f64, inradius: f64 },
    #[error("oscillating field has non-positive total flux {flux}")]
    NonPositiveFlux { flux: f64 },
    #[error("integration left the half-plane at t = {time}; the step is too large")]
    LeftHalfPlane { time: f64 },
    #[error("no small closed orbit at k = {k}")]
    NoSmallOrbit { k: f64 },
    #[error("orbit is not closed (endpoint gap {gap})")]
    OpenOrbit { gap: f64 },
    #[error("{0}")]
    Format(String),
}
