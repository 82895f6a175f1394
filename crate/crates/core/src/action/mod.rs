//! The free-period action functional on loops, homotopy fluxes, and the
//! energy thresholds it is compared against.

mod critical;
mod functional;
mod homotopy;
mod loops;

pub use functional::{
    action_gradient, action_sk, action_value, enclosed_flux, kinetic_energy, ActionConvention, ActionGradient,
    ActionReport, TRACKED_COPY_RADIUS,
};
pub use critical::{
    disc_family_tk, estimate_mane, estimate_tau_plus, tau_plus_star, tau_plus_trace, taimanov_tk, CriticalValues,
    ManeEstimate, ManeOptions, Region, TaimanovValue, TauPlusEstimate,
};
pub use homotopy::{flux_of_homotopy, geodesic_homotopy, HOMOTOPY_MESH};
pub use loops::{concatenate, geodesic_lerp, iterate_loop, LoopClass, LoopPath, MIN_POINTS};

use crate::dynamics::DynamicsError;
use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("a loop needs at least 8 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("period must be positive and finite, got {period}")]
    BadPeriod { period: f64 },
    #[error("time fractions must be positive and sum to one")]
    BadFractions,
    #[error("point ({x}, {y}) is not in the upper half-plane")]
    OutsideHalfPlane { x: f64, y: f64 },
    #[error("iterate count must be positive")]
    ZeroIterate,
    #[error("operation requires contractible loops")]
    NotContractible,
    #[error("loops do not share a base point (gap {gap})")]
    BasepointMismatch { gap: f64 },
    #[error("loop reaches distance {distance} from i, beyond the tracked range {allowed}")]
    OutOfRange { distance: f64, allowed: f64 },
    #[error("reference loops must be non-contractible")]
    ContractibleReference,
    #[error("deck isometry does not match word {word}")]
    DeckMismatch { word: String },
    #[error("no reference loop registered for class {class}")]
    NoReference { class: String },
    #[error("reference for class {class} was registered with a different field")]
    ConventionMismatch { class: String },
    #[error("loops in a homotopy must share point count and class")]
    HomotopyShape,
    #[error("homotopy stages are {gap} apart, above the mesh bound {bound}; refine")]
    MeshTooCoarse { gap: f64, bound: f64 },
    #[error("boundary curve intersects itself or another boundary")]
    SelfIntersecting,
    #[error("{0}")]
    Invalid(String),
}
