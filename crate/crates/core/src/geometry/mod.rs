//! Hyperbolic-plane model, isometries, and the genus-2 octagon group.

mod fuchsian;
mod hyperbolic;

pub use fuchsian::{
    disk_to_half_plane, half_plane_to_disk, octagon_group, FuchsianGenus2, Isometry, Word, RELATOR_TOL,
};
pub use hyperbolic::{
    cosh_distance, hyperbolic_distance, inv_log_mean, inv_log_mean_grad, metric_inner, metric_norm,
    parallel_transport, rotate90, segment_length, theta_primitive, to_disk_at, Covector, HPoint, TangentVec,
};

use crate::dynamics::MagneticSystem;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point ({x}, {y}) is not in the upper half-plane")]
    OutsideHalfPlane { x: f64, y: f64 },
    #[error("tangent vectors have different base points")]
    BaseMismatch,
    #[error("matrix with determinant {det} is not an orientation-preserving isometry")]
    NotAnIsometry { det: f64 },
    #[error("octagon relator residual {residual:e} exceeds tolerance")]
    RelatorResidual { residual: f64 },
    #[error("side pairing with |trace| = {trace} is not hyperbolic")]
    NotHyperbolic { trace: f64 },
    #[error("reduction to the fundamental domain did not finish in {steps} steps")]
    ReductionCap { steps: usize },
}

/// Density `f` of the magnetic form `σ = f·μ` at `p`.
pub fn sigma_density(p: HPoint, sys: &MagneticSystem) -> f64 {
    sys.density(p)
}
