//! Numerical tolerances shared across modules.

/// Entry and sum tolerance for simplex membership.
pub const SIMPLEX: f64 = 1e-9;
/// Sums within this band of 1 are renormalised on construction.
pub const SIMPLEX_NORMALIZE: f64 = 1e-6;
/// KKT residual tolerance (stationarity, dual feasibility, complementarity).
pub const KKT: f64 = 1e-8;
/// Symmetry tolerance for cost matrices.
pub const SYMMETRY: f64 = 1e-9;
/// Smallest admissible eigenvalue for a PSD cost matrix.
pub const PSD: f64 = 1e-9;
/// Per-entry tolerance when recognising the uniform-averaging matrix.
pub const UNIFORM: f64 = 1e-9;
/// Default Tikhonov regularisation added to the condensed Hessian.
pub const REGULARIZATION: f64 = 1e-9;
/// Membership slack for critical-region inequalities.
pub const REGION: f64 = 1e-9;
/// Minimum Chebyshev radius of a full-dimensional critical region.
pub const REGION_RADIUS: f64 = 1e-9;
/// Distance stepped across a facet when looking for a neighbouring region.
pub const FACET_STEP: f64 = 1e-6;
