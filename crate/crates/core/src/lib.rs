//! Routing games on parallel networks, posed as simplex-constrained
//! finite-horizon LQR problems and solved exactly with explicit MPC.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: simplex vectors, affine latencies, Nash equilibria and the
//!   quadratic cost objects (Rosenthal potential, social welfare).
//! - [`dynamics`]: the flow update `x' = γ A x + (1-γ) B u` with
//!   left-stochastic `A`, `B`, plus the closed-form special cases.
//! - [`qp`]: condensing the horizon problem into a parametric QP, a dense
//!   active-set solver, and the unconstrained Riccati baseline.
//! - [`mpqp`]: critical-region enumeration and the explicit piecewise-affine
//!   control law.
//! - [`simulate`]: closed-loop rollouts, mirror-descent baseline, regret and
//!   convergence detection.
//! - [`markov_flow`]: line-graph Markov model of link flows on acyclic road
//!   networks.
//! - [`config`] and [`presets`]: the JSON run configuration shared by the CLI
//!   and the browser demo.

pub mod config;
pub mod dynamics;
pub mod format;
pub mod markov_flow;
pub mod mpqp;
pub mod network;
pub mod presets;
pub mod qp;
pub mod simulate;
pub mod tol;

pub use dynamics::{GameDynamics, StochasticMatrix};
pub use mpqp::{CriticalRegion, PwaControlLaw};
pub use network::{AffineLatency, CostKind, ParallelNetwork, QuadraticCostSpec, SimplexVector};
pub use qp::{CondensedQp, HorizonProblem, QpSolution};
pub use simulate::Trajectory;
