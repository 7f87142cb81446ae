//! Closed-loop rollouts, the mirror-descent baseline and trajectory metrics.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::format::sig12;
use crate::mpqp::{lookup, planar, MpqpError, PwaControlLaw};
use crate::network::{NetworkError, ParallelNetwork, SimplexVector};
use crate::qp::{solve_qp, HorizonProblem, QpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Mpqp(#[from] MpqpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("trajectory has no decision rounds")]
    EmptyTrajectory,
    #[error("initial flow has a zero entry at edge {0}")]
    ZeroEntry(usize),
    #[error("invalid learning rate: {0}")]
    InvalidLearner(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Recorded rollout: `T + 1` states, `T` controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<SimplexVector>,
    pub controls: Vec<SimplexVector>,
    /// Latency at each state.
    pub latencies: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub converged_at: Option<usize>,
}

/// How the controls are computed.
#[derive(Debug, Clone, Copy)]
pub enum ClosedLoopMode<'a> {
    /// Solve the horizon QP at every state and apply the first control.
    RecedingHorizon,
    /// Evaluate a precomputed explicit law.
    ExplicitLaw(&'a PwaControlLaw),
    /// Solve once at `x_0` and apply the whole plan.
    OpenLoopOptimal,
}

/// Runs `T = hp.horizon()` steps from `x0`. Latencies are evaluated on `net`.
pub fn run_closed_loop(
    hp: &HorizonProblem,
    net: &ParallelNetwork,
    x0: &SimplexVector,
    mode: ClosedLoopMode<'_>,
) -> Result<Trajectory, SimulateError> {
    let n = hp.num_edges();
    for got in [x0.dim(), net.num_edges()] {
        if got != n {
            return Err(SimulateError::DimensionMismatch { expected: n, got });
        }
    }
    let steps = hp.horizon();
    let qp = match mode {
        ClosedLoopMode::ExplicitLaw(_) => None,
        _ => Some(hp.condense()?),
    };
    let plan = match mode {
        ClosedLoopMode::OpenLoopOptimal => {
            let qp = qp.as_ref().expect("condensed above");
            let sol = solve_qp(qp, x0)?;
            Some(qp.controls(&sol.z))
        }
        _ => None,
    };

    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = &states[t];
        let u = match mode {
            ClosedLoopMode::RecedingHorizon => {
                let qp = qp.as_ref().expect("condensed above");
                let sol = solve_qp(qp, x)?;
                SimplexVector::from_dvector(sol.z.rows(0, n).into_owned())?
            }
            ClosedLoopMode::ExplicitLaw(law) => lookup(law, x)?.1,
            ClosedLoopMode::OpenLoopOptimal => SimplexVector::from_dvector(plan.as_ref().expect("planned above")[t].clone())?,
        };
        let next = hp.dynamics().step(x, &u)?;
        controls.push(u);
        states.push(next);
    }

    let cost = hp.cost();
    let stage_costs = states
        .iter()
        .zip(&controls)
        .map(|(x, u)| cost.state_cost(x.as_vector()) + cost.control_cost(u.as_vector()))
        .collect();
    let terminal_cost = cost.terminal_cost(states.last().unwrap().as_vector());
    let latencies = states.iter().map(|x| net.latencies_unchecked(x.as_slice()).iter().copied().collect()).collect();
    Ok(Trajectory { states, controls, latencies, stage_costs, terminal_cost, converged_at: None })
}

/// Step size of the mirror-descent learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// `η_t = η / √(t + 1)`.
    InverseSqrt(f64),
}

/// Mirror descent with the negative-entropy mirror map (multiplicative
/// weights).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    rate: LearningRate,
}

impl LearnerConfig {
    pub fn new(rate: LearningRate) -> Result<Self, SimulateError> {
        let eta = match rate {
            LearningRate::Constant(e) | LearningRate::InverseSqrt(e) => e,
        };
        if !eta.is_finite() || eta < 0.0 {
            return Err(SimulateError::InvalidLearner(format!("eta = {eta} must be finite and nonnegative")));
        }
        Ok(Self { rate })
    }

    pub fn constant(eta: f64) -> Self {
        Self::new(LearningRate::Constant(eta)).expect("valid constant rate")
    }

    pub fn rate(&self) -> LearningRate {
        self.rate
    }

    pub fn eta_at(&self, t: usize) -> f64 {
        match self.rate {
            LearningRate::Constant(e) => e,
            LearningRate::InverseSqrt(e) => e / ((t + 1) as f64).sqrt(),
        }
    }
}

/// `f_{t+1,e} ∝ f_{t,e} exp(-η_t l_e(f_t))` for `steps` rounds. Controls hold
/// the next flow; stage costs hold the Rosenthal potential of each state.
pub fn run_mirror_descent(
    net: &ParallelNetwork,
    learner: &LearnerConfig,
    x0: &SimplexVector,
    steps: usize,
) -> Result<Trajectory, SimulateError> {
    let n = net.num_edges();
    if x0.dim() != n {
        return Err(SimulateError::DimensionMismatch { expected: n, got: x0.dim() });
    }
    if let Some(e) = x0.as_slice().iter().position(|&v| v <= 0.0) {
        return Err(SimulateError::ZeroEntry(e));
    }
    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(steps);
    for t in 0..steps {
        let f = states[t].as_vector();
        let l = net.latencies_unchecked(f.as_slice());
        let eta = learner.eta_at(t);
        // Shift by the smallest latency so the weights stay in range.
        let lmin = l.min();
        let w = DVector::from_fn(n, |e, _| f[e] * (-eta * (l[e] - lmin)).exp());
        let next = SimplexVector::from_dvector(&w / w.sum())?;
        controls.push(next.clone());
        states.push(next);
    }
    let stage_costs = states[..steps].iter().map(|x| net.potential_unchecked(x.as_slice())).collect();
    let terminal_cost = net.potential_unchecked(states[steps].as_slice());
    let latencies = states.iter().map(|x| net.latencies_unchecked(x.as_slice()).iter().copied().collect()).collect();
    Ok(Trajectory { states, controls, latencies, stage_costs, terminal_cost, converged_at: None })
}

/// `Σ_t f_tᵀ l_t − min_e Σ_t l_{t,e}` over the decision rounds `t < T`.
pub fn cumulative_regret(traj: &Trajectory, net: &ParallelNetwork) -> Result<f64, SimulateError> {
    let rounds = traj.controls.len();
    if rounds == 0 {
        return Err(SimulateError::EmptyTrajectory);
    }
    let n = net.num_edges();
    let mut incurred = 0.0;
    let mut summed = DVector::zeros(n);
    for x in &traj.states[..rounds] {
        let l = net.latencies_unchecked(x.as_slice());
        incurred += x.as_vector().dot(&l);
        summed += l;
    }
    Ok(incurred - summed.min())
}

/// First `t` with `t + window ≤ T` such that every state in `(t, t + window]`
/// is within `tol` of `x_t` in the max norm.
pub fn detect_convergence(states: &[SimplexVector], tol: f64, window: usize) -> Option<usize> {
    assert!(tol > 0.0 && window >= 1, "tol must be positive and window at least 1");
    (0..states.len()).find(|&t| {
        t + window < states.len() && (t + 1..=t + window).all(|s| states[s].distance_inf(&states[t]) <= tol)
    })
}

/// End-of-run figures written next to the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steady_state: Vec<f64>,
    pub converged_at: Option<usize>,
    pub final_potential: f64,
    pub regret: f64,
    pub total_cost: f64,
    pub steps: usize,
}

impl Trajectory {
    /// Sets `converged_at` from [`detect_convergence`].
    pub fn with_convergence(mut self, tol: f64, window: usize) -> Self {
        self.converged_at = detect_convergence(&self.states, tol, window);
        self
    }

    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum::<f64>() + self.terminal_cost
    }

    pub fn summary(&self, net: &ParallelNetwork) -> Result<RunSummary, SimulateError> {
        let last = self.states.last().expect("trajectory has an initial state");
        Ok(RunSummary {
            steady_state: last.to_vec(),
            converged_at: self.converged_at,
            final_potential: net.rosenthal_potential(last)?,
            regret: cumulative_regret(self, net)?,
            total_cost: self.total_cost(),
            steps: self.controls.len(),
        })
    }

    /// One row per state: `t, x_1..x_n, u_1..u_n, l_1..l_n, stage_cost`, plus
    /// planar coordinates `px, py` of the state when `n = 3`. The last row has
    /// empty controls and the terminal cost.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].dim();
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "u", "l"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        header.push("stage_cost".into());
        if n == 3 {
            header.extend(["px".into(), "py".into()]);
        }
        let mut out = header.join(",") + "\n";
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.as_slice().iter().map(|&v| sig12(v)));
            match self.controls.get(t) {
                Some(u) => row.extend(u.as_slice().iter().map(|&v| sig12(v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            row.extend(self.latencies[t].iter().map(|&v| sig12(v)));
            row.push(sig12(self.stage_costs.get(t).copied().unwrap_or(self.terminal_cost)));
            if n == 3 {
                row.extend(planar(x.as_slice()).map(sig12));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sv(v: &[f64]) -> SimplexVector {
        SimplexVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn convergence_detection() {
        let constant = vec![sv(&[0.5, 0.5]); 5];
        assert_eq!(detect_convergence(&constant, 1e-3, 3), Some(0));
        let moving: Vec<_> = (0..6).map(|t| sv(&[0.1 * t as f64, 1.0 - 0.1 * t as f64])).collect();
        assert_eq!(detect_convergence(&moving, 1e-3, 1), None);
        let settle = vec![sv(&[1.0, 0.0]), sv(&[0.5, 0.5]), sv(&[0.5, 0.5]), sv(&[0.5, 0.5])];
        assert_eq!(detect_convergence(&settle, 1e-3, 2), Some(1));
        assert_eq!(detect_convergence(&settle, 1e-3, 3), None);
    }

    #[test]
    fn mirror_descent_examples() {
        let sym = ParallelNetwork::linear(&[1.0, 1.0, 1.0]).unwrap();
        let x0 = SimplexVector::uniform(3);
        let traj = run_mirror_descent(&sym, &LearnerConfig::constant(0.5), &x0, 20).unwrap();
        assert!(traj.states.iter().all(|x| x.distance_inf(&x0) < 1e-15));
        assert_abs_diff_eq!(cumulative_regret(&traj, &sym).unwrap(), 0.0, epsilon = 1e-12);

        let frozen = run_mirror_descent(&sym, &LearnerConfig::constant(0.0), &sv(&[0.2, 0.3, 0.5]), 5).unwrap();
        assert!(frozen.states.iter().all(|x| x.as_slice() == [0.2, 0.3, 0.5]));

        assert!(matches!(
            run_mirror_descent(&sym, &LearnerConfig::constant(0.1), &sv(&[0.0, 0.5, 0.5]), 3),
            Err(SimulateError::ZeroEntry(0))
        ));
        assert!(LearnerConfig::new(LearningRate::Constant(-1.0)).is_err());
    }

    #[test]
    fn regret_linear_case() {
        let net = ParallelNetwork::from_coefficients(&[(0.0, 0.0), (0.0, 1.0)]).unwrap();
        let stuck = sv(&[0.0, 1.0]);
        let t = 7;
        let traj = Trajectory {
            states: vec![stuck.clone(); t + 1],
            controls: vec![stuck; t],
            latencies: vec![vec![0.0, 1.0]; t + 1],
            stage_costs: vec![0.0; t],
            terminal_cost: 0.0,
            converged_at: None,
        };
        assert_abs_diff_eq!(cumulative_regret(&traj, &net).unwrap(), t as f64, epsilon = 1e-12);
        let empty = Trajectory { controls: vec![], stage_costs: vec![], ..traj };
        assert_eq!(cumulative_regret(&empty, &net), Err(SimulateError::EmptyTrajectory));
    }
}
