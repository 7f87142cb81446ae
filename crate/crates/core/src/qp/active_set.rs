//! Primal active-set solver, range-space variant.
//!
//! Each iterate solves the equality-constrained subproblem on the working set
//! through the Schur complement `M = C P⁻¹ Cᵀ`, whose Cholesky factor grows by
//! one row when a constraint is added and is rebuilt when one is dropped.

use nalgebra::DVector;

use super::{CondensedQp, QpError};
use crate::network::SimplexVector;
use crate::tol;

/// Multipliers above this negative value are treated as nonnegative.
const DUAL_DROP: f64 = 1e-11;

/// Optimal point of a [`CondensedQp`] at one parameter value.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Indices of the active inequality rows, ascending.
    pub active_set: Vec<usize>,
    pub eq_multipliers: DVector<f64>,
    /// One entry per inequality row, zero off the active set.
    pub ineq_multipliers: DVector<f64>,
    /// Objective without the regularization term.
    pub value: f64,
    pub iterations: usize,
    pub kkt: KktResiduals,
}

/// Worst-case KKT residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl QpSolution {
    /// Control applied at step `t`.
    pub fn control(&self, t: usize, n: usize) -> DVector<f64> {
        self.z.rows(t * n, n).into_owned()
    }
}

/// Solves the QP at `x`.
pub fn solve_qp(qp: &CondensedQp, x: &SimplexVector) -> Result<QpSolution, QpError> {
    solve_qp_at(qp, x.as_vector())
}

/// Solves the QP at a raw parameter vector.
pub fn solve_qp_at(qp: &CondensedQp, x: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = qp.num_edges();
    if x.len() != n {
        return Err(QpError::DimensionMismatch { expected: n, got: x.len() });
    }
    let nz = qp.num_vars();
    let n_eq = qp.eq.nrows();
    let n_in = qp.num_ineq();
    let q = qp.linear_at(x);
    let kq = &qp.hessian_inv * &q;
    let h = &qp.ineq_rhs + &qp.ineq_param * x;

    let mut z = DVector::from_element(nz, 1.0 / n as f64);
    let gz = &qp.ineq * &z;
    for i in 0..n_in {
        let violation = gz[i] - h[i];
        if violation > tol::SIMPLEX {
            return Err(QpError::Infeasible { row: i, violation });
        }
    }

    let mut factor = Factor::default();
    let mut rhs_const = Vec::with_capacity(n_eq + n_in);
    for t in 0..n_eq {
        factor.push(qp.eq.row(t).transpose(), qp)?;
        rhs_const.push(qp.eq_rhs[t]);
    }
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; n_in];

    let max_iter = 10 * nz + 10;
    let mut iterations = 0;
    let mut nu = loop {
        if iterations >= max_iter {
            return Err(QpError::MaxIterations(max_iter));
        }
        iterations += 1;

        let rhs: Vec<f64> = (0..factor.len()).map(|r| rhs_const[r] + factor.rows[r].dot(&kq)).collect();
        let nu: Vec<f64> = factor.solve(&rhs).into_iter().map(|v| -v).collect();
        let mut z_eq = -&kq;
        for (r, kc) in factor.kc.iter().enumerate() {
            z_eq.axpy(-nu[r], kc, 1.0);
        }

        let p = &z_eq - &z;
        let p_norm = p.amax();
        let mut alpha = 1.0;
        let mut blocking = None;
        if p_norm > 1e-14 {
            let gp = &qp.ineq * &p;
            let gz = &qp.ineq * &z;
            for i in 0..n_in {
                if in_working[i] || gp[i] <= 1e-12 * p_norm {
                    continue;
                }
                let step = (h[i] - gz[i]).max(0.0) / gp[i];
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }

        if let Some(i) = blocking {
            z.axpy(alpha, &p, 1.0);
            factor.push(qp.ineq.row(i).transpose(), qp)?;
            rhs_const.push(h[i]);
            working.push(i);
            in_working[i] = true;
            continue;
        }

        z = z_eq;
        let release = working
            .iter()
            .enumerate()
            .filter(|(k, _)| nu[n_eq + k] < -DUAL_DROP)
            .min_by_key(|(_, &row)| row)
            .map(|(k, _)| k);
        match release {
            None => break nu,
            Some(k) => {
                in_working[working.remove(k)] = false;
                rhs_const.remove(n_eq + k);
                factor.remove(n_eq + k, qp)?;
            }
        }
    };

    // One step of iterative refinement on the final KKT system.
    let c = qp.constraint_rows(&working);
    let nu_vec = DVector::from_column_slice(&nu);
    let r_stat = &qp.hessian * &z + &q + c.transpose() * &nu_vec;
    let r_prim = &c * &z - DVector::from_column_slice(&rhs_const);
    let kr = &qp.hessian_inv * &r_stat;
    let rhs: Vec<f64> = (0..factor.len()).map(|r| r_prim[r] - factor.rows[r].dot(&kr)).collect();
    let d_nu = factor.solve(&rhs);
    let mut corr = r_stat.clone();
    for (r, row) in factor.rows.iter().enumerate() {
        corr.axpy(d_nu[r], row, 1.0);
    }
    z -= &qp.hessian_inv * corr;
    for (v, d) in nu.iter_mut().zip(&d_nu) {
        *v += d;
    }

    let eq_multipliers = DVector::from_column_slice(&nu[..n_eq]);
    let mut ineq_multipliers = DVector::zeros(n_in);
    for (k, &row) in working.iter().enumerate() {
        ineq_multipliers[row] = nu[n_eq + k];
    }
    let kkt = residuals(qp, &q, &h, &z, &eq_multipliers, &ineq_multipliers);
    let scale = 1.0 + q.amax() + qp.hessian.amax();
    if kkt.stationarity > tol::KKT * scale
        || kkt.primal > tol::KKT
        || kkt.dual > tol::KKT
        || kkt.complementarity > tol::KKT * scale
    {
        return Err(QpError::Certification(format!("{kkt:?}")));
    }
    working.sort_unstable();
    Ok(QpSolution {
        value: qp.objective(x, &z),
        z,
        active_set: working,
        eq_multipliers,
        ineq_multipliers,
        iterations,
        kkt,
    })
}

fn residuals(
    qp: &CondensedQp,
    q: &DVector<f64>,
    h: &DVector<f64>,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> KktResiduals {
    let grad = &qp.hessian * z + q + qp.eq.transpose() * lambda + qp.ineq.transpose() * mu;
    let slack = h - &qp.ineq * z;
    let eq_res = &qp.eq * z - &qp.eq_rhs;
    let primal = slack.iter().map(|s| (-s).max(0.0)).fold(eq_res.amax(), f64::max);
    let dual = mu.iter().map(|m| (-m).max(0.0)).fold(0.0, f64::max);
    let complementarity = mu.iter().zip(slack.iter()).map(|(m, s)| (m * s).abs()).fold(0.0, f64::max);
    KktResiduals { stationarity: grad.amax(), primal, dual, complementarity }
}

/// Cholesky factor of `M = C P⁻¹ Cᵀ` over the working rows.
#[derive(Default)]
struct Factor {
    rows: Vec<DVector<f64>>,
    kc: Vec<DVector<f64>>,
    gram: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
}

impl Factor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn push(&mut self, row: DVector<f64>, qp: &CondensedQp) -> Result<(), QpError> {
        let kc = &qp.hessian_inv * &row;
        let col: Vec<f64> = self.rows.iter().map(|r| r.dot(&kc)).collect();
        let diag = row.dot(&kc);
        let y = self.forward(&col);
        let pivot = diag - y.iter().map(|v| v * v).sum::<f64>();
        if pivot.is_nan() || pivot <= 1e-12 * diag.abs() {
            return Err(QpError::DependentConstraints);
        }
        for (g, &c) in self.gram.iter_mut().zip(&col) {
            g.push(c);
        }
        let mut new_row = col;
        new_row.push(diag);
        self.gram.push(new_row);
        let mut l = y;
        l.push(pivot.sqrt());
        self.lower.push(l);
        self.rows.push(row);
        self.kc.push(kc);
        Ok(())
    }

    fn remove(&mut self, idx: usize, _qp: &CondensedQp) -> Result<(), QpError> {
        self.rows.remove(idx);
        self.kc.remove(idx);
        self.gram.remove(idx);
        for g in &mut self.gram {
            g.remove(idx);
        }
        self.refactor()
    }

    fn refactor(&mut self) -> Result<(), QpError> {
        let m = self.gram.len();
        let mut lower: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = vec![0.0; i + 1];
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| row[k] * lower[j][k]).sum();
                if i == j {
                    let pivot = self.gram[i][i] - s;
                    if pivot.is_nan() || pivot <= 1e-12 * self.gram[i][i].abs() {
                        return Err(QpError::DependentConstraints);
                    }
                    row[j] = pivot.sqrt();
                } else {
                    row[j] = (self.gram[i][j] - s) / lower[j][j];
                }
            }
            lower.push(row);
        }
        self.lower = lower;
        Ok(())
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, l) in self.lower.iter().enumerate() {
            let s: f64 = (0..i).map(|k| l[k] * y[k]).sum();
            y.push((b[i] - s) / l[i]);
        }
        y
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.forward(b);
        let m = x.len();
        for i in (0..m).rev() {
            let s: f64 = (i + 1..m).map(|k| self.lower[k][i] * x[k]).sum();
            x[i] = (x[i] - s) / self.lower[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{GameDynamics, StochasticMatrix};
    use crate::network::QuadraticCostSpec;
    use crate::qp::HorizonProblem;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn static_qp_with_active_bound() {
        // min ½uᵀ diag(2,4,8) u + 3u₃ over Δ.
        let qp = CondensedQp::static_simplex(diag(&[2.0, 4.0, 8.0]), DVector::from_vec(vec![0.0, 0.0, 3.0]), 0.0, 0.0);
        let sol = solve_qp(&qp, &SimplexVector::uniform(3)).unwrap();
        // On the face u₃ = 0: 2u₁ = 4u₂, u₁ + u₂ = 1; the bound multiplier is 3 - 4/3.
        assert_abs_diff_eq!(sol.z[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z[2], 0.0, epsilon = 1e-12);
        assert_eq!(sol.active_set, vec![2]);
        assert_abs_diff_eq!(sol.ineq_multipliers[2], 5.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_dynamics_reach_weighted_split() {
        let dynamics = GameDynamics::new(0.5, StochasticMatrix::identity(3), StochasticMatrix::identity(3)).unwrap();
        let cost = QuadraticCostSpec::state_only(diag(&[1.0, 2.0, 4.0])).unwrap();
        let hp = HorizonProblem::new(dynamics, cost, 1).unwrap();
        let qp = hp.condense().unwrap();
        let x = SimplexVector::new(vec![0.3, 0.5, 0.2]).unwrap();
        let sol = solve_qp(&qp, &x).unwrap();
        assert!(sol.kkt.max() < 1e-9);
        let next = hp.rollout(x.as_vector(), &qp.controls(&sol.z));
        assert!(next[1].iter().all(|v| *v > -1e-12));
        assert_abs_diff_eq!(sol.value, hp.rollout_cost(x.as_vector(), &qp.controls(&sol.z)), epsilon = 1e-10);
    }

    #[test]
    fn vertex_start_parameter() {
        let dynamics = GameDynamics::new(0.5, StochasticMatrix::identity(3), StochasticMatrix::identity(3)).unwrap();
        let cost = QuadraticCostSpec::state_only(DMatrix::identity(3, 3)).unwrap();
        let qp = HorizonProblem::new(dynamics, cost, 2).unwrap().condense().unwrap();
        let sol = solve_qp(&qp, &SimplexVector::vertex(3, 0)).unwrap();
        assert_abs_diff_eq!(sol.z[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.z[1], 0.5, epsilon = 1e-9);
        assert!(sol.active_set.contains(&0));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let qp = CondensedQp::static_simplex(DMatrix::identity(2, 2), DVector::zeros(2), 0.0, 0.0);
        assert!(matches!(
            solve_qp(&qp, &SimplexVector::uniform(3)),
            Err(QpError::DimensionMismatch { .. })
        ));
    }
}
