//! Reference implementations used to cross-check the solvers: exhaustive
//! active-set enumeration and random problem generators.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use routing_lqr::dynamics::validate_left_stochastic;
use routing_lqr::markov_flow::RoadNetwork;
use routing_lqr::{CondensedQp, GameDynamics, HorizonProblem, QuadraticCostSpec, SimplexVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat Dirichlet sample via normalised exponentials.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    DVector::from_iterator(n, e.into_iter().map(|v| v / s))
}

pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m.set_column(j, &random_simplex(rng, n));
    }
    m
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let mut m = &a * a.transpose() + DMatrix::identity(n, n) * shift;
    m = (&m + m.transpose()) * 0.5;
    m
}

/// Random well-posed horizon problem with positive control weight.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> HorizonProblem {
    let gamma = 0.1 + 0.8 * rng.random::<f64>();
    let a = validate_left_stochastic(random_stochastic(rng, n)).unwrap();
    let b = validate_left_stochastic(random_stochastic(rng, n)).unwrap();
    let dynamics = GameDynamics::new(gamma, a, b).unwrap();
    let q = random_psd(rng, n, 0.5);
    let r = random_psd(rng, n, 0.1);
    let qf = random_psd(rng, n, 0.5);
    let linear = DVector::from_fn(n, |_, _| rng.random::<f64>());
    let cost = QuadraticCostSpec::new(q, r, qf, Some(linear)).unwrap();
    HorizonProblem::new(dynamics, cost, horizon).unwrap()
}

pub struct BruteForce {
    pub z: DVector<f64>,
    pub value: f64,
    /// Rows with `z_i = 0` at the optimum.
    pub active: Vec<usize>,
}

/// Minimises over every face of the feasible set by solving the equality
/// constrained KKT system of each subset of zeroed variables.
pub fn brute_force_qp(qp: &CondensedQp, x: &DVector<f64>) -> BruteForce {
    let nz = qp.num_vars();
    assert!(nz <= 12, "brute force is exponential");
    let n = qp.num_edges();
    let q = qp.linear_at(x);
    let mut best: Option<BruteForce> = None;
    for mask in 0u32..(1 << nz) {
        let zeroed: Vec<usize> = (0..nz).filter(|i| mask & (1 << i) != 0).collect();
        // A step whose every entry is zeroed cannot sum to one.
        if (0..qp.horizon()).any(|t| (0..n).all(|i| mask & (1 << (t * n + i)) != 0)) {
            continue;
        }
        let m = qp.horizon() + zeroed.len();
        let mut kkt = DMatrix::zeros(nz + m, nz + m);
        kkt.view_mut((0, 0), (nz, nz)).copy_from(&qp.hessian);
        let mut rhs = DVector::zeros(nz + m);
        rhs.rows_mut(0, nz).copy_from(&(-&q));
        for t in 0..qp.horizon() {
            for i in 0..n {
                kkt[(nz + t, t * n + i)] = 1.0;
                kkt[(t * n + i, nz + t)] = 1.0;
            }
            rhs[nz + t] = 1.0;
        }
        for (k, &i) in zeroed.iter().enumerate() {
            kkt[(nz + qp.horizon() + k, i)] = 1.0;
            kkt[(i, nz + qp.horizon() + k)] = 1.0;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let z = sol.rows(0, nz).into_owned();
        if z.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let value = qp.objective(x, &z);
        if best.as_ref().is_none_or(|b| value < b.value - 1e-14) {
            let active = (0..nz).filter(|&i| z[i].abs() <= 1e-10).collect();
            best = Some(BruteForce { z, value, active });
        }
    }
    best.expect("the simplex product is nonempty")
}

/// Random acyclic network with nodes in topological order `0..n`, origin `0`
/// and sole sink `n - 1`. Every other node has at least one outgoing link.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, demand: f64) -> RoadNetwork {
    let mut links = Vec::new();
    let mut probs = Vec::new();
    for v in 0..n - 1 {
        let mut targets: Vec<usize> = ((v + 1)..n).filter(|_| rng.random::<f64>() < 0.5).collect();
        if targets.is_empty() {
            targets.push(v + 1 + (rng.random::<f64>() * (n - 1 - v) as f64) as usize % (n - 1 - v));
        }
        let w = random_simplex(rng, targets.len());
        for (k, &d) in targets.iter().enumerate() {
            links.push((v, d));
            probs.push(w[k]);
        }
    }
    let nodes = (0..n).map(|i| format!("n{i}")).collect();
    let mut dm = DMatrix::zeros(n, n);
    dm[(0, n - 1)] = demand;
    RoadNetwork::new(nodes, links, probs, dm).unwrap()
}

pub fn simplex(v: &[f64]) -> SimplexVector {
    SimplexVector::new(v.to_vec()).unwrap()
}
