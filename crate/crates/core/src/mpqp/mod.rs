//! Explicit solution of the condensed QP over the simplex of initial states.
//!
//! Every optimal active set defines a critical region on which the optimiser
//! is affine in `x`. Regions are discovered by stepping across facets from the
//! simplex centre, then a lattice sweep seeds any region the walk missed.
//! Internally the parameter lives in reduced coordinates `x = x̄ + Vξ` on the
//! affine hull of the simplex; exported `H`, `K`, `F`, `G` act on `x` directly.

mod export;
mod geometry;

pub use export::{export_regions, ExportFormat};
pub use geometry::{planar, polygon_area};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::SimplexVector;
use crate::qp::{solve_qp_at, CondensedQp, QpError};
use crate::tol;
use geometry::{HalfSpaces, Reduced};

/// Default cap on the number of regions.
pub const DEFAULT_REGION_BUDGET: usize = 10_000;

const STEP_SIZES: [f64; 4] = [tol::FACET_STEP, 1e-5, 1e-4, 1e-3];
const LATTICE_POINTS: usize = 2_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpqpError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("region budget of {budget} exceeded ({found} regions found)")]
    RegionBudget { budget: usize, found: usize },
    #[error("no critical region contains {point:?}")]
    NoRegion { point: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid region file: {0}")]
    Parse(String),
}

/// Where a region inequality comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Primal feasibility of an inactive inequality row of the QP.
    Primal(usize),
    /// Nonnegativity of the multiplier of an active row.
    Dual(usize),
    /// `x_e ≥ 0`.
    Domain(usize),
}

/// A polyhedron of initial states sharing one optimal active set.
#[derive(Debug, Clone)]
pub struct CriticalRegion {
    pub id: usize,
    pub active_set: Vec<usize>,
    /// Region is `{x ∈ Δ : Hx ≤ K}`.
    pub h: DMatrix<f64>,
    pub k: DVector<f64>,
    /// Law `z*(x) = Fx + G` for `x` on the simplex.
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub chebyshev_center: DVector<f64>,
    pub chebyshev_radius: f64,
    /// Set when a multiplier or slack vanishes identically on the region.
    pub is_degenerate: bool,
    pub row_kinds: Vec<RowKind>,
}

impl CriticalRegion {
    /// Builds the region of `active`, or `None` when it is empty or not
    /// full-dimensional on the simplex.
    pub fn from_active_set(qp: &CondensedQp, active: &[usize]) -> Option<Self> {
        build_region(qp, &Reduced::new(qp.num_edges()), active).map(|(region, _)| region)
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        (0..self.h.nrows()).all(|i| self.h.row(i).transpose().dot(x) <= self.k[i] + slack)
    }

    /// `z*(x) = Fx + G`.
    pub fn optimizer(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x + &self.g
    }

    /// First block of the law, the control applied now.
    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        (self.f.rows(0, n) * x) + self.g.rows(0, n)
    }
}

/// Piecewise-affine explicit law over the simplex.
#[derive(Debug, Clone)]
pub struct PwaControlLaw {
    pub regions: Vec<CriticalRegion>,
    pub n_e: usize,
    pub horizon: usize,
}

impl PwaControlLaw {
    /// Index of the first region containing `x`.
    pub fn locate(&self, x: &DVector<f64>) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(x, tol::REGION))
    }

    /// Region id and full optimiser at `x`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Option<(usize, DVector<f64>)> {
        self.locate(x).map(|i| (self.regions[i].id, self.regions[i].optimizer(x)))
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }
}

/// Region id and first control at `x`, clamped onto the simplex.
pub fn lookup(law: &PwaControlLaw, x: &SimplexVector) -> Result<(usize, SimplexVector), MpqpError> {
    if x.dim() != law.n_e {
        return Err(MpqpError::DimensionMismatch { expected: law.n_e, got: x.dim() });
    }
    let v = x.as_vector();
    let idx = law.locate(v).ok_or_else(|| MpqpError::NoRegion { point: x.to_vec() })?;
    let region = &law.regions[idx];
    let u = clamp_to_simplex(region.control(v));
    Ok((region.id, u))
}

fn clamp_to_simplex(mut u: DVector<f64>) -> SimplexVector {
    u.iter_mut().for_each(|v| *v = v.max(0.0));
    let s = u.sum();
    if s > 0.0 {
        u /= s;
    }
    SimplexVector::from_dvector(u).expect("clamped control lies on the simplex")
}

/// Options for [`enumerate_regions_with`].
#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    pub region_budget: usize,
    /// Run the lattice coverage sweep after the facet walk.
    pub lattice_sweep: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { region_budget: DEFAULT_REGION_BUDGET, lattice_sweep: true }
    }
}

/// Enumerates the critical regions of `qp` with default options.
pub fn enumerate_regions(qp: &CondensedQp) -> Result<PwaControlLaw, MpqpError> {
    enumerate_regions_with(qp, EnumerateOptions::default())
}

pub fn enumerate_regions_with(qp: &CondensedQp, opts: EnumerateOptions) -> Result<PwaControlLaw, MpqpError> {
    let n = qp.num_edges();
    let red = Reduced::new(n);
    let mut explorer = Explorer { qp, red: &red, opts, known: BTreeSet::new(), rejected: BTreeSet::new(), regions: Vec::new(), polys: Vec::new(), queue: VecDeque::new() };

    explorer.seed(&red.center)?;
    explorer.drain()?;
    if opts.lattice_sweep && red.dim() > 0 {
        for x in simplex_lattice(n, &red) {
            let xi = red.project(&x);
            if explorer.polys.iter().any(|p| p.contains(&xi, tol::REGION)) {
                continue;
            }
            explorer.seed(&x)?;
            explorer.drain()?;
        }
    }
    log::info!("found {} critical regions", explorer.regions.len());
    Ok(PwaControlLaw { regions: explorer.regions, n_e: n, horizon: qp.horizon() })
}

struct Explorer<'a> {
    qp: &'a CondensedQp,
    red: &'a Reduced,
    opts: EnumerateOptions,
    known: BTreeSet<Vec<usize>>,
    rejected: BTreeSet<Vec<usize>>,
    regions: Vec<CriticalRegion>,
    polys: Vec<HalfSpaces>,
    queue: VecDeque<usize>,
}

impl Explorer<'_> {
    /// Solves at `x` and registers its active set. Returns `true` when the set
    /// belongs to a full-dimensional region.
    fn seed(&mut self, x: &DVector<f64>) -> Result<bool, MpqpError> {
        let sol = solve_qp_at(self.qp, x)?;
        if self.known.contains(&sol.active_set) {
            return Ok(true);
        }
        if self.rejected.contains(&sol.active_set) {
            return Ok(false);
        }
        match build_region(self.qp, self.red, &sol.active_set) {
            Some((mut region, poly)) => {
                self.known.insert(sol.active_set);
                region.id = self.regions.len();
                self.queue.push_back(self.regions.len());
                self.regions.push(region);
                self.polys.push(poly);
                if self.regions.len() > self.opts.region_budget {
                    return Err(MpqpError::RegionBudget { budget: self.opts.region_budget, found: self.regions.len() });
                }
                Ok(true)
            }
            None => {
                log::debug!("active set {:?} at {:?} is not full-dimensional", sol.active_set, x.as_slice());
                self.rejected.insert(sol.active_set);
                Ok(false)
            }
        }
    }

    fn drain(&mut self) -> Result<(), MpqpError> {
        let dim = self.red.dim();
        while let Some(r) = self.queue.pop_front() {
            let poly = self.polys[r].clone();
            let kinds = self.regions[r].row_kinds.clone();
            for (j, kind) in kinds.iter().enumerate() {
                if matches!(kind, RowKind::Domain(_)) {
                    continue;
                }
                let Some((facet_point, radius)) = poly.chebyshev(dim, Some(j)) else { continue };
                if radius <= 1e-12 {
                    continue;
                }
                for step in STEP_SIZES {
                    let x = self.red.lift(&(&facet_point + &poly.a[j] * step));
                    if x.min() < -tol::SIMPLEX {
                        break;
                    }
                    if self.seed(&x)? {
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lattice points of the simplex pulled slightly toward its centre.
fn simplex_lattice(n: usize, red: &Reduced) -> Vec<DVector<f64>> {
    let count = |m: usize| -> f64 { (1..n).map(|k| (m + k) as f64 / k as f64).product() };
    let mut m = 1;
    while m < 400 && count(m + 1) <= LATTICE_POINTS as f64 {
        m += 1;
    }
    let mut out = Vec::new();
    let mut parts = vec![0usize; n];
    compositions(m, 0, &mut parts, &mut |p| {
        let x = DVector::from_iterator(n, p.iter().map(|&k| k as f64 / m as f64));
        out.push(x * (1.0 - 1e-7) + &red.center * 1e-7);
    });
    out
}

fn compositions(remaining: usize, idx: usize, parts: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if idx + 1 == parts.len() {
        parts[idx] = remaining;
        visit(parts);
        return;
    }
    for k in (0..=remaining).rev() {
        parts[idx] = k;
        compositions(remaining - k, idx + 1, parts, visit);
    }
}

/// Region geometry and law for one active set.
fn build_region(qp: &CondensedQp, red: &Reduced, active: &[usize]) -> Option<(CriticalRegion, HalfSpaces)> {
    let n = qp.num_edges();
    let dim = red.dim();
    let kkt = qp.affine_law(active)?;
    let horizon = qp.horizon();

    // Law and multipliers in reduced coordinates.
    let z_red = &kkt.z_param * &red.basis;
    let z_ctr = &kkt.z_param * &red.center + &kkt.z_off;
    let mu_red = &kkt.mult_param * &red.basis;
    let mu_ctr = &kkt.mult_param * &red.center + &kkt.mult_off;

    let mut raw = HalfSpaces::default();
    let mut kinds = Vec::new();
    let mut degenerate = false;
    let mut push = |a: DVector<f64>, b: f64, kind: RowKind, raw: &mut HalfSpaces, kinds: &mut Vec<RowKind>| -> bool {
        let norm = a.norm();
        if norm < 1e-12 {
            if b < -1e-12 {
                return false;
            }
            if b <= 1e-12 {
                degenerate = true;
            }
            return true;
        }
        raw.a.push(a / norm);
        raw.b.push(b / norm);
        kinds.push(kind);
        true
    };

    let mut is_active = vec![false; qp.num_ineq()];
    for &i in active {
        is_active[i] = true;
    }
    let g_red = &qp.ineq * &z_red - &qp.ineq_param * &red.basis;
    let g_ctr = &qp.ineq_rhs + &qp.ineq_param * &red.center - &qp.ineq * &z_ctr;
    for i in 0..qp.num_ineq() {
        if is_active[i] {
            continue;
        }
        if !push(g_red.row(i).transpose(), g_ctr[i], RowKind::Primal(i), &mut raw, &mut kinds) {
            return None;
        }
    }
    for (k, &i) in active.iter().enumerate() {
        let r = horizon + k;
        if !push(-mu_red.row(r).transpose(), mu_ctr[r], RowKind::Dual(i), &mut raw, &mut kinds) {
            return None;
        }
    }
    for e in 0..n {
        if !push(-red.basis.row(e).transpose(), red.center[e], RowKind::Domain(e), &mut raw, &mut kinds) {
            return None;
        }
    }

    let (center_red, radius) = if dim == 0 {
        (DVector::zeros(0), f64::INFINITY)
    } else {
        raw.chebyshev(dim, None)?
    };
    if radius <= tol::REGION_RADIUS {
        return None;
    }

    let (poly, kinds) = if dim == 0 { (HalfSpaces::default(), Vec::new()) } else { remove_redundant(&raw, &kinds, red) };

    let mut h = DMatrix::zeros(poly.len(), n);
    for (i, a) in poly.a.iter().enumerate() {
        h.row_mut(i).copy_from(&(&red.basis * a).transpose());
    }
    let k = DVector::from_column_slice(&poly.b);
    let proj = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let f = &kkt.z_param * proj;
    let g = &kkt.z_off + &kkt.z_param * &red.center;
    let region = CriticalRegion {
        id: 0,
        active_set: active.to_vec(),
        h,
        k,
        f,
        g,
        chebyshev_center: red.lift(&center_red),
        chebyshev_radius: radius,
        is_degenerate: degenerate,
        row_kinds: kinds,
    };
    Some((region, poly))
}

/// Drops rows whose removal leaves the polytope unchanged.
fn remove_redundant(raw: &HalfSpaces, kinds: &[RowKind], red: &Reduced) -> (HalfSpaces, Vec<RowKind>) {
    let dim = red.dim();
    let m = raw.len();
    let mut keep = vec![true; m];

    // Rows implied by the simplex alone never bind.
    let vertices: Vec<DVector<f64>> = (0..red.basis.nrows()).map(|i| red.basis.row(i).transpose()).collect();
    for i in 0..m {
        if matches!(kinds[i], RowKind::Domain(_)) {
            continue;
        }
        if vertices.iter().all(|v| raw.a[i].dot(v) <= raw.b[i] - 1e-12) {
            keep[i] = false;
        }
    }
    for i in 0..m {
        if !keep[i] {
            continue;
        }
        let cap = raw.b[i] + 1.0;
        match raw.max_excluding(dim, i, &keep, &raw.a[i], cap) {
            Some(v) if v <= raw.b[i] + tol::REGION => keep[i] = false,
            _ => {}
        }
    }
    let mut out = HalfSpaces::default();
    let mut out_kinds = Vec::new();
    for i in 0..m {
        if keep[i] {
            out.a.push(raw.a[i].clone());
            out.b.push(raw.b[i]);
            out_kinds.push(kinds[i]);
        }
    }
    (out, out_kinds)
}

/// Outcome of [`verify_law`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub samples: usize,
    pub covered: usize,
    /// Max `‖z_explicit − z_qp‖∞` over covered samples.
    pub max_deviation: f64,
    /// Samples that fell in no region (at most 20 kept).
    pub holes: Vec<Vec<f64>>,
    /// Samples per region id.
    pub histogram: BTreeMap<usize, usize>,
}

impl VerifyReport {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.samples.max(1) as f64
    }
}

/// Uniform points on the simplex (flat Dirichlet) from a seeded stream.
pub fn sample_simplex(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e = DVector::from_fn(n, |_, _| -(1.0 - rng.random::<f64>()).ln());
            let s = e.sum();
            e / s
        })
        .collect()
}

/// Compares the explicit law with the pointwise QP on `samples` uniform
/// points drawn with `seed`.
pub fn verify_law(law: &PwaControlLaw, qp: &CondensedQp, samples: usize, seed: u64) -> Result<VerifyReport, MpqpError> {
    if law.n_e != qp.num_edges() {
        return Err(MpqpError::DimensionMismatch { expected: qp.num_edges(), got: law.n_e });
    }
    let points = sample_simplex(law.n_e, samples.max(1), seed);
    let check = |x: &DVector<f64>| -> Result<Option<(usize, f64)>, MpqpError> {
        let Some((id, z)) = law.evaluate(x) else { return Ok(None) };
        let sol = solve_qp_at(qp, x)?;
        Ok(Some((id, (z - sol.z).amax())))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        points.par_iter().map(check).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = points.iter().map(check).collect();

    let mut report = VerifyReport { samples: points.len(), covered: 0, max_deviation: 0.0, holes: Vec::new(), histogram: BTreeMap::new() };
    for (x, res) in points.iter().zip(results) {
        match res? {
            Some((id, dev)) => {
                report.covered += 1;
                report.max_deviation = report.max_deviation.max(dev);
                *report.histogram.entry(id).or_default() += 1;
            }
            None if report.holes.len() < 20 => report.holes.push(x.as_slice().to_vec()),
            None => {}
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{GameDynamics, StochasticMatrix};
    use crate::network::QuadraticCostSpec;
    use crate::qp::HorizonProblem;
    use approx::assert_abs_diff_eq;

    fn qp_for(a: StochasticMatrix, q: &[f64], gamma: f64, horizon: usize) -> CondensedQp {
        let n = q.len();
        let dynamics = GameDynamics::new(gamma, a, StochasticMatrix::identity(n)).unwrap();
        let cost = QuadraticCostSpec::state_only(DMatrix::from_diagonal(&DVector::from_column_slice(q))).unwrap();
        HorizonProblem::new(dynamics, cost, horizon).unwrap().condense().unwrap()
    }

    #[test]
    fn identity_dynamics_four_regions() {
        let qp = qp_for(StochasticMatrix::identity(3), &[1.0, 1.0, 1.0], 0.5, 2);
        let law = enumerate_regions(&qp).unwrap();
        assert_eq!(law.num_regions(), 4);
        let x = SimplexVector::new(vec![0.3, 0.5, 0.2]).unwrap();
        let (id, u) = lookup(&law, &x).unwrap();
        let region = &law.regions[id];
        assert!(region.active_set.is_empty());
        for (i, expected) in [11.0 / 30.0, 1.0 / 6.0, 7.0 / 15.0].iter().enumerate() {
            assert_abs_diff_eq!(u[i], *expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn averaging_memory_single_region() {
        let qp = qp_for(StochasticMatrix::uniform(3), &[1.0, 2.0, 4.0], 0.5, 3);
        let law = enumerate_regions(&qp).unwrap();
        assert_eq!(law.num_regions(), 1);
        let report = verify_law(&law, &qp, 200, 7).unwrap();
        assert_eq!(report.covered, 200);
        assert!(report.max_deviation < 1e-7);
    }

    #[test]
    fn two_edges() {
        let qp = qp_for(StochasticMatrix::identity(2), &[1.0, 3.0], 0.5, 1);
        let law = enumerate_regions(&qp).unwrap();
        let report = verify_law(&law, &qp, 500, 1).unwrap();
        assert_eq!(report.covered, 500);
        assert!(report.max_deviation < 1e-7);
    }

    #[test]
    fn single_edge() {
        let qp = qp_for(StochasticMatrix::identity(1), &[1.0], 0.5, 2);
        let law = enumerate_regions(&qp).unwrap();
        assert_eq!(law.num_regions(), 1);
        let (_, u) = lookup(&law, &SimplexVector::uniform(1)).unwrap();
        assert_eq!(u.as_slice(), &[1.0]);
    }

    #[test]
    fn lattice_covers_simplex() {
        let red = Reduced::new(3);
        let pts = simplex_lattice(3, &red);
        assert!(pts.len() <= LATTICE_POINTS && pts.len() > 1000);
        assert!(pts.iter().all(|p| (p.sum() - 1.0).abs() < 1e-12 && p.min() > 0.0));
    }
}
