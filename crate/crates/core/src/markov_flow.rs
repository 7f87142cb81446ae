//! Markov-chain model of link flows on acyclic road networks.
//!
//! Drivers leave each intersection along outgoing road `l` with probability
//! `p_l`. On the line graph (roads as nodes) the equilibrium link flow solves
//! `f = L(P)ᵀ f + diag(p) O s`, where `O` maps each road to its origin node and
//! `s` is the per-node source term.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("network contains a cycle through {0:?}")]
    Cyclic(String),
    #[error("{destination:?} is not reachable from {origin:?}")]
    Unreachable { origin: String, destination: String },
    #[error("paths from {origin:?} can end at {node:?}, which has no outgoing roads")]
    DeadEnd { origin: String, node: String },
    #[error("series and LU solutions differ by {0:e}")]
    Inconsistent(f64),
    #[error("malformed network file: {0}")]
    Json(String),
}

/// Source term of the equilibrium equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DemandMode {
    /// `s = δ𝟙`: each node emits its total outgoing demand.
    #[default]
    Outgoing,
    /// `s = (δ − δᵀ)𝟙`: net demand, outgoing minus incoming.
    Net,
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    nodes: Vec<String>,
    links: Vec<(String, String)>,
    #[serde(rename = "P")]
    transition: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(rename = "D", default)]
    demand: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Directed road network with turning probabilities and a demand matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<String>,
    links: Vec<(usize, usize)>,
    link_prob: Vec<f64>,
    demand: DMatrix<f64>,
}

impl RoadNetwork {
    /// `links[i]` carries probability `probs[i]`; `demand[(o, d)]` is the
    /// demand from node `o` to node `d`.
    pub fn new(nodes: Vec<String>, links: Vec<(usize, usize)>, probs: Vec<f64>, demand: DMatrix<f64>) -> Result<Self, MarkovError> {
        let n = nodes.len();
        let invalid = |m: String| Err(MarkovError::Invalid(m));
        if links.len() != probs.len() {
            return invalid("one probability per link is required".into());
        }
        if demand.nrows() != n || demand.ncols() != n {
            return invalid(format!("demand must be {n}x{n}"));
        }
        let mut names = HashMap::new();
        for (i, name) in nodes.iter().enumerate() {
            if names.insert(name.as_str(), i).is_some() {
                return invalid(format!("duplicate node {name:?}"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (&(o, d), &p) in links.iter().zip(&probs) {
            if o >= n || d >= n {
                return invalid(format!("link ({o}, {d}) references a missing node"));
            }
            if o == d {
                return invalid(format!("self-loop at {:?}", nodes[o]));
            }
            if !seen.insert((o, d)) {
                return invalid(format!("duplicate link {:?} -> {:?}", nodes[o], nodes[d]));
            }
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("probability {p} on {:?} -> {:?} is outside [0, 1]", nodes[o], nodes[d]));
            }
        }
        for (v, name) in nodes.iter().enumerate() {
            let out: Vec<f64> = links.iter().zip(&probs).filter(|((o, _), _)| *o == v).map(|(_, &p)| p).collect();
            if !out.is_empty() && (out.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
                return invalid(format!("outgoing probabilities of {name:?} sum to {}", out.iter().sum::<f64>()));
            }
        }
        if demand.iter().any(|&d| !d.is_finite() || d < 0.0) {
            return invalid("demand entries must be finite and nonnegative".into());
        }
        Ok(Self { nodes, links, link_prob: probs, demand })
    }

    pub fn from_json(text: &str) -> Result<Self, MarkovError> {
        let rec: NetworkRecord = serde_json::from_str(text).map_err(|e| MarkovError::Json(e.to_string()))?;
        let index: HashMap<&str, usize> = rec.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let lookup = |name: &str| -> Result<usize, MarkovError> {
            index.get(name).copied().ok_or_else(|| MarkovError::Invalid(format!("unknown node {name:?}")))
        };
        let mut links = Vec::new();
        let mut probs = Vec::new();
        for (o, d) in &rec.links {
            links.push((lookup(o)?, lookup(d)?));
            let p = rec
                .transition
                .get(o)
                .and_then(|row| row.get(d))
                .copied()
                .ok_or_else(|| MarkovError::Invalid(format!("missing probability for {o:?} -> {d:?}")))?;
            probs.push(p);
        }
        for (o, row) in &rec.transition {
            for d in row.keys() {
                if !rec.links.iter().any(|(lo, ld)| lo == o && ld == d) {
                    return Err(MarkovError::Invalid(format!("probability given for missing link {o:?} -> {d:?}")));
                }
            }
        }
        let n = rec.nodes.len();
        let mut demand = DMatrix::zeros(n, n);
        for (o, row) in &rec.demand {
            for (d, &v) in row {
                demand[(lookup(o)?, lookup(d)?)] = v;
            }
        }
        Self::new(rec.nodes, links, probs, demand)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn link_probabilities(&self) -> &[f64] {
        &self.link_prob
    }

    pub fn demand(&self) -> &DMatrix<f64> {
        &self.demand
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn link_name(&self, l: usize) -> String {
        let (o, d) = self.links[l];
        format!("{}->{}", self.nodes[o], self.nodes[d])
    }

    /// Nodes in topological order, or the node where a cycle was found.
    pub fn topological_order(&self) -> Result<Vec<usize>, MarkovError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, d) in &self.links {
            indeg[d] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &(o, d) in &self.links {
                if o == v {
                    indeg[d] -= 1;
                    if indeg[d] == 0 {
                        ready.push(d);
                    }
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap();
            return Err(MarkovError::Cyclic(self.nodes[stuck].clone()));
        }
        Ok(order)
    }

    /// Source term `δ𝟙` or `(δ − δᵀ)𝟙`.
    pub fn source(&self, mode: DemandMode) -> DVector<f64> {
        let ones = DVector::from_element(self.nodes.len(), 1.0);
        match mode {
            DemandMode::Outgoing => &self.demand * ones,
            DemandMode::Net => (&self.demand - self.demand.transpose()) * ones,
        }
    }
}

/// Roads as nodes; consecutive roads joined by arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct LineGraph {
    pub arcs: Vec<(usize, usize)>,
    /// `L(P)[l][m] = p_m` when road `m` starts where road `l` ends.
    pub transition: DMatrix<f64>,
    /// Road × node indicator of each road's origin.
    pub origin: DMatrix<f64>,
    pub probabilities: DVector<f64>,
}

pub fn line_graph(net: &RoadNetwork) -> LineGraph {
    let nl = net.links.len();
    let mut transition = DMatrix::zeros(nl, nl);
    let mut arcs = Vec::new();
    for (l, &(_, dl)) in net.links.iter().enumerate() {
        for (m, &(om, _)) in net.links.iter().enumerate() {
            if dl == om {
                arcs.push((l, m));
                transition[(l, m)] = net.link_prob[m];
            }
        }
    }
    let mut origin = DMatrix::zeros(nl, net.nodes.len());
    for (l, &(o, _)) in net.links.iter().enumerate() {
        origin[(l, o)] = 1.0;
    }
    LineGraph { arcs, transition, origin, probabilities: DVector::from_column_slice(&net.link_prob) }
}

impl LineGraph {
    pub fn num_links(&self) -> usize {
        self.probabilities.len()
    }

    /// `diag(p) O s`.
    pub fn injection(&self, source: &DVector<f64>) -> DVector<f64> {
        (&self.origin * source).component_mul(&self.probabilities)
    }

    /// `Σ_{i=0}^{|L|} (L(P)ᵀ)^i b`.
    pub fn solve_series(&self, b: &DVector<f64>) -> DVector<f64> {
        let lt = self.transition.transpose();
        let mut term = b.clone();
        let mut sum = b.clone();
        for _ in 0..self.num_links() {
            term = &lt * term;
            sum += &term;
        }
        sum
    }

    /// `(I − L(P)ᵀ)⁻¹ b` by LU.
    pub fn solve_lu(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.num_links();
        (DMatrix::identity(n, n) - self.transition.transpose()).lu().solve(b)
    }

    /// `L(P)^k`.
    pub fn transition_power(&self, k: u32) -> DMatrix<f64> {
        let n = self.num_links();
        (0..k).fold(DMatrix::identity(n, n), |acc, _| acc * &self.transition)
    }
}

/// Equilibrium link flows, computed by the nilpotent series and by LU and
/// required to agree within `1e-10` (relative to the flow scale).
pub fn equilibrium_flow(net: &RoadNetwork, mode: DemandMode) -> Result<DVector<f64>, MarkovError> {
    net.topological_order()?;
    let lg = line_graph(net);
    let b = lg.injection(&net.source(mode));
    let series = lg.solve_series(&b);
    let lu = lg.solve_lu(&b).ok_or_else(|| MarkovError::Cyclic("line graph".into()))?;
    let gap = (&series - &lu).amax();
    if gap > 1e-10 * (1.0 + series.amax()) {
        return Err(MarkovError::Inconsistent(gap));
    }
    Ok(series)
}

/// One origin–destination path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub links: Vec<usize>,
    pub nodes: Vec<String>,
    pub probability: f64,
}

/// Every path from `origin` to `destination` with the product of its link
/// probabilities.
pub fn path_probabilities(net: &RoadNetwork, origin: usize, destination: usize) -> Result<Vec<Path>, MarkovError> {
    let order = net.topological_order()?;
    let n = net.nodes.len();
    if origin >= n || destination >= n {
        return Err(MarkovError::Invalid("origin or destination out of range".into()));
    }
    let mut reach = vec![false; n];
    reach[origin] = true;
    for &v in &order {
        if reach[v] && v != destination {
            for &(o, d) in &net.links {
                if o == v {
                    reach[d] = true;
                }
            }
        }
    }
    if !reach[destination] {
        return Err(MarkovError::Unreachable { origin: net.nodes[origin].clone(), destination: net.nodes[destination].clone() });
    }
    // Walks that stop anywhere but the destination leak probability.
    if let Some(v) = (0..n).find(|&v| reach[v] && v != destination && !net.links.iter().any(|&(o, _)| o == v)) {
        return Err(MarkovError::DeadEnd { origin: net.nodes[origin].clone(), node: net.nodes[v].clone() });
    }

    let mut paths = Vec::new();
    let mut stack = Vec::new();
    walk(net, origin, destination, &mut stack, 1.0, &mut paths);
    Ok(paths)
}

fn walk(net: &RoadNetwork, at: usize, destination: usize, stack: &mut Vec<usize>, prob: f64, out: &mut Vec<Path>) {
    if at == destination {
        let mut nodes: Vec<String> = stack.iter().map(|&l| net.nodes[net.links[l].0].clone()).collect();
        nodes.push(net.nodes[destination].clone());
        out.push(Path { links: stack.clone(), nodes, probability: prob });
        return;
    }
    for (l, &(o, d)) in net.links.iter().enumerate() {
        if o == at {
            stack.push(l);
            walk(net, d, destination, stack, prob * net.link_prob[l], out);
            stack.pop();
        }
    }
}

/// `d_od ρ`.
pub fn expected_path_flows(rho: &[f64], demand: f64) -> DVector<f64> {
    DVector::from_iterator(rho.len(), rho.iter().map(|r| r * demand))
}

/// Sum of path flows through each link.
pub fn aggregate_path_flows(paths: &[Path], flows: &DVector<f64>, num_links: usize) -> DVector<f64> {
    let mut out = DVector::zeros(num_links);
    for (path, &f) in paths.iter().zip(flows.iter()) {
        for &l in &path.links {
            out[l] += f;
        }
    }
    out
}

/// `𝟙ᵀ diag(p) O (δ − δᵀ) 𝟙`.
pub fn demand_balance_check(net: &RoadNetwork) -> f64 {
    line_graph(net).injection(&net.source(DemandMode::Net)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diamond(p: f64, d: f64) -> RoadNetwork {
        let nodes = ["o", "a", "b", "d"].map(String::from).to_vec();
        let mut demand = DMatrix::zeros(4, 4);
        demand[(0, 3)] = d;
        RoadNetwork::new(nodes, vec![(0, 1), (0, 2), (1, 3), (2, 3)], vec![p, 1.0 - p, 1.0, 1.0], demand).unwrap()
    }

    #[test]
    fn line_graph_arcs() {
        assert_eq!(line_graph(&diamond(0.3, 1.0)).arcs, vec![(0, 2), (1, 3)]);
        let nodes = ["o", "a", "d"].map(String::from).to_vec();
        let path = RoadNetwork::new(nodes.clone(), vec![(0, 1), (1, 2)], vec![1.0, 1.0], DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(line_graph(&path).arcs.len(), 1);
        let single = RoadNetwork::new(nodes[..2].to_vec(), vec![(0, 1)], vec![1.0], DMatrix::zeros(2, 2)).unwrap();
        assert!(line_graph(&single).arcs.is_empty());
    }

    #[test]
    fn diamond_flows_and_paths() {
        let net = diamond(0.3, 10.0);
        let f = equilibrium_flow(&net, DemandMode::Outgoing).unwrap();
        for (got, want) in f.iter().zip([3.0, 7.0, 3.0, 7.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let paths = path_probabilities(&net, 0, 3).unwrap();
        let rho: Vec<f64> = paths.iter().map(|p| p.probability).collect();
        assert_eq!(rho, vec![0.3, 0.7]);
        let h = expected_path_flows(&rho, 10.0);
        assert_abs_diff_eq!(h[0], 3.0, epsilon = 1e-12);
        let agg = aggregate_path_flows(&paths, &h, 4);
        assert!((agg - f).amax() < 1e-10);
        assert_eq!(expected_path_flows(&rho, 0.0), DVector::zeros(2));
    }

    #[test]
    fn rejects_bad_networks() {
        let nodes = ["a", "b"].map(String::from).to_vec();
        let cyc = RoadNetwork::new(nodes.clone(), vec![(0, 1), (1, 0)], vec![1.0, 1.0], DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(equilibrium_flow(&cyc, DemandMode::Outgoing), Err(MarkovError::Cyclic(_))));
        assert!(RoadNetwork::new(nodes.clone(), vec![(0, 0)], vec![1.0], DMatrix::zeros(2, 2)).is_err());
        assert!(RoadNetwork::new(nodes.clone(), vec![(0, 1)], vec![0.5], DMatrix::zeros(2, 2)).is_err());
        let text = r#"{"nodes":["o","d"],"links":[["o","d"]],"P":{"o":{"d":1.0}},"D":{"o":{"d":2.0}}}"#;
        let single = RoadNetwork::from_json(text).unwrap();
        assert_abs_diff_eq!(equilibrium_flow(&single, DemandMode::Outgoing).unwrap()[0], 2.0, epsilon = 1e-15);
        assert!(RoadNetwork::from_json(r#"{"nodes":["o"],"links":[["o","x"]],"P":{}}"#).is_err());
    }

    #[test]
    fn dead_end_and_unreachable() {
        let nodes = ["o", "a", "b", "d"].map(String::from).to_vec();
        let net = RoadNetwork::new(nodes, vec![(0, 1), (0, 2), (1, 3)], vec![0.5, 0.5, 1.0], DMatrix::zeros(4, 4)).unwrap();
        assert!(matches!(path_probabilities(&net, 0, 3), Err(MarkovError::DeadEnd { .. })));
        assert!(matches!(path_probabilities(&net, 1, 2), Err(MarkovError::Unreachable { .. })));
    }
}
