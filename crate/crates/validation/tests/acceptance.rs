//! Reproduction checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use validation::*;
use nalgebra::{DMatrix, DVector};
use routing_lqr::dynamics::validate_left_stochastic;
use routing_lqr::markov_flow::{
    aggregate_path_flows, equilibrium_flow, expected_path_flows, line_graph, path_probabilities, DemandMode,
};
use routing_lqr::mpqp::{enumerate_regions, verify_law};
use routing_lqr::qp::solve_qp_at;
use routing_lqr::simulate::{run_closed_loop, ClosedLoopMode, Trajectory};
use routing_lqr::{presets, tol, GameDynamics, HorizonProblem, ParallelNetwork, SimplexVector};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn receding(name: &str) -> Trajectory {
    let sc = presets::preset(name).unwrap().build().unwrap();
    let t = &sc.tolerances;
    run_closed_loop(&sc.problem, &sc.network, &sc.x0, ClosedLoopMode::RecedingHorizon)
        .unwrap()
        .with_convergence(t.convergence, t.window)
}

fn dist(x: &SimplexVector, target: &[f64]) -> f64 {
    x.as_slice().iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

const THIRD: [f64; 3] = [1.0 / 3.0; 3];
const WEIGHTED: [f64; 3] = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];

fn nash() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for (slopes, target) in [([1.0, 1.0, 1.0], THIRD), ([1.0, 2.0, 4.0], WEIGHTED)] {
        let net = ParallelNetwork::linear(&slopes).unwrap();
        let start = Instant::now();
        let eq = net.nash_equilibrium();
        slowest = slowest.max(start.elapsed());
        worst = worst.max(dist(&eq, &target));
    }
    outcome(worst <= 1e-9 && slowest < Duration::from_millis(1), format!("max error {worst:.1e}, slowest {slowest:?}"))
}

fn steady_state() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, target) in [("fig2", THIRD), ("fig4", WEIGHTED)] {
        let start = Instant::now();
        let traj = receding(name);
        let elapsed = start.elapsed();
        let err = dist(traj.states.last().unwrap(), &target);
        ok &= err <= 1e-6 && elapsed < Duration::from_secs(1);
        parts.push(format!("{name}: error {err:.1e} in {elapsed:?}"));
    }
    outcome(ok, parts.join("; "))
}

fn one_step() -> Outcome {
    let traj = receding("fig1");
    let last = traj.states.last().unwrap().to_vec();
    let spread = traj.states[1..].iter().map(|x| dist(x, &last)).fold(0.0, f64::max);
    let err = dist(&traj.states[1], &THIRD);
    outcome(spread <= 1e-8 && err <= 1e-8, format!("x1 off steady state by {err:.1e}, later drift {spread:.1e}"))
}

fn region_count(name: &str) -> usize {
    let sc = presets::preset(name).unwrap().build().unwrap();
    enumerate_regions(&sc.problem.condense().unwrap()).unwrap().num_regions()
}

fn region_counts() -> Outcome {
    let start = Instant::now();
    let (fig1, fig2, fig4, fig6) = (region_count("fig1"), region_count("fig2"), region_count("fig4"), region_count("fig6"));
    let elapsed = start.elapsed();
    outcome(
        fig2 == 4 && fig1 == 1 && fig6 > fig4 && elapsed < Duration::from_secs(10),
        format!("fig2 {fig2}, fig1 {fig1}, gamma 0.7 {fig6} vs gamma 0.5 {fig4}, {elapsed:?}"),
    )
}

fn region_one_law() -> Outcome {
    let sc = presets::preset("fig2").unwrap().build().unwrap();
    let law = enumerate_regions(&sc.problem.condense().unwrap()).unwrap();
    let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
    let Some(i) = law.locate(&x) else { return outcome(false, "no region contains x0") };
    let region = &law.regions[i];
    let f_expected = DMatrix::from_element(3, 3, 1.0 / 3.0) - DMatrix::identity(3, 3);
    let f_err = (region.f.rows(0, 3) - f_expected).amax();
    let g_err = (region.g.rows(0, 3) - DVector::from_element(3, 1.0 / 3.0)).amax();
    outcome(f_err <= 1e-8 && g_err <= 1e-8, format!("region {}: F error {f_err:.1e}, G error {g_err:.1e}", region.id))
}

fn convergence_rate() -> Outcome {
    let fast = receding("fig4").converged_at;
    let slow = receding("fig6").converged_at;
    let near = |got: Option<usize>, want: usize| got.is_some_and(|t| t.abs_diff(want) <= 2);
    outcome(near(fast, 5) && near(slow, 10), format!("gamma 0.5 at {fast:?} (want 5±2), gamma 0.7 at {slow:?} (want 10±2)"))
}

fn reliability() -> Outcome {
    let short = receding("reliability15").converged_at;
    let long = receding("reliability35").converged_at;
    outcome(short.is_none() && long.is_some(), format!("T=15 converged_at {short:?} (want none), T=35 converged_at {long:?}"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst_law: f64 = 0.0;
    let mut coverage: f64 = 1.0;
    for name in presets::names() {
        let sc = presets::preset(name).unwrap().build().unwrap();
        let qp = sc.problem.condense().unwrap();
        let law = enumerate_regions(&qp).unwrap();
        let report = verify_law(&law, &qp, 10_000, sc.seed).unwrap();
        worst_law = worst_law.max(report.max_deviation);
        coverage = coverage.min(report.coverage());
    }

    let mut instances: Vec<HorizonProblem> = Vec::new();
    for name in presets::names() {
        let sc = presets::preset(name).unwrap().build().unwrap();
        for horizon in [1, 2] {
            instances.push(HorizonProblem::new(sc.problem.dynamics().clone(), sc.problem.cost().clone(), horizon).unwrap());
        }
    }
    let mut r = rng(2024);
    for (n, horizon) in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (4, 1), (5, 1), (6, 1)] {
        for _ in 0..10 {
            instances.push(random_problem(&mut r, n, horizon));
        }
    }
    let mut worst_bf: f64 = 0.0;
    for hp in &instances {
        let qp = hp.condense().unwrap();
        for _ in 0..20 {
            let x = random_simplex(&mut r, hp.num_edges());
            let z = solve_qp_at(&qp, &x).unwrap().z;
            worst_bf = worst_bf.max((z - brute_force_qp(&qp, &x).z).amax());
        }
    }
    outcome(
        worst_law <= 1e-6 && coverage == 1.0 && worst_bf <= 1e-8,
        format!(
            "explicit vs online {worst_law:.1e} (coverage {coverage}), online vs enumeration {worst_bf:.1e} over {} instances",
            instances.len()
        ),
    )
}

fn flow_conservation() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let n = 1 + k % 6;
        let gamma = rand::RngExt::random::<f64>(&mut r);
        let a = validate_left_stochastic(random_stochastic(&mut r, n)).unwrap();
        let b = validate_left_stochastic(random_stochastic(&mut r, n)).unwrap();
        let dynamics = GameDynamics::new(gamma, a, b).unwrap();
        let next = dynamics.apply(&random_simplex(&mut r, n), &random_simplex(&mut r, n));
        let neg = next.iter().fold(0.0f64, |m, &v| m.max(-v));
        worst = worst.max(neg).max((next.sum() - 1.0).abs());
    }
    let mut recorded = 0;
    let mut valid = true;
    for name in presets::names() {
        let traj = receding(name);
        for x in traj.states.iter().chain(&traj.controls) {
            recorded += 1;
            valid &= SimplexVector::new(x.to_vec()).is_ok()
                && x.as_slice().iter().all(|&v| v >= 0.0)
                && (x.as_slice().iter().sum::<f64>() - 1.0).abs() <= tol::SIMPLEX;
        }
    }
    outcome(worst <= 1e-12 && valid, format!("closure residual {worst:.1e} over 10000 draws, {recorded} recorded vectors valid: {valid}"))
}

fn markov() -> Outcome {
    let mut r = rng(99);
    let (mut rho_err, mut residual, mut agg_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut nilpotent = true;
    for k in 0..100 {
        let n = 2 + k % 7;
        let demand = 10.0 * rand::RngExt::random::<f64>(&mut r);
        let net = random_dag(&mut r, n, demand);
        let paths = path_probabilities(&net, 0, n - 1).unwrap();
        let rho: Vec<f64> = paths.iter().map(|p| p.probability).collect();
        rho_err = rho_err.max((rho.iter().sum::<f64>() - 1.0).abs());
        let lg = line_graph(&net);
        let f = equilibrium_flow(&net, DemandMode::Outgoing).unwrap();
        let b = lg.injection(&net.source(DemandMode::Outgoing));
        residual = residual.max((&f - lg.transition.transpose() * &f - b).amax());
        let agg = aggregate_path_flows(&paths, &expected_path_flows(&rho, demand), lg.num_links());
        agg_err = agg_err.max((agg - &f).amax());
        nilpotent &= lg.transition_power(lg.num_links() as u32 + 1).iter().all(|&v| v == 0.0);
    }
    outcome(
        rho_err <= 1e-12 && residual <= 1e-10 && agg_err <= 1e-10 && nilpotent,
        format!("sum rho {rho_err:.1e}, fixed point {residual:.1e}, aggregation {agg_err:.1e}, nilpotent {nilpotent}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("nash-reproduction", nash),
        ("steady-state-reproduction", steady_state),
        ("one-step-convergence", one_step),
        ("region-counts", region_counts),
        ("region-one-law", region_one_law),
        ("convergence-rate-ordering", convergence_rate),
        ("reliability-example", reliability),
        ("oracle-equivalence", oracle_equivalence),
        ("flow-conservation", flow_conservation),
        ("markov-suite", markov),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!("{status} {name:<28} {} [{:.2?}]", result.detail, start.elapsed());
        failed += usize::from(!result.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
