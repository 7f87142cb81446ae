use std::fs;
use std::path::Path;

use nalgebra::DVector;
use routing_lqr::config::{Mode, RunConfig, Scenario};
use routing_lqr::format::{round_json, sig12};
use routing_lqr::markov_flow::{equilibrium_flow, expected_path_flows, path_probabilities, DemandMode, RoadNetwork};
use routing_lqr::mpqp::{enumerate_regions, verify_law, ExportFormat};
use routing_lqr::qp::{solve_qp, DareVariant};
use routing_lqr::simulate::{run_closed_loop, run_mirror_descent, ClosedLoopMode};
use routing_lqr::{mpqp, presets};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::{Common, NetDemand};

/// Largest tolerated gap between the explicit law and the online solver.
const VERIFY_TOL: f64 = 1e-6;
const MIN_COVERAGE: f64 = 1.0 - 1e-3;

fn read_config_text(common: &Common) -> Result<String, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Config("one of --config or --preset is required".into()))?;
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_scenario(common: &Common) -> Result<Scenario, CliError> {
    let mut cfg = match &common.preset {
        Some(name) => presets::preset(name).ok_or_else(|| {
            CliError::Config(format!("unknown preset {name:?}; available: {}", presets::names().collect::<Vec<_>>().join(", ")))
        })?,
        None => RunConfig::from_json(&read_config_text(common)?)?,
    };
    if let Some(mode) = &common.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(rho) = common.reg {
        cfg.regularization = rho;
    }
    Ok(cfg.build()?)
}

fn load_road_network(common: &Common) -> Result<RoadNetwork, CliError> {
    let text = match &common.preset {
        Some(name) => presets::network_preset_json(name)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown network preset {name:?}; available: {}",
                    presets::network_names().collect::<Vec<_>>().join(", ")
                ))
            })?
            .to_string(),
        None => read_config_text(common)?,
    };
    Ok(RoadNetwork::from_json(&text)?)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

fn write_json(out: &Path, name: &str, mut value: Value) -> Result<(), CliError> {
    round_json(&mut value);
    write(out, name, &(serde_json::to_string_pretty(&value).expect("json serialises") + "\n"))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| sig12(v)).collect::<Vec<_>>().join(" ")
}

pub fn nash(common: &Common) -> Result<(), CliError> {
    let sc = load_scenario(common)?;
    let flow = sc.network.nash_equilibrium();
    let latency: Vec<f64> = sc.network.latency_vector(&flow)?.iter().copied().collect();
    let potential = sc.network.rosenthal_potential(&flow)?;
    println!("nash: {}", join(flow.as_slice()));
    println!("latency: {}", join(&latency));
    println!("potential: {}", sig12(potential));
    write_json(&common.out, "nash.json", json!({"flow": flow.as_slice(), "latency": latency, "potential": potential}))
}

pub fn solve(common: &Common) -> Result<(), CliError> {
    let sc = load_scenario(common)?;
    let qp = sc.problem.condense()?;
    let sol = solve_qp(&qp, &sc.x0)?;
    let n = qp.num_edges();
    let variant = if common.dare_terminal_weighted { DareVariant::TerminalWeighted } else { DareVariant::Standard };
    let riccati = sc.problem.riccati(variant)?;
    let baseline = riccati.cost(sc.x0.as_vector());
    let u0: Vec<f64> = sol.control(0, n).iter().copied().collect();
    println!("value: {}", sig12(sol.value));
    println!("u0: {}", join(&u0));
    println!("active set: {:?}", sol.active_set);
    println!("riccati baseline ({variant:?}): {}", sig12(baseline));
    let plan: Vec<Vec<f64>> = qp.controls(&sol.z).iter().map(|u| u.iter().copied().collect()).collect();
    write_json(
        &common.out,
        "solve.json",
        json!({
            "value": sol.value,
            "plan": plan,
            "active_set": sol.active_set,
            "iterations": sol.iterations,
            "riccati_variant": format!("{variant:?}"),
            "riccati_cost": baseline,
        }),
    )
}

pub fn regions(common: &Common) -> Result<(), CliError> {
    let sc = load_scenario(common)?;
    let qp = sc.problem.condense()?;
    let law = enumerate_regions(&qp)?;
    let count = law.num_regions();
    println!("{count} region{}", if count == 1 { "" } else { "s" });
    write(&common.out, "regions.json", &(mpqp::export_regions(&law, ExportFormat::Json) + "\n"))?;
    if law.n_e == 3 {
        write(&common.out, "vertices.csv", &mpqp::export_regions(&law, ExportFormat::Csv))?;
    } else {
        log::info!("vertex file skipped: planar projection needs three edges");
    }
    Ok(())
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let sc = load_scenario(common)?;
    let traj = match sc.mode {
        Mode::Mpc => run_closed_loop(&sc.problem, &sc.network, &sc.x0, ClosedLoopMode::RecedingHorizon)?,
        Mode::OpenLoop => run_closed_loop(&sc.problem, &sc.network, &sc.x0, ClosedLoopMode::OpenLoopOptimal)?,
        Mode::Explicit => {
            let law = enumerate_regions(&sc.problem.condense()?)?;
            run_closed_loop(&sc.problem, &sc.network, &sc.x0, ClosedLoopMode::ExplicitLaw(&law))?
        }
        Mode::MirrorDescent => run_mirror_descent(&sc.network, &sc.learner, &sc.x0, sc.steps)?,
    };
    let traj = traj.with_convergence(sc.tolerances.convergence, sc.tolerances.window);
    let summary = traj.summary(&sc.network)?;
    println!("final state: {}", join(&summary.steady_state));
    match summary.converged_at {
        Some(t) => println!("converged at step {t}"),
        None => println!("not converged"),
    }
    println!("total cost: {}", sig12(summary.total_cost));
    write(&common.out, "trajectory.csv", &traj.to_csv())?;
    let mut value = serde_json::to_value(&summary).expect("summary serialises");
    value["mode"] = serde_json::to_value(sc.mode).expect("mode serialises");
    if let Some(name) = &sc.name {
        value["name"] = json!(name);
    }
    write_json(&common.out, "summary.json", value)
}

pub fn verify(common: &Common) -> Result<(), CliError> {
    let sc = load_scenario(common)?;
    let qp = sc.problem.condense()?;
    let law = enumerate_regions(&qp)?;
    let samples = common.samples.unwrap_or(sc.samples);
    let report = verify_law(&law, &qp, samples, sc.seed)?;
    println!("regions: {}", law.num_regions());
    println!("coverage: {}", sig12(report.coverage()));
    println!("max deviation: {:e}", report.max_deviation);
    write_json(
        &common.out,
        "verify.json",
        json!({
            "regions": law.num_regions(),
            "samples": report.samples,
            "covered": report.covered,
            "max_deviation": report.max_deviation,
            "holes": report.holes,
            "histogram": report.histogram,
        }),
    )?;
    if report.max_deviation > VERIFY_TOL || report.coverage() < MIN_COVERAGE {
        return Err(CliError::Solver(format!(
            "explicit law disagrees with the online solver (deviation {:e}, coverage {})",
            report.max_deviation,
            report.coverage()
        )));
    }
    Ok(())
}

pub fn markov(common: &Common) -> Result<(), CliError> {
    let net = load_road_network(common)?;
    let mode = match common.net_demand {
        NetDemand::D => DemandMode::Outgoing,
        NetDemand::Dminus => DemandMode::Net,
    };
    let flows = equilibrium_flow(&net, mode)?;

    let mut links = String::from("link,from,to,probability,flow\n");
    for (l, &(o, d)) in net.links().iter().enumerate() {
        let (from, to) = (&net.nodes()[o], &net.nodes()[d]);
        println!("{from}->{to}: {}", sig12(flows[l]));
        links.push_str(&format!("{l},{from},{to},{},{}\n", sig12(net.link_probabilities()[l]), sig12(flows[l])));
    }

    let mut paths_csv = String::from("origin,destination,path,probability,expected_flow\n");
    let demand = net.demand();
    for o in 0..net.nodes().len() {
        for d in 0..net.nodes().len() {
            if demand[(o, d)] <= 0.0 {
                continue;
            }
            let paths = path_probabilities(&net, o, d)?;
            let rho: Vec<f64> = paths.iter().map(|p| p.probability).collect();
            let expected: DVector<f64> = expected_path_flows(&rho, demand[(o, d)]);
            for (p, h) in paths.iter().zip(expected.iter()) {
                paths_csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    net.nodes()[o],
                    net.nodes()[d],
                    p.nodes.join("-"),
                    sig12(p.probability),
                    sig12(*h)
                ));
            }
            println!("{} -> {}: {} paths", net.nodes()[o], net.nodes()[d], paths.len());
        }
    }
    write(&common.out, "link_flows.csv", &links)?;
    write(&common.out, "paths.csv", &paths_csv)
}
