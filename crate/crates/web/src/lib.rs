//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns JSON strings. Failures come back as
//! `{"error": "..."}` so the page can show them without exception plumbing.

use routing_lqr::config::RunConfig;
use routing_lqr::mpqp::{enumerate_regions, planar};
use routing_lqr::simulate::{run_closed_loop, ClosedLoopMode};
use routing_lqr::{presets, ParallelNetwork, SimplexVector};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Names of the built-in run configurations.
#[wasm_bindgen]
pub fn preset_names() -> String {
    json!(presets::names().collect::<Vec<_>>()).to_string()
}

/// JSON text of a built-in run configuration.
#[wasm_bindgen]
pub fn preset_config(name: &str) -> String {
    respond(
        presets::preset_json(name)
            .ok_or_else(|| format!("unknown preset {name:?}"))
            .and_then(|text| serde_json::from_str(text).map_err(|e| e.to_string())),
    )
}

/// Nash flow of the linear-latency network with the given slopes,
/// e.g. `[1, 2, 4]`.
#[wasm_bindgen]
pub fn nash(slopes_json: &str) -> String {
    respond((|| {
        let slopes: Vec<f64> = serde_json::from_str(slopes_json).map_err(|e| e.to_string())?;
        let net = ParallelNetwork::linear(&slopes).map_err(|e| e.to_string())?;
        let flow = net.nash_equilibrium();
        let latency: Vec<f64> = net.latency_vector(&flow).map_err(|e| e.to_string())?.iter().copied().collect();
        Ok(json!({ "flow": flow.as_slice(), "latency": latency }))
    })())
}

/// Critical regions of a three-edge configuration as planar polygons.
#[wasm_bindgen]
pub fn regions(config_json: &str) -> String {
    respond((|| {
        let sc = RunConfig::from_json(config_json).and_then(|c| c.build()).map_err(|e| e.to_string())?;
        if sc.problem.num_edges() != 3 {
            return Err("the demo draws three-edge networks only".to_string());
        }
        let law = enumerate_regions(&sc.problem.condense().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let polygons: Vec<Value> = law
            .polygons()
            .unwrap_or_default()
            .into_iter()
            .map(|(id, points)| json!({ "id": id, "points": points }))
            .collect();
        Ok(json!({ "count": law.num_regions(), "polygons": polygons }))
    })())
}

/// Receding-horizon trajectory from `x0` (a JSON array on the simplex).
#[wasm_bindgen]
pub fn simulate(config_json: &str, x0_json: &str) -> String {
    respond((|| {
        let sc = RunConfig::from_json(config_json).and_then(|c| c.build()).map_err(|e| e.to_string())?;
        let x0: Vec<f64> = serde_json::from_str(x0_json).map_err(|e| e.to_string())?;
        let x0 = SimplexVector::new(x0).map_err(|e| e.to_string())?;
        let traj = run_closed_loop(&sc.problem, &sc.network, &x0, ClosedLoopMode::RecedingHorizon)
            .map_err(|e| e.to_string())?
            .with_convergence(sc.tolerances.convergence, sc.tolerances.window);
        let states: Vec<Vec<f64>> = traj.states.iter().map(|x| x.to_vec()).collect();
        let points: Vec<[f64; 2]> = if x0.dim() == 3 { traj.states.iter().map(|x| planar(x.as_slice())).collect() } else { Vec::new() };
        Ok(json!({
            "states": states,
            "points": points,
            "stage_costs": traj.stage_costs,
            "converged_at": traj.converged_at,
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_round_trip_json() {
        let names: Vec<String> = serde_json::from_str(&preset_names()).unwrap();
        assert!(names.contains(&"fig2".to_string()));

        let eq: Value = serde_json::from_str(&nash("[1, 2, 4]")).unwrap();
        assert!((eq["flow"][0].as_f64().unwrap() - 4.0 / 7.0).abs() < 1e-12);
        let bad: Value = serde_json::from_str(&nash("[1, -2]")).unwrap();
        assert!(bad["error"].is_string());

        let cfg = presets::preset_json("fig2").unwrap();
        let law: Value = serde_json::from_str(&regions(cfg)).unwrap();
        assert_eq!(law["count"], 4);
        assert_eq!(law["polygons"].as_array().unwrap().len(), 4);

        let run: Value = serde_json::from_str(&simulate(cfg, "[0.1, 0.1, 0.8]")).unwrap();
        assert_eq!(run["states"].as_array().unwrap().len(), 16);
        assert_eq!(run["points"][0].as_array().unwrap().len(), 2);
        let off: Value = serde_json::from_str(&simulate(cfg, "[0.5, 0.6, 0.2]")).unwrap();
        assert!(off["error"].is_string());
        let missing: Value = serde_json::from_str(&preset_config("fig9")).unwrap();
        assert!(missing["error"].is_string());
    }
}
