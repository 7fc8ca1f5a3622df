//! Browser bindings for the interactive demo page.
//!
//! Three operations back the static page in `www/`: a full scenario report
//! (optimal strategies, growth rates, criterion table), a flashing-effect
//! curve over lap durations, and the criterion curve over block sizes. All
//! exchange JSON strings so the JavaScript side stays a thin plotting layer;
//! errors come back as `{"error": "..."}`.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use mixopt::criterion;
use mixopt::dynamics::objective_j;
use mixopt::perm::Permutation;
use mixopt::raceway::{build_han_system, evaluate_scenario, light_profile, RacewayScenario};
use mixopt::solvers::{solve_approx, solve_exact, SolveOptions};

/// Exhaustive scans stay interactive in the browser up to 9! permutations.
const DEMO_CAP: usize = 9;

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn solve_opts() -> SolveOptions {
    SolveOptions {
        workers: 1,
        n_cap: DEMO_CAP,
    }
}

#[derive(Serialize)]
struct DemoReport {
    light: Vec<f64>,
    depths: Vec<f64>,
    mu_max: f64,
    mu_min: f64,
    mu_identity: f64,
    mu_plus: f64,
    p_max: Vec<usize>,
    p_plus: Vec<usize>,
    p_min: Vec<usize>,
    pmax_equals_pplus: bool,
    criterion_satisfied: Option<bool>,
    max_phi: Option<f64>,
    phi: Vec<f64>,
    criterion_error: Option<String>,
    r1: Option<f64>,
    r2: Option<f64>,
    rt1: Option<f64>,
    evaluated: u64,
}

fn scenario_report_impl(input: &str) -> Result<String, String> {
    let sc: RacewayScenario = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if sc.layers > DEMO_CAP {
        return Err(format!(
            "the demo solves exactly up to N = {DEMO_CAP} (got N = {})",
            sc.layers
        ));
    }
    let report = evaluate_scenario(&sc, &solve_opts()).map_err(|e| e.to_string())?;
    let out = DemoReport {
        light: light_profile(&sc).map_err(|e| e.to_string())?,
        depths: sc.layer_depths(),
        mu_max: report.mu_max,
        mu_min: report.mu_min,
        mu_identity: report.mu_identity,
        mu_plus: report.mu_plus,
        p_max: report.p_max.one_based_images(),
        p_plus: report.p_plus.one_based_images(),
        p_min: report.p_min.one_based_images(),
        pmax_equals_pplus: report.pmax_equals_pplus,
        criterion_satisfied: report.criterion.as_ref().map(|c| c.satisfied),
        max_phi: report.criterion.as_ref().map(|c| c.max_phi),
        phi: report
            .criterion
            .as_ref()
            .map(|c| c.phi.clone())
            .unwrap_or_default(),
        criterion_error: report.criterion_error,
        r1: report.ratios.map(|r| r.r1),
        r2: report.ratios.map(|r| r.r2),
        rt1: report.ratios.map(|r| r.rt1),
        evaluated: report.evaluated,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Evaluate one scenario: exact and sorted-matching optima, growth rates,
/// strategy ratios and the criterion table.
#[wasm_bindgen]
pub fn scenario_report(input: &str) -> String {
    scenario_report_impl(input).unwrap_or_else(|e| error_json(&e))
}

#[derive(Deserialize)]
struct FlashingInput {
    scenario: RacewayScenario,
    t_values: Vec<f64>,
}

#[derive(Serialize)]
struct FlashingPoint {
    t: f64,
    mu_max: f64,
    mu_plus: f64,
    mu_identity: f64,
}

fn flashing_curve_impl(input: &str) -> Result<String, String> {
    let req: FlashingInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if req.scenario.layers > DEMO_CAP {
        return Err(format!("the demo solves exactly up to N = {DEMO_CAP}"));
    }
    let mut points = Vec::with_capacity(req.t_values.len());
    for &t in &req.t_values {
        let mut sc = req.scenario.clone();
        sc.lap = t;
        let (hv, sys) = build_han_system(&sc).map_err(|e| e.to_string())?;
        let z: f64 = hv.z_vec.iter().sum();
        let n_t = sc.layers as f64 * t;
        let exact = solve_exact(&sys, &solve_opts()).map_err(|e| e.to_string())?;
        let plus = solve_approx(&sys).best_perm;
        let j_plus = objective_j(&sys, &plus).map_err(|e| e.to_string())?;
        let j_id =
            objective_j(&sys, &Permutation::identity(sc.layers)).map_err(|e| e.to_string())?;
        points.push(FlashingPoint {
            t,
            mu_max: (exact.best_value + z) / n_t,
            mu_plus: (j_plus + z) / n_t,
            mu_identity: (j_id + z) / n_t,
        });
    }
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

/// Growth rate of the optimal, sorted-matching and no-mixing strategies as
/// the lap duration varies: `{"scenario": {..}, "t_values": [..]}`.
#[wasm_bindgen]
pub fn flashing_curve(input: &str) -> String {
    flashing_curve_impl(input).unwrap_or_else(|e| error_json(&e))
}

#[derive(Serialize)]
struct CriterionCurve {
    m1: Vec<usize>,
    phi: Vec<f64>,
    max_phi: f64,
    satisfied: bool,
}

fn criterion_curve_impl(input: &str) -> Result<String, String> {
    let sc: RacewayScenario = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let (_, sys) = build_han_system(&sc).map_err(|e| e.to_string())?;
    let report = criterion::check(&sys).map_err(|e| e.to_string())?;
    let out = CriterionCurve {
        m1: (2..=sc.layers).collect(),
        phi: report.phi,
        max_phi: report.max_phi,
        satisfied: report.satisfied,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// The criterion curve `phi(m1)` for a scenario (no exhaustive scan, so
/// larger `N` is fine here).
#[wasm_bindgen]
pub fn criterion_curve(input: &str) -> String {
    criterion_curve_impl(input).unwrap_or_else(|e| error_json(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_report_round_trip() {
        let out = scenario_report(r#"{"I_s": 2000.0, "q": 0.05, "T": 1000.0, "N": 7}"#);
        let value: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(value.get("error").is_none(), "{out}");
        assert_eq!(value["criterion_satisfied"], serde_json::json!(true));
        assert_eq!(value["pmax_equals_pplus"], serde_json::json!(true));
        assert_eq!(value["p_max"].as_array().unwrap().len(), 7);
        assert_eq!(value["phi"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn scenario_report_rejects_oversized_n() {
        let out = scenario_report(r#"{"I_s": 2000.0, "q": 0.05, "T": 1000.0, "N": 10}"#);
        let value: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(value["error"].as_str().unwrap().contains("N = 9"));
    }

    #[test]
    fn scenario_report_bad_json_is_reported() {
        let value: serde_json::Value = serde_json::from_str(&scenario_report("{nope")).unwrap();
        assert!(value.get("error").is_some());
    }

    #[test]
    fn flashing_curve_produces_points() {
        let out = flashing_curve(
            r#"{"scenario": {"I_s": 1000.0, "q": 0.01, "T": 1.0, "N": 5},
                "t_values": [1.0, 10.0, 100.0]}"#,
        );
        let value: serde_json::Value = serde_json::from_str(&out).unwrap();
        let points = value.as_array().unwrap();
        assert_eq!(points.len(), 3);
        for p in points {
            assert!(p["mu_max"].as_f64().unwrap() >= p["mu_identity"].as_f64().unwrap());
        }
    }

    #[test]
    fn criterion_curve_handles_larger_n() {
        let out = criterion_curve(r#"{"I_s": 2000.0, "q": 0.05, "T": 1000.0, "N": 20}"#);
        let value: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(value.get("error").is_none(), "{out}");
        assert_eq!(value["m1"].as_array().unwrap().len(), 19);
        assert_eq!(value["satisfied"], serde_json::json!(false));
    }
}
