//! Browser bindings: tangent-cone projection, a full run of either example
//! instance, and the log-linear rate fit.
//!
//! Every export returns a JSON string so the page needs no generated typings.
//! The plain functions are usable natively; the `*_js` wrappers are the exports.

use penflow::diagnostics::{fit_log_linear, DEFAULT_RATE_WINDOW};
use penflow::dynamics::Scheme;
use penflow::experiment::{generate_example, Example};
use penflow::harness::execute;
use penflow::sets::ConvexSet;
use penflow::Vector;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Upper bound on points per series sent back to the page.
const MAX_POINTS: usize = 400;

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Projects `v` onto the tangent cone of a 2-D set at `x`, and also returns
/// the projection of `x + v` for drawing.
///
/// `set_json` uses the config wire format, e.g.
/// `{"type": "ball", "center": [0, 0], "radius": 1}`.
pub fn tangent_project(set_json: &str, x: &[f64], v: &[f64]) -> Result<String, String> {
    let set: ConvexSet = serde_json::from_str(set_json).map_err(msg)?;
    if x.len() != set.dim() || v.len() != set.dim() {
        return Err("point and direction must match the set dimension".into());
    }
    let x = set.project(&Vector::from_column_slice(x));
    let v = Vector::from_column_slice(v);
    let t = set.tangent_project(&x, &v).map_err(msg)?;
    let landed = set.project(&(&x + &v));
    Ok(json!({
        "x": x.as_slice(),
        "tangent": t.as_slice(),
        "projected": landed.as_slice(),
        "interior": set.active_face(&x).map_err(msg)?.is_interior(),
    })
    .to_string())
}

#[derive(Serialize)]
struct Series {
    time: Vec<f64>,
    v: Option<Vec<f64>>,
    consensus: Vec<f64>,
    residual: Vec<f64>,
    /// First two coordinates of every agent at each kept point.
    agents: Vec<Vec<[f64; 2]>>,
}

/// Runs example 1 or 2 with the given seed and integration settings and
/// returns the run summary plus thinned trajectories.
pub fn run_example(example: u8, seed: u32, alpha: f64, max_steps: u32, explicit: bool) -> Result<String, String> {
    let example = Example::from_number(example).map_err(msg)?;
    let mut cfg = generate_example(example, u64::from(seed)).map_err(msg)?;
    cfg.integrator.alpha = alpha;
    cfg.integrator.max_steps = max_steps as usize;
    if explicit {
        cfg.integrator.scheme = Scheme::Explicit;
        cfg.integrator.record_every = cfg.integrator.record_every.max(10);
    }
    let out = execute(&cfg).map_err(msg)?;
    let rec = &out.record;
    let stride = rec.len().div_ceil(MAX_POINTS).max(1);
    let keep: Vec<usize> = (0..rec.len()).step_by(stride).chain(std::iter::once(rec.len() - 1)).collect();
    let pick = |xs: &[f64]| keep.iter().map(|&k| xs[k]).collect::<Vec<_>>();
    let series = Series {
        time: pick(&rec.times),
        v: rec.v_values.as_deref().map(pick),
        consensus: pick(&rec.consensus),
        residual: pick(&rec.residuals),
        agents: keep
            .iter()
            .map(|&k| rec.states[k].iter().map(|x| [x[0], x[1]]).collect())
            .collect(),
    };
    Ok(json!({ "summary": out.summary, "series": series }).to_string())
}

/// Least-squares fit of `ln values` against `times` over the default window.
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<String, String> {
    if times.len() != values.len() {
        return Err("times and values differ in length".into());
    }
    let fit = fit_log_linear(times, values, DEFAULT_RATE_WINDOW).map_err(msg)?;
    serde_json::to_string(&fit).map_err(msg)
}

#[wasm_bindgen(js_name = tangentProject)]
pub fn tangent_project_js(set_json: &str, x: &[f64], v: &[f64]) -> Result<String, JsValue> {
    tangent_project(set_json, x, v).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runExample)]
pub fn run_example_js(example: u8, seed: u32, alpha: f64, max_steps: u32, explicit: bool) -> Result<String, JsValue> {
    run_example(example, seed, alpha, max_steps, explicit).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitRate)]
pub fn fit_rate_js(times: &[f64], values: &[f64]) -> Result<String, JsValue> {
    fit_rate(times, values).map_err(|e| JsValue::from_str(&e))
}
