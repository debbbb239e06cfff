//! Browser bindings for the demo page. Each exported function takes a study
//! as JSON and returns JSON; the plain Rust versions in [`demo`] do the work
//! so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js<T: serde::Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// The bundled six-descriptor study, pretty-printed.
#[wasm_bindgen]
pub fn sample_study() -> String {
    demo::sample_study()
}

/// Share of each state of `descriptor` per period over `runs` Monte Carlo
/// runs, with Wilson bands at `level`.
#[wasm_bindgen]
pub fn share_fan(
    spec: &str,
    descriptor: &str,
    runs: usize,
    seed: u64,
    level: f64,
) -> Result<String, JsError> {
    to_js(demo::share_fan(spec, descriptor, runs, seed, level))
}

/// Robustness of `scenario` (state indices) at each structural shock scale.
#[wasm_bindgen]
pub fn robustness_curve(
    spec: &str,
    scenario: Vec<usize>,
    scales: Vec<f64>,
    samples: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(demo::robustness_curve(
        spec, &scenario, &scales, samples, seed,
    ))
}

/// Succession path from `start` until a fixed point or cycle recurs.
#[wasm_bindgen]
pub fn explore_attractor(
    spec: &str,
    start: Vec<usize>,
    max_steps: usize,
) -> Result<String, JsError> {
    to_js(demo::explore_attractor(spec, &start, max_steps))
}
