//! Browser bindings for the dynlab demo page.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so that the logic
//! runs under native tests; the exported wrappers only convert errors.

use dynlab::entropy::{gamma_set, grid_scan};
use dynlab::pliss::{pliss_times, LogGrowthSequence};
use dynlab::{lookup, TorusPoint};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Offsets `y - x` of the Bowen ball members, flattened row by row.
pub fn gamma_offsets(
    system: &str,
    point: &[f64],
    eps: f64,
    horizon: usize,
    grid_res: f64,
    bilateral: bool,
) -> Result<Vec<f64>, String> {
    let sys = lookup(system).map_err(err)?;
    let g = gamma_set(
        &sys,
        &TorusPoint::new(point),
        eps,
        horizon,
        grid_res,
        bilateral,
    )
    .map_err(err)?;
    Ok(g.offsets.concat())
}

/// Hyperbolic time indices of a log-growth sequence.
pub fn hyperbolic_times(values: &[f64], lambda1: f64, lambda2: f64) -> Result<Vec<u32>, String> {
    let seq = LogGrowthSequence::new(values.to_vec()).map_err(err)?;
    let rep = pliss_times(&seq, lambda1, lambda2).map_err(err)?;
    Ok(rep.indices.into_iter().map(|i| i as u32).collect())
}

/// Spanning and separated counts on a full grid for `n = 1..=n_max`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Counts {
    span: Vec<u32>,
    sep: Vec<u32>,
    rate: f64,
}

#[wasm_bindgen]
impl Counts {
    #[wasm_bindgen(getter)]
    pub fn span(&self) -> Vec<u32> {
        self.span.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn sep(&self) -> Vec<u32> {
        self.sep.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

pub fn entropy_counts(system: &str, grid: usize, eps: f64, n_max: usize) -> Result<Counts, String> {
    let sys = lookup(system).map_err(err)?;
    let ns: Vec<usize> = (1..=n_max).collect();
    let scan = grid_scan(&sys, grid, eps, &ns, None).map_err(err)?;
    let cast = |v: &[usize]| v.iter().map(|&c| c as u32).collect();
    Ok(Counts {
        span: cast(&scan.r_span),
        sep: cast(&scan.s_sep),
        rate: scan.rate,
    })
}

#[wasm_bindgen(js_name = gammaOffsets)]
pub fn gamma_offsets_js(
    system: &str,
    point: Vec<f64>,
    eps: f64,
    horizon: usize,
    grid_res: f64,
    bilateral: bool,
) -> Result<Vec<f64>, JsError> {
    gamma_offsets(system, &point, eps, horizon, grid_res, bilateral).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hyperbolicTimes)]
pub fn hyperbolic_times_js(
    values: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<Vec<u32>, JsError> {
    hyperbolic_times(&values, lambda1, lambda2).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = entropyCounts)]
pub fn entropy_counts_js(
    system: &str,
    grid: usize,
    eps: f64,
    n_max: usize,
) -> Result<Counts, JsError> {
    entropy_counts(system, grid, eps, n_max).map_err(|e| JsError::new(&e))
}
