//! Browser bindings. Every entry point takes a potential as JSON and returns
//! a JSON string, so the page needs no generated type definitions.

use qdspec::criteria::{brinck_constant, classify_discreteness, molchanov_profile, Classification};
use qdspec::spectral::{eigenfunction_at, eigenvalue, sample_grid};
use qdspec::{BrinckReport, BvPotential, MolchanovProfile, PotentialSpec, Tolerances};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_LEVELS: usize = 12;
const MAX_SAMPLES: usize = 4000;

fn build(spec_json: &str) -> Result<BvPotential, String> {
    PotentialSpec::from_json(spec_json).and_then(|s| s.build()).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

#[derive(Serialize)]
struct Shape {
    knots: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<(f64, f64)>,
}

impl Shape {
    fn of(p: &BvPotential) -> Self {
        Self {
            knots: p.knots().to_vec(),
            density: p.density_values().to_vec(),
            atoms: p.atoms().iter().map(|a| (a.x, a.w)).collect(),
        }
    }
}

#[derive(Serialize)]
struct Level {
    k: usize,
    lambda: f64,
    u: Vec<f64>,
}

#[derive(Serialize)]
struct Eigenpairs {
    x: Vec<f64>,
    levels: Vec<Level>,
    potential: Shape,
    lower_bound: f64,
}

/// Lowest `count` Dirichlet eigenvalues on the whole domain with normalized
/// eigenfunctions sampled on `samples` points (plus the atoms).
pub fn eigenpairs_json(spec_json: &str, count: usize, samples: usize) -> Result<String, String> {
    let p = build(spec_json)?;
    let count = count.clamp(1, MAX_LEVELS);
    let window = p.domain();
    let xs = sample_grid(&p, window, samples.clamp(16, MAX_SAMPLES));
    let tols = Tolerances { tol_lambda: 1e-9, tol_ode: 1e-10 };
    let mut levels = Vec::with_capacity(count);
    for k in 0..count {
        let lambda = eigenvalue(&p, window, k, tols).map_err(|e| e.to_string())?;
        let pair = eigenfunction_at(&p, window, k, lambda, &xs, tols).map_err(|e| e.to_string())?;
        levels.push(Level { k, lambda, u: pair.u.values().to_vec() });
    }
    let lower_bound = brinck_constant(&p, 1.0).map_err(|e| e.to_string())?.lower_bound;
    Ok(to_json(&Eigenpairs { x: xs, levels, potential: Shape::of(&p), lower_bound }))
}

#[derive(Serialize)]
struct Profile {
    profile: MolchanovProfile,
    classification: Classification,
}

/// Window masses over `[a, a + h)` and the discreteness reading of them.
pub fn molchanov_json(spec_json: &str, h: f64, n_starts: usize) -> Result<String, String> {
    let p = build(spec_json)?;
    let profile = molchanov_profile(&p, h, n_starts.clamp(2, 20_000)).map_err(|e| e.to_string())?;
    let classification = classify_discreteness(&profile, 2.0, 0.1);
    Ok(to_json(&Profile { profile, classification }))
}

pub fn brinck_json(spec_json: &str, cap: f64) -> Result<String, String> {
    let p = build(spec_json)?;
    let r: BrinckReport = brinck_constant(&p, cap).map_err(|e| e.to_string())?;
    Ok(to_json(&r))
}

#[wasm_bindgen]
pub fn eigenpairs(spec_json: &str, count: usize, samples: usize) -> Result<String, JsError> {
    eigenpairs_json(spec_json, count, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn molchanov(spec_json: &str, h: f64, n_starts: usize) -> Result<String, JsError> {
    molchanov_json(spec_json, h, n_starts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn brinck(spec_json: &str, cap: f64) -> Result<String, JsError> {
    brinck_json(spec_json, cap).map_err(|e| JsError::new(&e))
}
