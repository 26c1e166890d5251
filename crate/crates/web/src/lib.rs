//! Three interactive operations for the static demo page. Each takes plain
//! numbers or text and answers with a JSON string.

use nepcurate::exyzio::{format_dataset, parse_dataset};
use nepcurate::geometry::bond_report;
use nepcurate::perturb::{generate_set, Base, PerturbSpec};
use nepcurate::sampling::farthest_point_sample;
use nepcurate::surrogate::Potential;
use nepcurate::workflow::LennardJones;
use nepcurate::{Error, Frame, RadiiTable, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct FpsView {
    pub points: Vec<[f64; 2]>,
    pub selected: Vec<usize>,
    /// Distance of each accepted point to those accepted before it; `null` for the seed.
    pub distances: Vec<Option<f64>>,
}

/// Clustered points in the unit square.
pub fn cloud(n: usize, clusters: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 2]> = (0..clusters.max(1))
        .map(|_| [rng.random_range(0.15..0.85), rng.random_range(0.15..0.85)])
        .collect();
    (0..n)
        .map(|k| {
            let c = centers[k % centers.len()];
            let spread = 0.02 + 0.1 * (k % 3) as f64 / 2.0;
            [
                (c[0] + rng.random_range(-spread..spread)).clamp(0.0, 1.0),
                (c[1] + rng.random_range(-spread..spread)).clamp(0.0, 1.0),
            ]
        })
        .collect()
}

pub fn fps_view(n: usize, clusters: usize, max_count: usize, min_distance: f64, seed: u64) -> Result<FpsView> {
    let points = cloud(n, clusters, seed);
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let r = farthest_point_sample(&rows, max_count, min_distance, None, None)?;
    let distances = r
        .acceptance_distances
        .iter()
        .map(|d| d.is_finite().then_some(*d))
        .collect();
    Ok(FpsView {
        points,
        selected: r.selected,
        distances,
    })
}

#[derive(Debug, Serialize)]
pub struct FrameCheck {
    pub physical: bool,
    pub min_distance: Option<f64>,
    pub flagged: usize,
}

#[derive(Debug, Serialize)]
pub struct PerturbView {
    pub frames: Vec<FrameCheck>,
    pub physical: usize,
    pub xyz: String,
}

/// Perturbs the first frame of `xyz` without filtering, then screens every draw.
pub fn perturb_view(xyz: &str, n: usize, cell: f64, disp: f64, coeff: f64, seed: u64) -> Result<PerturbView> {
    let frames = parse_dataset(xyz)?;
    let frame = frames
        .into_iter()
        .next()
        .ok_or_else(|| Error::invalid("no structure in the input"))?;
    let radii = RadiiTable::cordero().with_coeff(coeff)?;
    let spec = PerturbSpec {
        n,
        cell_amplitude: cell,
        disp_amplitude: disp,
        filter: false,
        seed,
    };
    let out = generate_set(
        &[Base {
            name: "input".into(),
            frame,
        }],
        &spec,
        &radii,
    )?;
    let mut checks = Vec::with_capacity(out.len());
    for f in &out {
        let r = bond_report(f, &radii)?;
        checks.push(FrameCheck {
            physical: r.flagged_pairs.is_empty(),
            min_distance: r.min_distance,
            flagged: r.flagged_pairs.len(),
        });
    }
    Ok(PerturbView {
        physical: checks.iter().filter(|c| c.physical).count(),
        frames: checks,
        xyz: format_dataset(&out)?,
    })
}

#[derive(Debug, Serialize)]
pub struct DimerView {
    pub r: Vec<f64>,
    /// Lennard-Jones energy in eV with argon parameters.
    pub energy: Vec<f64>,
    pub threshold: f64,
    pub flagged: Vec<bool>,
}

pub fn dimer_view(a: &str, b: &str, r_min: f64, r_max: f64, steps: usize, coeff: f64) -> Result<DimerView> {
    if !(r_min > 0.0 && r_max > r_min) || steps < 2 {
        return Err(Error::invalid("need 0 < r_min < r_max and at least two steps"));
    }
    let radii = RadiiTable::cordero().with_coeff(coeff)?;
    let threshold = radii.threshold(a, b)?;
    let lj = LennardJones::default();
    let mut view = DimerView {
        r: Vec::new(),
        energy: Vec::new(),
        threshold,
        flagged: Vec::new(),
    };
    for k in 0..steps {
        let r = r_min + (r_max - r_min) * k as f64 / (steps - 1) as f64;
        let frame = Frame::molecule(vec![a.into(), b.into()], vec![[0.0; 3], [r, 0.0, 0.0]]);
        view.energy.push(lj.evaluate(&frame)?.energy);
        view.flagged.push(r < threshold);
        view.r.push(r);
    }
    Ok(view)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn fps(
    n: usize,
    clusters: usize,
    max_count: usize,
    min_distance: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(fps_view(n, clusters, max_count, min_distance, seed as u64))
}

#[wasm_bindgen]
pub fn perturb(
    xyz: &str,
    n: usize,
    cell: f64,
    disp: f64,
    coeff: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(perturb_view(xyz, n, cell, disp, coeff, seed as u64))
}

#[wasm_bindgen]
pub fn dimer(
    a: &str,
    b: &str,
    r_min: f64,
    r_max: f64,
    steps: usize,
    coeff: f64,
) -> std::result::Result<String, JsError> {
    to_js(dimer_view(a, b, r_min, r_max, steps, coeff))
}
