//! Scripted curation session over synthetic frames, with an independent
//! per-frame-id model of the expected state.

use std::path::Path;

use nepcurate::exyzio::{write_dataset, write_parity, ParitySeries};
use nepcurate::service::{MatchMode, Tool};
use nepcurate::{Frame, InfoValue, ParityKind, RadiiTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIG_TYPES: [&str; 5] = ["bulk_a", "bulk_b", "md_g1_300K", "md_g2_600K", "surface"];

#[derive(Debug, Clone)]
pub enum Step {
    Tool(Tool),
    Delete,
    Undo,
}

/// Writes `train.xyz` plus energy and force parity files; returns the
/// per-frame energy and force errors by frame id.
pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n);
    let mut energy = ParitySeries::new(ParityKind::Energy, 1);
    let mut force = ParitySeries::new(ParityKind::Force, 3);
    let (mut e_err, mut f_err) = (Vec::new(), Vec::new());
    for uid in 0..n {
        let atoms = rng.random_range(2..5);
        let species: Vec<String> = (0..atoms)
            .map(|k| if k % 2 == 0 { "Cs" } else { "I" }.to_string())
            .collect();
        let positions: Vec<[f64; 3]> = (0..atoms)
            .map(|k| {
                [
                    k as f64 * rng.random_range(1.8..4.5),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                ]
            })
            .collect();
        let mut f = Frame::molecule(species, positions);
        f.set_config_type(CONFIG_TYPES[rng.random_range(0..CONFIG_TYPES.len())]);
        f.info.insert("uid".into(), InfoValue::Number(uid as f64));
        let e = rng.random_range(-5.0..0.0);
        let pe = e + rng.random_range(-0.1..0.1);
        f.energy = Some(e);
        energy.push(&[pe], &[e]);
        e_err.push((pe - e).abs());
        let mut rows = Vec::new();
        let mut total = 0.0;
        for _ in 0..atoms {
            let r: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let p: [f64; 3] = r.map(|x| x + rng.random_range(-0.2..0.2));
            total += (0..3).map(|c| (p[c] - r[c]).abs()).sum::<f64>();
            force.push(&p, &r);
            rows.push(r);
        }
        f.forces = Some(rows);
        f_err.push(total);
        frames.push(f);
    }
    write_dataset(&frames, dir.join("train.xyz")).unwrap();
    write_parity(&energy, dir.join("energy_train.out")).unwrap();
    write_parity(&force, dir.join("force_train.out")).unwrap();
    (e_err, f_err)
}

pub fn random_script(len: usize, frames: usize, seed: u64) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alive = frames;
    (0..len)
        .map(|_| match rng.random_range(0..100) {
            0..=24 => {
                let k = rng.random_range(1..8);
                let ids = (0..k).map(|_| rng.random_range(0..alive.max(1))).collect();
                Step::Tool(Tool::SelectIds { ids })
            }
            25..=34 => {
                let ids = (0..3).map(|_| rng.random_range(0..alive.max(1))).collect();
                Step::Tool(Tool::DeselectIds { ids })
            }
            35..=39 => Step::Tool(Tool::Invert),
            40..=49 => {
                let (pattern, mode) = match rng.random_range(0..3) {
                    0 => ("md_", MatchMode::Prefix),
                    1 => ("_b", MatchMode::Suffix),
                    _ => ("g2", MatchMode::Contains),
                };
                Step::Tool(Tool::SearchConfigType {
                    pattern: pattern.into(),
                    mode,
                })
            }
            50..=53 => Step::Tool(Tool::SelectMatched),
            54..=56 => Step::Tool(Tool::ClearSearch),
            57..=64 => {
                let kind = if rng.random() {
                    ParityKind::Energy
                } else {
                    ParityKind::Force
                };
                Step::Tool(Tool::MaxError {
                    n: rng.random_range(0..6),
                    kind,
                })
            }
            65..=67 => Step::Tool(Tool::Nonphysical { coeff: None }),
            68..=70 => Step::Tool(Tool::Fps {
                max_count: alive.saturating_sub(rng.random_range(1..4)),
                min_distance: 0.0,
            }),
            71..=87 => {
                // Keep enough frames around for the id-based tools.
                if alive > 40 {
                    alive -= alive / 40;
                }
                Step::Delete
            }
            _ => Step::Undo,
        })
        .collect()
}

/// Expected state keyed by frame id. Frames never reorder, so the session
/// view is the alive ids in ascending order.
pub struct Oracle {
    pub alive: Vec<bool>,
    pub selected: Vec<bool>,
    pub matched: Vec<bool>,
    config_types: Vec<String>,
    physical: Vec<bool>,
    errors: [Vec<f64>; 2],
    descriptors: Vec<Vec<f64>>,
    undo: Vec<Vec<usize>>,
}

impl Oracle {
    pub fn new(dir: &Path, errors: (Vec<f64>, Vec<f64>)) -> Self {
        let frames = nepcurate::exyzio::read_dataset(dir.join("train.xyz")).unwrap();
        let elements = nepcurate::surrogate::DescriptorSpec::elements_of(&frames);
        let spec = nepcurate::surrogate::DescriptorSpec::new(5.0, 4, elements).unwrap();
        let radii = RadiiTable::cordero();
        let n = frames.len();
        Oracle {
            alive: vec![true; n],
            selected: vec![false; n],
            matched: vec![false; n],
            config_types: frames.iter().map(|f| f.config_type().unwrap().to_string()).collect(),
            physical: frames.iter().map(|f| brute_physical(f, &radii)).collect(),
            errors: [errors.0, errors.1],
            descriptors: frames
                .iter()
                .map(|f| nepcurate::surrogate::structure_descriptor(f, &spec).unwrap())
                .collect(),
            undo: Vec::new(),
        }
    }

    pub fn view(&self) -> Vec<usize> {
        (0..self.alive.len()).filter(|&u| self.alive[u]).collect()
    }

    fn ids(&self, positions: &[usize]) -> Vec<usize> {
        let v = self.view();
        positions.iter().map(|&p| v[p]).collect()
    }

    fn top(&self, values: &[f64], n: usize) -> Vec<usize> {
        let v = self.view();
        let mut order = v.clone();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
        order.truncate(n);
        order
    }

    /// Returns false when the step must be an error in the session too.
    pub fn apply(&mut self, step: &Step) -> bool {
        let live = self.view();
        match step {
            Step::Tool(t) => match t {
                Tool::SelectIds { ids } | Tool::DeselectIds { ids } => {
                    if ids.iter().any(|&i| i >= live.len()) {
                        return false;
                    }
                    let on = matches!(t, Tool::SelectIds { .. });
                    for u in self.ids(ids) {
                        self.selected[u] = on;
                    }
                }
                Tool::Invert => live.iter().for_each(|&u| self.selected[u] = !self.selected[u]),
                Tool::SearchConfigType { pattern, mode } => {
                    for &u in &live {
                        let c = &self.config_types[u];
                        self.matched[u] = match mode {
                            MatchMode::Prefix => c.starts_with(pattern.as_str()),
                            MatchMode::Suffix => c.ends_with(pattern.as_str()),
                            MatchMode::Contains => c.contains(pattern.as_str()),
                        };
                    }
                }
                Tool::SelectMatched => live.iter().for_each(|&u| self.selected[u] = self.matched[u]),
                Tool::ClearSearch => live.iter().for_each(|&u| self.matched[u] = false),
                Tool::MaxError { n, kind } => {
                    let k = usize::from(*kind == ParityKind::Force);
                    for u in self.top(&self.errors[k].clone(), *n as usize) {
                        self.selected[u] = true;
                    }
                }
                Tool::Nonphysical { .. } => live
                    .iter()
                    .filter(|&&u| !self.physical[u])
                    .for_each(|&u| self.selected[u] = true),
                Tool::Fps { max_count, .. } => {
                    if live.is_empty() {
                        return true;
                    }
                    let pts: Vec<Vec<f64>> = live.iter().map(|&u| self.descriptors[u].clone()).collect();
                    let dim = pts[0].len();
                    let mean: Vec<f64> = (0..dim)
                        .map(|c| pts.iter().map(|p| p[c]).sum::<f64>() / pts.len() as f64)
                        .collect();
                    let far = |p: &Vec<f64>| p.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>().sqrt();
                    let mut seed = 0;
                    for k in 1..pts.len() {
                        if far(&pts[k]) > far(&pts[seed]) {
                            seed = k;
                        }
                    }
                    let (kept, _) = super::reference_fps(&pts, *max_count, 0.0, seed);
                    let kept = if *max_count == 0 { Vec::new() } else { kept };
                    for (k, &u) in live.iter().enumerate() {
                        if !kept.contains(&k) {
                            self.selected[u] = true;
                        }
                    }
                }
            },
            Step::Delete => {
                let gone: Vec<usize> = live.iter().copied().filter(|&u| self.selected[u]).collect();
                if !gone.is_empty() {
                    gone.iter().for_each(|&u| self.alive[u] = false);
                    self.undo.push(gone);
                    if self.undo.len() > nepcurate::service::UNDO_DEPTH {
                        self.undo.remove(0);
                    }
                }
            }
            Step::Undo => {
                if let Some(back) = self.undo.pop() {
                    back.iter().for_each(|&u| self.alive[u] = true);
                }
            }
        }
        true
    }
}

/// Bond screen by direct pair enumeration (the fixture frames are molecules).
fn brute_physical(f: &Frame, radii: &RadiiTable) -> bool {
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            let d = nepcurate::geometry::norm(nepcurate::geometry::sub(f.positions[i], f.positions[j]));
            if d < radii.threshold(&f.species[i], &f.species[j]).unwrap() {
                return false;
            }
        }
    }
    true
}

pub fn uid(f: &Frame) -> usize {
    f.info["uid"].as_f64().unwrap() as usize
}

/// Runs `steps` scripted operations against a fresh session over `n` frames
/// and checks the session against the oracle after every step and after the
/// exports. Returns the number of steps checked.
pub fn replay(dir: &Path, n: usize, steps: usize, seed: u64) -> Result<usize, String> {
    use nepcurate::service::{open_session, ExportRequest, SessionOptions};

    let errors = write_fixture(dir, n, seed);
    let mut oracle = Oracle::new(dir, errors);
    let (mut session, report) = open_session(dir, SessionOptions::default()).map_err(|e| e.to_string())?;
    if !report.cache_hit {
        return Err("parity files were not picked up".into());
    }
    for (k, step) in random_script(steps, n, seed ^ 0x5eed).iter().enumerate() {
        let ok = oracle.apply(step);
        let got = match step {
            Step::Tool(t) => session.apply_tool(t).map(|_| ()),
            Step::Delete => Ok(drop(session.delete_selected())),
            Step::Undo => Ok(drop(session.undo())),
        };
        if got.is_ok() != ok {
            return Err(format!(
                "step {k} {step:?}: session returned {got:?}, oracle expected ok={ok}"
            ));
        }
        let view = oracle.view();
        let ids: Vec<usize> = session.frames().iter().map(uid).collect();
        if ids != view {
            return Err(format!("step {k} {step:?}: frame ids diverge"));
        }
        let sel: Vec<usize> = (0..view.len()).filter(|&p| oracle.selected[view[p]]).collect();
        let mat: Vec<usize> = (0..view.len()).filter(|&p| oracle.matched[view[p]]).collect();
        if session.selected() != sel || session.matched() != mat {
            return Err(format!("step {k} {step:?}: flags diverge"));
        }
    }

    let out = dir.join("exported.xyz");
    session
        .export(&ExportRequest::Dataset { path: out.clone() })
        .map_err(|e| e.to_string())?;
    let back = nepcurate::exyzio::read_dataset(&out).map_err(|e| e.to_string())?;
    if back != session.frames() {
        return Err("exported dataset does not re-parse to the session frames".into());
    }
    let csv = dir.join("descriptors.csv");
    let r = session
        .export(&ExportRequest::Descriptors { path: csv.clone() })
        .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    if rows.len() != r.rows {
        return Err("descriptor export row count".into());
    }
    let descriptors = session.descriptors().map_err(|e| e.to_string())?.to_vec();
    for row in &rows {
        if row[1..] != descriptors[row[0] as usize][..] {
            return Err("descriptor export does not re-parse".into());
        }
    }
    if !session.frames().is_empty() {
        let one = dir.join("frame0.xyz");
        session
            .export(&ExportRequest::FrameXyz {
                index: 0,
                path: one.clone(),
            })
            .map_err(|e| e.to_string())?;
        let f = nepcurate::exyzio::read_dataset(&one).map_err(|e| e.to_string())?;
        if f.len() != 1 || f[0] != session.frames()[0] {
            return Err("frame export does not re-parse".into());
        }
    }
    let proj = dir.join("projection.csv");
    session
        .export(&ExportRequest::Projection { path: proj.clone() })
        .map_err(|e| e.to_string())?;
    let lines = std::fs::read_to_string(&proj)
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    if lines != session.frames().len() + 1 {
        return Err("projection export row count".into());
    }
    Ok(steps)
}
