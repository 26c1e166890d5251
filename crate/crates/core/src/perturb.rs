//! Perturbed structures from random symmetric cell strain and atomic rattling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exyzio::{Frame, Mat3, Vec3};
use crate::geometry::{is_physical, mat_mul, vec_mat, RadiiTable};

/// Attempts per structure before the non-physical filter gives up.
pub const MAX_FILTER_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub n: usize,
    /// Bound on each strain component.
    pub cell_amplitude: f64,
    /// Bound on the displacement length of each atom, in Å.
    pub disp_amplitude: f64,
    pub filter: bool,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            n: 100,
            cell_amplitude: 0.04,
            disp_amplitude: 0.3,
            filter: false,
            seed: 0,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("perturbation count must be at least 1"));
        }
        for (name, v) in [("cell", self.cell_amplitude), ("displacement", self.disp_amplitude)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} amplitude must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A structure to perturb plus the name used in `config_type`.
#[derive(Debug, Clone)]
pub struct Base {
    pub name: String,
    pub frame: Frame,
}

/// Symmetric strain with every component uniform in `[-c, c]`.
pub fn random_strain(c: f64, rng: &mut impl Rng) -> Mat3 {
    let mut e = [[0.0; 3]; 3];
    for r in 0..3 {
        for k in r..3 {
            let v = if c > 0.0 { rng.random_range(-c..=c) } else { 0.0 };
            e[r][k] = v;
            e[k][r] = v;
        }
    }
    e
}

/// Uniform point in the ball of radius `d`, by rejection from the cube.
pub fn random_in_ball(d: f64, rng: &mut impl Rng) -> Vec3 {
    if d <= 0.0 {
        return [0.0; 3];
    }
    loop {
        let v: Vec3 = [
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ];
        if v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= 1.0 {
            return v.map(|x| x * d);
        }
    }
}

/// Applies `cell·(I + ε)` to the cell and positions, then rattles each atom.
pub fn apply_perturbation(base: &Frame, strain: &Mat3, displacements: &[Vec3]) -> Frame {
    let mut map = *strain;
    for (k, row) in map.iter_mut().enumerate() {
        row[k] += 1.0;
    }
    let mut out = base.without_labels();
    out.cell = mat_mul(&base.cell, &map);
    for (p, dr) in out.positions.iter_mut().zip(displacements) {
        let q = vec_mat(*p, &map);
        *p = [q[0] + dr[0], q[1] + dr[1], q[2] + dr[2]];
    }
    out
}

fn draw(base: &Frame, spec: &PerturbSpec, rng: &mut impl Rng) -> Frame {
    let strain = random_strain(spec.cell_amplitude, rng);
    let disp: Vec<Vec3> = (0..base.len())
        .map(|_| random_in_ball(spec.disp_amplitude, rng))
        .collect();
    apply_perturbation(base, &strain, &disp)
}

/// One perturbed copy of `base`, tagged `config_type=perturb_<name>`.
/// With `spec.filter`, draws are repeated until the result passes the bond screen.
pub fn perturb_structure(base: &Base, spec: &PerturbSpec, radii: &RadiiTable, rng: &mut impl Rng) -> Result<Frame> {
    let mut frame = if spec.filter {
        let mut found = None;
        for _ in 0..MAX_FILTER_ATTEMPTS {
            let f = draw(&base.frame, spec, rng);
            if is_physical(&f, radii)? {
                found = Some(f);
                break;
            }
        }
        found.ok_or_else(|| {
            Error::invalid(format!(
                "no physical perturbation of `{}` in {MAX_FILTER_ATTEMPTS} attempts",
                base.name
            ))
        })?
    } else {
        draw(&base.frame, spec, rng)
    };
    frame.set_config_type(format!("perturb_{}", base.name));
    Ok(frame)
}

/// Random stream of output frame `index`.
pub fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `spec.n` perturbed frames, taking bases round-robin.
pub fn generate_set(bases: &[Base], spec: &PerturbSpec, radii: &RadiiTable) -> Result<Vec<Frame>> {
    spec.validate()?;
    if bases.is_empty() {
        return Err(Error::invalid("no base structures to perturb"));
    }
    for b in bases {
        b.frame
            .validate()
            .map_err(|e| Error::invalid(format!("base `{}`: {e}", b.name)))?;
        if spec.filter && !is_physical(&b.frame, radii)? {
            return Err(Error::invalid(format!("base `{}` is itself non-physical", b.name)));
        }
    }
    crate::par::map_range(spec.n, |k| {
        let mut rng = frame_rng(spec.seed, k);
        perturb_structure(&bases[k % bases.len()], spec, radii, &mut rng)
    })
    .into_iter()
    .collect()
}
