//! Velocity-Verlet molecular dynamics with an optional Langevin thermostat.
//!
//! Units: Å, fs, amu, eV, K.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exyzio::{Frame, InfoValue, Vec3};
use crate::surrogate::Potential;

/// Boltzmann constant in eV/K.
pub const KB: f64 = 8.617333262e-5;
/// 1 eV/(Å·amu) in Å/fs².
pub const ACCEL: f64 = 9.648533e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdParams {
    /// Time step in fs.
    #[serde(default = "default_timestep")]
    pub timestep: f64,
    /// Langevin friction in 1/fs.
    #[serde(default = "default_friction")]
    pub friction: f64,
    /// Off integrates at constant energy.
    #[serde(default = "yes")]
    pub thermostat: bool,
    /// Steps between trajectory snapshots.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Largest tolerated force component norm in eV/Å.
    #[serde(default = "default_max_force")]
    pub max_force: f64,
}

fn default_timestep() -> f64 {
    1.0
}
fn default_friction() -> f64 {
    0.01
}
fn yes() -> bool {
    true
}
fn default_stride() -> usize {
    10
}
fn default_max_force() -> f64 {
    100.0
}

impl Default for MdParams {
    fn default() -> Self {
        MdParams {
            timestep: default_timestep(),
            friction: default_friction(),
            thermostat: true,
            stride: default_stride(),
            max_force: default_max_force(),
        }
    }
}

impl MdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(Error::Config("md timestep must be positive".into()));
        }
        if !(self.friction >= 0.0) || self.stride == 0 || !(self.max_force > 0.0) {
            return Err(Error::Config(
                "md friction must be non-negative, stride and max_force positive".into(),
            ));
        }
        Ok(())
    }
}

fn kinetic(v: &[Vec3], m: &[f64]) -> f64 {
    v.iter()
        .zip(m)
        .map(|(v, m)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum::<f64>()
        / ACCEL
}

fn snapshot(base: &Frame, x: &[Vec3], step: usize, dt: f64, pot: f64, kin: f64) -> Frame {
    let mut f = base.without_labels();
    f.positions = x.to_vec();
    let n = x.len().max(1) as f64;
    let info = [
        ("md_step", step as f64),
        ("md_time_fs", step as f64 * dt),
        ("md_temperature", 2.0 * kin / (3.0 * n * KB)),
        ("md_potential_energy", pot),
        ("md_kinetic_energy", kin),
    ];
    for (k, v) in info {
        f.info.insert(k.to_string(), InfoValue::Number(v));
    }
    f
}

/// Runs `duration` ps at `temperature` K from `frame`, snapshotting every
/// `params.stride` steps. Snapshots carry the predicted potential and kinetic
/// energies and the instantaneous temperature in their info fields.
pub fn run_md<P: Potential + ?Sized>(
    frame: &Frame,
    potential: &P,
    duration: f64,
    temperature: f64,
    params: &MdParams,
    seed: u64,
) -> Result<Vec<Frame>> {
    params.validate()?;
    if !(duration >= 0.0) || !(temperature >= 0.0) {
        return Err(Error::invalid("md duration and temperature must be non-negative"));
    }
    frame.validate()?;
    let n = frame.len();
    let masses: Vec<f64> = frame
        .species
        .iter()
        .map(|s| crate::elements::mass(s))
        .collect::<Result<_>>()?;
    let dt = params.timestep;
    let steps = (duration * 1000.0 / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };

    let mut v: Vec<Vec3> = masses
        .iter()
        .map(|m| {
            let s = (KB * temperature * ACCEL / m).sqrt();
            [s * gauss(), s * gauss(), s * gauss()]
        })
        .collect();
    if n > 1 {
        let total: f64 = masses.iter().sum();
        let mut p = [0.0; 3];
        for (vi, m) in v.iter().zip(&masses) {
            for a in 0..3 {
                p[a] += m * vi[a];
            }
        }
        for vi in v.iter_mut() {
            for a in 0..3 {
                vi[a] -= p[a] / total;
            }
        }
    }

    let mut x = frame.positions.clone();
    let mut work = frame.without_labels();
    let mut forces_at = |x: &[Vec3], step: usize| -> Result<(f64, Vec<Vec3>)> {
        work.positions.copy_from_slice(x);
        let ev = potential.evaluate(&work)?;
        for (atom, f) in ev.forces.iter().enumerate() {
            let mag = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
            if !(mag <= params.max_force) {
                return Err(Error::Diverged { step, atom, force: mag });
            }
        }
        if !ev.energy.is_finite() {
            return Err(Error::Diverged {
                step,
                atom: 0,
                force: f64::NAN,
            });
        }
        Ok((ev.energy, ev.forces))
    };

    let (mut pot, mut f) = forces_at(&x, 0)?;
    let mut out = vec![snapshot(frame, &x, 0, dt, pot, kinetic(&v, &masses))];
    let c1 = (-params.friction * dt).exp();
    let c2 = (1.0 - c1 * c1).sqrt();
    for step in 1..=steps {
        for i in 0..n {
            let k = 0.5 * dt * ACCEL / masses[i];
            for a in 0..3 {
                v[i][a] += k * f[i][a];
                x[i][a] += 0.5 * dt * v[i][a];
            }
        }
        if params.thermostat {
            for i in 0..n {
                let s = (KB * temperature * ACCEL / masses[i]).sqrt();
                for a in 0..3 {
                    v[i][a] = c1 * v[i][a] + c2 * s * gauss();
                }
            }
        }
        for i in 0..n {
            for a in 0..3 {
                x[i][a] += 0.5 * dt * v[i][a];
            }
        }
        (pot, f) = forces_at(&x, step)?;
        for i in 0..n {
            let k = 0.5 * dt * ACCEL / masses[i];
            for a in 0..3 {
                v[i][a] += k * f[i][a];
            }
        }
        if step % params.stride == 0 {
            out.push(snapshot(frame, &x, step, dt, pot, kinetic(&v, &masses)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::calc::LennardJones;

    #[test]
    fn zero_duration_returns_the_start() {
        let f = Frame::molecule(vec!["Ar".into(), "Ar".into()], vec![[0.0; 3], [3.8, 0.0, 0.0]]);
        let t = run_md(&f, &LennardJones::default(), 0.0, 300.0, &MdParams::default(), 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].positions, f.positions);
    }

    #[test]
    fn overlapping_atoms_diverge() {
        let f = Frame::molecule(vec!["Ar".into(), "Ar".into()], vec![[0.0; 3], [0.5, 0.0, 0.0]]);
        let r = run_md(&f, &LennardJones::default(), 1.0, 10.0, &MdParams::default(), 1);
        assert!(matches!(r, Err(Error::Diverged { step: 0, .. })));
    }
}
