//! Species-resolved Chebyshev radial descriptor with a cosine cutoff.
//!
//! Component `s·n_rad + n` of atom i sums `T_n(2r/r_cut − 1)·f_c(r)` over
//! neighbors of species `s`, where `f_c(r) = ½(1 + cos(πr/r_cut))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exyzio::{Frame, Vec3};
use crate::geometry::neighbor_list;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSpec {
    pub r_cut: f64,
    pub n_rad: usize,
    pub elements: Vec<String>,
}

impl DescriptorSpec {
    pub fn new(r_cut: f64, n_rad: usize, elements: Vec<String>) -> Result<Self> {
        let spec = DescriptorSpec { r_cut, n_rad, elements };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_cut > 0.0 && self.r_cut.is_finite()) {
            return Err(Error::invalid(format!(
                "descriptor cutoff must be positive, got {}",
                self.r_cut
            )));
        }
        if self.n_rad == 0 {
            return Err(Error::invalid("descriptor needs at least one radial function"));
        }
        if self.elements.is_empty() {
            return Err(Error::invalid("descriptor needs at least one element"));
        }
        for (k, e) in self.elements.iter().enumerate() {
            if self.elements[..k].contains(e) {
                return Err(Error::invalid(format!("element `{e}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.elements.len() * self.n_rad
    }

    pub fn species_index(&self, element: &str) -> Result<usize> {
        self.elements
            .iter()
            .position(|e| e == element)
            .ok_or_else(|| Error::UnknownElement(element.to_string()))
    }

    /// Elements of a dataset in order of first appearance.
    pub fn elements_of<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in frames {
            for s in &f.species {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }
}

/// Values and r-derivatives of the radial functions at distance `r`.
pub(crate) fn radial_terms(r: f64, r_cut: f64, values: &mut [f64], derivs: &mut [f64]) {
    let n_rad = values.len();
    if r >= r_cut {
        values.fill(0.0);
        derivs.fill(0.0);
        return;
    }
    let fc = 0.5 * (1.0 + (PI * r / r_cut).cos());
    let dfc = -0.5 * PI / r_cut * (PI * r / r_cut).sin();
    let x = 2.0 * r / r_cut - 1.0;
    let dx = 2.0 / r_cut;
    // Chebyshev recurrence for T_n and dT_n/dx.
    let (mut t_prev, mut t_cur) = (1.0, x);
    let (mut d_prev, mut d_cur) = (0.0, 1.0);
    for n in 0..n_rad {
        let (t, dt) = match n {
            0 => (1.0, 0.0),
            1 => (x, 1.0),
            _ => {
                let t_next = 2.0 * x * t_cur - t_prev;
                let d_next = 2.0 * t_cur + 2.0 * x * d_cur - d_prev;
                t_prev = t_cur;
                t_cur = t_next;
                d_prev = d_cur;
                d_cur = d_next;
                (t_cur, d_cur)
            }
        };
        values[n] = t * fc;
        derivs[n] = dt * dx * fc + t * dfc;
    }
}

/// One (center, neighbor image) contribution with the radial derivatives needed for forces.
#[derive(Debug, Clone)]
pub(crate) struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub vector: Vec3,
    pub distance: f64,
    /// Offset of the neighbor species block in the descriptor.
    pub block: usize,
}

/// Descriptors of every atom of a frame plus the pair data for analytic gradients.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub n_atoms: usize,
    pub dim: usize,
    /// Row-major `n_atoms × dim`.
    pub q: Vec<f64>,
    pub(crate) pairs: Vec<PairTerm>,
    /// Row-major `pairs × n_rad` radial derivatives.
    pub(crate) grads: Vec<f64>,
    pub(crate) n_rad: usize,
}

impl FrameFeatures {
    pub fn compute(frame: &Frame, spec: &DescriptorSpec) -> Result<Self> {
        let species: Vec<usize> = frame
            .species
            .iter()
            .map(|s| spec.species_index(s))
            .collect::<Result<_>>()?;
        let n = frame.len();
        let dim = spec.dim();
        let n_rad = spec.n_rad;
        let mut q = vec![0.0; n * dim];
        let mut pairs = Vec::new();
        let mut grads = Vec::new();
        let mut vals = vec![0.0; n_rad];
        let mut ders = vec![0.0; n_rad];
        if n > 0 {
            let nl = neighbor_list(frame, spec.r_cut)?;
            for (i, neighbors) in nl.iter().enumerate() {
                for nb in neighbors {
                    if nb.distance >= spec.r_cut {
                        continue;
                    }
                    let block = species[nb.j] * n_rad;
                    radial_terms(nb.distance, spec.r_cut, &mut vals, &mut ders);
                    let row = &mut q[i * dim + block..i * dim + block + n_rad];
                    for (acc, v) in row.iter_mut().zip(&vals) {
                        *acc += v;
                    }
                    pairs.push(PairTerm {
                        i,
                        j: nb.j,
                        vector: nb.vector,
                        distance: nb.distance,
                        block,
                    });
                    grads.extend_from_slice(&ders);
                }
            }
        }
        Ok(FrameFeatures {
            n_atoms: n,
            dim,
            q,
            pairs,
            grads,
            n_rad,
        })
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.q[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean of the atomic descriptors.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..self.n_atoms {
            for (o, v) in out.iter_mut().zip(self.atom(i)) {
                *o += v;
            }
        }
        let n = self.n_atoms as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

pub fn atomic_descriptor(frame: &Frame, i: usize, spec: &DescriptorSpec) -> Result<Vec<f64>> {
    if i >= frame.len() {
        return Err(Error::invalid(format!(
            "atom index {i} out of range for {} atoms",
            frame.len()
        )));
    }
    Ok(FrameFeatures::compute(frame, spec)?.atom(i).to_vec())
}

/// Per-frame mean of the atomic descriptors.
pub fn structure_descriptor(frame: &Frame, spec: &DescriptorSpec) -> Result<Vec<f64>> {
    if frame.is_empty() {
        return Err(Error::invalid("structure descriptor of an empty frame"));
    }
    Ok(FrameFeatures::compute(frame, spec)?.mean())
}

/// Structure descriptors of a whole dataset, one row per frame.
pub fn structure_descriptors(frames: &[Frame], spec: &DescriptorSpec) -> Result<Vec<Vec<f64>>> {
    crate::par::map(frames, |f| structure_descriptor(f, spec))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(r_cut: f64, n_rad: usize) -> DescriptorSpec {
        DescriptorSpec::new(r_cut, n_rad, vec!["A".into(), "B".into()]).unwrap()
    }

    #[test]
    fn isolated_atom_is_zero() {
        let f = Frame::molecule(vec!["A".into()], vec![[0.0; 3]]);
        assert_eq!(atomic_descriptor(&f, 0, &spec2(4.0, 3)).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn dimer_at_cutoff_is_zero() {
        let f = Frame::molecule(vec!["A".into(), "B".into()], vec![[0.0; 3], [4.0, 0.0, 0.0]]);
        assert_eq!(atomic_descriptor(&f, 0, &spec2(4.0, 2)).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn dimer_at_half_cutoff() {
        let f = Frame::molecule(vec!["A".into(), "B".into()], vec![[0.0; 3], [2.0, 0.0, 0.0]]);
        let q = atomic_descriptor(&f, 0, &spec2(4.0, 2)).unwrap();
        assert_eq!(q[0], 0.0);
        assert_eq!(q[1], 0.0);
        assert!((q[2] - 0.5).abs() < 1e-15);
        assert!(q[3].abs() < 1e-15);
    }

    #[test]
    fn radial_derivative_matches_finite_difference() {
        let (mut v0, mut d0) = (vec![0.0; 6], vec![0.0; 6]);
        let (mut vp, mut dp) = (vec![0.0; 6], vec![0.0; 6]);
        let (mut vm, mut dm) = (vec![0.0; 6], vec![0.0; 6]);
        for &r in &[0.3, 1.1, 2.5, 3.9] {
            let h = 1e-6;
            radial_terms(r, 4.0, &mut v0, &mut d0);
            radial_terms(r + h, 4.0, &mut vp, &mut dp);
            radial_terms(r - h, 4.0, &mut vm, &mut dm);
            for n in 0..6 {
                let fd = (vp[n] - vm[n]) / (2.0 * h);
                assert!((fd - d0[n]).abs() < 1e-8, "n={n} r={r}: {fd} vs {}", d0[n]);
            }
        }
    }

    #[test]
    fn unknown_species_is_an_error() {
        let f = Frame::molecule(vec!["C".into()], vec![[0.0; 3]]);
        assert!(matches!(
            atomic_descriptor(&f, 0, &spec2(4.0, 2)),
            Err(Error::UnknownElement(_))
        ));
    }

    #[test]
    fn empty_frame_has_no_structure_descriptor() {
        let f = Frame::molecule(vec![], vec![]);
        assert!(structure_descriptor(&f, &spec2(4.0, 2)).is_err());
    }

    #[test]
    fn elements_in_first_appearance_order() {
        let a = Frame::molecule(vec!["I".into(), "Cs".into()], vec![[0.0; 3]; 2]);
        let b = Frame::molecule(vec!["Pb".into(), "I".into()], vec![[0.0; 3]; 2]);
        assert_eq!(DescriptorSpec::elements_of([&a, &b]), ["I", "Cs", "Pb"]);
    }
}
