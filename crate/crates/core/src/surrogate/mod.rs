//! Single-hidden-layer site-energy network over the radial descriptor.
//!
//! The site energy of atom i is
//! `U_i = Σ_μ w1[μ]·tanh(Σ_ν w0[μ,ν]·q_ν − b0[μ]) − b1` and the total energy
//! is the sum of site energies. Forces and the virial are obtained
//! analytically through the descriptor's radial derivatives.

mod descriptor;
mod snes;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use descriptor::{atomic_descriptor, structure_descriptor, structure_descriptors, DescriptorSpec, FrameFeatures};
pub use snes::{population_size, train, train_features, LossWeights, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::exyzio::{fmt_f64, Frame, ParityKind, ParitySeries, Vec3};

/// Energy, forces and virial of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub forces: Vec<Vec3>,
    /// Voigt order xx, yy, zz, yz, xz, xy, in eV.
    pub virial: [f64; 6],
}

/// Anything that yields energies and forces for a frame.
pub trait Potential: Sync {
    fn evaluate(&self, frame: &Frame) -> Result<Evaluation>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub spec: DescriptorSpec,
    pub n_neu: usize,
    /// Row-major `n_neu × dim`.
    pub w0: Vec<f64>,
    pub b0: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: f64,
}

const MODEL_HEADER: &str = "nepcurate-model v1";

impl SurrogateModel {
    pub fn zeros(spec: DescriptorSpec, n_neu: usize) -> Self {
        let dim = spec.dim();
        SurrogateModel {
            spec,
            n_neu,
            w0: vec![0.0; n_neu * dim],
            b0: vec![0.0; n_neu],
            w1: vec![0.0; n_neu],
            b1: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n_params(&self) -> usize {
        self.n_neu * (self.dim() + 2) + 1
    }

    /// Parameters flattened as w0, b0, w1, b1.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w0);
        p.extend_from_slice(&self.b0);
        p.extend_from_slice(&self.w1);
        p.push(self.b1);
        p
    }

    pub fn from_params(spec: DescriptorSpec, n_neu: usize, p: &[f64]) -> Result<Self> {
        let dim = spec.dim();
        let expected = n_neu * (dim + 2) + 1;
        if p.len() != expected {
            return Err(Error::Shape(format!("expected {expected} parameters, got {}", p.len())));
        }
        let (w0, rest) = p.split_at(n_neu * dim);
        let (b0, rest) = rest.split_at(n_neu);
        let (w1, rest) = rest.split_at(n_neu);
        Ok(SurrogateModel {
            spec,
            n_neu,
            w0: w0.to_vec(),
            b0: b0.to_vec(),
            w1: w1.to_vec(),
            b1: rest[0],
        })
    }

    fn check(&self) -> Result<()> {
        self.spec.validate()?;
        let dim = self.dim();
        if self.w0.len() != self.n_neu * dim || self.b0.len() != self.n_neu || self.w1.len() != self.n_neu {
            return Err(Error::Shape(
                "network parameter shapes disagree with n_neu and the descriptor".into(),
            ));
        }
        if self.params().iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    /// Site energy and its gradient with respect to the descriptor.
    fn site_energy_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let dim = q.len();
        grad.fill(0.0);
        let mut u = -self.b1;
        for mu in 0..self.n_neu {
            let row = &self.w0[mu * dim..(mu + 1) * dim];
            let h: f64 = row.iter().zip(q).map(|(w, x)| w * x).sum::<f64>() - self.b0[mu];
            let t = h.tanh();
            u += self.w1[mu] * t;
            let scale = self.w1[mu] * (1.0 - t * t);
            for (g, w) in grad.iter_mut().zip(row) {
                *g += scale * w;
            }
        }
        u
    }

    fn site_energy_only(&self, q: &[f64]) -> f64 {
        let dim = q.len();
        let mut u = -self.b1;
        for mu in 0..self.n_neu {
            let row = &self.w0[mu * dim..(mu + 1) * dim];
            let h: f64 = row.iter().zip(q).map(|(w, x)| w * x).sum::<f64>() - self.b0[mu];
            u += self.w1[mu] * h.tanh();
        }
        u
    }

    /// Total energy from precomputed features.
    pub fn energy_from_features(&self, feats: &FrameFeatures) -> f64 {
        (0..feats.n_atoms).map(|i| self.site_energy_only(feats.atom(i))).sum()
    }

    /// Energy, forces and virial from precomputed features.
    pub fn evaluate_features(&self, feats: &FrameFeatures) -> Evaluation {
        let dim = feats.dim;
        let mut dudq = vec![0.0; feats.n_atoms * dim];
        let mut energy = 0.0;
        for i in 0..feats.n_atoms {
            energy += self.site_energy_grad(feats.atom(i), &mut dudq[i * dim..(i + 1) * dim]);
        }
        let mut forces = vec![[0.0; 3]; feats.n_atoms];
        let mut virial = [0.0; 6];
        let n_rad = feats.n_rad;
        for (k, pair) in feats.pairs.iter().enumerate() {
            let g = &feats.grads[k * n_rad..(k + 1) * n_rad];
            let du = &dudq[pair.i * dim + pair.block..pair.i * dim + pair.block + n_rad];
            let c: f64 = du.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / pair.distance;
            // dE/d(vector) = c · vector
            let v = pair.vector;
            let de = [c * v[0], c * v[1], c * v[2]];
            for a in 0..3 {
                forces[pair.j][a] -= de[a];
                forces[pair.i][a] += de[a];
            }
            virial[0] -= v[0] * de[0];
            virial[1] -= v[1] * de[1];
            virial[2] -= v[2] * de[2];
            virial[3] -= v[1] * de[2];
            virial[4] -= v[0] * de[2];
            virial[5] -= v[0] * de[1];
        }
        Evaluation { energy, forces, virial }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::exyzio::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| e.in_file(path))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let _ = writeln!(
            s,
            "elements {} {}",
            self.spec.elements.len(),
            self.spec.elements.join(" ")
        );
        let _ = writeln!(s, "r_cut {}", fmt_f64(self.spec.r_cut));
        let _ = writeln!(s, "n_rad {}", self.spec.n_rad);
        let _ = writeln!(s, "n_neu {}", self.n_neu);
        let _ = writeln!(s, "w0");
        for row in self.w0.chunks(self.dim().max(1)) {
            let _ = writeln!(s, "{}", join(row));
        }
        let _ = writeln!(s, "b0\n{}", join(&self.b0));
        let _ = writeln!(s, "w1\n{}", join(&self.w1));
        let _ = writeln!(s, "b1\n{}", fmt_f64(self.b1));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let bad = |m: &str| Error::invalid(format!("model file: {m}"));
        if lines.first() != Some(&MODEL_HEADER) {
            return Err(bad(&format!("missing `{MODEL_HEADER}` header")));
        }
        let mut cur = Cursor {
            lines: &lines[1..],
            at: 0,
        };
        let elements = cur.field("elements")?;
        let count: usize = elements
            .first()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad("element count"))?;
        if elements.len() != count + 1 {
            return Err(bad("element count does not match the list"));
        }
        let elements = elements[1..].to_vec();
        let scalar = |v: Vec<String>, name: &str| -> Result<String> {
            match v.as_slice() {
                [x] => Ok(x.clone()),
                _ => Err(bad(&format!("`{name}` takes one value"))),
            }
        };
        let r_cut: f64 = scalar(cur.field("r_cut")?, "r_cut")?
            .parse()
            .map_err(|_| bad("r_cut"))?;
        let n_rad: usize = scalar(cur.field("n_rad")?, "n_rad")?
            .parse()
            .map_err(|_| bad("n_rad"))?;
        let n_neu: usize = scalar(cur.field("n_neu")?, "n_neu")?
            .parse()
            .map_err(|_| bad("n_neu"))?;
        let spec = DescriptorSpec::new(r_cut, n_rad, elements)?;
        let dim = spec.dim();

        let mut blocks = Vec::new();
        for (name, rows) in [("w0", n_neu), ("b0", 1), ("w1", 1), ("b1", 1)] {
            if !cur.field(name)?.is_empty() {
                return Err(bad(&format!("`{name}` header takes no values")));
            }
            let mut out = Vec::new();
            for _ in 0..rows {
                for t in cur.next_line(name)?.split_whitespace() {
                    out.push(
                        t.parse::<f64>()
                            .map_err(|_| bad(&format!("bad number `{t}` in `{name}`")))?,
                    );
                }
            }
            blocks.push(out);
        }
        let b1 = blocks.pop().unwrap();
        let w1 = blocks.pop().unwrap();
        let b0 = blocks.pop().unwrap();
        let w0 = blocks.pop().unwrap();
        if b1.len() != 1 {
            return Err(bad("b1 takes one value"));
        }
        if w0.len() != n_neu * dim {
            return Err(bad(&format!("w0 has {} values, expected {}", w0.len(), n_neu * dim)));
        }
        let model = SurrogateModel {
            spec,
            n_neu,
            w0,
            b0,
            w1,
            b1: b1[0],
        };
        model.check()?;
        Ok(model)
    }
}

struct Cursor<'a> {
    lines: &'a [&'a str],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn next_line(&mut self, what: &str) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.at)
            .copied()
            .ok_or_else(|| Error::invalid(format!("model file: missing `{what}`")))?;
        self.at += 1;
        Ok(line)
    }

    /// A `name value...` line, returning the values.
    fn field(&mut self, name: &str) -> Result<Vec<String>> {
        let line = self.next_line(name)?;
        let mut toks = line.split_whitespace().map(String::from);
        if toks.next().as_deref() != Some(name) {
            return Err(Error::invalid(format!("model file: expected `{name}`, found `{line}`")));
        }
        Ok(toks.collect())
    }
}

/// Site energy of one descriptor vector.
pub fn site_energy(q: &[f64], model: &SurrogateModel) -> Result<f64> {
    if q.len() != model.dim() || model.w0.len() != model.n_neu * q.len() {
        return Err(Error::Shape(format!(
            "descriptor has {} components, model expects {}",
            q.len(),
            model.dim()
        )));
    }
    Ok(model.site_energy_only(q))
}

/// Energy, forces and virial of a frame.
pub fn predict(frame: &Frame, model: &SurrogateModel) -> Result<Evaluation> {
    let feats = FrameFeatures::compute(frame, &model.spec)?;
    Ok(model.evaluate_features(&feats))
}

impl Potential for SurrogateModel {
    fn evaluate(&self, frame: &Frame) -> Result<Evaluation> {
        predict(frame, self)
    }
}

/// Root-mean-square of predicted minus reference over every component.
pub fn rmse(parity: &ParitySeries) -> Result<f64> {
    if parity.is_empty() {
        return Err(Error::invalid("RMSE of an empty series"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..parity.len() {
        for (p, r) in parity.pred(i).iter().zip(parity.reference(i)) {
            sum += (p - r) * (p - r);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Parity series of a model against the labels of a dataset. Energy and virial
/// rows are per atom; forces have one row per atom. Frames missing the label of
/// a kind are skipped for that kind, so `frame_index` maps rows to frames.
pub fn parity(frames: &[Frame], predictions: &[Evaluation], kind: ParityKind) -> ParitySeries {
    let mut out = ParitySeries::new(kind, kind.width());
    let mut index = Vec::new();
    for (k, (f, e)) in frames.iter().zip(predictions).enumerate() {
        let n = f.len().max(1) as f64;
        match kind {
            ParityKind::Energy => {
                if let Some(r) = f.energy {
                    out.push(&[e.energy / n], &[r / n]);
                    index.push(k);
                }
            }
            ParityKind::Force => {
                if let Some(r) = &f.forces {
                    for (p, r) in e.forces.iter().zip(r) {
                        out.push(p, r);
                        index.push(k);
                    }
                }
            }
            ParityKind::Virial => {
                if let Some(r) = &f.virial {
                    let p = e.virial.map(|x| x / n);
                    let r = r.map(|x| x / n);
                    out.push(&p, &r);
                    index.push(k);
                }
            }
            ParityKind::Stress => {}
        }
    }
    out.frame_index = Some(index);
    out
}

/// Hyperparameters read from a `nep.in`-style `key value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParameters {
    pub elements: Option<Vec<String>>,
    pub r_cut: f64,
    pub n_rad: usize,
    pub n_neu: usize,
    pub weights: LossWeights,
    pub generations: usize,
    pub seed: Option<u64>,
}

impl Default for HyperParameters {
    fn default() -> Self {
        HyperParameters {
            elements: None,
            r_cut: 5.0,
            n_rad: 4,
            n_neu: 10,
            weights: LossWeights::default(),
            generations: 2000,
            seed: None,
        }
    }
}

/// Keys of the native trainer's input that have no counterpart here.
const IGNORED_NEP_KEYS: &[&str] = &[
    "version",
    "basis_size",
    "l_max",
    "zbl",
    "batch",
    "population",
    "lambda_1",
    "lambda_shear",
    "force_delta",
    "model_type",
    "prediction",
    "use_typewise_cutoff",
    "fine_tune",
];

impl HyperParameters {
    pub fn parse(text: &str) -> Result<Self> {
        let mut hp = HyperParameters::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap();
            let vals: Vec<&str> = toks.collect();
            let bad = || Error::Config(format!("hyperparameter line {}: invalid `{line}`", ln + 1));
            let first = || vals.first().copied().ok_or_else(bad);
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            match key {
                "type" => {
                    let n = int(first()?)?;
                    if vals.len() != n + 1 {
                        return Err(bad());
                    }
                    hp.elements = Some(vals[1..].iter().map(|s| s.to_string()).collect());
                }
                // The radial value comes first; an angular value may follow.
                "cutoff" => hp.r_cut = num(first()?)?,
                "n_max" => hp.n_rad = int(first()?)? + 1,
                "neuron" => hp.n_neu = int(first()?)?,
                "lambda_e" => hp.weights.energy = num(first()?)?,
                "lambda_f" => hp.weights.force = num(first()?)?,
                "lambda_v" => hp.weights.virial = num(first()?)?,
                "lambda_2" => hp.weights.regularization = num(first()?)?,
                "generation" => hp.generations = int(first()?)?,
                "seed" => hp.seed = Some(first()?.parse().map_err(|_| bad())?),
                k if IGNORED_NEP_KEYS.contains(&k) => {}
                k => {
                    return Err(Error::Config(format!(
                        "hyperparameter line {}: unknown key `{k}`",
                        ln + 1
                    )))
                }
            }
        }
        hp.weights.validate()?;
        Ok(hp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(elements: &[&str], r_cut: f64, n_rad: usize) -> DescriptorSpec {
        DescriptorSpec::new(r_cut, n_rad, elements.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn zero_network_has_zero_energy() {
        let m = SurrogateModel::zeros(spec(&["A"], 4.0, 3), 4);
        assert_eq!(site_energy(&[0.3, -1.0, 2.0], &m).unwrap(), 0.0);
    }

    #[test]
    fn single_neuron_by_hand() {
        let mut m = SurrogateModel::zeros(spec(&["A", "B"], 4.0, 1), 1);
        m.w0 = vec![1.0, 1.0];
        m.w1 = vec![1.0];
        let u = site_energy(&[0.5, 0.5], &m).unwrap();
        assert!((u - 0.761_594_155_955_764_9).abs() < 1e-15, "{u}");
    }

    #[test]
    fn output_bias_is_subtracted() {
        let mut m = SurrogateModel::zeros(spec(&["A"], 4.0, 2), 3);
        m.b1 = 0.7;
        assert_eq!(site_energy(&[5.0, -2.0], &m).unwrap(), -0.7);
        assert!(site_energy(&[1.0], &m).is_err());
    }

    #[test]
    fn isolated_atoms_have_no_force() {
        let mut m = SurrogateModel::zeros(spec(&["A"], 3.0, 2), 2);
        m.w0 = vec![0.4, -0.2, 0.1, 0.3];
        m.b0 = vec![0.1, -0.3];
        m.w1 = vec![1.5, -0.5];
        m.b1 = 0.25;
        let f = Frame::molecule(vec!["A".into(), "A".into()], vec![[0.0; 3], [10.0, 0.0, 0.0]]);
        let e = predict(&f, &m).unwrap();
        let u0 = site_energy(&[0.0, 0.0], &m).unwrap();
        assert!((e.energy - 2.0 * u0).abs() < 1e-15);
        assert_eq!(e.forces, vec![[0.0; 3]; 2]);
        assert_eq!(e.virial, [0.0; 6]);
    }

    #[test]
    fn model_text_round_trip() {
        let mut m = SurrogateModel::zeros(spec(&["Cs", "Pb", "I"], 6.5, 3), 4);
        let p: Vec<f64> = (0..m.n_params()).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        m = SurrogateModel::from_params(m.spec.clone(), 4, &p).unwrap();
        let back = SurrogateModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(SurrogateModel::from_text("nep4 2 A B\n").is_err());
    }

    #[test]
    fn rmse_cases() {
        let mut s = ParitySeries::new(ParityKind::Energy, 1);
        assert!(rmse(&s).is_err());
        s.push(&[4.0], &[1.0]);
        assert_eq!(rmse(&s).unwrap(), 3.0);
        let mut same = ParitySeries::new(ParityKind::Force, 3);
        same.push(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(rmse(&same).unwrap(), 0.0);
    }

    #[test]
    fn hyperparameter_file() {
        let hp = HyperParameters::parse(
            "type 3 Cs Pb I\nversion 4\ncutoff 6 4\nn_max 4 4\nneuron 30\nlambda_e 1.0\nlambda_f 2\nlambda_v 0.1\ngeneration 500\n",
        )
        .unwrap();
        assert_eq!(hp.elements.as_deref().unwrap(), ["Cs", "Pb", "I"]);
        assert_eq!((hp.r_cut, hp.n_rad, hp.n_neu, hp.generations), (6.0, 5, 30, 500));
        assert_eq!(hp.weights.force, 2.0);
        assert!(HyperParameters::parse("cutof 5\n").is_err());
        assert!(HyperParameters::parse("lambda_e 0\nlambda_f 0\nlambda_v 0\n").is_err());
    }
}
