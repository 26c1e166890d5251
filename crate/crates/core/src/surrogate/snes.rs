//! Separable natural evolution strategy over the flattened network parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DescriptorSpec, FrameFeatures, SurrogateModel};
use crate::error::{Error, Result};
use crate::exyzio::Frame;

/// Weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    #[serde(default = "one")]
    pub energy: f64,
    #[serde(default = "one")]
    pub force: f64,
    #[serde(default = "tenth")]
    pub virial: f64,
    /// L2 penalty on the mean squared parameter.
    #[serde(default)]
    pub regularization: f64,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            energy: 1.0,
            force: 1.0,
            virial: 0.1,
            regularization: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.energy, self.force, self.virial, self.regularization];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if self.energy + self.force + self.virial <= 0.0 {
            return Err(Error::invalid(
                "at least one of the energy, force and virial weights must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub generations: usize,
    pub seed: u64,
    /// Standard deviation of the initial parameters and of the initial search distribution.
    pub init_sigma: f64,
    /// Initial search spread around a warm-start model.
    pub warm_sigma: f64,
    /// Overrides the default population size.
    pub population: Option<usize>,
    /// Start the search mean from these parameters instead of a random draw.
    pub warm_start: Option<SurrogateModel>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            generations: 2000,
            seed: 0,
            init_sigma: 0.1,
            warm_sigma: 0.01,
            population: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: SurrogateModel,
    pub best_loss: f64,
    /// Best-so-far loss after each generation.
    pub loss_history: Vec<f64>,
}

/// `4 + 3·⌊ln d⌋`, rounded up to an even count.
pub fn population_size(dim: usize) -> usize {
    let p = 4 + 3 * (dim.max(1) as f64).ln().floor() as usize;
    p + p % 2
}

struct Sample {
    features: FrameFeatures,
    n_atoms: f64,
    energy: f64,
    forces: Option<Vec<[f64; 3]>>,
    virial: Option<[f64; 6]>,
}

struct Objective<'a> {
    samples: &'a [Sample],
    spec: &'a DescriptorSpec,
    n_neu: usize,
    weights: LossWeights,
    needs_gradients: bool,
}

impl Objective<'_> {
    fn loss(&self, params: &[f64]) -> f64 {
        let model = SurrogateModel::from_params(self.spec.clone(), self.n_neu, params).expect("parameter count");
        let (mut se, mut ne) = (0.0, 0usize);
        let (mut sf, mut nf) = (0.0, 0usize);
        let (mut sv, mut nv) = (0.0, 0usize);
        for s in self.samples {
            if self.needs_gradients {
                let ev = model.evaluate_features(&s.features);
                let de = (ev.energy - s.energy) / s.n_atoms;
                se += de * de;
                ne += 1;
                if let Some(fr) = &s.forces {
                    for (p, r) in ev.forces.iter().zip(fr) {
                        for a in 0..3 {
                            sf += (p[a] - r[a]) * (p[a] - r[a]);
                        }
                    }
                    nf += 3 * fr.len();
                }
                if let Some(vr) = &s.virial {
                    for a in 0..6 {
                        let d = (ev.virial[a] - vr[a]) / s.n_atoms;
                        sv += d * d;
                    }
                    nv += 6;
                }
            } else {
                let de = (model.energy_from_features(&s.features) - s.energy) / s.n_atoms;
                se += de * de;
                ne += 1;
            }
        }
        let rms = |s: f64, n: usize| if n == 0 { 0.0 } else { (s / n as f64).sqrt() };
        let reg = params.iter().map(|p| p * p).sum::<f64>() / params.len() as f64;
        let w = &self.weights;
        w.energy * rms(se, ne) + w.force * rms(sf, nf) + w.virial * rms(sv, nv) + w.regularization * reg
    }
}

/// Trains a network on the labeled frames of `dataset`.
pub fn train(
    dataset: &[Frame],
    spec: &DescriptorSpec,
    n_neu: usize,
    weights: LossWeights,
    options: &TrainOptions,
) -> Result<TrainReport> {
    let features = crate::par::map(dataset, |f| FrameFeatures::compute(f, spec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    train_features(dataset, features, spec, n_neu, weights, options)
}

/// As [`train`], reusing features computed by the caller.
pub fn train_features(
    dataset: &[Frame],
    features: Vec<FrameFeatures>,
    spec: &DescriptorSpec,
    n_neu: usize,
    weights: LossWeights,
    options: &TrainOptions,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    weights.validate()?;
    spec.validate()?;
    if n_neu == 0 {
        return Err(Error::invalid("the hidden layer needs at least one neuron"));
    }
    if !(options.init_sigma > 0.0 && options.warm_sigma > 0.0) {
        return Err(Error::invalid("search spreads must be positive"));
    }
    let mut samples = Vec::with_capacity(dataset.len());
    for (k, (frame, features)) in dataset.iter().zip(features).enumerate() {
        let energy = frame
            .energy
            .ok_or_else(|| Error::invalid(format!("training frame {k} has no reference energy")))?;
        if frame.is_empty() {
            return Err(Error::invalid(format!("training frame {k} has no atoms")));
        }
        samples.push(Sample {
            n_atoms: frame.len() as f64,
            energy,
            forces: frame.forces.clone(),
            virial: frame.virial,
            features,
        });
    }
    let needs_gradients = (weights.force > 0.0 && samples.iter().any(|s| s.forces.is_some()))
        || (weights.virial > 0.0 && samples.iter().any(|s| s.virial.is_some()));
    let objective = Objective {
        samples: &samples,
        spec,
        n_neu,
        weights,
        needs_gradients,
    };

    let dim = n_neu * (spec.dim() + 2) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut sigma0 = options.init_sigma;
    let mut mean: Vec<f64> = match &options.warm_start {
        Some(m) if m.spec == *spec && m.n_neu == n_neu => {
            sigma0 = options.warm_sigma;
            m.params()
        }
        Some(_) => {
            return Err(Error::invalid(
                "warm-start model does not match the descriptor and width",
            ))
        }
        None => (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                options.init_sigma * z
            })
            .collect(),
    };
    let mut sigma = vec![sigma0; dim];

    let mut best_params = mean.clone();
    let mut best_loss = objective.loss(&mean);
    let mut history = Vec::with_capacity(options.generations);

    let lambda = options.population.unwrap_or_else(|| population_size(dim)).max(2);
    let utilities = rank_utilities(lambda);
    let eta_sigma = (3.0 + (dim as f64).ln()) / (5.0 * (dim as f64).sqrt());

    for _ in 0..options.generations {
        let noise: Vec<Vec<f64>> = (0..lambda)
            .map(|_| (0..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect())
            .collect();
        let candidates: Vec<Vec<f64>> = noise
            .iter()
            .map(|s| mean.iter().zip(&sigma).zip(s).map(|((m, sg), z)| m + sg * z).collect())
            .collect();
        let losses = crate::par::map(&candidates, |c| objective.loss(c));

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));

        let top = order[0];
        if losses[top] < best_loss {
            best_loss = losses[top];
            best_params.clone_from(&candidates[top]);
        }
        history.push(best_loss);

        let mut grad_mean = vec![0.0; dim];
        let mut grad_sigma = vec![0.0; dim];
        for (rank, &k) in order.iter().enumerate() {
            let u = utilities[rank];
            for d in 0..dim {
                let z = noise[k][d];
                grad_mean[d] += u * z;
                grad_sigma[d] += u * (z * z - 1.0);
            }
        }
        for d in 0..dim {
            mean[d] += sigma[d] * grad_mean[d];
            sigma[d] *= (0.5 * eta_sigma * grad_sigma[d]).exp();
        }
    }

    Ok(TrainReport {
        model: SurrogateModel::from_params(spec.clone(), n_neu, &best_params)?,
        best_loss,
        loss_history: history,
    })
}

/// Rank-based fitness shaping, best rank first, summing to zero.
fn rank_utilities(lambda: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=lambda)
        .map(|k| ((lambda as f64 / 2.0 + 1.0).ln() - (k as f64).ln()).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total - 1.0 / lambda as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_formula() {
        assert_eq!(population_size(1), 4);
        assert_eq!(population_size(51), 14); // 4 + 3·3 = 13 → 14
        assert_eq!(population_size(100), 16);
    }

    #[test]
    fn utilities_sum_to_zero_and_decrease() {
        let u = rank_utilities(14);
        assert!(u.iter().sum::<f64>().abs() < 1e-12);
        assert!(u.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_weights_rejected() {
        let w = LossWeights {
            energy: 0.0,
            force: 0.0,
            virial: 0.0,
            regularization: 1.0,
        };
        assert!(w.validate().is_err());
    }
}
