//! Active-learning loop: train, sample with MD, select by FPS, label, grow.
//!
//! Each generation lives in `<work_path>/Generation-<k>/` and every phase
//! leaves one file behind. A restarted run skips phases whose file exists,
//! and every phase reads its inputs back from disk, so an interrupted run
//! resumes with the same outputs it would have produced uninterrupted.

pub mod calc;
pub mod md;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use calc::{label, label_with, CalculatorConfig, ExternalCommand, LabelReport, LennardJones, LjParams};
pub use md::{run_md, MdParams};

use crate::error::{Error, Result};
use crate::exyzio::{fmt_f64, read_dataset, write_atomic, write_dataset, Frame, ParityKind};
use crate::geometry::{is_physical, RadiiTable, DEFAULT_COEFF};
use crate::sampling::farthest_point_sample;
use crate::surrogate::{self, structure_descriptors, DescriptorSpec, LossWeights, SurrogateModel, TrainOptions};

/// Where the first generation starts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentJob {
    /// Train on the labeled initial set.
    #[default]
    Nep,
    /// Skip the first training and sample with `model_path`.
    Gpumd,
    /// Label the unlabeled frames of the initial set first.
    Vasp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NepSettings {
    #[serde(default = "default_r_cut")]
    pub r_cut: f64,
    #[serde(default = "default_n_rad")]
    pub n_rad: usize,
    #[serde(default = "default_n_neu")]
    pub n_neu: usize,
    /// Evolution-strategy generations per training.
    #[serde(default = "default_es_generations")]
    pub generations: usize,
    #[serde(default)]
    pub weights: LossWeights,
    /// Start each training from the previous generation's model.
    #[serde(default = "yes")]
    pub warm_start: bool,
    /// Element order of the descriptor; inferred from the data when absent.
    #[serde(default)]
    pub elements: Option<Vec<String>>,
}

fn default_r_cut() -> f64 {
    5.0
}
fn default_n_rad() -> usize {
    4
}
fn default_n_neu() -> usize {
    10
}
fn default_es_generations() -> usize {
    2000
}
fn yes() -> bool {
    true
}

impl Default for NepSettings {
    fn default() -> Self {
        NepSettings {
            r_cut: default_r_cut(),
            n_rad: default_n_rad(),
            n_neu: default_n_neu(),
            generations: default_es_generations(),
            weights: LossWeights::default(),
            warm_start: true,
            elements: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSettings {
    #[serde(default = "default_max_count")]
    pub max_count: usize,
    /// Descriptor-space distance floor of FPS.
    #[serde(default)]
    pub min_distance: f64,
    /// Drop candidates failing the covalent-radius bond screen.
    #[serde(default = "yes")]
    pub filter: bool,
    #[serde(default = "default_coeff")]
    pub coeff: f64,
    /// Radii table overriding the embedded one.
    #[serde(default)]
    pub radii: Option<PathBuf>,
}

fn default_max_count() -> usize {
    20
}
fn default_coeff() -> f64 {
    DEFAULT_COEFF
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings {
            max_count: default_max_count(),
            min_distance: 0.0,
            filter: true,
            coeff: DEFAULT_COEFF,
            radii: None,
        }
    }
}

impl SelectSettings {
    pub fn radii_table(&self) -> Result<RadiiTable> {
        match &self.radii {
            Some(p) => RadiiTable::load(p, self.coeff),
            None => RadiiTable::cordero().with_coeff(self.coeff),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default = "default_work_path")]
    pub work_path: PathBuf,
    #[serde(default)]
    pub current_job: CurrentJob,
    /// Initial training set.
    #[serde(default = "default_train_path")]
    pub train_path: PathBuf,
    /// Held-out set scored after every generation.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    /// Starting model for `current_job: gpumd`.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// MD duration of each generation in ps; its length is the generation count.
    pub step_times: Vec<f64>,
    /// MD temperatures of each generation in K.
    pub temperature_every_step: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nep: NepSettings,
    #[serde(default)]
    pub md: MdParams,
    #[serde(default)]
    pub select: SelectSettings,
    #[serde(default)]
    pub calculator: CalculatorConfig,
}

fn default_work_path() -> PathBuf {
    PathBuf::from("./cache")
}
fn default_train_path() -> PathBuf {
    PathBuf::from("train.xyz")
}

impl JobConfig {
    /// Parses YAML; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: JobConfig = serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        rebase(&mut cfg.work_path);
        rebase(&mut cfg.train_path);
        for p in [&mut cfg.test_path, &mut cfg.model_path, &mut cfg.select.radii]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir).map_err(|e| e.in_file(path))
    }

    pub fn generations(&self) -> usize {
        self.step_times.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.step_times.is_empty() {
            return bad("step_times needs at least one entry");
        }
        if self.step_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("step_times must be non-negative");
        }
        if self.temperature_every_step.len() != self.step_times.len() {
            return Err(Error::Config(format!(
                "temperature_every_step has {} entries but step_times has {}",
                self.temperature_every_step.len(),
                self.step_times.len()
            )));
        }
        for temps in &self.temperature_every_step {
            if temps.is_empty() || temps.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return bad("every stage needs at least one positive temperature");
            }
        }
        if self.current_job == CurrentJob::Gpumd && self.model_path.is_none() {
            return bad("current_job: gpumd needs model_path");
        }
        if !(self.nep.r_cut > 0.0) || self.nep.n_rad == 0 || self.nep.n_neu == 0 {
            return bad("nep needs a positive r_cut, n_rad and n_neu");
        }
        self.nep.weights.validate()?;
        if !(self.select.min_distance >= 0.0) {
            return bad("select.min_distance must be non-negative");
        }
        if !(self.select.coeff > 0.0 && self.select.coeff < 1.5) {
            return bad("select.coeff must lie in (0, 1.5)");
        }
        self.md.validate()?;
        self.calculator.validate()
    }
}

pub const JOB_TEMPLATE: &str = r#"# Active-learning job. Relative paths are relative to this file.
work_path: ./cache
# nep: train on train.xyz first; gpumd: start sampling with model_path;
# vasp: label the unlabeled frames of train.xyz first.
current_job: nep
train_path: train.xyz
# test_path: test.xyz
# model_path: model.txt
seed: 0

# One entry per generation: MD length in ps and the temperatures in K.
step_times: [10, 10]
temperature_every_step:
  - [300]
  - [300, 600]

nep:
  r_cut: 5.0
  n_rad: 4
  n_neu: 10
  generations: 2000
  warm_start: true
  weights: {energy: 1.0, force: 1.0, virial: 0.1, regularization: 0.0}

md:
  timestep: 1.0      # fs
  friction: 0.01     # 1/fs, Langevin
  thermostat: true
  stride: 10
  max_force: 100.0   # eV/Å, larger aborts the run

select:
  max_count: 20
  min_distance: 0.0
  filter: true
  coeff: 0.65

calculator:
  kind: lj
  epsilon: 0.0104
  sigma: 3.4
  cutoff: 8.5
# calculator:
#   kind: external
#   command: "./single_point.sh {in.xyz} {out.xyz}"
#   timeout: 3600
#   workers: 4
"#;

pub const RUN_IN_TEMPLATE: &str = "\
# Molecular dynamics input for external engines.
potential nep.txt
velocity 300
ensemble npt_scr 300 300 100 0 100 1000
time_step 1
dump_thermo 100
dump_exyz 100
run 10000
";

/// Writes `job.yaml`, `run.in` and an empty `structure/` directory.
/// Nothing is written if any of them already exists.
pub fn init_workspace(target: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let target = target.as_ref();
    let entries = [target.join("job.yaml"), target.join("run.in"), target.join("structure")];
    if let Some(p) = entries.iter().find(|p| p.exists()) {
        return Err(Error::Config(format!(
            "`{}` already exists; refusing to overwrite",
            p.display()
        )));
    }
    fs::create_dir_all(target).map_err(|e| Error::io(target, e))?;
    write_atomic(&entries[0], JOB_TEMPLATE.as_bytes())?;
    write_atomic(&entries[1], RUN_IN_TEMPLATE.as_bytes())?;
    fs::create_dir(&entries[2]).map_err(|e| Error::io(&entries[2], e))?;
    Ok(entries.to_vec())
}

/// Loop phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Md,
    Select,
    Label,
    Metrics,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Train, Phase::Md, Phase::Select, Phase::Label, Phase::Metrics];

    /// The file whose presence marks the phase complete.
    pub fn file_name(self) -> &'static str {
        match self {
            Phase::Train => "model.txt",
            Phase::Md => "trajectory.xyz",
            Phase::Select => "selected.xyz",
            Phase::Label => "labeled.xyz",
            Phase::Metrics => "metrics.csv",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Md => "md",
            Phase::Select => "select",
            Phase::Label => "label",
            Phase::Metrics => "metrics",
        })
    }
}

/// Per-generation counts and held-out errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub generation: usize,
    pub train_size: usize,
    pub trajectory: usize,
    pub candidates: usize,
    pub selected: usize,
    pub labeled: usize,
    /// eV/atom.
    pub energy_rmse: Option<f64>,
    /// eV/Å.
    pub force_rmse: Option<f64>,
    /// eV/atom.
    pub virial_rmse: Option<f64>,
}

const METRICS_HEADER: &str =
    "generation,train_size,trajectory,candidates,selected,labeled,energy_rmse,force_rmse,virial_rmse";

impl Metrics {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        format!(
            "{METRICS_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
            self.generation,
            self.train_size,
            self.trajectory,
            self.candidates,
            self.selected,
            self.labeled,
            opt(self.energy_rmse),
            opt(self.force_rmse),
            opt(self.virial_rmse)
        )
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = || Error::invalid("malformed metrics file");
        if lines.next() != Some(METRICS_HEADER) {
            return Err(bad());
        }
        let f: Vec<&str> = lines.next().ok_or_else(bad)?.split(',').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        Ok(Metrics {
            generation: int(f[0])?,
            train_size: int(f[1])?,
            trajectory: int(f[2])?,
            candidates: int(f[3])?,
            selected: int(f[4])?,
            labeled: int(f[5])?,
            energy_rmse: opt(f[6])?,
            force_rmse: opt(f[7])?,
            virial_rmse: opt(f[8])?,
        })
    }
}

/// A completed generation on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationState {
    pub index: usize,
    pub dir: PathBuf,
    pub metrics: Metrics,
}

impl GenerationState {
    pub fn train_set(&self) -> PathBuf {
        self.dir.join("train.xyz")
    }

    pub fn file(&self, phase: Phase) -> PathBuf {
        self.dir.join(phase.file_name())
    }
}

pub fn generation_dir(work_path: &Path, index: usize) -> PathBuf {
    work_path.join(format!("Generation-{index}"))
}

#[derive(Debug, Clone, Default)]
pub struct LoopOptions {
    /// Stop with [`Error::Interrupted`] right after this phase of this generation completes.
    pub halt_after: Option<(usize, Phase)>,
}

/// Seed of one phase (and sub-task) of one generation.
pub fn phase_seed(seed: u64, generation: usize, phase: Phase, sub: usize) -> u64 {
    let mut z = seed
        ^ (generation as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((phase as u64 + 1) << 56)
        ^ (sub as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn require_labels(frames: &[Frame], what: &str) -> Result<()> {
    match frames.iter().position(|f| f.energy.is_none()) {
        Some(k) => Err(Error::invalid(format!("{what}: frame {k} has no reference energy"))),
        None => Ok(()),
    }
}

/// Labels the frames that lack an energy, failing if any cannot be labeled.
fn complete_labels(frames: Vec<Frame>, calc: &CalculatorConfig, scratch: &Path, what: &str) -> Result<Vec<Frame>> {
    let missing: Vec<usize> = (0..frames.len()).filter(|&k| frames[k].energy.is_none()).collect();
    if missing.is_empty() {
        return Ok(frames);
    }
    let todo: Vec<Frame> = missing.iter().map(|&k| frames[k].clone()).collect();
    let report = label(&todo, calc, scratch)?;
    if !report.failures.is_empty() {
        return Err(Error::Calculator(format!("{what}: {}", report.summary().trim_end())));
    }
    let mut frames = frames;
    for (k, f) in report.indices.iter().zip(report.frames) {
        frames[missing[*k]] = f;
    }
    Ok(frames)
}

/// Scores a model on labeled frames: per-atom energy, force and per-atom virial RMSE.
pub fn score(model: &SurrogateModel, frames: &[Frame]) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let preds = crate::par::map(frames, |f| surrogate::predict(f, model))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let r = |kind| {
        let p = surrogate::parity(frames, &preds, kind);
        surrogate::rmse(&p).ok()
    };
    Ok((r(ParityKind::Energy), r(ParityKind::Force), r(ParityKind::Virial)))
}

/// Runs (or resumes) every generation of `config`.
pub fn run_loop(config: &JobConfig, options: &LoopOptions) -> Result<Vec<GenerationState>> {
    config.validate()?;
    let work = &config.work_path;
    fs::create_dir_all(work).map_err(|e| Error::io(work, e))?;
    let radii = config.select.radii_table()?;

    let test = match &config.test_path {
        Some(src) => {
            let fixed = work.join("test.xyz");
            if !fixed.exists() {
                let frames = read_dataset(src)?;
                let frames = complete_labels(frames, &config.calculator, &work.join("test-labeling"), "held-out set")?;
                write_dataset(&frames, &fixed)?;
            }
            Some(read_dataset(&fixed)?)
        }
        None => None,
    };

    let mut states = Vec::new();
    for g in 1..=config.generations() {
        states.push(run_generation(config, g, &radii, test.as_deref(), options)?);
    }
    let last = states.last().expect("at least one generation");
    let mut final_set = read_dataset(last.train_set())?;
    final_set.extend(read_dataset(last.file(Phase::Label))?);
    write_dataset(&final_set, work.join("final_train.xyz"))?;
    Ok(states)
}

fn run_generation(
    config: &JobConfig,
    g: usize,
    radii: &RadiiTable,
    test: Option<&[Frame]>,
    options: &LoopOptions,
) -> Result<GenerationState> {
    let dir = generation_dir(&config.work_path, g);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let halt = |phase: Phase| -> Result<()> {
        if options.halt_after == Some((g, phase)) {
            Err(Error::Interrupted(format!("generation {g} {phase}")))
        } else {
            Ok(())
        }
    };
    let path = |phase: Phase| dir.join(phase.file_name());

    let train_path = dir.join("train.xyz");
    if !train_path.exists() {
        let set = if g == 1 {
            let frames = read_dataset(&config.train_path)?;
            if config.current_job == CurrentJob::Vasp {
                complete_labels(frames, &config.calculator, &dir.join("initial-labeling"), "initial set")?
            } else {
                frames
            }
        } else {
            let prev = generation_dir(&config.work_path, g - 1);
            let mut set = read_dataset(prev.join("train.xyz"))?;
            set.extend(read_dataset(prev.join(Phase::Label.file_name()))?);
            set
        };
        require_labels(&set, "training set")?;
        write_dataset(&set, &train_path)?;
    }
    let train_set = read_dataset(&train_path)?;
    require_labels(&train_set, "training set")?;
    if train_set.is_empty() {
        return Err(Error::invalid("the training set is empty"));
    }

    if !path(Phase::Train).exists() {
        let model = if g == 1 && config.current_job == CurrentJob::Gpumd {
            let src = config.model_path.as_ref().expect("validated");
            SurrogateModel::load(src)?
        } else {
            let nep = &config.nep;
            let elements = match &nep.elements {
                Some(e) => e.clone(),
                None => DescriptorSpec::elements_of(train_set.iter().chain(test.unwrap_or_default())),
            };
            let spec = DescriptorSpec::new(nep.r_cut, nep.n_rad, elements)?;
            let warm = if g > 1 && nep.warm_start {
                let prev =
                    SurrogateModel::load(generation_dir(&config.work_path, g - 1).join(Phase::Train.file_name()))?;
                (prev.spec == spec && prev.n_neu == nep.n_neu).then_some(prev)
            } else {
                None
            };
            let opts = TrainOptions {
                generations: nep.generations,
                seed: phase_seed(config.seed, g, Phase::Train, 0),
                warm_start: warm,
                ..TrainOptions::default()
            };
            surrogate::train(&train_set, &spec, nep.n_neu, nep.weights, &opts)?.model
        };
        model.save(path(Phase::Train))?;
        halt(Phase::Train)?;
    }
    let model = SurrogateModel::load(path(Phase::Train))?;

    if !path(Phase::Md).exists() {
        let temps = &config.temperature_every_step[g - 1];
        let duration = config.step_times[g - 1];
        let runs = crate::par::map_range(temps.len(), |t| -> Result<Vec<Frame>> {
            let mut rng = ChaCha8Rng::seed_from_u64(phase_seed(config.seed, g, Phase::Md, t));
            let start = &train_set[rng.random_range(0..train_set.len())];
            let seed = rng.random();
            let mut traj = run_md(start, &model, duration, temps[t], &config.md, seed)?;
            for f in &mut traj {
                f.set_config_type(format!("md_g{g}_{}K", temps[t]));
            }
            Ok(traj)
        });
        let mut pooled = Vec::new();
        for r in runs {
            pooled.extend(r?);
        }
        write_dataset(&pooled, path(Phase::Md))?;
        halt(Phase::Md)?;
    }

    if !path(Phase::Select).exists() {
        let traj = read_dataset(path(Phase::Md))?;
        let candidates: Vec<Frame> = if config.select.filter {
            let keep = crate::par::map(&traj, |f| is_physical(f, radii));
            let mut out = Vec::new();
            for (f, k) in traj.into_iter().zip(keep) {
                if k? {
                    out.push(f);
                }
            }
            out
        } else {
            traj
        };
        let selected: Vec<Frame> = if candidates.is_empty() || config.select.max_count == 0 {
            Vec::new()
        } else {
            let points = structure_descriptors(&candidates, &model.spec)?;
            let base = structure_descriptors(&train_set, &model.spec)?;
            let r = farthest_point_sample(
                &points,
                config.select.max_count,
                config.select.min_distance,
                None,
                Some(&base),
            )?;
            r.selected.iter().map(|&k| candidates[k].clone()).collect()
        };
        write_dataset(&selected, path(Phase::Select))?;
        halt(Phase::Select)?;
    }

    if !path(Phase::Label).exists() {
        let selected = read_dataset(path(Phase::Select))?;
        let report = label(&selected, &config.calculator, &dir.join("labeling"))?;
        if !report.failures.is_empty() {
            write_atomic(&dir.join("label_report.txt"), report.summary().as_bytes())?;
        }
        if !selected.is_empty() && report.frames.is_empty() {
            return Err(Error::Calculator(format!(
                "all {} selected frames failed to label; see {}",
                selected.len(),
                dir.join("label_report.txt").display()
            )));
        }
        write_dataset(&report.frames, path(Phase::Label))?;
        halt(Phase::Label)?;
    }

    if !path(Phase::Metrics).exists() {
        let eval = test.unwrap_or(&train_set);
        let (e, f, v) = score(&model, eval)?;
        let count = |p: Phase| read_dataset(path(p)).map(|d| d.len());
        let trajectory = count(Phase::Md)?;
        let candidates = if config.select.filter {
            let traj = read_dataset(path(Phase::Md))?;
            let mut n = 0;
            for f in &traj {
                n += usize::from(is_physical(f, radii)?);
            }
            n
        } else {
            trajectory
        };
        let m = Metrics {
            generation: g,
            train_size: train_set.len(),
            trajectory,
            candidates,
            selected: count(Phase::Select)?,
            labeled: count(Phase::Label)?,
            energy_rmse: e,
            force_rmse: f,
            virial_rmse: v,
        };
        write_atomic(&path(Phase::Metrics), m.to_csv().as_bytes())?;
        halt(Phase::Metrics)?;
    }
    let text = fs::read_to_string(path(Phase::Metrics)).map_err(|e| Error::io(path(Phase::Metrics), e))?;
    Ok(GenerationState {
        index: g,
        dir: dir.clone(),
        metrics: Metrics::parse_csv(&text).map_err(|e| e.in_file(&path(Phase::Metrics)))?,
    })
}
