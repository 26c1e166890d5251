//! Reference calculators: a built-in Lennard-Jones pair potential and an
//! adapter around an external command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exyzio::{format_dataset, read_dataset, Frame};
use crate::geometry::neighbor_list;
use crate::surrogate::{Evaluation, Potential};

/// Per-element Lennard-Jones parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LjParams {
    /// Well depth in eV.
    pub epsilon: f64,
    /// Zero-crossing distance in Å.
    pub sigma: f64,
}

/// Truncated (unshifted) Lennard-Jones potential. Unlisted elements use the
/// default parameters; unlike pairs mix by the Lorentz-Berthelot rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LennardJones {
    #[serde(default = "ar_epsilon")]
    pub epsilon: f64,
    #[serde(default = "ar_sigma")]
    pub sigma: f64,
    #[serde(default = "ar_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub elements: BTreeMap<String, LjParams>,
}

fn ar_epsilon() -> f64 {
    0.0104
}

fn ar_sigma() -> f64 {
    3.4
}

fn ar_cutoff() -> f64 {
    8.5
}

impl Default for LennardJones {
    fn default() -> Self {
        LennardJones {
            epsilon: ar_epsilon(),
            sigma: ar_sigma(),
            cutoff: ar_cutoff(),
            elements: BTreeMap::new(),
        }
    }
}

impl LennardJones {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.epsilon) || !ok(self.sigma) || !ok(self.cutoff) {
            return Err(Error::Config(
                "Lennard-Jones epsilon, sigma and cutoff must be positive".into(),
            ));
        }
        for (el, p) in &self.elements {
            if !ok(p.epsilon) || !ok(p.sigma) {
                return Err(Error::Config(format!(
                    "Lennard-Jones parameters of `{el}` must be positive"
                )));
            }
        }
        Ok(())
    }

    fn params(&self, element: &str) -> LjParams {
        self.elements.get(element).copied().unwrap_or(LjParams {
            epsilon: self.epsilon,
            sigma: self.sigma,
        })
    }

    /// Mixed (ε, σ) of a species pair.
    pub fn pair(&self, a: &str, b: &str) -> (f64, f64) {
        let (p, q) = (self.params(a), self.params(b));
        ((p.epsilon * q.epsilon).sqrt(), 0.5 * (p.sigma + q.sigma))
    }
}

impl Potential for LennardJones {
    fn evaluate(&self, frame: &Frame) -> Result<Evaluation> {
        self.validate()?;
        let n = frame.len();
        let mut energy = 0.0;
        let mut forces = vec![[0.0; 3]; n];
        let mut virial = [0.0; 6];
        if n == 0 {
            return Ok(Evaluation { energy, forces, virial });
        }
        // Every pair appears once from each side, hence the factors of one half.
        for (i, neighbors) in neighbor_list(frame, self.cutoff)?.iter().enumerate() {
            for nb in neighbors {
                if nb.distance >= self.cutoff {
                    continue;
                }
                let (eps, sig) = self.pair(&frame.species[i], &frame.species[nb.j]);
                let sr6 = (sig / nb.distance).powi(6);
                energy += 0.5 * 4.0 * eps * (sr6 * sr6 - sr6);
                // dE/dr / r for the full pair
                let c = -24.0 * eps * (2.0 * sr6 * sr6 - sr6) / (nb.distance * nb.distance);
                let v = nb.vector;
                for a in 0..3 {
                    forces[i][a] += c * v[a];
                }
                let h = 0.5 * c;
                virial[0] -= h * v[0] * v[0];
                virial[1] -= h * v[1] * v[1];
                virial[2] -= h * v[2] * v[2];
                virial[3] -= h * v[1] * v[2];
                virial[4] -= h * v[0] * v[2];
                virial[5] -= h * v[0] * v[1];
            }
        }
        Ok(Evaluation { energy, forces, virial })
    }
}

/// A command run once per frame. `{in.xyz}` and `{out.xyz}` in the template
/// are replaced by the input and output file paths; `{kspacing}` and `{ka}`
/// by the k-point options when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCommand {
    pub command: String,
    /// Seconds before a run is killed.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Concurrent runs.
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub kspacing: Option<f64>,
    #[serde(default)]
    pub ka: Option<[u32; 3]>,
}

fn default_timeout() -> f64 {
    3600.0
}

fn one() -> usize {
    1
}

impl ExternalCommand {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalCommand {
            command: command.into(),
            timeout: default_timeout(),
            workers: 1,
            kspacing: None,
            ka: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.command.contains("{in.xyz}") || !self.command.contains("{out.xyz}") {
            return Err(Error::Config(
                "calculator command needs `{in.xyz}` and `{out.xyz}` placeholders".into(),
            ));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::Config("calculator timeout must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("calculator needs at least one worker".into()));
        }
        if self.kspacing.is_some() && self.ka.is_some() {
            return Err(Error::Config("`kspacing` and `ka` are mutually exclusive".into()));
        }
        if self.kspacing.is_some_and(|k| !(k > 0.0)) || self.ka.is_some_and(|ka| ka.contains(&0)) {
            return Err(Error::Config("k-point options must be positive".into()));
        }
        Ok(())
    }

    fn render(&self, input: &Path, output: &Path) -> String {
        let kspacing = self.kspacing.map(|k| k.to_string()).unwrap_or_default();
        let ka = self
            .ka
            .map(|k| format!("{} {} {}", k[0], k[1], k[2]))
            .unwrap_or_default();
        self.command
            .replace("{in.xyz}", &shell_quote(input))
            .replace("{out.xyz}", &shell_quote(output))
            .replace("{kspacing}", &kspacing)
            .replace("{ka}", &ka)
    }

    /// Labels one frame inside `dir`.
    #[cfg(target_arch = "wasm32")]
    pub fn run(&self, _frame: &Frame, _dir: &Path) -> Result<Frame> {
        Err(Error::Calculator(
            "external commands are unavailable on this target".into(),
        ))
    }

    /// Labels one frame inside `dir`.
    #[cfg(not(target_arch = "wasm32"))]
    pub fn run(&self, frame: &Frame, dir: &Path) -> Result<Frame> {
        use wait_timeout::ChildExt;

        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let input = dir.join("in.xyz");
        let output = dir.join("out.xyz");
        let _ = std::fs::remove_file(&output);
        let text = format_dataset(std::slice::from_ref(&frame.without_labels()))?;
        std::fs::write(&input, text).map_err(|e| Error::io(&input, e))?;
        let log_path = dir.join("stderr.log");
        let log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;

        let mut child = std::process::Command::new("sh")
            .arg("-c")
            .arg(self.render(&input, &output))
            .current_dir(dir)
            .stdin(std::process::Stdio::null())
            .stdout(std::process::Stdio::null())
            .stderr(log)
            .spawn()
            .map_err(|e| Error::Calculator(format!("cannot start `sh`: {e}")))?;
        let status = match child
            .wait_timeout(std::time::Duration::from_secs_f64(self.timeout))
            .map_err(|e| Error::Calculator(e.to_string()))?
        {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Calculator(format!("timed out after {} s", self.timeout)));
            }
        };
        if !status.success() {
            let log = std::fs::read_to_string(&log_path).unwrap_or_default();
            let mut tail: Vec<&str> = log.trim().lines().rev().take(20).collect();
            tail.reverse();
            let err = tail.join("\n");
            return Err(Error::Calculator(if err.is_empty() {
                format!("command exited with {status}")
            } else {
                format!("command exited with {status}: {err}")
            }));
        }
        let out = read_dataset(&output).map_err(|e| Error::Calculator(format!("unreadable output: {e}")))?;
        let [result] = out.as_slice() else {
            return Err(Error::Calculator(format!(
                "output holds {} frames, expected 1",
                out.len()
            )));
        };
        if result.len() != frame.len() {
            return Err(Error::Calculator(format!(
                "output has {} atoms, input has {}",
                result.len(),
                frame.len()
            )));
        }
        let energy = result
            .energy
            .ok_or_else(|| Error::Calculator("output frame has no energy".into()))?;
        let mut labeled = frame.clone();
        labeled.energy = Some(energy);
        labeled.forces = result.forces.clone();
        labeled.virial = result.virial;
        Ok(labeled)
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalculatorConfig {
    Lj(LennardJones),
    External(ExternalCommand),
}

impl Default for CalculatorConfig {
    fn default() -> Self {
        CalculatorConfig::Lj(LennardJones::default())
    }
}

impl CalculatorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            CalculatorConfig::Lj(lj) => lj.validate(),
            CalculatorConfig::External(ext) => ext.validate(),
        }
    }
}

/// Attaches energy, forces and virial from a potential to a copy of `frame`.
pub fn label_with(potential: &impl Potential, frame: &Frame) -> Result<Frame> {
    let ev = potential.evaluate(frame)?;
    let mut out = frame.clone();
    out.energy = Some(ev.energy);
    out.forces = Some(ev.forces);
    out.virial = frame.is_periodic().then_some(ev.virial);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelFailure {
    pub index: usize,
    pub reason: String,
}

/// Outcome of labeling a batch. `frames[k]` is the labeled copy of input `indices[k]`.
#[derive(Debug, Clone, Default)]
pub struct LabelReport {
    pub frames: Vec<Frame>,
    pub indices: Vec<usize>,
    pub failures: Vec<LabelFailure>,
}

impl LabelReport {
    pub fn summary(&self) -> String {
        let mut s = format!("labeled {} frames, {} failed\n", self.frames.len(), self.failures.len());
        for f in &self.failures {
            s.push_str(&format!("frame {}: {}\n", f.index, f.reason));
        }
        s
    }
}

/// Labels `frames` with the configured calculator. External runs use
/// `workdir/label-<index>/` as scratch space. The first frame doubles as a
/// health probe: if it fails, the rest are not attempted.
pub fn label(frames: &[Frame], calc: &CalculatorConfig, workdir: &Path) -> Result<LabelReport> {
    calc.validate()?;
    let results: Vec<Result<Frame>> = match calc {
        CalculatorConfig::Lj(lj) => crate::par::map(frames, |f| label_with(lj, f)),
        CalculatorConfig::External(ext) => run_external(frames, ext, workdir),
    };
    let mut report = LabelReport::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => {
                report.frames.push(f);
                report.indices.push(index);
            }
            Err(e) => report.failures.push(LabelFailure {
                index,
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn run_external(frames: &[Frame], ext: &ExternalCommand, workdir: &Path) -> Vec<Result<Frame>> {
    let dir = |k: usize| -> PathBuf { workdir.join(format!("label-{k}")) };
    if frames.is_empty() {
        return Vec::new();
    }
    let probe = ext.run(&frames[0], &dir(0));
    if let Err(e) = probe {
        let reason = format!("calculator probe failed: {e}");
        let mut out = vec![Err(e)];
        out.extend((1..frames.len()).map(|_| Err(Error::Calculator(reason.clone()))));
        return out;
    }
    let slots: Vec<Mutex<Option<Result<Frame>>>> = (0..frames.len()).map(|_| Mutex::new(None)).collect();
    *slots[0].lock().unwrap() = Some(probe);
    let next = AtomicUsize::new(1);
    std::thread::scope(|s| {
        for _ in 0..ext.workers.min(frames.len() - 1) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= frames.len() {
                    break;
                }
                let r = ext.run(&frames[k], &dir(k));
                *slots[k].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every frame visited"))
        .collect()
}
