//! Curation session behind the browser UI: a loaded dataset with shared
//! selection and search flags, parity data, curation tools, deletion with
//! undo, exports and per-frame structure views.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::elements;
use crate::error::{Error, Result};
use crate::exyzio::{
    fmt_f64, format_dataset, read_dataset, read_parity, write_atomic, write_dataset, Frame, Mat3, ParityKind,
    ParitySeries, Vec3,
};
use crate::geometry::{bond_report, is_canonical_shift, is_physical, CellGeometry, RadiiTable};
use crate::sampling::{farthest_point_sample, pca_project, projection_csv, top_n, Projection2D};
use crate::surrogate::{self, structure_descriptor, DescriptorSpec, SurrogateModel};

/// Deletions kept for undo.
pub const UNDO_DEPTH: usize = 50;
/// Display bonds connect atoms closer than this multiple of their radii sum.
pub const BOND_DISPLAY_FACTOR: f64 = 1.15;
/// Radius used for elements missing from the radii table.
pub const FALLBACK_RADIUS: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Used to compute parity data when no parity files are present, and for descriptors.
    pub model: Option<SurrogateModel>,
    pub radii: RadiiTable,
    /// Component counts overriding the per-kind defaults when reading parity files.
    pub widths: BTreeMap<ParityKind, usize>,
    /// Descriptor settings when no model is given; elements are taken from the data.
    pub r_cut: f64,
    pub n_rad: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            model: None,
            radii: RadiiTable::cordero(),
            widths: BTreeMap::new(),
            r_cut: 5.0,
            n_rad: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParitySource {
    File,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenReport {
    pub dataset: PathBuf,
    pub frames: usize,
    pub parity: BTreeMap<ParityKind, ParitySource>,
    /// True when parity data came from files rather than from the model.
    pub cache_hit: bool,
}

/// Per-frame parity rows of one kind: `blocks[f]` holds the rows of frame `f`,
/// each `width` predicted then `width` reference values.
#[derive(Debug, Clone, PartialEq)]
struct ParityBlocks {
    width: usize,
    blocks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Removed {
    index: usize,
    frame: Frame,
    selected: bool,
    matched: bool,
    parity: Vec<(ParityKind, Vec<f64>)>,
    descriptor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Descriptor,
    Energy,
    Force,
    Virial,
    Stress,
}

impl PlotKind {
    pub fn parity(self) -> Option<ParityKind> {
        match self {
            PlotKind::Descriptor => None,
            PlotKind::Energy => Some(ParityKind::Energy),
            PlotKind::Force => Some(ParityKind::Force),
            PlotKind::Virial => Some(ParityKind::Virial),
            PlotKind::Stress => Some(ParityKind::Stress),
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descriptor" => Ok(PlotKind::Descriptor),
            other => other.parse::<ParityKind>().map(|k| match k {
                ParityKind::Energy => PlotKind::Energy,
                ParityKind::Force => PlotKind::Force,
                ParityKind::Virial => PlotKind::Virial,
                ParityKind::Stress => PlotKind::Stress,
            }),
        }
    }
}

/// Scatter data, one entry per point. Parity plots put the reference on x
/// and the prediction on y; the descriptor plot holds PCA coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plot {
    pub kind: PlotKind,
    pub frame: Vec<usize>,
    /// Component of the row (0 for energy, 0..3 for force, 0..6 for virial and stress).
    pub component: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub selected: Vec<bool>,
    pub matched: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Prefix,
    Suffix,
    #[default]
    Contains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tool {
    /// Selects the frames farthest-point sampling would NOT keep.
    Fps {
        max_count: usize,
        #[serde(default)]
        min_distance: f64,
    },
    /// Selects the `n` frames with the largest summed absolute error in `kind`.
    MaxError {
        n: i64,
        #[serde(default = "energy_kind")]
        kind: ParityKind,
    },
    /// Selects frames failing the covalent-radius bond screen.
    Nonphysical {
        #[serde(default)]
        coeff: Option<f64>,
    },
    SelectIds {
        ids: Vec<usize>,
    },
    DeselectIds {
        ids: Vec<usize>,
    },
    /// Marks frames whose `config_type` matches, without selecting them.
    SearchConfigType {
        pattern: String,
        #[serde(default)]
        mode: MatchMode,
    },
    /// Selects exactly the search matches.
    SelectMatched,
    ClearSearch,
    Invert,
}

fn energy_kind() -> ParityKind {
    ParityKind::Energy
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolReport {
    pub newly_selected: Vec<usize>,
    pub selected: Vec<usize>,
    pub matched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeletionReport {
    pub removed: Vec<usize>,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UndoReport {
    pub restored: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "what", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExportRequest {
    Dataset {
        path: PathBuf,
    },
    /// Selected frames only, or every frame when nothing is selected.
    Descriptors {
        path: PathBuf,
    },
    FrameXyz {
        index: usize,
        path: PathBuf,
    },
    Projection {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportReport {
    pub path: PathBuf,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomView {
    pub element: String,
    pub position: Vec3,
    pub radius: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondView {
    pub i: usize,
    pub j: usize,
    pub shift: [i32; 3],
    pub distance: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureView {
    pub index: usize,
    pub cell: Mat3,
    pub pbc: [bool; 3],
    pub config_type: Option<String>,
    pub atoms: Vec<AtomView>,
    pub bonds: Vec<BondView>,
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub dataset: PathBuf,
    pub frames: usize,
    pub atoms: usize,
    pub kinds: Vec<PlotKind>,
    pub selected: Vec<usize>,
    pub matched: Vec<usize>,
    pub config_types: Vec<Option<String>>,
    pub undo_depth: usize,
}

pub struct Session {
    dir: PathBuf,
    dataset_path: PathBuf,
    frames: Vec<Frame>,
    selected: Vec<bool>,
    matched: Vec<bool>,
    parity: BTreeMap<ParityKind, ParityBlocks>,
    spec: DescriptorSpec,
    radii: RadiiTable,
    descriptors: Option<Vec<Vec<f64>>>,
    projection: Option<Projection2D>,
    journal: VecDeque<Vec<Removed>>,
}

/// Picks the dataset of a directory: `train.xyz` when present, otherwise the
/// first `*.xyz` in name order.
pub fn find_dataset(dir: &Path) -> Result<PathBuf> {
    let train = dir.join("train.xyz");
    if train.is_file() {
        return Ok(train);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "xyz"))
        .collect();
    found.sort();
    found
        .into_iter()
        .next()
        .ok_or_else(|| Error::invalid(format!("no .xyz file in {}", dir.display())))
}

fn split_rows(series: &ParitySeries, counts: &[usize], path: &Path) -> Result<Vec<Vec<f64>>> {
    let total: usize = counts.iter().sum();
    if series.len() != total {
        return Err(Error::invalid(format!(
            "{}: {} rows but the dataset needs {total}",
            path.display(),
            series.len()
        )));
    }
    let row = 2 * series.width;
    let mut at = 0;
    Ok(counts
        .iter()
        .map(|&c| {
            let b = series.rows[at * row..(at + c) * row].to_vec();
            at += c;
            b
        })
        .collect())
}

fn rows_per_frame(frames: &[Frame], kind: ParityKind) -> Vec<usize> {
    match kind {
        ParityKind::Force => frames.iter().map(Frame::len).collect(),
        _ => vec![1; frames.len()],
    }
}

/// Opens the dataset in `dir`. Parity files `<kind>_<stem>.out` next to it are
/// loaded; when none exist and a model is given, parity data are computed for
/// every fully labeled kind and written there as a cache.
pub fn open_session(dir: impl AsRef<Path>, options: SessionOptions) -> Result<(Session, OpenReport)> {
    let dir = dir.as_ref().to_path_buf();
    let dataset_path = find_dataset(&dir)?;
    let frames = read_dataset(&dataset_path)?;
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let spec = match &options.model {
        Some(m) => {
            let mut problems = Vec::new();
            for (k, f) in frames.iter().enumerate() {
                if let Some(s) = f.species.iter().find(|s| m.spec.species_index(s).is_err()) {
                    problems.push(format!("frame {k}: element `{s}` not covered by the model"));
                }
            }
            if !problems.is_empty() {
                let more = problems.len().saturating_sub(10);
                problems.truncate(10);
                if more > 0 {
                    problems.push(format!("... and {more} more frames"));
                }
                return Err(Error::invalid(problems.join("\n")));
            }
            m.spec.clone()
        }
        None => {
            let mut elements = DescriptorSpec::elements_of(&frames);
            if elements.is_empty() {
                elements.push("H".into());
            }
            DescriptorSpec::new(options.r_cut, options.n_rad, elements)?
        }
    };

    let mut parity = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for kind in ParityKind::ALL {
        let path = dir.join(kind.file_name(&stem));
        if path.is_file() {
            let series = read_parity(&path, kind, options.widths.get(&kind).copied())?;
            let blocks = split_rows(&series, &rows_per_frame(&frames, kind), &path)?;
            parity.insert(
                kind,
                ParityBlocks {
                    width: series.width,
                    blocks,
                },
            );
            sources.insert(kind, ParitySource::File);
        }
    }
    let cache_hit = !parity.is_empty();
    if !cache_hit {
        if let Some(model) = &options.model {
            let preds = crate::par::map(&frames, |f| surrogate::predict(f, model))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            for kind in [ParityKind::Energy, ParityKind::Force, ParityKind::Virial] {
                let labeled = !frames.is_empty()
                    && frames.iter().all(|f| match kind {
                        ParityKind::Energy => f.energy.is_some(),
                        ParityKind::Force => f.forces.is_some(),
                        _ => f.virial.is_some(),
                    });
                if !labeled {
                    continue;
                }
                let series = surrogate::parity(&frames, &preds, kind);
                let path = dir.join(kind.file_name(&stem));
                crate::exyzio::write_parity(&series, &path)?;
                let blocks = split_rows(&series, &rows_per_frame(&frames, kind), &path)?;
                parity.insert(
                    kind,
                    ParityBlocks {
                        width: series.width,
                        blocks,
                    },
                );
                sources.insert(kind, ParitySource::Computed);
            }
        }
    }

    let n = frames.len();
    let report = OpenReport {
        dataset: dataset_path.clone(),
        frames: n,
        parity: sources,
        cache_hit,
    };
    let session = Session {
        dir,
        dataset_path,
        frames,
        selected: vec![false; n],
        matched: vec![false; n],
        parity,
        spec,
        radii: options.radii,
        descriptors: None,
        projection: None,
        journal: VecDeque::new(),
    };
    Ok((session, report))
}

fn indices(flags: &[bool]) -> Vec<usize> {
    (0..flags.len()).filter(|&k| flags[k]).collect()
}

impl Session {
    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn selected(&self) -> Vec<usize> {
        indices(&self.selected)
    }

    pub fn matched(&self) -> Vec<usize> {
        indices(&self.matched)
    }

    pub fn descriptor_spec(&self) -> &DescriptorSpec {
        &self.spec
    }

    pub fn kinds(&self) -> Vec<PlotKind> {
        let mut out = vec![PlotKind::Descriptor];
        for k in self.parity.keys() {
            out.push(match k {
                ParityKind::Energy => PlotKind::Energy,
                ParityKind::Force => PlotKind::Force,
                ParityKind::Virial => PlotKind::Virial,
                ParityKind::Stress => PlotKind::Stress,
            });
        }
        out
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            dataset: self.dataset_path.clone(),
            frames: self.frames.len(),
            atoms: self.frames.iter().map(Frame::len).sum(),
            kinds: self.kinds(),
            selected: self.selected(),
            matched: self.matched(),
            config_types: self
                .frames
                .iter()
                .map(|f| f.config_type().map(str::to_string))
                .collect(),
            undo_depth: self.journal.len(),
        }
    }

    /// Structure descriptors of every frame, computed on first use.
    pub fn descriptors(&mut self) -> Result<&[Vec<f64>]> {
        if self.descriptors.is_none() {
            let spec = &self.spec;
            let d = crate::par::map(&self.frames, |f| {
                if f.is_empty() {
                    Ok(vec![0.0; spec.dim()])
                } else {
                    structure_descriptor(f, spec)
                }
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            self.descriptors = Some(d);
        }
        Ok(self.descriptors.as_deref().unwrap_or_default())
    }

    /// PCA of the structure descriptors, computed on first use.
    pub fn projection(&mut self) -> Result<&Projection2D> {
        if self.projection.is_none() {
            let n = self.frames.len();
            let p = if n < 2 {
                let dim = self.spec.dim();
                Projection2D {
                    coords: vec![[0.0, 0.0]; n],
                    explained_variance: [0.0, 0.0],
                    component_axes: [vec![0.0; dim], vec![0.0; dim]],
                }
            } else {
                pca_project(self.descriptors()?)?
            };
            self.projection = Some(p);
        }
        Ok(self.projection.as_ref().expect("just computed"))
    }

    /// Computes whatever `kind` needs lazily so [`Session::plot`] can run on a shared reference.
    pub fn prepare(&mut self, kind: PlotKind) -> Result<()> {
        if kind == PlotKind::Descriptor {
            self.projection()?;
        }
        Ok(())
    }

    /// Whether [`Session::plot`] can answer `kind` without [`Session::prepare`].
    pub fn is_prepared(&self, kind: PlotKind) -> bool {
        kind != PlotKind::Descriptor || self.projection.is_some()
    }

    pub fn get_plot(&mut self, kind: PlotKind) -> Result<Plot> {
        self.prepare(kind)?;
        self.plot(kind)
    }

    /// Plot data of a prepared kind.
    pub fn plot(&self, kind: PlotKind) -> Result<Plot> {
        let mut plot = Plot {
            kind,
            frame: Vec::new(),
            component: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            selected: Vec::new(),
            matched: Vec::new(),
        };
        match kind.parity() {
            None => {
                let projection = self
                    .projection
                    .as_ref()
                    .ok_or_else(|| Error::invalid("descriptor projection not computed yet"))?;
                for (f, c) in projection.coords.iter().enumerate() {
                    plot.frame.push(f);
                    plot.component.push(0);
                    plot.x.push(c[0]);
                    plot.y.push(c[1]);
                }
            }
            Some(pk) => {
                let blocks = self
                    .parity
                    .get(&pk)
                    .ok_or_else(|| Error::invalid(format!("no {} data in this session", pk.name())))?;
                let w = blocks.width;
                for (f, b) in blocks.blocks.iter().enumerate() {
                    for row in b.chunks(2 * w) {
                        for c in 0..w {
                            plot.frame.push(f);
                            plot.component.push(c);
                            plot.x.push(row[w + c]);
                            plot.y.push(row[c]);
                        }
                    }
                }
            }
        }
        plot.selected = plot.frame.iter().map(|&f| self.selected[f]).collect();
        plot.matched = plot.frame.iter().map(|&f| self.matched[f]).collect();
        Ok(plot)
    }

    /// Summed absolute error of every frame in `kind`.
    pub fn frame_errors(&self, kind: ParityKind) -> Result<Vec<f64>> {
        let blocks = self
            .parity
            .get(&kind)
            .ok_or_else(|| Error::invalid(format!("no {} data in this session", kind.name())))?;
        let w = blocks.width;
        Ok(blocks
            .blocks
            .iter()
            .map(|b| {
                b.chunks(2 * w)
                    .map(|r| (0..w).map(|c| (r[c] - r[w + c]).abs()).sum::<f64>())
                    .sum()
            })
            .collect())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.frames.len()) {
            Some(i) => Err(Error::invalid(format!(
                "frame {i} out of range for {} frames",
                self.frames.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn apply_tool(&mut self, tool: &Tool) -> Result<ToolReport> {
        let before = self.selected.clone();
        let mark = |flags: &mut Vec<bool>, ids: &[usize]| ids.iter().for_each(|&i| flags[i] = true);
        match tool {
            Tool::Fps {
                max_count,
                min_distance,
            } => {
                if !(*min_distance >= 0.0) {
                    return Err(Error::invalid("min_distance must be non-negative"));
                }
                if !self.frames.is_empty() {
                    let r = farthest_point_sample(self.descriptors()?, *max_count, *min_distance, None, None)?;
                    mark(&mut self.selected, &r.rejected);
                }
            }
            Tool::MaxError { n, kind } => {
                if *n < 0 {
                    return Err(Error::invalid(format!("n must be non-negative, got {n}")));
                }
                let errors = self.frame_errors(*kind)?;
                mark(&mut self.selected, &top_n(&errors, *n as usize));
            }
            Tool::Nonphysical { coeff } => {
                let radii = match coeff {
                    Some(c) => self.radii.clone().with_coeff(*c)?,
                    None => self.radii.clone(),
                };
                let ok = crate::par::map(&self.frames, |f| is_physical(f, &radii));
                let mut bad = Vec::new();
                for (k, r) in ok.into_iter().enumerate() {
                    if !r.map_err(|e| Error::invalid(format!("frame {k}: {e}")))? {
                        bad.push(k);
                    }
                }
                mark(&mut self.selected, &bad);
            }
            Tool::SelectIds { ids } => {
                self.check_ids(ids)?;
                mark(&mut self.selected, ids);
            }
            Tool::DeselectIds { ids } => {
                self.check_ids(ids)?;
                ids.iter().for_each(|&i| self.selected[i] = false);
            }
            Tool::SearchConfigType { pattern, mode } => {
                if pattern.is_empty() {
                    return Err(Error::invalid("search pattern is empty"));
                }
                for (m, f) in self.matched.iter_mut().zip(&self.frames) {
                    *m = f.config_type().is_some_and(|c| match mode {
                        MatchMode::Prefix => c.starts_with(pattern.as_str()),
                        MatchMode::Suffix => c.ends_with(pattern.as_str()),
                        MatchMode::Contains => c.contains(pattern.as_str()),
                    });
                }
            }
            Tool::SelectMatched => self.selected.clone_from(&self.matched),
            Tool::ClearSearch => self.matched.fill(false),
            Tool::Invert => self.selected.iter_mut().for_each(|s| *s = !*s),
        }
        Ok(ToolReport {
            newly_selected: (0..before.len()).filter(|&k| self.selected[k] && !before[k]).collect(),
            selected: self.selected(),
            matched: self.matched(),
        })
    }

    /// Removes every selected frame. The removal is journaled for [`Session::undo`].
    pub fn delete_selected(&mut self) -> DeletionReport {
        let removed_ids = self.selected();
        if removed_ids.is_empty() {
            return DeletionReport {
                removed: removed_ids,
                remaining: self.frames.len(),
            };
        }
        let mut entry = Vec::with_capacity(removed_ids.len());
        for &k in removed_ids.iter().rev() {
            let parity = self
                .parity
                .iter_mut()
                .map(|(kind, b)| (*kind, b.blocks.remove(k)))
                .collect();
            entry.push(Removed {
                index: k,
                frame: self.frames.remove(k),
                selected: self.selected.remove(k),
                matched: self.matched.remove(k),
                parity,
                descriptor: self.descriptors.as_mut().map(|d| d.remove(k)),
            });
        }
        entry.reverse();
        self.journal.push_back(entry);
        if self.journal.len() > UNDO_DEPTH {
            self.journal.pop_front();
        }
        self.projection = None;
        DeletionReport {
            removed: removed_ids,
            remaining: self.frames.len(),
        }
    }

    /// Restores the most recent deletion.
    pub fn undo(&mut self) -> UndoReport {
        let Some(entry) = self.journal.pop_back() else {
            return UndoReport {
                restored: Vec::new(),
                count: self.frames.len(),
            };
        };
        let mut restored = Vec::with_capacity(entry.len());
        for r in entry {
            let k = r.index;
            self.frames.insert(k, r.frame);
            self.selected.insert(k, r.selected);
            self.matched.insert(k, r.matched);
            for (kind, block) in r.parity {
                if let Some(b) = self.parity.get_mut(&kind) {
                    b.blocks.insert(k, block);
                }
            }
            match (&mut self.descriptors, r.descriptor) {
                (Some(d), Some(v)) => d.insert(k, v),
                _ => self.descriptors = None,
            }
            restored.push(k);
        }
        self.projection = None;
        UndoReport {
            restored,
            count: self.frames.len(),
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            self.dir.join(path)
        } else {
            path.to_path_buf()
        }
    }

    pub fn export(&mut self, request: &ExportRequest) -> Result<ExportReport> {
        match request {
            ExportRequest::Dataset { path } => {
                let path = self.resolve(path);
                write_dataset(&self.frames, &path)?;
                Ok(ExportReport {
                    path,
                    rows: self.frames.len(),
                })
            }
            ExportRequest::Descriptors { path } => {
                let path = self.resolve(path);
                let mut rows = self.selected();
                if rows.is_empty() {
                    rows = (0..self.frames.len()).collect();
                }
                let dim = self.spec.dim();
                let d = self.descriptors()?;
                let mut text = String::from("frame");
                for c in 0..dim {
                    let _ = write!(text, ",q{c}");
                }
                text.push('\n');
                for &k in &rows {
                    text.push_str(&k.to_string());
                    for x in &d[k] {
                        text.push(',');
                        text.push_str(&fmt_f64(*x));
                    }
                    text.push('\n');
                }
                write_atomic(&path, text.as_bytes())?;
                Ok(ExportReport { path, rows: rows.len() })
            }
            ExportRequest::FrameXyz { index, path } => {
                self.check_ids(&[*index])?;
                let path = self.resolve(path);
                let text = format_dataset(std::slice::from_ref(&self.frames[*index]))?;
                write_atomic(&path, text.as_bytes())?;
                Ok(ExportReport { path, rows: 1 })
            }
            ExportRequest::Projection { path } => {
                let path = self.resolve(path);
                let n = self.frames.len();
                let frames: Vec<usize> = (0..n).collect();
                let text = projection_csv(self.projection()?, &frames);
                write_atomic(&path, text.as_bytes())?;
                Ok(ExportReport { path, rows: n })
            }
        }
    }

    pub fn get_structure_view(&self, index: usize) -> Result<StructureView> {
        self.check_ids(&[index])?;
        let frame = &self.frames[index];
        let mut radii = self.radii.clone();
        for s in &frame.species {
            if radii.radius(s).is_err() {
                radii.set_radius(s.clone(), FALLBACK_RADIUS);
            }
        }
        let r: Vec<f64> = frame.species.iter().map(|s| radii.radius(s)).collect::<Result<_>>()?;
        let atoms = frame
            .species
            .iter()
            .zip(&frame.positions)
            .zip(&r)
            .map(|((s, p), &radius)| AtomView {
                element: s.clone(),
                position: *p,
                radius,
                color: elements::cpk_color(s),
            })
            .collect();

        let geom = CellGeometry::new(frame)?;
        let max_r = r.iter().copied().fold(0.0, f64::max);
        let reach = BOND_DISPLAY_FACTOR * 2.0 * max_r;
        let mut bonds = Vec::new();
        for i in 0..frame.len() {
            for j in i..frame.len() {
                let d = crate::geometry::sub(frame.positions[j], frame.positions[i]);
                let display = BOND_DISPLAY_FACTOR * (r[i] + r[j]);
                let threshold = radii.coeff * (r[i] + r[j]);
                geom.for_each_image_within(d, reach, |shift, _, dist| {
                    if i == j && !is_canonical_shift(shift) {
                        return;
                    }
                    if dist < display {
                        bonds.push(BondView {
                            i,
                            j,
                            shift,
                            distance: dist,
                            flagged: threshold > dist,
                        });
                    }
                });
            }
        }
        let report = bond_report(frame, &radii)?;
        Ok(StructureView {
            index,
            cell: frame.cell,
            pbc: frame.pbc,
            config_type: frame.config_type().map(str::to_string),
            atoms,
            bonds,
            min_distance: report.min_distance,
        })
    }
}
