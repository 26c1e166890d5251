//! Extended-XYZ datasets and parity-output files.
//!
//! A frame is an atom-count line, a comment line of `Key=Value` tokens and one
//! line per atom whose columns are declared by the `Properties` key.
//! `Lattice`, `Properties`, `pbc`, `energy` and `virial` are lifted into typed
//! fields of [`Frame`]; every other comment key is kept in [`Frame::info`] in
//! file order. Per-atom columns other than `species`, `pos` and `forces` are
//! kept in [`Frame::arrays`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Value of a comment-line key other than the typed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InfoValue {
    Number(f64),
    Vector(Vec<f64>),
    Text(String),
}

impl InfoValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            InfoValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            InfoValue::Number(x) => Some(*x),
            _ => None,
        }
    }
}

/// Storage of one per-atom column group, row-major with `width` values per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Real(Vec<f64>),
    Int(Vec<i64>),
    Text(Vec<String>),
    Logical(Vec<bool>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Real(v) => v.len(),
            ColumnData::Int(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::Logical(v) => v.len(),
        }
    }

    fn type_code(&self) -> char {
        match self {
            ColumnData::Real(_) => 'R',
            ColumnData::Int(_) => 'I',
            ColumnData::Text(_) => 'S',
            ColumnData::Logical(_) => 'L',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomArray {
    pub width: usize,
    pub data: ColumnData,
}

/// One atomic structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Lattice vectors as rows, in Å.
    pub cell: Mat3,
    pub pbc: [bool; 3],
    pub species: Vec<String>,
    pub positions: Vec<Vec3>,
    /// Reference energy in eV.
    pub energy: Option<f64>,
    /// Reference forces in eV/Å.
    pub forces: Option<Vec<Vec3>>,
    /// Reference virial in eV, Voigt order xx, yy, zz, yz, xz, xy.
    pub virial: Option<[f64; 6]>,
    pub info: IndexMap<String, InfoValue>,
    pub arrays: IndexMap<String, AtomArray>,
}

impl Frame {
    /// A non-periodic frame with no labels.
    pub fn molecule(species: Vec<String>, positions: Vec<Vec3>) -> Self {
        Frame {
            cell: [[0.0; 3]; 3],
            pbc: [false; 3],
            species,
            positions,
            energy: None,
            forces: None,
            virial: None,
            info: IndexMap::new(),
            arrays: IndexMap::new(),
        }
    }

    /// A fully periodic frame with no labels.
    pub fn periodic(cell: Mat3, species: Vec<String>, positions: Vec<Vec3>) -> Self {
        Frame {
            cell,
            pbc: [true; 3],
            ..Frame::molecule(species, positions)
        }
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.pbc.iter().any(|&p| p)
    }

    pub fn config_type(&self) -> Option<&str> {
        self.info.get("config_type").and_then(InfoValue::as_str)
    }

    pub fn set_config_type(&mut self, value: impl Into<String>) {
        self.info
            .insert("config_type".to_string(), InfoValue::Text(value.into()));
    }

    /// Cell volume in Å³ (zero for a non-periodic frame without a cell).
    pub fn volume(&self) -> f64 {
        crate::geometry::det3(&self.cell).abs()
    }

    /// Drops reference labels, keeping geometry and metadata.
    pub fn without_labels(&self) -> Frame {
        Frame {
            energy: None,
            forces: None,
            virial: None,
            ..self.clone()
        }
    }

    /// Checks the structural invariants of a frame.
    pub fn validate(&self) -> Result<()> {
        let n = self.species.len();
        if self.positions.len() != n {
            return Err(Error::invalid(format!(
                "{} species but {} positions",
                n,
                self.positions.len()
            )));
        }
        if let Some(f) = &self.forces {
            if f.len() != n {
                return Err(Error::invalid(format!("{} atoms but {} force rows", n, f.len())));
            }
        }
        for (name, arr) in &self.arrays {
            if arr.width == 0 || arr.data.len() != arr.width * n {
                return Err(Error::invalid(format!(
                    "atom array `{name}` does not have {n} rows of width {}",
                    arr.width
                )));
            }
        }
        if self.is_periodic() && crate::geometry::det3(&self.cell).abs() < 1e-12 {
            return Err(Error::invalid("periodic frame with a singular cell"));
        }
        Ok(())
    }
}

/// An ordered frame collection.
pub type Dataset = Vec<Frame>;

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A number token: optional sign, digits with at most one decimal point, optional exponent.
/// Rejects `inf`, `nan` and friends that `str::parse` would accept.
fn looks_numeric(token: &str) -> bool {
    let b = token.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let mut digits = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
        digits += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return false;
        }
    }
    i == b.len()
}

fn parse_number(token: &str) -> Option<f64> {
    if looks_numeric(token) {
        token.parse().ok()
    } else {
        None
    }
}

/// Splits a comment line into `(key, value, was_quoted)` triples.
fn tokenize_comment(line: &str) -> std::result::Result<Vec<(String, String, bool)>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let n = chars.len();
    while i < n {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= n {
            break;
        }
        let mut key = String::new();
        while i < n && chars[i] != '=' && !chars[i].is_whitespace() {
            key.push(chars[i]);
            i += 1;
        }
        // A bare key is a boolean flag.
        if i >= n || chars[i].is_whitespace() {
            out.push((key, "T".to_string(), false));
            continue;
        }
        i += 1; // '='
        if i < n && (chars[i] == '"' || chars[i] == '\'') {
            let quote = chars[i];
            i += 1;
            let mut value = String::new();
            let mut closed = false;
            while i < n {
                let c = chars[i];
                if c == '\\' && i + 1 < n {
                    value.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if c == quote {
                    closed = true;
                    i += 1;
                    break;
                }
                value.push(c);
                i += 1;
            }
            if !closed {
                return Err(format!("unterminated quoted value for key `{key}`"));
            }
            out.push((key, value, true));
        } else {
            let mut value = String::new();
            while i < n && !chars[i].is_whitespace() {
                value.push(chars[i]);
                i += 1;
            }
            out.push((key, value, false));
        }
    }
    Ok(out)
}

struct Column {
    name: String,
    code: char,
    width: usize,
}

fn parse_properties(spec: &str) -> std::result::Result<Vec<Column>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() % 3 != 0 || parts.is_empty() {
        return Err(format!("Properties `{spec}` is not a list of name:type:count triplets"));
    }
    parts
        .chunks(3)
        .map(|c| {
            let code = match c[1] {
                "R" | "I" | "S" | "L" => c[1].chars().next().unwrap(),
                other => return Err(format!("unknown column type `{other}` for `{}`", c[0])),
            };
            let width: usize = c[2]
                .parse()
                .map_err(|_| format!("invalid column count `{}` for `{}`", c[2], c[0]))?;
            if width == 0 {
                return Err(format!("zero-width column `{}`", c[0]));
            }
            Ok(Column {
                name: c[0].to_string(),
                code,
                width,
            })
        })
        .collect()
}

fn parse_bool(token: &str) -> Option<bool> {
    match token {
        "T" | "True" | "true" | "1" => Some(true),
        "F" | "False" | "false" | "0" => Some(false),
        _ => None,
    }
}

fn parse_floats(value: &str) -> Option<Vec<f64>> {
    value.split_whitespace().map(parse_number).collect()
}

/// Symmetrized Voigt form of a row-major 3×3 tensor.
pub fn voigt_from_full(m: &[f64]) -> [f64; 6] {
    [
        m[0],
        m[4],
        m[8],
        0.5 * (m[5] + m[7]),
        0.5 * (m[2] + m[6]),
        0.5 * (m[1] + m[3]),
    ]
}

/// Parses extended-XYZ text.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let frame_index = frames.len();
        let err = |line: usize, msg: String| Error::Parse {
            frame: frame_index,
            line: line + 1,
            message: msg,
        };
        let count: usize = lines[at]
            .trim()
            .parse()
            .map_err(|_| err(at, format!("malformed atom count `{}`", lines[at].trim())))?;
        if at + 1 >= lines.len() {
            return Err(err(at, "truncated frame: missing comment line".into()));
        }
        let comment_line = at + 1;
        let tokens = tokenize_comment(lines[comment_line]).map_err(|m| err(comment_line, m))?;

        let mut cell = [[0.0; 3]; 3];
        let mut has_lattice = false;
        let mut pbc: Option<[bool; 3]> = None;
        let mut columns = None;
        let mut energy = None;
        let mut virial = None;
        let mut info = IndexMap::new();
        for (key, value, quoted) in tokens {
            match key.as_str() {
                "Lattice" => {
                    let v = parse_floats(&value)
                        .filter(|v| v.len() == 9)
                        .ok_or_else(|| err(comment_line, format!("Lattice must be 9 numbers, got `{value}`")))?;
                    for r in 0..3 {
                        for c in 0..3 {
                            cell[r][c] = v[3 * r + c];
                        }
                    }
                    has_lattice = true;
                }
                "Properties" => {
                    columns = Some(parse_properties(&value).map_err(|m| err(comment_line, m))?);
                }
                "pbc" => {
                    let v: Option<Vec<bool>> = value.split_whitespace().map(parse_bool).collect();
                    let v = v
                        .filter(|v| v.len() == 3)
                        .ok_or_else(|| err(comment_line, format!("pbc must be 3 booleans, got `{value}`")))?;
                    pbc = Some([v[0], v[1], v[2]]);
                }
                "energy" => {
                    energy = Some(
                        parse_number(value.trim())
                            .ok_or_else(|| err(comment_line, format!("non-numeric energy `{value}`")))?,
                    );
                }
                "virial" => {
                    let v = parse_floats(&value)
                        .ok_or_else(|| err(comment_line, format!("non-numeric virial `{value}`")))?;
                    virial = Some(match v.len() {
                        6 => [v[0], v[1], v[2], v[3], v[4], v[5]],
                        9 => voigt_from_full(&v),
                        k => return Err(err(comment_line, format!("virial must have 6 or 9 values, got {k}"))),
                    });
                }
                _ => {
                    let parsed = if let Some(x) = parse_number(value.trim()) {
                        InfoValue::Number(x)
                    } else if quoted && value.split_whitespace().count() > 1 {
                        match parse_floats(&value) {
                            Some(v) => InfoValue::Vector(v),
                            None => InfoValue::Text(value),
                        }
                    } else {
                        InfoValue::Text(value)
                    };
                    info.insert(key, parsed);
                }
            }
        }

        let columns = match columns {
            Some(c) => c,
            None => parse_properties("species:S:1:pos:R:3").unwrap(),
        };
        let total_width: usize = columns.iter().map(|c| c.width).sum();
        if !columns
            .iter()
            .any(|c| c.name == "species" && c.code == 'S' && c.width == 1)
        {
            return Err(err(comment_line, "Properties must declare species:S:1".into()));
        }
        if !columns.iter().any(|c| c.name == "pos" && c.code == 'R' && c.width == 3) {
            return Err(err(comment_line, "Properties must declare pos:R:3".into()));
        }

        let first_atom = at + 2;
        if first_atom + count > lines.len() {
            return Err(err(
                lines.len().saturating_sub(1),
                format!(
                    "truncated frame: expected {count} atom lines, found {}",
                    lines.len() - first_atom
                ),
            ));
        }
        let mut species = Vec::with_capacity(count);
        let mut positions = Vec::with_capacity(count);
        let mut forces: Option<Vec<Vec3>> = None;
        let mut arrays: IndexMap<String, AtomArray> = IndexMap::new();
        for col in &columns {
            match col.name.as_str() {
                "species" | "pos" => {}
                "forces" if col.code == 'R' && col.width == 3 => forces = Some(Vec::with_capacity(count)),
                _ => {
                    let data = match col.code {
                        'R' => ColumnData::Real(Vec::new()),
                        'I' => ColumnData::Int(Vec::new()),
                        'S' => ColumnData::Text(Vec::new()),
                        _ => ColumnData::Logical(Vec::new()),
                    };
                    arrays.insert(col.name.clone(), AtomArray { width: col.width, data });
                }
            }
        }
        for a in 0..count {
            let ln = first_atom + a;
            let fields: Vec<&str> = lines[ln].split_whitespace().collect();
            if fields.len() != total_width {
                return Err(err(
                    ln,
                    format!(
                        "atom line has {} columns, Properties declares {}",
                        fields.len(),
                        total_width
                    ),
                ));
            }
            let mut off = 0;
            for col in &columns {
                let cells = &fields[off..off + col.width];
                off += col.width;
                let real = |k: usize| {
                    parse_number(cells[k])
                        .ok_or_else(|| err(ln, format!("non-numeric value `{}` in column `{}`", cells[k], col.name)))
                };
                match col.name.as_str() {
                    "species" => species.push(cells[0].to_string()),
                    "pos" => positions.push([real(0)?, real(1)?, real(2)?]),
                    "forces" if forces.is_some() => forces.as_mut().unwrap().push([real(0)?, real(1)?, real(2)?]),
                    name => {
                        let arr = arrays.get_mut(name).unwrap();
                        for (k, cell_text) in cells.iter().enumerate() {
                            match &mut arr.data {
                                ColumnData::Real(v) => v.push(real(k)?),
                                ColumnData::Int(v) => v.push(cell_text.parse().map_err(|_| {
                                    err(ln, format!("non-integer value `{cell_text}` in column `{name}`"))
                                })?),
                                ColumnData::Text(v) => v.push(cell_text.to_string()),
                                ColumnData::Logical(v) => v.push(parse_bool(cell_text).ok_or_else(|| {
                                    err(ln, format!("non-logical value `{cell_text}` in column `{name}`"))
                                })?),
                            }
                        }
                    }
                }
            }
        }
        let pbc = pbc.unwrap_or([has_lattice; 3]);
        let frame = Frame {
            cell,
            pbc,
            species,
            positions,
            energy,
            forces,
            virial,
            info,
            arrays,
        };
        if frame.is_periodic() && crate::geometry::det3(&frame.cell).abs() < 1e-12 {
            return Err(err(
                comment_line,
                "periodic frame with a singular or missing Lattice".into(),
            ));
        }
        frames.push(frame);
        at = first_atom + count;
    }
    Ok(frames)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text).map_err(|e| e.in_file(path))
}

fn quote(value: &str) -> String {
    let mut s = String::with_capacity(value.len() + 2);
    s.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s.push('"');
    s
}

fn needs_quotes(value: &str) -> bool {
    value.is_empty() || value.contains(|c: char| c.is_whitespace() || c == '"' || c == '\'' || c == '=' || c == '\\')
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

fn bool_char(b: bool) -> &'static str {
    if b {
        "T"
    } else {
        "F"
    }
}

/// Appends one frame in extended-XYZ form.
pub fn write_frame(out: &mut String, frame: &Frame) -> Result<()> {
    frame.validate()?;
    let n = frame.len();
    let _ = writeln!(out, "{n}");

    let mut props = String::from("species:S:1:pos:R:3");
    if frame.forces.is_some() {
        props.push_str(":forces:R:3");
    }
    for (name, arr) in &frame.arrays {
        let _ = write!(props, ":{}:{}:{}", name, arr.data.type_code(), arr.width);
    }

    let mut comment = Vec::new();
    let has_cell = frame.is_periodic() || frame.cell.iter().flatten().any(|&x| x != 0.0);
    if has_cell {
        let flat: Vec<f64> = frame.cell.iter().flatten().copied().collect();
        comment.push(format!("Lattice={}", quote(&join_floats(&flat))));
    }
    comment.push(format!("Properties={props}"));
    if let Some(e) = frame.energy {
        comment.push(format!("energy={}", fmt_f64(e)));
    }
    if let Some(v) = &frame.virial {
        comment.push(format!("virial={}", quote(&join_floats(v))));
    }
    if has_cell {
        let p = frame.pbc.map(bool_char).join(" ");
        comment.push(format!("pbc={}", quote(&p)));
    }
    for (key, value) in &frame.info {
        let text = match value {
            InfoValue::Number(x) => fmt_f64(*x),
            InfoValue::Vector(v) => quote(&join_floats(v)),
            InfoValue::Text(s) if needs_quotes(s) => quote(s),
            InfoValue::Text(s) => s.clone(),
        };
        comment.push(format!("{key}={text}"));
    }
    let _ = writeln!(out, "{}", comment.join(" "));

    for a in 0..n {
        let p = frame.positions[a];
        let _ = write!(
            out,
            "{} {} {} {}",
            frame.species[a],
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2])
        );
        if let Some(f) = &frame.forces {
            let f = f[a];
            let _ = write!(out, " {} {} {}", fmt_f64(f[0]), fmt_f64(f[1]), fmt_f64(f[2]));
        }
        for arr in frame.arrays.values() {
            let range = a * arr.width..(a + 1) * arr.width;
            match &arr.data {
                ColumnData::Real(v) => v[range].iter().for_each(|x| {
                    let _ = write!(out, " {}", fmt_f64(*x));
                }),
                ColumnData::Int(v) => v[range].iter().for_each(|x| {
                    let _ = write!(out, " {x}");
                }),
                ColumnData::Text(v) => v[range].iter().for_each(|x| {
                    let _ = write!(out, " {x}");
                }),
                ColumnData::Logical(v) => v[range].iter().for_each(|x| {
                    let _ = write!(out, " {}", bool_char(*x));
                }),
            }
        }
        out.push('\n');
    }
    Ok(())
}

pub fn format_dataset(dataset: &[Frame]) -> Result<String> {
    let mut out = String::new();
    for frame in dataset {
        write_frame(&mut out, frame)?;
    }
    Ok(out)
}

/// Writes a dataset. The file is replaced atomically so that a partially
/// written dataset is never observed under `path`.
pub fn write_dataset(dataset: &[Frame], path: impl AsRef<Path>) -> Result<()> {
    let text = format_dataset(dataset)?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("`{}` is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Property kinds carried by parity files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParityKind {
    Energy,
    Force,
    Virial,
    Stress,
}

impl ParityKind {
    pub const ALL: [ParityKind; 4] = [
        ParityKind::Energy,
        ParityKind::Force,
        ParityKind::Virial,
        ParityKind::Stress,
    ];

    /// Components per row on each side (predicted, reference).
    pub fn width(self) -> usize {
        match self {
            ParityKind::Energy => 1,
            ParityKind::Force => 3,
            ParityKind::Virial | ParityKind::Stress => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParityKind::Energy => "energy",
            ParityKind::Force => "force",
            ParityKind::Virial => "virial",
            ParityKind::Stress => "stress",
        }
    }

    /// File name used for a dataset with the given stem, e.g. `energy_train.out`.
    pub fn file_name(self, stem: &str) -> String {
        format!("{}_{}.out", self.name(), stem)
    }
}

impl std::str::FromStr for ParityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(ParityKind::Energy),
            "force" => Ok(ParityKind::Force),
            "virial" => Ok(ParityKind::Virial),
            "stress" => Ok(ParityKind::Stress),
            _ => Err(Error::invalid(format!("unknown parity kind `{s}`"))),
        }
    }
}

/// Paired predicted and reference values. Each row holds `width` predicted
/// components followed by `width` reference components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySeries {
    pub kind: ParityKind,
    pub width: usize,
    pub rows: Vec<f64>,
    pub frame_index: Option<Vec<usize>>,
}

impl ParitySeries {
    pub fn new(kind: ParityKind, width: usize) -> Self {
        ParitySeries {
            kind,
            width,
            rows: Vec::new(),
            frame_index: None,
        }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.rows.len() / (2 * self.width)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, pred: &[f64], reference: &[f64]) {
        debug_assert_eq!(pred.len(), self.width);
        debug_assert_eq!(reference.len(), self.width);
        self.rows.extend_from_slice(pred);
        self.rows.extend_from_slice(reference);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[2 * self.width * i..2 * self.width * (i + 1)]
    }

    pub fn pred(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.width]
    }

    pub fn reference(&self, i: usize) -> &[f64] {
        &self.row(i)[self.width..]
    }
}

/// Parses parity text. `width` overrides the per-kind component count for foreign files.
pub fn parse_parity(text: &str, kind: ParityKind, width: Option<usize>) -> Result<ParitySeries> {
    let width = width.unwrap_or_else(|| kind.width());
    let expected = 2 * width;
    let mut series = ParitySeries::new(kind, width);
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != expected {
            return Err(Error::Parse {
                frame: series.len(),
                line: ln + 1,
                message: format!("expected {expected} columns, found {}", fields.len()),
            });
        }
        for f in fields {
            let x = parse_number(f).filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                frame: series.len(),
                line: ln + 1,
                message: format!("non-numeric or non-finite value `{f}`"),
            })?;
            series.rows.push(x);
        }
    }
    Ok(series)
}

pub fn read_parity(path: impl AsRef<Path>, kind: ParityKind, width: Option<usize>) -> Result<ParitySeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_parity(&text, kind, width).map_err(|e| e.in_file(path))
}

pub fn format_parity(series: &ParitySeries) -> String {
    let mut out = String::new();
    for i in 0..series.len() {
        let row: Vec<String> = series.row(i).iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_parity(series: &ParitySeries, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_parity(series).as_bytes())
}
