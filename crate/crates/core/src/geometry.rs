//! Periodic-cell geometry: minimum-image distances, image enumeration,
//! neighbor lists and the covalent-radius bond-length screen.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exyzio::{Frame, Mat3, Vec3};

/// Upper bound on image shifts searched along any periodic axis.
pub const MAX_IMAGE_EXTENT: i32 = 5;

/// Default covalent-radius coefficient of the bond screen.
pub const DEFAULT_COEFF: f64 = 0.65;

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Row-vector product `v · M`.
pub fn vec_mat(v: Vec3, m: &Mat3) -> Vec3 {
    [
        v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
        v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
        v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        out[r] = vec_mat(a[r], b);
    }
    out
}

pub fn inverse3(m: &Mat3) -> Option<Mat3> {
    let det = det3(m);
    if det.abs() < 1e-12 || !det.is_finite() {
        return None;
    }
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    Some(adj.map(|row| row.map(|x| x / det)))
}

/// The separation vector `d + s·H` for integer image shift `s`.
#[inline]
pub fn image_vector(d: Vec3, cell: &Mat3, s: [i32; 3]) -> Vec3 {
    let (s0, s1, s2) = (s[0] as f64, s[1] as f64, s[2] as f64);
    [
        d[0] + (s0 * cell[0][0] + s1 * cell[1][0] + s2 * cell[2][0]),
        d[1] + (s0 * cell[0][1] + s1 * cell[1][1] + s2 * cell[2][1]),
        d[2] + (s0 * cell[0][2] + s1 * cell[1][2] + s2 * cell[2][2]),
    ]
}

/// Precomputed cell data for image searches.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    cell: Mat3,
    inverse: Mat3,
    pbc: [bool; 3],
    /// Distance between opposite faces along each lattice direction.
    widths: [f64; 3],
}

impl CellGeometry {
    pub fn new(frame: &Frame) -> Result<Self> {
        Self::from_cell(frame.cell, frame.pbc)
    }

    pub fn from_cell(cell: Mat3, pbc: [bool; 3]) -> Result<Self> {
        if !pbc.iter().any(|&p| p) {
            return Ok(CellGeometry {
                cell,
                inverse: [[0.0; 3]; 3],
                pbc,
                widths: [f64::INFINITY; 3],
            });
        }
        let inverse = inverse3(&cell).ok_or(Error::SingularCell)?;
        let volume = det3(&cell).abs();
        let widths = [
            volume / norm(cross(cell[1], cell[2])),
            volume / norm(cross(cell[2], cell[0])),
            volume / norm(cross(cell[0], cell[1])),
        ];
        Ok(CellGeometry {
            cell,
            inverse,
            pbc,
            widths,
        })
    }

    pub fn cell(&self) -> &Mat3 {
        &self.cell
    }

    pub fn is_periodic(&self) -> bool {
        self.pbc.iter().any(|&p| p)
    }

    /// Shift that brings `d` into the fractional range [-0.5, 0.5] on periodic axes.
    fn wrap_shift(&self, d: Vec3) -> [i32; 3] {
        if !self.is_periodic() {
            return [0; 3];
        }
        let frac = vec_mat(d, &self.inverse);
        let mut s = [0; 3];
        for k in 0..3 {
            if self.pbc[k] {
                s[k] = -(frac[k].round() as i32);
            }
        }
        s
    }

    fn extents(&self, radius: f64) -> [i32; 3] {
        let mut n = [0; 3];
        for k in 0..3 {
            if self.pbc[k] {
                let e = (radius / self.widths[k] + 0.5).ceil();
                n[k] = if e.is_finite() {
                    (e as i32).min(MAX_IMAGE_EXTENT)
                } else {
                    MAX_IMAGE_EXTENT
                };
            }
        }
        n
    }

    /// Shortest image of separation `d`, as (shift, distance). Ties keep the
    /// first shift in lexicographic order.
    pub fn min_image(&self, d: Vec3) -> ([i32; 3], f64) {
        let s0 = self.wrap_shift(d);
        let mut best = (s0, norm(image_vector(d, &self.cell, s0)));
        if !self.is_periodic() {
            return best;
        }
        let n = self.extents(best.1);
        for a in -n[0]..=n[0] {
            for b in -n[1]..=n[1] {
                for c in -n[2]..=n[2] {
                    let s = [s0[0] + a, s0[1] + b, s0[2] + c];
                    let r = norm(image_vector(d, &self.cell, s));
                    if r < best.1 {
                        best = (s, r);
                    }
                }
            }
        }
        best
    }

    /// Calls `visit(shift, vector, distance)` for every image of `d` with distance ≤ `radius`.
    pub fn for_each_image_within(&self, d: Vec3, radius: f64, mut visit: impl FnMut([i32; 3], Vec3, f64)) {
        let s0 = self.wrap_shift(d);
        let n = self.extents(radius);
        for a in -n[0]..=n[0] {
            for b in -n[1]..=n[1] {
                for c in -n[2]..=n[2] {
                    let s = [s0[0] + a, s0[1] + b, s0[2] + c];
                    let v = image_vector(d, &self.cell, s);
                    let r = norm(v);
                    if r <= radius {
                        visit(s, v, r);
                    }
                }
            }
        }
    }

    /// Shortest nonzero lattice vector, i.e. the distance from an atom to its own nearest image.
    pub fn shortest_self_image(&self) -> Option<([i32; 3], f64)> {
        if !self.is_periodic() {
            return None;
        }
        let bound = (0..3)
            .filter(|&k| self.pbc[k])
            .map(|k| norm(self.cell[k]))
            .fold(f64::INFINITY, f64::min);
        let n = self.extents(bound);
        let mut best: Option<([i32; 3], f64)> = None;
        for a in -n[0]..=n[0] {
            for b in -n[1]..=n[1] {
                for c in -n[2]..=n[2] {
                    let s = [a, b, c];
                    if s == [0, 0, 0] || !is_canonical_shift(s) {
                        continue;
                    }
                    let r = norm(image_vector([0.0; 3], &self.cell, s));
                    if best.is_none_or(|(_, d)| r < d) {
                        best = Some((s, r));
                    }
                }
            }
        }
        best
    }
}

/// True for the representative of each `±s` pair (first nonzero component positive).
pub fn is_canonical_shift(s: [i32; 3]) -> bool {
    s.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

/// Distance between atoms `i` and `j` under the minimum-image convention.
pub fn min_image_distance(frame: &Frame, i: usize, j: usize) -> Result<f64> {
    let n = frame.len();
    if i >= n || j >= n {
        return Err(Error::invalid(format!(
            "atom index out of range ({i}, {j}) for {n} atoms"
        )));
    }
    let geom = CellGeometry::new(frame)?;
    Ok(geom.min_image(sub(frame.positions[j], frame.positions[i])).1)
}

/// Covalent radii and the screening coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiiTable {
    radius_by_element: HashMap<String, f64>,
    pub coeff: f64,
}

const CORDERO_RADII: &str = include_str!("../data/covalent_radii.txt");

impl RadiiTable {
    /// Parses `Symbol radius` lines; `#` starts a comment.
    pub fn parse(text: &str, coeff: f64) -> Result<Self> {
        let mut radius_by_element = HashMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(sym), Some(r), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::invalid(format!(
                    "radii table line {}: expected `Symbol radius`",
                    ln + 1
                )));
            };
            let r: f64 = r
                .parse()
                .ok()
                .filter(|r: &f64| *r > 0.0 && r.is_finite())
                .ok_or_else(|| Error::invalid(format!("radii table line {}: invalid radius `{r}`", ln + 1)))?;
            radius_by_element.insert(sym.to_string(), r);
        }
        let table = RadiiTable {
            radius_by_element,
            coeff,
        };
        table.check_coeff()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>, coeff: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, coeff).map_err(|e| e.in_file(path))
    }

    /// Single-bond covalent radii of Cordero et al. (2008).
    pub fn cordero() -> Self {
        Self::parse(CORDERO_RADII, DEFAULT_COEFF).expect("embedded radii table is valid")
    }

    pub fn with_coeff(mut self, coeff: f64) -> Result<Self> {
        self.coeff = coeff;
        self.check_coeff()?;
        Ok(self)
    }

    fn check_coeff(&self) -> Result<()> {
        if self.coeff > 0.0 && self.coeff < 1.5 {
            Ok(())
        } else {
            Err(Error::invalid(format!("coefficient {} outside (0, 1.5)", self.coeff)))
        }
    }

    pub fn set_radius(&mut self, element: impl Into<String>, radius: f64) {
        self.radius_by_element.insert(element.into(), radius);
    }

    pub fn radius(&self, element: &str) -> Result<f64> {
        self.radius_by_element
            .get(element)
            .copied()
            .ok_or_else(|| Error::UnknownElement(element.to_string()))
    }

    /// `(R₁ + R₂) · coeff`: pairs closer than this are non-physical.
    pub fn threshold(&self, a: &str, b: &str) -> Result<f64> {
        Ok((self.radius(a)? + self.radius(b)?) * self.coeff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedPair {
    pub i: usize,
    pub j: usize,
    pub shift: [i32; 3],
    pub distance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondReport {
    /// `None` when the frame has no pair at all (a single atom without periodicity).
    pub min_distance: Option<f64>,
    pub min_pair: Option<(usize, usize, [i32; 3])>,
    pub flagged_pairs: Vec<FlaggedPair>,
}

/// Per-atom radii lookups, failing on the first unknown symbol.
fn radii_of(frame: &Frame, radii: &RadiiTable) -> Result<Vec<f64>> {
    frame.species.iter().map(|s| radii.radius(s)).collect()
}

/// Scans every pair and every self-image for bonds shorter than the covalent threshold.
pub fn bond_report(frame: &Frame, radii: &RadiiTable) -> Result<BondReport> {
    let r = radii_of(frame, radii)?;
    let geom = CellGeometry::new(frame)?;
    let n = frame.len();
    let max_r = r.iter().copied().fold(0.0, f64::max);
    let search = 2.0 * max_r * radii.coeff;

    let mut report = BondReport {
        min_distance: None,
        min_pair: None,
        flagged_pairs: Vec::new(),
    };
    let consider_min = |report: &mut BondReport, i: usize, j: usize, s: [i32; 3], d: f64| {
        if report.min_distance.is_none_or(|m| d < m) {
            report.min_distance = Some(d);
            report.min_pair = Some((i, j, s));
        }
    };

    for i in 0..n {
        for j in i + 1..n {
            let d = sub(frame.positions[j], frame.positions[i]);
            let (s, dist) = geom.min_image(d);
            consider_min(&mut report, i, j, s, dist);
            let threshold = (r[i] + r[j]) * radii.coeff;
            if dist >= threshold {
                continue;
            }
            geom.for_each_image_within(d, search, |s, _, dist| {
                if threshold > dist {
                    report.flagged_pairs.push(FlaggedPair {
                        i,
                        j,
                        shift: s,
                        distance: dist,
                        threshold,
                    });
                }
            });
        }
    }

    if let Some((s, dist)) = geom.shortest_self_image() {
        if n > 0 {
            consider_min(&mut report, 0, 0, s, dist);
        }
        for i in 0..n {
            let threshold = 2.0 * r[i] * radii.coeff;
            if dist >= threshold {
                continue;
            }
            geom.for_each_image_within([0.0; 3], search, |s, _, dist| {
                if is_canonical_shift(s) && threshold > dist {
                    report.flagged_pairs.push(FlaggedPair {
                        i,
                        j: i,
                        shift: s,
                        distance: dist,
                        threshold,
                    });
                }
            });
        }
    }
    Ok(report)
}

/// A frame is physical when no pair falls below its covalent threshold.
pub fn is_physical(frame: &Frame, radii: &RadiiTable) -> Result<bool> {
    Ok(bond_report(frame, radii)?.flagged_pairs.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub j: usize,
    pub shift: [i32; 3],
    /// `r_j + s·H − r_i`.
    pub vector: Vec3,
    pub distance: f64,
}

/// All neighbors within `r_cut` of every atom, periodic images included.
/// An atom is never its own neighbor at zero shift.
pub fn neighbor_list(frame: &Frame, r_cut: f64) -> Result<Vec<Vec<Neighbor>>> {
    if !(r_cut > 0.0) {
        return Err(Error::invalid(format!("cutoff must be positive, got {r_cut}")));
    }
    let geom = CellGeometry::new(frame)?;
    let n = frame.len();
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let d = sub(frame.positions[j], frame.positions[i]);
            geom.for_each_image_within(d, r_cut, |shift, vector, distance| {
                if i == j && shift == [0, 0, 0] {
                    return;
                }
                out[i].push(Neighbor {
                    j,
                    shift,
                    vector,
                    distance,
                });
            });
        }
    }
    Ok(out)
}
