//! Dataset selection: farthest-point sampling in descriptor space,
//! largest-error ranking and a two-component PCA projection.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Accepted candidate indices, in acceptance order.
    pub selected: Vec<usize>,
    /// Candidates not accepted, ascending.
    pub rejected: Vec<usize>,
    /// Distance to the selected set at acceptance time, aligned with `selected`.
    /// The seed of an unanchored run has no such distance and reports +∞.
    #[serde(skip)]
    pub acceptance_distances: Vec<f64>,
}

impl SelectionResult {
    /// Distance of the last accepted point; +∞ for a lone seed, `None` when nothing was selected.
    pub fn min_achieved_distance(&self) -> Option<f64> {
        self.acceptance_distances.last().copied()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_dims(points: &[Vec<f64>], dim: usize, what: &str) -> Result<()> {
    match points.iter().position(|p| p.len() != dim) {
        Some(k) => Err(Error::Shape(format!(
            "{what} row {k} has {} columns, expected {dim}",
            points[k].len()
        ))),
        None => Ok(()),
    }
}

/// Index of the point farthest from the candidate mean, lowest index on ties.
pub fn farthest_from_mean(points: &[Vec<f64>]) -> usize {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= points.len() as f64);
    argmax(points.iter().map(|p| euclidean(p, &mean))).unwrap_or(0)
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Greedy farthest-point sampling.
///
/// Without `base`, the run starts from `seed_index` (default: the point
/// farthest from the candidate mean). With `base`, the selected set starts as
/// the base points and only candidates can be accepted. Each step accepts the
/// candidate with the largest distance to the selected set, lowest index on
/// ties, until `max_count` candidates are accepted or that distance falls
/// below `min_distance`.
pub fn farthest_point_sample(
    points: &[Vec<f64>],
    max_count: usize,
    min_distance: f64,
    seed_index: Option<usize>,
    base: Option<&[Vec<f64>]>,
) -> Result<SelectionResult> {
    let m = points.len();
    if m == 0 {
        return Err(Error::invalid("farthest-point sampling needs at least one candidate"));
    }
    let dim = points[0].len();
    check_dims(points, dim, "candidate")?;
    if let Some(b) = base {
        check_dims(b, dim, "base")?;
    }
    if let Some(s) = seed_index {
        if s >= m {
            return Err(Error::invalid(format!(
                "seed index {s} out of range for {m} candidates"
            )));
        }
    }

    let mut dist = vec![f64::INFINITY; m];
    let mut taken = vec![false; m];
    let mut selected = Vec::new();
    let mut acceptance = Vec::new();

    let absorb = |dist: &mut Vec<f64>, anchor: &[f64]| {
        let d = crate::par::map_range(m, |i| euclidean(&points[i], anchor));
        for (cur, new) in dist.iter_mut().zip(d) {
            if new < *cur {
                *cur = new;
            }
        }
    };

    match base {
        Some(b) if !b.is_empty() => {
            for anchor in b {
                absorb(&mut dist, anchor);
            }
        }
        _ => {
            if max_count > 0 {
                let seed = seed_index.unwrap_or_else(|| farthest_from_mean(points));
                taken[seed] = true;
                selected.push(seed);
                acceptance.push(f64::INFINITY);
                absorb(&mut dist, &points[seed]);
            }
        }
    }

    while selected.len() < max_count {
        let next = argmax((0..m).map(|i| if taken[i] { f64::NEG_INFINITY } else { dist[i] }));
        let Some(k) = next.filter(|&k| !taken[k]) else {
            break;
        };
        if dist[k] < min_distance {
            break;
        }
        taken[k] = true;
        selected.push(k);
        acceptance.push(dist[k]);
        absorb(&mut dist, &points[k]);
    }

    let rejected = (0..m).filter(|&i| !taken[i]).collect();
    Ok(SelectionResult {
        selected,
        rejected,
        acceptance_distances: acceptance,
    })
}

/// Indices of the `n` rows with the largest summed absolute error, largest first, lowest index on ties.
pub fn max_error_select<P: AsRef<[f64]>, R: AsRef<[f64]>>(pred: &[P], reference: &[R], n: usize) -> Result<Vec<usize>> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} predicted rows but {} reference rows",
            pred.len(),
            reference.len()
        )));
    }
    let mut errors = Vec::with_capacity(pred.len());
    for (k, (p, r)) in pred.iter().zip(reference).enumerate() {
        let (p, r) = (p.as_ref(), r.as_ref());
        if p.len() != r.len() {
            return Err(Error::Shape(format!(
                "row {k}: {} predicted vs {} reference components",
                p.len(),
                r.len()
            )));
        }
        errors.push(p.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>());
    }
    Ok(top_n(&errors, n))
}

/// Indices of the `n` largest values, descending, ties by lowest index.
pub fn top_n(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection2D {
    /// One `[pc1, pc2]` pair per input row.
    pub coords: Vec<[f64; 2]>,
    pub explained_variance: [f64; 2],
    pub component_axes: [Vec<f64>; 2],
}

/// Projects mean-centered rows onto the two leading eigenvectors of the sample covariance.
/// Each axis is signed so its largest-magnitude coefficient is positive.
pub fn pca_project(points: &[Vec<f64>]) -> Result<Projection2D> {
    let m = points.len();
    if m < 2 {
        return Err(Error::invalid("PCA needs at least two points"));
    }
    let dim = points[0].len();
    check_dims(points, dim, "PCA input")?;
    if dim < 2 {
        return Err(Error::invalid("PCA needs at least two dimensions"));
    }
    let mut mean = vec![0.0; dim];
    for p in points {
        for (a, x) in mean.iter_mut().zip(p) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    let centered = DMatrix::from_fn(m, dim, |r, c| points[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (m as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let pivot = argmax(v.iter().map(|x| x.abs())).unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let axes = [axis(0), axis(1)];
    let coords = (0..m)
        .map(|r| {
            let row = centered.row(r);
            let dotp = |a: &[f64]| row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [dotp(&axes[0]), dotp(&axes[1])]
        })
        .collect();
    Ok(Projection2D {
        coords,
        explained_variance: [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)],
        component_axes: axes,
    })
}

/// `frame,pc1,pc2` CSV; `frames` maps rows to frame indices.
pub fn projection_csv(projection: &Projection2D, frames: &[usize]) -> String {
    let mut s = String::from("frame,pc1,pc2\n");
    for (c, f) in projection.coords.iter().zip(frames) {
        let _ = writeln!(
            s,
            "{},{},{}",
            f,
            crate::exyzio::fmt_f64(c[0]),
            crate::exyzio::fmt_f64(c[1])
        );
    }
    s
}

/// One index per line.
pub fn write_index_list(indices: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let text: String = indices.iter().map(|i| format!("{i}\n")).collect();
    crate::exyzio::write_atomic(path.as_ref(), text.as_bytes())
}
