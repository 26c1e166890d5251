#![allow(dead_code)]

pub mod replay;

use indexmap::IndexMap;
use nepcurate::exyzio::{AtomArray, ColumnData, Mat3};
use nepcurate::{Frame, InfoValue};
use rand::Rng;

pub const ELEMENTS: [&str; 3] = ["Cs", "Pb", "I"];

/// Random float spanning many magnitudes, including exact zeros and subnormal-free tiny values.
pub fn wild_f64(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..6) {
        0 => 0.0,
        1 => rng.random_range(-1.0..1.0),
        2 => rng.random_range(-1e3..1e3),
        3 => rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-30..30)),
        4 => f64::from_bits(rng.random::<u64>() >> 2) * if rng.random() { 1.0 } else { -1.0 },
        _ => rng.random_range(-20.0..20.0f64).round() / 8.0,
    }
}

/// Skewed but well-conditioned triclinic cell with lattice vectors as rows.
pub fn triclinic_cell(rng: &mut impl Rng, a: f64) -> Mat3 {
    let skew = |rng: &mut dyn rand::RngCore| rng.random_range(-0.6..0.6) * a;
    [
        [a * rng.random_range(0.8..1.3), 0.0, 0.0],
        [skew(rng), a * rng.random_range(0.8..1.3), 0.0],
        [skew(rng), skew(rng), a * rng.random_range(0.8..1.3)],
    ]
}

pub fn word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..8);
    let mut s: String = (0..n).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
    s.insert(0, '_');
    s
}

/// A frame exercising every field of the format.
pub fn random_frame(rng: &mut impl Rng) -> Frame {
    let n = rng.random_range(0..7);
    let species = (0..n).map(|_| ELEMENTS[rng.random_range(0..3)].to_string()).collect();
    let positions = (0..n).map(|_| [wild_f64(rng), wild_f64(rng), wild_f64(rng)]).collect();
    let mut f = if rng.random_bool(0.7) {
        let a = rng.random_range(2.0..12.0);
        let mut f = Frame::periodic(triclinic_cell(rng, a), species, positions);
        for k in 0..3 {
            f.pbc[k] = rng.random_bool(0.8);
        }
        if !f.is_periodic() {
            f.pbc[0] = true;
        }
        f
    } else {
        Frame::molecule(species, positions)
    };
    if rng.random() {
        f.energy = Some(wild_f64(rng));
    }
    if rng.random() {
        f.forces = Some((0..n).map(|_| [wild_f64(rng), wild_f64(rng), wild_f64(rng)]).collect());
    }
    if rng.random() {
        f.virial = Some([(); 6].map(|_| wild_f64(rng)));
    }
    let mut info = IndexMap::new();
    for _ in 0..rng.random_range(0..4) {
        let value = match rng.random_range(0..4) {
            0 => InfoValue::Number(wild_f64(rng)),
            1 => InfoValue::Vector((0..rng.random_range(2..5)).map(|_| wild_f64(rng)).collect()),
            2 => InfoValue::Text(format!("{} {}", word(rng), word(rng))),
            _ => InfoValue::Text(word(rng)),
        };
        info.insert(format!("key{}", word(rng)), value);
    }
    if rng.random() {
        info.insert("config_type".into(), InfoValue::Text(format!("perturb{}", word(rng))));
    }
    f.info = info;
    if n > 0 && rng.random() {
        f.arrays.insert(
            "charge".into(),
            AtomArray {
                width: 1,
                data: ColumnData::Real((0..n).map(|_| wild_f64(rng)).collect()),
            },
        );
        f.arrays.insert(
            "tag".into(),
            AtomArray {
                width: 2,
                data: ColumnData::Int((0..2 * n).map(|_| rng.random_range(-9..1000)).collect()),
            },
        );
        f.arrays.insert(
            "label".into(),
            AtomArray {
                width: 1,
                data: ColumnData::Text((0..n).map(|_| word(rng)).collect()),
            },
        );
        f.arrays.insert(
            "fixed".into(),
            AtomArray {
                width: 3,
                data: ColumnData::Logical((0..3 * n).map(|_| rng.random()).collect()),
            },
        );
    }
    f
}

/// Random atoms in a random triclinic cell, at least `min_sep` apart by direct distance.
pub fn random_cell_frame(rng: &mut impl Rng, n: usize, a: f64, elements: &[&str]) -> Frame {
    let cell = triclinic_cell(rng, a);
    let positions = (0..n)
        .map(|_| {
            let f = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            nepcurate::geometry::vec_mat(f, &cell)
        })
        .collect();
    let species = (0..n)
        .map(|_| elements[rng.random_range(0..elements.len())].to_string())
        .collect();
    Frame::periodic(cell, species, positions)
}

/// Exhaustive minimum over image shifts in {-n..n}³ on periodic axes.
pub fn brute_min_image(f: &Frame, i: usize, j: usize, n: i32) -> f64 {
    let d = nepcurate::geometry::sub(f.positions[j], f.positions[i]);
    let mut best = f64::INFINITY;
    let r = |k: usize| if f.pbc[k] { n } else { 0 };
    for a in -r(0)..=r(0) {
        for b in -r(1)..=r(1) {
            for c in -r(2)..=r(2) {
                let v = nepcurate::geometry::image_vector(d, &f.cell, [a, b, c]);
                best = best.min(nepcurate::geometry::norm(v));
            }
        }
    }
    best
}

/// Farthest-point sampling recomputing every distance from scratch at each step.
pub fn reference_fps(points: &[Vec<f64>], max_count: usize, min_distance: f64, seed: usize) -> (Vec<usize>, Vec<f64>) {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut chosen = vec![seed];
    let mut dists = vec![f64::INFINITY];
    while chosen.len() < max_count.min(points.len()) {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let near = chosen.iter().map(|&c| d(p, &points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| near > b) {
                best = Some((i, near));
            }
        }
        let (i, near) = best.unwrap();
        if near < min_distance {
            break;
        }
        chosen.push(i);
        dists.push(near);
    }
    (chosen, dists)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|k| a[k][k]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Sample covariance with an `m − 1` denominator.
pub fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, dim) = (points.len(), points[0].len());
    let mean: Vec<f64> = (0..dim)
        .map(|c| points.iter().map(|p| p[c]).sum::<f64>() / m as f64)
        .collect();
    (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (m as f64 - 1.0))
                .collect()
        })
        .collect()
}

/// Argon fcc conventional cell repeated 2×2×1: 16 atoms.
pub fn argon_cell() -> Frame {
    let a = 5.26;
    let basis = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    let mut positions = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for b in &basis {
                positions.push([(b[0] + i as f64) * a, (b[1] + j as f64) * a, b[2] * a]);
            }
        }
    }
    Frame::periodic(
        [[2.0 * a, 0.0, 0.0], [0.0, 2.0 * a, 0.0], [0.0, 0.0, a]],
        vec!["Ar".into(); 16],
        positions,
    )
}

/// `n` perturbed argon cells, labeled with the default Lennard-Jones potential when `labeled`.
pub fn argon_set(n: usize, seed: u64, labeled: bool) -> Vec<Frame> {
    use nepcurate::perturb::{generate_set, Base, PerturbSpec};
    let spec = PerturbSpec {
        n,
        cell_amplitude: 0.03,
        disp_amplitude: 0.15,
        filter: false,
        seed,
    };
    let base = Base {
        name: "ar".into(),
        frame: argon_cell(),
    };
    let frames = generate_set(&[base], &spec, &nepcurate::RadiiTable::cordero()).unwrap();
    if labeled {
        let lj = nepcurate::workflow::LennardJones::default();
        frames
            .iter()
            .map(|f| nepcurate::workflow::label_with(&lj, f).unwrap())
            .collect()
    } else {
        frames
    }
}

/// Every flagged (i, j, shift) by scanning shifts up to ±4 along periodic axes.
pub fn brute_flags(f: &Frame, radii: &nepcurate::RadiiTable) -> Vec<(usize, usize, [i32; 3])> {
    let n = 4;
    let mut out = Vec::new();
    for i in 0..f.len() {
        for j in i..f.len() {
            let t = radii.threshold(&f.species[i], &f.species[j]).unwrap();
            let d = nepcurate::geometry::sub(f.positions[j], f.positions[i]);
            let r = |k: usize| if f.pbc[k] { n } else { 0 };
            for a in -r(0)..=r(0) {
                for b in -r(1)..=r(1) {
                    for c in -r(2)..=r(2) {
                        let s = [a, b, c];
                        if i == j && !nepcurate::geometry::is_canonical_shift(s) {
                            continue;
                        }
                        if t > nepcurate::geometry::norm(nepcurate::geometry::image_vector(d, &f.cell, s)) {
                            out.push((i, j, s));
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Farthest-point sampling with a maintained nearest-selected distance array.
pub fn quadratic_fps(points: &[Vec<f64>], max_count: usize, seed: usize) -> (Vec<usize>, Vec<f64>) {
    let m = points.len();
    let d = |a: usize, b: usize| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut near = vec![f64::INFINITY; m];
    let mut used = vec![false; m];
    let (mut order, mut dists) = (Vec::new(), Vec::new());
    let mut next = seed;
    let mut next_d = f64::INFINITY;
    while order.len() < max_count.min(m) {
        used[next] = true;
        order.push(next);
        dists.push(next_d);
        for k in 0..m {
            near[k] = near[k].min(d(next, k));
        }
        next_d = f64::NEG_INFINITY;
        for k in 0..m {
            if !used[k] && near[k] > next_d {
                next = k;
                next_d = near[k];
            }
        }
    }
    (order, dists)
}
