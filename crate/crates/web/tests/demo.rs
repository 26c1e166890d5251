use nepcurate::exyzio::parse_dataset;
use nepcurate::geometry::is_physical;
use nepcurate::RadiiTable;
use nepcurate_web::{cloud, dimer_view, fps_view, perturb_view};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[test]
fn fps_distances_match_a_direct_recount() {
    for seed in 0..20 {
        let v = fps_view(150, 4, 25, 0.0, seed).unwrap();
        assert_eq!(v.points.len(), 150);
        assert_eq!(v.selected.len(), 25);
        assert_eq!(v.distances[0], None);
        let mut seen = std::collections::BTreeSet::new();
        for (k, &i) in v.selected.iter().enumerate() {
            assert!(seen.insert(i));
            if k == 0 {
                continue;
            }
            let nearest = v.selected[..k]
                .iter()
                .map(|&j| dist(v.points[i], v.points[j]))
                .fold(f64::INFINITY, f64::min);
            assert!((v.distances[k].unwrap() - nearest).abs() < 1e-12);
            // no unselected point was farther at that moment
            for (p, q) in v.points.iter().enumerate() {
                if v.selected[..k].contains(&p) {
                    continue;
                }
                let d = v.selected[..k]
                    .iter()
                    .map(|&j| dist(*q, v.points[j]))
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= nearest + 1e-12);
            }
        }
    }
}

#[test]
fn fps_stops_at_min_distance() {
    let v = fps_view(200, 3, 200, 0.2, 5).unwrap();
    assert!(v.selected.len() < 200);
    assert!(v.distances.iter().skip(1).all(|d| d.unwrap() >= 0.2));
}

#[test]
fn cloud_is_deterministic_and_bounded() {
    let a = cloud(300, 5, 9);
    assert_eq!(a, cloud(300, 5, 9));
    assert_ne!(a, cloud(300, 5, 10));
    assert!(a.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
}

const CSI: &str =
    "2\nLattice=\"4.5 0 0 0 4.5 0 0 0 4.5\" Properties=species:S:1:pos:R:3 pbc=\"T T T\"\nCs 0 0 0\nI 2.25 2.25 2.25\n";

#[test]
fn perturb_counts_agree_with_the_screen() {
    let v = perturb_view(CSI, 40, 0.05, 1.5, 0.65, 3).unwrap();
    let frames = parse_dataset(&v.xyz).unwrap();
    assert_eq!(frames.len(), 40);
    let radii = RadiiTable::cordero();
    let physical: Vec<bool> = frames.iter().map(|f| is_physical(f, &radii).unwrap()).collect();
    assert_eq!(physical, v.frames.iter().map(|c| c.physical).collect::<Vec<_>>());
    assert_eq!(v.physical, physical.iter().filter(|p| **p).count());
    assert!(v.physical > 0 && v.physical < 40, "{} physical", v.physical);
    for c in &v.frames {
        assert_eq!(c.physical, c.flagged == 0);
    }
}

#[test]
fn unperturbed_copies_are_physical() {
    let v = perturb_view(CSI, 5, 0.0, 0.0, 0.65, 1).unwrap();
    assert_eq!(v.physical, 5);
    let d = v.frames[0].min_distance.unwrap();
    assert!((d - 4.5 * 3f64.sqrt() / 2.0).abs() < 1e-12);
}

#[test]
fn perturb_rejects_bad_input() {
    assert!(perturb_view("", 5, 0.0, 0.0, 0.65, 1).is_err());
    assert!(perturb_view("garbage", 5, 0.0, 0.0, 0.65, 1).is_err());
    assert!(perturb_view(CSI, 5, 0.0, 0.0, 2.0, 1).is_err());
}

#[test]
fn dimer_curve_threshold_and_minimum() {
    let v = dimer_view("Cs", "I", 1.0, 6.0, 501, 0.65).unwrap();
    // Cordero radii 2.44 and 1.39
    assert!((v.threshold - 0.65 * (2.44 + 1.39)).abs() < 1e-12);
    for (r, f) in v.r.iter().zip(&v.flagged) {
        assert_eq!(*f, *r < v.threshold);
    }
    let (k, e) = v
        .energy
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (k, e)| if *e < a.1 { (k, *e) } else { a });
    let r_min = 2f64.powf(1.0 / 6.0) * 3.4;
    assert!((v.r[k] - r_min).abs() <= 0.01, "minimum at {}", v.r[k]);
    assert!((e + 0.0104).abs() < 1e-5);
    assert!(dimer_view("Cs", "I", 3.0, 2.0, 10, 0.65).is_err());
    assert!(dimer_view("Cs", "Xx", 1.0, 2.0, 10, 0.65).is_err());
}
