mod common;

use std::fs;

use nepcurate::exyzio::{read_parity, write_dataset};
use nepcurate::service::{open_session, ExportRequest, ParitySource, PlotKind, SessionOptions, Tool, UNDO_DEPTH};
use nepcurate::surrogate::{DescriptorSpec, SurrogateModel};
use nepcurate::{Frame, ParityKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model(elements: &[&str]) -> SurrogateModel {
    let spec = DescriptorSpec::new(5.0, 3, elements.iter().map(|s| s.to_string()).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 4 * (spec.dim() + 2) + 1;
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    SurrogateModel::from_params(spec, 4, &p).unwrap()
}

#[test]
fn scripted_session_replays_to_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    common::replay::replay(dir.path(), 200, 300, 7).unwrap();
}

#[test]
fn computed_parity_is_cached_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&common::argon_set(5, 3, true), dir.path().join("train.xyz")).unwrap();
    let opts = SessionOptions {
        model: Some(tiny_model(&["Ar"])),
        ..Default::default()
    };
    let (_, first) = open_session(dir.path(), opts.clone()).unwrap();
    assert!(!first.cache_hit);
    assert_eq!(first.parity.get(&ParityKind::Force), Some(&ParitySource::Computed));
    assert_eq!(first.parity.len(), 3);
    let forces = read_parity(dir.path().join("force_train.out"), ParityKind::Force, None).unwrap();
    assert_eq!(forces.len(), 5 * 16);
    let (_, second) = open_session(dir.path(), opts).unwrap();
    assert!(second.cache_hit);
    assert!(second.parity.values().all(|s| *s == ParitySource::File));
    // Without a model, the files are still read.
    let (s, third) = open_session(dir.path(), SessionOptions::default()).unwrap();
    assert!(third.cache_hit);
    assert_eq!(
        s.kinds(),
        vec![
            PlotKind::Descriptor,
            PlotKind::Energy,
            PlotKind::Force,
            PlotKind::Virial
        ]
    );
}

#[test]
fn model_missing_an_element_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&common::argon_set(2, 3, true), dir.path().join("train.xyz")).unwrap();
    let opts = SessionOptions {
        model: Some(tiny_model(&["Cs"])),
        ..Default::default()
    };
    let err = open_session(dir.path(), opts).err().unwrap().to_string();
    assert!(err.contains("frame 0") && err.contains("`Ar`"), "{err}");
}

#[test]
fn parity_file_with_wrong_row_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&common::argon_set(3, 3, true), dir.path().join("train.xyz")).unwrap();
    fs::write(dir.path().join("energy_train.out"), "1 1\n2 2\n").unwrap();
    let err = open_session(dir.path(), SessionOptions::default())
        .err()
        .unwrap()
        .to_string();
    assert!(err.contains("2 rows"), "{err}");
}

#[test]
fn plots_carry_one_point_per_component_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let errors = common::replay::write_fixture(dir.path(), 30, 4);
    let (mut s, _) = open_session(dir.path(), SessionOptions::default()).unwrap();
    let atoms: usize = s.frames().iter().map(Frame::len).sum();
    s.apply_tool(&Tool::SelectIds { ids: vec![2, 7] }).unwrap();
    s.apply_tool(&Tool::SearchConfigType {
        pattern: "bulk".into(),
        mode: Default::default(),
    })
    .unwrap();
    let force = s.get_plot(PlotKind::Force).unwrap();
    assert_eq!(force.x.len(), 3 * atoms);
    assert!(force.frame.windows(2).all(|w| w[0] <= w[1]));
    for (k, &f) in force.frame.iter().enumerate() {
        assert_eq!(force.selected[k], f == 2 || f == 7);
        assert_eq!(
            force.matched[k],
            s.frames()[f].config_type().unwrap().starts_with("bulk")
        );
    }
    let energy = s.get_plot(PlotKind::Energy).unwrap();
    assert_eq!(energy.x.len(), 30);
    for f in 0..30 {
        assert!(((energy.y[f] - energy.x[f]).abs() - errors.0[f]).abs() < 1e-12);
        assert_eq!(s.frames()[f].energy, Some(energy.x[f]));
    }
    let desc = s.get_plot(PlotKind::Descriptor).unwrap();
    assert_eq!(desc.frame, (0..30).collect::<Vec<_>>());
    assert!(s.get_plot(PlotKind::Virial).is_err());
}

#[test]
fn max_error_selects_worst_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (e, _) = common::replay::write_fixture(dir.path(), 40, 5);
    let (mut s, _) = open_session(dir.path(), SessionOptions::default()).unwrap();
    let r = s
        .apply_tool(&Tool::MaxError {
            n: 3,
            kind: ParityKind::Energy,
        })
        .unwrap();
    let mut order: Vec<usize> = (0..40).collect();
    order.sort_by(|&a, &b| e[b].partial_cmp(&e[a]).unwrap());
    let mut want = order[..3].to_vec();
    want.sort();
    assert_eq!(r.newly_selected, want);
    assert!(s
        .apply_tool(&Tool::MaxError {
            n: -1,
            kind: ParityKind::Energy
        })
        .is_err());
    assert!(s
        .apply_tool(&Tool::MaxError {
            n: 1,
            kind: ParityKind::Stress
        })
        .is_err());
}

#[test]
fn undo_history_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    common::replay::write_fixture(dir.path(), UNDO_DEPTH + 10, 6);
    let (mut s, _) = open_session(dir.path(), SessionOptions::default()).unwrap();
    for _ in 0..UNDO_DEPTH + 5 {
        s.apply_tool(&Tool::SelectIds { ids: vec![0] }).unwrap();
        s.delete_selected();
    }
    assert_eq!(s.summary().undo_depth, UNDO_DEPTH);
    for _ in 0..UNDO_DEPTH + 5 {
        s.undo();
    }
    assert_eq!(s.frames().len(), UNDO_DEPTH + 10 - 5);
    assert_eq!(common::replay::uid(&s.frames()[0]), 5);
}

#[test]
fn relative_export_paths_land_in_the_session_dir() {
    let dir = tempfile::tempdir().unwrap();
    common::replay::write_fixture(dir.path(), 5, 8);
    let (mut s, _) = open_session(dir.path(), SessionOptions::default()).unwrap();
    let r = s
        .export(&ExportRequest::Dataset {
            path: "curated.xyz".into(),
        })
        .unwrap();
    assert_eq!(r.path, dir.path().join("curated.xyz"));
    assert!(s
        .export(&ExportRequest::FrameXyz {
            index: 9,
            path: "x.xyz".into()
        })
        .is_err());
}

#[test]
fn structure_view_lists_periodic_bonds() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = common::argon_cell();
    f.positions[1] = [0.5, 0.2, 0.0];
    let a = 2.6;
    let sc = Frame::periodic(
        [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]],
        vec!["I".into()],
        vec![[0.0; 3]],
    );
    write_dataset(&[f, common::argon_cell(), sc], dir.path().join("train.xyz")).unwrap();
    let (s, _) = open_session(dir.path(), SessionOptions::default()).unwrap();
    let bad = s.get_structure_view(0).unwrap();
    assert_eq!(bad.atoms.len(), 16);
    assert!(bad.bonds.iter().any(|b| b.flagged && b.i == 0 && b.j == 1));
    assert!(bad.min_distance.unwrap() < 0.6);
    // Argon neighbors sit well beyond the display bond length.
    let good = s.get_structure_view(1).unwrap();
    assert!(good.bonds.is_empty());
    assert!(good
        .atoms
        .iter()
        .all(|a| a.color.starts_with('#') && a.color.len() == 7));
    // A one-atom simple cubic cell bonds to its own images, once per direction.
    let sc = s.get_structure_view(2).unwrap();
    assert_eq!(sc.bonds.len(), 3);
    assert!(sc
        .bonds
        .iter()
        .all(|b| b.i == 0 && b.j == 0 && !b.flagged && (b.distance - a).abs() < 1e-12));
    assert!(s.get_structure_view(3).is_err());
}

#[test]
fn tools_deserialize_from_json() {
    let t: Tool = serde_json::from_str(r#"{"tool":"fps","max_count":5}"#).unwrap();
    assert_eq!(
        t,
        Tool::Fps {
            max_count: 5,
            min_distance: 0.0
        }
    );
    let t: Tool = serde_json::from_str(r#"{"tool":"max_error","n":2,"kind":"force"}"#).unwrap();
    assert_eq!(
        t,
        Tool::MaxError {
            n: 2,
            kind: ParityKind::Force
        }
    );
    assert!(serde_json::from_str::<Tool>(r#"{"tool":"fps","max_count":5,"bogus":1}"#).is_err());
    let e: ExportRequest = serde_json::from_str(r#"{"what":"frame_xyz","index":3,"path":"a.xyz"}"#).unwrap();
    assert_eq!(
        e,
        ExportRequest::FrameXyz {
            index: 3,
            path: "a.xyz".into()
        }
    );
}
