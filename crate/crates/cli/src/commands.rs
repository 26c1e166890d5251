//! Verb implementations. Each returns a short report for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nepcurate::exyzio::{read_dataset, write_dataset, write_parity};
use nepcurate::geometry::is_physical;
use nepcurate::perturb::{generate_set, Base, PerturbSpec};
use nepcurate::sampling::{farthest_point_sample, pca_project};
use nepcurate::surrogate::{
    self, predict, structure_descriptors, DescriptorSpec, HyperParameters, Potential, TrainOptions,
};
use nepcurate::workflow::{
    init_workspace, label, run_loop, run_md, CalculatorConfig, ExternalCommand, JobConfig, LennardJones, LoopOptions,
    MdParams,
};
use nepcurate::{Error, Frame, ParityKind, RadiiTable, Result, SurrogateModel};

use crate::args::{
    DescriptorArgs, InitArgs, LabelArgs, MdArgs, NepArgs, PerturbArgs, RadiiArgs, SelectArgs, TrainArgs,
};

pub fn radii_table(args: &RadiiArgs) -> Result<RadiiTable> {
    match &args.radii {
        Some(p) => RadiiTable::load(p, args.coeff),
        None => RadiiTable::cordero().with_coeff(args.coeff),
    }
}

/// Writes `frames` and reads them back, failing unless the file reproduces them.
fn write_checked(frames: &[Frame], path: &Path) -> Result<()> {
    write_dataset(frames, path)?;
    let back = read_dataset(path)?;
    if back != frames {
        return Err(Error::invalid(format!(
            "{} does not re-parse to what was written",
            path.display()
        )));
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

pub fn perturb(args: &PerturbArgs, seed: u64) -> Result<String> {
    let mut bases = Vec::new();
    for path in &args.structures {
        let frames = read_dataset(path)?;
        if frames.is_empty() {
            return Err(Error::invalid(format!("{} holds no frames", path.display())));
        }
        let name = stem(path);
        let single = frames.len() == 1;
        for (k, frame) in frames.into_iter().enumerate() {
            let name = if single { name.clone() } else { format!("{name}_{k}") };
            bases.push(Base { name, frame });
        }
    }
    let spec = PerturbSpec {
        n: args.count,
        cell_amplitude: args.cell,
        disp_amplitude: args.disp,
        filter: args.filter,
        seed,
    };
    let out = generate_set(&bases, &spec, &radii_table(&args.radii)?)?;
    write_checked(&out, &args.out)?;
    Ok(format!(
        "wrote {} frames from {} bases to {}",
        out.len(),
        bases.len(),
        args.out.display()
    ))
}

fn descriptor_spec(args: &DescriptorArgs, frames: &[&Frame]) -> Result<DescriptorSpec> {
    match &args.model {
        Some(p) => Ok(SurrogateModel::load(p)?.spec),
        None => DescriptorSpec::new(
            args.r_cut,
            args.n_rad,
            DescriptorSpec::elements_of(frames.iter().copied()),
        ),
    }
}

pub fn select(args: &SelectArgs) -> Result<String> {
    let all = read_dataset(&args.dataset)?;
    let base = match &args.base {
        Some(p) => read_dataset(p)?,
        None => Vec::new(),
    };
    let radii = radii_table(&args.radii)?;
    let mut keep = Vec::new();
    for (k, f) in all.iter().enumerate() {
        if !args.filter || is_physical(f, &radii)? {
            keep.push(k);
        }
    }
    let dropped = all.len() - keep.len();
    let candidates: Vec<&Frame> = keep.iter().map(|&k| &all[k]).collect();
    let spec = descriptor_spec(
        &args.descriptor,
        &candidates.iter().copied().chain(&base).collect::<Vec<_>>(),
    )?;
    let cand_frames: Vec<Frame> = candidates.iter().map(|f| (*f).clone()).collect();
    let points = structure_descriptors(&cand_frames, &spec)?;
    let base_points = structure_descriptors(&base, &spec)?;

    let (chosen, min_dist) = if points.is_empty() || args.max_count == 0 {
        (Vec::new(), None)
    } else {
        let r = farthest_point_sample(&points, args.max_count, args.min_distance, None, Some(&base_points))?;
        let d = r.min_achieved_distance();
        (r.selected, d)
    };
    let selected: Vec<Frame> = chosen.iter().map(|&k| cand_frames[k].clone()).collect();
    write_checked(&selected, &args.out)?;

    let mut rows: Vec<Vec<f64>> = points.clone();
    rows.extend(base_points.iter().cloned());
    let coords = if rows.len() >= 2 && spec.dim() >= 2 {
        pca_project(&rows)?.coords
    } else {
        vec![[0.0, 0.0]; rows.len()]
    };
    let mut csv = String::from("frame,set,pc1,pc2,selected\n");
    for (r, c) in coords.iter().enumerate() {
        let (frame, set, sel) = if r < points.len() {
            (keep[r], "candidate", chosen.contains(&r))
        } else {
            (r - points.len(), "base", false)
        };
        let _ = writeln!(csv, "{frame},{set},{},{},{}", c[0], c[1], u8::from(sel));
    }
    std::fs::write(&args.csv, csv).map_err(|e| Error::io(&args.csv, e))?;

    let mut msg = format!(
        "selected {} of {} frames into {}; projection in {}",
        selected.len(),
        all.len(),
        args.out.display(),
        args.csv.display()
    );
    if args.filter {
        let _ = write!(msg, "; {dropped} failed the bond screen");
    }
    if let Some(d) = min_dist.filter(|d| d.is_finite()) {
        let _ = write!(msg, "; smallest accepted distance {d:.6}");
    }
    Ok(msg)
}

/// Writes the parity files of every labeled kind and reports their RMSEs.
fn parity_files(frames: &[Frame], model: &SurrogateModel, name: &str, dir: &Path) -> Result<String> {
    let preds = frames.iter().map(|f| predict(f, model)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut msg = String::new();
    for (kind, unit) in [
        (ParityKind::Energy, "meV/atom"),
        (ParityKind::Force, "meV/Å"),
        (ParityKind::Virial, "meV/atom"),
    ] {
        let series = surrogate::parity(frames, &preds, kind);
        if series.is_empty() {
            continue;
        }
        let path = dir.join(kind.file_name(name));
        write_parity(&series, &path)?;
        let r = surrogate::rmse(&series)?;
        let _ = writeln!(
            msg,
            "{name} {} RMSE {:.4} {unit} ({})",
            kind.name(),
            r * 1e3,
            path.display()
        );
    }
    if msg.is_empty() {
        let _ = writeln!(msg, "{name}: no reference labels, no parity files written");
    }
    Ok(msg)
}

pub fn nep(args: &NepArgs, seed: u64) -> Result<String> {
    if let Some(data) = &args.pred {
        let model = SurrogateModel::load(&args.model)?;
        let frames = read_dataset(data)?;
        return parity_files(&frames, &model, &stem(data), &args.out_dir);
    }
    let hp = match &args.input {
        Some(p) => HyperParameters::load(p)?,
        None => HyperParameters::default(),
    };
    let train = read_dataset(&args.train)?;
    let test = match &args.test {
        Some(p) => read_dataset(p)?,
        None => Vec::new(),
    };
    let elements = match &hp.elements {
        Some(e) => e.clone(),
        None => DescriptorSpec::elements_of(train.iter().chain(&test)),
    };
    let spec = DescriptorSpec::new(hp.r_cut, hp.n_rad, elements)?;
    let opts = TrainOptions {
        generations: args.generations.unwrap_or(hp.generations),
        seed: hp.seed.unwrap_or(seed),
        ..TrainOptions::default()
    };
    let report = surrogate::train(&train, &spec, hp.n_neu, hp.weights, &opts)?;
    report.model.save(&args.model)?;
    if SurrogateModel::load(&args.model)? != report.model {
        return Err(Error::invalid(format!(
            "{} does not re-read to the trained model",
            args.model.display()
        )));
    }
    let mut msg = format!(
        "trained on {} frames ({} elements: {}), loss {:.6e}; model in {}\n",
        train.len(),
        spec.elements.len(),
        spec.elements.join(" "),
        report.best_loss,
        args.model.display()
    );
    msg.push_str(&parity_files(&train, &report.model, "train", &args.out_dir)?);
    if !test.is_empty() {
        msg.push_str(&parity_files(&test, &report.model, "test", &args.out_dir)?);
    }
    Ok(msg.trim_end().to_string())
}

pub fn md(args: &MdArgs, seed: u64) -> Result<String> {
    let frames = read_dataset(&args.structure)?;
    let [start] = frames.as_slice() else {
        return Err(Error::invalid(format!(
            "{} holds {} frames; md needs exactly one",
            args.structure.display(),
            frames.len()
        )));
    };
    let potential: Box<dyn Potential> = match &args.model {
        Some(p) => Box::new(SurrogateModel::load(p)?),
        None => Box::new(LennardJones::default()),
    };
    let params = MdParams {
        timestep: args.timestep,
        friction: args.friction,
        thermostat: !args.nve,
        stride: args.stride,
        ..MdParams::default()
    };
    let mut out = Vec::new();
    for (k, &t) in args.temperature.iter().enumerate() {
        let mut traj = run_md(
            start,
            potential.as_ref(),
            args.time,
            t,
            &params,
            seed.wrapping_add(k as u64),
        )?;
        for f in &mut traj {
            f.set_config_type(format!("md_{t}K"));
        }
        out.extend(traj);
    }
    write_checked(&out, &args.out)?;
    Ok(format!("wrote {} snapshots to {}", out.len(), args.out.display()))
}

pub fn calculator(args: &LabelArgs) -> Result<CalculatorConfig> {
    let calc = match &args.command {
        None => CalculatorConfig::Lj(LennardJones::default()),
        Some(cmd) => {
            let mut ext = ExternalCommand::new(cmd.clone());
            ext.workers = args.workers;
            ext.timeout = args.timeout;
            ext.kspacing = args.kspacing;
            ext.ka = match args.ka.as_deref() {
                None => None,
                Some(&[a, b, c]) => Some([a, b, c]),
                Some(_) => return Err(Error::Config("--ka takes three integers".into())),
            };
            CalculatorConfig::External(ext)
        }
    };
    calc.validate()?;
    Ok(calc)
}

pub fn label_cmd(args: &LabelArgs) -> Result<String> {
    let calc = calculator(args)?;
    let frames = read_dataset(&args.dataset)?;
    let report = label(&frames, &calc, &args.workdir)?;
    write_checked(&report.frames, &args.out)?;
    if report.failures.is_empty() {
        return Ok(format!(
            "labeled {} frames into {}",
            report.frames.len(),
            args.out.display()
        ));
    }
    let path: PathBuf = args.out.with_file_name("label_report.txt");
    std::fs::write(&path, report.summary()).map_err(|e| Error::io(&path, e))?;
    Err(Error::Calculator(format!(
        "{} of {} frames failed; the rest are in {}, details in {}",
        report.failures.len(),
        frames.len(),
        args.out.display(),
        path.display()
    )))
}

pub fn init(args: &InitArgs) -> Result<String> {
    let made = init_workspace(&args.dir)?;
    Ok(made
        .iter()
        .map(|p| format!("created {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn train(args: &TrainArgs) -> Result<String> {
    let cfg = JobConfig::load(&args.job)?;
    let states = run_loop(&cfg, &LoopOptions::default())?;
    let mut msg = String::from("generation  train  selected  labeled  energy_rmse(meV/atom)  force_rmse(meV/Å)\n");
    let ms = |x: Option<f64>| x.map(|v| format!("{:.4}", v * 1e3)).unwrap_or_else(|| "-".into());
    for s in &states {
        let m = &s.metrics;
        let _ = writeln!(
            msg,
            "{:>10}  {:>5}  {:>8}  {:>7}  {:>21}  {:>17}",
            m.generation,
            m.train_size,
            m.selected,
            m.labeled,
            ms(m.energy_rmse),
            ms(m.force_rmse)
        );
    }
    let _ = write!(
        msg,
        "final training set: {}",
        cfg.work_path.join("final_train.xyz").display()
    );
    Ok(msg)
}
