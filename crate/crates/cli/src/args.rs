use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Single-dash long options accepted for compatibility with the classic tool.
const LEGACY_FLAGS: &[&str] = &["-max", "-base", "-train", "-test", "-in", "-pred", "-np"];

/// Rewrites `-max` style options to `--max`, leaving everything after `--` alone.
pub fn normalize_argv<I, T>(argv: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut out = Vec::new();
    let mut passthrough = false;
    for a in argv {
        let a: OsString = a.into();
        if passthrough {
            out.push(a);
            continue;
        }
        if a == "--" {
            passthrough = true;
            out.push(a);
            continue;
        }
        let rewritten = a.to_str().and_then(|s| {
            let (flag, value) = match s.split_once('=') {
                Some((f, v)) => (f, Some(v)),
                None => (s, None),
            };
            LEGACY_FLAGS.contains(&flag).then(|| match value {
                Some(v) => format!("-{flag}={v}"),
                None => format!("-{flag}"),
            })
        });
        out.push(rewritten.map(OsString::from).unwrap_or(a));
    }
    out
}

#[derive(Debug, Parser)]
#[command(
    name = "nepcurate",
    version,
    about = "Dataset curation and active learning for machine-learned potentials"
)]
pub struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate randomly strained and rattled copies of structures.
    Perturb(PerturbArgs),
    /// Pick a diverse subset of a dataset by farthest-point sampling.
    Select(SelectArgs),
    /// Train a surrogate model, or predict with one (-pred).
    Nep(NepArgs),
    /// Run molecular dynamics with a trained model or the built-in Lennard-Jones potential.
    #[command(alias = "gpumd")]
    Md(MdArgs),
    /// Attach reference energies, forces and virials.
    #[command(alias = "vasp")]
    Label(LabelArgs),
    /// Write a job.yaml and run.in template.
    Init(InitArgs),
    /// Run the active-learning loop of a job file.
    Train(TrainArgs),
    /// Serve the curation API for a dataset directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RadiiArgs {
    /// Radii table (element and radius per line) replacing the built-in one.
    #[arg(long, env = "NEPCURATE_RADII")]
    pub radii: Option<PathBuf>,
    /// Bond-screen coefficient.
    #[arg(long, default_value_t = 0.65)]
    pub coeff: f64,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Structure files; every frame becomes a base.
    #[arg(required = true)]
    pub structures: Vec<PathBuf>,
    /// Number of perturbed frames.
    #[arg(short = 'n', default_value_t = 100)]
    pub count: usize,
    /// Bound on each cell strain component.
    #[arg(short = 'c', default_value_t = 0.04)]
    pub cell: f64,
    /// Bound on atomic displacements in Å.
    #[arg(short = 'd', default_value_t = 0.3)]
    pub disp: f64,
    /// Keep only frames passing the bond screen.
    #[arg(short = 'f')]
    pub filter: bool,
    #[command(flatten)]
    pub radii: RadiiArgs,
    #[arg(long, short = 'o', default_value = "perturb.xyz")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DescriptorArgs {
    /// Model whose descriptor settings are used.
    #[arg(long, env = "NEPCURATE_MODEL")]
    pub model: Option<PathBuf>,
    /// Descriptor cutoff in Å when no model is given.
    #[arg(long, default_value_t = 5.0)]
    pub r_cut: f64,
    /// Radial functions per element when no model is given.
    #[arg(long, default_value_t = 4)]
    pub n_rad: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    pub dataset: PathBuf,
    /// Largest number of frames to select.
    #[arg(long = "max", default_value_t = 20)]
    pub max_count: usize,
    /// Stop when the farthest candidate is closer than this in descriptor space.
    #[arg(short = 'd', default_value_t = 0.0)]
    pub min_distance: f64,
    /// Frames already in the training set.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Drop candidates failing the bond screen first.
    #[arg(short = 'f')]
    pub filter: bool,
    #[command(flatten)]
    pub descriptor: DescriptorArgs,
    #[command(flatten)]
    pub radii: RadiiArgs,
    #[arg(long, short = 'o', default_value = "selected.xyz")]
    pub out: PathBuf,
    /// PCA projection of candidates and base with selection flags.
    #[arg(long, default_value = "selected.csv")]
    pub csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct NepArgs {
    /// Training set.
    #[arg(long, default_value = "train.xyz")]
    pub train: PathBuf,
    /// Held-out set scored after training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Hyperparameter file in the native trainer's key/value format.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Predict this dataset with --model instead of training.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Model file written by training, read by -pred.
    #[arg(long, env = "NEPCURATE_MODEL", default_value = "model.txt")]
    pub model: PathBuf,
    /// Override the number of evolution-strategy generations.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Directory for the parity files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MdArgs {
    pub structure: PathBuf,
    /// Trained model; without it the built-in Lennard-Jones potential is used.
    #[arg(long, env = "NEPCURATE_MODEL")]
    pub model: Option<PathBuf>,
    /// Duration in ps.
    #[arg(long, default_value_t = 10.0)]
    pub time: f64,
    /// Temperatures in K; one run per value.
    #[arg(long, num_args = 1.., default_values_t = [300.0])]
    pub temperature: Vec<f64>,
    /// Time step in fs.
    #[arg(long, default_value_t = 1.0)]
    pub timestep: f64,
    /// Steps between snapshots.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Langevin friction in 1/fs.
    #[arg(long, default_value_t = 0.01)]
    pub friction: f64,
    /// Integrate at constant energy.
    #[arg(long)]
    pub nve: bool,
    #[arg(long, short = 'o', default_value = "trajectory.xyz")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    pub dataset: PathBuf,
    /// Command run per frame, with {in.xyz} and {out.xyz} placeholders. Without it the built-in Lennard-Jones potential labels.
    #[arg(long)]
    pub command: Option<String>,
    /// k-point spacing passed to the command as {kspacing}.
    #[arg(long, conflicts_with = "ka", requires = "command")]
    pub kspacing: Option<f64>,
    /// k-point mesh passed to the command as {ka}.
    #[arg(long, num_args = 3, requires = "command")]
    pub ka: Option<Vec<u32>>,
    /// Concurrent command runs.
    #[arg(long = "np", default_value_t = 1)]
    pub workers: usize,
    /// Seconds before a run is killed.
    #[arg(long, default_value_t = 3600.0)]
    pub timeout: f64,
    /// Scratch directory of the command runs.
    #[arg(long, default_value = "labeling")]
    pub workdir: PathBuf,
    #[arg(long, short = 'o', default_value = "labeled.xyz")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(default_value = ".")]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(default_value = "job.yaml")]
    pub job: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(default_value = ".")]
    pub dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8000)]
    pub port: u16,
    /// Model used to compute missing parity files.
    #[arg(long, env = "NEPCURATE_MODEL")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub radii: RadiiArgs,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legacy_flags_are_rewritten() {
        let got = normalize_argv([
            "nepcurate",
            "select",
            "a.xyz",
            "-max",
            "5",
            "-base=b.xyz",
            "-d",
            "0.1",
            "--",
            "-max",
        ]);
        let want: Vec<OsString> = [
            "nepcurate",
            "select",
            "a.xyz",
            "--max",
            "5",
            "--base=b.xyz",
            "-d",
            "0.1",
            "--",
            "-max",
        ]
        .map(OsString::from)
        .into();
        assert_eq!(got, want);
    }

    #[test]
    fn parses_select() {
        let cli = Cli::try_parse_from(normalize_argv(["nepcurate", "select", "p.xyz", "-max", "100", "-f"])).unwrap();
        match cli.command {
            Command::Select(s) => {
                assert_eq!(s.max_count, 100);
                assert!(s.filter);
                assert_eq!(s.out, PathBuf::from("selected.xyz"));
            }
            _ => panic!("wrong verb"),
        }
    }

    #[test]
    fn aliases_and_conflicts() {
        assert!(Cli::try_parse_from(["nepcurate", "gpumd", "s.xyz"]).is_ok());
        assert!(Cli::try_parse_from(["nepcurate", "vasp", "s.xyz"]).is_ok());
        let both = [
            "nepcurate",
            "label",
            "s.xyz",
            "--command",
            "x",
            "--kspacing",
            "0.2",
            "--ka",
            "1",
            "1",
            "1",
        ];
        assert!(Cli::try_parse_from(both).is_err());
        assert!(Cli::try_parse_from(["nepcurate", "frobnicate"]).is_err());
    }
}
