//! Command-line front end. Every run writes `manifest.json` next to its
//! outputs; `replay` re-executes a manifest with its recorded configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bayes::{simulate_ensemble, Trajectory};
use crate::concurrence::{histogram_grid, ReadoutRelation};
use crate::config::{ConfigBuilder, RunConfig};
use crate::ensemble::{
    extract_branch_mlps, extract_mlp, partition_branches, time_to_max_histogram, Ensemble, DEFAULT_K_SELECT,
};
use crate::error::{Error, Result};
use crate::io;
use crate::mlp::{find_mlp_branches, ScanSpec};
use crate::model::Preset;
use crate::verify;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "qtraj", version, about = "Two-qubit half-parity measurement: trajectories, concurrence statistics, most likely paths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Base parameter set.
    #[arg(long, default_value = "medium", value_parser = ["weak", "medium", "strong"])]
    pub preset: String,
    /// Flat key-value config file layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set gamma=0.3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo trajectories.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: SimulateJob,
    },
    /// Concurrence distribution on a time × concurrence grid.
    Distribution {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: DistributionJob,
    },
    /// Most likely paths from the constant-readout likelihood scan.
    Mlp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: MlpJob,
    },
    /// Minimum-total-distance paths of an ensemble, overall and per branch.
    ExtractMlp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: ExtractJob,
    },
    /// Histogram of the time of maximum concurrence.
    TimeToMax {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: TimeToMaxJob,
    },
    /// Cross-checks between independent routes; exit status 3 on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        job: VerifyJob,
    },
    /// Re-run a recorded manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory (default: `replay` next to the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateJob {
    /// One CSV per trajectory instead of a single file with `traj_id`.
    #[arg(long)]
    pub per_file: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DistributionJob {
    /// Concurrence bin width.
    #[arg(long, default_value_t = 0.015)]
    pub bin: f64,
    /// Times at which the density is tabulated.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.8,1.4")]
    pub pdf_times: Vec<f64>,
    /// Density points per tabulated time.
    #[arg(long, default_value_t = 400)]
    pub pdf_points: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MlpJob {
    /// Time of the configured initial state (re-initialization point).
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 801)]
    pub scan_points: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExtractJob {
    /// Trajectory CSV files; simulated from the config when absent.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Trajectories averaged per extracted path.
    #[arg(long, default_value_t = DEFAULT_K_SELECT)]
    pub k: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TimeToMaxJob {
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Time bin width (μs).
    #[arg(long, default_value_t = 0.1)]
    pub bin: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct VerifyJob {}

/// What to run, independent of where the configuration came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Job {
    Simulate(SimulateJob),
    Distribution(DistributionJob),
    Mlp(MlpJob),
    ExtractMlp(ExtractJob),
    TimeToMax(TimeToMaxJob),
    Verify(VerifyJob),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate(_) => "simulate",
            Job::Distribution(_) => "distribution",
            Job::Mlp(_) => "mlp",
            Job::ExtractMlp(_) => "extract-mlp",
            Job::TimeToMax(_) => "time-to-max",
            Job::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub job: Job,
    pub config: RunConfig,
    pub seed: u64,
    /// Output files relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub assumptions: Vec<String>,
}

/// Result of executing a job: files written and whether checks passed.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub verified: bool,
}

pub fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut b = ConfigBuilder::from_preset(Preset::parse(&c.preset)?);
    if let Some(path) = &c.config {
        b = b.layer_file(path)?;
    }
    for s in &c.sets {
        b = b.set(s)?;
    }
    let mut rc = b.build()?;
    if let Some(seed) = c.seed {
        rc.seed = seed;
    }
    if let Some(n) = c.n_traj {
        rc.n_traj = n;
    }
    Ok(rc)
}

fn assumptions(rc: &RunConfig) -> Vec<String> {
    let mut out = vec![format!(
        "gamma = {} per microsecond is an assumed constant extra dephasing rate of the odd-subspace coherence",
        rc.meas.gamma
    )];
    if rc.meas.gamma == Preset::GAMMA {
        out.push("gamma is the preset default, not a measured value".into());
    }
    out
}

fn load_or_simulate(inputs: &[PathBuf], rc: &RunConfig) -> Result<Ensemble> {
    if inputs.is_empty() {
        return Ensemble::simulate(&rc.x0, &rc.meas, rc.seed, rc.n_traj);
    }
    let mut trajs: Vec<Trajectory> = Vec::new();
    for p in inputs {
        trajs.extend(io::read_trajectories_csv(p)?);
    }
    Ensemble::new(trajs, rc.meas.clone(), rc.seed)
}

fn fmt_time(t: f64) -> String {
    let s = format!("{t}");
    s.replace('-', "m")
}

/// Runs a job, writing outputs under `out`.
pub fn execute(job: &Job, rc: &RunConfig, out: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let mut verified = true;
    let mut emit = |name: String| outputs.push(name);
    match job {
        Job::Simulate(j) => {
            let trajs = simulate_ensemble(&rc.x0, &rc.meas, rc.seed, rc.n_traj)?;
            if j.per_file {
                for (i, tr) in trajs.iter().enumerate() {
                    let name = format!("trajectories/traj_{i:06}.csv");
                    io::write_trajectories_csv(&out.join(&name), std::slice::from_ref(tr), false)?;
                    emit(name);
                }
            } else {
                io::write_trajectories_csv(&out.join("trajectories.csv"), &trajs, true)?;
                emit("trajectories.csv".into());
            }
        }
        Job::Distribution(j) => {
            let times = rc.meas.time_grid();
            let grid = histogram_grid(&rc.x0, &rc.meas, &times, j.bin)?;
            io::write_grid_csv(&out.join("grid.csv"), &grid)?;
            emit("grid.csv".into());
            for &t in &j.pdf_times {
                let rel = ReadoutRelation::new(t, &rc.x0, &rc.meas)?;
                let (_, cp) = rel.peak()?;
                let n = j.pdf_points.max(1);
                let rows = (0..n)
                    .map(|k| {
                        let c = cp.max(0.0) * (k as f64 + 0.5) / n as f64;
                        Ok((c, rel.pdf(c)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let name = format!("pdf_t{}.csv", fmt_time(t));
                io::write_pairs_csv(&out.join(&name), ["c", "pdf"], &rows)?;
                emit(name);
            }
            #[derive(Serialize)]
            struct Summary<'a> {
                bin: f64,
                times: &'a [f64],
                c_max: &'a [f64],
                prob_zero: &'a [f64],
            }
            io::write_json(
                &out.join("summary.json"),
                &Summary {
                    bin: grid.bin,
                    times: &grid.times,
                    c_max: &grid.c_max,
                    prob_zero: &grid.prob_zero,
                },
            )?;
            emit("summary.json".into());
        }
        Job::Mlp(j) => {
            let mut scan = ScanSpec::covering(&rc.meas, rc.meas.horizon - j.t0)?;
            scan.n = j.scan_points;
            let search = find_mlp_branches(&rc.x0, &rc.meas, j.t0, rc.meas.horizon, &scan)?;
            io::write_pairs_csv(&out.join("scan.csv"), ["v", "log_like"], &search.scan)?;
            emit("scan.csv".into());
            #[derive(Serialize)]
            struct Record {
                branch: String,
                v_opt: f64,
                log_like: f64,
                t_peak: f64,
                c_peak: f64,
                file: String,
            }
            let mut records = Vec::new();
            for (k, b) in search.branches.iter().enumerate() {
                let dup = search.branches.iter().filter(|o| o.branch == b.branch).count() > 1;
                let label = if dup {
                    format!("{}-{k}", b.branch.label())
                } else {
                    b.branch.label().to_string()
                };
                let name = format!("branch_{label}.csv");
                io::write_path_csv(&out.join(&name), &b.times, &b.path, &b.conc_path)?;
                records.push(Record {
                    branch: label,
                    v_opt: b.v_opt,
                    log_like: b.log_like,
                    t_peak: b.t_peak,
                    c_peak: b.conc_path.iter().cloned().fold(0.0, f64::max),
                    file: name.clone(),
                });
                emit(name);
            }
            io::write_json(&out.join("branches.json"), &records)?;
            emit("branches.json".into());
        }
        Job::ExtractMlp(j) => {
            let e = load_or_simulate(&j.input, rc)?;
            if e.is_empty() {
                return Err(Error::InvalidArgument("empty ensemble".into()));
            }
            let all = extract_mlp(&e, j.k.min(e.len()))?;
            let part = partition_branches(&e)?;
            let per_branch = extract_branch_mlps(&e, &part, j.k)?;
            let mut rows: Vec<(String, &Trajectory)> = vec![("all".into(), &all)];
            for (b, tr) in &per_branch {
                rows.push((b.label().into(), tr));
            }
            io::write_branch_paths_csv(&out.join("extract.csv"), &rows)?;
            emit("extract.csv".into());
            #[derive(Serialize)]
            struct Summary {
                n_trajectories: usize,
                k_select: usize,
                weights: Vec<(String, f64)>,
                medoids: Vec<(String, usize)>,
            }
            io::write_json(
                &out.join("extract.json"),
                &Summary {
                    n_trajectories: e.len(),
                    k_select: j.k,
                    weights: part.weights().into_iter().map(|(b, w)| (b.label().into(), w)).collect(),
                    medoids: part.medoids.iter().map(|(b, i)| (b.label().into(), *i)).collect(),
                },
            )?;
            emit("extract.json".into());
        }
        Job::TimeToMax(j) => {
            let e = load_or_simulate(&j.input, rc)?;
            let h = time_to_max_histogram(&e, j.bin)?;
            io::write_time_to_max_csv(&out.join("time_to_max.csv"), &h)?;
            emit("time_to_max.csv".into());
            #[derive(Serialize)]
            struct Summary {
                bin: f64,
                n_trajectories: usize,
                never_entangled: f64,
                peak_bins: Vec<f64>,
            }
            io::write_json(
                &out.join("time_to_max.json"),
                &Summary {
                    bin: h.bin,
                    n_trajectories: h.n_trajectories,
                    never_entangled: h.never_entangled,
                    peak_bins: h.significant_peaks().iter().map(|&k| h.edges[k]).collect(),
                },
            )?;
            emit("time_to_max.json".into());
        }
        Job::Verify(_) => {
            let checks = verify::run_all(rc.seed);
            for c in &checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            verified = checks.iter().all(|c| c.passed);
            io::write_json(&out.join("verify.json"), &checks)?;
            emit("verify.json".into());
        }
    }
    Ok(Outcome { outputs, verified })
}

fn install_pool(workers: usize) {
    // a second call fails harmlessly when the pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
}

fn run_and_record(job: &Job, rc: &RunConfig, out: &Path, workers: usize) -> Result<bool> {
    install_pool(workers);
    let start = Instant::now();
    let outcome = execute(job, rc, out)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        job: job.clone(),
        config: rc.clone(),
        seed: rc.seed,
        outputs: outcome.outputs,
        workers: rayon::current_num_threads(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        assumptions: assumptions(rc),
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(outcome.verified)
}

fn split(cmd: Command) -> std::result::Result<(Common, Job), (PathBuf, Option<PathBuf>, usize)> {
    match cmd {
        Command::Simulate { common, job } => Ok((common, Job::Simulate(job))),
        Command::Distribution { common, job } => Ok((common, Job::Distribution(job))),
        Command::Mlp { common, job } => Ok((common, Job::Mlp(job))),
        Command::ExtractMlp { common, job } => Ok((common, Job::ExtractMlp(job))),
        Command::TimeToMax { common, job } => Ok((common, Job::TimeToMax(job))),
        Command::Verify { common, job } => Ok((common, Job::Verify(job))),
        Command::Replay { manifest, out, workers } => Err((manifest, out, workers)),
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match split(cli.command) {
        Ok((common, job)) => {
            let rc = resolve_config(&common)?;
            run_and_record(&job, &rc, &common.out, common.workers)
        }
        Err((path, out, workers)) => {
            let text = std::fs::read_to_string(&path)?;
            let m: RunManifest = serde_json::from_str(&text)?;
            let out = out.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("replay"));
            run_and_record(&m.job, &m.config, &out, workers)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => EXIT_VERIFY,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
