use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand, ValueEnum};
use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};
use stiffssm_core::dataset::{Layout, Manifest, Split};
use stiffssm_core::metrics::{rel_l2, Clip, ErrorReport};
use stiffssm_core::pipeline::{reconstruct, time_decompose, WindowPlan};
use stiffssm_core::rollout::{
    aligned_truth, latent_recursive_rollout, recursive_rollout, teacher_forced_rollout, time_decomposed, window_report,
    window_report_csv, Rollout, RolloutPlan, WindowError,
};
use stiffssm_core::variants::{prepare, LossCurve};
use stiffssm_core::{Checkpoint, Error, ModelConfig, Registry, Result, Surrogate, TrajectoryDataset};
use stiffssm_datagen::{generate_dataset, GenerateOptions, MechanismRegistry, Tolerances};

use crate::config::ExperimentConfig;

pub const MODEL_FILE: &str = "model.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOSSES_JSON: &str = "losses.json";
pub const LOSSES_CSV: &str = "loss.csv";
pub const STATS_FILE: &str = "stats.json";
pub const REPORT_JSON: &str = "report.json";
pub const ERRORS_CSV: &str = "errors.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const WINDOWS_JSON: &str = "windows.json";
pub const WINDOWS_CSV: &str = "windows.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    Extrapolation,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
            SplitArg::Extrapolation => Split::Extrapolation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a mechanism from sampled initial conditions into a dataset directory.
    GenData(GenData),
    /// Fit normalization statistics of the physical state on a training set.
    FitStats(FitStats),
    /// Train a model variant and write its checkpoints and loss curves.
    Train(Train),
    /// Time-decomposed prediction: every window seeded from the ground truth.
    Predict(Predict),
    /// Recursive rollout: every window seeded from the previous prediction.
    Rollout(RolloutCmd),
    /// Percent relative L2 errors of predictions against ground truth.
    Evaluate(Evaluate),
    /// Gather per-sample errors, loss curves and per-window errors into CSV files.
    Export(Export),
}

impl Command {
    pub fn run(&self) -> Result<()> {
        match self {
            Command::GenData(c) => c.run(),
            Command::FitStats(c) => c.run(),
            Command::Train(c) => c.run(),
            Command::Predict(c) => c.run(),
            Command::Rollout(c) => c.run(),
            Command::Evaluate(c) => c.run(),
            Command::Export(c) => c.run(),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value).expect("value serializes"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn dataset_path(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::invalid(what, "no dataset given on the command line or in the config"))
}

fn check_variables(model: &[String], data: &[String], path: &Path) -> Result<()> {
    if model != data {
        return Err(Error::invalid(
            format!("dataset {}", path.display()),
            format!("variables {data:?} do not match the model's {model:?}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenData {
    /// Mechanism id; overrides `mechanism.id` in the config.
    #[arg(long)]
    pub mechanism: Option<String>,
    #[arg(long)]
    pub samples: usize,
    /// Output points per trajectory.
    #[arg(long)]
    pub nt: usize,
    /// Output time step in seconds.
    #[arg(long)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, default_value_t = Tolerances::default().atol)]
    pub atol: f64,
    #[arg(long, default_value_t = Tolerances::default().rtol)]
    pub rtol: f64,
    /// Configuration whose `[mechanism]` table sets generator parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenData {
    pub fn run(&self) -> Result<()> {
        let mut cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        let mut params = cfg.mechanism.clone().unwrap_or_else(|| serde_json::json!({}));
        if let Some(id) = &self.mechanism {
            params["id"] = id.clone().into();
        }
        if params.get("id").is_none() {
            return Err(Error::invalid("mechanism", "pass --mechanism or set mechanism.id in the config"));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(Error::invalid("tolerances", "atol and rtol must be positive"));
        }
        let mech = MechanismRegistry::builtin().from_spec(&params)?;
        let opts = GenerateOptions {
            n_samples: self.samples,
            n_t: self.nt,
            dt: self.dt,
            seed: self.seed,
            split: self.split.into(),
            tol: Tolerances { atol: self.atol, rtol: self.rtol },
        };
        let start = Instant::now();
        let ds = generate_dataset(mech.as_ref(), &opts)?;
        log::info!(
            "{} trajectories of {} points from `{}` in {:.1} s",
            ds.n_samples(),
            ds.n_t(),
            mech.id(),
            start.elapsed().as_secs_f64()
        );
        ds.write(&self.out)?;
        cfg.mechanism = Some(mech.spec());
        cfg.seed = Some(self.seed);
        cfg.write_resolved(&self.out)
    }
}

#[derive(Debug, Args)]
pub struct FitStats {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset; defaults to `paths.train`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl FitStats {
    pub fn run(&self) -> Result<()> {
        let cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        let path = dataset_path(&self.data, &cfg.paths.train, "training data")?;
        let ds = TrajectoryDataset::read(&path)?;
        let prepared = prepare(ds.data.view(), ds.variables(), &cfg.model_config(), None)?;
        write_json(&self.out.join(STATS_FILE), &prepared.head.stats)?;
        cfg.write_resolved(&self.out)
    }
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `variant`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Training dataset; defaults to `paths.train`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn loss_csv(curves: &[LossCurve]) -> String {
    let mut out = String::from("label,step,loss\n");
    for c in curves {
        for (i, l) in c.losses.iter().enumerate() {
            writeln!(out, "{},{},{l}", c.label, i + 1).expect("write to string");
        }
    }
    out
}

impl Train {
    pub fn run(&self) -> Result<()> {
        let mut cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        if let Some(v) = &self.variant {
            cfg.variant = v.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        cfg.validate()?;
        let path = dataset_path(&self.data, &cfg.paths.train, "training data")?;
        let ds = TrajectoryDataset::read(&path)?;
        let registry = Registry::builtin();
        let variant = registry.get(&cfg.variant)?;
        let model_cfg = cfg.model_config();
        let ckpt_dir = self.out.join(CHECKPOINT_DIR);
        let mut sink = |label: &str, step: usize, ck: Checkpoint| {
            log::debug!("{label}: checkpoint at step {step}");
            ck.write(&ckpt_dir.join(format!("{label}-{step:06}.ckpt")))
        };
        let start = Instant::now();
        let fit = variant.fit(&ds, &model_cfg, &mut sink)?;
        for c in &fit.curves {
            log::info!(
                "{}: final loss {:e} after {} steps",
                c.label,
                c.losses.last().copied().unwrap_or(f64::NAN),
                c.losses.len()
            );
        }
        log::info!("trained `{}` in {:.1} s", cfg.variant, start.elapsed().as_secs_f64());
        fit.surrogate.to_checkpoint().write(&self.out.join(MODEL_FILE))?;
        write_json(&self.out.join(LOSSES_JSON), &fit.curves)?;
        write_file(&self.out.join(LOSSES_CSV), loss_csv(&fit.curves))?;
        cfg.write_resolved(&self.out)
    }
}

/// Restores a checkpoint and the experiment configuration around it, with an
/// optional config file supplying rollout and metric options.
fn load_model(checkpoint: &Path, config: Option<&Path>) -> Result<(Box<dyn Surrogate>, ExperimentConfig)> {
    let ck = Checkpoint::read(checkpoint)?;
    let model = Registry::builtin().restore(&ck)?;
    let model_cfg: ModelConfig = serde_json::from_value(ck.config.clone())
        .map_err(|e| Error::format(checkpoint, format!("config echo: {e}")))?;
    let mut cfg = ExperimentConfig::from_model(&ck.variant, model_cfg);
    if let Some(path) = config {
        let file = ExperimentConfig::load(path)?;
        cfg.paths = file.paths;
        cfg.rollout = file.rollout;
        cfg.metrics = file.metrics;
    }
    Ok((model, cfg))
}

#[derive(Debug, Args)]
pub struct Predict {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ground-truth trajectories; defaults to `paths.test`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Supplies paths; model settings always come from the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn derived_manifest(source: &Manifest, n_t: usize, layout: Layout) -> Manifest {
    Manifest { n_t, layout: Some(layout), ..source.clone() }
}

impl Predict {
    pub fn run(&self) -> Result<()> {
        let (model, cfg) = load_model(&self.checkpoint, self.config.as_deref())?;
        let path = dataset_path(&self.data, &cfg.paths.test, "prediction data")?;
        let truth = TrajectoryDataset::read(&path)?;
        check_variables(model.variables(), truth.variables(), &path)?;
        let plan = cfg.window;
        let pred = time_decomposed(model.as_ref(), truth.data.view(), plan)?;
        let layout = Layout::Decomposed { width: plan.width, segments: plan.segments };
        let out = TrajectoryDataset::new(derived_manifest(&truth.manifest, pred.dim().1, layout), pred)?;
        out.write(&self.out)?;
        cfg.write_resolved(&self.out)
    }
}

#[derive(Debug, Args)]
pub struct RolloutCmd {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Trajectories supplying initial conditions and, when long enough, the
    /// truth for the per-window report; defaults to `paths.test`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated window lengths; overrides `rollout.windows`.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// Seed every window from the ground truth at its start.
    #[arg(long)]
    pub teacher_forced: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn run_rollout(model: &dyn Surrogate, truth: &TrajectoryDataset, plan: &RolloutPlan, teacher: bool) -> Result<Rollout> {
    let ics = truth.data.index_axis(Axis(1), 0);
    if teacher {
        return teacher_forced_rollout(model, truth.data.view(), plan);
    }
    match model.as_latent() {
        Some(latent) => latent_recursive_rollout(latent, ics, plan),
        None => recursive_rollout(model, ics, plan),
    }
}

impl RolloutCmd {
    pub fn run(&self) -> Result<()> {
        let (model, mut cfg) = load_model(&self.checkpoint, self.config.as_deref())?;
        if let Some(w) = &self.windows {
            cfg.rollout.windows = Some(w.clone());
        }
        cfg.validate()?;
        let plan = cfg.rollout_plan();
        let path = dataset_path(&self.data, &cfg.paths.test, "rollout data")?;
        let truth = TrajectoryDataset::read(&path)?;
        check_variables(model.variables(), truth.variables(), &path)?;
        let rollout = run_rollout(model.as_ref(), &truth, &plan, self.teacher_forced)?;
        if plan.span() <= truth.n_t() {
            let clip = if cfg.metrics.clip { Clip::Epsilon } else { Clip::Off };
            let threshold = cfg.rollout.jump_threshold.unwrap_or(f64::INFINITY);
            let report = window_report(&rollout, truth.data.view(), truth.variables(), threshold, clip)?;
            write_json(&self.out.join(WINDOWS_JSON), &report)?;
            write_file(&self.out.join(WINDOWS_CSV), window_report_csv(&report, truth.variables()))?;
        } else {
            log::warn!("rollout spans {} points past the {} available; no window report", plan.span(), truth.n_t());
        }
        let layout = Layout::Rollout { windows: plan.windows.clone() };
        let out = TrajectoryDataset::new(derived_manifest(&truth.manifest, plan.total(), layout), rollout.values)?;
        out.write(&self.out)?;
        cfg.write_resolved(&self.out)
    }
}

#[derive(Debug, Args)]
pub struct Evaluate {
    /// Output directory of `predict` or `rollout`, or any dataset shaped like the truth.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub clip: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Lays the ground truth out like a prediction with the given layout.
pub fn align_truth(truth: &TrajectoryDataset, layout: Option<&Layout>) -> Result<Array3<f64>> {
    match layout {
        None => Ok(truth.data.clone()),
        Some(Layout::Decomposed { width, segments }) => {
            let plan = WindowPlan { width: *width, segments: *segments };
            reconstruct(time_decompose(truth.data.view(), plan)?.view(), *segments)
        }
        Some(Layout::Rollout { windows }) => {
            aligned_truth(truth.data.view(), &RolloutPlan { windows: windows.clone() })
        }
    }
}

/// The report `evaluate` writes, from arrays already in memory.
pub fn evaluate(pred: &TrajectoryDataset, truth: &TrajectoryDataset, clip: Clip) -> Result<ErrorReport> {
    if pred.variables() != truth.variables() {
        return Err(Error::invalid(
            "evaluate",
            format!("prediction variables {:?} differ from truth {:?}", pred.variables(), truth.variables()),
        ));
    }
    let aligned = align_truth(truth, pred.manifest.layout.as_ref())?;
    rel_l2(pred.data.view(), aligned.view(), truth.variables(), clip)
}

impl Evaluate {
    pub fn run(&self) -> Result<()> {
        let pred = TrajectoryDataset::read(&self.pred)?;
        let truth = TrajectoryDataset::read(&self.truth)?;
        let clip = if self.clip { Clip::Epsilon } else { Clip::Off };
        let report = evaluate(&pred, &truth, clip)?;
        log::info!("overall error {}%", report.overall);
        write_file(&self.out.join(REPORT_JSON), report.to_json())?;
        write_file(&self.out.join(ERRORS_CSV), report.entries_csv())?;
        write_file(&self.out.join(SUMMARY_CSV), report.summary_csv())?;
        let mut cfg = ExperimentConfig::default();
        cfg.metrics.clip = self.clip;
        cfg.paths.test = Some(self.truth.clone());
        cfg.write_resolved(&self.out)
    }
}

#[derive(Debug, Args)]
pub struct Export {
    /// `evaluate` output directories.
    #[arg(long)]
    pub report: Vec<PathBuf>,
    /// `train` output directories.
    #[arg(long)]
    pub train: Vec<PathBuf>,
    /// `rollout` output directories.
    #[arg(long)]
    pub rollout: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub const SAMPLE_ERRORS_CSV: &str = "sample_errors.csv";
pub const LOSS_CURVES_CSV: &str = "loss_curves.csv";
pub const WINDOW_ERRORS_CSV: &str = "window_errors.csv";

fn run_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

impl Export {
    pub fn run(&self) -> Result<()> {
        if self.report.is_empty() && self.train.is_empty() && self.rollout.is_empty() {
            return Err(Error::invalid("export", "give at least one --report, --train or --rollout directory"));
        }
        if !self.report.is_empty() {
            let mut csv = String::from("run,sample,variable,error_percent\n");
            for dir in &self.report {
                let r: ErrorReport = read_json(&dir.join(REPORT_JSON))?;
                let run = run_label(dir);
                for (j, row) in r.entries.outer_iter().enumerate() {
                    for (name, v) in r.variables.iter().zip(row) {
                        writeln!(csv, "{run},{j},{name},{v}").expect("write to string");
                    }
                }
            }
            write_file(&self.out.join(SAMPLE_ERRORS_CSV), csv)?;
        }
        if !self.train.is_empty() {
            let mut csv = String::from("run,label,step,loss\n");
            for dir in &self.train {
                let curves: Vec<LossCurve> = read_json(&dir.join(LOSSES_JSON))?;
                let run = run_label(dir);
                for c in &curves {
                    for (i, l) in c.losses.iter().enumerate() {
                        writeln!(csv, "{run},{},{},{l}", c.label, i + 1).expect("write to string");
                    }
                }
            }
            write_file(&self.out.join(LOSS_CURVES_CSV), csv)?;
        }
        if !self.rollout.is_empty() {
            let mut csv = String::from("run,window,start,width,mean_error_percent,max_seed_jump,flagged\n");
            for dir in &self.rollout {
                let windows: Vec<WindowError> = read_json(&dir.join(WINDOWS_JSON))?;
                let run = run_label(dir);
                for w in &windows {
                    writeln!(
                        csv,
                        "{run},{},{},{},{},{},{}",
                        w.window, w.start, w.width, w.mean, w.max_seed_jump, w.flagged
                    )
                    .expect("write to string");
                }
            }
            write_file(&self.out.join(WINDOW_ERRORS_CSV), csv)?;
        }
        let cfg = ExperimentConfig::default();
        cfg.write_resolved(&self.out)
    }
}
