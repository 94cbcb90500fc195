//! Subcommands and the configuration they run under.
//!
//! Every command resolves its settings as flags over an optional JSON config
//! file over built-in defaults, and embeds the resolved settings plus the
//! tool version in every artifact it writes: JSON outputs carry them inline,
//! CSV outputs get a `<file>.meta.json` sidecar, checkpoints store them in
//! their header.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::compaction::io::{load_curves, save_curves, DicRecord};
use crate::compaction::{process_batch, CurveStage, DicCurve, SimulationParams, DEFAULT_HORIZON, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::latent::train::{fit_autoencoder, fit_encdec, fit_extended, History};
use crate::latent::{
    relative_l2, Architecture, Checkpoint, EncDecArchitecture, EncDecModel, ExtendedModel, ExtendedWeights,
    LossWeights, Optimizer, RraeModel, Samples, Schedule, TrainConfig, TrainedModel,
};
use crate::metrics::{build_report, ErrorReport, ReportInput, DEFAULT_OUTLIER_THRESHOLD};
use crate::pipeline::{micro_parts, prepare_split, standardized_rows, Prepared};
use crate::profile::io::{load_profiles, save_profiles};
use crate::profile::{RoughnessProfile, DEFAULT_CUTOFF_UM};
use crate::synth::{default_recipes, generate, load_recipes, GenerateParams, PopulationStats};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default training length at desk scale; the learning rate drops tenfold
/// after each third.
pub const DEFAULT_EPOCHS: usize = 1500;

const HISTOGRAM_BINS: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "tape-lab", version, about = "Tape roughness compaction and rank-reduction autoencoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a labeled synthetic profile set.
    Generate(GenerateArgs),
    /// Compact every micro-profile and write its DIC curve.
    Simulate(SimulateArgs),
    /// Fit one model and write a checkpoint plus its loss history.
    Train(TrainArgs),
    /// Score a checkpoint against reference curves.
    Evaluate(EvaluateArgs),
    /// Generate, simulate, train every model and evaluate, from one seed.
    Repro(ReproArgs),
}

// ---------------------------------------------------------------- configs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub recipes: Option<PathBuf>,
    pub per_class: usize,
    pub points: usize,
    pub eps_x: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let g = GenerateParams::default();
        GenerateConfig {
            recipes: None,
            per_class: g.per_class,
            points: g.n_points,
            eps_x: g.eps_x,
            seed: g.seed,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub corrected_out: Option<PathBuf>,
    pub raw_out: Option<PathBuf>,
    pub eps_z: f64,
    pub horizon: usize,
    pub window: usize,
    pub cutoff_um: f64,
    /// Worker count. Affects wall time only, so it is never serialized.
    #[serde(skip_serializing)]
    pub jobs: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            data: None,
            out: None,
            corrected_out: None,
            raw_out: None,
            eps_z: 0.1,
            horizon: DEFAULT_HORIZON,
            window: DEFAULT_WINDOW,
            cutoff_um: DEFAULT_CUTOFF_UM,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Rrae,
    Extended,
    Ae,
    Encdec,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Rrae => "rrae",
            Arch::Extended => "extended",
            Arch::Ae => "ae",
            Arch::Encdec => "encdec",
        }
    }
}

/// Everything that determines a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub kmax: usize,
    pub rmax: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Epochs between tenfold learning-rate drops; a third of `epochs` when
    /// unset.
    pub drop_every: Option<usize>,
    pub optimizer: String,
    pub weights: LossWeights,
    pub extended_weights: ExtendedWeights,
    pub architecture: Architecture,
    pub encdec: EncDecArchitecture,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Rrae,
            kmax: 4,
            rmax: 3,
            epochs: DEFAULT_EPOCHS,
            lr: 1e-3,
            drop_every: None,
            optimizer: "adam".into(),
            weights: LossWeights::default(),
            extended_weights: ExtendedWeights::default(),
            architecture: Architecture::default(),
            encdec: EncDecArchitecture::default(),
        }
    }
}

impl ModelConfig {
    fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let optimizer = Optimizer::parse(&self.optimizer).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown optimizer `{}` (expected gd, momentum or adam)",
                self.optimizer
            ))
        })?;
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        let mut cfg = TrainConfig::new(self.epochs, self.lr, optimizer, seed);
        if let Some(every) = self.drop_every {
            cfg.schedule = Schedule {
                drop_every: every.max(1),
                ..cfg.schedule
            };
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub data: Option<PathBuf>,
    pub dic: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub seed: u64,
    pub test_fraction: f64,
    pub cutoff_um: f64,
    pub model: ModelConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        TrainCommandConfig {
            data: None,
            dic: None,
            out: None,
            history: None,
            seed: 1,
            test_fraction: 0.1,
            cutoff_um: DEFAULT_CUTOFF_UM,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub dic: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub split: Split,
    pub outlier_threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            model: None,
            data: None,
            dic: None,
            report: None,
            split: Split::Test,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproConfig {
    /// Output directory. Where results land is not part of what produced
    /// them, so it is left out of the embedded config.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub recipes: Option<PathBuf>,
    pub per_class: usize,
    pub points: usize,
    pub eps_x: f64,
    pub eps_z: f64,
    pub horizon: usize,
    pub window: usize,
    pub cutoff_um: f64,
    pub test_fraction: f64,
    /// Rank of the headline RRAE and of the extended model.
    pub kmax: usize,
    /// Rank shared by the RRAE / classical AE comparison.
    pub kmax_baseline: usize,
    pub rmax: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: String,
    pub outlier_threshold: f64,
    #[serde(skip_serializing)]
    pub jobs: usize,
}

impl Default for ReproConfig {
    fn default() -> Self {
        let g = GenerateConfig::default();
        let s = SimulateConfig::default();
        let m = ModelConfig::default();
        ReproConfig {
            out: None,
            seed: 7,
            recipes: None,
            per_class: g.per_class,
            points: g.points,
            eps_x: g.eps_x,
            eps_z: s.eps_z,
            horizon: s.horizon,
            window: s.window,
            cutoff_um: s.cutoff_um,
            test_fraction: 0.1,
            kmax: 4,
            kmax_baseline: 5,
            rmax: m.rmax,
            epochs: m.epochs,
            lr: m.lr,
            optimizer: m.optimizer,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            jobs: 1,
        }
    }
}

// ------------------------------------------------------------------ flags

#[derive(Args, Debug, Default)]
pub struct GenerateArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON array of class recipes; built-in recipes when absent.
    #[arg(long)]
    pub recipes: Option<PathBuf>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub eps_x: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Profiles CSV; the micro part of each profile is compacted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Smoothed curves.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the corrected (unsmoothed) curves.
    #[arg(long)]
    pub corrected_out: Option<PathBuf>,
    /// Also write the raw automaton curves.
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
    #[arg(long)]
    pub eps_z: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, env = "TAPE_LAB_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub drop_every: Option<usize>,
    /// gd, momentum or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Loss weights `recon,class,dic`.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<[f64; 3]>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub dic: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss history CSV; `<out>.history.csv` when absent.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub dic: Option<PathBuf>,
    /// Report JSON; figure data is written next to it.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Which profiles to score, using the split stored in the checkpoint.
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub outlier_threshold: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ReproArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub recipes: Option<PathBuf>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub eps_z: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long, env = "TAPE_LAB_JOBS")]
    pub jobs: Option<usize>,
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected three weights, got {}", v.len()))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn base_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", p.display())))
        }
    }
}

fn jobs_or_default(flag: Option<usize>) -> Result<usize> {
    match flag {
        Some(0) => Err(Error::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(1),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("missing --{name}")))
}

impl GenerateArgs {
    pub fn resolve(self) -> Result<GenerateConfig> {
        let mut c: GenerateConfig = base_config(self.config.as_deref())?;
        set_opt(&mut c.recipes, self.recipes);
        set(&mut c.per_class, self.per_class);
        set(&mut c.points, self.points);
        set(&mut c.eps_x, self.eps_x);
        set(&mut c.seed, self.seed);
        set_opt(&mut c.out, self.out);
        Ok(c)
    }
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig> {
        let mut c: SimulateConfig = base_config(self.config.as_deref())?;
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.out, self.out);
        set_opt(&mut c.corrected_out, self.corrected_out);
        set_opt(&mut c.raw_out, self.raw_out);
        set(&mut c.eps_z, self.eps_z);
        set(&mut c.horizon, self.horizon);
        set(&mut c.window, self.window);
        set(&mut c.cutoff_um, self.cutoff);
        c.jobs = jobs_or_default(self.jobs)?;
        Ok(c)
    }
}

impl TrainArgs {
    pub fn resolve(self) -> Result<TrainCommandConfig> {
        let mut c: TrainCommandConfig = base_config(self.config.as_deref())?;
        let m = &mut c.model;
        set(&mut m.arch, self.arch);
        set(&mut m.kmax, self.kmax);
        set(&mut m.rmax, self.rmax);
        set(&mut m.epochs, self.epochs);
        set(&mut m.lr, self.lr);
        set_opt(&mut m.drop_every, self.drop_every);
        set(&mut m.optimizer, self.optimizer);
        if let Some([recon, class, dic]) = self.weights {
            m.weights = LossWeights { recon, class, dic };
        }
        set(&mut c.seed, self.seed);
        set(&mut c.test_fraction, self.test_fraction);
        set(&mut c.cutoff_um, self.cutoff);
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.dic, self.dic);
        set_opt(&mut c.out, self.out);
        set_opt(&mut c.history, self.history);
        Ok(c)
    }
}

impl EvaluateArgs {
    pub fn resolve(self) -> Result<EvaluateConfig> {
        let mut c: EvaluateConfig = base_config(self.config.as_deref())?;
        set_opt(&mut c.model, self.model);
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.dic, self.dic);
        set_opt(&mut c.report, self.report);
        set(&mut c.split, self.split);
        set(&mut c.outlier_threshold, self.outlier_threshold);
        Ok(c)
    }
}

impl ReproArgs {
    pub fn resolve(self) -> Result<ReproConfig> {
        let mut c: ReproConfig = base_config(self.config.as_deref())?;
        set(&mut c.seed, self.seed);
        set_opt(&mut c.out, self.out);
        set_opt(&mut c.recipes, self.recipes);
        set(&mut c.per_class, self.per_class);
        set(&mut c.points, self.points);
        set(&mut c.epochs, self.epochs);
        set(&mut c.lr, self.lr);
        set(&mut c.optimizer, self.optimizer);
        set(&mut c.eps_z, self.eps_z);
        set(&mut c.horizon, self.horizon);
        set(&mut c.kmax, self.kmax);
        set(&mut c.rmax, self.rmax);
        c.jobs = jobs_or_default(self.jobs)?;
        Ok(c)
    }
}

// ---------------------------------------------------------------- outputs

/// `<path>.meta.json` next to a CSV artifact.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_meta(path: &Path, command: &str, config: &impl Serialize) -> Result<()> {
    write_json(
        &meta_path(path),
        &json!({
            "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "command": command,
            "version": VERSION,
            "config": config,
        }),
    )
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// One loss-history row per epoch: `epoch,total,<term>...`.
pub fn write_history(path: &Path, histories: &[(&str, &History)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let io = |e| csv_error(path, e);
    w.write_record(["phase", "epoch", "term", "value"]).map_err(io)?;
    for (phase, h) in histories {
        for (epoch, (total, terms)) in h.total.iter().zip(&h.terms).enumerate() {
            let e = epoch.to_string();
            w.write_record([*phase, &e, "total", &format!("{total:.10e}")]).map_err(io)?;
            for (name, v) in h.names.iter().zip(terms) {
                w.write_record([*phase, &e, name, &format!("{v:.10e}")]).map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidData(format!("{}: {other:?}", path.display())),
    }
}

// --------------------------------------------------------------- commands

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate_command(&a.resolve()?).map(|_| ()),
        Command::Simulate(a) => simulate_command(&a.resolve()?).map(|_| ()),
        Command::Train(a) => train_command(&a.resolve()?).map(|_| ()),
        Command::Evaluate(a) => evaluate_command(&a.resolve()?).map(|_| ()),
        Command::Repro(a) => repro(&a.resolve()?).map(|_| ()),
    }
}

pub fn generate_command(c: &GenerateConfig) -> Result<PopulationStats> {
    let out = required(&c.out, "out")?;
    let recipes = match &c.recipes {
        Some(p) => load_recipes(p)?,
        None => default_recipes(),
    };
    let d = generate(
        &recipes,
        &GenerateParams {
            per_class: c.per_class,
            n_points: c.points,
            eps_x: c.eps_x,
            seed: c.seed,
        },
    )?;
    create_parent(out)?;
    save_profiles(&d.profiles, out)?;
    write_meta(out, "generate", &json!({"settings": c, "population": d.stats}))?;
    Ok(d.stats)
}

/// Summary of a simulation batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub profiles: usize,
    pub max_steps: usize,
    pub terminal: usize,
    pub converged: usize,
}

pub fn simulate_command(c: &SimulateConfig) -> Result<SimulationSummary> {
    let data = required(&c.data, "data")?;
    let out = required(&c.out, "out")?;
    let profiles = load_profiles(data)?;
    let micro = micro_parts(&profiles, c.cutoff_um)?;
    let params = SimulationParams {
        eps_z: c.eps_z,
        horizon: c.horizon,
        window: c.window,
        ..Default::default()
    };
    let sims = process_batch(&micro, &params, c.jobs)?;
    let record = |id: &str, curve: &DicCurve| DicRecord {
        id: id.to_string(),
        eps_z: c.eps_z,
        curve: curve.clone(),
    };
    let outputs: [(Option<&Path>, Vec<DicRecord>); 3] = [
        (Some(out), sims.iter().map(|s| record(&s.id, &s.smoothed)).collect()),
        (
            c.corrected_out.as_deref(),
            sims.iter().map(|s| record(&s.id, &s.corrected)).collect(),
        ),
        (
            c.raw_out.as_deref(),
            sims.iter().map(|s| record(&s.id, &s.simulation.raw)).collect(),
        ),
    ];
    for (path, records) in outputs {
        if let Some(p) = path {
            create_parent(p)?;
            save_curves(&records, p)?;
            write_meta(p, "simulate", c)?;
        }
    }
    Ok(SimulationSummary {
        profiles: sims.len(),
        max_steps: sims.iter().map(|s| s.simulation.steps).max().unwrap_or(0),
        terminal: sims.iter().filter(|s| s.simulation.terminal.is_some()).count(),
        converged: sims.iter().filter(|s| s.simulation.converged).count(),
    })
}

fn load_smoothed(path: &Path) -> Result<Vec<(String, DicCurve)>> {
    let records = load_curves(path)?;
    if let Some(r) = records.iter().find(|r| r.curve.stage != CurveStage::Smoothed) {
        return Err(Error::InvalidData(format!(
            "{}: curve {} is `{}`, training targets must be smoothed",
            path.display(),
            r.id,
            r.curve.stage.as_str()
        )));
    }
    Ok(records.into_iter().map(|r| (r.id, r.curve)).collect())
}

/// A trained model with its loss histories (`("pretrain", ..)` first for
/// the extended model).
pub struct Fitted {
    pub model: TrainedModel,
    pub histories: Vec<(&'static str, History)>,
}

impl ModelConfig {
    /// The settings with every shape taken from the training data, as stored
    /// next to the fitted model.
    pub fn fitted_to(&self, train: &Samples) -> ModelConfig {
        let mut m = self.clone();
        m.architecture.input_len = train.x.ncols();
        m.architecture.horizon = train.dic.ncols();
        let classes = train.labels.iter().copied().max().unwrap_or(1);
        m.architecture.classes = m.architecture.classes.max(classes);
        m.encdec.input_len = train.x.ncols();
        m.encdec.horizon = train.dic.ncols();
        m
    }
}

/// Builds and trains the configured model on `train`.
pub fn fit_model(m: &ModelConfig, train: &Samples, seed: u64) -> Result<Fitted> {
    let cfg = m.train_config(seed)?;
    let rank = match m.arch {
        Arch::Encdec => 1,
        Arch::Extended => m.kmax.max(m.rmax),
        _ => m.kmax,
    };
    if train.len() < rank {
        return Err(Error::InvalidArgument(format!(
            "{} training samples cannot support rank {rank}",
            train.len()
        )));
    }
    let m = &m.fitted_to(train);
    let arch = m.architecture.clone();
    Ok(match m.arch {
        Arch::Rrae | Arch::Ae => {
            let mut model = if m.arch == Arch::Rrae {
                RraeModel::rrae(&arch, m.kmax, seed)?
            } else {
                RraeModel::classical(&arch, m.kmax, seed)?
            };
            model.weights = m.weights;
            let h = fit_autoencoder(&mut model, train, &cfg)?;
            Fitted {
                model: if m.arch == Arch::Rrae {
                    TrainedModel::Rrae(model)
                } else {
                    TrainedModel::Ae(model)
                },
                histories: vec![("train", h)],
            }
        }
        Arch::Extended => {
            let mut model = ExtendedModel::new(&arch, m.kmax, m.rmax, seed)?;
            model.weights = m.extended_weights;
            let (h2, h) = fit_extended(&mut model, train, &cfg, &cfg)?;
            Fitted {
                model: TrainedModel::Extended(model),
                histories: vec![("pretrain", h2), ("train", h)],
            }
        }
        Arch::Encdec => {
            let mut model = EncDecModel::new(&m.encdec, seed)?;
            let h = fit_encdec(&mut model, train, &cfg)?;
            Fitted {
                model: TrainedModel::EncDec(model),
                histories: vec![("train", h)],
            }
        }
    })
}

fn set_stats(model: &mut TrainedModel, stats: crate::profile::Standardizer) {
    match model {
        TrainedModel::Rrae(m) | TrainedModel::Ae(m) => m.stats = Some(stats),
        TrainedModel::Extended(m) => m.m1.stats = Some(stats),
        TrainedModel::EncDec(m) => m.stats = Some(stats),
    }
}

fn history_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".history.csv");
        PathBuf::from(s)
    })
}

fn split_ids(p: &Prepared) -> serde_json::Value {
    json!({"train": p.train.ids, "test": p.test.ids})
}

pub fn train_command(c: &TrainCommandConfig) -> Result<TrainedModel> {
    let data = required(&c.data, "data")?;
    let dic = required(&c.dic, "dic")?;
    let out = required(&c.out, "out")?;
    let profiles = load_profiles(data)?;
    let micro = micro_parts(&profiles, c.cutoff_um)?;
    let curves = load_smoothed(dic)?;
    let prepared = prepare_split(&micro, &curves, c.test_fraction, c.seed)?;
    let mut fitted = fit_model(&c.model, &prepared.train, c.seed)?;
    set_stats(&mut fitted.model, prepared.stats);
    let c = &TrainCommandConfig {
        model: c.model.fitted_to(&prepared.train),
        ..c.clone()
    };
    let hyper = json!({
        "command": "train",
        "version": VERSION,
        "config": c,
        "split": split_ids(&prepared),
    });
    create_parent(out)?;
    Checkpoint::new(fitted.model.clone(), hyper).save(out)?;
    let hist = history_path(out, &c.history);
    let refs: Vec<(&str, &History)> = fitted.histories.iter().map(|(n, h)| (*n, h)).collect();
    write_history(&hist, &refs)?;
    write_meta(&hist, "train", c)?;
    Ok(fitted.model)
}

/// Profiles and reference curves of one evaluation split, in file order.
struct EvalSet {
    ids: Vec<String>,
    labels: Vec<Option<usize>>,
    x: Array2<f64>,
    dic: Array2<f64>,
}

fn eval_set(
    micro: &[RoughnessProfile],
    curves: &[(String, DicCurve)],
    keep: Option<&[String]>,
    model: &TrainedModel,
) -> Result<EvalSet> {
    let stats = model
        .stats()
        .ok_or_else(|| Error::InvalidData("checkpoint carries no normalization statistics".into()))?;
    let by_id: std::collections::HashMap<&str, &DicCurve> =
        curves.iter().map(|(id, c)| (id.as_str(), c)).collect();
    let chosen: Vec<&RoughnessProfile> = match keep {
        None => micro.iter().collect(),
        Some(ids) => {
            let wanted: std::collections::HashSet<&str> = ids.iter().map(|s| s.as_str()).collect();
            micro.iter().filter(|p| wanted.contains(p.id.as_str())).collect()
        }
    };
    if chosen.is_empty() {
        return Err(Error::InvalidData("no profiles in the requested split".into()));
    }
    let x = standardized_rows(&chosen, stats)?;
    let horizon = curves.first().map_or(0, |(_, c)| c.len());
    let mut dic = Array2::<f64>::zeros((chosen.len(), horizon));
    for (r, p) in chosen.iter().enumerate() {
        let c = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::InvalidData(format!("no DIC curve for profile {}", p.id)))?;
        if c.len() != horizon {
            return Err(Error::InvalidData("DIC curves of different lengths".into()));
        }
        dic.row_mut(r).assign(&ndarray::ArrayView1::from(&c.values));
    }
    Ok(EvalSet {
        ids: chosen.iter().map(|p| p.id.clone()).collect(),
        labels: chosen.iter().map(|p| p.label).collect(),
        x,
        dic,
    })
}

fn score(model: &TrainedModel, set: &EvalSet, split: &str, threshold: f64) -> Result<ErrorReport> {
    let pred = model.predict(&set.x)?;
    let pd = pred
        .dic
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model predicts no DIC curves".into()))?;
    if pd.ncols() != set.dic.ncols() {
        return Err(Error::Shape(format!(
            "model predicts {} DIC values, reference curves have {}",
            pd.ncols(),
            set.dic.ncols()
        )));
    }
    let labels: Option<Vec<usize>> = set.labels.iter().copied().collect();
    let classes = match (&pred.classes, &labels) {
        (Some(p), Some(l)) => Some((p.as_slice(), l.as_slice())),
        _ => None,
    };
    let recon = pred.recon.as_ref().map(|r| {
        (
            r.rows().into_iter().collect::<Vec<_>>(),
            set.x.rows().into_iter().collect::<Vec<_>>(),
        )
    });
    build_report(
        split,
        ReportInput {
            ids: &set.ids,
            pred_dic: pd.rows().into_iter().collect(),
            ref_dic: set.dic.rows().into_iter().collect(),
            recon,
            classes,
        },
        threshold,
    )
}

/// Writes the report JSON and its figure-data CSVs (`<stem>.histogram.csv`,
/// `<stem>.boxplot.csv`, `<stem>.samples.csv`).
fn write_report(path: &Path, report: &ErrorReport, header: serde_json::Value) -> Result<()> {
    create_parent(path)?;
    let mut doc = header;
    doc["report"] = serde_json::to_value(report)?;
    write_json(path, &doc)?;
    let stem = path.with_extension("");
    let side = |suffix: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    let meta = json!({"report": path.file_name().map(|f| f.to_string_lossy().into_owned()), "header": doc.get("config")});
    for (p, kind) in [
        (side(".histogram.csv"), 0),
        (side(".boxplot.csv"), 1),
        (side(".samples.csv"), 2),
    ] {
        match kind {
            0 => report.write_histogram(&p, HISTOGRAM_BINS)?,
            1 => report.write_boxplot(&p)?,
            _ => report.write_samples(&p)?,
        }
        write_meta(&p, "evaluate", &meta)?;
    }
    Ok(())
}

pub fn evaluate_command(c: &EvaluateConfig) -> Result<ErrorReport> {
    let model_path = required(&c.model, "model")?;
    let data = required(&c.data, "data")?;
    let dic = required(&c.dic, "dic")?;
    let report_path = required(&c.report, "report")?;
    let ckpt = Checkpoint::load(model_path)?;
    let cutoff = ckpt.hyperparameters["config"]["cutoff_um"]
        .as_f64()
        .unwrap_or(DEFAULT_CUTOFF_UM);
    let keep: Option<Vec<String>> = match c.split {
        Split::All => None,
        s => {
            let ids = ckpt.hyperparameters["split"][s.name()].as_array().ok_or_else(|| {
                Error::InvalidData(format!("checkpoint records no `{}` split", s.name()))
            })?;
            Some(ids.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        }
    };
    let micro = micro_parts(&load_profiles(data)?, cutoff)?;
    let curves = load_smoothed(dic)?;
    let set = eval_set(&micro, &curves, keep.as_deref(), &ckpt.model)?;
    let report = score(&ckpt.model, &set, c.split.name(), c.outlier_threshold)?;
    write_report(
        report_path,
        &report,
        json!({
            "command": "evaluate",
            "version": VERSION,
            "config": c,
            "model": {
                "arch": ckpt.model.arch_name(),
                "parameters": ckpt.model.param_count(),
                "trained_with": ckpt.hyperparameters.get("config"),
            },
        }),
    )?;
    Ok(report)
}

// ------------------------------------------------------------------ repro

/// Headline numbers of one model on the held-out split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelOutcome {
    pub name: String,
    pub arch: String,
    pub rank: usize,
    pub parameters: usize,
    pub final_loss: f64,
    pub accuracy: Option<f64>,
    pub mean_delta_dic: f64,
    pub cumulative_delta_dic: f64,
    pub max_delta_dic: f64,
}

/// DIC autoencoder reconstruction of the held-out curves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DicModesOutcome {
    pub r_max: usize,
    pub curves: usize,
    /// Relative L2 error of every held-out curve, in percent.
    pub errors_pct: Vec<f64>,
    pub within_5pct: usize,
    pub fraction_within_5pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReproOutcome {
    pub version: String,
    pub config: ReproConfig,
    pub population: PopulationStats,
    pub simulation: SimulationSummary,
    pub train_size: usize,
    pub test_size: usize,
    pub models: Vec<ModelOutcome>,
    pub dic_modes: DicModesOutcome,
}

impl ReproOutcome {
    pub fn model(&self, name: &str) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.name == name)
    }
}

fn dic_modes(model: &ExtendedModel, dic: &Array2<f64>) -> Result<DicModesOutcome> {
    let o = model.m2.forward(dic)?;
    let l = relative_l2(o.recon.view(), dic.view())?;
    let errors_pct: Vec<f64> = l.per_sample.iter().map(|e| 100.0 * e).collect();
    let within = errors_pct.iter().filter(|&&e| e <= 5.0).count();
    Ok(DicModesOutcome {
        r_max: model.r_max(),
        curves: errors_pct.len(),
        within_5pct: within,
        fraction_within_5pct: within as f64 / errors_pct.len().max(1) as f64,
        errors_pct,
    })
}

/// The full pipeline. Writes everything under `config.out` when set and
/// returns the numbers that go into `repro_report.json`.
pub fn repro(c: &ReproConfig) -> Result<ReproOutcome> {
    let dir = c.out.clone();
    let path = |name: &str| dir.as_ref().map(|d| d.join(name));
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let recipes = match &c.recipes {
        Some(p) => load_recipes(p)?,
        None => default_recipes(),
    };
    let dataset = generate(
        &recipes,
        &GenerateParams {
            per_class: c.per_class,
            n_points: c.points,
            eps_x: c.eps_x,
            seed: c.seed,
        },
    )?;
    if let Some(p) = path("profiles.csv") {
        save_profiles(&dataset.profiles, &p)?;
        write_meta(&p, "repro", c)?;
    }
    let micro = micro_parts(&dataset.profiles, c.cutoff_um)?;
    let params = SimulationParams {
        eps_z: c.eps_z,
        horizon: c.horizon,
        window: c.window,
        ..Default::default()
    };
    let sims = process_batch(&micro, &params, c.jobs)?;
    let simulation = SimulationSummary {
        profiles: sims.len(),
        max_steps: sims.iter().map(|s| s.simulation.steps).max().unwrap_or(0),
        terminal: sims.iter().filter(|s| s.simulation.terminal.is_some()).count(),
        converged: sims.iter().filter(|s| s.simulation.converged).count(),
    };
    if let Some(p) = path("dic.csv") {
        let records: Vec<DicRecord> = sims
            .iter()
            .map(|s| DicRecord {
                id: s.id.clone(),
                eps_z: c.eps_z,
                curve: s.smoothed.clone(),
            })
            .collect();
        save_curves(&records, &p)?;
        write_meta(&p, "repro", c)?;
    }
    let curves: Vec<(String, DicCurve)> = sims.into_iter().map(|s| (s.id, s.smoothed)).collect();
    let prepared = prepare_split(&micro, &curves, c.test_fraction, c.seed)?;
    if prepared.test.is_empty() {
        return Err(Error::InvalidArgument("the test split is empty".into()));
    }
    let base = ModelConfig {
        epochs: c.epochs,
        lr: c.lr,
        optimizer: c.optimizer.clone(),
        rmax: c.rmax,
        ..Default::default()
    };
    let runs = [
        (format!("rrae_k{}", c.kmax), Arch::Rrae, c.kmax),
        (format!("rrae_k{}", c.kmax_baseline), Arch::Rrae, c.kmax_baseline),
        (format!("ae_k{}", c.kmax_baseline), Arch::Ae, c.kmax_baseline),
        ("encdec".to_string(), Arch::Encdec, 0),
        (format!("extended_k{}", c.kmax), Arch::Extended, c.kmax),
    ];
    let mut models = Vec::new();
    let mut modes = None;
    let mut seen = std::collections::HashSet::new();
    for (name, arch, kmax) in runs {
        if !seen.insert(name.clone()) {
            continue;
        }
        let m = ModelConfig {
            arch,
            kmax: kmax.max(1),
            ..base.clone()
        };
        let mut fitted = fit_model(&m, &prepared.train, c.seed)?;
        let m = m.fitted_to(&prepared.train);
        set_stats(&mut fitted.model, prepared.stats);
        let test = EvalSet {
            ids: prepared.test.ids.clone(),
            labels: prepared.test.labels.iter().map(|&l| Some(l)).collect(),
            x: prepared.test.x.clone(),
            dic: prepared.test.dic.clone(),
        };
        let report = score(&fitted.model, &test, "test", c.outlier_threshold)?;
        if let TrainedModel::Extended(e) = &fitted.model {
            modes = Some(dic_modes(e, &prepared.test.dic)?);
        }
        let final_loss = fitted
            .histories
            .last()
            .and_then(|(_, h)| h.last_total())
            .unwrap_or(f64::NAN);
        if let Some(d) = &dir {
            let hyper = json!({
                "command": "repro",
                "version": VERSION,
                "config": c,
                "model": m,
                "split": split_ids(&prepared),
            });
            let ckpt = d.join(format!("{name}.ckpt"));
            Checkpoint::new(fitted.model.clone(), hyper).save(&ckpt)?;
            let hist = d.join(format!("{name}.history.csv"));
            let refs: Vec<(&str, &History)> = fitted.histories.iter().map(|(n, h)| (*n, h)).collect();
            write_history(&hist, &refs)?;
            write_meta(&hist, "repro", &json!({"repro": c, "model": m}))?;
            write_report(
                &d.join(format!("{name}.report.json")),
                &report,
                json!({
                    "command": "repro",
                    "version": VERSION,
                    "config": c,
                    "model": {"name": name, "settings": m, "parameters": fitted.model.param_count()},
                }),
            )?;
        }
        models.push(ModelOutcome {
            name,
            arch: arch.name().to_string(),
            rank: if arch == Arch::Encdec { 0 } else { m.kmax },
            parameters: fitted.model.param_count(),
            final_loss,
            accuracy: report.summary.accuracy,
            mean_delta_dic: report.summary.mean,
            cumulative_delta_dic: report.summary.cumulative,
            max_delta_dic: report.summary.max,
        });
    }
    let outcome = ReproOutcome {
        version: VERSION.to_string(),
        config: c.clone(),
        population: dataset.stats,
        simulation,
        train_size: prepared.train.len(),
        test_size: prepared.test.len(),
        models,
        dic_modes: modes.expect("the extended model always runs"),
    };
    if let Some(p) = path("repro_report.json") {
        write_json(&p, &serde_json::to_value(&outcome)?)?;
    }
    Ok(outcome)
}
