//! Experiment configuration, resumable sweeps and reporting.
//!
//! A sweep directory looks like this:
//!
//! ```text
//! <out>/manifest.json          config, code version and status of every run
//! <out>/metrics.csv            one row per (dataset, architecture, digest, seed, metric)
//! <out>/capacity.svg           capacity trajectories of the adaptive runs
//! <out>/summary.txt            mean±std per architecture and metric
//! <out>/runs/<run id>/         checkpoint/, c_trajectory.csv, diagnostics.csv, result.json
//! ```

mod csvio;
mod plot;
mod summary;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{
    dci_disentanglement, fvae_metric, mig, representation_sample, FvaeConfig, MetricRow, DEFAULT_BINS,
};
use crate::pipe::{is_collapsed, pipe, pipe_rec, reconstruction_error, PipeConfig};
use crate::synthdata::{build_toysprites, GroundTruthDataset, ToySpritesConfig};
use crate::train::{parse_trajectory_csv, Objective, Profile, StepDiagnostics, TrainConfig, TrainState};

pub use csvio::{append_metrics, read_metrics, read_metrics_if_present, METRICS_HEADER};
pub use plot::{capacity_band, mean_std, plot_capacity, BandPoint, CapacitySeries};
pub use summary::{lower_is_better, summarize, summary_table, SummaryRow};

/// Environment variable that overrides the dataset cache directory.
pub const CACHE_ENV: &str = "DAVA_LAB_CACHE";

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "/", env!("CARGO_PKG_VERSION"));

/// Metrics a sweep can compute for each trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Pipe,
    /// Per-pixel reconstruction error of posterior means.
    Rec,
    PipeRec,
    Mig,
    Dci,
    Fvae,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Pipe => "pipe",
            MetricKind::Rec => "rec",
            MetricKind::PipeRec => "pipe_rec",
            MetricKind::Mig => "mig",
            MetricKind::Dci => "dci",
            MetricKind::Fvae => "fvae",
        }
    }
}

/// Settings that replace the profile defaults of every run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub total_steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub z_dim: Option<usize>,
    pub decoder_channels: Option<[usize; 3]>,
    pub hidden_units: Option<usize>,
    pub checkpoint_every: Option<u64>,
}

fn default_supervised_samples() -> usize {
    10_000
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Dataset options; the profile's image side when absent.
    #[serde(default)]
    pub dataset: Option<ToySpritesConfig>,
    pub architectures: Vec<Objective>,
    /// The profile's default seeds when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub pipe: PipeConfig,
    #[serde(default)]
    pub fvae: FvaeConfig,
    /// Observations encoded for MIG, DCI and the reconstruction error.
    #[serde(default = "default_supervised_samples")]
    pub supervised_samples: usize,
    #[serde(default = "default_alpha")]
    pub pipe_rec_alpha: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| self.profile.default_seeds())
    }

    pub fn dataset_config(&self) -> ToySpritesConfig {
        self.dataset.clone().unwrap_or(ToySpritesConfig { side: self.profile.image_side(), ..Default::default() })
    }

    pub fn train_config(&self, objective: &Objective) -> TrainConfig {
        let mut c = TrainConfig::preset(self.profile, objective.clone());
        let o = &self.train;
        c.total_steps = o.total_steps.unwrap_or(c.total_steps);
        c.batch_size = o.batch_size.unwrap_or(c.batch_size);
        c.z_dim = o.z_dim.unwrap_or(c.z_dim);
        c.decoder_channels = o.decoder_channels.unwrap_or(c.decoder_channels);
        c.hidden_units = o.hidden_units.unwrap_or(c.hidden_units);
        c.checkpoint_every = o.checkpoint_every.or(c.checkpoint_every);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let seeds = self.seeds();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if seeds.is_empty() || unique.len() != seeds.len() {
            return Err(Error::Config("seeds must be non-empty and distinct".into()));
        }
        if self.architectures.is_empty() || self.metrics.is_empty() {
            return Err(Error::Config("need at least one architecture and one metric".into()));
        }
        let mut m = self.metrics.clone();
        m.sort_unstable();
        m.dedup();
        if m.len() != self.metrics.len() {
            return Err(Error::Config("metrics listed twice".into()));
        }
        if self.supervised_samples < 2 || !(self.pipe_rec_alpha >= 0.0) {
            return Err(Error::Config("supervised_samples must be >= 2 and pipe_rec_alpha >= 0".into()));
        }
        for a in &self.architectures {
            self.train_config(a).validate()?;
        }
        let mut digests: Vec<String> = self.architectures.iter().map(|a| config_digest(&self.train_config(a))).collect();
        digests.sort_unstable();
        digests.dedup();
        if digests.len() != self.architectures.len() {
            return Err(Error::Config("two architectures have identical settings".into()));
        }
        self.pipe.validate()
    }

    /// Every (architecture, seed) run in execution order.
    pub fn runs(&self) -> Vec<RunSpec> {
        let dataset = dataset_id(&self.dataset_config());
        let mut out = Vec::new();
        for a in &self.architectures {
            let train = self.train_config(a);
            let digest = config_digest(&train);
            for seed in self.seeds() {
                out.push(RunSpec {
                    id: format!("{}-{}-s{seed}", a.name(), digest),
                    dataset: dataset.clone(),
                    architecture: a.name().to_string(),
                    digest: digest.clone(),
                    seed,
                    train: train.clone(),
                });
            }
        }
        out
    }

    /// Metrics the runs have to compute, including inputs of `pipe_rec`.
    pub fn computed_metrics(&self) -> Vec<MetricKind> {
        let mut m: Vec<MetricKind> = self.metrics.iter().copied().filter(|&k| k != MetricKind::PipeRec).collect();
        if self.metrics.contains(&MetricKind::PipeRec) {
            for k in [MetricKind::Pipe, MetricKind::Rec] {
                if !m.contains(&k) {
                    m.push(k);
                }
            }
        }
        m
    }
}

/// First 12 hex digits of the SHA-256 of a value's JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    Sha256::digest(&json).iter().take(6).map(|b| format!("{b:02x}")).collect()
}

pub fn config_digest(config: &TrainConfig) -> String {
    digest_of(config)
}

/// Identifier of a procedural dataset; default options give a short name.
pub fn dataset_id(config: &ToySpritesConfig) -> String {
    let base = format!("toysprites-{}px", config.side);
    if *config == (ToySpritesConfig { side: config.side, ..Default::default() }) {
        base
    } else {
        format!("{base}-{}", digest_of(config))
    }
}

/// Directory that caches rendered datasets: `$DAVA_LAB_CACHE` when set.
pub fn cache_dir(default: &Path) -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| default.to_path_buf())
}

/// Loads a cached dataset or renders and caches it.
pub fn load_or_build_dataset(config: &ToySpritesConfig, cache: &Path) -> Result<GroundTruthDataset> {
    let dir = cache.join(dataset_id(config));
    if dir.join("manifest.txt").exists() {
        let ds = GroundTruthDataset::load(&dir)?;
        let fresh = build_toysprites(config)?;
        if ds.shape() == fresh.shape() && ds.space() == fresh.space() && ds.image_at(ds.len() - 1) == fresh.image_at(fresh.len() - 1) {
            return Ok(ds);
        }
        log::warn!("cached dataset at {} does not match its options; re-rendering", dir.display());
    }
    let ds = build_toysprites(config)?;
    ds.save(&dir)?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub id: String,
    pub dataset: String,
    pub architecture: String,
    pub digest: String,
    pub seed: u64,
    pub train: TrainConfig,
}

/// A computed metric value of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: MetricKind,
    pub value: f64,
    #[serde(default)]
    pub sampler: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub values: Vec<MetricValue>,
    pub collapsed: bool,
}

impl RunOutput {
    pub fn get(&self, metric: MetricKind) -> Option<&MetricValue> {
        self.values.iter().find(|v| v.metric == metric)
    }
}

/// Trains and evaluates one run inside its own directory.
pub trait RunExecutor {
    fn execute(&self, spec: &RunSpec, config: &ExperimentConfig, run_dir: &Path) -> Result<RunOutput>;
}

/// Full training followed by metric evaluation on a shared dataset.
pub struct TrainAndEvaluate<'a> {
    pub dataset: &'a GroundTruthDataset,
}

impl RunExecutor for TrainAndEvaluate<'_> {
    fn execute(&self, spec: &RunSpec, config: &ExperimentConfig, run_dir: &Path) -> Result<RunOutput> {
        let state = train_in_dir(self.dataset, &spec.train, spec.seed, run_dir)?;
        evaluate(&state.model, self.dataset, config, &config.computed_metrics(), spec.seed)
    }
}

/// Computes `metrics` for a trained model with seed-derived evaluation streams.
pub fn evaluate(
    model: &crate::vae::Vae,
    dataset: &GroundTruthDataset,
    config: &ExperimentConfig,
    metrics: &[MetricKind],
    seed: u64,
) -> Result<RunOutput> {
    let collapsed = is_collapsed(model, seed)?;
    let mut values = Vec::new();
    let mut sample = None;
    for &m in metrics {
        let (value, sampler) = match m {
            MetricKind::Pipe => {
                let r = pipe(model, dataset, &config.pipe, seed)?;
                (r.score, r.sampler.to_string())
            }
            MetricKind::Rec => (reconstruction_error(model, dataset, config.supervised_samples, seed)?, String::new()),
            MetricKind::Mig | MetricKind::Dci => {
                if sample.is_none() {
                    sample = Some(representation_sample(model, dataset, config.supervised_samples, seed)?);
                }
                let s = sample.as_ref().expect("just computed");
                let v = if m == MetricKind::Mig { mig(s, DEFAULT_BINS)? } else { dci_disentanglement(s, DEFAULT_BINS)? };
                (v, String::new())
            }
            MetricKind::Fvae => (fvae_metric(model, dataset, &config.fvae, seed)?.accuracy, String::new()),
            MetricKind::PipeRec => continue,
        };
        log::info!("seed {seed}: {} = {value}", m.as_str());
        values.push(MetricValue { metric: m, value, sampler });
    }
    Ok(RunOutput { values, collapsed })
}

/// Trains in `dir`, resuming from `dir/checkpoint` when present, and writes
/// `c_trajectory.csv` and `diagnostics.csv` next to the final checkpoint.
pub fn train_in_dir(dataset: &GroundTruthDataset, config: &TrainConfig, seed: u64, dir: &Path) -> Result<TrainState> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ck_dir = dir.join("checkpoint");
    let diag_path = dir.join("diagnostics.csv");
    let mut state = if ck_dir.join("c_trajectory.csv").exists() {
        let st = TrainState::load(&ck_dir)?;
        if st.config != *config || st.seed != seed {
            return Err(Error::Config(format!("checkpoint in {} belongs to another configuration", ck_dir.display())));
        }
        st
    } else {
        TrainState::new(config.clone(), dataset.shape(), seed)?
    };
    let mut rows = read_diagnostics_rows(&diag_path, state.step)?;
    if state.step < config.total_steps {
        log::info!("training {} from step {} to {}", dir.display(), state.step, config.total_steps);
    }
    state.run(dataset, |st, d: &StepDiagnostics| {
        rows.push(d.csv_row());
        if st.step % 1000 == 0 {
            log::info!("step {}: recon {:.2} kl {:.3} C {:.4} acc {:?}", st.step, d.reconstruction, d.kl_total, d.capacity, d.accuracy);
        }
        if config.checkpoint_every.is_some_and(|every| st.step % every == 0) && st.step < config.total_steps {
            write_diagnostics(&diag_path, &rows)?;
            st.save(&ck_dir)?;
        }
        Ok(())
    })?;
    write_diagnostics(&diag_path, &rows)?;
    state.save(&ck_dir)?;
    let path = dir.join("c_trajectory.csv");
    fs::write(&path, crate::train::trajectory_csv(&state.c_trajectory)).map_err(|e| Error::io(&path, e))?;
    Ok(state)
}

fn read_diagnostics_rows(path: &Path, up_to: u64) -> Result<Vec<String>> {
    if up_to == 0 || !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= up_to))
        .map(str::to_string)
        .collect())
}

fn write_diagnostics(path: &Path, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48);
    text.push_str(StepDiagnostics::CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<MetricRow>,
    pub executed: Vec<String>,
    pub failed: Vec<String>,
}

fn rows_for(spec: &RunSpec, config: &ExperimentConfig, result: std::result::Result<&RunOutput, ()>) -> Vec<MetricRow> {
    config
        .metrics
        .iter()
        .filter(|&&m| m != MetricKind::PipeRec)
        .map(|&m| {
            let (value, sampler, flags) = match result {
                Ok(out) => {
                    let v = out.get(m).expect("requested metrics are computed");
                    (v.value, v.sampler.clone(), if out.collapsed { "collapsed" } else { "" }.to_string())
                }
                Err(()) => (f64::NAN, String::new(), "failed".to_string()),
            };
            MetricRow {
                dataset: spec.dataset.clone(),
                architecture: spec.architecture.clone(),
                digest: spec.digest.clone(),
                seed: spec.seed,
                metric: m.as_str().to_string(),
                value,
                sampler,
                flags,
            }
        })
        .collect()
}

/// Runs every (architecture, seed) pair not yet recorded in `out`'s
/// manifest, appending its rows to `metrics.csv` as soon as it finishes.
/// `pipe_rec` rows are appended after all runs, normalized over the
/// reconstruction errors of the sweep's successful runs.
pub fn run_sweep(config: &ExperimentConfig, out: &Path, executor: &dyn RunExecutor) -> Result<SweepOutcome> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join("manifest.json");
    let metrics_path = out.join("metrics.csv");
    let mut manifest = if manifest_path.exists() {
        let m = SweepManifest::load(&manifest_path)?;
        if m.config != *config {
            return Err(Error::Config(format!("{} was created by a different sweep configuration", out.display())));
        }
        m
    } else {
        SweepManifest { code_version: CODE_VERSION.to_string(), config: config.clone(), runs: Vec::new() }
    };
    manifest.save(&manifest_path)?;
    if !metrics_path.exists() {
        append_metrics(&metrics_path, &[])?;
    }

    let mut executed = Vec::new();
    for spec in config.runs() {
        if manifest.runs.iter().any(|r| r.id == spec.id) {
            continue;
        }
        let run_dir = out.join("runs").join(&spec.id);
        log::info!("run {}", spec.id);
        let (record, rows) = match executor.execute(&spec, config, &run_dir) {
            Ok(output) => {
                fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
                let path = run_dir.join("result.json");
                fs::write(&path, serde_json::to_string_pretty(&output)? + "\n").map_err(|e| Error::io(&path, e))?;
                let rows = rows_for(&spec, config, Ok(&output));
                (RunRecord { id: spec.id.clone(), seed: spec.seed, status: RunStatus::Done, error: None }, rows)
            }
            Err(e) => {
                log::error!("run {} failed: {e}", spec.id);
                let rows = rows_for(&spec, config, Err(()));
                (RunRecord { id: spec.id.clone(), seed: spec.seed, status: RunStatus::Failed, error: Some(e.to_string()) }, rows)
            }
        };
        append_metrics(&metrics_path, &rows)?;
        manifest.runs.push(record);
        manifest.save(&manifest_path)?;
        executed.push(spec.id);
    }

    if config.metrics.contains(&MetricKind::PipeRec) {
        append_pipe_rec(config, out, &manifest, &metrics_path)?;
    }
    let rows = read_metrics(&metrics_path)?;
    write_reports(config, out, &manifest, &rows)?;
    let failed = manifest.runs.iter().filter(|r| r.status == RunStatus::Failed).map(|r| r.id.clone()).collect();
    Ok(SweepOutcome { rows, executed, failed })
}

fn load_result(out: &Path, id: &str) -> Result<RunOutput> {
    let path = out.join("runs").join(id).join("result.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn append_pipe_rec(config: &ExperimentConfig, out: &Path, manifest: &SweepManifest, metrics_path: &Path) -> Result<()> {
    let existing = read_metrics(metrics_path)?;
    let specs = config.runs();
    let done: Vec<(&RunSpec, RunOutput)> = specs
        .iter()
        .filter(|s| manifest.runs.iter().any(|r| r.id == s.id && r.status == RunStatus::Done))
        .map(|s| Ok((s, load_result(out, &s.id)?)))
        .collect::<Result<_>>()?;
    let population: Vec<f64> = done.iter().filter_map(|(_, o)| o.get(MetricKind::Rec).map(|v| v.value)).collect();
    let mut rows = Vec::new();
    for spec in &specs {
        let mut row = MetricRow {
            dataset: spec.dataset.clone(),
            architecture: spec.architecture.clone(),
            digest: spec.digest.clone(),
            seed: spec.seed,
            metric: MetricKind::PipeRec.as_str().to_string(),
            value: f64::NAN,
            sampler: String::new(),
            flags: "failed".to_string(),
        };
        if existing.iter().any(|r| r.key() == row.key()) {
            continue;
        }
        if let Some((_, o)) = done.iter().find(|(s, _)| s.id == spec.id) {
            let (p, r) = (o.get(MetricKind::Pipe).expect("computed"), o.get(MetricKind::Rec).expect("computed"));
            row.value = pipe_rec(p.value, r.value, &population, config.pipe_rec_alpha)?;
            row.sampler = p.sampler.clone();
            row.flags = if o.collapsed { "collapsed" } else { "" }.to_string();
        }
        rows.push(row);
    }
    append_metrics(metrics_path, &rows)
}

fn write_reports(config: &ExperimentConfig, out: &Path, manifest: &SweepManifest, rows: &[MetricRow]) -> Result<()> {
    let summary = summarize(rows);
    let path = out.join("summary.txt");
    fs::write(&path, summary_table(&summary)).map_err(|e| Error::io(&path, e))?;

    let mut series: Vec<CapacitySeries> = Vec::new();
    for spec in config.runs().iter().filter(|s| s.train.objective.dava().is_some()) {
        if !manifest.runs.iter().any(|r| r.id == spec.id && r.status == RunStatus::Done) {
            continue;
        }
        let path = out.join("runs").join(&spec.id).join("c_trajectory.csv");
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let t = parse_trajectory_csv(&text, &path)?;
        let label = format!("{} ({})", spec.architecture, spec.dataset);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(t),
            None => series.push((label, vec![t])),
        }
    }
    if !series.is_empty() {
        let path = out.join("capacity.svg");
        fs::write(&path, plot_capacity(&series)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
