use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dava_lab::harness::{
    self, append_metrics, config_digest, dataset_id, load_or_build_dataset, read_metrics, read_metrics_if_present,
    run_sweep, summarize, summary_table, train_in_dir, ExperimentConfig, MetricKind, TrainAndEvaluate,
};
use dava_lab::metrics::{correlation_report, MetricRow};
use dava_lab::metrics::{dci_disentanglement, fvae_metric, mig, representation_sample, FvaeConfig, DEFAULT_BINS};
use dava_lab::pipe::{is_collapsed, pipe, pipe_rec, reconstruction_error, PipeConfig};
use dava_lab::synthdata::{GroundTruthDataset, ToySpritesConfig};
use dava_lab::train::{Profile, TrainConfig, TrainState};
use dava_lab::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "dava-lab", version, about = "Adaptive adversarial VAE training and disentanglement metrics")]
struct Cli {
    /// Random seed of the run or evaluation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Step counts, image size and seed defaults.
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Output file or directory of the subcommand.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a toysprites dataset to a directory.
    GenerateData {
        /// JSON dataset options; the profile's image size when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model, resuming from `<out>/checkpoint` if present.
    Train {
        /// JSON training config; the profile's DAVA preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory; the profile's cached dataset when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Append pipe, rec and pipe_rec rows for a checkpoint to `<out>/metrics.csv`.
    EvalPipe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// JSON metric config; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Append mig, dci and fvae rows for a checkpoint to `<out>/metrics.csv`.
    EvalSupervised {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Observations encoded for MIG and DCI.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Run or resume a sweep in `<out>`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write correlation matrices, heatmaps and a summary table to `<out>`.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn dataset_label(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn metrics_file(out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    Ok(out.join("metrics.csv"))
}

struct Evaluated {
    state: TrainState,
    dataset: GroundTruthDataset,
    base: MetricRow,
}

fn load_for_eval(checkpoint: &Path, dataset: &Path, seed: u64) -> Result<Evaluated> {
    let state = TrainState::load(checkpoint)?;
    let ds = GroundTruthDataset::load(dataset)?;
    if ds.shape() != state.model.config.input_shape {
        return Err(Error::Config(format!(
            "checkpoint expects {} images but the dataset holds {}",
            state.model.config.input_shape,
            ds.shape()
        )));
    }
    let collapsed = is_collapsed(&state.model, seed)?;
    let base = MetricRow {
        dataset: dataset_label(dataset),
        architecture: state.config.objective.name().to_string(),
        digest: config_digest(&state.config),
        seed,
        metric: String::new(),
        value: f64::NAN,
        sampler: String::new(),
        flags: if collapsed { "collapsed" } else { "" }.to_string(),
    };
    Ok(Evaluated { state, dataset: ds, base })
}

fn row(base: &MetricRow, metric: MetricKind, value: f64, sampler: &str) -> MetricRow {
    MetricRow { metric: metric.as_str().to_string(), value, sampler: sampler.to_string(), ..base.clone() }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenerateData { config } => {
            let cfg = match config {
                Some(p) => read_json(&p)?,
                None => ToySpritesConfig { side: cli.profile.image_side(), ..Default::default() },
            };
            let ds = dava_lab::synthdata::build_toysprites(&cfg)?;
            ds.save(&cli.out)?;
            println!("{} images of {} written to {}", ds.len(), ds.shape(), cli.out.display());
        }
        Command::Train { config, dataset } => {
            let cfg = match config {
                Some(p) => TrainConfig::from_json(
                    &fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                )?,
                None => TrainConfig::dava(cli.profile),
            };
            let ds = match dataset {
                Some(p) => GroundTruthDataset::load(&p)?,
                None => {
                    let dcfg = ToySpritesConfig { side: cli.profile.image_side(), ..Default::default() };
                    load_or_build_dataset(&dcfg, &harness::cache_dir(&cli.out.join("cache")))?
                }
            };
            let state = train_in_dir(&ds, &cfg, cli.seed, &cli.out)?;
            println!("trained {} for {} steps; final C = {:.6}", cfg.objective.name(), state.step, state.capacity());
        }
        Command::EvalPipe { checkpoint, dataset, config } => {
            let cfg: PipeConfig = match config {
                Some(p) => read_json(&p)?,
                None => PipeConfig::default(),
            };
            cfg.validate()?;
            let ev = load_for_eval(&checkpoint, &dataset, cli.seed)?;
            let path = metrics_file(&cli.out)?;
            let result = pipe(&ev.state.model, &ev.dataset, &cfg, cli.seed)?;
            let rec = reconstruction_error(&ev.state.model, &ev.dataset, 10_000, cli.seed)?;
            let mut population: Vec<f64> = read_metrics_if_present(&path)?
                .iter()
                .filter(|r| r.dataset == ev.base.dataset && r.metric == "rec" && !r.has_flag("failed"))
                .map(|r| r.value)
                .collect();
            population.push(rec);
            let combined = pipe_rec(result.score, rec, &population, 1.0)?;
            let sampler = result.sampler.as_str();
            let rows = [
                row(&ev.base, MetricKind::Pipe, result.score, sampler),
                row(&ev.base, MetricKind::Rec, rec, ""),
                row(&ev.base, MetricKind::PipeRec, combined, sampler),
            ];
            append_metrics(&path, &rows)?;
            println!("pipe {:.4} (accuracy {:.4}), rec {:.6}, pipe_rec {:.4}", result.score, result.test_accuracy, rec, combined);
        }
        Command::EvalSupervised { checkpoint, dataset, samples } => {
            let ev = load_for_eval(&checkpoint, &dataset, cli.seed)?;
            let path = metrics_file(&cli.out)?;
            let sample = representation_sample(&ev.state.model, &ev.dataset, samples, cli.seed)?;
            let m = mig(&sample, DEFAULT_BINS)?;
            let d = dci_disentanglement(&sample, DEFAULT_BINS)?;
            let f = fvae_metric(&ev.state.model, &ev.dataset, &FvaeConfig::default(), cli.seed)?.accuracy;
            let rows = [
                row(&ev.base, MetricKind::Mig, m, ""),
                row(&ev.base, MetricKind::Dci, d, ""),
                row(&ev.base, MetricKind::Fvae, f, ""),
            ];
            append_metrics(&path, &rows)?;
            println!("mig {m:.4}, dci {d:.4}, fvae {f:.4}");
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| match e {
                Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
                other => other,
            })?;
            let dcfg = cfg.dataset_config();
            let cache = harness::cache_dir(&cli.out.join("cache"));
            let ds = load_or_build_dataset(&dcfg, &cache)?;
            log::info!("dataset {} ({} images)", dataset_id(&dcfg), ds.len());
            let outcome = run_sweep(&cfg, &cli.out, &TrainAndEvaluate { dataset: &ds })?;
            print!("{}", summary_table(&summarize(&outcome.rows)));
            if !outcome.failed.is_empty() {
                eprintln!("{} run(s) failed: {}", outcome.failed.len(), outcome.failed.join(", "));
                return Ok(ExitCode::from(3));
            }
        }
        Command::Report { metrics } => {
            let rows = read_metrics(&metrics)?;
            if rows.is_empty() {
                return Err(Error::Config(format!("{} holds no rows", metrics.display())));
            }
            fs::create_dir_all(&cli.out).map_err(|e| Error::Io { path: cli.out.clone(), source: e })?;
            for m in correlation_report(&rows)? {
                write(&cli.out.join(format!("correlation-{}.csv", m.dataset)), &m.to_csv())?;
                write(&cli.out.join(format!("correlation-{}.svg", m.dataset)), &m.to_svg())?;
            }
            let table = summary_table(&summarize(&rows));
            write(&cli.out.join("summary.txt"), &table)?;
            print!("{table}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
