//! Command-line pipeline: `synth`, `fit-leadtime`, `train`, `predict`,
//! `baseline` and `evaluate`.
//!
//! Every command writes plain files plus `manifest.json` (command, seed,
//! effective configuration, crate version, output files and sizes) into its
//! output directory. All randomness derives from `--seed`. Failures print a
//! single JSON error record on stderr and exit with status 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{DEFAULT_CROSTON_ALPHA, DEFAULT_CROSTON_LOOKBACK_DAYS};
use crate::dataset::{read_dataset, write_dataset};
use crate::error::{GspError, Result};
use crate::evaluation::{croston_forecast, evaluate, gsp_forecast, passthrough_forecast, predict_all, Forecast};
use crate::export::{read_forecasts, write_forecasts, write_text, write_timelines};
use crate::graph::NetworkSnapshot;
use crate::inference::{McConfig, DEFAULT_MC_SAMPLES};
use crate::metrics::PenaltyFunction;
use crate::model::{GspModel, ModelConfig};
use crate::rollout::{fit_leadtime_from_snapshots, InferenceConfig, LeadTimeConfig, LeadTimeModel};
use crate::synth::{generate_dataset, SynthConfig};
use crate::training::{train, Checkpoint, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEADTIME_FILE: &str = "leadtime.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SAMPLES_DIR: &str = "samples";

/// Key-value run configuration (TOML). Every section is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Fraction of each run's latest prediction dates held out for
    /// validation when no validation dataset is given.
    pub validation_fraction: f64,
    pub mc_samples: usize,
    pub croston_alpha: f64,
    pub croston_lookback_days: usize,
    /// Constrained-inference iterations applied to baseline timelines.
    pub baseline_iterations: usize,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub leadtime: LeadTimeConfig,
    pub inference: InferenceConfig,
    pub penalty: PenaltyFunction,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            validation_fraction: 0.2,
            mc_samples: DEFAULT_MC_SAMPLES,
            croston_alpha: DEFAULT_CROSTON_ALPHA,
            croston_lookback_days: DEFAULT_CROSTON_LOOKBACK_DAYS,
            baseline_iterations: 0,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            leadtime: LeadTimeConfig::default(),
            inference: InferenceConfig::default(),
            penalty: PenaltyFunction::Linear,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| GspError::io(path, e))?;
        toml::from_str(&text).map_err(|e| GspError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "gsp", version, about = "Supply-event prediction on planning networks")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GSP_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Maximum constrained-inference iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Convergence threshold on the averaged relative change.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Passthrough,
    Croston,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Fit per-edge lead-time distributions from a dataset's observations.
    FitLeadtime {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes the checkpoint, loss curve and lead-time model.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Validation dataset; otherwise the latest dates of `--data` are held out.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Lead-time model; otherwise fit from `--data`.
        #[arg(long)]
        leadtime: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo prediction with constrained inference.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        leadtime: Option<PathBuf>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[command(flatten)]
        inference: InferenceArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Planned-passthrough or Croston predictions in the predict layout.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        leadtime: Option<PathBuf>,
        #[command(flatten)]
        inference: InferenceArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Score a prediction directory against dataset labels.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    inputs: Vec<String>,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<BaselineMethod>,
    outputs: Vec<OutputFile>,
}

fn list_outputs(dir: &Path, base: &Path, out: &mut Vec<OutputFile>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| GspError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| GspError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            list_outputs(&path, base, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            let bytes = fs::metadata(&path).map_err(|e| GspError::io(&path, e))?.len();
            let rel = path.strip_prefix(base).unwrap_or(&path);
            out.push(OutputFile {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes,
            });
        }
    }
    Ok(())
}

fn write_manifest(
    out: &Path,
    command: &'static str,
    config: &RunConfig,
    inputs: &[&Path],
    method: Option<BaselineMethod>,
) -> Result<()> {
    let mut outputs = Vec::new();
    list_outputs(out, out, &mut outputs)?;
    let manifest = Manifest {
        tool: "gsp",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: config.seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
        method,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_text(&out.join(MANIFEST_FILE), &text)
}

fn prepare(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.training.seed = config.seed;
    fs::create_dir_all(&common.out).map_err(|e| GspError::io(&common.out, e))?;
    Ok(config)
}

fn apply_inference(config: &mut InferenceConfig, args: &InferenceArgs) {
    if let Some(n) = args.iterations {
        config.max_iters = n;
    }
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
}

fn load_leadtime(path: Option<&Path>, snaps: &[NetworkSnapshot], config: &LeadTimeConfig) -> Result<LeadTimeModel> {
    match path {
        Some(p) => LeadTimeModel::from_json(&fs::read_to_string(p).map_err(|e| GspError::io(p, e))?),
        None => fit_leadtime_from_snapshots(snaps, config),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GspError::io(path, e))
}

/// Splits off the latest `fraction` of distinct prediction dates.
pub fn split_by_date(snaps: Vec<NetworkSnapshot>, fraction: f64) -> (Vec<NetworkSnapshot>, Vec<NetworkSnapshot>) {
    let mut dates: Vec<_> = snaps.iter().map(|s| s.prediction_date).collect();
    dates.sort_unstable();
    dates.dedup();
    let held = ((dates.len() as f64 * fraction).round() as usize).min(dates.len().saturating_sub(1));
    if held == 0 {
        return (snaps, Vec::new());
    }
    let cutoff = dates[dates.len() - held];
    snaps.into_iter().partition(|s| s.prediction_date < cutoff)
}

fn loss_curve_csv(curve: &[crate::training::EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,validation_loss\n");
    for e in curve {
        let v = e.validation_loss.map_or_else(String::new, |v| v.to_string());
        out.push_str(&format!("{},{},{v}\n", e.epoch, e.train_loss));
    }
    out
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| GspError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { common } => {
            let config = prepare(&common)?;
            let data = generate_dataset(&config.synth, config.seed)?;
            write_dataset(&common.out, &data.snapshots)?;
            write_manifest(&common.out, "synth", &config, &[], None)
        }
        Command::FitLeadtime { data, common } => {
            let config = prepare(&common)?;
            let snaps = read_dataset(&data)?;
            let model = fit_leadtime_from_snapshots(&snaps, &config.leadtime)?;
            write_text(&common.out.join(LEADTIME_FILE), &model.to_json()?)?;
            write_manifest(&common.out, "fit-leadtime", &config, &[&data], None)
        }
        Command::Train {
            data,
            validation,
            leadtime,
            alpha,
            epochs,
            common,
        } => {
            let mut config = prepare(&common)?;
            if let Some(a) = alpha {
                config.training.alpha = a;
            }
            if let Some(e) = epochs {
                config.training.epochs = e;
            }
            let snaps = read_dataset(&data)?;
            let lead = load_leadtime(leadtime.as_deref(), &snaps, &config.leadtime)?;
            let (train_set, validation_set) = match &validation {
                Some(v) => (snaps, read_dataset(v)?),
                None => split_by_date(snaps, config.validation_fraction),
            };
            let model = GspModel::new(config.model.clone(), config.seed)?;
            let outcome = train(model, &train_set, &validation_set, &lead, &config.training)?;
            let checkpoint = outcome.checkpoint(&config.training);
            write_text(&common.out.join(CHECKPOINT_FILE), &checkpoint.to_json()?)?;
            write_text(&common.out.join(LOSS_CURVE_FILE), &loss_curve_csv(&outcome.curve))?;
            write_text(&common.out.join(LEADTIME_FILE), &lead.to_json()?)?;
            let mut inputs: Vec<&Path> = vec![&data];
            inputs.extend(validation.as_deref());
            inputs.extend(leadtime.as_deref());
            write_manifest(&common.out, "train", &config, &inputs, None)
        }
        Command::Predict {
            data,
            checkpoint,
            leadtime,
            mc_samples,
            inference,
            common,
        } => {
            let mut config = prepare(&common)?;
            if let Some(n) = mc_samples {
                config.mc_samples = n;
            }
            apply_inference(&mut config.inference, &inference);
            let snaps = read_dataset(&data)?;
            let ckpt = Checkpoint::from_json(&read_text(&checkpoint)?)?;
            let model = ckpt.to_model()?;
            config.model = model.config.clone();
            let lead = load_leadtime(leadtime.as_deref(), &snaps, &config.leadtime)?;
            let mc = McConfig {
                samples: config.mc_samples,
                seed: config.seed,
                inference: config.inference.clone(),
            };
            let predictions = predict_all(&model, &ckpt.scaler, &snaps, &lead, &mc)?;
            let forecasts = snaps
                .iter()
                .zip(&predictions)
                .map(|(s, p)| gsp_forecast(s, p, &lead))
                .collect::<Result<Vec<Forecast>>>()?;
            write_forecasts(&common.out, &snaps, &forecasts)?;
            let samples = common.out.join(SAMPLES_DIR);
            fs::create_dir_all(&samples).map_err(|e| GspError::io(&samples, e))?;
            for k in 0..config.mc_samples {
                let sets: Vec<&[Vec<f64>]> = predictions
                    .iter()
                    .map(|p| p.samples[k].last().timelines.as_slice())
                    .collect();
                write_timelines(&samples.join(format!("timelines_{k:03}.csv")), &snaps, &sets)?;
            }
            let mut inputs: Vec<&Path> = vec![&data, &checkpoint];
            inputs.extend(leadtime.as_deref());
            write_manifest(&common.out, "predict", &config, &inputs, None)
        }
        Command::Baseline {
            method,
            data,
            leadtime,
            inference,
            common,
        } => {
            let mut config = prepare(&common)?;
            config.inference.max_iters = config.baseline_iterations;
            apply_inference(&mut config.inference, &inference);
            let snaps = read_dataset(&data)?;
            let lead = load_leadtime(leadtime.as_deref(), &snaps, &config.leadtime)?;
            let forecasts = snaps
                .iter()
                .map(|s| match method {
                    BaselineMethod::Passthrough => passthrough_forecast(s, &lead, &config.inference),
                    BaselineMethod::Croston => croston_forecast(
                        s,
                        config.croston_alpha,
                        config.croston_lookback_days,
                        &lead,
                        &config.inference,
                    ),
                })
                .collect::<Result<Vec<_>>>()?;
            write_forecasts(&common.out, &snaps, &forecasts)?;
            let mut inputs: Vec<&Path> = vec![&data];
            inputs.extend(leadtime.as_deref());
            write_manifest(&common.out, "baseline", &config, &inputs, Some(method))
        }
        Command::Evaluate {
            data,
            predictions,
            common,
        } => {
            let config = prepare(&common)?;
            let snaps = read_dataset(&data)?;
            let forecasts = read_forecasts(&predictions, &snaps)?;
            let report = evaluate(&snaps, &forecasts, &config.penalty)?;
            print!("{}", report.to_table());
            write_text(&common.out.join(METRICS_FILE), &report.to_csv())?;
            write_manifest(&common.out, "evaluate", &config, &[&data, &predictions], None)
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

/// Machine-readable one-line error record.
pub fn error_record(err: &GspError) -> String {
    serde_json::to_string(&ErrorRecord {
        error: ErrorBody {
            kind: err.kind(),
            message: err.to_string(),
        },
    })
    .unwrap_or_else(|_| String::from("{\"error\":{\"kind\":\"internal\",\"message\":\"unprintable error\"}}"))
}

/// Parses the process arguments, runs the command and maps failures to an
/// error record and exit status 1.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn partial_sections_take_defaults() {
        let text = "[model.gat]\nheads = 2\n[model.heads]\ntemperature = 0.5\n[inference]\nmax_iters = 3\n[leadtime]\nsmoothing = 1.0\n[training]\nepochs = 1\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.model.gat.heads, 2);
        assert_eq!(
            config.model.gat.layer_widths,
            crate::gnn::GatConfig::default().layer_widths
        );
        assert_eq!(config.inference.epsilon, InferenceConfig::default().epsilon);
        assert_eq!(config.leadtime.default_lead, LeadTimeConfig::default().default_lead);
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c: RunConfig = toml::from_str("seed = 3\n[training]\nalpha = 0.25\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.training.alpha, 0.25);
        assert_eq!(c.training.epochs, TrainConfig::default().epochs);
        assert!(toml::from_str::<RunConfig>("sed = 3\n").is_err());
    }

    #[test]
    fn date_split_holds_out_latest_dates() {
        let cfg = SynthConfig {
            skus: 2,
            weeks: 5,
            ..SynthConfig::default()
        };
        let snaps = generate_dataset(&cfg, 1).unwrap().snapshots;
        let (train, val) = split_by_date(snaps, 0.2);
        assert_eq!((train.len(), val.len()), (8, 2));
        let last_train = train.iter().map(|s| s.prediction_date).max().unwrap();
        assert!(val.iter().all(|s| s.prediction_date > last_train));
    }

    #[test]
    fn error_records_are_json() {
        let r = error_record(&GspError::Config("bad \"value\"".into()));
        let v: serde_json::Value = serde_json::from_str(&r).unwrap();
        assert_eq!(v["error"]["kind"], "config");
    }
}
