use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use throwintent::balltrack::{extract_ball_track, outcome_feature_vector};
use throwintent::data::{
    load_manifest, load_pose_sequence, load_reaction_features, load_weights, DatasetManifest, View,
};
use throwintent::detect::{detect_throw_frame, DetectConfig};
use throwintent::eval::{config_hash, run_evaluation, task_samples, train_on_all, EvalConfig, Predictor, Task};
use throwintent::intent::{compose_intent, PriorMatrix};
use throwintent::models::{predict_congruence, predict_outcome, CongruenceModel, OutcomeModel};
use throwintent::pipeline::{extract_outcome, load_ball_source, load_samples_with, wrist_pixels, Needs, PipelineConfig};
use throwintent::seeding::derived_rng;
use throwintent::synth::{generate_throws, write_dataset, SynthConfig};

use crate::error::{CliError, Result};
use crate::output::{emit, guard, read_config, read_json, stamped, to_pretty, write_bytes, Provenance};
use crate::{
    Cli, Command, DetectArgs, EvaluateArgs, ExperimentArgs, GenerateArgs, ModelKind, PredictArgs, PredictorArg,
    SynthCommand, TrackArgs, TrainArgs,
};

/// Rng stream for tie-breaks in `predict`.
const STREAM_PREDICT_CLI: u64 = 21;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(SynthCommand::Generate(a)) => synth_generate(a, cli.seed),
        Command::DetectThrow(a) => detect(a, cli.seed),
        Command::TrackBall(a) => track(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Predict(a) => predict(a, cli.seed),
        Command::Evaluate(a) => evaluate(a, cli.seed),
    }
}

fn synth_generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    let mut config: SynthConfig = read_config(a.config.as_deref())?;
    if let Some(n) = a.subjects {
        config.subjects = n;
    }
    if let Some(n) = a.rounds {
        config.rounds_per_subject = n;
    }
    if let Some(v) = &a.views {
        config.views = v.clone();
    }
    if let Some(i) = a.reaction_intensity {
        config.population.reaction_intensity = [i, i];
    }
    if a.noiseless {
        config = config.noiseless();
    }
    config.validate()?;
    let occupied = fs::read_dir(&a.out).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !a.force {
        return Err(CliError::usage(format!(
            "{} is not empty; pass --force to overwrite",
            a.out.display()
        )));
    }
    let throws = generate_throws(&config, seed)?;
    let manifest = write_dataset(&a.out, &throws, &config, seed)?;
    let mistakes = throws.iter().filter(|t| !t.truth.congruence).count();
    let misses = throws.iter().filter(|t| t.truth.outcome.is_miss()).count();
    info!("wrote {} throws to {}", throws.len(), a.out.display());
    let summary = json!({
        "out": a.out,
        "throws": throws.len(),
        "records": manifest.records.len(),
        "views": config.views,
        "mistakes": mistakes,
        "complete_misses": misses,
    });
    emit(None, &stamped(&Provenance::new(seed, config.hash()), &summary)?, false)
}

fn detect(a: &DetectArgs, seed: u64) -> Result<()> {
    let config: DetectConfig = read_config(a.config.as_deref())?;
    let pose = load_pose_sequence(&a.pose)?;
    let detection = detect_throw_frame(&pose, a.view, &config)?;
    let body = json!({
        "pose": a.pose,
        "view": a.view,
        "throw_frame": detection.throw_frame,
        "search_window": detection.search_window,
        "signal": detection.signal,
        "scores": detection.scores,
    });
    let value = stamped(&Provenance::new(seed, config_hash(&config)), &body)?;
    emit(a.report.as_deref(), &value, a.force)
}

fn track(a: &TrackArgs, seed: u64) -> Result<()> {
    let config: PipelineConfig = read_config(a.config.as_deref())?;
    if let Some(report) = &a.report {
        guard(report, a.force)?;
    }
    let pose = load_pose_sequence(&a.pose)?;
    let ball = load_ball_source(&a.ball)?;
    let throw_frame = match a.throw_frame {
        Some(f) => f,
        None => detect_throw_frame(&pose, a.view, &config.detect)?.throw_frame,
    };
    let wrist = wrist_pixels(&pose, &config.detect)?;
    let track = extract_ball_track(&ball, &wrist, throw_frame, &config.ball_color)?;
    let features = outcome_feature_vector(&track)?;
    let body = json!({
        "pose": a.pose,
        "ball": a.ball,
        "view": a.view,
        "throw_frame": throw_frame,
        "throw_frame_given": a.throw_frame.is_some(),
        "positions": track.positions,
        "segmented": track.detected,
        "no_detection": track.no_detection,
        "features": features,
    });
    let value = stamped(&Provenance::new(seed, config_hash(&config)), &body)?;
    emit(a.report.as_deref(), &value, a.force)
}

/// Everything `train` and `evaluate` read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub view: View,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            view: View::Deg0,
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn experiment(a: &ExperimentArgs) -> Result<(ExperimentConfig, DatasetManifest, PathBuf)> {
    let mut config: ExperimentConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.view {
        config.view = v;
    }
    let manifest = load_manifest(&a.manifest)?;
    let base = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest.validate(Some(&base))?;
    Ok((config, manifest, base))
}

fn train(a: &TrainArgs, seed: u64) -> Result<()> {
    let (config, manifest, base) = experiment(&a.experiment)?;
    let (task, needs) = match a.model {
        ModelKind::Outcome => (Task::Outcome, Needs { outcome: true, reaction: false }),
        ModelKind::Congruence => (Task::Congruence, Needs { outcome: false, reaction: true }),
        ModelKind::Prior => (Task::Intent, Needs { outcome: false, reaction: false }),
    };
    let sidecar = sidecar_path(&a.out);
    guard(&a.out, a.force)?;
    if a.model != ModelKind::Prior {
        guard(&sidecar, a.force)?;
    }
    let samples = load_samples_with(&manifest, &base, config.view, &config.pipeline, needs)?;
    let selected = task_samples(&samples, task, config.eval.include_miss);
    info!("training {:?} on {} samples", a.model, selected.len());
    let trained = train_on_all(&selected, task, &config.eval, seed)?;
    let provenance = Provenance::new(seed, config_hash(&config));
    let artifacts = trained.artifacts;
    let (weights, log) = match a.model {
        ModelKind::Prior => {
            let prior = artifacts.prior.expect("intent task builds a prior");
            let value = stamped(&provenance, &prior)?;
            write_bytes(&a.out, to_pretty(&value).as_bytes(), a.force)?;
            let summary = json!({ "model": "prior", "out": a.out, "mistakes": prior.counts.total() });
            return emit(None, &stamped(&provenance, &summary)?, false);
        }
        ModelKind::Outcome => (artifacts.outcome_weights, artifacts.outcome_log),
        ModelKind::Congruence => (artifacts.congruence_weights, artifacts.congruence_log),
    };
    let weights = weights.expect("model task trains weights");
    write_bytes(&a.out, &weights.to_bytes()?, a.force)?;
    let model = match a.model {
        ModelKind::Outcome => "outcome",
        _ => "congruence",
    };
    let meta = stamped(
        &provenance,
        &json!({
            "model": model,
            "view": config.view,
            "weights": a.out,
            "samples": selected.len(),
            "training": log,
        }),
    )?;
    write_bytes(&sidecar, to_pretty(&meta).as_bytes(), a.force)?;
    emit(None, &meta, false)
}

/// `weights.bin` -> `weights.bin.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn predict(a: &PredictArgs, seed: u64) -> Result<()> {
    let config: PipelineConfig = read_config(a.config.as_deref())?;
    if let Some(report) = &a.report {
        guard(report, a.force)?;
    }
    let pose = load_pose_sequence(&a.pose)?;
    let ball = load_ball_source(&a.ball)?;
    let reaction = load_reaction_features(&a.reaction)?;
    let outcome_model = OutcomeModel::from_weights(&load_weights(&a.outcome_weights)?)
        .map_err(|e| CliError::data(format!("{}: {e}", a.outcome_weights.display())))?;
    let congruence_model = CongruenceModel::from_weights(&load_weights(&a.congruence_weights)?)
        .map_err(|e| CliError::data(format!("{}: {e}", a.congruence_weights.display())))?;
    let prior: PriorMatrix = read_json(&a.prior)?;
    prior.validate()?;
    let extraction = extract_outcome(&pose, a.view, &ball, &config)?;
    let (outcome, outcome_probs) = predict_outcome(&outcome_model, &extraction.features)?;
    let (congruent, p) = predict_congruence(&congruence_model, &reaction)?;
    let mut rng = derived_rng(seed, STREAM_PREDICT_CLI, 0);
    let prediction = compose_intent(outcome, congruent, p, &prior, &mut rng)?;
    let body = json!({
        "view": a.view,
        "throw_frame": extraction.detection.throw_frame,
        "outcome_probs": outcome_probs,
        "congruent": congruent,
        "prediction": prediction,
    });
    let value = stamped(&Provenance::new(seed, config_hash(&config)), &body)?;
    emit(a.report.as_deref(), &value, a.force)
}

fn predictor(p: PredictorArg) -> Predictor {
    match p {
        PredictorArg::Learned => Predictor::Learned,
        PredictorArg::Oracle => Predictor::Oracle,
        PredictorArg::Random => Predictor::Random,
    }
}

fn evaluate(a: &EvaluateArgs, seed: u64) -> Result<()> {
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    if let Some(report) = &a.report {
        guard(report, a.force)?;
    }
    let (mut config, manifest, base) = experiment(&a.experiment)?;
    if let Some(k) = a.folds {
        config.eval.folds = k;
    }
    if let Some(p) = a.outcome_predictor {
        config.eval.outcome_predictor = predictor(p);
    }
    if let Some(p) = a.congruence_predictor {
        config.eval.congruence_predictor = predictor(p);
    }
    let task: Task = a.task.into();
    let needs = match task {
        Task::Outcome => Needs { outcome: true, reaction: false },
        Task::Congruence => Needs { outcome: false, reaction: true },
        Task::Intent => Needs { outcome: false, reaction: false },
        Task::EndToEnd => Needs {
            outcome: config.eval.outcome_predictor == Predictor::Learned,
            reaction: config.eval.congruence_predictor == Predictor::Learned,
        },
    };
    let samples = load_samples_with(&manifest, &base, config.view, &config.pipeline, needs)?;
    let mut report = run_evaluation(&samples, task, &config.eval, seed, a.jobs)?;
    report.config_hash = config_hash(&config);
    let value = serde_json::to_value(&report).map_err(|e| CliError::data(format!("serialize: {e}")))?;
    emit(a.report.as_deref(), &value, a.force)
}
