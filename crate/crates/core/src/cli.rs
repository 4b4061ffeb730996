//! Command-line front end. Every subcommand writes `report.json` (full
//! config and seed) next to its output: inside the output directory, or in
//! the parent directory of an output file. Failures print one line,
//! `error kind=<kind> msg=<message>`, and exit nonzero.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gnn::Binder;
use crate::io::{write_bytes, write_json};
use crate::model::{forward_autoencoder, forward_full, init_params, ModelSpec};
use crate::multiview_geom::{read_keypoints, read_rig, triangulate_frame, write_skeletons};
use crate::radar_dsp::{PipelineOptions, Preprocessor};
use crate::scene_sim::{generate_dataset, generate_recording, DatasetSpec, RoomSpec, Split};
use crate::tensor::{cross_entropy_loss, finite_diff_check, ParamStore};
use crate::training_eval::{
    checkpoint_digest, compare_runs, curves_csv, evaluate, preprocess_dataset, train_autoencoder,
    train_classifier, train_unimodal_baseline, Dataset, DatasetReader, EpochStats, Modality,
    Recording, TrainConfig, TrainedModel,
};

#[derive(Debug, Parser)]
#[command(
    name = "radar-gesture",
    version,
    about = "Radar gesture toolkit: simulate, preprocess, train, evaluate"
)]
pub struct Cli {
    /// Seed threaded through every stochastic component. Required.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results are bit-identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired dataset: <out>/{train,eval}/<id>/{cube.bin, skeleton.jsonl, meta.json} and <out>/manifest.json.
    Simulate(SimulateArgs),
    /// Radar chain over a simulated dataset: <out>/{train,eval}/<id>/pointcloud.jsonl (+ skeleton.jsonl for train only).
    Preprocess(PreprocessArgs),
    /// Stage 1: fit input transform, encoder and decoder to skeletons of <data>/train.
    TrainAe(TrainAeArgs),
    /// Stage 2: classifier on a stage-1 encoder (frozen unless --finetune) over <data>/train.
    TrainCls(TrainClsArgs),
    /// Radar-only baseline: same network and loss from random initialisation.
    TrainBaseline(TrainBaselineArgs),
    /// Accuracy and confusion matrix of a classifier checkpoint on one split directory.
    Eval(EvalArgs),
    /// Per-epoch train/test accuracy of several runs side by side.
    Compare(CompareArgs),
    /// 17-joint 3D skeletons from multi-view 2D keypoints.
    Triangulate(TriangulateArgs),
    /// Finite-difference check of the autoencoder and classifier gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub eval_per_class: usize,
    /// Hand-referenced SNR in dB.
    #[arg(long, default_value_t = 20.0)]
    pub snr_db: f64,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in", default_value = "data")]
    pub input: PathBuf,
    #[arg(long, default_value = "processed")]
    pub out: PathBuf,
    /// Strongest gated range-Doppler bins kept per frame.
    #[arg(long, default_value_t = 25)]
    pub top_bins: usize,
    /// Points per cloud after zero padding.
    #[arg(long, default_value_t = 64)]
    pub n_points: usize,
}

#[derive(Debug, Args)]
pub struct Budget {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Cap on batches per epoch (default: one full pass).
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainAeArgs {
    /// Preprocessed dataset root; only <data>/train is read.
    #[arg(long, default_value = "processed")]
    pub data: PathBuf,
    #[arg(long, default_value = "runs/ae")]
    pub out: PathBuf,
    /// Epochs (default 40), batch size in frames (default 32).
    #[command(flatten)]
    pub budget: Budget,
    /// Frames drawn from each recording per epoch (default: all).
    #[arg(long)]
    pub frames_per_recording: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    pub ce_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub triplet_weight: f64,
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    /// Split directory scored after every epoch for the test-accuracy curve.
    #[arg(long)]
    pub monitor: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainClsArgs {
    #[arg(long, default_value = "processed")]
    pub data: PathBuf,
    /// Stage-1 checkpoint directory.
    #[arg(long, default_value = "runs/ae")]
    pub stage1: PathBuf,
    #[arg(long, default_value = "runs/cls")]
    pub out: PathBuf,
    /// Also update the loaded input transform and encoder.
    #[arg(long)]
    pub finetune: bool,
    /// Epochs (default 40), batch size in recordings (default 16).
    #[command(flatten)]
    pub budget: Budget,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct TrainBaselineArgs {
    #[arg(long, default_value = "processed")]
    pub data: PathBuf,
    #[arg(long, default_value = "runs/baseline")]
    pub out: PathBuf,
    /// Epochs (default 40), batch size in recordings (default 16).
    #[command(flatten)]
    pub budget: Budget,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value = "runs/cls")]
    pub checkpoint: PathBuf,
    /// One split directory of a preprocessed dataset.
    #[arg(long, default_value = "processed/eval")]
    pub data: PathBuf,
    /// Directory for report.json and curves.csv.
    #[arg(long, default_value = "runs/eval")]
    pub out: PathBuf,
    /// Confusion matrix path (default <out>/confusion.csv).
    #[arg(long)]
    pub confusion_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// NAME=CHECKPOINT_DIR, at least twice.
    #[arg(long = "run", value_parser = parse_named_run)]
    pub runs: Vec<(String, PathBuf)>,
    #[arg(long, default_value = "comparison.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TriangulateArgs {
    /// JSON list of cameras {intrinsics, rotation, translation}.
    #[arg(long)]
    pub rig: PathBuf,
    /// One line per frame: views → persons → 17 [u, v, confidence].
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long, default_value = "skeleton.jsonl")]
    pub out: PathBuf,
    /// Largest mean epipolar distance accepted as the same person.
    #[arg(long, default_value_t = 20.0)]
    pub threshold_px: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Directory for report.json.
    #[arg(long, default_value = "gradcheck")]
    pub out: PathBuf,
    /// Parameter coordinates sampled per network.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn parse_named_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected NAME=DIR, got `{s}`")),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error kind=usage msg={first}");
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "error kind={} msg={}",
                e.kind(),
                e.to_string().replace('\n', " ")
            );
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    run_with(cli, &DatasetReader::new())
}

/// [`run`] with a caller-supplied reader, so tests can audit file access.
pub fn run_with(cli: &Cli, reader: &DatasetReader) -> Result<()> {
    let seed = cli
        .seed
        .ok_or_else(|| Error::Config("--seed is required".into()))?;
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be ≥ 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, seed, reader))
}

fn dispatch(cmd: &Command, seed: u64, reader: &DatasetReader) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a, seed),
        Command::Preprocess(a) => preprocess(a, seed),
        Command::TrainAe(a) => train_ae(a, seed, reader),
        Command::TrainCls(a) => train_cls(a, seed, reader),
        Command::TrainBaseline(a) => train_baseline(a, seed, reader),
        Command::Eval(a) => eval(a, seed, reader),
        Command::Compare(a) => compare(a, seed),
        Command::Triangulate(a) => triangulate(a, seed),
        Command::Gradcheck(a) => gradcheck(a, seed),
    }
}

fn report(dir: &Path, command: &str, seed: u64, config: Value, result: Value) -> Result<()> {
    write_json(
        &dir.join("report.json"),
        &json!({ "command": command, "seed": seed, "config": config, "result": result }),
    )
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn simulate(a: &SimulateArgs, seed: u64) -> Result<()> {
    let spec = DatasetSpec {
        train_per_class: a.train_per_class,
        eval_per_class: a.eval_per_class,
        seed,
        snr_db: a.snr_db,
        room: RoomSpec::default(),
        ..DatasetSpec::default()
    };
    let m = generate_dataset(&a.out, &spec)?;
    report(
        &a.out,
        "simulate",
        seed,
        json!({ "out": a.out, "dataset": spec }),
        json!({ "recordings": m.recordings.len() }),
    )
}

fn preprocess(a: &PreprocessArgs, seed: u64) -> Result<()> {
    let opts = PipelineOptions {
        top_bins: a.top_bins,
        n_points: a.n_points,
        ..PipelineOptions::default()
    };
    let m = preprocess_dataset(&a.input, &a.out, opts)?;
    report(
        &a.out,
        "preprocess",
        seed,
        json!({ "in": a.input, "out": a.out, "options": opts }),
        json!({ "recordings": m.recordings.len() }),
    )
}

fn spec_for(data: &Dataset) -> ModelSpec {
    let n = data.recordings[0].clouds[0].points.shape()[0];
    ModelSpec {
        n_points: n,
        ..ModelSpec::default()
    }
}

fn budget_config(mut cfg: TrainConfig, b: &Budget) -> TrainConfig {
    if let Some(e) = b.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = b.batch_size {
        cfg.batch_size = s;
    }
    cfg.lr = b.lr;
    cfg.steps_per_epoch = b.steps_per_epoch;
    cfg
}

fn loss_config(mut cfg: TrainConfig, l: &LossArgs) -> TrainConfig {
    cfg.ce_weight = l.ce_weight;
    cfg.triplet_weight = l.triplet_weight;
    cfg.margin = l.margin;
    cfg
}

fn log_epoch(s: &EpochStats) {
    let mut line = format!("epoch {} loss {:.6}", s.epoch, s.loss);
    if let (Some(ce), Some(t)) = (s.ce, s.triplet) {
        line += &format!(" ce {ce:.6} triplet {t:.6}");
    }
    if let Some(a) = s.train_accuracy {
        line += &format!(" train_acc {a:.4}");
    }
    if let Some(a) = s.eval_accuracy {
        line += &format!(" test_acc {a:.4}");
    }
    eprintln!("{line}");
}

fn save_run(
    model: &TrainedModel,
    out: &Path,
    command: &str,
    seed: u64,
    paths: Value,
) -> Result<()> {
    model.save(out)?;
    write_bytes(
        &out.join("curves.csv"),
        curves_csv(&model.history).as_bytes(),
    )?;
    let last = model.history.last().expect("at least one epoch");
    report(
        out,
        command,
        seed,
        json!({ "paths": paths, "train": model.config, "model": model.spec }),
        json!({
            "regime": model.regime.name(),
            "final_epoch": last,
            "parameters": model.params.num_parameters(),
            "checkpoint_sha256": checkpoint_digest(out)?,
        }),
    )
}

fn monitor(reader: &DatasetReader, path: &Option<PathBuf>) -> Result<Option<Dataset>> {
    path.as_ref()
        .map(|p| reader.load_split(p, Modality::RadarOnly))
        .transpose()
}

fn train_ae(a: &TrainAeArgs, seed: u64, reader: &DatasetReader) -> Result<()> {
    let data = reader.load_split(&a.data.join(Split::Train.name()), Modality::Paired)?;
    let spec = spec_for(&data);
    let mut cfg = budget_config(TrainConfig::autoencoder(seed), &a.budget);
    cfg.frames_per_recording = a.frames_per_recording;
    let model = train_autoencoder(&data, &spec, &cfg, &mut log_epoch)?;
    save_run(
        &model,
        &a.out,
        "train-ae",
        seed,
        json!({ "data": a.data, "out": a.out }),
    )
}

fn train_cls(a: &TrainClsArgs, seed: u64, reader: &DatasetReader) -> Result<()> {
    let stage1 = TrainedModel::load(&a.stage1)?;
    let data = reader.load_split(&a.data.join(Split::Train.name()), Modality::RadarOnly)?;
    let mon = monitor(reader, &a.loss.monitor)?;
    let mut cfg = loss_config(
        budget_config(TrainConfig::classifier(seed), &a.budget),
        &a.loss,
    );
    cfg.freeze_encoder = !a.finetune;
    let model = train_classifier(
        &data,
        &stage1.params,
        &stage1.spec,
        &cfg,
        mon.as_ref(),
        &mut log_epoch,
    )?;
    save_run(
        &model,
        &a.out,
        "train-cls",
        seed,
        json!({ "data": a.data, "stage1": a.stage1, "out": a.out, "monitor": a.loss.monitor }),
    )
}

fn train_baseline(a: &TrainBaselineArgs, seed: u64, reader: &DatasetReader) -> Result<()> {
    let data = reader.load_split(&a.data.join(Split::Train.name()), Modality::RadarOnly)?;
    let mon = monitor(reader, &a.loss.monitor)?;
    let mut cfg = loss_config(
        budget_config(TrainConfig::classifier(seed), &a.budget),
        &a.loss,
    );
    cfg.freeze_encoder = false;
    let model =
        train_unimodal_baseline(&data, &spec_for(&data), &cfg, mon.as_ref(), &mut log_epoch)?;
    save_run(
        &model,
        &a.out,
        "train-baseline",
        seed,
        json!({ "data": a.data, "out": a.out, "monitor": a.loss.monitor }),
    )
}

fn eval(a: &EvalArgs, seed: u64, reader: &DatasetReader) -> Result<()> {
    let model = TrainedModel::load(&a.checkpoint)?;
    let digest = checkpoint_digest(&a.checkpoint)?;
    let data = reader.load_split(&a.data, Modality::RadarOnly)?;
    let r = evaluate(&model, &data)?;
    let confusion_path = a
        .confusion_out
        .clone()
        .unwrap_or_else(|| a.out.join("confusion.csv"));
    write_bytes(&confusion_path, r.confusion_csv().as_bytes())?;
    write_bytes(&a.out.join("curves.csv"), r.curves_csv().as_bytes())?;
    eprintln!("accuracy {:.4} ({}/{})", r.accuracy, r.trace(), r.total);
    report(
        &a.out,
        "eval",
        seed,
        json!({
            "checkpoint": a.checkpoint,
            "data": a.data,
            "confusion_out": confusion_path,
            "train": model.config,
            "model": model.spec,
        }),
        json!({
            "accuracy": r.accuracy,
            "total": r.total,
            "class_names": r.class_names,
            "confusion": r.confusion,
            "checkpoint_sha256": digest,
        }),
    )
}

fn compare(a: &CompareArgs, seed: u64) -> Result<()> {
    let runs = a
        .runs
        .iter()
        .map(|(n, p)| Ok((n.clone(), TrainedModel::load(p)?.history)))
        .collect::<Result<Vec<_>>>()?;
    let csv = compare_runs(&runs)?;
    write_bytes(&a.out, csv.as_bytes())?;
    report(
        &parent_dir(&a.out),
        "compare",
        seed,
        json!({ "runs": a.runs, "out": a.out }),
        json!({ "rows": csv.lines().count() - 1 }),
    )
}

fn triangulate(a: &TriangulateArgs, seed: u64) -> Result<()> {
    let rig = read_rig(&a.rig)?;
    let frames = read_keypoints(&a.keypoints)?;
    let out = frames
        .iter()
        .enumerate()
        .map(|(i, views)| {
            triangulate_frame(&rig, views, a.threshold_px)
                .map_err(|e| Error::Degenerate(format!("frame {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    write_skeletons(&a.out, &out)?;
    report(
        &parent_dir(&a.out),
        "triangulate",
        seed,
        json!({ "rig": a.rig, "keypoints": a.keypoints, "out": a.out, "threshold_px": a.threshold_px }),
        json!({ "frames": out.len(), "persons": out.iter().map(Vec::len).sum::<usize>() }),
    )
}

/// Fresh parameters spread by ±0.05 so no branch sits at its symmetric
/// initial point.
fn spread_params(spec: &ModelSpec, seed: u64) -> Result<ParamStore> {
    let mut s = init_params(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for (_, p) in s.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    Ok(s)
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<()> {
    let spec = ModelSpec::default();
    let data_spec = DatasetSpec {
        seed,
        ..DatasetSpec::default()
    };
    let rec = generate_recording(&data_spec, Split::Train, (seed % 5) as usize)?;
    let pre = Preprocessor::new(
        &data_spec.radar,
        &data_spec.mount(Split::Train),
        PipelineOptions::default(),
    )?;
    let r = Recording::from_paired(&rec, &pre, true)?;
    let frame = r.clouds.iter().position(|c| c.valid > spec.k).unwrap_or(0);
    let target = r.skeletons.as_ref().expect("paired")[frame].clone();
    let store = spread_params(&spec, seed)?;

    let ae = finite_diff_check(&store, a.step, a.samples, seed, |s, g| {
        let mut b = Binder::new(s);
        Ok(forward_autoencoder(g, &mut b, &spec, &r.clouds[frame], &target)?.1)
    })?;
    let cls = finite_diff_check(&store, a.step, a.samples, seed.wrapping_add(1), |s, g| {
        let mut b = Binder::new(s);
        let l = forward_full(g, &mut b, &spec, &r.clouds)?;
        cross_entropy_loss(g, l, &[r.label])
    })?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (name, c) in [("autoencoder", &ae), ("classifier", &cls)] {
        println!(
            "{name} max_rel_error={:.3e} coords={}",
            c.max_rel_error, c.coords_checked
        );
        worst = worst.max(c.max_rel_error);
        rows.push(json!({
            "network": name,
            "max_rel_error": c.max_rel_error,
            "coords_checked": c.coords_checked,
        }));
    }
    report(
        &a.out,
        "gradcheck",
        seed,
        json!({ "samples": a.samples, "step": a.step, "tolerance": a.tolerance, "out": a.out }),
        json!({ "networks": rows }),
    )?;
    if worst > a.tolerance {
        return Err(Error::Tolerance(format!(
            "max relative gradient error {worst:.3e} > {:.1e}",
            a.tolerance
        )));
    }
    Ok(())
}
