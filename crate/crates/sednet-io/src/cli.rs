//! The `sednet` command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! abort. Every failure prints one machine-parseable line on stderr:
//! `error: <kind>: <reason>`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sednet_core::metrics::{threshold, EvalConfig};
use sednet_core::model::{Model, ModelConfig};
use sednet_core::objectives::{LossConfig, LossVariant};
use sednet_core::preprocess::{
    apply_phase1, phase2_min_count, phase3_truncate, LabelMap, Phase1Report, PreprocessConfig,
    Volume,
};
use sednet_core::trainer::{split_indices, train, transfer_train, TrainConfig, TrainOutcome};

use crate::error::IoError;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::reports::{epochs_csv, metrics_csv, metrics_json};
use crate::synth::{generate, SynthConfig};
use crate::volume_file::{load_dataset, load_volume, save_dataset};
use crate::weights_file::{load_archive, save_weights};
use crate::{images, metrics_eval};

/// Failures classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: bad flags or configuration.
    Usage(String),
    /// Exit 2: malformed or missing data.
    Data(String),
    /// Exit 3: numerical abort (non-finite loss or gradient).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Single-line `error: <kind>: <reason>` for stderr.
    pub fn stderr_line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Numeric(m) => ("numeric", m),
        };
        format!("error: {kind}: {}", msg.replace('\n', " "))
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Core(core) => core.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<sednet_core::Error> for CliError {
    fn from(e: sednet_core::Error) -> Self {
        use sednet_core::Error as E;
        match e {
            E::Config(_) => CliError::Usage(e.to_string()),
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "sednet",
    version,
    about = "Shallow encoder-decoder tumor segmentation: synthesize data, preprocess, train, and evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset of nested elliptical tumors.
    Synth(SynthArgs),
    /// Filter and resize a dataset (phase 1) and equalize slice counts
    /// (phases 2-3).
    Preprocess(PreprocessArgs),
    /// Train from random initialization.
    Train(TrainArgs),
    /// Retrain a saved archive with every non-head layer frozen.
    Transfer(TransferArgs),
    /// Compute Dice and Hausdorff metrics on a dataset split.
    Eval(EvalArgs),
    /// Emit per-class mask images and an RGB overlay for one volume.
    Predict(PredictArgs),
    /// Print the architecture table and total parameter count.
    Summary(SummaryArgs),
    /// Train each loss variant briefly and tabulate test Dice per class.
    LossesCompare(LossesCompareArgs),
}

/// Optional JSON config file; flags override its values, which override the
/// built-in defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    size: Option<usize>,
    base_filters: Option<usize>,
    seed: Option<u64>,
    lr: Option<f64>,
    epochs: Option<usize>,
    loss: Option<String>,
    wa: Option<f64>,
    wb: Option<f64>,
    batch_slices: Option<usize>,
    threshold_t: Option<usize>,
    samples: Option<usize>,
    slices: Option<usize>,
    empty_rate: Option<f64>,
}

fn read_file_config(path: &Option<PathBuf>) -> CliResult<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::Usage(format!("config file {}: {e}", p.display())))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Usage(format!("config file {}: {e}", p.display())))
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Seed for every random choice in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file (defaults < file < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Deterministic execution. The engine is single-threaded and always
    /// deterministic; the flag is accepted for interface stability.
    #[arg(long, default_value_t = true)]
    #[allow(dead_code)]
    deterministic: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of samples (patients).
    #[arg(long)]
    samples: Option<usize>,
    /// Slices per sample.
    #[arg(long)]
    slices: Option<usize>,
    /// Square slice extent in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Probability of an empty (tumor-free) slice.
    #[arg(long)]
    empty_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input dataset directory (.sedvol files).
    #[arg(long)]
    data: PathBuf,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Area threshold T: slices with cleaned tumor area <= T are dropped.
    #[arg(long = "threshold-T")]
    threshold_t: Option<usize>,
    /// Output extent for both images and masks.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    open_kernel: Option<usize>,
    #[arg(long)]
    close_kernel: Option<usize>,
    #[arg(long)]
    close_repeats: Option<usize>,
    /// Leave per-sample slice counts unequalized (skip phases 2-3).
    #[arg(long)]
    skip_phase23: bool,
    /// Truncate to a centered window instead of the leading slices.
    #[arg(long)]
    centered: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    /// Loss variant: bce | bced | bcesd | wbcesd-e | wbcesd-p.
    #[arg(long)]
    loss: Option<String>,
    /// BCE weight for the weighted variants.
    #[arg(long)]
    wa: Option<f64>,
    /// Soft-dice weight for the weighted variants.
    #[arg(long)]
    wb: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Slices per batch when per-sample batching is off.
    #[arg(long)]
    batch_slices: Option<usize>,
    /// Batch fixed slice counts across samples instead of one sample per
    /// batch.
    #[arg(long)]
    fixed_batches: bool,
    /// Number of filters of the first encoder block (doubling ladder).
    #[arg(long)]
    base_filters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Pretrained `.sedw` archive to start from.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which split to evaluate: train | val | test | all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Binarization threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Pixel spacing in millimeters.
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    weights: PathBuf,
    /// A single `.sedvol` volume.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

#[derive(Args, Debug)]
pub struct SummaryArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Describe the architecture stored in a weight archive instead of a
    /// fresh config.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    base_filters: Option<usize>,
    /// Input extent (square).
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LossesCompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Train(args) => cmd_train(args),
        Command::Transfer(args) => cmd_transfer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Summary(args) => cmd_summary(args),
        Command::LossesCompare(args) => cmd_losses_compare(args),
    }
}

fn ensure_fresh_run_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    if dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::Usage(format!(
            "{} already contains {MANIFEST_FILE}; use a fresh output directory",
            dir.display()
        )));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let file = read_file_config(&args.common.config)?;
    let cfg = SynthConfig {
        n_samples: pick(args.samples, file.samples, 10),
        slices_per_sample: pick(args.slices, file.slices, 20),
        size: pick(args.size, file.size, 64),
        empty_rate: pick(args.empty_rate, file.empty_rate, 0.25),
        seed: pick(args.common.seed, file.seed, 0),
    };
    if !(0.0..1.0).contains(&cfg.empty_rate) {
        return Err(CliError::Usage(format!(
            "empty rate must lie in [0,1), got {}",
            cfg.empty_rate
        )));
    }
    ensure_fresh_run_dir(&args.out)?;

    let volumes = generate(&cfg);
    let labels = LabelMap::default();
    let paths = save_dataset(&args.out, &volumes, &labels)?;

    let mut manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "samples": cfg.n_samples,
            "slices": cfg.slices_per_sample,
            "size": cfg.size,
            "empty_rate": cfg.empty_rate,
            "seed": cfg.seed,
        }),
        cfg.seed,
    );
    for p in &paths {
        manifest.add_artifact(p, &args.out);
    }
    manifest.finish(&args.out)?;
    println!(
        "wrote {} samples x {} slices at {}x{} to {}",
        cfg.n_samples,
        cfg.slices_per_sample,
        cfg.size,
        cfg.size,
        args.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct PreprocessManifest {
    least_num: Option<usize>,
    samples: Vec<SamplePreprocess>,
}

#[derive(serde::Serialize)]
struct SamplePreprocess {
    id: String,
    kept: Vec<usize>,
    areas: Vec<usize>,
}

fn cmd_preprocess(args: PreprocessArgs) -> CliResult<()> {
    let file = read_file_config(&args.common.config)?;
    let cfg = PreprocessConfig {
        target_size: pick(args.size, file.size, 128),
        open_kernel: args.open_kernel.unwrap_or(3),
        close_kernel: args.close_kernel.unwrap_or(3),
        close_repeats: args.close_repeats.unwrap_or(2),
        area_threshold: pick(args.threshold_t, file.threshold_t, 64),
        apply_phase2_3: !args.skip_phase23,
        centered_truncation: args.centered,
    };
    cfg.validate()?;
    ensure_fresh_run_dir(&args.out)?;

    let (volumes, labels) = load_dataset(&args.data)?;
    let mut filtered = Vec::with_capacity(volumes.len());
    let mut reports: Vec<(String, Phase1Report)> = Vec::with_capacity(volumes.len());
    for v in &volumes {
        let (out, report) = apply_phase1(v, &cfg)?;
        reports.push((v.id.clone(), report));
        filtered.push(out);
    }

    let least_num = if cfg.apply_phase2_3 {
        let least = phase2_min_count(&filtered)?;
        filtered = filtered
            .iter()
            .map(|v| phase3_truncate(v, least, cfg.centered_truncation))
            .collect::<Result<Vec<_>, _>>()?;
        Some(least)
    } else {
        // Zero-kept samples are flagged and dropped; they cannot be stored.
        for (id, r) in &reports {
            if r.kept.is_empty() {
                eprintln!("warning: sample {id} lost every slice in phase 1");
            }
        }
        filtered.retain(|v| v.slice_count() > 0);
        if filtered.is_empty() {
            return Err(CliError::Data("every sample lost all slices".into()));
        }
        None
    };

    let paths = save_dataset(&args.out, &filtered, &labels)?;
    let pp = PreprocessManifest {
        least_num,
        samples: reports
            .into_iter()
            .map(|(id, r)| SamplePreprocess {
                id,
                kept: r.kept,
                areas: r.areas,
            })
            .collect(),
    };
    let pp_path = args.out.join("preprocess.json");
    std::fs::write(
        &pp_path,
        serde_json::to_string_pretty(&pp).map_err(IoError::from)?,
    )
    .map_err(IoError::from)?;

    let mut manifest = RunManifest::new(
        "preprocess",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "target_size": cfg.target_size,
            "open_kernel": cfg.open_kernel,
            "close_kernel": cfg.close_kernel,
            "close_repeats": cfg.close_repeats,
            "threshold_t": cfg.area_threshold,
            "apply_phase2_3": cfg.apply_phase2_3,
            "centered": cfg.centered_truncation,
        }),
        0,
    );
    for p in paths.iter().chain([&pp_path]) {
        manifest.add_artifact(p, &args.out);
    }
    manifest.finish(&args.out)?;
    match least_num {
        Some(n) => println!(
            "kept {} samples, equalized to {n} slices each",
            filtered.len()
        ),
        None => println!("kept {} samples (phases 2-3 skipped)", filtered.len()),
    }
    Ok(())
}

/// Model and train configuration resolved from flags, file, and dataset.
struct ResolvedTrain {
    model: ModelConfig,
    train: TrainConfig,
}

fn resolve_train(
    common: &CommonArgs,
    flags: &TrainFlags,
    volumes: &[Volume],
    labels: LabelMap,
    default_epochs: usize,
) -> CliResult<ResolvedTrain> {
    let file = read_file_config(&common.config)?;
    let seed = pick(common.seed, file.seed, 0);

    let first = volumes
        .iter()
        .find(|v| v.slice_count() > 0)
        .ok_or_else(|| CliError::Data("dataset has no slices".into()))?;
    let (h, w) = (first.images[0].height, first.images[0].width);

    let base = pick(flags.base_filters, file.base_filters, 32);
    let model = ModelConfig {
        input_height: h,
        input_width: w,
        seed,
        ..ModelConfig::with_base_filters(base)
    };
    model.validate()?;

    let variant_name = flags
        .loss
        .clone()
        .or(file.loss.clone())
        .unwrap_or_else(|| "wbcesd-p".into());
    let variant = LossVariant::from_str(&variant_name)?;
    let mut loss = LossConfig::new(variant);
    if let Some(wa) = flags.wa.or(file.wa) {
        loss.w_a = wa;
    }
    if let Some(wb) = flags.wb.or(file.wb) {
        loss.w_b = wb;
    }
    loss.validate()?;

    let train = TrainConfig {
        initial_lr: pick(flags.lr, file.lr, 3e-4),
        epochs: pick(flags.epochs, file.epochs, default_epochs),
        batch_slices: pick(flags.batch_slices, file.batch_slices, 23),
        per_sample_batches: !flags.fixed_batches,
        loss,
        labels,
        seed,
        ..TrainConfig::default()
    };
    train.validate()?;
    Ok(ResolvedTrain { model, train })
}

fn split_volumes(
    volumes: Vec<Volume>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> CliResult<(Vec<Volume>, Vec<Volume>, Vec<Volume>)> {
    let (ti, vi, tei) = split_indices(volumes.len(), ratios, seed)?;
    let mut slots: Vec<Option<Volume>> = volumes.into_iter().map(Some).collect();
    let take = |slots: &mut Vec<Option<Volume>>, idx: &[usize]| {
        idx.iter().map(|&i| slots[i].take().unwrap()).collect()
    };
    let train = take(&mut slots, &ti);
    let val = take(&mut slots, &vi);
    let test = take(&mut slots, &tei);
    Ok((train, val, test))
}

fn write_train_outputs(
    out: &Path,
    command: &str,
    resolved: &ResolvedTrain,
    model: &Model<f32>,
    outcome: &TrainOutcome,
    extra_config: serde_json::Value,
) -> CliResult<()> {
    let epochs_path = out.join("epochs.csv");
    std::fs::write(&epochs_path, epochs_csv(&outcome.reports)).map_err(IoError::from)?;

    let final_path = out.join("final.sedw");
    save_weights(&final_path, model)?;

    // Best checkpoint by validation loss; fall back to the final state when
    // the run aborted before any epoch finished.
    let best_path = out.join("best.sedw");
    let mut best_model = Model::build(resolved.model.clone())?;
    if outcome.best.val_loss.is_finite() {
        outcome.best.restore(&mut best_model)?;
    } else {
        best_model = model.clone();
    }
    save_weights(&best_path, &best_model)?;

    let config_path = out.join("config.json");
    let config = serde_json::json!({
        "model": resolved.model,
        "train": resolved.train,
        "extra": extra_config,
    });
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).map_err(IoError::from)?,
    )
    .map_err(IoError::from)?;

    let mut manifest = RunManifest::new(command, config, resolved.train.seed);
    for p in [&epochs_path, &final_path, &best_path, &config_path] {
        manifest.add_artifact(p, out);
    }
    manifest.finish(out)?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    ensure_fresh_run_dir(&args.out)?;
    let (volumes, labels) = load_dataset(&args.data)?;
    let resolved = resolve_train(&args.common, &args.flags, &volumes, labels, 50)?;
    let (train_set, val_set, _test) =
        split_volumes(volumes, resolved.train.split, resolved.train.seed)?;

    let mut model = Model::build(resolved.model.clone())?;
    let outcome = train(&mut model, &train_set, &val_set, &resolved.train)?;
    write_train_outputs(
        &args.out,
        "train",
        &resolved,
        &model,
        &outcome,
        serde_json::json!({"data": args.data.display().to_string()}),
    )?;

    if let Some(reason) = &outcome.aborted {
        return Err(CliError::Numeric(format!(
            "training aborted ({reason}); best checkpoint retained"
        )));
    }
    let last = outcome.reports.last().expect("at least one epoch");
    println!(
        "trained {} epochs; final val loss {:.6}, best epoch {}",
        outcome.reports.len(),
        last.val_loss,
        outcome.best.epoch
    );
    Ok(())
}

fn cmd_transfer(args: TransferArgs) -> CliResult<()> {
    ensure_fresh_run_dir(&args.out)?;
    let archive = load_archive(&args.weights)?;
    let (volumes, labels) = load_dataset(&args.data)?;

    // Transfer keeps the archived architecture; only training knobs resolve.
    if args.flags.base_filters.is_some() {
        return Err(CliError::Usage(
            "--base-filters conflicts with --weights; the archive fixes the architecture".into(),
        ));
    }
    let mut resolved = resolve_train(&args.common, &args.flags, &volumes, labels, 30)?;
    resolved.model = archive.manifest.config.clone();

    let (train_set, val_set, _test) =
        split_volumes(volumes, resolved.train.split, resolved.train.seed)?;

    let mut model = archive.instantiate()?;
    let outcome = transfer_train(&mut model, &train_set, &val_set, &resolved.train)?;
    write_train_outputs(
        &args.out,
        "transfer",
        &resolved,
        &model,
        &outcome,
        serde_json::json!({
            "data": args.data.display().to_string(),
            "weights": args.weights.display().to_string(),
            "trainable_params": model.trainable_param_count(),
        }),
    )?;

    if let Some(reason) = &outcome.aborted {
        return Err(CliError::Numeric(format!(
            "transfer aborted ({reason}); best checkpoint retained"
        )));
    }
    println!(
        "transfer-trained {} epochs with {} trainable parameters",
        outcome.reports.len(),
        model.trainable_param_count()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    ensure_fresh_run_dir(&args.out)?;
    let archive = load_archive(&args.weights)?;
    let model = archive.instantiate()?;
    let (volumes, labels) = load_dataset(&args.data)?;
    let seed = args.common.seed.unwrap_or(0);

    let chosen: Vec<Volume> = if args.split == "all" {
        volumes
    } else {
        let (train_set, val_set, test_set) = split_volumes(volumes, (0.8, 0.1, 0.1), seed)?;
        match args.split.as_str() {
            "train" => train_set,
            "val" => val_set,
            "test" => test_set,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown split {other:?}; expected train, val, test, or all"
                )))
            }
        }
    };

    let eval_cfg = EvalConfig {
        tau: args.tau,
        spacing: args.spacing,
        ..EvalConfig::default()
    };
    let report = metrics_eval(&model, &chosen, &labels, &eval_cfg)?;

    let csv_path = args.out.join("metrics.csv");
    std::fs::write(&csv_path, metrics_csv(&args.split, &report)).map_err(IoError::from)?;
    let json_path = args.out.join("metrics.json");
    std::fs::write(
        &json_path,
        metrics_json(&args.split, &report).map_err(IoError::from)?,
    )
    .map_err(IoError::from)?;

    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({
            "weights": args.weights.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "tau": args.tau,
            "spacing": args.spacing,
            "seed": seed,
        }),
        seed,
    );
    manifest.add_artifact(&csv_path, &args.out);
    manifest.add_artifact(&json_path, &args.out);
    manifest.finish(&args.out)?;

    for c in &report.classes {
        let hd = c
            .hausdorff
            .map_or("undefined".to_string(), |v| format!("{v:.4}"));
        println!("{}: dice {:.4}, hausdorff {hd}", c.class, c.dice);
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    ensure_fresh_run_dir(&args.out)?;
    let archive = load_archive(&args.weights)?;
    let model = archive.instantiate()?;
    let (volume, labels) = load_volume(&args.input)?;

    let probs = sednet_core::metrics::forward_volume(&model, &volume, 8)?;
    let masks = threshold(&probs, args.tau)?;

    let mut manifest = RunManifest::new(
        "predict",
        serde_json::json!({
            "weights": args.weights.display().to_string(),
            "input": args.input.display().to_string(),
            "tau": args.tau,
        }),
        0,
    );
    let class_names = labels.class_names();
    for (si, per_class) in masks.iter().enumerate() {
        for (c, mask) in per_class.iter().enumerate() {
            let path = args
                .out
                .join(format!("{}_s{si:03}_{}.pgm", volume.id, class_names[c]));
            images::write_pgm(&path, &images::mask_to_gray(mask))?;
            manifest.add_artifact(&path, &args.out);
        }
        let base = sednet_core::preprocess::normalize01(&volume.images[si]);
        let rgb = images::overlay_rgb(&base, per_class);
        let path = args.out.join(format!("{}_s{si:03}_overlay.ppm", volume.id));
        images::write_ppm(&path, base.width, base.height, &rgb)?;
        manifest.add_artifact(&path, &args.out);
    }
    manifest.finish(&args.out)?;
    println!(
        "wrote {} slices x {} classes for {}",
        masks.len(),
        class_names.len(),
        volume.id
    );
    Ok(())
}

fn cmd_summary(args: SummaryArgs) -> CliResult<()> {
    let file = read_file_config(&args.common.config)?;
    let config = match &args.weights {
        Some(path) => load_archive(path)?.manifest.config,
        None => {
            let base = pick(args.base_filters, file.base_filters, 32);
            let size = pick(args.size, file.size, 128);
            let seed = pick(args.common.seed, file.seed, 0);
            ModelConfig {
                input_height: size,
                input_width: size,
                seed,
                ..ModelConfig::with_base_filters(base)
            }
        }
    };
    let model = Model::<f32>::build(config)?;
    println!("{}", model.descriptor());
    Ok(())
}

fn cmd_losses_compare(args: LossesCompareArgs) -> CliResult<()> {
    ensure_fresh_run_dir(&args.out)?;
    let (volumes, labels) = load_dataset(&args.data)?;
    if args.flags.loss.is_some() {
        return Err(CliError::Usage(
            "--loss conflicts with losses-compare; every variant is trained".into(),
        ));
    }
    let resolved = resolve_train(&args.common, &args.flags, &volumes, labels, 6)?;
    let (train_set, val_set, test_set) =
        split_volumes(volumes, resolved.train.split, resolved.train.seed)?;

    let mut csv = String::from("loss,dice_ntc,dice_ed,dice_et\n");
    for variant in LossVariant::ALL {
        let mut train_cfg = resolved.train.clone();
        train_cfg.loss = LossConfig::new(variant);
        let mut model = Model::build(resolved.model.clone())?;
        let outcome = train(&mut model, &train_set, &val_set, &train_cfg)?;
        if let Some(reason) = outcome.aborted {
            return Err(CliError::Numeric(format!("{variant}: {reason}")));
        }
        let mut best = Model::build(resolved.model.clone())?;
        outcome.best.restore(&mut best)?;
        let report = metrics_eval(&best, &test_set, &train_cfg.labels, &EvalConfig::default())?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            variant.name(),
            report.classes[0].dice,
            report.classes[1].dice,
            report.classes[2].dice
        ));
        println!(
            "{}: test dice {:.4} {:.4} {:.4}",
            variant.name(),
            report.classes[0].dice,
            report.classes[1].dice,
            report.classes[2].dice
        );
    }

    let csv_path = args.out.join("losses.csv");
    std::fs::write(&csv_path, &csv).map_err(IoError::from)?;
    let mut manifest = RunManifest::new(
        "losses-compare",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "epochs": resolved.train.epochs,
            "lr": resolved.train.initial_lr,
            "seed": resolved.train.seed,
        }),
        resolved.train.seed,
    );
    manifest.add_artifact(&csv_path, &args.out);
    manifest.finish(&args.out)?;
    Ok(())
}
