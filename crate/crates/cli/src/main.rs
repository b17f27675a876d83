//! `entaug` — train, compare, preview and benchmark entropy-driven augmentation.
//!
//! Results go to stdout as JSON; progress goes to stderr. On failure the last
//! stderr line is `error kind=<tag> message=<text>` and the exit code is 2 for
//! configuration errors and 1 for everything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entaug::checkpoint::Checkpoint;
use entaug::config::{Precision, RunConfig};
use entaug::data::Dataset;
use entaug::metrics;
use entaug::trainer::{self, Arm, TrainOptions};
use entaug::transforms::{apply_with_fill, TransformKind};
use entaug::{AugRng, Error, LossConfig, Real, Result};

#[derive(Parser)]
#[command(name = "entaug", version, about = "Entropy-driven adaptive data augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint written by the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many completed epochs.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Train the {CE, CE+regularizer} × {baseline_only, random_magnitude, entaugment} matrix.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds (at least three).
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// Restrict to these arms, e.g. `ce-entaugment,entloss-entaugment`.
        #[arg(long, value_delimiter = ',')]
        arms: Vec<String>,
    },
    /// Write PPM previews of every transform at chosen magnitudes.
    PreviewAugment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        indices: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        magnitudes: Vec<f64>,
        /// Transform names; all fourteen when omitted.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[arg(long, default_value = "preview")]
        out: PathBuf,
    },
    /// Time the augmentation stage for each magnitude source.
    BenchThroughput {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 100)]
        batches: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Flags mirroring the run configuration. Precedence: defaults < `--config`
/// file < `--set` pairs < dedicated flags.
#[derive(Args)]
struct RunArgs {
    /// Flat `key=value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set lambda=0.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset root; defaults to $ENTAUG_DATA_DIR.
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    train_size: Option<String>,
    #[arg(long)]
    test_size: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    nesterov: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    /// `cosine` or `multistep:<m1,m2,...>:<gamma>`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    ent_loss: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// `entropy-minimizing` or `literal`.
    #[arg(long)]
    sign_mode: Option<String>,
    /// `none`, `baseline_only`, `random_magnitude` or `entaugment`.
    #[arg(long)]
    aug: Option<String>,
    /// `cached` or `fresh`.
    #[arg(long)]
    entropy_source: Option<String>,
    #[arg(long)]
    padding: Option<String>,
    #[arg(long)]
    fill: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// `f32` or `f64`.
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    parallel: Option<String>,
    #[arg(long)]
    eval_batch_size: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            cfg.set(k, v)?;
        }
        let flags = [
            ("dataset", &self.dataset),
            ("data_dir", &self.data_dir),
            ("train_size", &self.train_size),
            ("test_size", &self.test_size),
            ("arch", &self.arch),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("nesterov", &self.nesterov),
            ("weight_decay", &self.weight_decay),
            ("schedule", &self.schedule),
            ("ent_loss", &self.ent_loss),
            ("lambda", &self.lambda),
            ("sign_mode", &self.sign_mode),
            ("aug", &self.aug),
            ("entropy_source", &self.entropy_source),
            ("padding", &self.padding),
            ("fill", &self.fill),
            ("seed", &self.seed),
            ("data_seed", &self.data_seed),
            ("output_dir", &self.output_dir),
            ("precision", &self.precision),
            ("parallel", &self.parallel),
            ("eval_batch_size", &self.eval_batch_size),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn progress(r: &metrics::RunRecord) {
    eprintln!(
        "epoch {:>3}  loss {:.4}  ce {:.4}  test_acc {:.4}  mag {:.4}  H {:.4}  {:.1}s",
        r.epoch, r.train_loss, r.train_ce, r.test_accuracy, r.mean_magnitude, r.mean_norm_entropy, r.epoch_wall_seconds
    );
}

fn cmd_train(run: &RunArgs, resume: &Option<PathBuf>, stop_after: Option<usize>) -> Result<()> {
    let cfg = run.resolve()?;
    let resume = resume.as_deref().map(Checkpoint::load).transpose()?;
    let mut cb = progress;
    let summary = trainer::run(&cfg, TrainOptions { resume, stop_after, on_epoch: Some(&mut cb) })?;
    print_json(serde_json::json!({
        "completed_epochs": summary.completed_epochs,
        "final_accuracy": summary.final_accuracy,
        "final_mean_norm_entropy": summary.final_mean_norm_entropy,
        "final_mean_magnitude": summary.final_mean_magnitude,
        "records": summary.records,
    }))
}

fn cmd_compare(run: &RunArgs, seeds: &[u64], names: &[String]) -> Result<()> {
    let cfg = run.resolve()?;
    let ent_loss = if cfg.loss.regularizer_active() { cfg.loss } else { LossConfig::with_ent_loss(cfg.loss.lambda) };
    let mut arms = trainer::standard_arms(ent_loss);
    if !names.is_empty() {
        if let Some(bad) = names.iter().find(|n| !arms.iter().any(|a| &a.name == *n)) {
            let known: Vec<&str> = arms.iter().map(|a| a.name.as_str()).collect();
            return Err(Error::Config(format!("unknown arm {bad:?}; known arms: {}", known.join(", "))));
        }
        arms.retain(|a| names.contains(&a.name));
    }
    let (train_set, test_set) = trainer::load_datasets(&cfg)?;
    let report_progress = |arm: &Arm, seed: u64, r: &trainer::SeedResult| {
        eprintln!(
            "{:<28} seed {seed}: acc {:.4}  ce {:.4}  H {:.4}",
            arm.name, r.final_accuracy, r.final_empirical_ce, r.final_mean_norm_entropy
        );
    };
    let report = match cfg.precision {
        Precision::F32 => trainer::compare::<f32>(&cfg, seeds, &arms, &train_set, &test_set, report_progress)?,
        Precision::F64 => trainer::compare::<f64>(&cfg, seeds, &arms, &train_set, &test_set, report_progress)?,
    };
    print_json(serde_json::to_value(&report)?)
}

fn cmd_preview(run: &RunArgs, split: &str, indices: &[usize], mags: &[f64], kinds: &[String], out: &PathBuf) -> Result<()> {
    let cfg = run.resolve()?;
    let (train_set, test_set) = trainer::load_datasets(&cfg)?;
    let ds = match split {
        "train" => &train_set,
        "test" => &test_set,
        other => return Err(Error::Config(format!("split must be train or test, got {other:?}"))),
    };
    let kinds: Vec<TransformKind> = if kinds.is_empty() {
        TransformKind::ALL.to_vec()
    } else {
        kinds.iter().map(|k| k.parse()).collect::<Result<_>>()?
    };
    if let Some(m) = mags.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::Config(format!("magnitude {m} is outside [0, 1]")));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let mut written = Vec::new();
    for &index in indices {
        let img = ds.images.get(index).ok_or(Error::OutOfRange { index, len: ds.len() })?;
        for &kind in &kinds {
            for &m in mags {
                let mut rng = AugRng::new(cfg.seed, 0, index as u64);
                let aug = apply_with_fill(&kind.spec(), img, m, &mut rng, cfg.fill)?;
                let path = out.join(format!("{split}_{index}_{}_{}.ppm", kind.name(), (m * 1000.0).round() as u32));
                aug.save_ppm(&path)?;
                written.push(path.display().to_string());
            }
        }
    }
    print_json(serde_json::json!({ "written": written }))
}

fn cmd_bench(run: &RunArgs, batches: usize, warmup: usize) -> Result<()> {
    let cfg = run.resolve()?;
    let (train_set, _) = trainer::load_datasets(&cfg)?;
    let report = match cfg.precision {
        Precision::F32 => trainer::bench_throughput::<f32>(&cfg, &train_set, batches, warmup)?,
        Precision::F64 => trainer::bench_throughput::<f64>(&cfg, &train_set, batches, warmup)?,
    };
    print_json(serde_json::to_value(&report)?)
}

fn eval_with<T: Real>(ck: &Checkpoint, test_set: &Dataset, eval_batch: usize) -> Result<serde_json::Value> {
    let input = trainer::input_shape(test_set)?;
    let (_, net) = trainer::network_from_checkpoint::<T>(ck, input, test_set.k)?;
    let eval = metrics::evaluate(&net, test_set, eval_batch)?;
    let dunn = trainer::penultimate_dunn(&net, test_set, eval_batch)?;
    Ok(serde_json::json!({
        "completed_epochs": ck.completed_epochs,
        "test_accuracy": metrics::accuracy(eval.logits.view(), &test_set.labels)?,
        "test_cross_entropy": metrics::mean_cross_entropy(eval.logits.view(), &test_set.labels)?,
        "dunn_index": dunn,
    }))
}

fn cmd_eval(run: &RunArgs, checkpoint: &PathBuf) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = RunConfig::default();
    cfg.apply_kv_text(&ck.config_text)?;
    // Location flags may differ from the training machine.
    let local = run.resolve()?;
    cfg.data_dir = local.data_dir.or(cfg.data_dir);
    cfg.eval_batch_size = local.eval_batch_size;
    let (_, test_set) = trainer::load_datasets(&cfg)?;
    let value = match ck.precision {
        Precision::F32 => eval_with::<f32>(&ck, &test_set, cfg.eval_batch_size)?,
        Precision::F64 => eval_with::<f64>(&ck, &test_set, cfg.eval_batch_size)?,
    };
    print_json(value)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { run, resume, stop_after } => cmd_train(run, resume, *stop_after),
        Command::Compare { run, seeds, arms } => cmd_compare(run, seeds, arms),
        Command::PreviewAugment { run, split, indices, magnitudes, kinds, out } => {
            cmd_preview(run, split, indices, magnitudes, kinds, out)
        }
        Command::BenchThroughput { run, batches, warmup } => cmd_bench(run, *batches, *warmup),
        Command::Eval { run, checkpoint } => cmd_eval(run, checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={}", e.kind(), message);
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
