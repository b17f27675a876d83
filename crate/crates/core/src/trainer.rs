//! The training loop, multi-seed comparisons and augmentation throughput.
//!
//! Per batch: augment → normalize → forward (train mode) → per-sample loss and
//! logit gradient in `f64` → backward → SGD step → write each sample's
//! softmax into the entropy cache. The cache therefore always holds the
//! prediction from the last time a sample was seen, and the augmentation
//! policy never evaluates the model.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{AugMode, DatasetId, Precision, RunConfig};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{self, Columns, ExportFormat, Linkage, RunRecord};
use crate::model::{InputShape, Mode, Network, Sgd};
use crate::numcore::{log_sum_exp, softmax, total_loss_and_grad, LogitVector, LossConfig};
use crate::policy::{
    augment_batch, augment_batch_random_magnitude, baseline_batch, init_cache, AugmentOptions, BatchItem,
    EntropyCache, EntropySource, FreshModel,
};
use crate::rng::{AugRng, Stream};
use crate::scalar::Real;

/// Default synthetic split sizes when no size is configured.
pub const SYNTH_TRAIN: usize = 10_000;
pub const SYNTH_TEST: usize = 2_000;

/// Cap on test samples used for the separation index, whose cost is
/// quadratic. Desk-scale test sets fit under it whole.
pub const DUNN_SAMPLES: usize = 10_000;

/// Loads the configured dataset and applies the size limits.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let root = cfg.resolved_data_dir();
    let pick = |sub: &str| -> PathBuf {
        let nested = root.join(sub);
        if nested.is_dir() {
            nested
        } else {
            root.clone()
        }
    };
    let (train, test) = match cfg.dataset {
        DatasetId::Mnist => data::load_mnist(&pick("mnist"))?,
        DatasetId::Cifar10 => data::load_cifar10(&pick("cifar-10-batches-bin"))?,
        DatasetId::SynthDigits => {
            return data::synth_digits(
                cfg.train_size.unwrap_or(SYNTH_TRAIN),
                cfg.test_size.unwrap_or(SYNTH_TEST),
                cfg.data_seed,
            )
        }
    };
    let limit = |ds: Dataset, n: Option<usize>| match n {
        Some(n) if n < ds.len() => data::subset(&ds, n, cfg.data_seed),
        _ => Ok(ds),
    };
    let train = limit(train, cfg.train_size)?;
    let test = limit(test, cfg.test_size)?.with_stats(train.mean.clone(), train.std.clone());
    Ok((train, test))
}

pub fn input_shape(ds: &Dataset) -> Result<InputShape> {
    let (channels, height, width) =
        ds.image_shape().ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
    Ok(InputShape { channels, height, width })
}

/// Session controls that are not part of the run's identity.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Continue from a checkpoint of the same configuration.
    pub resume: Option<Checkpoint>,
    /// Stop once this many epochs are complete (simulates an interruption).
    pub stop_after: Option<usize>,
    /// Called after every epoch.
    pub on_epoch: Option<&'a mut dyn FnMut(&RunRecord)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// How many times each training sample went through a training step.
    pub touches: Vec<u64>,
    /// Model forward calls made by the augmentation policy itself.
    pub policy_forward_calls: u64,
    /// Batches processed in this session.
    pub batches: u64,
}

pub struct TrainOutcome<T: Real> {
    pub net: Network<T>,
    pub optimizer: Sgd<T>,
    pub cache: EntropyCache,
    pub records: Vec<RunRecord>,
    pub stats: TrainStats,
    pub completed_epochs: usize,
}

impl<T: Real> TrainOutcome<T> {
    pub fn checkpoint(&self, cfg: &RunConfig) -> Checkpoint {
        make_checkpoint(cfg, &self.net, &self.optimizer, &self.cache, &self.records, self.completed_epochs)
    }
}

fn make_checkpoint<T: Real>(
    cfg: &RunConfig,
    net: &Network<T>,
    optimizer: &Sgd<T>,
    cache: &EntropyCache,
    records: &[RunRecord],
    completed_epochs: usize,
) -> Checkpoint {
    Checkpoint {
        config_text: identity_text(cfg),
        precision: precision_of::<T>(),
        completed_epochs,
        params: net.params_flat().iter().map(|v| v.as_f64()).collect(),
        velocity: optimizer.velocity_flat().iter().map(|v| v.as_f64()).collect(),
        cache: cache.states().to_vec(),
        // Wall times are left out so identical runs write identical checkpoints.
        records: records.iter().map(|r| RunRecord { epoch_wall_seconds: 0.0, ..r.clone() }).collect(),
    }
}

/// Keys that may differ between a run and its resumption. They are left out
/// of the checkpoint's config echo so reruns in other directories produce
/// byte-identical checkpoints.
const SESSION_KEYS: [&str; 5] = ["output_dir", "parallel", "data_dir", "eval_batch_size", "precision"];

fn identity_text(cfg: &RunConfig) -> String {
    identity_of(&cfg.to_kv())
}

fn identity_of(kv: &str) -> String {
    kv.lines()
        .filter(|l| !SESSION_KEYS.iter().any(|k| l.starts_with(&format!("{k}="))))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Element type tag for a scalar, used to check checkpoint compatibility.
fn precision_of<T: Real>() -> Precision {
    if std::mem::size_of::<T>() == 4 {
        Precision::F32
    } else {
        Precision::F64
    }
}

fn augment_images<T: Real>(
    cfg: &RunConfig,
    items: &[BatchItem<'_>],
    cache: &EntropyCache,
    fresh: &FreshModel<'_, T>,
    epoch: usize,
    opts: &AugmentOptions,
) -> Result<Vec<Image>> {
    Ok(match cfg.aug {
        AugMode::None => items.iter().map(|i| i.image.clone()).collect(),
        AugMode::BaselineOnly => baseline_batch(items, cfg.seed, epoch, opts),
        AugMode::RandomMagnitude => augment_batch_random_magnitude(items, cfg.seed, epoch, opts)?
            .into_iter()
            .map(|a| a.image)
            .collect(),
        AugMode::EntAugment => augment_batch(items, cache, cfg.entropy_source, Some(fresh), cfg.seed, epoch, opts)?
            .into_iter()
            .map(|a| a.image)
            .collect(),
    })
}

/// Trains on the given splits. The test split supplies per-epoch accuracy.
///
/// With `output_dir` set, `checkpoint.ckpt` is rewritten after every epoch,
/// and `final.ckpt`, `metrics.csv` (no timing column, so reruns compare
/// byte-for-byte) and `metrics.json` (all columns) are written at the end.
pub fn train<T: Real>(
    cfg: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    options: TrainOptions<'_>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidInput("training and test sets must be non-empty".into()));
    }
    let TrainOptions { resume, stop_after, mut on_epoch } = options;
    let input = input_shape(train_set)?;
    let mut net = Network::<T>::from_architecture(cfg.arch, input, train_set.k, cfg.seed)?;
    let mut optimizer = Sgd::new(cfg.optimizer.clone(), &net);
    let mut cache = init_cache(train_set.len())?;
    let mut records = Vec::new();
    let mut start_epoch = 0;
    if let Some(ck) = resume {
        if identity_of(&ck.config_text) != identity_text(cfg) {
            return Err(Error::Checkpoint("checkpoint was written by a different configuration".into()));
        }
        if ck.precision != precision_of::<T>() {
            return Err(Error::Checkpoint("checkpoint precision does not match".into()));
        }
        net.set_params_flat(&ck.params.iter().map(|&v| T::of(v)).collect::<Vec<_>>())
            .map_err(|e| Error::Checkpoint(format!("weights: {e}")))?;
        optimizer
            .set_velocity_flat(&ck.velocity.iter().map(|&v| T::of(v)).collect::<Vec<_>>())
            .map_err(|e| Error::Checkpoint(format!("velocity: {e}")))?;
        if ck.cache.len() != train_set.len() {
            return Err(Error::Checkpoint("cache size does not match the training set".into()));
        }
        cache = EntropyCache::from_states(ck.cache)?;
        records = ck.records;
        start_epoch = ck.completed_epochs;
    }
    let end_epoch = stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let opts = AugmentOptions { baseline: true, padding: cfg.padding, fill: cfg.fill, parallel: cfg.parallel };
    let n = train_set.len();
    let mut stats = TrainStats { touches: vec![0; n], ..TrainStats::default() };
    let mut outcome_epochs = start_epoch;

    for epoch in start_epoch..end_epoch {
        let started = Instant::now();
        let mean_norm_entropy = cache.mean_norm_entropy();
        let mean_magnitude = cache.mean_magnitude();
        let mut order: Vec<usize> = (0..n).collect();
        AugRng::for_stream(Stream::Shuffle, cfg.seed, epoch as u64, 0).shuffle(&mut order);
        let (mut loss_sum, mut ce_sum, mut batches) = (0.0, 0.0, 0usize);

        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&i| BatchItem { image: &train_set.images[i], label: train_set.labels[i], sample_index: i })
                .collect();
            let before = net.forward_calls();
            let fresh = FreshModel { net: &net, mean: &train_set.mean, std: &train_set.std };
            let images = augment_images(cfg, &items, &cache, &fresh, epoch, &opts)?;
            stats.policy_forward_calls += net.forward_calls() - before;

            let refs: Vec<&Image> = images.iter().collect();
            let x = data::normalize_batch::<T>(&refs, &train_set.mean, &train_set.std)?;
            let trace = net.forward(&x, Mode::Train)?;
            let b = chunk.len() as f64;
            let mut loss_grads = Array2::<T>::zeros(trace.logits.dim());
            let (mut batch_loss, mut batch_ce) = (0.0, 0.0);
            for (r, (row, item)) in trace.logits.outer_iter().zip(&items).enumerate() {
                let logits = LogitVector::new(row.iter().map(|v| v.as_f64()).collect())?;
                let (loss, grad) = total_loss_and_grad(&logits, item.label, &cfg.loss)?;
                batch_loss += loss;
                batch_ce += log_sum_exp(logits.as_slice()) - logits.as_slice()[item.label];
                for (dst, g) in loss_grads.row_mut(r).iter_mut().zip(grad) {
                    *dst = T::of(g / b);
                }
                cache.update(item.sample_index, &softmax(&logits), epoch)?;
                stats.touches[item.sample_index] += 1;
            }
            let grads = net.backward(&trace, &loss_grads)?;
            optimizer.step(&mut net, &grads, epoch)?;
            loss_sum += batch_loss / b;
            ce_sum += batch_ce / b;
            batches += 1;
            stats.batches += 1;
        }

        let eval = metrics::evaluate(&net, test_set, cfg.eval_batch_size)?;
        let record = RunRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_ce: ce_sum / batches as f64,
            test_accuracy: metrics::accuracy(eval.logits.view(), &test_set.labels)?,
            mean_norm_entropy,
            mean_magnitude,
            epoch_wall_seconds: started.elapsed().as_secs_f64(),
        };
        if !record.train_loss.is_finite() {
            return Err(Error::Undefined(format!("training loss diverged in epoch {epoch}")));
        }
        if let Some(cb) = on_epoch.as_mut() {
            cb(&record);
        }
        records.push(record);
        outcome_epochs = epoch + 1;
        if let Some(dir) = &cfg.output_dir {
            make_checkpoint(cfg, &net, &optimizer, &cache, &records, outcome_epochs).save(&dir.join("checkpoint.ckpt"))?;
        }
    }

    let outcome = TrainOutcome { net, optimizer, cache, records, stats, completed_epochs: outcome_epochs };
    if let Some(dir) = &cfg.output_dir {
        metrics::export_with(&outcome.records, &dir.join("metrics.csv"), ExportFormat::Csv, Columns::Reproducible)?;
        metrics::export(&outcome.records, &dir.join("metrics.json"), ExportFormat::Json)?;
        if outcome.completed_epochs == cfg.epochs {
            outcome.checkpoint(cfg).save(&dir.join("final.ckpt"))?;
        }
    }
    Ok(outcome)
}

/// Rebuilds the network stored in a checkpoint.
pub fn network_from_checkpoint<T: Real>(ck: &Checkpoint, input: InputShape, k: usize) -> Result<(RunConfig, Network<T>)> {
    let mut cfg = RunConfig::default();
    cfg.apply_kv_text(&ck.config_text)?;
    let mut net = Network::<T>::zeros(input, &cfg.arch.layers(input, k), k)?;
    net.set_params_flat(&ck.params.iter().map(|&v| T::of(v)).collect::<Vec<_>>())
        .map_err(|e| Error::Checkpoint(format!("weights: {e}")))?;
    Ok((cfg, net))
}

/// Precision-erased result of [`run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: Vec<RunRecord>,
    pub completed_epochs: usize,
    pub final_accuracy: f64,
    pub final_mean_norm_entropy: f64,
    pub final_mean_magnitude: f64,
    pub stats: TrainStats,
}

fn summarize<T: Real>(o: &TrainOutcome<T>) -> RunSummary {
    RunSummary {
        records: o.records.clone(),
        completed_epochs: o.completed_epochs,
        final_accuracy: o.records.last().map_or(0.0, |r| r.test_accuracy),
        final_mean_norm_entropy: o.cache.mean_norm_entropy(),
        final_mean_magnitude: o.cache.mean_magnitude(),
        stats: o.stats.clone(),
    }
}

/// Loads data and trains at the configured precision.
pub fn run(cfg: &RunConfig, options: TrainOptions<'_>) -> Result<RunSummary> {
    cfg.validate()?;
    let (train_set, test_set) = load_datasets(cfg)?;
    match cfg.precision {
        Precision::F32 => train::<f32>(cfg, &train_set, &test_set, options).map(|o| summarize(&o)),
        Precision::F64 => train::<f64>(cfg, &train_set, &test_set, options).map(|o| summarize(&o)),
    }
}

/// One cell of the comparison matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub loss: LossConfig,
    pub aug: AugMode,
}

impl Arm {
    pub fn new(loss: LossConfig, aug: AugMode) -> Self {
        let prefix = if loss.regularizer_active() { "entloss" } else { "ce" };
        Self { name: format!("{prefix}-{aug}"), loss, aug }
    }
}

/// `{CE, CE + regularizer} × {baseline_only, random_magnitude, entaugment}`.
pub fn standard_arms(ent_loss: LossConfig) -> Vec<Arm> {
    let mut arms = Vec::new();
    for loss in [LossConfig::cross_entropy_only(), ent_loss] {
        for aug in [AugMode::BaselineOnly, AugMode::RandomMagnitude, AugMode::EntAugment] {
            arms.push(Arm::new(loss, aug));
        }
    }
    arms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_accuracy: f64,
    /// Mean cross-entropy over the unaugmented training set after training.
    pub final_empirical_ce: f64,
    /// Mean cached normalized entropy after the last epoch.
    pub final_mean_norm_entropy: f64,
    pub final_mean_magnitude: f64,
    /// Separation of penultimate test features; `None` when undefined.
    pub dunn_index: Option<f64>,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { median: f64::NAN, mean: f64::NAN, std: f64::NAN };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { median, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub runs: Vec<SeedResult>,
    pub accuracy: Summary,
    pub empirical_ce: Summary,
    pub mean_norm_entropy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub arms: Vec<ArmReport>,
}

impl ComparisonReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm.name == name)
    }
}

/// Single-linkage separation index of penultimate features over the first
/// [`DUNN_SAMPLES`] samples; `None` when the index is undefined.
pub fn penultimate_dunn<T: Real>(net: &Network<T>, ds: &Dataset, eval_batch_size: usize) -> Result<Option<f64>> {
    let m = ds.len().min(DUNN_SAMPLES);
    let head = Dataset::new(ds.images[..m].to_vec(), ds.labels[..m].to_vec(), ds.k, ds.split)?
        .with_stats(ds.mean.clone(), ds.std.clone());
    let eval = metrics::evaluate(net, &head, eval_batch_size)?;
    match metrics::dunn_index(eval.penultimate.view(), &head.labels, Linkage::Single) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn seed_result<T: Real>(
    seed: u64,
    cfg: &RunConfig,
    outcome: &TrainOutcome<T>,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<SeedResult> {
    let final_empirical_ce = metrics::empirical_ce(&outcome.net, train_set, cfg.eval_batch_size)?;
    let dunn_index = penultimate_dunn(&outcome.net, test_set, cfg.eval_batch_size)?;
    Ok(SeedResult {
        seed,
        final_accuracy: outcome.records.last().map_or(0.0, |r| r.test_accuracy),
        final_empirical_ce,
        final_mean_norm_entropy: outcome.cache.mean_norm_entropy(),
        final_mean_magnitude: outcome.cache.mean_magnitude(),
        dunn_index,
        records: outcome.records.clone(),
    })
}

pub const MIN_SEEDS: usize = 3;
pub const MIN_BENCH_BATCHES: usize = 10;

/// Trains every arm for every seed on the same data and summarizes the results.
///
/// With `output_dir` set, each run writes into `<arm>/seed-<s>/`, and the
/// directory receives `report.json` and `magnitude_trajectories.csv`.
pub fn compare<T: Real>(
    base: &RunConfig,
    seeds: &[u64],
    arms: &[Arm],
    train_set: &Dataset,
    test_set: &Dataset,
    mut progress: impl FnMut(&Arm, u64, &SeedResult),
) -> Result<ComparisonReport> {
    base.validate()?;
    if seeds.len() < MIN_SEEDS {
        return Err(Error::Config(format!("comparison needs at least {MIN_SEEDS} seeds, got {}", seeds.len())));
    }
    if arms.is_empty() {
        return Err(Error::Config("comparison needs at least one arm".into()));
    }
    let mut reports = Vec::new();
    for arm in arms {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.loss = arm.loss;
            cfg.aug = arm.aug;
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(&arm.name).join(format!("seed-{seed}")));
            let outcome = train::<T>(&cfg, train_set, test_set, TrainOptions::default())?;
            let result = seed_result(seed, &cfg, &outcome, train_set, test_set)?;
            progress(arm, seed, &result);
            runs.push(result);
        }
        let col = |f: fn(&SeedResult) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        reports.push(ArmReport {
            arm: arm.clone(),
            accuracy: Summary::of(&col(|r| r.final_accuracy)),
            empirical_ce: Summary::of(&col(|r| r.final_empirical_ce)),
            mean_norm_entropy: Summary::of(&col(|r| r.final_mean_norm_entropy)),
            runs,
        });
    }
    let report = ComparisonReport { arms: reports };
    if let Some(dir) = &base.output_dir {
        write_comparison(&report, dir)?;
    }
    Ok(report)
}

fn write_comparison(report: &ComparisonReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, report)?;
    let mut w = csv::Writer::from_path(dir.join("magnitude_trajectories.csv"))?;
    w.write_record(["arm", "seed", "epoch", "mean_magnitude", "mean_norm_entropy"])?;
    for arm in &report.arms {
        for run in &arm.runs {
            for r in &run.records {
                w.write_record([
                    arm.arm.name.clone(),
                    run.seed.to_string(),
                    r.epoch.to_string(),
                    r.mean_magnitude.to_string(),
                    r.mean_norm_entropy.to_string(),
                ])?;
            }
            // State after the last epoch, as one more point on the trajectory.
            w.write_record([
                arm.arm.name.clone(),
                run.seed.to_string(),
                run.records.len().to_string(),
                run.final_mean_magnitude.to_string(),
                run.final_mean_norm_entropy.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join("magnitude_trajectories.csv"), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTiming {
    pub mode: String,
    pub mean_ms: f64,
    pub p95_ms: f64,
    /// Model forward calls made while augmenting the timed batches.
    pub model_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub batches: usize,
    pub batch_size: usize,
    pub modes: Vec<ModeTiming>,
}

impl ThroughputReport {
    pub fn mode(&self, name: &str) -> Option<&ModeTiming> {
        self.modes.iter().find(|m| m.mode == name)
    }
}

pub const BENCH_MODES: [&str; 3] = ["random_magnitude", "entaugment_cached", "entaugment_fresh"];

/// Times the augmentation stage alone for the three magnitude sources.
///
/// The cache is first filled from one eval pass so cached magnitudes are
/// realistic. Modes are interleaved batch by batch, rotating which goes first,
/// so drift in machine load affects them equally. `warmup` batches are run but
/// not recorded.
pub fn bench_throughput<T: Real>(cfg: &RunConfig, train_set: &Dataset, n_batches: usize, warmup: usize) -> Result<ThroughputReport> {
    cfg.validate()?;
    if n_batches < MIN_BENCH_BATCHES {
        return Err(Error::Config(format!("benchmark needs at least {MIN_BENCH_BATCHES} batches, got {n_batches}")));
    }
    let input = input_shape(train_set)?;
    let net = Network::<T>::from_architecture(cfg.arch, input, train_set.k, cfg.seed)?;
    let mut cache = init_cache(train_set.len())?;
    let eval = metrics::evaluate(&net, train_set, cfg.eval_batch_size)?;
    for (i, row) in eval.logits.outer_iter().enumerate() {
        cache.update(i, &softmax(&LogitVector::new(row.to_vec())?), 0)?;
    }
    let opts = AugmentOptions { baseline: true, padding: cfg.padding, fill: cfg.fill, parallel: cfg.parallel };
    let fresh = FreshModel { net: &net, mean: &train_set.mean, std: &train_set.std };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    AugRng::for_stream(Stream::Shuffle, cfg.seed, 0, 0).shuffle(&mut order);
    let bs = cfg.batch_size.min(order.len());
    let mut times = vec![Vec::with_capacity(n_batches); BENCH_MODES.len()];
    let mut evals = vec![0u64; BENCH_MODES.len()];
    for b in 0..warmup + n_batches {
        let start = (b * bs) % order.len();
        let idx: Vec<usize> = (0..bs).map(|j| order[(start + j) % order.len()]).collect();
        let items: Vec<BatchItem<'_>> = idx
            .iter()
            .map(|&i| BatchItem { image: &train_set.images[i], label: train_set.labels[i], sample_index: i })
            .collect();
        for r in 0..BENCH_MODES.len() {
            let mode = (b + r) % BENCH_MODES.len();
            let before = net.forward_calls();
            let t = Instant::now();
            let out = match mode {
                0 => augment_batch_random_magnitude(&items, cfg.seed, b, &opts)?,
                1 => augment_batch(&items, &cache, EntropySource::CachedLastEpoch, Some(&fresh), cfg.seed, b, &opts)?,
                _ => augment_batch(&items, &cache, EntropySource::FreshForward, Some(&fresh), cfg.seed, b, &opts)?,
            };
            let elapsed = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(out);
            if b >= warmup {
                times[mode].push(elapsed);
                evals[mode] += net.forward_calls() - before;
            }
        }
    }
    let modes = BENCH_MODES
        .iter()
        .zip(times)
        .zip(evals)
        .map(|((name, mut t), model_evals)| {
            let mean_ms = t.iter().sum::<f64>() / t.len() as f64;
            t.sort_by(f64::total_cmp);
            let rank = ((0.95 * t.len() as f64).ceil() as usize).clamp(1, t.len());
            ModeTiming { mode: name.to_string(), mean_ms, p95_ms: t[rank - 1], model_evals }
        })
        .collect();
    Ok(ThroughputReport { batches: n_batches, batch_size: bs, modes })
}

#[cfg(test)]
mod tests;
