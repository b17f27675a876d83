use super::*;
use crate::model::Architecture;
use crate::policy::EntropySource;

fn small() -> (Dataset, Dataset) {
    data::synth_digits(240, 60, 3).unwrap()
}

fn cfg(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dataset = DatasetId::SynthDigits;
    cfg.arch = Architecture::Mlp;
    cfg.set("epochs", &epochs.to_string()).unwrap();
    cfg.batch_size = 32;
    cfg.seed = 11;
    cfg
}

fn reproducible(records: &[RunRecord]) -> Vec<RunRecord> {
    records.iter().map(|r| RunRecord { epoch_wall_seconds: 0.0, ..r.clone() }).collect()
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let (tr, te) = small();
    let mut c = cfg(2);
    c.optimizer.lr0 = 0.0;
    let out = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    let init = Network::<f32>::from_architecture(c.arch, input_shape(&tr).unwrap(), tr.k, c.seed).unwrap();
    assert_eq!(out.net.params_flat(), init.params_flat());
}

#[test]
fn first_epoch_sees_an_empty_cache_and_every_sample_is_touched_once_per_epoch() {
    let (tr, te) = small();
    let out = train::<f32>(&cfg(3), &tr, &te, TrainOptions::default()).unwrap();
    assert_eq!(out.records.len(), 3);
    assert_eq!(out.records[0].mean_magnitude, 0.0);
    assert_eq!(out.records[0].mean_norm_entropy, 1.0);
    assert!(out.records[1].mean_magnitude > 0.0);
    assert!(out.stats.touches.iter().all(|&t| t == 3));
    assert!(out.cache.states().iter().all(|s| s.last_update_epoch == 2));
    assert_eq!(out.stats.batches, 3 * 240_u64.div_ceil(32));
}

#[test]
fn zero_lambda_regularizer_is_bit_identical_to_cross_entropy() {
    let (tr, te) = small();
    let ce = train::<f32>(&cfg(2), &tr, &te, TrainOptions::default()).unwrap();
    let mut c = cfg(2);
    c.loss = LossConfig::with_ent_loss(0.0);
    let zero = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    assert_eq!(ce.net.params_flat(), zero.net.params_flat());
    assert_eq!(reproducible(&ce.records), reproducible(&zero.records));
}

#[test]
fn loss_decreases_on_learnable_data() {
    let (tr, te) = small();
    let mut c = cfg(6);
    c.aug = AugMode::None;
    let out = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    let first = out.records[0].train_ce;
    let last = out.records.last().unwrap().train_ce;
    assert!(last < 0.5 * first, "train CE {first} -> {last}");
    assert!(out.records.last().unwrap().test_accuracy > 0.5);
}

#[test]
fn regularizer_sharpens_predictions() {
    let (tr, te) = small();
    let ce = train::<f64>(&cfg(4), &tr, &te, TrainOptions::default()).unwrap();
    let mut c = cfg(4);
    c.loss = LossConfig::with_ent_loss(1.0);
    let ent = train::<f64>(&c, &tr, &te, TrainOptions::default()).unwrap();
    assert!(ent.cache.mean_norm_entropy() < ce.cache.mean_norm_entropy());
    for (a, b) in ent.records.iter().zip(&ent.records[1..]) {
        assert!(a.train_loss.is_finite() && b.train_loss.is_finite());
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (tr, te) = small();
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(4);
    c.output_dir = Some(dir.path().join("a"));
    let full = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();

    c.output_dir = Some(dir.path().join("b"));
    let partial = train::<f32>(&c, &tr, &te, TrainOptions { stop_after: Some(2), ..Default::default() }).unwrap();
    assert_eq!(partial.completed_epochs, 2);
    assert!(!dir.path().join("b/final.ckpt").exists());
    let ck = Checkpoint::load(&dir.path().join("b/checkpoint.ckpt")).unwrap();
    assert_eq!(ck.completed_epochs, 2);
    let resumed = train::<f32>(&c, &tr, &te, TrainOptions { resume: Some(ck), ..Default::default() }).unwrap();

    assert_eq!(resumed.net.params_flat(), full.net.params_flat());
    assert_eq!(resumed.optimizer.velocity_flat(), full.optimizer.velocity_flat());
    assert_eq!(resumed.cache, full.cache);
    assert_eq!(reproducible(&resumed.records), reproducible(&full.records));
    let a = std::fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("b/final.ckpt").exists());
}

#[test]
fn resume_rejects_a_foreign_checkpoint() {
    let (tr, te) = small();
    let out = train::<f32>(&cfg(1), &tr, &te, TrainOptions::default()).unwrap();
    let ck = out.checkpoint(&cfg(1));
    let mut other = cfg(1);
    other.seed = 12;
    let err = train::<f32>(&other, &tr, &te, TrainOptions { resume: Some(ck.clone()), ..Default::default() });
    assert!(matches!(err, Err(Error::Checkpoint(_))));
    let err = train::<f64>(&cfg(1), &tr, &te, TrainOptions { resume: Some(ck), ..Default::default() });
    assert!(matches!(err, Err(Error::Checkpoint(_))));
}

#[test]
fn checkpoint_restores_the_network() {
    let (tr, te) = small();
    let c = cfg(1);
    let out = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    let (back_cfg, net) = network_from_checkpoint::<f32>(&out.checkpoint(&c), input_shape(&tr).unwrap(), tr.k).unwrap();
    assert_eq!(net, out.net);
    assert_eq!(back_cfg, c);
}

#[test]
fn cached_policy_never_evaluates_the_model_and_fresh_evaluates_once_per_batch() {
    let (tr, te) = small();
    let cached = train::<f32>(&cfg(1), &tr, &te, TrainOptions::default()).unwrap();
    assert_eq!(cached.stats.policy_forward_calls, 0);
    let mut c = cfg(1);
    c.entropy_source = EntropySource::FreshForward;
    let fresh = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    assert_eq!(fresh.stats.policy_forward_calls, fresh.stats.batches);
}

#[test]
fn parallel_augmentation_matches_serial() {
    let (tr, te) = small();
    let serial = train::<f32>(&cfg(2), &tr, &te, TrainOptions::default()).unwrap();
    let mut c = cfg(2);
    c.parallel = true;
    let parallel = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
    assert_eq!(serial.net.params_flat(), parallel.net.params_flat());
}

#[test]
fn every_augmentation_mode_trains() {
    let (tr, te) = small();
    for aug in [AugMode::None, AugMode::BaselineOnly, AugMode::RandomMagnitude, AugMode::EntAugment] {
        let mut c = cfg(1);
        c.aug = aug;
        let out = train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
        assert!(out.records[0].train_loss.is_finite(), "{aug}");
    }
}

#[test]
fn epoch_callback_sees_each_record() {
    let (tr, te) = small();
    let mut seen = Vec::new();
    let mut cb = |r: &RunRecord| seen.push(r.epoch);
    train::<f32>(&cfg(2), &tr, &te, TrainOptions { on_epoch: Some(&mut cb), ..Default::default() }).unwrap();
    assert_eq!(seen, vec![0, 1]);
}

#[test]
fn summary_statistics() {
    let s = Summary::of(&[3.0, 1.0, 2.0]);
    assert_eq!(s.median, 2.0);
    assert_eq!(s.mean, 2.0);
    assert!((s.std - 1.0).abs() < 1e-15);
    assert_eq!(Summary::of(&[1.0, 4.0]).median, 2.5);
    assert_eq!(Summary::of(&[5.0]).std, 0.0);
}

#[test]
fn comparison_writes_report_and_trajectories() {
    let (tr, te) = small();
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(2);
    c.output_dir = Some(dir.path().to_path_buf());
    let arms = standard_arms(LossConfig::with_ent_loss(1.0));
    assert_eq!(arms.len(), 6);
    let mut calls = 0;
    let report = compare::<f32>(&c, &[1, 2, 3], &arms[..2], &tr, &te, |_, _, _| calls += 1).unwrap();
    assert_eq!(calls, 6);
    let arm = report.arm("ce-baseline_only").unwrap();
    assert_eq!(arm.runs.len(), 3);
    assert!(arm.runs.iter().all(|r| r.final_empirical_ce.is_finite()));
    assert!(dir.path().join("report.json").exists());
    let traj = std::fs::read_to_string(dir.path().join("magnitude_trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 2 * 3 * 3);

    // Medians recomputed from the per-run CSV files.
    let finals: Vec<f64> = [1, 2, 3]
        .iter()
        .map(|s| {
            let path = dir.path().join(format!("ce-random_magnitude/seed-{s}/metrics.csv"));
            metrics::import(&path, ExportFormat::Csv).unwrap().last().unwrap().test_accuracy
        })
        .collect();
    let median = Summary::of(&finals).median;
    assert!((report.arm("ce-random_magnitude").unwrap().accuracy.median - median).abs() < 1e-9);
}

#[test]
fn comparison_preconditions_and_identical_arms() {
    let (tr, te) = small();
    let c = cfg(1);
    let arm = Arm::new(LossConfig::cross_entropy_only(), AugMode::EntAugment);
    assert!(matches!(compare::<f32>(&c, &[1], &[arm.clone()], &tr, &te, |_, _, _| {}), Err(Error::Config(_))));
    let twin = vec![arm.clone(), arm];
    let report = compare::<f32>(&c, &[1, 2, 3], &twin, &tr, &te, |_, _, _| {}).unwrap();
    assert_eq!(report.arms[0].accuracy, report.arms[1].accuracy);
    assert_eq!(report.arms[0].mean_norm_entropy, report.arms[1].mean_norm_entropy);
}

#[test]
fn throughput_report_counts_model_evaluations() {
    let (tr, _) = small();
    let mut c = cfg(1);
    c.batch_size = 16;
    let report = bench_throughput::<f32>(&c, &tr, 10, 2).unwrap();
    assert_eq!(report.modes.len(), 3);
    assert_eq!(report.mode("random_magnitude").unwrap().model_evals, 0);
    assert_eq!(report.mode("entaugment_cached").unwrap().model_evals, 0);
    assert_eq!(report.mode("entaugment_fresh").unwrap().model_evals, 10);
    assert!(report.modes.iter().all(|m| m.p95_ms >= 0.0 && m.mean_ms.is_finite()));
    assert!(bench_throughput::<f32>(&c, &tr, 9, 0).is_err());
}

#[test]
fn identical_runs_write_identical_files_in_different_directories() {
    let (tr, te) = small();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for name in ["x", "y"] {
        let mut c = cfg(2);
        c.output_dir = Some(dir.path().join(name));
        train::<f32>(&c, &tr, &te, TrainOptions::default()).unwrap();
        let read = |f: &str| std::fs::read(dir.path().join(name).join(f)).unwrap();
        bytes.push((read("metrics.csv"), read("final.ckpt")));
    }
    assert_eq!(bytes[0], bytes[1]);
}
