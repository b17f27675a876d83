//! Per-sample magnitudes and the batch augmentation procedure.
//!
//! For each sample: read its magnitude, draw one transform uniformly from the
//! fourteen-operation space, and apply it at that magnitude. Magnitudes come
//! from an entropy cache filled by the training forward pass, so the policy
//! itself costs O(k) per sample and never evaluates the model.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{baseline_augment, normalize_batch, Padding};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Mode, Network};
use crate::numcore::{magnitude, normalized_entropy, softmax_slice, ProbVector};
use crate::rng::{AugRng, Stream};
use crate::scalar::Real;
use crate::transforms::{apply_with_fill, sample_transform, TransformKind, DEFAULT_FILL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleState {
    pub sample_index: usize,
    pub norm_entropy: f64,
    pub mag: f64,
    /// `-1` until the sample's first update.
    pub last_update_epoch: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EntropySource {
    /// Softmax outputs from the training pass the last time the sample was seen.
    #[default]
    CachedLastEpoch,
    /// An extra inference pass on the clean batch.
    FreshForward,
}

impl fmt::Display for EntropySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntropySource::CachedLastEpoch => "cached",
            EntropySource::FreshForward => "fresh",
        })
    }
}

impl FromStr for EntropySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cached" | "cached-last-epoch" => Ok(EntropySource::CachedLastEpoch),
            "fresh" | "fresh-forward" => Ok(EntropySource::FreshForward),
            other => Err(Error::Config(format!("unknown entropy source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCache {
    states: Vec<SampleState>,
}

/// Every sample starts at maximal entropy (magnitude 0).
pub fn init_cache(n_samples: usize) -> Result<EntropyCache> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("cache needs at least one sample".into()));
    }
    Ok(EntropyCache {
        states: (0..n_samples)
            .map(|i| SampleState {
                sample_index: i,
                norm_entropy: 1.0,
                mag: 0.0,
                last_update_epoch: -1,
            })
            .collect(),
    })
}

impl EntropyCache {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&SampleState> {
        self.states.get(index).ok_or(Error::OutOfRange {
            index,
            len: self.states.len(),
        })
    }

    pub fn states(&self) -> &[SampleState] {
        &self.states
    }

    pub fn update(&mut self, index: usize, probs: &ProbVector<f64>, epoch: usize) -> Result<()> {
        let len = self.states.len();
        let state = self.states.get_mut(index).ok_or(Error::OutOfRange { index, len })?;
        state.norm_entropy = normalized_entropy(probs);
        state.mag = magnitude(probs);
        state.last_update_epoch = epoch as i64;
        Ok(())
    }

    pub fn mean_norm_entropy(&self) -> f64 {
        self.states.iter().map(|s| s.norm_entropy).sum::<f64>() / self.states.len() as f64
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.states.iter().map(|s| s.mag).sum::<f64>() / self.states.len() as f64
    }

    /// Rebuilds a cache from checkpointed states, checking index order.
    pub fn from_states(states: Vec<SampleState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidInput("cache needs at least one sample".into()));
        }
        if let Some(i) = states.iter().enumerate().position(|(i, s)| s.sample_index != i) {
            return Err(Error::InvalidInput(format!("cache entry {i} has the wrong sample index")));
        }
        Ok(Self { states })
    }
}

/// Free-function form of [`EntropyCache::update`].
pub fn update_cache(cache: &mut EntropyCache, sample_index: usize, probs: &ProbVector<f64>, epoch: usize) -> Result<()> {
    cache.update(sample_index, probs, epoch)
}

/// One item of a batch to augment.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub image: &'a Image,
    pub label: usize,
    pub sample_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    /// Apply the crop-and-flip baseline before the sampled operation.
    pub baseline: bool,
    pub padding: Padding,
    pub fill: u8,
    /// Fan per-sample work out over the rayon pool. Output is identical either way.
    pub parallel: bool,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            baseline: true,
            padding: Padding::Zero,
            fill: DEFAULT_FILL,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: Image,
    pub kind: TransformKind,
    pub magnitude: f64,
}

/// Model and normalization needed by [`EntropySource::FreshForward`].
pub struct FreshModel<'a, T: Real> {
    pub net: &'a Network<T>,
    pub mean: &'a [f64],
    pub std: &'a [f64],
}

/// Augments a batch with per-sample entropy-derived magnitudes.
#[allow(clippy::too_many_arguments)]
pub fn augment_batch<T: Real>(
    batch: &[BatchItem<'_>],
    cache: &EntropyCache,
    source: EntropySource,
    model: Option<&FreshModel<'_, T>>,
    rng_seed: u64,
    epoch: usize,
    opts: &AugmentOptions,
) -> Result<Vec<Augmented>> {
    let magnitudes: Vec<f64> = match source {
        EntropySource::CachedLastEpoch => batch
            .iter()
            .map(|item| cache.get(item.sample_index).map(|s| s.mag))
            .collect::<Result<_>>()?,
        EntropySource::FreshForward => {
            let model = model.ok_or_else(|| {
                Error::Config("fresh-forward entropy needs a model to evaluate".into())
            })?;
            fresh_magnitudes(batch, model)?
        }
    };
    augment_with_magnitudes(batch, &magnitudes, rng_seed, epoch, opts)
}

/// The non-adaptive control: same space, `m ~ Uniform[0, 1]` per sample.
pub fn augment_batch_random_magnitude(
    batch: &[BatchItem<'_>],
    rng_seed: u64,
    epoch: usize,
    opts: &AugmentOptions,
) -> Result<Vec<Augmented>> {
    let magnitudes: Vec<f64> = batch
        .iter()
        .map(|item| AugRng::for_stream(Stream::Magnitude, rng_seed, epoch as u64, item.sample_index as u64).unit())
        .collect();
    augment_with_magnitudes(batch, &magnitudes, rng_seed, epoch, opts)
}

/// Baseline crop/flip only (or a copy when the baseline is disabled).
pub fn baseline_batch(batch: &[BatchItem<'_>], rng_seed: u64, epoch: usize, opts: &AugmentOptions) -> Vec<Image> {
    let one = |item: &BatchItem<'_>| baseline_only(item, rng_seed, epoch, opts);
    if opts.parallel {
        batch.par_iter().map(one).collect()
    } else {
        batch.iter().map(one).collect()
    }
}

fn baseline_only(item: &BatchItem<'_>, rng_seed: u64, epoch: usize, opts: &AugmentOptions) -> Image {
    if opts.baseline {
        let mut rng = AugRng::for_stream(Stream::Baseline, rng_seed, epoch as u64, item.sample_index as u64);
        baseline_augment(item.image, &mut rng, opts.padding)
    } else {
        item.image.clone()
    }
}

fn fresh_magnitudes<T: Real>(batch: &[BatchItem<'_>], model: &FreshModel<'_, T>) -> Result<Vec<f64>> {
    let images: Vec<&Image> = batch.iter().map(|b| b.image).collect();
    let x = normalize_batch::<T>(&images, model.mean, model.std)?;
    let trace = model.net.forward(&x, Mode::Eval)?;
    trace
        .logits
        .outer_iter()
        .map(|row| {
            let z: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            Ok(magnitude(&softmax_slice(&z)?))
        })
        .collect()
}

fn augment_with_magnitudes(
    batch: &[BatchItem<'_>],
    magnitudes: &[f64],
    rng_seed: u64,
    epoch: usize,
    opts: &AugmentOptions,
) -> Result<Vec<Augmented>> {
    let one = |(item, &m): (&BatchItem<'_>, &f64)| -> Result<Augmented> {
        let base = baseline_only(item, rng_seed, epoch, opts);
        let mut rng = AugRng::new(rng_seed, epoch as u64, item.sample_index as u64);
        let kind = sample_transform(&mut rng);
        let image = apply_with_fill(&kind.spec(), &base, m, &mut rng, opts.fill)?;
        Ok(Augmented { image, kind, magnitude: m })
    };
    if opts.parallel {
        batch.par_iter().zip(magnitudes.par_iter()).map(one).collect()
    } else {
        batch.iter().zip(magnitudes).map(one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, InputShape};
    use crate::transforms::apply_signed;

    fn images(n: usize) -> Vec<Image> {
        (0..n)
            .map(|i| Image::new(8, 8, 1, (0..64).map(|p| ((p * 7 + i * 13) % 256) as u8).collect()).unwrap())
            .collect()
    }

    fn items(imgs: &[Image]) -> Vec<BatchItem<'_>> {
        imgs.iter()
            .enumerate()
            .map(|(i, image)| BatchItem { image, label: i % 3, sample_index: i })
            .collect()
    }

    #[test]
    fn init_and_update() {
        let mut cache = init_cache(3).unwrap();
        assert!(cache.states().iter().all(|s| s.mag == 0.0 && s.norm_entropy == 1.0 && s.last_update_epoch == -1));
        assert!(matches!(cache.get(3), Err(Error::OutOfRange { index: 3, len: 3 })));
        assert!(init_cache(0).is_err());

        update_cache(&mut cache, 0, &ProbVector::one_hot(3, 1).unwrap(), 0).unwrap();
        assert_eq!(cache.get(0).unwrap().mag, 1.0);
        assert_eq!(cache.get(0).unwrap().last_update_epoch, 0);
        cache.update(1, &ProbVector::uniform(3).unwrap(), 0).unwrap();
        assert!(cache.get(1).unwrap().mag.abs() < 1e-12);
        cache.update(2, &ProbVector::new(vec![0.7, 0.2, 0.1]).unwrap(), 4).unwrap();
        let s = cache.get(2).unwrap();
        assert!((s.mag - 0.270_153_300_837_902_5).abs() < 1e-12);
        assert!((s.mag + s.norm_entropy - 1.0).abs() < 1e-9);
        assert!(cache.update(3, &ProbVector::uniform(3).unwrap(), 0).is_err());
    }

    #[test]
    fn fresh_cache_only_changes_images_through_non_parameterised_kinds() {
        let imgs = images(40);
        let cache = init_cache(40).unwrap();
        let opts = AugmentOptions { baseline: false, ..AugmentOptions::default() };
        let out = augment_batch::<f32>(&items(&imgs), &cache, EntropySource::CachedLastEpoch, None, 1, 0, &opts).unwrap();
        for (a, img) in out.iter().zip(&imgs) {
            assert_eq!(a.magnitude, 0.0);
            if a.kind.uses_magnitude() {
                assert_eq!(&a.image, img);
            }
        }
    }

    #[test]
    fn one_hot_cache_rotates_by_full_angle() {
        let imgs = images(1);
        let mut cache = init_cache(1).unwrap();
        cache.update(0, &ProbVector::one_hot(10, 0).unwrap(), 0).unwrap();
        // Find an epoch whose draw for sample 0 is Rotate.
        let epoch = (0..1000)
            .find(|&e| sample_transform(&mut AugRng::new(9, e as u64, 0)) == TransformKind::Rotate)
            .unwrap();
        let opts = AugmentOptions { baseline: false, ..AugmentOptions::default() };
        let out = augment_batch::<f32>(&items(&imgs), &cache, EntropySource::CachedLastEpoch, None, 9, epoch, &opts).unwrap();
        assert_eq!(out[0].kind, TransformKind::Rotate);
        assert_eq!(out[0].magnitude, 1.0);
        let spec = TransformKind::Rotate.spec();
        let plus = apply_signed(&spec, &imgs[0], 1.0, 1.0, DEFAULT_FILL).unwrap();
        let minus = apply_signed(&spec, &imgs[0], 1.0, -1.0, DEFAULT_FILL).unwrap();
        assert!(out[0].image == plus || out[0].image == minus);
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let imgs = images(32);
        let mut cache = init_cache(32).unwrap();
        for i in 0..32 {
            let p = 0.1 + 0.8 * (i as f64 / 31.0);
            cache.update(i, &ProbVector::new(vec![p, 1.0 - p]).unwrap(), 0).unwrap();
        }
        let serial = AugmentOptions::default();
        let parallel = AugmentOptions { parallel: true, ..serial };
        let run = |o: &AugmentOptions| augment_batch::<f32>(&items(&imgs), &cache, EntropySource::CachedLastEpoch, None, 5, 1, o).unwrap();
        assert_eq!(run(&serial), run(&serial));
        assert_eq!(run(&serial), run(&parallel));
    }

    #[test]
    fn cached_mode_never_evaluates_and_fresh_mode_needs_a_model() {
        let imgs = images(4);
        let cache = init_cache(4).unwrap();
        let net = Network::<f32>::from_architecture(Architecture::Mlp, InputShape { channels: 1, height: 8, width: 8 }, 3, 0).unwrap();
        let fresh = FreshModel { net: &net, mean: &[0.5], std: &[0.25] };
        let opts = AugmentOptions::default();
        augment_batch(&items(&imgs), &cache, EntropySource::CachedLastEpoch, Some(&fresh), 0, 0, &opts).unwrap();
        assert_eq!(net.forward_calls(), 0);
        augment_batch(&items(&imgs), &cache, EntropySource::FreshForward, Some(&fresh), 0, 0, &opts).unwrap();
        assert_eq!(net.forward_calls(), 1);
        let missing = augment_batch::<f32>(&items(&imgs), &cache, EntropySource::FreshForward, None, 0, 0, &opts);
        assert!(matches!(missing, Err(Error::Config(_))));
    }

    #[test]
    fn lower_entropy_never_lowers_the_applied_magnitude() {
        let imgs = images(1);
        let mut cache = init_cache(1).unwrap();
        let opts = AugmentOptions::default();
        let mut last = -1.0;
        for p in [0.5, 0.6, 0.75, 0.9, 0.99, 1.0] {
            cache.update(0, &ProbVector::new(vec![p, 1.0 - p]).unwrap(), 0).unwrap();
            let out = augment_batch::<f32>(&items(&imgs), &cache, EntropySource::CachedLastEpoch, None, 0, 0, &opts).unwrap();
            assert!(out[0].magnitude > last);
            last = out[0].magnitude;
        }
    }

    #[test]
    fn random_magnitudes_are_per_sample_uniform_draws() {
        let imgs = images(200);
        let out = augment_batch_random_magnitude(&items(&imgs), 3, 0, &AugmentOptions::default()).unwrap();
        let mean = out.iter().map(|a| a.magnitude).sum::<f64>() / 200.0;
        assert!((mean - 0.5).abs() < 0.07);
        assert!(out.iter().all(|a| (0.0..1.0).contains(&a.magnitude)));
    }
}
