//! Datasets, normalization, the crop-and-flip baseline and stratified subsets.

mod cifar;
mod mnist;
mod synth;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{AugRng, Stream};
use crate::scalar::Real;

pub use cifar::{load_cifar10, read_cifar_batch, write_cifar_batch, CIFAR_RECORD_BYTES};
pub use mnist::{load_mnist, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use synth::synth_digits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub split: Split,
    /// Per-channel mean of `pixel/255` (training-split statistics).
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Dataset {
    /// Validates the invariants; `mean`/`std` are computed from `images`.
    pub fn new(images: Vec<Image>, labels: Vec<usize>, k: usize, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::InvalidInput(format!("label {l} at index {i} is not below k = {k}")));
        }
        if let Some(first) = images.first() {
            if let Some(i) = images.iter().position(|img| !img.same_shape(first)) {
                return Err(Error::InvalidInput(format!("image {i} has a different shape")));
            }
        }
        let (mean, std) = channel_stats(&images);
        Ok(Self {
            images,
            labels,
            k,
            split,
            mean,
            std,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(channels, height, width)` of the images.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|i| (i.channels(), i.height(), i.width()))
    }

    /// Replaces the normalization statistics (test splits use the train ones).
    pub fn with_stats(mut self, mean: Vec<f64>, std: Vec<f64>) -> Self {
        self.mean = mean;
        self.std = std;
        self
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Normalized, channel-planar batch of the given sample indices.
    pub fn normalized_batch<T: Real>(&self, indices: &[usize]) -> Result<Array2<T>> {
        let images: Vec<&Image> = indices.iter().map(|&i| &self.images[i]).collect();
        normalize_batch(&images, &self.mean, &self.std)
    }
}

/// Per-channel mean and population standard deviation of `v/255`.
pub fn channel_stats(images: &[Image]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = images.first() else {
        return (vec![], vec![]);
    };
    let ch = first.channels();
    let mut sum = vec![0u64; ch];
    let mut sq = vec![0u64; ch];
    let mut n = 0u64;
    for img in images {
        for px in img.pixels().chunks_exact(ch) {
            for c in 0..ch {
                let v = px[c] as u64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += (img.width() * img.height()) as u64;
    }
    let mean: Vec<f64> = sum.iter().map(|&s| s as f64 / n as f64 / 255.0).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(&q, &m)| ((q as f64 / n as f64 / 65025.0) - m * m).max(0.0).sqrt())
        .collect();
    (mean, std)
}

/// `(v/255 − mean)/std` per channel, returned channel-planar.
pub fn normalize<T: Real>(img: &Image, mean: &[f64], std: &[f64]) -> Result<Vec<T>> {
    let ch = img.channels();
    if mean.len() != ch || std.len() != ch {
        return Err(Error::InvalidInput(format!(
            "need {ch} channel statistics, got {} means and {} stds",
            mean.len(),
            std.len()
        )));
    }
    if let Some(c) = std.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::InvalidInput(format!("channel {c} has non-positive std")));
    }
    let plane = img.width() * img.height();
    let mut out = vec![T::zero(); plane * ch];
    for (i, px) in img.pixels().chunks_exact(ch).enumerate() {
        for c in 0..ch {
            out[c * plane + i] = T::of((px[c] as f64 / 255.0 - mean[c]) / std[c]);
        }
    }
    Ok(out)
}

pub fn normalize_batch<T: Real>(images: &[&Image], mean: &[f64], std: &[f64]) -> Result<Array2<T>> {
    let cols = images.first().map_or(0, |i| i.pixels().len());
    let mut out = Array2::zeros((images.len(), cols));
    for (mut row, img) in out.outer_iter_mut().zip(images) {
        let v = normalize::<T>(img, mean, std)?;
        if v.len() != cols {
            return Err(Error::InvalidInput("batch images differ in shape".into()));
        }
        row.assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(out)
}

/// How the 4-pixel border is filled before cropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Padding {
    #[default]
    Zero,
    Reflect,
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Padding::Zero => "zero",
            Padding::Reflect => "reflect",
        })
    }
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Padding::Zero),
            "reflect" => Ok(Padding::Reflect),
            other => Err(Error::Config(format!("unknown padding {other:?}"))),
        }
    }
}

pub const BASELINE_PAD: usize = 4;

/// Random 4-pixel-pad crop followed by a horizontal flip with probability ½.
pub fn baseline_augment(img: &Image, rng: &mut AugRng, padding: Padding) -> Image {
    let span = 2 * BASELINE_PAD + 1;
    let ox = rng.index(span);
    let oy = rng.index(span);
    let flip = rng.coin();
    crop_flip(img, ox, oy, flip, padding)
}

/// Crop of the padded image at offset `(ox, oy)`, optionally mirrored.
pub fn crop_flip(img: &Image, ox: usize, oy: usize, flip: bool, padding: Padding) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = Image::filled(w, h, ch, 0).expect("shape copied from a valid image");
    let src_coord = |p: isize, n: usize| -> Option<usize> {
        let n = n as isize;
        if (0..n).contains(&p) {
            return Some(p as usize);
        }
        match padding {
            Padding::Zero => None,
            Padding::Reflect => {
                // Mirror without repeating the edge pixel.
                let period = 2 * (n - 1).max(1);
                let mut q = p.rem_euclid(period);
                if q >= n {
                    q = period - q;
                }
                Some(q as usize)
            }
        }
    };
    for y in 0..h {
        let sy = src_coord(y as isize + oy as isize - BASELINE_PAD as isize, h);
        for x in 0..w {
            let cx = if flip { w - 1 - x } else { x };
            let sx = src_coord(cx as isize + ox as isize - BASELINE_PAD as isize, w);
            if let (Some(sx), Some(sy)) = (sx, sy) {
                for c in 0..ch {
                    out.set(x, y, c, img.get(sx, sy, c));
                }
            }
        }
    }
    out
}

/// Class-stratified, seeded subset of `n` samples.
///
/// Per-class quotas are proportional to class frequency, rounded by largest
/// remainder (ties to the lower class). Selected samples keep dataset order.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let indices = subset_indices(ds, n, seed)?;
    let images = indices.iter().map(|&i| ds.images[i].clone()).collect();
    let labels = indices.iter().map(|&i| ds.labels[i]).collect();
    let sub = Dataset::new(images, labels, ds.k, ds.split)?;
    Ok(sub.with_stats(ds.mean.clone(), ds.std.clone()))
}

pub fn subset_indices(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    let total = ds.len();
    if n > total {
        return Err(Error::InvalidInput(format!("subset of {n} from {total} samples")));
    }
    let counts = ds.class_counts();
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * n / total.max(1)).collect();
    let mut remainder = n - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ds.k).collect();
    // Largest fractional part first.
    order.sort_by_key(|&c| std::cmp::Reverse((counts[c] * n) % total.max(1)));
    for &c in order.iter().cycle().take(ds.k * 2) {
        if remainder == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            remainder -= 1;
        }
    }
    let mut chosen = Vec::with_capacity(n);
    for class in 0..ds.k {
        let mut members: Vec<usize> = (0..total).filter(|&i| ds.labels[i] == class).collect();
        AugRng::for_stream(Stream::Subset, seed, class as u64, 0).shuffle(&mut members);
        chosen.extend_from_slice(&members[..quotas[class]]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests;
