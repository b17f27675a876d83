//! The fourteen-operation augmentation space. Every operation takes a
//! magnitude `m ∈ [0, 1]`; the strength actually applied is `S_max · m`
//! (with a random sign where the operation allows one).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::AugRng;

/// Fill value for pixels that a geometric operation maps outside the source.
pub const DEFAULT_FILL: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    Identity,
    AutoContrast,
    Equalize,
    Color,
    Contrast,
    Brightness,
    Sharpness,
    Rotate,
    TranslateX,
    TranslateY,
    ShearX,
    ShearY,
    Solarize,
    Posterize,
}

impl TransformKind {
    pub const ALL: [TransformKind; 14] = [
        TransformKind::Identity,
        TransformKind::AutoContrast,
        TransformKind::Equalize,
        TransformKind::Color,
        TransformKind::Contrast,
        TransformKind::Brightness,
        TransformKind::Sharpness,
        TransformKind::Rotate,
        TransformKind::TranslateX,
        TransformKind::TranslateY,
        TransformKind::ShearX,
        TransformKind::ShearY,
        TransformKind::Solarize,
        TransformKind::Posterize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::AutoContrast => "auto_contrast",
            TransformKind::Equalize => "equalize",
            TransformKind::Color => "color",
            TransformKind::Contrast => "contrast",
            TransformKind::Brightness => "brightness",
            TransformKind::Sharpness => "sharpness",
            TransformKind::Rotate => "rotate",
            TransformKind::TranslateX => "translate_x",
            TransformKind::TranslateY => "translate_y",
            TransformKind::ShearX => "shear_x",
            TransformKind::ShearY => "shear_y",
            TransformKind::Solarize => "solarize",
            TransformKind::Posterize => "posterize",
        }
    }

    /// True for the eleven kinds whose output depends on the magnitude.
    pub fn uses_magnitude(self) -> bool {
        !matches!(
            self,
            TransformKind::Identity | TransformKind::AutoContrast | TransformKind::Equalize
        )
    }

    pub fn spec(self) -> TransformSpec {
        let (s_max, symmetric) = match self {
            TransformKind::Identity | TransformKind::AutoContrast | TransformKind::Equalize => {
                (None, false)
            }
            TransformKind::Color
            | TransformKind::Contrast
            | TransformKind::Brightness
            | TransformKind::Sharpness => (Some(1.9), false),
            TransformKind::Rotate => (Some(30.0), true),
            TransformKind::TranslateX | TransformKind::TranslateY => (Some(10.0), true),
            TransformKind::ShearX | TransformKind::ShearY => (Some(0.3), true),
            TransformKind::Solarize => (Some(256.0), false),
            TransformKind::Posterize => (Some(4.0), false),
        };
        TransformSpec {
            kind: self,
            s_max,
            symmetric,
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown transform {s:?}")))
    }
}

/// A transform together with its maximum strength and symmetry flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub s_max: Option<f64>,
    pub symmetric: bool,
}

impl TransformSpec {
    pub fn table() -> [TransformSpec; 14] {
        TransformKind::ALL.map(TransformKind::spec)
    }
}

/// Draws one of the fourteen kinds uniformly.
pub fn sample_transform(rng: &mut AugRng) -> TransformKind {
    TransformKind::ALL[rng.index(TransformKind::ALL.len())]
}

/// Applies `spec` at magnitude `m`, drawing the sign from `rng` when the
/// operation needs one. Geometric operations fill with [`DEFAULT_FILL`].
pub fn apply(spec: &TransformSpec, img: &Image, m: f64, rng: &mut AugRng) -> Result<Image> {
    apply_with_fill(spec, img, m, rng, DEFAULT_FILL)
}

pub fn apply_with_fill(
    spec: &TransformSpec,
    img: &Image,
    m: f64,
    rng: &mut AugRng,
    fill: u8,
) -> Result<Image> {
    let needs_sign = spec.symmetric || is_enhancement(spec.kind);
    let sign = if needs_sign { rng.sign() } else { 1.0 };
    apply_signed(spec, img, m, sign, fill)
}

fn is_enhancement(kind: TransformKind) -> bool {
    matches!(
        kind,
        TransformKind::Color | TransformKind::Contrast | TransformKind::Brightness | TransformKind::Sharpness
    )
}

/// Deterministic core of [`apply`] with the sign supplied by the caller.
pub fn apply_signed(spec: &TransformSpec, img: &Image, m: f64, sign: f64, fill: u8) -> Result<Image> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidInput(format!("magnitude {m} outside [0, 1]")));
    }
    let s_max = spec.s_max.unwrap_or(0.0);
    let strength = s_max * m * sign;
    let out = match spec.kind {
        TransformKind::Identity => img.clone(),
        TransformKind::AutoContrast => auto_contrast(img),
        TransformKind::Equalize => equalize(img),
        TransformKind::Color | TransformKind::Contrast | TransformKind::Brightness | TransformKind::Sharpness => {
            // Identity at m = 0, swinging to 1 ± (S_max − 1) at m = 1.
            let factor = 1.0 + (s_max - 1.0) * m * sign;
            let degenerate = match spec.kind {
                TransformKind::Color => grayscale(img),
                TransformKind::Contrast => mean_gray(img),
                TransformKind::Brightness => Image::filled(img.width(), img.height(), img.channels(), 0)?,
                _ => smooth(img),
            };
            blend(&degenerate, img, factor)
        }
        TransformKind::Rotate => rotate(img, strength, fill),
        TransformKind::TranslateX => affine_nearest(img, [1.0, 0.0, -strength, 0.0, 1.0, 0.0], fill, false),
        TransformKind::TranslateY => affine_nearest(img, [1.0, 0.0, 0.0, 0.0, 1.0, -strength], fill, false),
        TransformKind::ShearX => affine_nearest(img, [1.0, strength, 0.0, 0.0, 1.0, 0.0], fill, true),
        TransformKind::ShearY => affine_nearest(img, [1.0, 0.0, 0.0, strength, 1.0, 0.0], fill, true),
        TransformKind::Solarize => solarize(img, (256.0 * (1.0 - m)).round() as u32),
        TransformKind::Posterize => posterize(img, 8 - (4.0 * m).round() as u32),
    };
    Ok(out)
}

fn map_pixels(img: &Image, f: impl Fn(usize, u8) -> u8) -> Image {
    let mut out = img.clone();
    let ch = img.channels();
    for (i, v) in out.pixels_mut().iter_mut().enumerate() {
        *v = f(i % ch, *v);
    }
    out
}

fn channel_lut(img: &Image, build: impl Fn(&[u64; 256], u64) -> Option<[u8; 256]>) -> Image {
    let ch = img.channels();
    let luts: Vec<Option<[u8; 256]>> = (0..ch)
        .map(|c| {
            let mut hist = [0u64; 256];
            for px in img.pixels().chunks_exact(ch) {
                hist[px[c] as usize] += 1;
            }
            build(&hist, (img.width() * img.height()) as u64)
        })
        .collect();
    map_pixels(img, |c, v| luts[c].map_or(v, |lut| lut[v as usize]))
}

/// Per channel, stretches `[min, max]` onto `[0, 255]`.
pub fn auto_contrast(img: &Image) -> Image {
    channel_lut(img, |hist, _| {
        let lo = hist.iter().position(|&n| n > 0)?;
        let hi = hist.iter().rposition(|&n| n > 0)?;
        if lo == hi {
            return None;
        }
        let scale = 255.0 / (hi - lo) as f64;
        let mut lut = [0u8; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            let s = ((v as f64 - lo as f64) * scale).round();
            *out = s.clamp(0.0, 255.0) as u8;
        }
        Some(lut)
    })
}

/// Per channel cumulative-histogram equalization.
pub fn equalize(img: &Image) -> Image {
    channel_lut(img, |hist, total| {
        let last = hist.iter().rposition(|&n| n > 0)?;
        let step = (total - hist[last]) / 255;
        if step == 0 {
            return None;
        }
        let mut lut = [0u8; 256];
        let mut cum = 0u64;
        for (v, out) in lut.iter_mut().enumerate() {
            *out = ((cum + step / 2) / step).min(255) as u8;
            cum += hist[v];
        }
        Some(lut)
    })
}

fn luma(px: &[u8]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

fn grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let mut out = img.clone();
    for px in out.pixels_mut().chunks_exact_mut(3) {
        let l = luma(px).round().clamp(0.0, 255.0) as u8;
        px.fill(l);
    }
    out
}

fn mean_gray(img: &Image) -> Image {
    let ch = img.channels();
    let n = (img.width() * img.height()) as f64;
    let total: f64 = if ch == 1 {
        img.pixels().iter().map(|&v| v as f64).sum()
    } else {
        img.pixels().chunks_exact(3).map(luma).sum()
    };
    let mean = (total / n).round().clamp(0.0, 255.0) as u8;
    let mut out = img.clone();
    out.pixels_mut().fill(mean);
    out
}

/// 3×3 smoothing with kernel (1 1 1; 1 5 1; 1 1 1)/13; border pixels are kept.
fn smooth(img: &Image) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..ch {
                let mut acc = 4 * img.get(x, y, c) as u32;
                for dy in 0..3 {
                    for dx in 0..3 {
                        acc += img.get(x + dx - 1, y + dy - 1, c) as u32;
                    }
                }
                out.set(x, y, c, ((acc as f64) / 13.0).round() as u8);
            }
        }
    }
    out
}

/// `degenerate + factor·(img − degenerate)`, rounded and clamped.
fn blend(degenerate: &Image, img: &Image, factor: f64) -> Image {
    let mut out = img.clone();
    for (o, (&d, &v)) in out
        .pixels_mut()
        .iter_mut()
        .zip(degenerate.pixels().iter().zip(img.pixels()))
    {
        let d = d as f64;
        *o = (d + factor * (v as f64 - d)).round().clamp(0.0, 255.0) as u8;
    }
    out
}

fn rotate(img: &Image, degrees: f64, fill: u8) -> Image {
    // Positive angles turn the content counter-clockwise on screen (y down).
    let t = degrees.to_radians();
    let (s, c) = t.sin_cos();
    affine_nearest(img, [c, -s, 0.0, s, c, 0.0], fill, true)
}

/// Inverse-mapped nearest-neighbour warp.
///
/// `inv = [a, b, tx, d, e, ty]` maps an output pixel centre `(x, y)` to the
/// source point `(a·x + b·y + tx, d·x + e·y + ty)`. When `centred` the
/// coordinates are taken relative to the image centre.
fn affine_nearest(img: &Image, inv: [f64; 6], fill: u8, centred: bool) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (cx, cy) = if centred {
        (w as f64 / 2.0, h as f64 / 2.0)
    } else {
        (0.0, 0.0)
    };
    let [a, b, tx, d, e, ty] = inv;
    let mut out = Image::filled(w, h, ch, fill).expect("shape copied from a valid image");
    for y in 0..h {
        let py = y as f64 + 0.5 - cy;
        for x in 0..w {
            let px = x as f64 + 0.5 - cx;
            let sx = (a * px + b * py + tx + cx).floor();
            let sy = (d * px + e * py + ty + cy).floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                for c in 0..ch {
                    out.set(x, y, c, img.get(sx as usize, sy as usize, c));
                }
            }
        }
    }
    out
}

/// Inverts every byte at or above `threshold`.
pub fn solarize(img: &Image, threshold: u32) -> Image {
    map_pixels(img, |_, v| if v as u32 >= threshold { 255 - v } else { v })
}

/// Keeps the top `keep_bits` bits of every byte.
pub fn posterize(img: &Image, keep_bits: u32) -> Image {
    let mask = !(((1u32 << (8 - keep_bits.min(8))) - 1) as u8);
    map_pixels(img, |_, v| v & mask)
}
