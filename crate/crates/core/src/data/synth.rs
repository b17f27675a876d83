//! Procedural handwritten-digit stand-in with MNIST's shape (28×28×1, 10
//! classes), for machines without the real files.

use super::{Dataset, Split};
use crate::error::Result;
use crate::image::Image;
use crate::rng::{AugRng, Stream};

const SIDE: usize = 28;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64) -> Stroke {
    (0..=16)
        .map(|i| {
            let t = i as f64 / 16.0 * std::f64::consts::TAU;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Polyline templates in the unit square, y pointing down.
fn template(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.28, 0.4)],
        1 => vec![vec![(0.36, 0.24), (0.52, 0.1), (0.52, 0.9)]],
        2 => vec![vec![(0.25, 0.3), (0.35, 0.12), (0.6, 0.1), (0.75, 0.25), (0.7, 0.45), (0.25, 0.9), (0.78, 0.9)]],
        3 => vec![vec![(0.25, 0.15), (0.7, 0.15), (0.45, 0.45), (0.72, 0.6), (0.7, 0.8), (0.5, 0.9), (0.25, 0.85)]],
        4 => vec![vec![(0.65, 0.9), (0.65, 0.1), (0.2, 0.65), (0.8, 0.65)]],
        5 => vec![vec![(0.75, 0.1), (0.3, 0.1), (0.28, 0.45), (0.6, 0.42), (0.75, 0.6), (0.65, 0.85), (0.28, 0.88)]],
        6 => vec![vec![(0.7, 0.12), (0.4, 0.3), (0.28, 0.6), (0.35, 0.85), (0.6, 0.88), (0.72, 0.7), (0.6, 0.52), (0.3, 0.6)]],
        7 => vec![vec![(0.22, 0.12), (0.78, 0.12), (0.45, 0.9)]],
        8 => vec![ellipse(0.5, 0.3, 0.2, 0.18), ellipse(0.5, 0.69, 0.25, 0.21)],
        _ => vec![ellipse(0.5, 0.32, 0.22, 0.2), vec![(0.72, 0.32), (0.6, 0.9)]],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn render(digit: usize, rng: &mut AugRng) -> Image {
    let angle = (rng.unit() - 0.5) * 0.45;
    let scale = 17.0 + rng.unit() * 5.0;
    let slant = (rng.unit() - 0.5) * 0.5;
    let (tx, ty) = ((rng.unit() - 0.5) * 4.0, (rng.unit() - 0.5) * 4.0);
    let width = 1.0 + rng.unit() * 1.4;
    let ink = 170.0 + rng.unit() * 85.0;
    let (s, c) = f64::sin_cos(angle);
    let centre = SIDE as f64 / 2.0;

    let strokes: Vec<Stroke> = template(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x - 0.5 + 0.035 * rng.normal(), y - 0.5 + 0.035 * rng.normal());
                    let x = x + slant * y;
                    let (x, y) = (c * x - s * y, s * x + c * y);
                    (centre + tx + scale * x, centre + ty + scale * y)
                })
                .collect()
        })
        .collect();

    let mut px = vec![0u8; SIDE * SIDE];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|st| st.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let cover = (width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            let noise = 10.0 * rng.normal();
            px[y * SIDE + x] = (cover * ink + noise.max(0.0) * (1.0 - cover)).round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(SIDE, SIDE, 1, px).expect("fixed 28×28 shape")
}

fn split(n: usize, seed: u64, which: Split) -> Result<Dataset> {
    let tag = match which {
        Split::Train => 0,
        Split::Test => 1,
    };
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % 10;
        let mut rng = AugRng::for_stream(Stream::Synth, seed, tag, i as u64);
        images.push(render(digit, &mut rng));
        labels.push(digit);
    }
    Dataset::new(images, labels, 10, which)
}

/// Balanced synthetic digits; the test split is normalized with train statistics.
pub fn synth_digits(n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let train = split(n_train, seed, Split::Train)?;
    let test = split(n_test, seed, Split::Test)?.with_stats(train.mean.clone(), train.std.clone());
    Ok((train, test))
}
