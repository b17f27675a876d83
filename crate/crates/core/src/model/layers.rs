use ndarray::{s, Array1, Array2, Axis};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Real> {
    /// `weight` is `out_ch × (in_ch·9)`, columns ordered `(c, ky, kx)`.
    Conv {
        in_ch: usize,
        out_ch: usize,
        h: usize,
        w: usize,
        weight: Array2<T>,
        bias: Array1<T>,
    },
    Pool {
        c: usize,
        h: usize,
        w: usize,
    },
    Relu,
    Flatten,
    /// `weight` is `in_dim × out_dim`.
    Fc {
        weight: Array2<T>,
        bias: Array1<T>,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<T: Real> {
    None,
    /// Transposed im2col buffer, `(in_ch·9) × (batch·h·w)`.
    Cols(Array2<T>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<u32>),
}

impl<T: Real> Layer<T> {
    pub(crate) fn conv(in_ch: usize, out_ch: usize, h: usize, w: usize, mut init: impl FnMut(usize) -> T) -> Self {
        let weight = Array2::from_shape_fn((out_ch, in_ch * 9), |_| init(0));
        Layer::Conv {
            in_ch,
            out_ch,
            h,
            w,
            weight,
            bias: Array1::zeros(out_ch),
        }
    }

    pub(crate) fn fc(in_dim: usize, out_dim: usize, mut init: impl FnMut(usize) -> T) -> Self {
        Layer::Fc {
            weight: Array2::from_shape_fn((in_dim, out_dim), |_| init(0)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn params(&self) -> Option<(&Array2<T>, &Array1<T>)> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::Fc { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Array2<T>, &mut Array1<T>)> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::Fc { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }

    pub(crate) fn forward(&self, x: &Array2<T>, retain: bool) -> (Array2<T>, Cache<T>) {
        match self {
            Layer::Conv { in_ch, out_ch, h, w, weight, bias } => {
                let cols = im2col(x, *in_ch, *h, *w);
                let mut out_t = weight.dot(&cols);
                for (mut row, &b) in out_t.axis_iter_mut(Axis(0)).zip(bias) {
                    row += b;
                }
                let y = channel_major_to_batch(&out_t, x.nrows(), *out_ch, h * w);
                (y, if retain { Cache::Cols(cols) } else { Cache::None })
            }
            Layer::Pool { c, h, w } => {
                let (y, idx) = max_pool(x, *c, *h, *w);
                (y, if retain { Cache::Argmax(idx) } else { Cache::None })
            }
            Layer::Relu => (x.mapv(|v| v.max(T::zero())), Cache::None),
            Layer::Flatten => (x.clone(), Cache::None),
            Layer::Fc { weight, bias } => (x.dot(weight) + bias, Cache::None),
        }
    }

    /// Returns the gradient with respect to the layer input (if requested)
    /// and the parameter gradients.
    pub(crate) fn backward(
        &self,
        x: &Array2<T>,
        cache: &Cache<T>,
        dy: &Array2<T>,
        need_input_grad: bool,
    ) -> (Option<Array2<T>>, Option<(Array2<T>, Array1<T>)>) {
        match (self, cache) {
            (Layer::Conv { in_ch, out_ch, h, w, weight, .. }, Cache::Cols(cols)) => {
                let dy_t = batch_to_channel_major(dy, *out_ch, h * w);
                let dw = dy_t.dot(&cols.t());
                let db = dy_t.sum_axis(Axis(1));
                let dx = need_input_grad.then(|| {
                    let dcols = weight.t().dot(&dy_t);
                    col2im(&dcols, x.nrows(), *in_ch, *h, *w)
                });
                (dx, Some((dw, db)))
            }
            (Layer::Pool { .. }, Cache::Argmax(idx)) => {
                let mut dx = Array2::zeros(x.dim());
                let cols_in = x.ncols();
                let cols_out = dy.ncols();
                let dx_flat = dx.as_slice_mut().expect("fresh array is contiguous");
                for (b, row) in dy.outer_iter().enumerate() {
                    for (j, &g) in row.iter().enumerate() {
                        dx_flat[b * cols_in + idx[b * cols_out + j] as usize] += g;
                    }
                }
                (Some(dx), None)
            }
            (Layer::Relu, _) => {
                let mut dx = dy.clone();
                dx.zip_mut_with(x, |g, &v| {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                });
                (Some(dx), None)
            }
            (Layer::Flatten, _) => (Some(dy.clone()), None),
            (Layer::Fc { weight, .. }, _) => {
                let dw = x.t().dot(dy);
                let db = dy.sum_axis(Axis(0));
                let dx = need_input_grad.then(|| dy.dot(&weight.t()));
                (dx, Some((dw, db)))
            }
            (layer, _) => unreachable!("cache does not match layer {layer:?}"),
        }
    }
}

/// Builds the transposed patch matrix: row `c·9 + ky·3 + kx`, column
/// `b·h·w + y·w + x` holds input `(b, c, y+ky−1, x+kx−1)`, zero outside.
fn im2col<T: Real>(x: &Array2<T>, c: usize, h: usize, w: usize) -> Array2<T> {
    let batch = x.nrows();
    let hw = h * w;
    let mut cols = Array2::<T>::zeros((c * 9, batch * hw));
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("fresh array is contiguous");
    let row_len = batch * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let r = (ci * 9 + ky * 3 + kx) * row_len;
                for b in 0..batch {
                    let plane = &src[b * c * hw + ci * hw..b * c * hw + (ci + 1) * hw];
                    let out = &mut dst[r + b * hw..r + (b + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                        let shift = kx as isize - 1;
                        let out_row = &mut out[y * w + x0..y * w + x1];
                        let start = (sy * w) as isize + x0 as isize + shift;
                        let in_row = &plane[start as usize..start as usize + (x1 - x0)];
                        out_row.copy_from_slice(in_row);
                    }
                }
            }
        }
    }
    cols
}

/// Scatters a transposed patch-gradient matrix back onto the input layout.
fn col2im<T: Real>(dcols: &Array2<T>, batch: usize, c: usize, h: usize, w: usize) -> Array2<T> {
    let hw = h * w;
    let mut dx = Array2::<T>::zeros((batch, c * hw));
    let dcols = dcols.as_standard_layout();
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().expect("fresh array is contiguous");
    let row_len = batch * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let r = (ci * 9 + ky * 3 + kx) * row_len;
                for b in 0..batch {
                    let grads = &src[r + b * hw..r + (b + 1) * hw];
                    let plane = &mut dst[b * c * hw + ci * hw..b * c * hw + (ci + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                        let shift = kx as isize - 1;
                        let start = ((sy * w) as isize + x0 as isize + shift) as usize;
                        let g_row = &grads[y * w + x0..y * w + x1];
                        for (d, &g) in plane[start..start + (x1 - x0)].iter_mut().zip(g_row) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `(channels × batch·hw)` to `(batch × channels·hw)`.
fn channel_major_to_batch<T: Real>(m: &Array2<T>, batch: usize, channels: usize, hw: usize) -> Array2<T> {
    let mut out = Array2::<T>::zeros((batch, channels * hw));
    for o in 0..channels {
        for b in 0..batch {
            out.slice_mut(s![b, o * hw..(o + 1) * hw])
                .assign(&m.slice(s![o, b * hw..(b + 1) * hw]));
        }
    }
    out
}

fn batch_to_channel_major<T: Real>(m: &Array2<T>, channels: usize, hw: usize) -> Array2<T> {
    let batch = m.nrows();
    let mut out = Array2::<T>::zeros((channels, batch * hw));
    for o in 0..channels {
        for b in 0..batch {
            out.slice_mut(s![o, b * hw..(b + 1) * hw])
                .assign(&m.slice(s![b, o * hw..(o + 1) * hw]));
        }
    }
    out
}

fn max_pool<T: Real>(x: &Array2<T>, c: usize, h: usize, w: usize) -> (Array2<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let batch = x.nrows();
    let mut y = Array2::<T>::zeros((batch, c * oh * ow));
    let mut idx = vec![0u32; batch * c * oh * ow];
    for (b, row) in x.outer_iter().enumerate() {
        let mut out_row = y.row_mut(b);
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = ci * h * w + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let cand = ci * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                        if row[cand] > row[best] {
                            best = cand;
                        }
                    }
                    let j = ci * oh * ow + oy * ow + ox;
                    out_row[j] = row[best];
                    idx[b * c * oh * ow + j] = best as u32;
                }
            }
        }
    }
    (y, idx)
}
