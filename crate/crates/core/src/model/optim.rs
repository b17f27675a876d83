use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// `0.5·lr0·(1 + cos(π·epoch/total_epochs))`.
    Cosine { total_epochs: usize },
    /// `lr0·gamma^(number of milestones ≤ epoch)`.
    MultiStep { milestones: Vec<usize>, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr0: 0.05,
            momentum: 0.9,
            nesterov: false,
            weight_decay: 5e-4,
            schedule: Schedule::Cosine { total_epochs: 20 },
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be non-negative, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        match &self.schedule {
            Schedule::Cosine { total_epochs: 0 } => Err(Error::Config("cosine schedule needs total_epochs ≥ 1".into())),
            Schedule::MultiStep { gamma, .. } if !(*gamma > 0.0) => {
                Err(Error::Config(format!("multi-step gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        match &self.schedule {
            Schedule::Cosine { total_epochs } => {
                let t = (epoch as f64 / *total_epochs as f64).min(1.0);
                0.5 * self.lr0 * (1.0 + (std::f64::consts::PI * t).cos())
            }
            Schedule::MultiStep { milestones, gamma } => {
                let passed = milestones.iter().filter(|&&m| m <= epoch).count();
                self.lr0 * gamma.powi(passed as i32)
            }
        }
    }
}

/// SGD with momentum and L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T: Real> {
    pub config: OptimizerConfig,
    velocity: Vec<Option<(Array2<T>, Array1<T>)>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(config: OptimizerConfig, net: &Network<T>) -> Self {
        let velocity = net
            .layers
            .iter()
            .map(|l| l.params().map(|(w, b)| (Array2::zeros(w.dim()), Array1::zeros(b.dim()))))
            .collect();
        Self { config, velocity }
    }

    pub fn velocity_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.velocity.iter().flatten() {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_velocity_flat(&mut self, values: &[T]) -> Result<()> {
        let n: usize = self.velocity.iter().flatten().map(|(w, b)| w.len() + b.len()).sum();
        if values.len() != n {
            return Err(Error::InvalidInput(format!("expected {n} velocity values, got {}", values.len())));
        }
        let mut it = values.iter().copied();
        for (w, b) in self.velocity.iter_mut().flatten() {
            w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `v ← μ·v + g + λ·w`, then `w ← w − lr·v` (or `w − lr·(g + λ·w + μ·v)` with Nesterov).
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, epoch: usize) -> Result<()> {
        if grads.layers.len() != self.velocity.len() {
            return Err(Error::InvalidInput("gradients do not match the network".into()));
        }
        let lr = T::of(self.config.lr(epoch));
        let mu = T::of(self.config.momentum);
        let wd = T::of(self.config.weight_decay);
        let nesterov = self.config.nesterov;
        for ((layer, g), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            let (Some((w, b)), Some((gw, gb)), Some((vw, vb))) = (layer.params_mut(), g, v) else {
                continue;
            };
            if w.dim() != gw.dim() || b.dim() != gb.dim() {
                return Err(Error::InvalidInput("gradient shape mismatch".into()));
            }
            let update = |p: &mut T, &g: &T, vel: &mut T| {
                let g = g + wd * *p;
                *vel = mu * *vel + g;
                let step = if nesterov { g + mu * *vel } else { *vel };
                *p -= lr * step;
            };
            Zip::from(&mut *w).and(gw).and(&mut *vw).for_each(update);
            Zip::from(&mut *b).and(gb).and(&mut *vb).for_each(update);
        }
        Ok(())
    }
}
