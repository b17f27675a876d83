//! Softmax, normalized entropy, the entropy-to-magnitude map, cross-entropy,
//! the entropy regularizer and their analytic gradients with respect to logits.
//!
//! Everything here is a pure function. Loss math is normally run in `f64`;
//! the types are generic so that `f32` network outputs can be inspected
//! without conversion when precision does not matter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Entries below this value contribute nothing to `Σ p log p`.
pub const LOG_FLOOR: f64 = 1e-12;

/// Network output before the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector<T: Real = f64> {
    logits: Vec<T>,
}

impl<T: Real> LogitVector<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {}",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("logit {i} is not finite")));
        }
        Ok(Self { logits })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.logits
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }
}

/// A categorical distribution over `k ≥ 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T: Real = f64> {
    probs: Vec<T>,
}

impl<T: Real> ProbVector<T> {
    /// Validates non-negativity and that the entries sum to one.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        let k = probs.len();
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= T::zero())) {
            return Err(Error::InvalidInput(format!(
                "probability {i} is negative or not finite"
            )));
        }
        let sum: f64 = probs.iter().map(|p| p.as_f64()).sum();
        let tol = f64::max(1e-9, 16.0 * T::epsilon().as_f64() * k as f64);
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        let p = T::one() / T::of(k as f64);
        Ok(Self { probs: vec![p; k] })
    }

    pub fn one_hot(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::OutOfRange { index: class, len: k });
        }
        let mut probs = vec![T::zero(); k];
        probs[class] = T::one();
        Self::new(probs)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }
}

/// Which sign the entropy regularizer carries when added to cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignMode {
    /// `+H(p)/log k`: descending the total loss lowers entropy.
    #[default]
    EntropyMinimizing,
    /// `(1/log k)·Σ p log p` exactly as printed; descending it raises entropy.
    LiteralEq3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub use_ent_loss: bool,
    pub lambda: f64,
    pub sign_mode: SignMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            use_ent_loss: false,
            lambda: 1.0,
            sign_mode: SignMode::EntropyMinimizing,
        }
    }
}

impl LossConfig {
    pub fn cross_entropy_only() -> Self {
        Self::default()
    }

    pub fn with_ent_loss(lambda: f64) -> Self {
        Self {
            use_ent_loss: true,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "EntLoss lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// True when the regularizer actually contributes to the loss.
    pub fn regularizer_active(&self) -> bool {
        self.use_ent_loss && self.lambda != 0.0
    }
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &LogitVector<T>) -> ProbVector<T> {
    let z = logits.as_slice();
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut probs: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = probs.iter().copied().sum();
    for p in &mut probs {
        *p /= total;
    }
    ProbVector { probs }
}

/// Softmax over a raw slice, validating it first.
pub fn softmax_slice<T: Real>(logits: &[T]) -> Result<ProbVector<T>> {
    Ok(softmax(&LogitVector::new(logits.to_vec())?))
}

fn plogp_sum<T: Real>(p: &[T]) -> T {
    let floor = T::of(LOG_FLOOR);
    p.iter()
        .filter(|&&v| v >= floor)
        .map(|&v| v * v.ln())
        .sum()
}

fn log_k<T: Real>(k: usize) -> T {
    T::of(k as f64).ln()
}

/// Shannon entropy divided by `log k`, in `[0, 1]`.
pub fn normalized_entropy<T: Real>(p: &ProbVector<T>) -> T {
    let h = -plogp_sum(p.as_slice()) / log_k::<T>(p.k());
    h.max(T::zero()).min(T::one())
}

/// Augmentation magnitude `1 + (1/log k)·Σ p log p`, clamped to `[0, 1]`.
pub fn magnitude<T: Real>(p: &ProbVector<T>) -> T {
    let m = T::one() + plogp_sum(p.as_slice()) / log_k::<T>(p.k());
    m.max(T::zero()).min(T::one())
}

/// The entropy regularizer alone, without the `lambda` weight.
pub fn ent_loss<T: Real>(p: &ProbVector<T>, cfg: &LossConfig) -> T {
    let s = plogp_sum(p.as_slice()) / log_k::<T>(p.k());
    match cfg.sign_mode {
        SignMode::LiteralEq3 => s,
        SignMode::EntropyMinimizing => -s,
    }
}

fn check_label(label: usize, k: usize) -> Result<()> {
    if label >= k {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    Ok(())
}

/// `log Σ exp(z)` without overflow.
pub fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// `−log softmax(z)[label]`, evaluated in log space.
pub fn cross_entropy<T: Real>(logits: &LogitVector<T>, label: usize) -> Result<T> {
    check_label(label, logits.k())?;
    let z = logits.as_slice();
    Ok(log_sum_exp(z) - z[label])
}

/// Cross-entropy plus the weighted regularizer, and the gradient with
/// respect to the logits.
///
/// CE contributes `p − onehot(label)`. The regularizer uses
/// `∂/∂zⱼ Σᵢ pᵢ log pᵢ = pⱼ (log pⱼ − Σᵢ pᵢ log pᵢ)`.
pub fn total_loss_and_grad<T: Real>(
    logits: &LogitVector<T>,
    label: usize,
    cfg: &LossConfig,
) -> Result<(T, Vec<T>)> {
    check_label(label, logits.k())?;
    let p = softmax(logits);
    let ce = log_sum_exp(logits.as_slice()) - logits.as_slice()[label];
    let mut grad = p.as_slice().to_vec();
    grad[label] -= T::one();
    if !cfg.regularizer_active() {
        return Ok((ce, grad));
    }

    let k = p.k();
    let inv_log_k = T::one() / log_k::<T>(k);
    let lambda = T::of(cfg.lambda);
    let sign = match cfg.sign_mode {
        SignMode::LiteralEq3 => T::one(),
        SignMode::EntropyMinimizing => -T::one(),
    };
    let probs = p.as_slice();
    let s = plogp_sum(probs);
    let floor = T::of(LOG_FLOOR);
    let scale = lambda * sign * inv_log_k;
    for (g, &pj) in grad.iter_mut().zip(probs) {
        let log_pj = pj.max(floor).ln();
        *g += scale * pj * (log_pj - s);
    }
    let loss = ce + lambda * sign * s * inv_log_k;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&lv(&[0.0, 0.0])).as_slice(), &[0.5, 0.5]);
        for c in [-50.0, 0.0, 3.7, 200.0] {
            for p in softmax(&lv(&[c, c, c])).as_slice() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // 40-digit reference values.
        let expected = [
            0.665_240_955_774_821_9,
            0.244_728_471_054_797_65,
            0.090_030_573_170_380_46,
        ];
        let p = softmax(&lv(&[1.0, 0.0, -1.0]));
        for (a, b) in p.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_finite_logits() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY, 0.0]).is_err());
        assert!(LogitVector::new(vec![1.0]).is_err());
    }

    #[test]
    fn entropy_and_magnitude_examples() {
        let u = ProbVector::<f64>::uniform(10).unwrap();
        assert!((normalized_entropy(&u) - 1.0).abs() < 1e-12);
        assert!(magnitude(&u).abs() < 1e-12);
        let oh = ProbVector::<f64>::one_hot(10, 3).unwrap();
        assert_eq!(normalized_entropy(&oh), 0.0);
        assert_eq!(magnitude(&oh), 1.0);

        let p = pv(&[0.7, 0.2, 0.1]);
        assert!((normalized_entropy(&p) - 0.729_846_699_162_097_5).abs() < 1e-14);
        assert!((magnitude(&p) - 0.270_153_300_837_902_5).abs() < 1e-14);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::<f64>::uniform(1).is_err());
    }

    #[test]
    fn ent_loss_examples() {
        let lit = LossConfig {
            sign_mode: SignMode::LiteralEq3,
            ..LossConfig::with_ent_loss(1.0)
        };
        let min = LossConfig::with_ent_loss(1.0);
        let oh = ProbVector::<f64>::one_hot(4, 0).unwrap();
        assert_eq!(ent_loss(&oh, &lit), 0.0);
        assert_eq!(ent_loss(&oh, &min), 0.0);
        let u = ProbVector::<f64>::uniform(10).unwrap();
        assert!((ent_loss(&u, &lit) + 1.0).abs() < 1e-12);
        assert!((ent_loss(&u, &min) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy(&lv(&[0.0, 0.0]), 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let big = cross_entropy(&lv(&[1000.0, 0.0]), 0).unwrap();
        assert!(big.is_finite() && big.abs() < 1e-300);
        // log(e + e² + e³) − 3 to 40 digits.
        let v = cross_entropy(&lv(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert!((v - 0.407_605_964_444_380_3).abs() < 1e-15);
        assert!(cross_entropy(&lv(&[1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn lambda_zero_is_plain_cross_entropy() {
        let z = lv(&[0.3, -1.2, 2.5, 0.0]);
        let ce_cfg = LossConfig::cross_entropy_only();
        let zero = LossConfig::with_ent_loss(0.0);
        let (l0, g0) = total_loss_and_grad(&z, 1, &ce_cfg).unwrap();
        let (l1, g1) = total_loss_and_grad(&z, 1, &zero).unwrap();
        assert_eq!(l0.to_bits(), l1.to_bits());
        assert_eq!(g0, g1);
        assert_eq!(l0, cross_entropy(&z, 1).unwrap());
        let p = softmax(&z);
        for (j, g) in g0.iter().enumerate() {
            let expect = p.as_slice()[j] - if j == 1 { 1.0 } else { 0.0 };
            assert!((g - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_logits_are_stationary_for_the_regularizer() {
        let z = lv(&[0.7; 6]);
        let (_, g_ce) = total_loss_and_grad(&z, 2, &LossConfig::cross_entropy_only()).unwrap();
        let (_, g) = total_loss_and_grad(&z, 2, &LossConfig::with_ent_loss(1.0)).unwrap();
        for (a, b) in g.iter().zip(&g_ce) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    // Central-difference oracle on the scalar loss only.
    fn fd_grad(z: &[f64], label: usize, cfg: &LossConfig, h: f64) -> Vec<f64> {
        let loss = |v: &[f64]| total_loss_and_grad(&lv(v), label, cfg).unwrap().0;
        (0..z.len())
            .map(|j| {
                let mut plus = z.to_vec();
                let mut minus = z.to_vec();
                plus[j] += h;
                minus[j] -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(1e-2f64, |m, v| m.max(v.abs()));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn magnitude_complements_entropy(raw in proptest::collection::vec(0.0f64..1.0, 2..20)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let p = pv(&raw.iter().map(|v| v / total).collect::<Vec<_>>());
            prop_assert!((magnitude(&p) + normalized_entropy(&p) - 1.0).abs() < 1e-12);
            let lit = LossConfig { sign_mode: SignMode::LiteralEq3, ..LossConfig::with_ent_loss(1.0) };
            let min = LossConfig::with_ent_loss(1.0);
            prop_assert_eq!(ent_loss(&p, &lit), -ent_loss(&p, &min));
        }

        #[test]
        fn magnitude_is_monotone_in_entropy(a in proptest::collection::vec(0.01f64..1.0, 5), b in proptest::collection::vec(0.01f64..1.0, 5)) {
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); pv(&v.iter().map(|x| x / s).collect::<Vec<_>>()) };
            let (p1, p2) = (norm(&a), norm(&b));
            if normalized_entropy(&p1) < normalized_entropy(&p2) {
                prop_assert!(magnitude(&p1) > magnitude(&p2));
            }
        }

        #[test]
        fn softmax_shift_invariance(z in proptest::collection::vec(-20.0f64..20.0, 2..12), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softmax(&lv(&z));
            let b = softmax(&lv(&shifted));
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn analytic_gradient_matches_finite_differences(
            z in proptest::collection::vec(-4.0f64..4.0, 2..11),
            label_seed in 0usize..100,
            lambda_idx in 0usize..3,
            literal in any::<bool>(),
        ) {
            let label = label_seed % z.len();
            let cfg = LossConfig {
                use_ent_loss: true,
                lambda: [0.0, 0.5, 1.0][lambda_idx],
                sign_mode: if literal { SignMode::LiteralEq3 } else { SignMode::EntropyMinimizing },
            };
            let (_, g) = total_loss_and_grad(&lv(&z), label, &cfg).unwrap();
            let fd = fd_grad(&z, label, &cfg, 1e-5);
            prop_assert!(max_rel_err(&g, &fd) <= 1e-6, "{:?} vs {:?}", g, fd);
        }
    }
}
