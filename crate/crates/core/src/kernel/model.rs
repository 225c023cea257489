//! Classification model: a 2-layer tanh MLP with softmax output, plus a
//! linear variant used by the serial-SGD oracle tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KernelError, Sample, SyntheticDataset};

/// Model shape. The flat parameter layout is `[W1 (h x d), b1 (h), W2 (C x h),
/// b2 (C)]` for the MLP and `[W (C x d), b (C)]` for the linear variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub features: usize,
    pub classes: usize,
    /// Hidden width; 0 selects the linear model.
    pub hidden: usize,
}

impl ModelSpec {
    pub fn mlp(features: usize, classes: usize, hidden: usize) -> Self {
        Self { features, classes, hidden }
    }

    pub fn linear(features: usize, classes: usize) -> Self {
        Self { features, classes, hidden: 0 }
    }

    pub fn is_linear(&self) -> bool {
        self.hidden == 0
    }

    pub fn param_len(&self) -> usize {
        if self.is_linear() {
            self.classes * self.features + self.classes
        } else {
            self.hidden * self.features
                + self.hidden
                + self.classes * self.hidden
                + self.classes
        }
    }
}

/// The model weights `w` held by the parameter server, with a monotone
/// version counter that advances by exactly one per applied update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub version: u64,
}

impl ParameterVector {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len], version: 0 }
    }

    /// Seeded initialization, uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in))
    /// per layer.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(spec.param_len());
        let layer = |n: usize, fan_in: usize, values: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
            let r = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..n).map(|_| rng.gen_range(-r..r)));
        };
        if spec.is_linear() {
            layer(spec.classes * spec.features, spec.features, &mut values, &mut rng);
            values.extend(std::iter::repeat(0.0).take(spec.classes));
        } else {
            layer(spec.hidden * spec.features, spec.features, &mut values, &mut rng);
            values.extend(std::iter::repeat(0.0).take(spec.hidden));
            layer(spec.classes * spec.hidden, spec.hidden, &mut values, &mut rng);
            values.extend(std::iter::repeat(0.0).take(spec.classes));
        }
        Self { values, version: 0 }
    }
}

/// Mean cross-entropy loss and gradient over a batch.
///
/// The gradient is the mean per-sample gradient plus the L2 term
/// `weight_decay * w`. Returns a hard error on feature-dimension mismatch;
/// non-finite results are reported so callers can abort diverged runs.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &[&Sample],
    weight_decay: f64,
) -> Result<(f64, Vec<f64>), KernelError> {
    if batch.is_empty() {
        return Err(KernelError::EmptyBatch);
    }
    if params.values.len() != spec.param_len() {
        return Err(KernelError::DimensionMismatch(format!(
            "parameter length {} does not match model ({})",
            params.values.len(),
            spec.param_len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.values.len()];
    for sample in batch {
        loss += per_sample_grad_into(spec, &params.values, sample, &mut grad)?;
    }
    let inv = 1.0 / batch.len() as f64;
    loss *= inv;
    for (g, w) in grad.iter_mut().zip(&params.values) {
        *g = *g * inv + weight_decay * w;
    }
    Ok((loss, grad))
}

/// Single-sample loss and gradient (no weight decay); used by the dynamic
/// switching criterion, which needs per-sample gradients.
pub fn per_sample_grad(
    spec: &ModelSpec,
    values: &[f64],
    sample: &Sample,
) -> Result<(f64, Vec<f64>), KernelError> {
    let mut grad = vec![0.0; values.len()];
    let loss = per_sample_grad_into(spec, values, sample, &mut grad)?;
    Ok((loss, grad))
}

/// Accumulates one sample's gradient into `grad`; returns the sample loss.
fn per_sample_grad_into(
    spec: &ModelSpec,
    values: &[f64],
    sample: &Sample,
    grad: &mut [f64],
) -> Result<f64, KernelError> {
    let d = spec.features;
    let c = spec.classes;
    if sample.features.len() != d {
        return Err(KernelError::DimensionMismatch(format!(
            "sample has {} features, model expects {d}",
            sample.features.len()
        )));
    }
    let x = &sample.features;

    if spec.is_linear() {
        let (w, b) = values.split_at(c * d);
        let mut logits = vec![0.0; c];
        for k in 0..c {
            logits[k] = b[k] + dot(&w[k * d..(k + 1) * d], x);
        }
        let (loss, dz) = softmax_ce(&logits, sample.label);
        let (gw, gb) = grad.split_at_mut(c * d);
        for k in 0..c {
            axpy(dz[k], x, &mut gw[k * d..(k + 1) * d]);
            gb[k] += dz[k];
        }
        Ok(loss)
    } else {
        let h = spec.hidden;
        let (w1, rest) = values.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);

        let mut a1 = vec![0.0; h];
        for j in 0..h {
            a1[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
        }
        let mut logits = vec![0.0; c];
        for k in 0..c {
            logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], &a1);
        }
        let (loss, dz2) = softmax_ce(&logits, sample.label);

        let (gw1, grest) = grad.split_at_mut(h * d);
        let (gb1, grest) = grest.split_at_mut(h);
        let (gw2, gb2) = grest.split_at_mut(c * h);

        let mut da1 = vec![0.0; h];
        for k in 0..c {
            axpy(dz2[k], &a1, &mut gw2[k * h..(k + 1) * h]);
            gb2[k] += dz2[k];
            axpy(dz2[k], &w2[k * h..(k + 1) * h], &mut da1);
        }
        for j in 0..h {
            let dz1 = da1[j] * (1.0 - a1[j] * a1[j]);
            axpy(dz1, x, &mut gw1[j * d..(j + 1) * d]);
            gb1[j] += dz1;
        }
        Ok(loss)
    }
}

/// Softmax cross-entropy: returns `(-ln p[label], p - onehot(label))`.
fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut dz: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    dz[label] -= 1.0;
    (loss, dz)
}

/// Fraction of test samples whose argmax class matches the label.
/// Argmax ties break toward the lowest class index.
pub fn test_accuracy(spec: &ModelSpec, params: &ParameterVector, dataset: &SyntheticDataset) -> f64 {
    let mut correct = 0usize;
    for sample in &dataset.test {
        if predict(spec, &params.values, sample) == sample.label {
            correct += 1;
        }
    }
    correct as f64 / dataset.test.len() as f64
}

fn predict(spec: &ModelSpec, values: &[f64], sample: &Sample) -> usize {
    let d = spec.features;
    let c = spec.classes;
    let x = &sample.features;
    let logits: Vec<f64> = if spec.is_linear() {
        let (w, b) = values.split_at(c * d);
        (0..c).map(|k| b[k] + dot(&w[k * d..(k + 1) * d], x)).collect()
    } else {
        let h = spec.hidden;
        let (w1, rest) = values.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        let a1: Vec<f64> =
            (0..h).map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh()).collect();
        (0..c).map(|k| b2[k] + dot(&w2[k * h..(k + 1) * h], &a1)).collect()
    };
    let mut best = 0;
    for k in 1..c {
        if logits[k] > logits[best] {
            best = k;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_dataset;

    fn refs(samples: &[Sample]) -> Vec<&Sample> {
        samples.iter().collect()
    }

    #[test]
    fn zero_params_balanced_binary_batch_gives_ln2() {
        let spec = ModelSpec::linear(4, 2);
        let params = ParameterVector::zeros(spec.param_len());
        let batch = vec![
            Sample { features: vec![1.0, 2.0, -1.0, 0.5], label: 0 },
            Sample { features: vec![-1.0, 0.0, 3.0, 1.5], label: 1 },
        ];
        let (loss, _) = loss_and_grad(&spec, &params, &refs(&batch), 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        // Oracle: central differences with step 1e-6 on 10 coordinates for
        // each of 5 random parameterizations, relative error < 1e-5.
        let data = make_dataset(3, 64, 16, 6, 3).unwrap();
        let spec = ModelSpec::mlp(6, 3, 8);
        let batch = refs(&data.train[..16]);
        for pseed in 0..5u64 {
            let params = ParameterVector::init(&spec, 100 + pseed);
            let (_, grad) = loss_and_grad(&spec, &params, &batch, 0.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(pseed);
            for _ in 0..10 {
                let i = rng.gen_range(0..params.values.len());
                let mut lo = params.clone();
                let mut hi = params.clone();
                let h = 1e-6;
                lo.values[i] -= h;
                hi.values[i] += h;
                let (l_lo, _) = loss_and_grad(&spec, &lo, &batch, 0.0).unwrap();
                let (l_hi, _) = loss_and_grad(&spec, &hi, &batch, 0.0).unwrap();
                let fd = (l_hi - l_lo) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "coord {i}: analytic {} vs fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn regularizer_only_gradient() {
        // Two samples with identical features and opposite labels make the
        // data gradient vanish whenever both logits agree; what remains is
        // exactly weight_decay * w.
        let spec = ModelSpec::linear(2, 2);
        let mut params = ParameterVector::zeros(spec.param_len());
        params.values = vec![0.1, 0.7, 0.1, -0.4, 0.2, 0.2];
        let batch = vec![
            Sample { features: vec![1.0, 0.0], label: 0 },
            Sample { features: vec![1.0, 0.0], label: 1 },
        ];
        let (_, grad) = loss_and_grad(&spec, &params, &refs(&batch), 0.1).unwrap();
        for (g, w) in grad.iter().zip(&params.values) {
            assert!((g - 0.1 * w).abs() < 1e-12, "grad {g} vs 0.1*{w}");
        }
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let spec = ModelSpec::linear(3, 2);
        let params = ParameterVector::zeros(spec.param_len());
        let bad = Sample { features: vec![1.0, 2.0], label: 0 };
        let batch = vec![&bad];
        assert!(matches!(
            loss_and_grad(&spec, &params, &batch, 0.0),
            Err(KernelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_params_predict_lowest_class() {
        let data = make_dataset(5, 40, 40, 4, 4).unwrap();
        let spec = ModelSpec::linear(4, 4);
        let params = ParameterVector::zeros(spec.param_len());
        let acc = test_accuracy(&spec, &params, &data);
        let freq0 =
            data.test.iter().filter(|s| s.label == 0).count() as f64 / data.test.len() as f64;
        assert_eq!(acc, freq0);
    }

    #[test]
    fn random_params_near_chance() {
        // Averaged over seeds, random linear models on 4 balanced classes sit
        // near 25% accuracy.
        let data = make_dataset(11, 400, 400, 16, 4).unwrap();
        let spec = ModelSpec::linear(16, 4);
        let mut acc = 0.0;
        for seed in 0..20 {
            let params = ParameterVector::init(&spec, 1000 + seed);
            acc += test_accuracy(&spec, &params, &data);
        }
        acc /= 20.0;
        assert!((acc - 0.25).abs() < 0.05, "mean accuracy {acc}");
    }
}
