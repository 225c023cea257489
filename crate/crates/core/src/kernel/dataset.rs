//! Synthetic Gaussian-mixture classification dataset.
//!
//! Class means are placed on a seeded random direction scaled to a fixed
//! separation, giving a workload that a linear model can learn well above
//! chance while still leaving room for optimization dynamics to differ.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::KernelError;

/// One labeled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A seeded train/test dataset. Regeneration from the same seed is
/// bit-identical; train and test partitions are disjoint by construction.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub features: usize,
    pub classes: usize,
}

/// Distance between adjacent class means, in feature-space units.
const CLASS_SEPARATION: f64 = 3.0;
/// Within-class noise standard deviation.
const NOISE_SIGMA: f64 = 1.0;

/// Generates a deterministic Gaussian-mixture dataset.
///
/// Labels are assigned round-robin so that every class appears in both
/// partitions. Rejects `classes > n_train` (a train class would be empty).
pub fn make_dataset(
    seed: u64,
    n_train: usize,
    n_test: usize,
    features: usize,
    classes: usize,
) -> Result<SyntheticDataset, KernelError> {
    if n_train == 0 || n_test == 0 || features == 0 || classes == 0 {
        return Err(KernelError::InvalidConfig(
            "n_train, n_test, features, classes must all be >= 1".into(),
        ));
    }
    if classes > n_train || classes > n_test {
        return Err(KernelError::InvalidConfig(format!(
            "classes ({classes}) exceeds partition size (train {n_train}, test {n_test})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Class means: unit directions scaled to a fixed separation.
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut m: Vec<f64> = (0..features).map(|_| standard_normal(&mut rng)).collect();
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut m {
            *v *= CLASS_SEPARATION / norm;
        }
        means.push(m);
    }

    let draw_split = |n: usize, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|i| {
                let label = i % classes;
                let features = means[label]
                    .iter()
                    .map(|&mu| mu + NOISE_SIGMA * standard_normal(rng))
                    .collect();
                Sample { features, label }
            })
            .collect::<Vec<_>>()
    };

    let train = draw_split(n_train, &mut rng);
    let test = draw_split(n_test, &mut rng);

    Ok(SyntheticDataset { seed, train, test, features, classes })
}

/// Box-Muller transform; avoids depending on distribution crates whose
/// sampling algorithms may change between versions.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
