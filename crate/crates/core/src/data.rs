//! Labelled datasets and the synthetic generators used by experiments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, tag};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Feature matrix (one example per row) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::LabelCount {
                features: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Copy with row `i` replaced by `(x, y)`.
    pub fn replace_row(&self, i: usize, x: &[f64], y: usize) -> Result<Self, DataError> {
        let mut data = self.features.data().to_vec();
        let d = self.feature_dim();
        data[i * d..(i + 1) * d].copy_from_slice(x);
        let mut labels = self.labels.clone();
        labels[i] = y;
        Dataset::new(
            Tensor::new(self.features.shape().to_vec(), data)?,
            labels,
            self.num_classes,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Class `c` centred at `+-2 e_{c mod d}`, isotropic Gaussian spread.
    GaussianBlobs,
    /// Two interleaved half circles in the first two coordinates.
    TwoMoonsLike,
    /// Uniform bits, label = parity; noise flips labels.
    ParityBits,
    /// `s x s` images with a lit row or column per class.
    TinyGridImages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub n: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(
        generator: Generator,
        n: usize,
        feature_dim: usize,
        num_classes: usize,
        noise_level: f64,
        seed: u64,
    ) -> Self {
        Self {
            generator,
            n,
            feature_dim,
            num_classes,
            noise_level,
            seed,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.feature_dim == 0 || self.num_classes == 0 {
            return bad("feature_dim and num_classes must be positive".into());
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise_level must be finite and >= 0, got {}", self.noise_level));
        }
        match self.generator {
            Generator::GaussianBlobs => Ok(()),
            Generator::TwoMoonsLike if self.num_classes != 2 || self.feature_dim < 2 => {
                bad("two_moons_like needs 2 classes and feature_dim >= 2".into())
            }
            Generator::ParityBits if self.num_classes != 2 => bad("parity_bits needs 2 classes".into()),
            Generator::ParityBits if self.noise_level > 1.0 => {
                bad("parity_bits noise_level is a flip probability in [0, 1]".into())
            }
            Generator::TinyGridImages => {
                let side = grid_side(self.feature_dim);
                if side * side != self.feature_dim {
                    bad(format!(
                        "tiny_grid_images needs a square feature_dim, got {}",
                        self.feature_dim
                    ))
                } else if self.num_classes > 2 * side {
                    bad(format!("tiny_grid_images supports at most {} classes", 2 * side))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Training sample drawn from stream `(seed, DATA)`.
    pub fn generate(&self) -> Result<Dataset, DataError> {
        self.validate()?;
        self.draw(self.n, &mut rng::stream(self.seed, &[tag::DATA]))
    }

    /// Held-out sample of size `n` from the same distribution on the disjoint
    /// stream `(seed, TEST)`.
    pub fn generate_test(&self, n: usize) -> Result<Dataset, DataError> {
        self.validate()?;
        self.draw(n, &mut rng::stream(self.seed, &[tag::TEST]))
    }

    /// Copy keyed to replication `r`.
    pub fn for_replication(&self, r: u64) -> Self {
        Self {
            seed: rng::derive(self.seed, &[tag::REPLICATION, r]),
            ..self.clone()
        }
    }

    /// A single fresh example, drawn from `rng`.
    pub fn draw_one(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, usize), DataError> {
        self.validate()?;
        let d = self.draw(1, rng)?;
        Ok((d.features.row(0).to_vec(), d.labels[0]))
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset, DataError> {
        let d = self.feature_dim;
        let k = self.num_classes;
        let noise = self.noise_level;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = vec![0.0; d];
            let y = match self.generator {
                Generator::GaussianBlobs => {
                    let c = rng.random_range(0..k);
                    x[c % d] = if (c / d).is_multiple_of(2) { 2.0 } else { -2.0 };
                    add_gaussian(rng, &mut x, noise);
                    c
                }
                Generator::TwoMoonsLike => {
                    let c = rng.random_range(0..2);
                    let theta = rng.random_range(0.0..std::f64::consts::PI);
                    if c == 0 {
                        x[0] = theta.cos();
                        x[1] = theta.sin();
                    } else {
                        x[0] = 1.0 - theta.cos();
                        x[1] = 0.5 - theta.sin();
                    }
                    add_gaussian(rng, &mut x, noise);
                    c
                }
                Generator::ParityBits => {
                    let mut parity = 0;
                    for v in &mut x {
                        let bit = rng.random_range(0..2usize);
                        *v = bit as f64;
                        parity ^= bit;
                    }
                    if noise > 0.0 && rng.random_bool(noise) {
                        parity ^= 1;
                    }
                    parity
                }
                Generator::TinyGridImages => {
                    let side = grid_side(d);
                    let c = rng.random_range(0..k);
                    for j in 0..side {
                        let idx = if c < side { c * side + j } else { j * side + (c - side) };
                        x[idx] = 1.0;
                    }
                    add_gaussian(rng, &mut x, noise);
                    c
                }
            };
            features.extend(x);
            labels.push(y);
        }
        Dataset::new(Tensor::new(vec![n, d], features)?, labels, k)
    }
}

fn grid_side(d: usize) -> usize {
    (d as f64).sqrt().round() as usize
}

fn add_gaussian(rng: &mut ChaCha8Rng, x: &mut [f64], scale: f64) {
    if scale > 0.0 {
        for v in x {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

#[cfg(test)]
pub(crate) fn toy_separable(n: usize, seed: u64) -> Dataset {
    DatasetSpec::new(Generator::GaussianBlobs, n, 4, 2, 0.3, seed)
        .generate()
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_labels_are_xor() {
        let d = DatasetSpec::new(Generator::ParityBits, 200, 2, 2, 0.0, 4)
            .generate()
            .unwrap();
        for (x, &y) in d.features.iter_rows().zip(&d.labels) {
            assert_eq!(y, (x[0] as usize) ^ (x[1] as usize));
        }
    }

    #[test]
    fn noiseless_blobs_sit_on_centroids() {
        let d = DatasetSpec::new(Generator::GaussianBlobs, 50, 3, 5, 0.0, 1)
            .generate()
            .unwrap();
        for (x, &y) in d.features.iter_rows().zip(&d.labels) {
            let mut c = [0.0; 3];
            c[y % 3] = if y < 3 { 2.0 } else { -2.0 };
            assert_eq!(x, &c[..]);
        }
    }

    #[test]
    fn generation_is_deterministic_and_splits_differ() {
        for g in [
            Generator::GaussianBlobs,
            Generator::TwoMoonsLike,
            Generator::ParityBits,
            Generator::TinyGridImages,
        ] {
            let spec = DatasetSpec::new(g, 30, 4, 2, 0.2, 9);
            assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
            assert_ne!(spec.generate().unwrap(), spec.generate_test(30).unwrap());
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(DatasetSpec::new(Generator::GaussianBlobs, 0, 2, 2, 0.0, 0)
            .generate()
            .is_err());
        assert!(DatasetSpec::new(Generator::TinyGridImages, 5, 5, 2, 0.0, 0)
            .generate()
            .is_err());
        assert!(DatasetSpec::new(Generator::ParityBits, 5, 3, 3, 0.0, 0)
            .generate()
            .is_err());
        assert!(serde_json::from_str::<DatasetSpec>(
            r#"{"generator": "imagenet", "n": 1, "feature_dim": 1, "num_classes": 1}"#
        )
        .is_err());
    }

    #[test]
    fn replace_row_changes_one_example() {
        let d = toy_separable(5, 0);
        let r = d.replace_row(2, &[9.0, 9.0, 9.0, 9.0], 1).unwrap();
        assert_eq!(r.features.row(2), &[9.0; 4]);
        assert_eq!(r.features.row(1), d.features.row(1));
    }
}
