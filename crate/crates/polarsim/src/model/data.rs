//! Seeded synthetic classification data.
//!
//! A 10-class prototype dataset: each class gets a random prototype image and
//! samples are noisy copies of it. All values stay inside `[0, 1)` so inputs
//! quantize directly to unsigned fixed point. The generator is a pure
//! function of `(spec, seed)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamKind};

/// Shape and size of the synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Number of classes.
    pub classes: usize,
    /// Image channels.
    pub channels: usize,
    /// Image height.
    pub height: usize,
    /// Image width.
    pub width: usize,
    /// Training samples.
    pub train: usize,
    /// Test samples.
    pub test: usize,
    /// Std-dev of the additive Gaussian noise around each class prototype.
    pub noise: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 10,
            channels: 1,
            height: 8,
            width: 8,
            train: 1500,
            test: 500,
            noise: 0.18,
        }
    }
}

impl DatasetSpec {
    /// Flattened feature count per sample.
    #[must_use]
    pub fn features(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// One split of generated data: row-major images plus labels.
#[derive(Debug, Clone)]
pub struct Split {
    /// `samples * features` values in `[0, 1)`.
    pub images: Vec<f32>,
    /// One label per sample.
    pub labels: Vec<usize>,
    /// Features per sample.
    pub features: usize,
}

impl Split {
    /// Number of samples.
    #[must_use]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when the split holds no samples.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Image `i` as a feature slice.
    #[must_use]
    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.features..(i + 1) * self.features]
    }
}

/// Generated dataset with train/test splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Generator parameters (also carried into artifacts for reproducibility).
    pub spec: DatasetSpec,
    /// Training split.
    pub train: Split,
    /// Test split.
    pub test: Split,
}

/// Generate the dataset for `(spec, seed)`.
///
/// Prototypes are drawn uniformly from `[0.15, 0.85]`; each sample adds
/// `N(0, noise^2)` and clamps back into `[0, 1)`. Labels cycle round-robin so
/// every class is equally represented.
#[must_use]
pub fn generate(spec: &DatasetSpec, seed: u64) -> Dataset {
    let d = spec.features();
    let mut proto_rng = stream(seed, StreamKind::Dataset, 0, 0);
    let mut prototypes = vec![0.0f32; spec.classes * d];
    for p in prototypes.iter_mut() {
        *p = proto_rng.gen_range(0.15f32..0.85f32);
    }

    let noise = Normal::new(0.0f64, spec.noise.max(0.0)).expect("valid stddev");
    let make_split = |count: usize, tag: u64| -> Split {
        let mut rng = stream(seed, StreamKind::Dataset, 1, tag);
        let mut images = vec![0.0f32; count * d];
        let mut labels = vec![0usize; count];
        for i in 0..count {
            let class = i % spec.classes;
            labels[i] = class;
            for k in 0..d {
                let base = f64::from(prototypes[class * d + k]);
                let v = base + noise.sample(&mut rng);
                images[i * d + k] = v.clamp(0.0, 0.999_9) as f32;
            }
        }
        Split {
            images,
            labels,
            features: d,
        }
    };

    let train = make_split(spec.train, 0);
    let test = make_split(spec.test, 1);
    Dataset {
        spec: *spec,
        train,
        test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec::default();
        let a = generate(&spec, 7);
        let b = generate(&spec, 7);
        assert_eq!(a.train.images, b.train.images);
        assert_eq!(a.test.labels, b.test.labels);
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let spec = DatasetSpec {
            noise: 0.5,
            train: 200,
            test: 50,
            ..DatasetSpec::default()
        };
        let d = generate(&spec, 1);
        for &v in d.train.images.iter().chain(&d.test.images) {
            assert!((0.0..1.0).contains(&v), "value {v} escaped [0,1)");
        }
    }

    #[test]
    fn labels_cover_all_classes() {
        let spec = DatasetSpec::default();
        let d = generate(&spec, 3);
        for c in 0..spec.classes {
            assert!(d.train.labels.contains(&c));
        }
    }
}
