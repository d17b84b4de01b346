//! Seeded Gaussian-cluster feature banks standing in for CNN embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::bank::{FeatureBank, Split, ViewDescriptor};
use crate::error::{Error, Result};

/// Outliers are displaced by this multiple of the noise scale.
pub const OUTLIER_SCALE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_base: usize,
    pub n_novel: usize,
    pub n_validation: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of base class centers around the origin.
    pub dispersion: f64,
    /// Standard deviation of samples around their class center.
    pub noise: f64,
    /// Fraction of samples drawn with `OUTLIER_SCALE * noise`.
    pub outlier_rate: f64,
    /// Number of jittered views per sample.
    pub views: usize,
    /// Per-view jitter, relative to `noise`.
    pub view_jitter: f64,
    /// Base centers mixed into each novel or validation center; 0 draws them independently.
    pub mix: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_base: 20,
            n_novel: 10,
            n_validation: 10,
            dim: 64,
            samples_per_class: 50,
            dispersion: 1.0,
            noise: 0.9,
            outlier_rate: 0.05,
            views: 4,
            view_jitter: 0.5,
            mix: 3,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_base", self.n_base),
            ("n_novel", self.n_novel),
            ("n_validation", self.n_validation),
            ("dim", self.dim),
            ("samples_per_class", self.samples_per_class),
            ("views", self.views),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synthetic {name} must be at least 1")));
            }
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("synthetic noise must be positive and finite".into()));
        }
        if !(self.dispersion >= 0.0 && self.dispersion.is_finite()) {
            return Err(Error::Config("synthetic dispersion must be nonnegative and finite".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::Config("synthetic outlier_rate must lie in [0, 1]".into()));
        }
        if !(self.view_jitter >= 0.0 && self.view_jitter.is_finite()) {
            return Err(Error::Config("synthetic view_jitter must be nonnegative and finite".into()));
        }
        if self.mix > self.n_base {
            return Err(Error::Config(format!("synthetic mix {} exceeds n_base {}", self.mix, self.n_base)));
        }
        Ok(())
    }
}

/// Base, novel and validation banks drawn from one seeded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBanks {
    pub base: FeatureBank,
    pub novel: FeatureBank,
    pub validation: FeatureBank,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBanks> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    let base_centers: Vec<Vec<f64>> = (0..spec.n_base).map(|_| gaussian(&mut rng, dim, spec.dispersion)).collect();
    let novel_centers = derived_centers(&mut rng, spec, &base_centers, spec.n_novel);
    let val_centers = derived_centers(&mut rng, spec, &base_centers, spec.n_validation);

    let mut raw: Vec<(Vec<u32>, Vec<Vec<f64>>)> = [&base_centers, &novel_centers, &val_centers]
        .into_iter()
        .map(|centers| draw_samples(&mut rng, spec, centers))
        .collect();

    // One shared offset keeps the three banks in a common coordinate frame.
    let min = raw.iter().flat_map(|(_, views)| views.iter().flatten()).fold(f64::INFINITY, |m, &x| m.min(x));
    let offset = 1.0 - min;
    let descriptors: Vec<ViewDescriptor> = (0..spec.views)
        .map(|v| {
            ViewDescriptor::new(v.to_string(), format!("synthetic gaussian jitter {}", spec.view_jitter * spec.noise))
        })
        .collect();

    let mut banks = [Split::Base, Split::Novel, Split::Validation]
        .into_iter()
        .zip(raw.drain(..))
        .map(|(split, (labels, views))| {
            let n_classes = match split {
                Split::Base => spec.n_base,
                Split::Novel => spec.n_novel,
                Split::Validation => spec.n_validation,
            };
            let features = views.into_iter().map(|m| m.into_iter().map(|x| (x + offset) as f32).collect()).collect();
            FeatureBank::new(dim, n_classes, split, descriptors.clone(), labels, features)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(SyntheticBanks {
        base: banks.next().expect("three banks"),
        novel: banks.next().expect("three banks"),
        validation: banks.next().expect("three banks"),
    })
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Sparse nonnegative combinations of base centers, rescaled so their expected
/// norm matches an independently drawn center.
fn derived_centers(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, base: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            if spec.mix == 0 {
                return gaussian(rng, spec.dim, spec.dispersion);
            }
            let mut idx: Vec<usize> = (0..base.len()).collect();
            for i in 0..spec.mix {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            let weights: Vec<f64> = (0..spec.mix).map(|_| rng.random_range(0.2..1.0)).collect();
            let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            let mut c = vec![0.0; spec.dim];
            for (&b, w) in idx[..spec.mix].iter().zip(&weights) {
                for (ci, bi) in c.iter_mut().zip(&base[b]) {
                    *ci += w / norm * bi;
                }
            }
            c
        })
        .collect()
}

/// Class-major samples, each replicated into `spec.views` jittered copies.
fn draw_samples(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, centers: &[Vec<f64>]) -> (Vec<u32>, Vec<Vec<f64>>) {
    let n = centers.len() * spec.samples_per_class;
    let mut labels = Vec::with_capacity(n);
    let mut views = vec![Vec::with_capacity(n * spec.dim); spec.views];
    let jitter = spec.view_jitter * spec.noise;
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let scale = if rng.random::<f64>() < spec.outlier_rate { OUTLIER_SCALE * spec.noise } else { spec.noise };
            let x: Vec<f64> = center.iter().map(|&m| m + scale * rng.sample::<f64, _>(StandardNormal)).collect();
            for view in views.iter_mut() {
                view.extend(x.iter().map(|&v| v + jitter * rng.sample::<f64, _>(StandardNormal)));
            }
            labels.push(c as u32);
        }
    }
    (labels, views)
}
