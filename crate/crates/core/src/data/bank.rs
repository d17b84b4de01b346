use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SplitMix64;
use crate::error::{Error, Result};

/// Which side of the class split a bank holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Base => "base",
            Split::Novel => "novel",
            Split::Validation => "validation",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Split::Base => 0,
            Split::Novel => 1,
            Split::Validation => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Split> {
        match tag {
            0 => Some(Split::Base),
            1 => Some(Split::Novel),
            2 => Some(Split::Validation),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Split::Base),
            "novel" => Ok(Split::Novel),
            "validation" => Ok(Split::Validation),
            other => Err(Error::Bank(format!("unknown split tag `{other}`"))),
        }
    }
}

/// One augmentation view: an identifier token and free-text provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub id: String,
    pub provenance: String,
}

impl ViewDescriptor {
    pub fn new(id: impl Into<String>, provenance: impl Into<String>) -> Self {
        ViewDescriptor { id: id.into(), provenance: provenance.into() }
    }
}

/// Immutable labeled feature matrix with one row block per augmentation view.
///
/// Every view holds the same samples in the same order; `labels[i]` is the
/// class of sample `i` in every view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    n_classes: usize,
    split: Split,
    views: Vec<ViewDescriptor>,
    labels: Vec<u32>,
    features: Vec<Vec<f32>>,
    by_class: Vec<Vec<usize>>,
}

impl FeatureBank {
    pub fn new(
        dim: usize,
        n_classes: usize,
        split: Split,
        views: Vec<ViewDescriptor>,
        labels: Vec<u32>,
        features: Vec<Vec<f32>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Bank("feature dimension must be positive".into()));
        }
        if n_classes == 0 {
            return Err(Error::Bank("bank must declare at least one class".into()));
        }
        if views.is_empty() {
            return Err(Error::Bank("bank must hold at least one view".into()));
        }
        if features.len() != views.len() {
            return Err(Error::Bank(format!(
                "{} view descriptors but {} feature matrices",
                views.len(),
                features.len()
            )));
        }
        for (v, d) in views.iter().enumerate() {
            if d.id.is_empty() || d.id.chars().any(char::is_whitespace) {
                return Err(Error::Bank(format!("view {v}: id must be a non-empty token without whitespace")));
            }
            if d.provenance.contains(['\n', '\r']) {
                return Err(Error::Bank(format!("view {v}: provenance must be a single line")));
            }
        }
        let n = labels.len();
        if n == 0 {
            return Err(Error::Bank("bank must hold at least one sample".into()));
        }
        for (v, m) in features.iter().enumerate() {
            if m.len() != n * dim {
                return Err(Error::Bank(format!(
                    "view {v}: expected {} values ({n} samples x {dim} dims), found {}",
                    n * dim,
                    m.len()
                )));
            }
            if let Some(i) = m.iter().position(|x| !x.is_finite()) {
                return Err(Error::Bank(format!("view {v}, sample {}: non-finite feature", i / dim)));
            }
        }
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &y) in labels.iter().enumerate() {
            let slot = by_class
                .get_mut(y as usize)
                .ok_or_else(|| Error::Bank(format!("sample {i}: label {y} outside [0, {n_classes})")))?;
            slot.push(i);
        }
        Ok(FeatureBank { dim, n_classes, split, views, labels, features, by_class })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn views(&self) -> &[ViewDescriptor] {
        &self.views
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn view_matrix(&self, view: usize) -> &[f32] {
        &self.features[view]
    }

    /// Feature row of `sample` in `view`.
    pub fn row(&self, view: usize, sample: usize) -> &[f32] {
        &self.features[view][sample * self.dim..(sample + 1) * self.dim]
    }

    /// Sample indices of `class`, in bank order.
    pub fn class_members(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    pub(crate) fn check_view(&self, view: usize) -> Result<()> {
        if view >= self.n_views() {
            return Err(Error::Config(format!(
                "view {view} does not exist ({} bank has {} views)",
                self.split,
                self.n_views()
            )));
        }
        Ok(())
    }

    /// Copy with every feature multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<FeatureBank> {
        let features = self.features.iter().map(|m| m.iter().map(|v| v * factor).collect()).collect();
        FeatureBank::new(self.dim, self.n_classes, self.split, self.views.clone(), self.labels.clone(), features)
    }

    /// Copy whose `view` rows are permuted across samples, detaching that view's
    /// features from their labels. Used to build deliberately corrupted members.
    pub fn with_shuffled_view(&self, view: usize, seed: u64) -> Result<FeatureBank> {
        self.check_view(view)?;
        let n = self.n_samples();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = SplitMix64::new(seed);
        for i in (1..n).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        let mut features = self.features.clone();
        let src = &self.features[view];
        features[view] = perm.iter().flat_map(|&i| src[i * self.dim..(i + 1) * self.dim].iter().copied()).collect();
        FeatureBank::new(self.dim, self.n_classes, self.split, self.views.clone(), self.labels.clone(), features)
    }
}
