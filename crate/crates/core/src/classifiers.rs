//! Episode-level heads: nearest prototype, softmax regression with a free or
//! Voronoi-constrained bias, and their CIVD integration.
//!
//! A linear model whose biases satisfy `b_k = -|W_k|^2 / 4` induces exactly
//! the Voronoi diagram with centers `W_k / 2`, since
//! `|z - W_k/2|^2 = |z|^2 - (W_k . z + b_k)`. [`lr_centers`] exposes those
//! centers and [`train_voronoi_lr`] keeps the constraint at every step.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, argmax_first, CenterSet, Cluster, InfluenceParams, Point, WeightedCenterSet};
use crate::scalar::Scalar;
use crate::transforms::TransformParams;

/// Tolerance on `|b_k + |W_k|^2 / 4|` for a model to count as Voronoi-constrained.
pub const VORONOI_BIAS_TOLERANCE: f64 = 1e-9;

/// One K-way N-shot task with features already in hand.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<S> {
    k: usize,
    n: usize,
    support: Vec<(Point<S>, usize)>,
    query: Vec<(Point<S>, Option<usize>)>,
}

impl<S: Scalar> Episode<S> {
    pub fn new(
        k: usize,
        n: usize,
        support: Vec<(Point<S>, usize)>,
        query: Vec<(Point<S>, Option<usize>)>,
    ) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::InvalidEpisode("K and N must be positive".into()));
        }
        if support.len() != k * n {
            return Err(Error::InvalidEpisode(format!("expected {} support items, found {}", k * n, support.len())));
        }
        let dim = support[0].0.dim();
        let mut counts = vec![0usize; k];
        for (p, y) in &support {
            if *y >= k {
                return Err(Error::InvalidEpisode(format!("support class {y} out of range for K = {k}")));
            }
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
            counts[*y] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c != n) {
            return Err(Error::InvalidEpisode(format!("class {c} has {} support items, expected {n}", counts[c])));
        }
        for (p, y) in &query {
            if let Some(y) = y {
                if *y >= k {
                    return Err(Error::InvalidEpisode(format!("query class {y} out of range for K = {k}")));
                }
            }
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
        }
        Ok(Episode { k, n, support, query })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.support[0].0.dim()
    }

    pub fn support(&self) -> &[(Point<S>, usize)] {
        &self.support
    }

    pub fn query(&self) -> &[(Point<S>, Option<usize>)] {
        &self.query
    }

    /// Query labels, when every query is labeled.
    pub fn query_labels(&self) -> Option<Vec<usize>> {
        self.query.iter().map(|(_, y)| *y).collect()
    }

    /// Support points of class `k`, in support order.
    pub fn class_support(&self, k: usize) -> impl Iterator<Item = &Point<S>> {
        self.support.iter().filter(move |(_, y)| *y == k).map(|(p, _)| p)
    }

    /// Applies `transform` to every support and query feature.
    pub fn transformed(&self, transform: &TransformParams) -> Result<Episode<S>> {
        let support = self.support.iter().map(|(p, y)| Ok((transform.apply_point(p)?, *y))).collect::<Result<_>>()?;
        let query = self.query.iter().map(|(p, y)| Ok((transform.apply_point(p)?, *y))).collect::<Result<_>>()?;
        Ok(Episode { k: self.k, n: self.n, support, query })
    }
}

/// Per-class mean of the support features.
pub fn prototypes<S: Scalar>(episode: &Episode<S>) -> CenterSet<S> {
    let dim = episode.dim();
    let mut sums = vec![vec![S::zero(); dim]; episode.k()];
    for (p, y) in episode.support() {
        for (acc, &v) in sums[*y].iter_mut().zip(p.iter()) {
            *acc += v;
        }
    }
    let n = S::lit(episode.n() as f64);
    let centers = sums.into_iter().map(|s| Point::from_vec_unchecked(s.into_iter().map(|v| v / n).collect())).collect();
    CenterSet::new(centers).expect("episode has at least one class")
}

/// Nearest-prototype predictions for every query of the episode.
pub fn predict_vd<S: Scalar>(episode: &Episode<S>) -> Result<Vec<usize>> {
    let centers = prototypes(episode);
    episode.query().iter().map(|(z, _)| geometry::assign_vd(&centers, z)).collect()
}

/// `K x n` weights and `K` biases of a linear softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<S> {
    weights: Vec<Vec<S>>,
    biases: Vec<S>,
}

impl<S: Scalar> LinearModel<S> {
    pub fn new(weights: Vec<Vec<S>>, biases: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("linear model"));
        }
        if biases.len() != weights.len() {
            return Err(Error::CardinalityMismatch { expected: weights.len(), found: biases.len() });
        }
        let dim = weights[0].len();
        if dim == 0 {
            return Err(Error::Empty("weight row"));
        }
        for row in &weights {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear model"));
        }
        Ok(LinearModel { weights, biases })
    }

    /// Builds a model whose biases are projected onto the Voronoi constraint.
    pub fn voronoi(weights: Vec<Vec<S>>) -> Result<Self> {
        let biases = weights.iter().map(|w| voronoi_bias(w)).collect();
        Self::new(weights, biases)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<S>] {
        &self.weights
    }

    pub fn biases(&self) -> &[S] {
        &self.biases
    }

    /// `max_k |b_k + |W_k|^2 / 4|`.
    pub fn voronoi_residual(&self) -> S {
        self.weights.iter().zip(&self.biases).map(|(w, &b)| (b - voronoi_bias(w)).abs()).fold(S::zero(), S::max)
    }

    /// Logits `W_k . z + b_k`.
    pub fn scores(&self, z: &[S]) -> Result<Vec<S>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.len() });
        }
        Ok(self.weights.iter().zip(&self.biases).map(|(w, &b)| dot(w, z) + b).collect())
    }

    /// Softmax class probabilities.
    pub fn probabilities(&self, z: &[S]) -> Result<Vec<S>> {
        let mut s = self.scores(z)?;
        softmax_in_place(&mut s);
        Ok(s)
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn voronoi_bias<S: Scalar>(w: &[S]) -> S {
    -dot(w, w) * S::lit(0.25)
}

/// Replaces logits by probabilities; returns `log(sum(exp(s)))`.
fn softmax_in_place<S: Scalar>(s: &mut [S]) -> S {
    let max = s.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
    max + total.ln()
}

/// Optimizer settings for the softmax heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { learning_rate: 0.01, batch_size: 64, epochs: 100, seed: 0, init_scale: 0.01 }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning_rate", "must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::param("init_scale", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam<S> {
    m: Vec<S>,
    v: Vec<S>,
    step: i32,
}

impl<S: Scalar> Adam<S> {
    fn new(len: usize) -> Self {
        Adam { m: vec![S::zero(); len], v: vec![S::zero(); len], step: 0 }
    }

    fn update(&mut self, params: &mut [S], grads: &[S], lr: S) {
        self.step += 1;
        let (b1, b2, eps) = (S::lit(ADAM_BETA1), S::lit(ADAM_BETA2), S::lit(ADAM_EPS));
        let c1 = S::one() - b1.powi(self.step);
        let c2 = S::one() - b2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Summed cross-entropy over `batch` and its gradients with respect to the
/// flattened weights and the biases. With `voronoi`, the bias is the function
/// `-|W_k|^2 / 4` of the weights and its derivative is folded into the weight gradient.
fn loss_and_grad<S: Scalar>(
    weights: &[S],
    biases: &[S],
    k: usize,
    batch: &[(&[S], usize)],
    voronoi: bool,
) -> (S, Vec<S>, Vec<S>) {
    let dim = weights.len() / k;
    let mut gw = vec![S::zero(); weights.len()];
    let mut gb = vec![S::zero(); k];
    let mut loss = S::zero();
    let half = S::lit(0.5);
    let mut probs = vec![S::zero(); k];
    for &(z, y) in batch {
        for c in 0..k {
            probs[c] = dot(&weights[c * dim..(c + 1) * dim], z) + biases[c];
        }
        let target = probs[y];
        let lse = softmax_in_place(&mut probs);
        loss += lse - target;
        for c in 0..k {
            let g = probs[c] - if c == y { S::one() } else { S::zero() };
            gb[c] += g;
            let row = &weights[c * dim..(c + 1) * dim];
            let grow = &mut gw[c * dim..(c + 1) * dim];
            if voronoi {
                for j in 0..dim {
                    grow[j] += g * (z[j] - half * row[j]);
                }
            } else {
                for j in 0..dim {
                    grow[j] += g * z[j];
                }
            }
        }
    }
    (loss, gw, gb)
}

fn train<S: Scalar>(episode: &Episode<S>, opts: &TrainOptions, voronoi: bool) -> Result<LinearModel<S>> {
    opts.validate()?;
    let k = episode.k();
    let dim = episode.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = S::lit(opts.init_scale);
    let mut w: Vec<S> = (0..k * dim).map(|_| S::lit(rng.random_range(-1.0..=1.0)) * scale).collect();
    let mut b = vec![S::zero(); k];
    let lr = S::lit(opts.learning_rate);
    let mut adam_w = Adam::new(w.len());
    let mut adam_b = Adam::new(k);
    let mut order: Vec<usize> = (0..episode.support().len()).collect();

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size) {
            if voronoi {
                for c in 0..k {
                    b[c] = voronoi_bias(&w[c * dim..(c + 1) * dim]);
                }
            }
            let batch: Vec<(&[S], usize)> = chunk
                .iter()
                .map(|&i| {
                    let (p, y) = &episode.support()[i];
                    (p.as_slice(), *y)
                })
                .collect();
            let (loss, gw, gb) = loss_and_grad(&w, &b, k, &batch, voronoi);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam_w.update(&mut w, &gw, lr);
            if !voronoi {
                adam_b.update(&mut b, &gb, lr);
            }
        }
    }
    let rows: Vec<Vec<S>> = w.chunks(dim).map(<[S]>::to_vec).collect();
    let model = if voronoi { LinearModel::voronoi(rows) } else { LinearModel::new(rows, b) };
    model.map_err(|_| Error::Diverged { epoch: opts.epochs - 1 })
}

/// Softmax regression with free biases (a power-diagram head).
pub fn train_power_lr<S: Scalar>(episode: &Episode<S>, opts: &TrainOptions) -> Result<LinearModel<S>> {
    train(episode, opts, false)
}

/// Softmax regression whose biases are reset to `-|W_k|^2 / 4` before every
/// forward pass, so each iterate is a Voronoi diagram.
pub fn train_voronoi_lr<S: Scalar>(episode: &Episode<S>, opts: &TrainOptions) -> Result<LinearModel<S>> {
    train(episode, opts, true)
}

/// Voronoi centers `W_k / 2` of a constrained model.
pub fn lr_centers<S: Scalar>(model: &LinearModel<S>) -> Result<CenterSet<S>> {
    let residual = model.voronoi_residual();
    if !(residual <= S::lit(VORONOI_BIAS_TOLERANCE)) {
        return Err(Error::ConstraintViolated { residual: residual.to_f64_value() });
    }
    let half = S::lit(0.5);
    CenterSet::new(
        model.weights().iter().map(|w| Point::from_vec_unchecked(w.iter().map(|&v| v * half).collect())).collect(),
    )
}

/// Power diagram induced by an unconstrained model: centers `W_k / 2` with
/// weights `b_k + |W_k|^2 / 4`, shifted by a common constant to be nonnegative.
pub fn lr_power_diagram<S: Scalar>(model: &LinearModel<S>) -> Result<WeightedCenterSet<S>> {
    let half = S::lit(0.5);
    let centers = CenterSet::new(
        model.weights().iter().map(|w| Point::from_vec_unchecked(w.iter().map(|&v| v * half).collect())).collect(),
    )?;
    let raw: Vec<S> = model.weights().iter().zip(model.biases()).map(|(w, &b)| b - voronoi_bias(w)).collect();
    let floor = raw.iter().copied().fold(S::infinity(), S::min);
    WeightedCenterSet::new(centers, raw.into_iter().map(|v| v - floor).collect())
}

/// `argmax_k W_k . z + b_k`, lowest index on ties.
pub fn classify_linear<S: Scalar>(model: &LinearModel<S>, z: &[S]) -> Result<usize> {
    Ok(argmax_first(model.scores(z)?).expect("model has at least one class"))
}

/// Per-class two-member clusters `{c_k, c~_k}` from the prototype and linear heads.
pub fn integrated_clusters<S: Scalar>(vd_centers: &CenterSet<S>, lr_centers: &CenterSet<S>) -> Result<Vec<Cluster<S>>> {
    if vd_centers.len() != lr_centers.len() {
        return Err(Error::CardinalityMismatch { expected: vd_centers.len(), found: lr_centers.len() });
    }
    vd_centers
        .centers()
        .iter()
        .zip(lr_centers.centers())
        .map(|(c, l)| Cluster::new(vec![c.clone(), l.clone()]))
        .collect()
}

/// CIVD over `{c_k, c~_k}` clusters.
pub fn classify_civd_integrated<S: Scalar>(
    vd_centers: &CenterSet<S>,
    lr_centers: &CenterSet<S>,
    z: &[S],
    p: &InfluenceParams<S>,
) -> Result<usize> {
    geometry::assign_civd(&integrated_clusters(vd_centers, lr_centers)?, z, p)
}
