//! Surrogate representation: samples re-expressed as distances to nearby
//! base-class prototypes, combined with plain feature distances.

use serde::{Deserialize, Serialize};

use crate::classifiers::{prototypes, Episode};
use crate::data::FeatureBank;
use crate::error::{Error, Result};
use crate::geometry::{argmin_first, sq_dist_unchecked, CenterSet, Metric, Point};
use crate::scalar::Scalar;
use crate::transforms::TransformParams;

/// Per-class mean of transformed base features.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePrototypes<S> {
    centers: CenterSet<S>,
    class_ids: Vec<usize>,
}

impl<S: Scalar> BasePrototypes<S> {
    pub fn new(centers: CenterSet<S>, class_ids: Vec<usize>) -> Result<Self> {
        if class_ids.len() != centers.len() {
            return Err(Error::CardinalityMismatch { expected: centers.len(), found: class_ids.len() });
        }
        Ok(BasePrototypes { centers, class_ids })
    }

    pub fn centers(&self) -> &CenterSet<S> {
        &self.centers
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }
}

/// Base prototypes of `view` under `transform`. Classes without samples are skipped.
pub fn base_prototypes<S: Scalar>(
    bank: &FeatureBank,
    view: usize,
    transform: &TransformParams,
) -> Result<BasePrototypes<S>> {
    bank.check_view(view)?;
    let mut centers = Vec::new();
    let mut ids = Vec::new();
    for class in 0..bank.n_classes() {
        let members = bank.class_members(class);
        if members.is_empty() {
            continue;
        }
        let mut sum = vec![S::zero(); bank.dim()];
        for &i in members {
            let raw: Vec<S> = bank.row(view, i).iter().map(|&x| S::from_f32_value(x)).collect();
            for (s, v) in sum.iter_mut().zip(transform.apply(&raw)?) {
                *s += v;
            }
        }
        let count = S::from_usize(members.len()).expect("count fits the scalar");
        centers.push(Point::new(sum.into_iter().map(|s| s / count).collect())?);
        ids.push(class);
    }
    BasePrototypes::new(CenterSet::new(centers)?, ids)
}

/// Weights of the feature and surrogate terms of the final criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurrogateParams", into = "RawSurrogateParams")]
pub struct SurrogateParams {
    r: usize,
    beta: f64,
    gamma: f64,
    pattern_metric: Metric,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurrogateParams {
    r: usize,
    beta: f64,
    #[serde(default = "unit")]
    gamma: f64,
    #[serde(default)]
    pattern_metric: Metric,
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<RawSurrogateParams> for SurrogateParams {
    type Error = Error;

    fn try_from(r: RawSurrogateParams) -> Result<Self> {
        SurrogateParams::new(r.r, r.beta, r.gamma).map(|p| p.with_pattern_metric(r.pattern_metric))
    }
}

impl From<SurrogateParams> for RawSurrogateParams {
    fn from(p: SurrogateParams) -> Self {
        RawSurrogateParams { r: p.r, beta: p.beta, gamma: p.gamma, pattern_metric: p.pattern_metric }
    }
}

impl SurrogateParams {
    pub fn new(r: usize, beta: f64, gamma: f64) -> Result<Self> {
        if r == 0 {
            return Err(Error::param("r", "must be at least 1"));
        }
        if !(beta >= 0.0 && beta.is_finite() && gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param("beta/gamma", "must be finite and nonnegative"));
        }
        if beta + gamma <= 0.0 {
            return Err(Error::param("beta/gamma", "at least one weight must be positive"));
        }
        Ok(SurrogateParams { r, beta, gamma, pattern_metric: Metric::Squared })
    }

    /// Metric between surrogate vectors; squared Euclidean unless overridden.
    pub fn with_pattern_metric(mut self, metric: Metric) -> Self {
        self.pattern_metric = metric;
        self
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pattern_metric(&self) -> Metric {
        self.pattern_metric
    }
}

/// `(R, beta)` search space with a shared `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateGrid {
    pub r_values: Vec<usize>,
    pub betas: Vec<f64>,
    pub gamma: f64,
    pub pattern_metric: Metric,
}

impl Default for SurrogateGrid {
    fn default() -> Self {
        SurrogateGrid {
            r_values: (1..=10).collect(),
            betas: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            gamma: 1.0,
            pattern_metric: Metric::Squared,
        }
    }
}

impl SurrogateGrid {
    /// All valid points, R-major. Fails if any point is invalid.
    pub fn params(&self) -> Result<Vec<SurrogateParams>> {
        if self.r_values.is_empty() || self.betas.is_empty() {
            return Err(Error::Config("surrogate grid needs at least one R and one beta".into()));
        }
        let mut out = Vec::with_capacity(self.r_values.len() * self.betas.len());
        for &r in &self.r_values {
            for &beta in &self.betas {
                out.push(SurrogateParams::new(r, beta, self.gamma)?.with_pattern_metric(self.pattern_metric));
            }
        }
        Ok(out)
    }
}

/// Base indices sorted by `(distance to c, index)`.
fn rank_base<S: Scalar>(dists: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).expect("finite distances").then(a.cmp(&b)));
    order
}

fn check_r(r: usize, n_base: usize) -> Result<()> {
    if r == 0 || r > n_base {
        return Err(Error::param("r", format!("{r} outside [1, {n_base}]")));
    }
    Ok(())
}

/// Union of each novel center's `r` nearest base prototypes, sorted by base index.
pub fn select_surrogates<S: Scalar>(
    novel_centers: &CenterSet<S>,
    base: &BasePrototypes<S>,
    r: usize,
) -> Result<Vec<usize>> {
    check_r(r, base.len())?;
    if novel_centers.dim() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), found: novel_centers.dim() });
    }
    let mut picked = Vec::with_capacity(r * novel_centers.len());
    for c in novel_centers.centers() {
        let d: Vec<S> = base.centers().centers().iter().map(|b| sq_dist_unchecked(c, b)).collect();
        picked.extend_from_slice(&rank_base(&d)[..r]);
    }
    picked.sort_unstable();
    picked.dedup();
    Ok(picked)
}

/// Squared distances from `point` to each surrogate center, in order.
pub fn surrogate_repr<S: Scalar>(point: &[S], surrogate_centers: &[Point<S>]) -> Result<Vec<S>> {
    if surrogate_centers.is_empty() {
        return Err(Error::Empty("surrogate list"));
    }
    surrogate_centers
        .iter()
        .map(|c| {
            if c.dim() != point.len() {
                return Err(Error::DimensionMismatch { expected: c.dim(), found: point.len() });
            }
            Ok(sq_dist_unchecked(point, c))
        })
        .collect()
}

fn l1<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, x| acc + x.abs())
}

/// `beta * d / |d|_1 + gamma * dpp / |dpp|_1`. Terms with zero weight are dropped.
pub fn combined_criterion<S: Scalar>(d: &[S], dpp: &[S], params: &SurrogateParams) -> Result<Vec<S>> {
    if d.len() != dpp.len() {
        return Err(Error::DimensionMismatch { expected: d.len(), found: dpp.len() });
    }
    let (beta, gamma) = (S::lit(params.beta), S::lit(params.gamma));
    let scale = |w: S, v: &[S], what: &str| -> Result<Option<S>> {
        if w == S::zero() {
            return Ok(None);
        }
        let n = l1(v);
        if n == S::zero() {
            return Err(Error::Degenerate(format!("{what} distances have zero Manhattan norm")));
        }
        Ok(Some(w / n))
    };
    let sd = scale(beta, d, "feature")?;
    let sp = scale(gamma, dpp, "surrogate")?;
    Ok(d.iter().zip(dpp).map(|(&a, &b)| sd.map_or(S::zero(), |s| s * a) + sp.map_or(S::zero(), |s| s * b)).collect())
}

/// Distances needed by the surrogate head, computed once per transformed episode
/// and reused across every `(R, beta, gamma)`.
#[derive(Debug, Clone)]
pub struct SurrogateEpisode<S> {
    ranking: Vec<Vec<usize>>,
    proto_base: Vec<Vec<S>>,
    query_base: Vec<Vec<S>>,
    query_proto: Vec<Vec<S>>,
}

impl<S: Scalar> SurrogateEpisode<S> {
    /// `episode` must already be in the same transformed space as `base`.
    pub fn prepare(episode: &Episode<S>, base: &BasePrototypes<S>) -> Result<Self> {
        if episode.dim() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), found: episode.dim() });
        }
        let protos = prototypes(episode);
        let bases = base.centers().centers();
        let to_base = |z: &[S]| -> Vec<S> { bases.iter().map(|b| sq_dist_unchecked(z, b)).collect() };
        let proto_base: Vec<Vec<S>> = protos.centers().iter().map(|c| to_base(c)).collect();
        let ranking = proto_base.iter().map(|d| rank_base(d)).collect();
        let query_base = episode.query().iter().map(|(z, _)| to_base(z)).collect();
        let query_proto = episode
            .query()
            .iter()
            .map(|(z, _)| protos.centers().iter().map(|c| sq_dist_unchecked(z, c)).collect())
            .collect();
        Ok(SurrogateEpisode { ranking, proto_base, query_base, query_proto })
    }

    pub fn n_queries(&self) -> usize {
        self.query_proto.len()
    }

    pub fn k(&self) -> usize {
        self.proto_base.len()
    }

    /// Feature distances `d`, one K-vector per query.
    pub fn feature_distances(&self) -> &[Vec<S>] {
        &self.query_proto
    }

    pub fn surrogates(&self, r: usize) -> Result<Vec<usize>> {
        check_r(r, self.proto_base.first().map_or(0, Vec::len))?;
        let mut picked: Vec<usize> = self.ranking.iter().flat_map(|o| o[..r].iter().copied()).collect();
        picked.sort_unstable();
        picked.dedup();
        Ok(picked)
    }

    /// Surrogate-space distances `d''`, one K-vector per query.
    pub fn pattern_distances(&self, r: usize, metric: Metric) -> Result<Vec<Vec<S>>> {
        let sel = self.surrogates(r)?;
        let gather = |row: &[S]| -> Vec<S> { sel.iter().map(|&t| row[t]).collect() };
        let protos: Vec<Vec<S>> = self.proto_base.iter().map(|row| gather(row)).collect();
        Ok(self
            .query_base
            .iter()
            .map(|row| {
                let q = gather(row);
                protos.iter().map(|p| metric.eval(&q, p)).collect()
            })
            .collect())
    }

    /// Final criterion per query; smaller is better.
    pub fn criteria(&self, params: &SurrogateParams) -> Result<Vec<Vec<S>>> {
        let dpp = self.pattern_distances(params.r(), params.pattern_metric())?;
        self.query_proto.iter().zip(&dpp).map(|(d, p)| combined_criterion(d, p, params)).collect()
    }

    pub fn predict(&self, params: &SurrogateParams) -> Result<Vec<usize>> {
        let dpp = self.pattern_distances(params.r(), params.pattern_metric())?;
        self.query_proto
            .iter()
            .zip(&dpp)
            .map(|(d, p)| {
                let c = combined_criterion(d, p, params)?;
                // a single positively scaled term has the argmin of the raw term
                let pick = if params.gamma() == 0.0 {
                    argmin_first(d.iter().copied())
                } else if params.beta() == 0.0 {
                    argmin_first(p.iter().copied())
                } else {
                    argmin_first(c)
                };
                Ok(pick.expect("K >= 1"))
            })
            .collect()
    }
}

/// Transforms the episode, then runs the full surrogate procedure.
pub fn classify_surrogate<S: Scalar>(
    episode: &Episode<S>,
    base: &BasePrototypes<S>,
    params: &SurrogateParams,
    transform: &TransformParams,
) -> Result<Vec<usize>> {
    let ep = episode.transformed(transform)?;
    SurrogateEpisode::prepare(&ep, base)?.predict(params)
}
