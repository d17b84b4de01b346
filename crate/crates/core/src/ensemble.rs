//! Configuration pools and the cluster-to-cluster geometric ensemble.
//!
//! Each configuration (view, transform, head) maps an episode to one member
//! per class. Member `i` of every class cluster and member `i` of the query
//! cluster come from configuration `i`, so pool order is part of the model.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::prototypes;
use crate::data::{sample_episode, EpisodeDraw, EpisodeSpec, FeatureBank, SplitMix64};
use crate::error::{Error, Result};
use crate::eval::par_episodes;
use crate::geometry::{argmax_first, sq_dist_unchecked, CenterSet, Cluster, InfluenceParams, Metric, Point};
use crate::scalar::Scalar;
use crate::surrogate::{
    base_prototypes, combined_criterion, select_surrogates, surrogate_repr, BasePrototypes, SurrogateParams,
};
use crate::transforms::TransformParams;

/// Classifier applied inside one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Nearest prototype in feature space.
    Feature,
    /// Feature distances combined with surrogate-space distances.
    Surrogate(SurrogateParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub view: usize,
    #[serde(default)]
    pub transform: TransformParams,
    pub head: Head,
}

impl Config {
    pub fn new(view: usize, transform: TransformParams, head: Head) -> Self {
        Config { view, transform, head }
    }
}

/// Ordered, nonempty list of configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Config>", into = "Vec<Config>")]
pub struct ConfigPool {
    configs: Vec<Config>,
}

impl TryFrom<Vec<Config>> for ConfigPool {
    type Error = Error;

    fn try_from(configs: Vec<Config>) -> Result<Self> {
        ConfigPool::new(configs)
    }
}

impl From<ConfigPool> for Vec<Config> {
    fn from(p: ConfigPool) -> Self {
        p.configs
    }
}

impl ConfigPool {
    pub fn new(configs: Vec<Config>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Config("configuration pool is empty".into()));
        }
        Ok(ConfigPool { configs })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[Config] {
        &self.configs
    }

    /// Sub-pool with the configurations at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<ConfigPool> {
        let configs = indices
            .iter()
            .map(|&i| {
                self.configs
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("pool index {i} out of range for L = {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        ConfigPool::new(configs)
    }

    /// Order-sensitive identity of the pool, used to pair models with queries.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        serde_json::to_string(&self.configs).expect("configs serialize").hash(&mut h);
        h.finish()
    }

    pub fn needs_base(&self) -> bool {
        self.configs.iter().any(|c| matches!(c.head, Head::Surrogate(_)))
    }
}

/// Cartesian product of views, transforms and heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub views: Vec<usize>,
    #[serde(default = "identity_transforms")]
    pub transforms: Vec<TransformParams>,
    #[serde(default = "feature_heads")]
    pub heads: Vec<Head>,
}

fn identity_transforms() -> Vec<TransformParams> {
    vec![TransformParams::identity()]
}

fn feature_heads() -> Vec<Head> {
    vec![Head::Feature]
}

/// Enumerates views outermost, then transforms, then heads.
pub fn build_pool(spec: &PoolSpec) -> Result<ConfigPool> {
    let mut configs = Vec::with_capacity(spec.views.len() * spec.transforms.len() * spec.heads.len());
    for &view in &spec.views {
        for &transform in &spec.transforms {
            for &head in &spec.heads {
                configs.push(Config { view, transform, head });
            }
        }
    }
    ConfigPool::new(configs)
}

pub fn scheme_full(pool: &ConfigPool) -> ConfigPool {
    pool.clone()
}

/// Uniform `l`-subset without replacement, in original pool order.
pub fn scheme_random(pool: &ConfigPool, l: usize, seed: u64) -> Result<ConfigPool> {
    if l == 0 || l > pool.len() {
        return Err(Error::param("l", format!("{l} outside [1, {}]", pool.len())));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    SplitMix64::new(seed).partial_shuffle(&mut idx, l);
    idx.truncate(l);
    idx.sort_unstable();
    pool.select(&idx)
}

/// Fitted representative of one configuration for every class.
#[derive(Debug, Clone)]
enum Member<S> {
    Feature { protos: CenterSet<S> },
    Surrogate { protos: CenterSet<S>, surrogates: Vec<Point<S>>, patterns: Vec<Vec<S>>, params: SurrogateParams },
}

impl<S: Scalar> Member<S> {
    /// Per-class distance from the member's view of the query.
    fn distances(&self, z: &[S], metric: Metric) -> Result<Vec<S>> {
        match self {
            Member::Feature { protos } => {
                check_dim(protos.dim(), z.len())?;
                Ok(protos.centers().iter().map(|c| metric.of_squared(sq_dist_unchecked(z, c))).collect())
            }
            Member::Surrogate { protos, surrogates, patterns, params } => {
                check_dim(protos.dim(), z.len())?;
                let d: Vec<S> = protos.centers().iter().map(|c| sq_dist_unchecked(z, c)).collect();
                let q = surrogate_repr(z, surrogates)?;
                let dpp: Vec<S> = patterns.iter().map(|p| params.pattern_metric().eval(&q, p)).collect();
                combined_criterion(&d, &dpp, params)
            }
        }
    }

    fn prototype(&self, k: usize) -> &[S] {
        match self {
            Member::Feature { protos } | Member::Surrogate { protos, .. } => protos.get(k),
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// K ordered class clusters of length L.
#[derive(Debug, Clone)]
pub struct EnsembleModel<S> {
    fingerprint: u64,
    k: usize,
    members: Vec<Member<S>>,
}

/// The query seen through every configuration, in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryCluster<S> {
    fingerprint: u64,
    members: Vec<Vec<S>>,
}

impl<S: Scalar> QueryCluster<S> {
    pub fn members(&self) -> &[Vec<S>] {
        &self.members
    }

    /// Same cluster claimed for a different pool; `predict` will reject it.
    pub fn with_fingerprint(mut self, fingerprint: u64) -> Self {
        self.fingerprint = fingerprint;
        self
    }
}

impl<S: Scalar> EnsembleModel<S> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Class clusters of transformed prototypes. Position `i` lives in the same
    /// space as position `i` of every query cluster; surrogate members also keep
    /// their surrogate-space prototype vectors internally for their distance.
    pub fn clusters(&self) -> Result<Vec<Cluster<S>>> {
        (0..self.k)
            .map(|k| {
                let members =
                    self.members.iter().map(|m| Point::new(m.prototype(k).to_vec())).collect::<Result<Vec<_>>>()?;
                Cluster::positional(members)
            })
            .collect()
    }

    /// Per-position influence terms `d_i^alpha`, one K-vector per member.
    pub fn terms(&self, query: &QueryCluster<S>, p: &InfluenceParams<S>) -> Result<Vec<Vec<S>>> {
        if query.fingerprint != self.fingerprint || query.members.len() != self.members.len() {
            return Err(Error::PoolMismatch);
        }
        self.members
            .iter()
            .zip(&query.members)
            .map(|(m, z)| m.distances(z, p.metric())?.into_iter().map(|d| p.power(d)).collect())
            .collect()
    }

    /// Class whose cluster exerts the largest summed positional influence.
    pub fn predict(&self, query: &QueryCluster<S>, p: &InfluenceParams<S>) -> Result<usize> {
        Ok(self.reduce(&self.terms(query, p)?, p))
    }

    /// Sums `terms` in pool order and returns the most influential class.
    pub fn reduce(&self, terms: &[Vec<S>], p: &InfluenceParams<S>) -> usize {
        argmax_first(influences(terms, self.k, p)).expect("K >= 1")
    }
}

/// `-sign(alpha) * sum_i terms[i][k]`, summed in pool order.
fn influences<S: Scalar>(terms: &[Vec<S>], k: usize, p: &InfluenceParams<S>) -> Vec<S> {
    let mut acc = vec![S::zero(); k];
    for t in terms {
        for (a, &v) in acc.iter_mut().zip(t) {
            *a += v;
        }
    }
    signed(acc, p)
}

fn signed<S: Scalar>(mut acc: Vec<S>, p: &InfluenceParams<S>) -> Vec<S> {
    if p.alpha() > S::zero() {
        for a in acc.iter_mut() {
            *a = -*a;
        }
    }
    acc
}

/// Ensemble model plus labeled query clusters of one episode.
#[derive(Debug, Clone)]
pub struct FittedEpisode<S> {
    pub model: EnsembleModel<S>,
    pub queries: Vec<QueryCluster<S>>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> FittedEpisode<S> {
    pub fn predict_all(&self, p: &InfluenceParams<S>) -> Result<Vec<usize>> {
        self.queries.iter().map(|q| self.model.predict(q, p)).collect()
    }
}

/// A pool bound to the novel bank it evaluates on, with base prototypes
/// precomputed once per `(view, transform)` used by a surrogate head.
#[derive(Debug, Clone)]
pub struct EnsembleContext<'a, S> {
    pool: ConfigPool,
    fingerprint: u64,
    novel: &'a FeatureBank,
    base: Vec<Option<Arc<BasePrototypes<S>>>>,
}

impl<'a, S: Scalar> EnsembleContext<'a, S> {
    pub fn new(pool: ConfigPool, novel: &'a FeatureBank, base: Option<&FeatureBank>) -> Result<Self> {
        let mut cache: HashMap<(usize, [u64; 3]), Arc<BasePrototypes<S>>> = HashMap::new();
        let mut per_config = Vec::with_capacity(pool.len());
        for c in pool.configs() {
            novel.check_view(c.view)?;
            let Head::Surrogate(_) = c.head else {
                per_config.push(None);
                continue;
            };
            let bank = base.ok_or_else(|| Error::Config("surrogate heads need a base bank".into()))?;
            if bank.dim() != novel.dim() {
                return Err(Error::DimensionMismatch { expected: novel.dim(), found: bank.dim() });
            }
            let t = c.transform;
            let key = (c.view, [t.w().to_bits(), t.b().to_bits(), t.lambda().to_bits()]);
            let protos = match cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(base_prototypes::<S>(bank, c.view, &t)?);
                    cache.insert(key, p.clone());
                    p
                }
            };
            per_config.push(Some(protos));
        }
        let fingerprint = pool.fingerprint();
        Ok(EnsembleContext { pool, fingerprint, novel, base: per_config })
    }

    pub fn pool(&self) -> &ConfigPool {
        &self.pool
    }

    pub fn bank(&self) -> &FeatureBank {
        self.novel
    }

    /// Fits every member on the support set and maps every query through every
    /// configuration. Members are fitted concurrently; output is in pool order.
    pub fn fit_episode(&self, draw: &EpisodeDraw) -> Result<FittedEpisode<S>> {
        let k = draw.classes.len();
        let fitted = self
            .pool
            .configs()
            .par_iter()
            .zip(self.base.par_iter())
            .map(|(c, base)| {
                let ep = draw.episode::<S>(self.novel, c.view)?.transformed(&c.transform)?;
                let protos = prototypes(&ep);
                let member = match (c.head, base) {
                    (Head::Feature, _) => Member::Feature { protos },
                    (Head::Surrogate(params), Some(base)) => {
                        let sel = select_surrogates(&protos, base, params.r())?;
                        let surrogates: Vec<Point<S>> = sel.iter().map(|&t| base.centers().get(t).clone()).collect();
                        let patterns =
                            protos.centers().iter().map(|c| surrogate_repr(c, &surrogates)).collect::<Result<_>>()?;
                        Member::Surrogate { protos, surrogates, patterns, params }
                    }
                    (Head::Surrogate(_), None) => unreachable!("context caches base prototypes for surrogate heads"),
                };
                let queries: Vec<Vec<S>> = ep.query().iter().map(|(z, _)| z.as_slice().to_vec()).collect();
                Ok((member, queries))
            })
            .collect::<Result<Vec<_>>>()?;

        let n_queries = draw.query.len();
        let mut members = Vec::with_capacity(fitted.len());
        let mut per_query: Vec<Vec<Vec<S>>> = (0..n_queries).map(|_| Vec::with_capacity(fitted.len())).collect();
        for (member, queries) in fitted {
            members.push(member);
            for (slot, z) in per_query.iter_mut().zip(queries) {
                slot.push(z);
            }
        }
        Ok(FittedEpisode {
            model: EnsembleModel { fingerprint: self.fingerprint, k, members },
            queries: per_query
                .into_iter()
                .map(|members| QueryCluster { fingerprint: self.fingerprint, members })
                .collect(),
            labels: draw.query_labels(),
        })
    }

    pub fn predict_episode(&self, draw: &EpisodeDraw, p: &InfluenceParams<S>) -> Result<Vec<usize>> {
        self.fit_episode(draw)?.predict_all(p)
    }
}

/// Outcome of validation-guided member selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedSelection {
    /// Selected prefix of the ranking, in rank order.
    pub pool: ConfigPool,
    /// Pool indices by descending individual validation accuracy.
    pub ranking: Vec<usize>,
    /// Individual validation accuracy of each pool member, in pool order.
    pub member_accuracy: Vec<f64>,
    /// Ensemble validation accuracy of each ranking prefix.
    pub curve: Vec<f64>,
}

fn mean_accuracy(correct: &[usize], per_episode: usize) -> f64 {
    correct.iter().map(|&c| c as f64 / per_episode as f64).sum::<f64>() / correct.len() as f64
}

/// Ranks members on validation episodes and keeps the ranked prefix whose
/// ensemble accuracy first reaches the maximum.
pub fn scheme_guided<S: Scalar>(
    ctx: &EnsembleContext<'_, S>,
    spec: &EpisodeSpec,
    p: &InfluenceParams<S>,
) -> Result<GuidedSelection> {
    if spec.episodes == 0 {
        return Err(Error::Config("guided selection needs at least one validation episode".into()));
    }
    let l = ctx.pool.len();
    let per_episode = spec.k * spec.q;
    let episode_terms = |e: usize| -> Result<Vec<(Vec<Vec<S>>, usize)>> {
        let draw = sample_episode(ctx.novel, spec, e)?;
        let fitted = ctx.fit_episode(&draw)?;
        fitted
            .queries
            .iter()
            .zip(&fitted.labels)
            .map(|(q, &y)| Ok((fitted.model.terms(q, p)?, y)))
            .collect::<Result<Vec<_>>>()
    };

    // Pass 1: individual accuracy of every member.
    let member_correct: Vec<Vec<usize>> = par_episodes(spec.episodes, |e| {
        let terms = episode_terms(e)?;
        Ok((0..l)
            .map(|i| terms.iter().filter(|(t, y)| argmax_first(signed(t[i].clone(), p)) == Some(*y)).count())
            .collect())
    })?;
    let member_accuracy: Vec<f64> =
        (0..l).map(|i| mean_accuracy(&member_correct.iter().map(|c| c[i]).collect::<Vec<_>>(), per_episode)).collect();
    let mut ranking: Vec<usize> = (0..l).collect();
    // stable sort keeps pool order among equal accuracies
    ranking.sort_by(|&a, &b| member_accuracy[b].total_cmp(&member_accuracy[a]));

    // Pass 2: ensemble accuracy of every ranked prefix.
    let prefix_correct: Vec<Vec<usize>> = par_episodes(spec.episodes, |e| {
        let terms = episode_terms(e)?;
        let mut counts = vec![0usize; l];
        for (t, y) in &terms {
            let mut acc = vec![S::zero(); t[0].len()];
            for (m, &i) in ranking.iter().enumerate() {
                for (a, &v) in acc.iter_mut().zip(&t[i]) {
                    *a += v;
                }
                if argmax_first(signed(acc.clone(), p)) == Some(*y) {
                    counts[m] += 1;
                }
            }
        }
        Ok(counts)
    })?;
    let curve: Vec<f64> =
        (0..l).map(|m| mean_accuracy(&prefix_correct.iter().map(|c| c[m]).collect::<Vec<_>>(), per_episode)).collect();
    let mut best = 0;
    for (m, &acc) in curve.iter().enumerate() {
        if acc > curve[best] {
            best = m;
        }
    }
    Ok(GuidedSelection { pool: ctx.pool.select(&ranking[..=best])?, ranking, member_accuracy, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::predict_vd;
    use crate::data::{gen_synthetic, SyntheticBanks, SyntheticSpec};
    use crate::geometry::assign_ccvd;
    use crate::surrogate::classify_surrogate;

    fn banks() -> SyntheticBanks {
        gen_synthetic(&SyntheticSpec {
            n_base: 8,
            n_novel: 6,
            n_validation: 6,
            dim: 12,
            samples_per_class: 12,
            ..Default::default()
        })
        .unwrap()
    }

    fn spec() -> EpisodeSpec {
        EpisodeSpec::new(3, 1, 5, 20, 42)
    }

    fn feature_pool(views: Vec<usize>, transforms: Vec<TransformParams>) -> ConfigPool {
        build_pool(&PoolSpec { views, transforms, heads: vec![Head::Feature] }).unwrap()
    }

    #[test]
    fn pool_sizes_and_order() {
        let grid = TransformParams::default_grid();
        assert_eq!(feature_pool((0..64).collect(), grid.clone()).len(), 512);
        let heads: Vec<Head> = (1..=10).map(|r| Head::Surrogate(SurrogateParams::new(r, 1.0, 1.0).unwrap())).collect();
        let pool = build_pool(&PoolSpec { views: (0..64).collect(), transforms: grid[..2].to_vec(), heads }).unwrap();
        assert_eq!(pool.len(), 1280);
        let tiny = feature_pool(vec![3], vec![TransformParams::identity()]);
        assert_eq!(tiny.len(), 1);
        let p = feature_pool(vec![0, 1], grid[..2].to_vec());
        let order: Vec<(usize, f64)> = p.configs().iter().map(|c| (c.view, c.transform.b())).collect();
        assert_eq!(order, vec![(0, 0.0), (0, 0.02), (1, 0.0), (1, 0.02)]);
        assert!(build_pool(&PoolSpec { views: vec![], transforms: grid, heads: vec![Head::Feature] }).is_err());
    }

    #[test]
    fn pool_serde() {
        let spec: PoolSpec = serde_json::from_str(
            r#"{"views":[0,1],"heads":[{"kind":"feature"},{"kind":"surrogate","r":2,"beta":0.5}]}"#,
        )
        .unwrap();
        let pool = build_pool(&spec).unwrap();
        assert_eq!(pool.len(), 4);
        assert_eq!(pool.configs()[1].head, Head::Surrogate(SurrogateParams::new(2, 0.5, 1.0).unwrap()));
        let back: ConfigPool = serde_json::from_str(&serde_json::to_string(&pool).unwrap()).unwrap();
        assert_eq!(back, pool);
        assert!(serde_json::from_str::<ConfigPool>("[]").is_err());
    }

    #[test]
    fn schemes() {
        let pool = feature_pool((0..4).collect(), TransformParams::default_grid());
        assert_eq!(scheme_full(&pool), pool);
        let a = scheme_random(&pool, 5, 9).unwrap();
        assert_eq!(a, scheme_random(&pool, 5, 9).unwrap());
        assert_eq!(a.len(), 5);
        let pos: Vec<usize> = a.configs().iter().map(|c| pool.configs().iter().position(|d| d == c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(scheme_random(&pool, pool.len(), 1).unwrap(), pool);
        assert_eq!(scheme_random(&pool, 1, 1).unwrap().len(), 1);
        assert!(scheme_random(&pool, 0, 1).is_err());
        assert!(scheme_random(&pool, 33, 1).is_err());
    }

    #[test]
    fn single_feature_member_is_plain_vd() {
        let b = banks();
        let t = TransformParams::new(1.0, 0.04, 0.5).unwrap();
        let ctx = EnsembleContext::<f64>::new(feature_pool(vec![2], vec![t]), &b.novel, None).unwrap();
        let p = InfluenceParams::default();
        for e in 0..20 {
            let draw = sample_episode(&b.novel, &spec(), e).unwrap();
            let fitted = ctx.fit_episode(&draw).unwrap();
            let ep = draw.episode::<f64>(&b.novel, 2).unwrap().transformed(&t).unwrap();
            let clusters = fitted.model.clusters().unwrap();
            for (k, c) in clusters.iter().enumerate() {
                assert_eq!(c.members()[0], prototypes(&ep).get(k).clone());
            }
            assert_eq!(fitted.predict_all(&p).unwrap(), predict_vd(&ep).unwrap());
        }
    }

    #[test]
    fn single_surrogate_member_is_classify_surrogate() {
        let b = banks();
        let t = TransformParams::identity();
        let params = SurrogateParams::new(2, 1.0, 1.0).unwrap();
        let pool = ConfigPool::new(vec![Config::new(1, t, Head::Surrogate(params))]).unwrap();
        let ctx = EnsembleContext::<f64>::new(pool, &b.novel, Some(&b.base)).unwrap();
        let base = base_prototypes::<f64>(&b.base, 1, &t).unwrap();
        for e in 0..10 {
            let draw = sample_episode(&b.novel, &spec(), e).unwrap();
            let ep = draw.episode::<f64>(&b.novel, 1).unwrap();
            assert_eq!(
                ctx.predict_episode(&draw, &InfluenceParams::default()).unwrap(),
                classify_surrogate(&ep, &base, &params, &t).unwrap()
            );
        }
    }

    #[test]
    fn feature_pool_matches_assign_ccvd() {
        let b = banks();
        let pool = feature_pool((0..4).collect(), TransformParams::default_grid()[..2].to_vec());
        let ctx = EnsembleContext::<f64>::new(pool, &b.novel, None).unwrap();
        for alpha in [1.0, 2.0, 0.5, -1.0] {
            let p = InfluenceParams::new(alpha, Metric::Squared).unwrap();
            let pe = InfluenceParams::new(alpha, Metric::Euclidean).unwrap();
            for e in 0..10 {
                let f = ctx.fit_episode(&sample_episode(&b.novel, &spec(), e).unwrap()).unwrap();
                let clusters = f.model.clusters().unwrap();
                for q in &f.queries {
                    let qc = Cluster::positional(q.members().iter().map(|m| Point::new(m.clone()).unwrap()).collect())
                        .unwrap();
                    assert_eq!(f.model.predict(q, &p).unwrap(), assign_ccvd(&clusters, &qc, &p).unwrap());
                    assert_eq!(f.model.predict(q, &pe).unwrap(), assign_ccvd(&clusters, &qc, &pe).unwrap());
                }
            }
        }
    }

    #[test]
    fn hand_evaluated_three_member_sums() {
        let protos = |rows: Vec<Vec<f64>>| Member::Feature { protos: CenterSet::from_rows(rows).unwrap() };
        let model = EnsembleModel {
            fingerprint: 7,
            k: 2,
            members: vec![
                protos(vec![vec![0.0], vec![2.0]]),
                protos(vec![vec![0.0], vec![3.0]]),
                protos(vec![vec![1.0], vec![0.0]]),
            ],
        };
        let query = QueryCluster { fingerprint: 7, members: vec![vec![1.5], vec![1.0], vec![0.0]] };
        // class 0: 2.25 + 1 + 1 = 4.25; class 1: 0.25 + 4 + 0 = 4.25 -> tie, lower index
        let p = InfluenceParams::default();
        assert_eq!(model.terms(&query, &p).unwrap(), vec![vec![2.25, 0.25], vec![1.0, 4.0], vec![1.0, 0.0]]);
        assert_eq!(model.predict(&query, &p).unwrap(), 0);
        // alpha = 0.5 on squared distances: 1.5 + 1 + 1 = 3.5 vs 0.5 + 2 + 0 = 2.5 -> class 1
        let p = InfluenceParams::new(0.5, Metric::Squared).unwrap();
        assert_eq!(model.predict(&query, &p).unwrap(), 1);
        let wrong = query.clone().with_fingerprint(8);
        assert!(matches!(model.predict(&wrong, &p).unwrap_err(), Error::PoolMismatch));
        let short = QueryCluster { fingerprint: 7, members: vec![vec![1.5]] };
        assert!(matches!(model.predict(&short, &p).unwrap_err(), Error::PoolMismatch));
    }

    #[test]
    fn duplicated_and_permuted_pools_agree() {
        let b = banks();
        let base = feature_pool((0..3).collect(), TransformParams::default_grid()[3..5].to_vec());
        let l = base.len();
        let dup = base.select(&(0..2 * l).map(|i| i % l).collect::<Vec<_>>()).unwrap();
        let perm = base.select(&(0..l).rev().collect::<Vec<_>>()).unwrap();
        let single = base.select(&[2]).unwrap();
        let single2 = base.select(&[2, 2]).unwrap();
        let ctxs: Vec<EnsembleContext<f64>> = [base, dup, perm, single, single2]
            .into_iter()
            .map(|p| EnsembleContext::new(p, &b.novel, None).unwrap())
            .collect();
        let p = InfluenceParams::default();
        for e in 0..20 {
            let draw = sample_episode(&b.novel, &spec(), e).unwrap();
            let preds: Vec<Vec<usize>> = ctxs.iter().map(|c| c.predict_episode(&draw, &p).unwrap()).collect();
            assert_eq!(preds[0], preds[1]);
            assert_eq!(preds[3], preds[4]);
            assert_eq!(preds[0], preds[2]);
        }
    }

    #[test]
    fn mixed_heads_pair_positionally() {
        let b = banks();
        let pool = build_pool(&PoolSpec {
            views: vec![0, 1],
            transforms: vec![TransformParams::identity()],
            heads: vec![Head::Feature, Head::Surrogate(SurrogateParams::new(3, 1.0, 1.0).unwrap())],
        })
        .unwrap();
        let ctx = EnsembleContext::<f64>::new(pool, &b.novel, Some(&b.base)).unwrap();
        let f = ctx.fit_episode(&sample_episode(&b.novel, &spec(), 0).unwrap()).unwrap();
        assert_eq!(f.model.len(), 4);
        assert_eq!(f.queries[0].members().len(), 4);
        let clusters = f.model.clusters().unwrap();
        assert_eq!(clusters.len(), 3);
        assert!(clusters.iter().all(|c| c.len() == 4));
        for q in &f.queries {
            for (i, z) in q.members().iter().enumerate() {
                assert!(clusters.iter().all(|c| c.members()[i].dim() == z.len()));
            }
        }
        assert!(f.predict_all(&InfluenceParams::default()).is_ok());
    }

    #[test]
    fn context_validation() {
        let b = banks();
        let sur = Head::Surrogate(SurrogateParams::new(1, 1.0, 1.0).unwrap());
        let pool = ConfigPool::new(vec![Config::new(0, TransformParams::identity(), sur)]).unwrap();
        assert!(EnsembleContext::<f64>::new(pool, &b.novel, None).is_err());
        let pool = feature_pool(vec![9], vec![TransformParams::identity()]);
        assert!(EnsembleContext::<f64>::new(pool, &b.novel, None).is_err());
    }

    #[test]
    fn guided_keeps_first_maximum() {
        let b = banks();
        let pool = feature_pool(vec![0, 0, 0], vec![TransformParams::identity()]);
        let ctx = EnsembleContext::<f64>::new(pool, &b.validation, None).unwrap();
        let g = scheme_guided(&ctx, &spec(), &InfluenceParams::default()).unwrap();
        assert_eq!(g.pool.len(), 1);
        assert_eq!(g.ranking, vec![0, 1, 2]);
        assert!(g.curve.windows(2).all(|w| w[0] == w[1]));
        let empty = EpisodeSpec { episodes: 0, ..spec() };
        assert!(scheme_guided(&ctx, &empty, &InfluenceParams::default()).is_err());
    }

    #[test]
    fn guided_ranks_dominant_first_and_drops_corrupted() {
        let b = banks();
        let corrupted = b.validation.with_shuffled_view(3, 5).unwrap();
        let pool = feature_pool((0..4).collect(), vec![TransformParams::identity()]);
        let ctx = EnsembleContext::<f64>::new(pool, &corrupted, None).unwrap();
        let g = scheme_guided(&ctx, &EpisodeSpec::new(3, 1, 5, 60, 1), &InfluenceParams::default()).unwrap();
        assert_eq!(*g.ranking.last().unwrap(), 3);
        assert!(g.member_accuracy[3] < g.member_accuracy[..3].iter().cloned().fold(f64::INFINITY, f64::min));
        assert!(g.pool.configs().iter().all(|c| c.view != 3));
        let best_single = g.member_accuracy.iter().cloned().fold(0.0, f64::max);
        assert!(g.curve[g.pool.len() - 1] >= best_single);
    }
}
