//! Declarative head selection: turns a serializable head description plus
//! banks into an episode predictor, split into fit, classify and reduce phases
//! so that evaluation and benchmarking share one code path.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    classify_civd_integrated, classify_linear, lr_centers, prototypes, train_power_lr, train_voronoi_lr, LinearModel,
    TrainOptions,
};
use crate::data::{sample_episode, EpisodeDraw, EpisodeSpec, FeatureBank};
use crate::ensemble::{
    build_pool, scheme_guided, scheme_random, EnsembleContext, FittedEpisode, GuidedSelection, Head, PoolSpec,
};
use crate::error::{Error, Result};
use crate::eval::{accuracy, sweep_surrogate_grid, EpisodePredictor, SweepTable};
use crate::geometry::{argmin_first, sq_dist_unchecked, CenterSet, InfluenceParams, Metric};
use crate::scalar::Scalar;
use crate::surrogate::{base_prototypes, BasePrototypes, SurrogateEpisode, SurrogateGrid, SurrogateParams};
use crate::transforms::TransformParams;

/// Serializable form of [`InfluenceParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceSpec {
    pub alpha: f64,
    pub metric: Metric,
}

impl Default for InfluenceSpec {
    fn default() -> Self {
        InfluenceSpec { alpha: 1.0, metric: Metric::Squared }
    }
}

impl InfluenceSpec {
    pub fn params<S: Scalar>(&self) -> Result<InfluenceParams<S>> {
        let alpha = S::from_f64(self.alpha).ok_or_else(|| Error::param("alpha", "not representable"))?;
        InfluenceParams::new(alpha, self.metric)
    }
}

/// Member-selection scheme applied to an ensemble pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    #[default]
    Full,
    Random {
        size: usize,
        seed: u64,
    },
    /// Ranks and prefixes members on validation episodes.
    Guided,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// One classification head; every variant reads `view` of the banks and
/// applies `transform` to support and query features first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadSpec {
    Vd {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
    },
    PowerLr {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
        #[serde(default)]
        train: TrainOptions,
    },
    VoronoiLr {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
        #[serde(default)]
        train: TrainOptions,
    },
    /// Two-member clusters of the prototype and the Voronoi-LR center.
    Civd {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
        #[serde(default)]
        train: TrainOptions,
        #[serde(default)]
        influence: InfluenceSpec,
    },
    Surrogate {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
        params: SurrogateParams,
    },
    /// Surrogate head with the single best `(R, beta)` on validation.
    SurrogateGrid {
        #[serde(default)]
        view: usize,
        #[serde(default)]
        transform: TransformParams,
        #[serde(default)]
        grid: SurrogateGrid,
    },
    /// CCVD over a configuration pool. With `surrogate_grid`, one surrogate
    /// head per R (its validation-best beta) is appended to `pool.heads`.
    Ensemble {
        pool: PoolSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        surrogate_grid: Option<SurrogateGrid>,
        #[serde(default, skip_serializing_if = "is_default")]
        scheme: Scheme,
        #[serde(default)]
        influence: InfluenceSpec,
    },
}

impl HeadSpec {
    pub fn vd() -> Self {
        HeadSpec::Vd { view: 0, transform: TransformParams::identity() }
    }

    /// Short human-readable label used in reports.
    pub fn describe(&self) -> String {
        match self {
            HeadSpec::Vd { view, .. } => format!("vd view={view}"),
            HeadSpec::PowerLr { view, .. } => format!("power_lr view={view}"),
            HeadSpec::VoronoiLr { view, .. } => format!("voronoi_lr view={view}"),
            HeadSpec::Civd { view, influence, .. } => format!("civd view={view} alpha={}", influence.alpha),
            HeadSpec::Surrogate { view, params, .. } => {
                format!("surrogate view={view} r={} beta={} gamma={}", params.r(), params.beta(), params.gamma())
            }
            HeadSpec::SurrogateGrid { view, .. } => format!("surrogate_grid view={view}"),
            HeadSpec::Ensemble { pool, surrogate_grid, scheme, influence } => format!(
                "ensemble views={} transforms={} heads={}{} scheme={} alpha={}",
                pool.views.len(),
                pool.transforms.len(),
                pool.heads.len(),
                if surrogate_grid.is_some() { "+grid" } else { "" },
                match scheme {
                    Scheme::Full => "full",
                    Scheme::Random { .. } => "random",
                    Scheme::Guided => "guided",
                },
                influence.alpha
            ),
        }
    }
}

/// Banks a head may read: novel for evaluation, base for surrogates,
/// validation for grid and guided selection.
#[derive(Debug, Clone)]
pub struct Banks {
    pub base: Option<FeatureBank>,
    pub novel: FeatureBank,
    pub validation: Option<FeatureBank>,
}

impl Banks {
    fn base(&self) -> Result<&FeatureBank> {
        self.base.as_ref().ok_or_else(|| Error::Config("this head needs a base bank".into()))
    }

    fn validation(&self) -> Result<&FeatureBank> {
        self.validation.as_ref().ok_or_else(|| Error::Config("this head needs a validation bank".into()))
    }
}

/// Choices made on validation data while building a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Full `(R, beta)` table and the single chosen cell.
    SurrogateSweep {
        table: SweepTable,
        chosen: SurrogateParams,
    },
    /// Full `(R, beta)` table and the per-R winners added to the pool.
    PerRadiusSweep {
        table: SweepTable,
        heads: Vec<SurrogateParams>,
    },
    Guided(GuidedSelection),
}

#[derive(Debug)]
enum Kind<'a, S> {
    Vd,
    Linear { train: TrainOptions, voronoi: bool },
    Civd { train: TrainOptions, p: InfluenceParams<S> },
    Surrogate { base: BasePrototypes<S>, params: SurrogateParams },
    Ensemble { ctx: EnsembleContext<'a, S>, p: InfluenceParams<S> },
}

/// A head ready to label episodes of the novel bank.
#[derive(Debug)]
pub struct BuiltHead<'a, S> {
    description: String,
    novel: &'a FeatureBank,
    view: usize,
    transform: TransformParams,
    kind: Kind<'a, S>,
    selection: Option<Selection>,
}

/// Per-episode state after the fitting phase.
pub enum Fitted<S> {
    Vd { protos: CenterSet<S>, queries: Vec<Vec<S>> },
    Linear { model: LinearModel<S>, queries: Vec<Vec<S>> },
    Civd { protos: CenterSet<S>, lr: CenterSet<S>, queries: Vec<Vec<S>> },
    Surrogate(SurrogateEpisode<S>),
    Ensemble(FittedEpisode<S>),
}

/// Per-query output of the classification phase.
pub enum Classified<S> {
    Labels(Vec<usize>),
    /// Positional influence terms of every query, awaiting reduction.
    Terms(Vec<Vec<Vec<S>>>),
}

fn best_cell(table: &SweepTable) -> (usize, f64) {
    // ties go to the earlier row, i.e. the smaller R
    let mut best = table.best[0];
    for cell in &table.best[1..] {
        if cell.accuracy > best.accuracy {
            best = *cell;
        }
    }
    (best.row, best.col)
}

fn grid_params(grid: &SurrogateGrid, r: usize, beta: f64) -> Result<SurrogateParams> {
    Ok(SurrogateParams::new(r, beta, grid.gamma)?.with_pattern_metric(grid.pattern_metric))
}

/// Builds `head` over `banks`; `validation` drives any grid or guided selection.
pub fn build_head<'a, S: Scalar>(
    head: &HeadSpec,
    banks: &'a Banks,
    validation: &EpisodeSpec,
) -> Result<BuiltHead<'a, S>> {
    let novel = &banks.novel;
    let simple = |view: usize, transform: TransformParams, kind: Kind<'a, S>| -> Result<BuiltHead<'a, S>> {
        novel.check_view(view)?;
        Ok(BuiltHead { description: head.describe(), novel, view, transform, kind, selection: None })
    };
    match head {
        HeadSpec::Vd { view, transform } => simple(*view, *transform, Kind::Vd),
        HeadSpec::PowerLr { view, transform, train } | HeadSpec::VoronoiLr { view, transform, train } => {
            train.validate()?;
            let voronoi = matches!(head, HeadSpec::VoronoiLr { .. });
            simple(*view, *transform, Kind::Linear { train: *train, voronoi })
        }
        HeadSpec::Civd { view, transform, train, influence } => {
            train.validate()?;
            simple(*view, *transform, Kind::Civd { train: *train, p: influence.params()? })
        }
        HeadSpec::Surrogate { view, transform, params } => {
            novel.check_view(*view)?;
            let base = base_prototypes::<S>(banks.base()?, *view, transform)?;
            simple(*view, *transform, Kind::Surrogate { base, params: *params })
        }
        HeadSpec::SurrogateGrid { view, transform, grid } => {
            novel.check_view(*view)?;
            let base = base_prototypes::<S>(banks.base()?, *view, transform)?;
            let table = sweep_surrogate_grid(banks.validation()?, *view, transform, &base, grid, validation)?;
            let (r, beta) = best_cell(&table);
            let params = grid_params(grid, r, beta)?;
            let mut built = simple(*view, *transform, Kind::Surrogate { base, params })?;
            built.description = format!("{} r={r} beta={beta}", built.description);
            built.selection = Some(Selection::SurrogateSweep { table, chosen: params });
            Ok(built)
        }
        HeadSpec::Ensemble { pool, surrogate_grid, scheme, influence } => {
            let p = influence.params::<S>()?;
            let mut spec = pool.clone();
            let mut selection = None;
            if let Some(grid) = surrogate_grid {
                let (&view, &transform) = spec
                    .views
                    .first()
                    .zip(spec.transforms.first())
                    .ok_or_else(|| Error::Config("pool needs at least one view and one transform".into()))?;
                let base = base_prototypes::<S>(banks.base()?, view, &transform)?;
                let table = sweep_surrogate_grid(banks.validation()?, view, &transform, &base, grid, validation)?;
                let heads = table.best.iter().map(|c| grid_params(grid, c.row, c.col)).collect::<Result<Vec<_>>>()?;
                spec.heads.extend(heads.iter().map(|&h| Head::Surrogate(h)));
                selection = Some(Selection::PerRadiusSweep { table, heads });
            }
            let full = build_pool(&spec)?;
            let base = if full.needs_base() { Some(banks.base()?) } else { None };
            let chosen = match scheme {
                Scheme::Full => full,
                Scheme::Random { size, seed } => scheme_random(&full, *size, *seed)?,
                Scheme::Guided => {
                    let vctx = EnsembleContext::<S>::new(full, banks.validation()?, base)?;
                    let g = scheme_guided(&vctx, validation, &p)?;
                    let pool = g.pool.clone();
                    selection = Some(Selection::Guided(g));
                    pool
                }
            };
            let ctx = EnsembleContext::new(chosen, novel, base)?;
            let description = format!("{} L={}", head.describe(), ctx.pool().len());
            Ok(BuiltHead {
                description,
                novel,
                view: 0,
                transform: TransformParams::identity(),
                kind: Kind::Ensemble { ctx, p },
                selection,
            })
        }
    }
}

impl<'a, S: Scalar> BuiltHead<'a, S> {
    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn selection(&self) -> Option<&Selection> {
        self.selection.as_ref()
    }

    /// Number of ensemble members; 1 for single heads.
    pub fn members(&self) -> usize {
        match &self.kind {
            Kind::Ensemble { ctx, .. } => ctx.pool().len(),
            _ => 1,
        }
    }

    /// Fitting phase: prototypes, trained models or ensemble members.
    pub fn fit(&self, draw: &EpisodeDraw) -> Result<Fitted<S>> {
        if let Kind::Ensemble { ctx, .. } = &self.kind {
            return Ok(Fitted::Ensemble(ctx.fit_episode(draw)?));
        }
        let ep = draw.episode::<S>(self.novel, self.view)?.transformed(&self.transform)?;
        let queries = || ep.query().iter().map(|(z, _)| z.as_slice().to_vec()).collect::<Vec<_>>();
        Ok(match &self.kind {
            Kind::Vd => Fitted::Vd { protos: prototypes(&ep), queries: queries() },
            Kind::Linear { train, voronoi } => {
                let model = if *voronoi { train_voronoi_lr(&ep, train)? } else { train_power_lr(&ep, train)? };
                Fitted::Linear { model, queries: queries() }
            }
            Kind::Civd { train, .. } => {
                let lr = lr_centers(&train_voronoi_lr(&ep, train)?)?;
                Fitted::Civd { protos: prototypes(&ep), lr, queries: queries() }
            }
            Kind::Surrogate { base, .. } => Fitted::Surrogate(SurrogateEpisode::prepare(&ep, base)?),
            Kind::Ensemble { .. } => unreachable!("handled above"),
        })
    }

    /// Classification phase: labels for single heads, positional terms for ensembles.
    pub fn classify(&self, fitted: &Fitted<S>) -> Result<Classified<S>> {
        Ok(match (fitted, &self.kind) {
            (Fitted::Vd { protos, queries }, _) => Classified::Labels(
                queries
                    .iter()
                    .map(|z| argmin_first(protos.centers().iter().map(|c| sq_dist_unchecked(z, c))).expect("K >= 1"))
                    .collect(),
            ),
            (Fitted::Linear { model, queries }, _) => {
                Classified::Labels(queries.iter().map(|z| classify_linear(model, z)).collect::<Result<_>>()?)
            }
            (Fitted::Civd { protos, lr, queries }, Kind::Civd { p, .. }) => Classified::Labels(
                queries.iter().map(|z| classify_civd_integrated(protos, lr, z, p)).collect::<Result<_>>()?,
            ),
            (Fitted::Surrogate(se), Kind::Surrogate { params, .. }) => Classified::Labels(se.predict(params)?),
            (Fitted::Ensemble(fe), Kind::Ensemble { p, .. }) => {
                Classified::Terms(fe.queries.iter().map(|q| fe.model.terms(q, p)).collect::<Result<_>>()?)
            }
            _ => return Err(Error::PoolMismatch),
        })
    }

    /// Reduction phase: sums ensemble terms; single heads pass through.
    pub fn reduce(&self, fitted: &Fitted<S>, classified: Classified<S>) -> Result<Vec<usize>> {
        match (classified, fitted, &self.kind) {
            (Classified::Labels(l), _, _) => Ok(l),
            (Classified::Terms(terms), Fitted::Ensemble(fe), Kind::Ensemble { p, .. }) => {
                Ok(terms.iter().map(|t| fe.model.reduce(t, p)).collect())
            }
            _ => Err(Error::PoolMismatch),
        }
    }
}

impl<S: Scalar> EpisodePredictor for BuiltHead<'_, S> {
    fn predict(&self, draw: &EpisodeDraw) -> Result<Vec<usize>> {
        let fitted = self.fit(draw)?;
        let classified = self.classify(&fitted)?;
        self.reduce(&fitted, classified)
    }
}

/// Seconds spent in each phase, in total and per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub description: String,
    pub members: usize,
    pub episodes: usize,
    pub mean_accuracy: f64,
    pub total_seconds: f64,
    /// Phase name to total seconds over all episodes.
    pub phases: BTreeMap<String, f64>,
    /// Phase name to seconds per episode, in episode order.
    pub per_episode: BTreeMap<String, Vec<f64>>,
}

pub const PHASES: [&str; 3] = ["member_fitting", "query_classification", "ensemble_reduction"];

/// Times each phase of `head` on `spec.episodes` episodes of its novel bank.
/// Episodes run one after another so phase timings do not overlap; member
/// fitting itself still uses the thread pool.
pub fn bench<S: Scalar>(head: &BuiltHead<'_, S>, spec: &EpisodeSpec) -> Result<BenchReport> {
    spec.validate_for(head.novel)?;
    let start = Instant::now();
    let mut per_episode: BTreeMap<String, Vec<f64>> = PHASES.iter().map(|p| (p.to_string(), Vec::new())).collect();
    let mut acc = 0.0;
    for i in 0..spec.episodes {
        let draw = sample_episode(head.novel, spec, i)?;
        let t0 = Instant::now();
        let fitted = head.fit(&draw)?;
        let t1 = Instant::now();
        let classified = head.classify(&fitted)?;
        let t2 = Instant::now();
        let preds = head.reduce(&fitted, classified)?;
        let t3 = Instant::now();
        acc += accuracy(&preds, &draw.query_labels());
        for (name, secs) in PHASES.iter().zip([t1 - t0, t2 - t1, t3 - t2]) {
            per_episode.get_mut(*name).expect("phase registered").push(secs.as_secs_f64());
        }
    }
    let phases = per_episode.iter().map(|(k, v)| (k.clone(), v.iter().sum())).collect();
    Ok(BenchReport {
        description: head.description.clone(),
        members: head.members(),
        episodes: spec.episodes,
        mean_accuracy: if spec.episodes == 0 { 0.0 } else { acc / spec.episodes as f64 },
        total_seconds: start.elapsed().as_secs_f64(),
        phases,
        per_episode,
    })
}
