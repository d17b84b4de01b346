//! Episode-loop evaluation, accuracy statistics and report persistence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::Episode;
use crate::data::{sample_episode, EpisodeDraw, EpisodeSpec, FeatureBank};
use crate::error::{Error, Result};
use crate::geometry::sq_dist_unchecked;
use crate::scalar::Scalar;
use crate::surrogate::{BasePrototypes, SurrogateEpisode, SurrogateGrid};
use crate::transforms::TransformParams;

/// Anything that labels the queries of a drawn episode.
pub trait EpisodePredictor: Sync {
    /// Predicted local class per query, in query order.
    fn predict(&self, draw: &EpisodeDraw) -> Result<Vec<usize>>;
}

impl<F> EpisodePredictor for F
where
    F: Fn(&EpisodeDraw) -> Result<Vec<usize>> + Sync,
{
    fn predict(&self, draw: &EpisodeDraw) -> Result<Vec<usize>> {
        self(draw)
    }
}

/// Mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    /// Set when fewer than two values make the width meaningless.
    pub degenerate: bool,
}

/// `1.96 * s / sqrt(E)` with the Bessel-corrected sample deviation `s`.
pub fn confidence_interval(values: &[f64]) -> Result<ConfidenceInterval> {
    if values.is_empty() {
        return Err(Error::Empty("accuracy list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok(ConfidenceInterval { mean, half_width: 0.0, degenerate: true });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(ConfidenceInterval { mean, half_width: 1.96 * var.sqrt() / n.sqrt(), degenerate: false })
}

/// Class-averaged mean pairwise Euclidean distance within the support set.
pub fn geometric_variance<S: Scalar>(episode: &Episode<S>) -> Result<S> {
    if episode.n() < 2 {
        return Err(Error::Degenerate(format!("geometric variance needs N >= 2, episode has N = {}", episode.n())));
    }
    let mut total = S::zero();
    for k in 0..episode.k() {
        let pts: Vec<&[S]> = episode.class_support(k).map(|p| p.as_slice()).collect();
        let mut sum = S::zero();
        let mut pairs = 0usize;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                sum += sq_dist_unchecked(pts[i], pts[j]).sqrt();
                pairs += 1;
            }
        }
        total += sum / S::from_usize(pairs).expect("pair count fits the scalar");
    }
    Ok(total / S::from_usize(episode.k()).expect("K fits the scalar"))
}

/// Outcome of evaluating one predictor over an episode stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub description: String,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub q: usize,
    pub episodes: usize,
    pub mean: f64,
    pub half_width: f64,
    pub degenerate_width: bool,
    pub accuracies: Vec<f64>,
    /// Support-set geometric variance per episode on raw view-0 features; empty when N < 2.
    pub geometric_variance: Vec<f64>,
    /// Seconds per phase. Excluded from determinism comparisons.
    pub wall_clock: BTreeMap<String, f64>,
}

impl EvalReport {
    /// Copy with timing removed, for reproducibility checks.
    pub fn without_wall_clock(&self) -> EvalReport {
        EvalReport { wall_clock: BTreeMap::new(), ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Rows of `episode_index,accuracy,gv`; `gv` is blank when undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode_index,accuracy,gv\n");
        for (i, a) in self.accuracies.iter().enumerate() {
            let _ = write!(out, "{i},{a}");
            match self.geometric_variance.get(i) {
                Some(g) => {
                    let _ = writeln!(out, ",{g}");
                }
                None => out.push_str(",\n"),
            }
        }
        out
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Fraction of `preds` equal to `labels`.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

fn wrap(index: usize, e: Error) -> Error {
    match e {
        Error::Episode { .. } => e,
        other => Error::Episode { index, source: Box::new(other) },
    }
}

/// Runs `f` on every episode index concurrently and returns results in index
/// order, or the error of the lowest failing index.
pub fn par_episodes<T, F>(episodes: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..episodes).into_par_iter().map(|i| f(i).map_err(|e| wrap(i, e))).collect();
    results.into_iter().collect()
}

/// Evaluates `predictor` on `spec.episodes` seeded episodes of `bank`.
pub fn evaluate<P: EpisodePredictor + ?Sized>(
    predictor: &P,
    bank: &FeatureBank,
    spec: &EpisodeSpec,
    description: impl Into<String>,
) -> Result<EvalReport> {
    spec.validate_for(bank)?;
    if spec.episodes == 0 {
        return Err(Error::Config("episode count must be at least 1".into()));
    }
    let start = Instant::now();
    let rows = par_episodes(spec.episodes, |i| {
        let draw = sample_episode(bank, spec, i)?;
        let preds = predictor.predict(&draw)?;
        if preds.len() != draw.query.len() {
            return Err(Error::CardinalityMismatch { expected: draw.query.len(), found: preds.len() });
        }
        let gv = if spec.n >= 2 { Some(geometric_variance(&draw.episode::<f64>(bank, 0)?)?) } else { None };
        Ok((accuracy(&preds, &draw.query_labels()), gv))
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    let accuracies: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ci = confidence_interval(&accuracies)?;
    Ok(EvalReport {
        description: description.into(),
        seed: spec.seed,
        k: spec.k,
        n: spec.n,
        q: spec.q,
        episodes: spec.episodes,
        mean: ci.mean,
        half_width: ci.half_width,
        degenerate_width: ci.degenerate,
        accuracies,
        geometric_variance: rows.iter().filter_map(|r| r.1).collect(),
        wall_clock: BTreeMap::from([("evaluate".to_string(), elapsed)]),
    })
}

/// Winning column of one grid row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub row: usize,
    pub col: f64,
    pub accuracy: f64,
}

/// Validation accuracy over a `rows x cols` grid with the per-row winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<usize>,
    pub cols: Vec<f64>,
    pub accuracy: Vec<Vec<f64>>,
    pub best: Vec<BestCell>,
}

impl SweepTable {
    /// Builds the table; ties within a row go to the smaller column value.
    pub fn from_accuracy(rows: Vec<usize>, cols: Vec<f64>, accuracy: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::Config("grid must have at least one row and one column".into()));
        }
        let best = rows
            .iter()
            .zip(&accuracy)
            .map(|(&row, accs)| {
                let mut j = 0;
                for (i, (&a, &c)) in accs.iter().zip(&cols).enumerate() {
                    if a > accs[j] || (a == accs[j] && c < cols[j]) {
                        j = i;
                    }
                }
                BestCell { row, col: cols[j], accuracy: accs[j] }
            })
            .collect();
        Ok(SweepTable { rows, cols, accuracy, best })
    }
}

/// Scores every grid cell with `score(row, col)`.
pub fn sweep_grid<F>(rows: &[usize], cols: &[f64], score: F) -> Result<SweepTable>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    let accuracy = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| score(r, c)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    SweepTable::from_accuracy(rows.to_vec(), cols.to_vec(), accuracy)
}

/// `(R, beta)` sweep of the surrogate head on `bank`'s `view`, preparing each
/// episode once for the whole grid. Rows are R values, columns betas.
pub fn sweep_surrogate_grid<S: Scalar>(
    bank: &FeatureBank,
    view: usize,
    transform: &TransformParams,
    base: &BasePrototypes<S>,
    grid: &SurrogateGrid,
    spec: &EpisodeSpec,
) -> Result<SweepTable> {
    spec.validate_for(bank)?;
    let cells = grid.params()?;
    let per_episode = par_episodes(spec.episodes, |i| {
        let draw = sample_episode(bank, spec, i)?;
        let ep = draw.episode::<S>(bank, view)?.transformed(transform)?;
        let se = SurrogateEpisode::prepare(&ep, base)?;
        let labels = draw.query_labels();
        cells.iter().map(|p| Ok(accuracy(&se.predict(p)?, &labels))).collect::<Result<Vec<f64>>>()
    })?;
    let e = per_episode.len() as f64;
    let nb = grid.betas.len();
    let accuracy = (0..grid.r_values.len())
        .map(|r| (0..nb).map(|b| per_episode.iter().map(|row| row[r * nb + b]).sum::<f64>() / e).collect())
        .collect();
    SweepTable::from_accuracy(grid.r_values.clone(), grid.betas.clone(), accuracy)
}
