//! Distance, influence, and cell-assignment kernels.
//!
//! Four partitions of feature space are supported, all answered by point
//! location rather than explicit cell construction:
//!
//! * **VD**: nearest center under squared Euclidean distance.
//! * **PD**: nearest center under the power distance `|z - c|^2 - weight`.
//! * **CIVD**: each cell is owned by a cluster of points; a query goes to the
//!   cluster with the largest influence `-sign(alpha) * sum_i d(c_i, z)^alpha`.
//! * **CCVD**: cells and queries are both equal-length ordered clusters and
//!   the influence pairs members by position.
//!
//! Every `argmin`/`argmax` breaks ties toward the lowest class index.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A finite, non-empty coordinate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<S>(Vec<S>);

impl<S: Scalar> Point<S> {
    pub fn new(coords: Vec<S>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        Ok(Point(coords))
    }

    /// Wraps coordinates produced by a kernel whose inputs were already validated.
    pub(crate) fn from_vec_unchecked(coords: Vec<S>) -> Self {
        debug_assert!(!coords.is_empty());
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }
}

impl<S> std::ops::Deref for Point<S> {
    type Target = [S];

    fn deref(&self) -> &[S] {
        &self.0
    }
}

/// Ordered, non-empty list of centers sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet<S> {
    centers: Vec<Point<S>>,
}

impl<S: Scalar> CenterSet<S> {
    pub fn new(centers: Vec<Point<S>>) -> Result<Self> {
        check_same_dim(&centers, "center set")?;
        Ok(CenterSet { centers })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Point::new).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn centers(&self) -> &[Point<S>] {
        &self.centers
    }

    pub fn get(&self, k: usize) -> &Point<S> {
        &self.centers[k]
    }

    pub fn into_points(self) -> Vec<Point<S>> {
        self.centers
    }
}

/// Centers with one nonnegative additive weight each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCenterSet<S> {
    centers: CenterSet<S>,
    weights: Vec<S>,
}

impl<S: Scalar> WeightedCenterSet<S> {
    pub fn new(centers: CenterSet<S>, weights: Vec<S>) -> Result<Self> {
        if weights.len() != centers.len() {
            return Err(Error::WeightCount { centers: centers.len(), weights: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("power weights"));
        }
        if weights.iter().any(|w| *w < S::zero()) {
            return Err(Error::param("weights", "power weights must be nonnegative"));
        }
        Ok(WeightedCenterSet { centers, weights })
    }

    pub fn centers(&self) -> &CenterSet<S> {
        &self.centers
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }
}

/// Ordered multiset of points owning one CIVD/CCVD cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<S> {
    members: Vec<Point<S>>,
}

impl<S: Scalar> Cluster<S> {
    pub fn new(members: Vec<Point<S>>) -> Result<Self> {
        check_same_dim(&members, "cluster")?;
        Ok(Cluster { members })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Point::new).collect::<Result<_>>()?)
    }

    pub fn singleton(p: Point<S>) -> Self {
        Cluster { members: vec![p] }
    }

    /// Cluster whose members may live in different spaces, one per position.
    /// Only meaningful for cluster-to-cluster influence, which checks each
    /// position against its partner.
    pub fn positional(members: Vec<Point<S>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("cluster"));
        }
        Ok(Cluster { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn members(&self) -> &[Point<S>] {
        &self.members
    }
}

fn check_same_dim<S: Scalar>(points: &[Point<S>], what: &'static str) -> Result<()> {
    let first = points.first().ok_or(Error::Empty(what))?;
    for p in &points[1..] {
        if p.dim() != first.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), found: p.dim() });
        }
    }
    Ok(())
}

/// Distance used inside influence functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Squared,
    Euclidean,
}

impl Metric {
    #[inline]
    pub(crate) fn eval<S: Scalar>(self, a: &[S], b: &[S]) -> S {
        let sq = sq_dist_unchecked(a, b);
        match self {
            Metric::Squared => sq,
            Metric::Euclidean => sq.sqrt(),
        }
    }

    /// Applies the metric to an already-computed squared distance.
    #[inline]
    pub(crate) fn of_squared<S: Scalar>(self, sq: S) -> S {
        match self {
            Metric::Squared => sq,
            Metric::Euclidean => sq.sqrt(),
        }
    }
}

/// Exponent and base distance of the influence function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceParams<S> {
    alpha: S,
    metric: Metric,
}

impl<S: Scalar> InfluenceParams<S> {
    /// Fails for `alpha == 0` (the sign factor would annihilate every influence)
    /// and for non-finite exponents.
    pub fn new(alpha: S, metric: Metric) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        if alpha == S::zero() {
            return Err(Error::param("alpha", "must be nonzero"));
        }
        Ok(InfluenceParams { alpha, metric })
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// `d^alpha`, rejecting the singular case `d == 0, alpha < 0`.
    #[inline]
    pub(crate) fn power(&self, d: S) -> Result<S> {
        if self.alpha == S::one() {
            return Ok(d);
        }
        if d == S::zero() && self.alpha < S::zero() {
            return Err(Error::SingularInfluence);
        }
        Ok(d.powf(self.alpha))
    }

    /// `-sign(alpha) * sum_i d_i^alpha` over precomputed distances.
    pub fn influence_from_distances<I>(&self, distances: I) -> Result<S>
    where
        I: IntoIterator<Item = S>,
    {
        let mut acc = S::zero();
        for d in distances {
            acc += self.power(d)?;
        }
        Ok(if self.alpha > S::zero() { -acc } else { acc })
    }
}

impl<S: Scalar> Default for InfluenceParams<S> {
    fn default() -> Self {
        InfluenceParams { alpha: S::one(), metric: Metric::Squared }
    }
}

#[inline]
pub(crate) fn sq_dist_unchecked<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

#[inline]
fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Squared Euclidean distance `sum_i (a_i - b_i)^2`.
pub fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    check_dim(a.len(), b.len())?;
    Ok(sq_dist_unchecked(a, b))
}

/// Index of the smallest value; the first one wins on ties.
pub fn argmin_first<S: Scalar, I: IntoIterator<Item = S>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the largest value; the first one wins on ties.
pub fn argmax_first<S: Scalar, I: IntoIterator<Item = S>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Voronoi cell of `z`: `argmin_k |z - c_k|^2`.
pub fn assign_vd<S: Scalar>(centers: &CenterSet<S>, z: &[S]) -> Result<usize> {
    check_dim(centers.dim(), z.len())?;
    argmin_first(centers.centers().iter().map(|c| sq_dist_unchecked(c, z))).ok_or(Error::Empty("center set"))
}

/// Power cell of `z`: `argmin_k |z - c_k|^2 - weight_k`.
pub fn assign_pd<S: Scalar>(wcenters: &WeightedCenterSet<S>, z: &[S]) -> Result<usize> {
    let centers = wcenters.centers();
    check_dim(centers.dim(), z.len())?;
    argmin_first(centers.centers().iter().zip(wcenters.weights()).map(|(c, &w)| sq_dist_unchecked(c, z) - w))
        .ok_or(Error::Empty("center set"))
}

/// Influence of `cluster` on the point `z`.
pub fn influence<S: Scalar>(cluster: &Cluster<S>, z: &[S], p: &InfluenceParams<S>) -> Result<S> {
    for c in cluster.members() {
        check_dim(c.dim(), z.len())?;
    }
    p.influence_from_distances(cluster.members().iter().map(|c| p.metric.eval(c, z)))
}

/// CIVD cell of `z`: the cluster with the largest influence.
pub fn assign_civd<S: Scalar>(clusters: &[Cluster<S>], z: &[S], p: &InfluenceParams<S>) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::Empty("cluster list"));
    }
    let scores = clusters.iter().map(|c| influence(c, z, p)).collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(scores).expect("non-empty"))
}

/// Cluster-to-cluster influence, pairing members by position.
pub fn influence_ccvd<S: Scalar>(cluster: &Cluster<S>, query: &Cluster<S>, p: &InfluenceParams<S>) -> Result<S> {
    if cluster.len() != query.len() {
        return Err(Error::CardinalityMismatch { expected: cluster.len(), found: query.len() });
    }
    for (c, z) in cluster.members().iter().zip(query.members()) {
        check_dim(c.dim(), z.dim())?;
    }
    p.influence_from_distances(cluster.members().iter().zip(query.members()).map(|(c, z)| p.metric.eval(c, z)))
}

/// CCVD cell of the whole query cluster.
pub fn assign_ccvd<S: Scalar>(clusters: &[Cluster<S>], query: &Cluster<S>, p: &InfluenceParams<S>) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::Empty("cluster list"));
    }
    let scores = clusters.iter().map(|c| influence_ccvd(c, query, p)).collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(scores).expect("non-empty"))
}
