//! Influence-based Voronoi partitions (VD, PD, CIVD, CCVD) as few-shot
//! classification heads over precomputed feature embeddings.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (the default precision) or `f32`.

// `!(x >= 0.0)`-style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod surrogate;
pub mod transforms;

pub use classifiers::{Episode, LinearModel, TrainOptions};
pub use data::{EpisodeSpec, FeatureBank, SyntheticSpec};
pub use ensemble::{ConfigPool, EnsembleModel, PoolSpec};
pub use error::{Error, ErrorKind, Result};
pub use eval::{EvalReport, SweepTable};
pub use geometry::{CenterSet, Cluster, InfluenceParams, Metric, Point, WeightedCenterSet};
pub use pipeline::{Banks, HeadSpec, Scheme};
pub use scalar::Scalar;
pub use surrogate::{SurrogateGrid, SurrogateParams};
pub use transforms::TransformParams;

pub type Point64 = Point<f64>;
pub type Point32 = Point<f32>;
pub type CenterSet64 = CenterSet<f64>;
pub type CenterSet32 = CenterSet<f32>;
pub type WeightedCenterSet64 = WeightedCenterSet<f64>;
pub type Cluster64 = Cluster<f64>;
pub type InfluenceParams64 = InfluenceParams<f64>;
pub type Episode64 = Episode<f64>;
pub type Episode32 = Episode<f32>;
pub type LinearModel64 = LinearModel<f64>;
pub type EnsembleModel64 = EnsembleModel<f64>;
