//! Compositional feature transform `tukey_lambda(w * normalize(z) + b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TransformStage};
use crate::geometry::Point;
use crate::scalar::Scalar;

/// Scale `w`, shift `b` and ladder-of-powers exponent `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct TransformParams {
    w: f64,
    b: f64,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(default = "one")]
    w: f64,
    #[serde(default)]
    b: f64,
    #[serde(default = "one")]
    lambda: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawParams> for TransformParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        TransformParams::new(r.w, r.b, r.lambda)
    }
}

impl From<TransformParams> for RawParams {
    fn from(p: TransformParams) -> Self {
        RawParams { w: p.w, b: p.b, lambda: p.lambda }
    }
}

impl TransformParams {
    pub fn new(w: f64, b: f64, lambda: f64) -> Result<Self> {
        if !(w.is_finite() && b.is_finite() && lambda.is_finite()) {
            return Err(Error::param("transform", "w, b and lambda must be finite"));
        }
        if w == 0.0 {
            return Err(Error::param("w", "must be nonzero"));
        }
        Ok(TransformParams { w, b, lambda })
    }

    /// Plain L2 normalization: `w = 1, b = 0, lambda = 1`.
    pub fn identity() -> Self {
        TransformParams { w: 1.0, b: 0.0, lambda: 1.0 }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `lambda in {1.0, 0.5}` crossed with `b in {0, 0.02, 0.04, 0.08}`, `w = 1`.
    pub fn default_grid() -> Vec<TransformParams> {
        let mut grid = Vec::with_capacity(8);
        for &lambda in &[1.0, 0.5] {
            for &b in &[0.0, 0.02, 0.04, 0.08] {
                grid.push(TransformParams { w: 1.0, b, lambda });
            }
        }
        grid
    }

    /// Applies the full composition to a raw feature vector.
    pub fn apply<S: Scalar>(&self, z: &[S]) -> Result<Vec<S>> {
        let mut v = l2_normalize(z)?;
        linear_in_place(&mut v, S::lit(self.w), S::lit(self.b));
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::transform(TransformStage::Linear, "non-finite output"));
        }
        tukey_in_place(&mut v, S::lit(self.lambda))?;
        Ok(v)
    }

    pub fn apply_point<S: Scalar>(&self, z: &[S]) -> Result<Point<S>> {
        self.apply(z).map(Point::from_vec_unchecked)
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::identity()
    }
}

/// Projects `z` onto the unit sphere.
pub fn l2_normalize<S: Scalar>(z: &[S]) -> Result<Vec<S>> {
    if z.is_empty() {
        return Err(Error::transform(TransformStage::Normalize, "empty vector"));
    }
    let norm = z.iter().fold(S::zero(), |acc, &v| acc + v * v).sqrt();
    if !norm.is_finite() {
        return Err(Error::transform(TransformStage::Normalize, "non-finite norm"));
    }
    if norm == S::zero() {
        return Err(Error::transform(TransformStage::Normalize, "zero vector has no direction"));
    }
    Ok(z.iter().map(|&v| v / norm).collect())
}

/// Elementwise `w * z_i + b`.
pub fn linear<S: Scalar>(z: &[S], w: S, b: S) -> Vec<S> {
    let mut v = z.to_vec();
    linear_in_place(&mut v, w, b);
    v
}

fn linear_in_place<S: Scalar>(v: &mut [S], w: S, b: S) {
    if w == S::one() && b == S::zero() {
        return;
    }
    for x in v.iter_mut() {
        *x = w * *x + b;
    }
}

/// Tukey's ladder of powers: `z_i^lambda`, or `ln z_i` when `lambda == 0`.
///
/// Zero and fractional exponents need strictly positive entries; integer
/// exponents accept any entry whose power is finite.
pub fn tukey<S: Scalar>(z: &[S], lambda: S) -> Result<Vec<S>> {
    let mut v = z.to_vec();
    tukey_in_place(&mut v, lambda)?;
    Ok(v)
}

fn tukey_in_place<S: Scalar>(v: &mut [S], lambda: S) -> Result<()> {
    if lambda == S::one() {
        return Ok(());
    }
    let integral = lambda.fract() == S::zero() && lambda != S::zero();
    if !integral {
        if let Some(bad) = v.iter().find(|x| !(**x > S::zero())) {
            return Err(Error::transform(
                TransformStage::Tukey,
                format!("entry {bad} is not strictly positive (lambda = {lambda})"),
            ));
        }
    }
    if lambda == S::zero() {
        for x in v.iter_mut() {
            *x = x.ln();
        }
    } else if integral {
        let n = lambda.to_i32().ok_or_else(|| Error::transform(TransformStage::Tukey, "exponent out of range"))?;
        for x in v.iter_mut() {
            *x = x.powi(n);
        }
    } else {
        for x in v.iter_mut() {
            *x = x.powf(lambda);
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::transform(TransformStage::Tukey, "non-finite output"));
    }
    Ok(())
}
