//! Scalar output transforms `g(z)` applied to the linear predictor `z = w·x`.
//!
//! [`ConvexSqrt`] is the odd-symmetric square-root transform
//!
//! ```text
//! g(z) = sign(z) * (Y * sqrt(alpha * |z| + 1) - Y)
//! ```
//!
//! which keeps the squared loss `(g(z) - y)^2` convex in `z` whenever
//! `-Y <= y <= Y`. [`Affine`] is the linear baseline and [`Tanh`] is a
//! bounded, twice-differentiable transform whose squared loss is not convex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn require_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {value}")))
    }
}

#[derive(Deserialize)]
struct ConvexSqrtParams {
    alpha: f64,
    y_bound: f64,
}

/// Odd-symmetric square-root transform with curvature rate `alpha` and
/// target bound `Y`.
///
/// Writing `h(t) = (Y / alpha) * sqrt(alpha * t + 1)` and `beta = -Y`, the
/// transform is `g(z) = sign(z) * (alpha * h(|z|) + beta)`. The product
/// `h(t) h'(t)` is the constant `Y^2 / (2 alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexSqrtParams")]
pub struct ConvexSqrt {
    alpha: f64,
    y_bound: f64,
}

impl TryFrom<ConvexSqrtParams> for ConvexSqrt {
    type Error = Error;

    fn try_from(p: ConvexSqrtParams) -> Result<Self> {
        ConvexSqrt::new(p.alpha, p.y_bound)
    }
}

impl ConvexSqrt {
    pub fn new(alpha: f64, y_bound: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        require_positive("y_bound", y_bound)?;
        Ok(Self { alpha, y_bound })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn y_bound(&self) -> f64 {
        self.y_bound
    }

    /// `sqrt(alpha * t + 1)` for `t >= 0`, rescaled when `alpha * t` overflows.
    fn radical(&self, t: f64) -> f64 {
        let at = self.alpha * t;
        if at.is_finite() {
            (at + 1.0).sqrt()
        } else {
            self.alpha.sqrt() * t.sqrt()
        }
    }

    /// `g(t)` for `t >= 0`.
    fn magnitude(&self, t: f64) -> f64 {
        let at = self.alpha * t;
        let r = self.radical(t);
        if at <= 1.0 {
            // Y * (r - 1) rewritten to avoid cancellation near the origin.
            self.y_bound * at / (r + 1.0)
        } else {
            self.y_bound * (r - 1.0)
        }
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        self.magnitude(z.abs()).copysign(z)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        self.y_bound * self.alpha / (2.0 * self.radical(z.abs()))
    }

    pub fn inverse(&self, u: f64) -> f64 {
        let v = u.abs() / self.y_bound;
        // ((v + 1)^2 - 1) / alpha without cancellation.
        (v * (v + 2.0) / self.alpha).copysign(u)
    }

    /// `g(z + dz) - g(z)`, accurate even when the two values nearly cancel.
    pub fn increment(&self, z: f64, dz: f64) -> f64 {
        let z2 = z + dz;
        let same_side = (z >= 0.0 && z2 >= 0.0) || (z <= 0.0 && z2 <= 0.0);
        if same_side {
            let denom = self.radical(z.abs()) + self.radical(z2.abs());
            self.y_bound * self.alpha * dz / denom
        } else {
            self.evaluate(z2) - self.evaluate(z)
        }
    }

    /// The generating function `h(t) = (Y / alpha) sqrt(alpha t + 1)`, `t >= 0`.
    pub fn h(&self, t: f64) -> f64 {
        self.y_bound / self.alpha * self.radical(t)
    }

    /// `h'(t) = Y / (2 sqrt(alpha t + 1))`, `t >= 0`.
    pub fn h_prime(&self, t: f64) -> f64 {
        self.y_bound / (2.0 * self.radical(t))
    }

    /// The constant value of `h(t) h'(t)`.
    pub fn gamma(&self) -> f64 {
        self.y_bound * self.y_bound / (2.0 * self.alpha)
    }

    /// The offset `beta = -Y`.
    pub fn beta(&self) -> f64 {
        -self.y_bound
    }
}

#[derive(Deserialize)]
struct AffineParams {
    a: f64,
    b: f64,
}

/// Linear baseline `g(z) = a z + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineParams")]
pub struct Affine {
    a: f64,
    b: f64,
}

impl TryFrom<AffineParams> for Affine {
    type Error = Error;

    fn try_from(p: AffineParams) -> Result<Self> {
        Affine::new(p.a, p.b)
    }
}

impl Affine {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        require_finite("a", a)?;
        require_finite("b", b)?;
        Ok(Self { a, b })
    }

    /// The identity map.
    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0 }
    }

    pub fn slope(&self) -> f64 {
        self.a
    }

    pub fn intercept(&self) -> f64 {
        self.b
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        self.a * z + self.b
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        if self.a == 0.0 {
            return Err(Error::Domain {
                transform: "affine",
                value: u,
            });
        }
        Ok((u - self.b) / self.a)
    }
}

#[derive(Deserialize)]
struct TanhParams {
    scale: f64,
}

/// `g(z) = scale * tanh(z)`, bounded by `±scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TanhParams")]
pub struct Tanh {
    scale: f64,
}

impl TryFrom<TanhParams> for Tanh {
    type Error = Error;

    fn try_from(p: TanhParams) -> Result<Self> {
        Tanh::new(p.scale)
    }
}

impl Tanh {
    pub fn new(scale: f64) -> Result<Self> {
        require_positive("scale", scale)?;
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        self.scale * z.tanh()
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let c = z.cosh();
        self.scale / (c * c)
    }

    pub fn second_derivative(&self, z: f64) -> f64 {
        let c = z.cosh();
        -2.0 * self.scale * z.tanh() / (c * c)
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        if u.is_nan() || u.abs() >= self.scale {
            return Err(Error::Domain {
                transform: "tanh",
                value: u,
            });
        }
        Ok((u / self.scale).atanh())
    }

    pub fn increment(&self, z: f64, dz: f64) -> f64 {
        // tanh(a) - tanh(b) = sinh(a - b) / (cosh(a) cosh(b))
        let accurate = self.scale * dz.sinh() / ((z + dz).cosh() * z.cosh());
        if accurate.is_finite() {
            accurate
        } else {
            self.evaluate(z + dz) - self.evaluate(z)
        }
    }
}

/// One of the supported output transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransformKind {
    ConvexSqrt(ConvexSqrt),
    Affine(Affine),
    Tanh(Tanh),
}

impl From<ConvexSqrt> for TransformKind {
    fn from(t: ConvexSqrt) -> Self {
        TransformKind::ConvexSqrt(t)
    }
}

impl From<Affine> for TransformKind {
    fn from(t: Affine) -> Self {
        TransformKind::Affine(t)
    }
}

impl From<Tanh> for TransformKind {
    fn from(t: Tanh) -> Self {
        TransformKind::Tanh(t)
    }
}

impl TransformKind {
    /// Short name as used on the command line and in model files.
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::ConvexSqrt(_) => "convex-sqrt",
            TransformKind::Affine(_) => "affine",
            TransformKind::Tanh(_) => "tanh",
        }
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        match self {
            TransformKind::ConvexSqrt(t) => t.evaluate(z),
            TransformKind::Affine(t) => t.evaluate(z),
            TransformKind::Tanh(t) => t.evaluate(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            TransformKind::ConvexSqrt(t) => t.derivative(z),
            TransformKind::Affine(t) => t.slope(),
            TransformKind::Tanh(t) => t.derivative(z),
        }
    }

    /// `g''(z)`. The square-root transform has a jump in `g''` at the origin
    /// and does not expose one.
    pub fn second_derivative(&self, z: f64) -> Result<f64> {
        match self {
            TransformKind::ConvexSqrt(_) => Err(Error::UnsupportedTransform {
                transform: self.name(),
                operation: "second_derivative",
            }),
            TransformKind::Affine(_) => Ok(0.0),
            TransformKind::Tanh(t) => Ok(t.second_derivative(z)),
        }
    }

    pub fn has_second_derivative(&self) -> bool {
        !matches!(self, TransformKind::ConvexSqrt(_))
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        match self {
            TransformKind::ConvexSqrt(t) => Ok(t.inverse(u)),
            TransformKind::Affine(t) => t.inverse(u),
            TransformKind::Tanh(t) => t.inverse(u),
        }
    }

    /// `g(z + dz) - g(z)` computed without catastrophic cancellation.
    pub fn increment(&self, z: f64, dz: f64) -> f64 {
        match self {
            TransformKind::ConvexSqrt(t) => t.increment(z, dz),
            TransformKind::Affine(t) => t.slope() * dz,
            TransformKind::Tanh(t) => t.increment(z, dz),
        }
    }
}
