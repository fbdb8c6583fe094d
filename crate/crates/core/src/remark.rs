//! Numeric check of the sufficient conditions on a generating function `h`.
//!
//! A transform built as `g(z) = sign(z) * (alpha * h(|z|) - Y)` keeps the
//! squared loss convex for targets in `[-Y, Y]` when
//!
//! * the odd extension is consistent at the origin (`alpha * h(0) = Y`, so `g(0) = 0`),
//! * `h(t) h'(t)` equals a constant `gamma`,
//! * `h'(t)` is nonincreasing on `t >= 0`,
//! * `h'(0) Y = alpha * gamma`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation magnitude seen; zero when the condition holds exactly.
    pub worst_violation: f64,
    /// Grid point where `worst_violation` was observed.
    pub witness: Option<f64>,
}

impl ConditionResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            worst_violation: 0.0,
            witness: None,
        }
    }

    fn observe(&mut self, violation: f64, at: f64) {
        if self.witness.is_none() || violation > self.worst_violation || violation.is_nan() {
            self.worst_violation = violation;
            self.witness = Some(at);
        }
    }

    fn finish(mut self, tol: f64) -> Self {
        self.passed = self.worst_violation <= tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub odd_symmetry: ConditionResult,
    pub constant_product: ConditionResult,
    pub nonincreasing_derivative: ConditionResult,
    pub continuity: ConditionResult,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.conditions().iter().all(|c| c.passed)
    }

    pub fn conditions(&self) -> [&ConditionResult; 4] {
        [
            &self.odd_symmetry,
            &self.constant_product,
            &self.nonincreasing_derivative,
            &self.continuity,
        ]
    }
}

/// Evaluates the four conditions on `grid` (nonnegative, ascending) with
/// absolute tolerance `tol`.
pub fn check_remark_conditions<H, HP>(
    h: H,
    h_prime: HP,
    alpha: f64,
    y_bound: f64,
    gamma: f64,
    grid: &[f64],
    tol: f64,
) -> Result<ConditionReport>
where
    H: Fn(f64) -> f64,
    HP: Fn(f64) -> f64,
{
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidGrid(format!(
            "grid value {v} is negative or not finite"
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid is not sorted: {} follows {}",
            w[1], w[0]
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::param("tol", "must be positive"));
    }
    let beta = -y_bound;
    let g = |z: f64| (alpha * h(z.abs()) + beta).copysign(z);

    let mut odd = ConditionResult::new("odd_symmetry");
    // g(0+) and g(0-) must both vanish for the odd extension to exist.
    odd.observe((alpha * h(0.0) + beta).abs(), 0.0);
    for &t in grid {
        odd.observe((g(t) + g(-t)).abs(), t);
    }

    let mut product = ConditionResult::new("constant_product");
    for &t in grid {
        product.observe((h(t) * h_prime(t) - gamma).abs(), t);
    }

    let mut monotone = ConditionResult::new("nonincreasing_derivative");
    monotone.observe(0.0, grid[0]);
    for w in grid.windows(2) {
        monotone.observe((h_prime(w[1]) - h_prime(w[0])).max(0.0), w[1]);
    }

    let mut continuity = ConditionResult::new("continuity");
    continuity.observe((h_prime(0.0) * y_bound - alpha * gamma).abs(), 0.0);

    Ok(ConditionReport {
        odd_symmetry: odd.finish(tol),
        constant_product: product.finish(tol),
        nonincreasing_derivative: monotone.finish(tol),
        continuity: continuity.finish(tol),
    })
}
