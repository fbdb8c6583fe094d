//! Full-batch gradient descent with Armijo backtracking, the closed-form
//! least-squares baseline, and seeded multi-restart fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{accumulate, check_dim, dot, gradient_at, loss_at};
use crate::transform::TransformKind;

/// Smallest step tried before the line search gives up.
pub const MIN_STEP: f64 = 1e-16;

/// Pivots below this fraction of the largest diagonal entry of `XᵀX` are
/// treated as singular.
pub const PIVOT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `‖∇L‖₂ <= grad_tol * (1 + |L|)`.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub init_step: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            init_step: 1.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::param("grad_tol", "must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::param("armijo_c", "must lie in (0, 1)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::param("backtrack_factor", "must lie in (0, 1)"));
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return Err(Error::param("init_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_weights: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Loss before the first step and after every accepted step.
    pub loss_trace: Vec<f64>,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `L(w + d) - L(w)` from per-sample transform increments, so the Armijo
/// test stays meaningful when the decrease is far below the rounding error
/// of `L` itself.
fn loss_change(t: &TransformKind, ds: &Dataset, z: &[f64], d: &[f64]) -> f64 {
    let mut out = [0.0];
    accumulate(0..ds.n_samples(), &mut out, &|i, acc: &mut [f64]| {
        let dz = dot(d, ds.row(i));
        let dg = t.increment(z[i], dz);
        let r = t.evaluate(z[i]) - ds.targets()[i];
        acc[0] += dg * (2.0 * r + dg);
    });
    out[0]
}

/// Minimizes the total squared loss from `w0` by steepest descent with a
/// backtracking line search.
///
/// Each iteration starts the search at `cfg.init_step` and shrinks by
/// `cfg.backtrack_factor` until `L(w - s∇) <= L(w) - c s ‖∇‖²`. The recorded
/// trace is the running minimum of the directly evaluated loss, so it never
/// increases even when consecutive values differ only by rounding.
pub fn gd_fit(ds: &Dataset, t: &TransformKind, w0: &[f64], cfg: &SolverConfig) -> Result<FitReport> {
    cfg.validate()?;
    check_dim(ds.n_features(), w0.len())?;
    if w0.iter().any(|w| !w.is_finite()) {
        return Err(Error::param("w0", "must be finite"));
    }
    let mut w = w0.to_vec();
    let mut loss = loss_at(t, &w, ds);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut trace = vec![loss];
    let mut iterations = 0;
    let mut w_new = vec![0.0; w.len()];
    let mut step_vec = vec![0.0; w.len()];

    let (termination, grad_norm) = loop {
        let grad = gradient_at(t, &w, ds);
        let grad_norm = norm(&grad);
        if grad_norm <= cfg.grad_tol * (1.0 + loss.abs()) {
            break (Termination::Converged, grad_norm);
        }
        if iterations == cfg.max_iters {
            break (Termination::MaxIters, grad_norm);
        }
        let z: Vec<f64> = ds.rows().map(|x| dot(&w, x)).collect();
        let required = cfg.armijo_c * grad_norm * grad_norm;
        let mut step = cfg.init_step;
        let accepted = loop {
            for ((wn, d), (wi, gi)) in w_new.iter_mut().zip(step_vec.iter_mut()).zip(w.iter().zip(&grad)) {
                *wn = wi - step * gi;
                *d = *wn - wi;
            }
            let delta = loss_change(t, ds, &z, &step_vec);
            if delta.is_finite() && delta <= -step * required && w_new.iter().all(|v| v.is_finite()) {
                break true;
            }
            step *= cfg.backtrack_factor;
            if step < MIN_STEP {
                break false;
            }
        };
        if !accepted {
            break (Termination::LineSearchStalled, grad_norm);
        }
        std::mem::swap(&mut w, &mut w_new);
        iterations += 1;
        loss = loss.min(loss_at(t, &w, ds));
        trace.push(loss);
    };

    Ok(FitReport {
        final_weights: w,
        final_loss: loss,
        final_grad_norm: grad_norm,
        iterations,
        termination,
        loss_trace: trace,
    })
}

/// Least-squares weights from the normal equations `XᵀX w = Xᵀy`, solved by
/// Cholesky factorization with one step of iterative refinement.
pub fn ols_fit(ds: &Dataset) -> Result<Vec<f64>> {
    let d = ds.n_features();
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for (x, y) in ds.rows().zip(ds.targets()) {
        for i in 0..d {
            rhs[i] += x[i] * y;
            for j in 0..=i {
                gram[i * d + j] += x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
    }
    let chol = Cholesky::factor(&gram, d)?;
    let mut w = chol.solve(&rhs);

    let residual: Vec<f64> = (0..d)
        .map(|i| rhs[i] - dot(&gram[i * d..(i + 1) * d], &w))
        .collect();
    let correction = chol.solve(&residual);
    for (wi, c) in w.iter_mut().zip(correction) {
        *wi += c;
    }
    Ok(w)
}

/// Lower-triangular factor `L` with `A = L Lᵀ`, row-major.
struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Result<Self> {
        let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
        let threshold = PIVOT_RATIO * scale;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let pivot = a[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
            if pivot.is_nan() || pivot <= threshold {
                return Err(Error::Singular {
                    pivot: j,
                    magnitude: pivot,
                });
            }
            let diag = pivot.sqrt();
            l[j * n + j] = diag;
            for i in j + 1..n {
                let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                l[i * n + j] = s / diag;
            }
        }
        Ok(Self { l, n })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s = b[i] - (0..i).map(|k| l[i * n + k] * y[k]).sum::<f64>();
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s = y[i] - (i + 1..n).map(|k| l[k * n + i] * x[k]).sum::<f64>();
            x[i] = s / l[i * n + i];
        }
        x
    }
}

/// Half-width of the initialization box, `10 / (1 + max column norm)`.
pub fn init_radius(ds: &Dataset) -> f64 {
    let max_norm = ds.column_norms().into_iter().fold(0.0, f64::max);
    10.0 / (1.0 + max_norm)
}

/// Initial point for restart `index`: i.i.d. uniform on `[-r, r]^d`, drawn
/// from a generator seeded with `seed + index`.
pub fn restart_init(ds: &Dataset, seed: u64, index: usize) -> Vec<f64> {
    let r = init_radius(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    (0..ds.n_features()).map(|_| rng.random_range(-r..=r)).collect()
}

/// Runs [`gd_fit`] from `restarts` seeded starting points. Restarts run in
/// parallel; the result is ordered by restart index.
pub fn multi_restart_fit(
    ds: &Dataset,
    t: &TransformKind,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<Vec<FitReport>> {
    if restarts < 2 {
        return Err(Error::param(
            "restarts",
            format!("must be at least 2, got {restarts}"),
        ));
    }
    cfg.validate()?;
    (0..restarts)
        .into_par_iter()
        .map(|i| gd_fit(ds, t, &restart_init(ds, cfg.seed, i), cfg))
        .collect()
}

/// Index of the restart with the smallest final loss (first on ties).
pub fn best_restart(reports: &[FitReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.final_loss.total_cmp(&b.1.final_loss))
        .map(|(i, _)| i)
}

/// `(max - min) / (1 + min)` over the final losses.
pub fn relative_loss_spread(reports: &[FitReport]) -> f64 {
    let min = reports.iter().map(|r| r.final_loss).fold(f64::INFINITY, f64::min);
    let max = reports
        .iter()
        .map(|r| r.final_loss)
        .fold(f64::NEG_INFINITY, f64::max);
    (max - min) / (1.0 + min)
}
