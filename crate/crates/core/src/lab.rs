//! Numerical certification and refutation of convexity.
//!
//! Every check returns a [`ConvexityReport`] whose `worst_violation` is the
//! most negative (normalized) slack seen, so `passed` is always
//! `worst_violation >= -tolerance`. A passing check only means no violation
//! was found among the sampled points.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{check_dim, dloss_dz, gradient_at, loss_z, psd_condition_value};
use crate::transform::TransformKind;

/// Largest dimension accepted by [`fd_hessian_psd_check`].
pub const MAX_HESSIAN_DIM: usize = 50;

pub const MIDPOINT_TOL: f64 = 1e-9;
pub const MONOTONICITY_TOL: f64 = 1e-9;
pub const HESSIAN_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-5;

/// The input achieving a report's worst slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    /// `loss(λ z1 + (1-λ) z2)` against the chord value `λ loss(z1) + (1-λ) loss(z2)`.
    Midpoint {
        z1: f64,
        z2: f64,
        lambda: f64,
        y: f64,
        value: f64,
        chord: f64,
    },
    /// `dloss_dz` at `z_hi > z_lo` fell below its value at `z_lo`.
    Derivative {
        z_lo: f64,
        z_hi: f64,
        y: f64,
        d_lo: f64,
        d_hi: f64,
    },
    /// Grid point minimizing `2 g'^2 + 2 (g - y) g''`.
    Pointwise { z: f64, y: f64, value: f64 },
    Hessian {
        min_eigenvalue: f64,
        max_abs_entry: f64,
        asymmetry: f64,
        eigenvector: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub check_name: String,
    pub passed: bool,
    /// Most negative slack observed, normalized as described by each check.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub samples_tested: usize,
}

impl ConvexityReport {
    fn new(name: &str, worst: f64, tolerance: f64, witness: Option<Witness>, samples: usize) -> Self {
        Self {
            check_name: name.to_string(),
            passed: worst >= -tolerance,
            worst_violation: worst,
            tolerance,
            witness,
            samples_tested: samples,
        }
    }

    pub fn summary(&self) -> String {
        if self.passed {
            format!(
                "{}: no violation found among {} samples",
                self.check_name, self.samples_tested
            )
        } else {
            format!(
                "{}: violation {:e} exceeds tolerance {:e}",
                self.check_name, self.worst_violation, self.tolerance
            )
        }
    }
}

/// Point of a grid search where the pointwise convexity condition is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonconvexWitness {
    pub z: f64,
    pub y: f64,
    pub value: f64,
}

fn validate_sorted(grid: &[f64], strict: bool, min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return Err(Error::InvalidGrid(format!(
            "grid needs at least {min_len} points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid("grid contains non-finite values".into()));
    }
    let bad = grid
        .windows(2)
        .find(|w| if strict { w[1] <= w[0] } else { w[1] < w[0] });
    if let Some(w) = bad {
        return Err(Error::InvalidGrid(format!(
            "grid is not ascending: {} follows {}",
            w[1], w[0]
        )));
    }
    Ok(())
}

fn require_positive_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tol", "must be positive"))
    }
}

/// `points_per_side` log-spaced magnitudes in `[half_width * 1e-9, half_width]`,
/// mirrored about zero and joined by zero itself.
pub fn graded_grid(half_width: f64, points_per_side: usize) -> Vec<f64> {
    let lo = (half_width * 1e-9).ln();
    let hi = half_width.ln();
    let positive: Vec<f64> = (0..points_per_side)
        .map(|i| {
            if points_per_side == 1 {
                half_width
            } else {
                (lo + (hi - lo) * i as f64 / (points_per_side - 1) as f64).exp()
            }
        })
        .collect();
    let mut grid: Vec<f64> = positive.iter().rev().map(|v| -v).collect();
    grid.push(0.0);
    grid.extend(positive);
    grid
}

/// Samples `n_samples` triples `(z1, z2, λ)` and tests the chord inequality
/// of the composed loss. Slack is `chord - value` divided by `1 + max loss`
/// over the three points.
pub fn midpoint_convexity_check(
    t: &TransformKind,
    y: f64,
    z_range: (f64, f64),
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let (lo, hi) = z_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param("z_range", format!("[{lo}, {hi}] is degenerate")));
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be positive"));
    }
    require_positive_tol(tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for _ in 0..n_samples {
        let z1 = rng.random_range(lo..=hi);
        let z2 = rng.random_range(lo..=hi);
        let lambda: f64 = rng.random_range(0.0..=1.0);
        let f1 = loss_z(t, z1, y);
        let f2 = loss_z(t, z2, y);
        let value = loss_z(t, lambda * z1 + (1.0 - lambda) * z2, y);
        let chord = lambda * f1 + (1.0 - lambda) * f2;
        let slack = (chord - value) / (1.0 + f1.max(f2).max(value));
        if slack < worst || witness.is_none() {
            worst = slack;
            witness = Some(Witness::Midpoint {
                z1,
                z2,
                lambda,
                y,
                value,
                chord,
            });
        }
    }
    Ok(ConvexityReport::new(
        "midpoint_convexity",
        worst,
        tol,
        witness,
        n_samples,
    ))
}

/// Checks that `dloss_dz` is nondecreasing along `z_grid`. The slack at each
/// point is its value minus the largest value at any earlier grid point,
/// which also catches slow drifts made of many tiny decreasing steps.
pub fn derivative_monotonicity_check(
    t: &TransformKind,
    y: f64,
    z_grid: &[f64],
    tol: f64,
) -> Result<ConvexityReport> {
    validate_sorted(z_grid, true, 2)?;
    require_positive_tol(tol)?;
    let values: Vec<f64> = z_grid.iter().map(|&z| dloss_dz(t, z, y)).collect();
    let mut best_idx = 0;
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for j in 1..values.len() {
        let slack = values[j] - values[best_idx];
        if slack < worst {
            worst = slack;
            witness = Some(Witness::Derivative {
                z_lo: z_grid[best_idx],
                z_hi: z_grid[j],
                y,
                d_lo: values[best_idx],
                d_hi: values[j],
            });
        }
        if values[j] > values[best_idx] {
            best_idx = j;
        }
    }
    Ok(ConvexityReport::new(
        "derivative_monotonicity",
        worst,
        tol,
        witness,
        z_grid.len(),
    ))
}

/// Finite-difference Hessian of the total loss, built column by column from
/// central differences of the analytic gradient with step
/// `fd_step * (1 + |w_j|)`. Returned unsymmetrized, row-major.
pub fn fd_hessian(ds: &Dataset, t: &TransformKind, w: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    check_dim(ds.n_features(), w.len())?;
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::param("fd_step", "must be positive"));
    }
    let d = w.len();
    let mut h = vec![0.0; d * d];
    let mut probe = w.to_vec();
    for j in 0..d {
        let step = fd_step * (1.0 + w[j].abs());
        probe[j] = w[j] + step;
        let plus = gradient_at(t, &probe, ds);
        probe[j] = w[j] - step;
        let minus = gradient_at(t, &probe, ds);
        probe[j] = w[j];
        let width = (w[j] + step) - (w[j] - step);
        for i in 0..d {
            h[i * d + j] = (plus[i] - minus[i]) / width;
        }
    }
    Ok(h)
}

/// Tests that the finite-difference Hessian of the total loss at `w` is
/// positive semidefinite. Slack is the smallest eigenvalue of the
/// symmetrized Hessian divided by `1 + max |H_ij|`.
pub fn fd_hessian_psd_check(
    ds: &Dataset,
    t: &TransformKind,
    w: &[f64],
    fd_step: f64,
    tol: f64,
) -> Result<ConvexityReport> {
    let d = w.len();
    if d > MAX_HESSIAN_DIM {
        return Err(Error::DimensionTooLarge {
            found: d,
            max: MAX_HESSIAN_DIM,
        });
    }
    require_positive_tol(tol)?;
    let raw = fd_hessian(ds, t, w, fd_step)?;
    let mut asymmetry: f64 = 0.0;
    let sym = DMatrix::from_fn(d, d, |i, j| {
        asymmetry = asymmetry.max((raw[i * d + j] - raw[j * d + i]).abs());
        0.5 * (raw[i * d + j] + raw[j * d + i])
    });
    let max_abs_entry = sym.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eig = SymmetricEigen::new(sym);
    let (k, &min_eigenvalue) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("dimension is at least one");
    let eigenvector = eig.eigenvectors.column(k).iter().copied().collect();
    let worst = min_eigenvalue / (1.0 + max_abs_entry);
    let witness = Witness::Hessian {
        min_eigenvalue,
        max_abs_entry,
        asymmetry,
        eigenvector,
    };
    Ok(ConvexityReport::new(
        "fd_hessian_psd",
        worst,
        tol,
        Some(witness),
        1,
    ))
}

/// Grid search for the most negative value of the pointwise convexity
/// condition `2 g'^2 + 2 (g - y) g''`. Returns `None` when it is nonnegative
/// everywhere on the grid.
pub fn find_nonconvex_witness(
    t: &TransformKind,
    z_grid: &[f64],
    y_grid: &[f64],
) -> Result<Option<NonconvexWitness>> {
    if !t.has_second_derivative() {
        return Err(Error::UnsupportedTransform {
            transform: t.name(),
            operation: "find_nonconvex_witness",
        });
    }
    validate_sorted(z_grid, false, 1)?;
    validate_sorted(y_grid, false, 1)?;
    let mut best: Option<NonconvexWitness> = None;
    for &y in y_grid {
        for &z in z_grid {
            let value = psd_condition_value(t, z, y)?;
            if best.is_none_or(|b| value < b.value) {
                best = Some(NonconvexWitness { z, y, value });
            }
        }
    }
    Ok(best.filter(|b| b.value < 0.0))
}

/// [`find_nonconvex_witness`] as a report: slack is the minimum of the
/// pointwise condition over the grid, and `tol` may be zero.
pub fn pointwise_condition_check(
    t: &TransformKind,
    z_grid: &[f64],
    y_grid: &[f64],
    tol: f64,
) -> Result<ConvexityReport> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::param("tol", "must be nonnegative"));
    }
    let best = find_nonconvex_witness(t, z_grid, y_grid)?;
    let (worst, z, y) = match best {
        Some(w) => (w.value, w.z, w.y),
        None => {
            // nonnegative everywhere; still report the minimizer
            let mut min = (f64::INFINITY, z_grid[0], y_grid[0]);
            for &y in y_grid {
                for &z in z_grid {
                    let v = psd_condition_value(t, z, y)?;
                    if v < min.0 {
                        min = (v, z, y);
                    }
                }
            }
            min
        }
    };
    let witness = Witness::Pointwise { z, y, value: worst };
    Ok(ConvexityReport::new(
        "pointwise_condition",
        worst,
        tol,
        Some(witness),
        z_grid.len() * y_grid.len(),
    ))
}
