use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use cnlr_core::data::{self, DatasetSpec, SynthSpec, Table, TargetColumn};
use cnlr_core::lab::{self, ConvexityReport};
use cnlr_core::solver::{self, FitReport, SolverConfig};
use cnlr_core::{Affine, ConvexSqrt, Dataset, Model, Tanh, TransformKind};

use crate::args::{
    Command, CompareArgs, DataArgs, FitArgs, PredictArgs, SolverArgs, SynthArgs, TransformArgs,
    TransformName, VerifyArgs, YBound,
};
use crate::{
    emit_json, Cli, CliError, ModelFile, RunReport, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VERIFY_FAILED,
};

/// Smallest restart count accepted by `compare`.
pub const MIN_COMPARE_RESTARTS: u64 = 10;
/// Largest relative restart spread still counted as a single optimum.
pub const SPREAD_TOL: f64 = 1e-6;

const VERIFY_Z_RANGE: (f64, f64) = (-100.0, 100.0);
const VERIFY_GRID_HALF_WIDTH: f64 = 50.0;
const VERIFY_GRID_POINTS: usize = 1000;
const VERIFY_Y_POINTS: usize = 5;
const HESSIAN_SAMPLES: usize = 50;
const HESSIAN_FEATURES: usize = 3;
const HESSIAN_POINTS: usize = 5;

/// Runs one subcommand, writing its report to `out`, and returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let start = Instant::now();
    match cli.command {
        Command::Fit(a) => fit(a, out, start),
        Command::Predict(a) => predict(a, out),
        Command::Verify(a) => verify(a, out, start),
        Command::Compare(a) => compare(a, out, start),
        Command::Synth(a) => synth(a, out, start),
    }
}

fn report(command: &str, config_echo: Value, results: Value, start: Instant) -> RunReport {
    RunReport {
        command: command.into(),
        config_echo,
        results,
        wall_time_ms: start.elapsed().as_millis() as u64,
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn target_column(target: Option<&str>) -> TargetColumn {
    match target {
        None => TargetColumn::Last,
        Some(s) => match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.into()),
        },
    }
}

fn load(a: &DataArgs) -> Result<data::LoadedData, CliError> {
    let spec = DatasetSpec {
        target_column: target_column(a.target.as_deref()),
        has_header: !a.no_header,
        add_bias: !a.no_bias,
        standardize: a.standardize,
        ..DatasetSpec::csv(&a.data)
    };
    Ok(data::load(&spec)?)
}

fn data_echo(a: &DataArgs) -> Value {
    json!({
        "data": a.data,
        "target": target_column(a.target.as_deref()),
        "has_header": !a.no_header,
        "add_bias": !a.no_bias,
        "standardize": a.standardize,
    })
}

fn solver_config(a: &SolverArgs) -> SolverConfig {
    SolverConfig {
        max_iters: a.max_iters as usize,
        grad_tol: a.grad_tol,
        seed: a.seed,
        ..SolverConfig::default()
    }
}

fn resolve_y(bound: YBound, ds: Option<&Dataset>) -> Result<f64, CliError> {
    Ok(match (bound, ds) {
        (YBound::Value(y), _) => y,
        (YBound::Auto, Some(ds)) => data::estimate_target_bound(ds, 1.0)?,
        (YBound::Auto, None) => 1.0,
    })
}

/// Builds the configured transform; `auto` bounds resolve against `ds`, or to 1 without data.
fn build_transform(a: &TransformArgs, ds: Option<&Dataset>) -> Result<TransformKind, CliError> {
    let t = match a.transform {
        TransformName::ConvexSqrt => ConvexSqrt::new(a.alpha, resolve_y(a.y_bound, ds)?)?.into(),
        TransformName::Affine => Affine::new(a.slope, a.intercept)?.into(),
        TransformName::Tanh => Tanh::new(a.scale)?.into(),
    };
    Ok(t)
}

fn y_bound_source(bound: YBound) -> &'static str {
    match bound {
        YBound::Auto => "auto",
        YBound::Value(_) => "explicit",
    }
}

/// Fits once from restart 0 or runs a multi-restart fit; returns every restart.
fn fit_restarts(
    ds: &Dataset,
    t: &TransformKind,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<Vec<FitReport>, CliError> {
    if restarts == 1 {
        let w0 = solver::restart_init(ds, cfg.seed, 0);
        Ok(vec![solver::gd_fit(ds, t, &w0, cfg)?])
    } else {
        Ok(solver::multi_restart_fit(ds, t, restarts, cfg)?)
    }
}

fn write_json_file(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn fit(a: FitArgs, out: &mut dyn Write, start: Instant) -> Result<i32, CliError> {
    let loaded = load(&a.data)?;
    let ds = &loaded.dataset;
    let t = build_transform(&a.transform, Some(ds))?;
    let cfg = solver_config(&a.solver);
    cfg.validate()?;

    let mut warnings = Vec::new();
    if let TransformKind::ConvexSqrt(s) = t {
        let outside = ds.targets_outside(s.y_bound());
        if outside > 0 {
            warnings.push(format!(
                "{outside} target(s) exceed y_bound = {}; the loss may be nonconvex",
                s.y_bound()
            ));
        }
    }

    let fits = fit_restarts(ds, &t, a.restarts as usize, &cfg)?;
    let best = solver::best_restart(&fits).expect("at least one restart");
    let best_fit = &fits[best];

    if let Some(path) = &a.out {
        let model = ModelFile {
            weights: best_fit.final_weights.clone(),
            transform: t,
            add_bias: loaded.add_bias,
            standardization: loaded.standardization.clone(),
        };
        write_json_file(path, &model)?;
    }

    let config = json!({
        "data": data_echo(&a.data),
        "transform": t,
        "y_bound_source": y_bound_source(a.transform.y_bound),
        "restarts": a.restarts,
        "solver": cfg,
        "out": a.out,
    });
    let results = json!({
        "n_samples": ds.n_samples(),
        "n_features": ds.n_features(),
        "feature_names": loaded.feature_names,
        "best_restart": best,
        "converged": best_fit.converged(),
        "restart_losses": fits.iter().map(|f| f.final_loss).collect::<Vec<_>>(),
        "relative_spread": solver::relative_loss_spread(&fits),
        "fit": best_fit,
        "warnings": warnings,
    });
    emit_json(out, &report("fit", config, results, start))?;
    Ok(if best_fit.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let model: ModelFile = serde_json::from_reader(std::io::BufReader::new(File::open(&a.model)?))?;
    let table = Table::open(&a.data, !a.no_header)?;
    let mut rows = match &a.target {
        Some(target) => {
            let idx = table.column_index(&target_column(Some(target)))?;
            table.split(idx).0
        }
        None => table.rows,
    };
    if let Some(s) = &model.standardization {
        let d = rows.first().map_or(0, Vec::len);
        if s.mean.len() != d {
            return Err(cnlr_core::Error::DimensionMismatch {
                expected: s.mean.len(),
                found: d,
            }
            .into());
        }
    }
    data::preprocess(&mut rows, model.standardization.as_ref(), model.add_bias);
    let m = Model::new(model.weights, model.transform)?;
    let mut w = BufWriter::new(out);
    for row in &rows {
        writeln!(w, "{}", m.predict(row)?)?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Half-width of the target range the checks sweep over.
fn target_half_width(t: &TransformKind) -> f64 {
    match t {
        TransformKind::ConvexSqrt(s) => s.y_bound(),
        TransformKind::Tanh(t) => t.scale(),
        TransformKind::Affine(_) => 1.0,
    }
}

/// Runs the full battery of convexity checks for `t`.
pub fn verify_checks(t: &TransformKind, samples: usize, seed: u64) -> Result<Vec<ConvexityReport>, CliError> {
    let b = target_half_width(t);
    let ys = linspace(-b, b, VERIFY_Y_POINTS);
    let grid = lab::graded_grid(VERIFY_GRID_HALF_WIDTH, VERIFY_GRID_POINTS);
    let mut checks = Vec::new();
    for (k, &y) in ys.iter().enumerate() {
        let s = seed.wrapping_add(k as u64);
        checks.push(lab::midpoint_convexity_check(
            t,
            y,
            VERIFY_Z_RANGE,
            samples,
            lab::MIDPOINT_TOL,
            s,
        )?);
        checks.push(lab::derivative_monotonicity_check(
            t,
            y,
            &grid,
            lab::MONOTONICITY_TOL,
        )?);
    }

    let (ds, _) = data::generate_synthetic(&SynthSpec {
        n_samples: HESSIAN_SAMPLES,
        n_features: HESSIAN_FEATURES,
        true_weights: None,
        noise_std: 0.5,
        transform: *t,
        seed,
    })?;
    for k in 1..=HESSIAN_POINTS {
        let w = solver::restart_init(&ds, seed, k);
        checks.push(lab::fd_hessian_psd_check(
            &ds,
            t,
            &w,
            lab::FD_STEP,
            lab::HESSIAN_TOL,
        )?);
    }

    if t.has_second_derivative() {
        let zs = linspace(-3.0, 3.0, 61);
        let ys = linspace(-b, b, 21);
        checks.push(lab::pointwise_condition_check(t, &zs, &ys, 0.0)?);
    }
    Ok(checks)
}

fn verify(a: VerifyArgs, out: &mut dyn Write, start: Instant) -> Result<i32, CliError> {
    let t = build_transform(&a.transform, None)?;
    let checks = verify_checks(&t, a.samples as usize, a.seed)?;
    let all_passed = checks.iter().all(|c| c.passed);
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.check_name.as_str())
        .collect();
    let config = json!({
        "transform": t,
        "y_bound_source": y_bound_source(a.transform.y_bound),
        "samples": a.samples,
        "seed": a.seed,
    });
    let results = json!({
        "all_passed": all_passed,
        "failed_checks": failed,
        "checks": checks,
    });
    emit_json(out, &report("verify", config, results, start))?;
    Ok(if all_passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn restart_summary(t: &TransformKind, fits: &[FitReport]) -> Value {
    let best = solver::best_restart(fits).expect("at least one restart");
    json!({
        "transform": t,
        "losses": fits.iter().map(|f| f.final_loss).collect::<Vec<_>>(),
        "iterations": fits.iter().map(|f| f.iterations).collect::<Vec<_>>(),
        "converged": fits.iter().filter(|f| f.converged()).count(),
        "best_restart": best,
        "best_loss": fits[best].final_loss,
        "best_weights": fits[best].final_weights,
        "relative_spread": solver::relative_loss_spread(fits),
    })
}

fn compare(a: CompareArgs, out: &mut dyn Write, start: Instant) -> Result<i32, CliError> {
    if a.restarts < MIN_COMPARE_RESTARTS {
        return Err(CliError::Usage(format!(
            "--restarts must be at least {MIN_COMPARE_RESTARTS}, got {}",
            a.restarts
        )));
    }
    let loaded = load(&a.data)?;
    let ds = &loaded.dataset;
    let cfg = solver_config(&a.solver);
    let restarts = a.restarts as usize;

    let convex: TransformKind = ConvexSqrt::new(a.alpha, resolve_y(a.y_bound, Some(ds))?)?.into();
    let tanh: TransformKind = Tanh::new(a.scale)?.into();
    let convex_fits = fit_restarts(ds, &convex, restarts, &cfg)?;
    let tanh_fits = fit_restarts(ds, &tanh, restarts, &cfg)?;

    let convex_spread = solver::relative_loss_spread(&convex_fits);
    let convex_best = &convex_fits[solver::best_restart(&convex_fits).expect("at least one restart")];
    let config = json!({
        "data": data_echo(&a.data),
        "restarts": a.restarts,
        "convex_transform": convex,
        "tanh_transform": tanh,
        "y_bound_source": y_bound_source(a.y_bound),
        "solver": cfg,
    });
    let results = json!({
        "n_samples": ds.n_samples(),
        "n_features": ds.n_features(),
        "convex_sqrt": restart_summary(&convex, &convex_fits),
        "tanh": restart_summary(&tanh, &tanh_fits),
        "spread_tolerance": SPREAD_TOL,
        "convex_spread_ok": convex_spread <= SPREAD_TOL,
        "tanh_spread": solver::relative_loss_spread(&tanh_fits),
    });
    emit_json(out, &report("compare", config, results, start))?;
    Ok(if convex_best.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

/// `<dir>/<stem>.weights.json` next to the CSV output.
fn companion_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.weights.json"))
}

fn synth(a: SynthArgs, out: &mut dyn Write, start: Instant) -> Result<i32, CliError> {
    let t = build_transform(&a.transform, None)?;
    let spec = SynthSpec {
        n_samples: a.n as usize,
        n_features: a.d as usize,
        true_weights: None,
        noise_std: a.noise,
        transform: t,
        seed: a.seed,
    };
    let (ds, weights) = data::generate_synthetic(&spec)?;
    let weights_out = a
        .weights_out
        .clone()
        .or_else(|| a.out.as_deref().map(companion_path));
    if let Some(path) = &weights_out {
        write_json_file(path, &json!({ "weights": weights, "transform": t }))?;
    }
    let Some(csv_path) = &a.out else {
        data::write_csv(&ds, BufWriter::new(out))?;
        return Ok(EXIT_OK);
    };
    let mut w = BufWriter::new(File::create(csv_path)?);
    data::write_csv(&ds, &mut w)?;
    w.flush()?;

    let config = json!({
        "n": a.n,
        "d": a.d,
        "noise": a.noise,
        "transform": t,
        "y_bound_source": y_bound_source(a.transform.y_bound),
        "seed": a.seed,
        "out": a.out,
        "weights_out": weights_out,
    });
    let results = json!({
        "true_weights": weights,
        "max_abs_target": ds.max_abs_target(),
    });
    emit_json(out, &report("synth", config, results, start))?;
    Ok(EXIT_OK)
}
