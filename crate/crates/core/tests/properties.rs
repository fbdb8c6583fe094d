//! Invariants of the transforms, losses, solver, convexity checks and data IO.

use cnlr_core::data::{self, DatasetSpec, TargetColumn};
use cnlr_core::lab::{self, Witness};
use cnlr_core::loss::{self, dloss_dz, loss_z, Model};
use cnlr_core::solver::{self, SolverConfig};
use cnlr_core::{Affine, ConvexSqrt, Dataset, Tanh, TransformKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_sqrt(rng: &mut ChaCha8Rng) -> ConvexSqrt {
    ConvexSqrt::new(rng.random_range(1e-3..=10.0), rng.random_range(0.1..=10.0)).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, y_bound: f64) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let targets = (0..n).map(|_| rng.random_range(-y_bound..=y_bound)).collect();
    Dataset::from_rows(&rows, targets).unwrap()
}

/// Central differences of `f` with the step for coordinate `j` shrunk so no
/// sample's linear predictor crosses zero, where the square-root loss has a
/// kink in its second derivative.
fn fd_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], ds: &Dataset) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|j| {
            let mut h = 1e-6 * (1.0 + w[j].abs());
            for x in ds.rows() {
                let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                if x[j] != 0.0 && z.abs() < h * x[j].abs() {
                    h = 0.5 * z.abs() / x[j].abs();
                }
            }
            probe[j] = w[j] + h;
            let up = f(&probe);
            probe[j] = w[j] - h;
            let down = f(&probe);
            probe[j] = w[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

mod transform {
    use super::*;

    #[test]
    fn odd_symmetry_is_exact() {
        let mut r = rng(1);
        for _ in 0..1000 {
            let z: f64 = r.random_range(-1e6..=1e6);
            let s: TransformKind = random_sqrt(&mut r).into();
            let t: TransformKind = Tanh::new(r.random_range(0.1..=10.0)).unwrap().into();
            let a: TransformKind = Affine::new(r.random_range(-5.0..=5.0), 0.0).unwrap().into();
            for g in [s, t, a] {
                assert_eq!(g.evaluate(-z), -g.evaluate(z), "{g:?} at {z}");
            }
        }
    }

    #[test]
    fn derivative_positive_and_nonincreasing_in_magnitude() {
        let mut r = rng(2);
        for _ in 0..1000 {
            let t = random_sqrt(&mut r);
            let z: f64 = r.random_range(-1e6..=1e6);
            assert!(t.derivative(z) > 0.0);
        }
        let t = ConvexSqrt::new(3.0, 2.0).unwrap();
        let mut mags: Vec<f64> = (0..1000).map(|_| r.random_range(0.0..=1e4)).collect();
        mags.sort_by(f64::total_cmp);
        let d: Vec<f64> = mags
            .iter()
            .map(|&m| t.derivative(if m > 5e3 { -m } else { m }))
            .collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut r = rng(3);
        for i in 0..1000 {
            let t: TransformKind = match i % 3 {
                0 => random_sqrt(&mut r).into(),
                1 => Tanh::new(r.random_range(0.1..=10.0)).unwrap().into(),
                _ => Affine::new(r.random_range(-5.0..=5.0), r.random_range(-5.0..=5.0))
                    .unwrap()
                    .into(),
            };
            let mut z: f64 = r.random_range(-20.0..=20.0);
            let h = 1e-6 * (1.0 + z.abs());
            if z.abs() < 2.0 * h {
                z += 4.0 * h;
            }
            let fd = (t.evaluate(z + h) - t.evaluate(z - h)) / (2.0 * h);
            let d = t.derivative(z);
            assert!(
                (d - fd).abs() <= 1e-6 * (1.0 + d.abs()),
                "{t:?} z={z}: {d} vs {fd}"
            );
        }
    }

    #[test]
    fn round_trip_through_inverse() {
        let mut r = rng(4);
        for _ in 0..1000 {
            let s: TransformKind = random_sqrt(&mut r).into();
            let z: f64 = r.random_range(-1e6..=1e6);
            let back = s.inverse(s.evaluate(z)).unwrap();
            assert!(
                (back - z).abs() <= 1e-9 * z.abs().max(1e-300),
                "{s:?} {z} -> {back}"
            );

            let t: TransformKind = Tanh::new(r.random_range(0.1..=10.0)).unwrap().into();
            let z: f64 = r.random_range(-5.0..=5.0);
            let back = t.inverse(t.evaluate(z)).unwrap();
            assert!((back - z).abs() <= 1e-9 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn generating_function_reconstructs_transform() {
        let mut r = rng(5);
        for _ in 0..1000 {
            let t = random_sqrt(&mut r);
            let z: f64 = r.random_range(-1e3..=1e3);
            let rebuilt = (t.alpha() * t.h(z.abs()) + t.beta()).copysign(z);
            let g = t.evaluate(z);
            // the rebuilt form cancels near zero, so compare against the scale of its terms
            assert!(
                (rebuilt - g).abs() <= 1e-12 * (t.y_bound() + g.abs()),
                "{t:?} {z}"
            );
        }
    }

    proptest! {
        #[test]
        fn tanh_bounded(scale in 0.1f64..10.0, z in -1e3f64..1e3) {
            let t = Tanh::new(scale).unwrap();
            prop_assert!(t.evaluate(z).abs() <= scale);
        }
    }
}

mod loss_gradient {
    use super::*;

    #[test]
    fn total_gradient_matches_finite_differences() {
        let mut r = rng(10);
        for draw in 0..200 {
            let n = r.random_range(1..=50);
            let d = r.random_range(1..=5);
            let s = random_sqrt(&mut r);
            let t: TransformKind = match draw % 3 {
                0 | 1 => s.into(),
                _ => Tanh::new(r.random_range(0.5..=3.0)).unwrap().into(),
            };
            let ds = random_dataset(&mut r, n, d, s.y_bound());
            let w: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..=2.0)).collect();
            let m = Model::new(w.clone(), t).unwrap();
            let g = loss::total_gradient(&m, &ds).unwrap();
            let fd = fd_gradient(
                |v| loss::total_loss(&Model::new(v.to_vec(), t).unwrap(), &ds).unwrap(),
                &w,
                &ds,
            );
            for (a, b) in g.iter().zip(&fd) {
                assert!(
                    (a - b).abs() <= 1e-5 * (1.0 + a.abs()),
                    "draw {draw}: {g:?} vs {fd:?}"
                );
            }
        }
    }

    #[test]
    fn dloss_nondecreasing_inside_bound() {
        let mut r = rng(11);
        let grid = lab::graded_grid(50.0, 500);
        for _ in 0..200 {
            let s = random_sqrt(&mut r);
            let y = r.random_range(-s.y_bound()..=s.y_bound());
            let t: TransformKind = s.into();
            let d: Vec<f64> = grid.iter().map(|&z| dloss_dz(&t, z, y)).collect();
            assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
        let tanh: TransformKind = Tanh::new(1.0).unwrap().into();
        assert!(dloss_dz(&tanh, 1.5, -1.0) < dloss_dz(&tanh, 1.0, -1.0));
    }

    #[test]
    fn continuity_at_origin() {
        let mut r = rng(12);
        for _ in 0..200 {
            let s = random_sqrt(&mut r);
            let y = r.random_range(-s.y_bound()..=s.y_bound());
            let c = 10.0 * s.alpha() * s.alpha() * s.y_bound();
            let t: TransformKind = s.into();
            for eps in [1e-3, 1e-5, 1e-7] {
                let jump = (dloss_dz(&t, -eps, y) - dloss_dz(&t, eps, y)).abs();
                assert!(jump <= c * eps, "{s:?} y={y} eps={eps}: {jump}");
            }
        }
    }

    #[test]
    fn closed_form_derivative() {
        let mut r = rng(13);
        for _ in 0..200 {
            let s = random_sqrt(&mut r);
            let (a, yb) = (s.alpha(), s.y_bound());
            let y = r.random_range(-yb..=yb);
            let t: TransformKind = s.into();
            for _ in 0..20 {
                let z: f64 = r.random_range(-100.0..=100.0);
                let closed = if z >= 0.0 {
                    a * yb * yb - a * yb * (yb + y) / (a * z + 1.0).sqrt()
                } else {
                    -a * yb * yb + a * yb * (yb - y) / (-a * z + 1.0).sqrt()
                };
                let d = dloss_dz(&t, z, y);
                let scale = a * yb * (yb + y.abs());
                assert!((d - closed).abs() <= 1e-10 * d.abs().max(scale));
            }
        }
    }

    #[test]
    fn midpoint_convexity_in_z() {
        let mut r = rng(14);
        for _ in 0..10_000 {
            let s = random_sqrt(&mut r);
            let y = r.random_range(-s.y_bound()..=s.y_bound());
            let t: TransformKind = s.into();
            let z1: f64 = r.random_range(-100.0..=100.0);
            let z2: f64 = r.random_range(-100.0..=100.0);
            let lam: f64 = r.random_range(0.0..=1.0);
            let (f1, f2) = (loss_z(&t, z1, y), loss_z(&t, z2, y));
            let fm = loss_z(&t, lam * z1 + (1.0 - lam) * z2, y);
            assert!(fm <= lam * f1 + (1.0 - lam) * f2 + 1e-9 * (1.0 + f1.max(f2).max(fm)));
        }
    }

    #[test]
    fn convexity_lifts_to_weights() {
        let mut r = rng(15);
        for _ in 0..300 {
            let s = random_sqrt(&mut r);
            let n = r.random_range(1..=30);
            let d = r.random_range(1..=4);
            let ds = random_dataset(&mut r, n, d, s.y_bound());
            let t: TransformKind = s.into();
            let w1: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..=5.0)).collect();
            let w2: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..=5.0)).collect();
            let lam: f64 = r.random_range(0.0..=1.0);
            let wm: Vec<f64> = w1
                .iter()
                .zip(&w2)
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect();
            let l = |w: &Vec<f64>| loss::total_loss(&Model::new(w.clone(), t).unwrap(), &ds).unwrap();
            let (f1, f2, fm) = (l(&w1), l(&w2), l(&wm));
            assert!(fm <= lam * f1 + (1.0 - lam) * f2 + 1e-9 * (1.0 + f1.max(f2).max(fm)));
        }
    }
}

mod solver_props {
    use super::*;

    #[test]
    fn restarts_agree_on_optimal_loss() {
        let mut r = rng(20);
        for _ in 0..5 {
            let s = random_sqrt(&mut r);
            let ds = random_dataset(&mut r, 40, 3, s.y_bound());
            let cfg = SolverConfig {
                seed: r.random(),
                ..SolverConfig::default()
            };
            let reports = solver::multi_restart_fit(&ds, &s.into(), 20, &cfg).unwrap();
            assert!(solver::relative_loss_spread(&reports) <= 1e-6);
        }
    }

    #[test]
    fn accepted_steps_decrease_loss() {
        let mut r = rng(21);
        let s = random_sqrt(&mut r);
        let ds = random_dataset(&mut r, 30, 3, s.y_bound());
        let t: TransformKind = s.into();
        let cfg = SolverConfig {
            max_iters: 200,
            ..SolverConfig::default()
        };
        let rep = solver::gd_fit(&ds, &t, &[1.0, -1.0, 0.5], &cfg).unwrap();
        assert!(rep.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(rep.loss_trace.len(), rep.iterations + 1);
        let direct = loss::total_loss(&Model::new(rep.final_weights.clone(), t).unwrap(), &ds).unwrap();
        assert!((direct - rep.final_loss).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn affine_descent_matches_least_squares() {
        let mut r = rng(22);
        for _ in 0..10 {
            let n = r.random_range(15..=200);
            let d = r.random_range(1..=10);
            let ds = random_dataset(&mut r, n, d, 3.0);
            let t: TransformKind = Affine::identity().into();
            let ols = solver::ols_fit(&ds).unwrap();
            let ols_loss = loss::total_loss(&Model::new(ols, t).unwrap(), &ds).unwrap();
            let rep = solver::gd_fit(&ds, &t, &vec![0.0; d], &SolverConfig::default()).unwrap();
            assert!(rep.converged());
            assert!((rep.final_loss - ols_loss).abs() <= 1e-8 * ols_loss);
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let mut r = rng(23);
        let s = random_sqrt(&mut r);
        let ds = random_dataset(&mut r, 25, 2, s.y_bound());
        let cfg = SolverConfig {
            seed: 99,
            ..SolverConfig::default()
        };
        let a = solver::multi_restart_fit(&ds, &s.into(), 6, &cfg).unwrap();
        let b = solver::multi_restart_fit(&ds, &s.into(), 6, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ols_residual_gradient_is_small() {
        let mut r = rng(24);
        for _ in 0..20 {
            let ds = random_dataset(&mut r, 50, 6, 2.0);
            let w = solver::ols_fit(&ds).unwrap();
            let mut grad = [0.0; 6];
            let mut xty = [0.0; 6];
            for (x, y) in ds.rows().zip(ds.targets()) {
                let res: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y;
                for j in 0..6 {
                    grad[j] += x[j] * res;
                    xty[j] += x[j] * y;
                }
            }
            let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bn = xty.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gn <= 1e-8 * (1.0 + bn));
        }
    }
}

mod lab_props {
    use super::*;

    fn recheck(t: &TransformKind, w: &Witness) -> f64 {
        match *w {
            Witness::Midpoint {
                z1, z2, lambda, y, ..
            } => {
                let f1 = loss_z(t, z1, y);
                let f2 = loss_z(t, z2, y);
                let fm = loss_z(t, lambda * z1 + (1.0 - lambda) * z2, y);
                (lambda * f1 + (1.0 - lambda) * f2 - fm) / (1.0 + f1.max(f2).max(fm))
            }
            Witness::Derivative { z_lo, z_hi, y, .. } => dloss_dz(t, z_hi, y) - dloss_dz(t, z_lo, y),
            _ => unreachable!(),
        }
    }

    #[test]
    fn failed_checks_expose_confirmable_witnesses() {
        let tanh: TransformKind = Tanh::new(1.0).unwrap().into();
        let sqrt: TransformKind = ConvexSqrt::new(1.0, 1.0).unwrap().into();
        let reports = [
            (
                tanh,
                lab::midpoint_convexity_check(&tanh, -1.0, (0.0, 3.0), 5000, 1e-9, 3).unwrap(),
            ),
            (
                tanh,
                lab::derivative_monotonicity_check(&tanh, -1.0, &lab::graded_grid(3.0, 200), 1e-9).unwrap(),
            ),
            (
                sqrt,
                lab::derivative_monotonicity_check(&sqrt, 1.5, &lab::graded_grid(50.0, 1000), 1e-9).unwrap(),
            ),
        ];
        for (t, rep) in reports {
            assert!(!rep.passed);
            let again = recheck(&t, rep.witness.as_ref().unwrap());
            assert!(again < 0.5 * rep.worst_violation, "{rep:?} rechecked {again}");
        }
    }

    #[test]
    fn monotone_derivative_implies_midpoint_pass() {
        let mut r = rng(30);
        let grid = lab::graded_grid(50.0, 300);
        for i in 0..60 {
            let t: TransformKind = match i % 3 {
                0 => random_sqrt(&mut r).into(),
                1 => Tanh::new(r.random_range(0.5..=2.0)).unwrap().into(),
                _ => Affine::new(r.random_range(-3.0..=3.0), r.random_range(-1.0..=1.0))
                    .unwrap()
                    .into(),
            };
            let y = r.random_range(-3.0..=3.0);
            let mono = lab::derivative_monotonicity_check(&t, y, &grid, 1e-9).unwrap();
            let mid = lab::midpoint_convexity_check(&t, y, (-50.0, 50.0), 2000, 1e-9, i).unwrap();
            if mono.passed {
                assert!(mid.passed, "{t:?} y={y}");
            } else if mid.passed {
                eprintln!("alarm: {t:?} y={y} fails monotonicity but passes midpoint sampling");
            }
        }
    }

    #[test]
    fn fd_hessian_is_nearly_symmetric() {
        let mut r = rng(31);
        for _ in 0..30 {
            let s = random_sqrt(&mut r);
            let ds = random_dataset(&mut r, 30, 4, s.y_bound());
            let w: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..=2.0)).collect();
            let rep = lab::fd_hessian_psd_check(&ds, &s.into(), &w, lab::FD_STEP, lab::HESSIAN_TOL).unwrap();
            let Some(Witness::Hessian {
                asymmetry,
                max_abs_entry,
                ..
            }) = rep.witness
            else {
                panic!()
            };
            assert!(asymmetry <= 100.0 * lab::FD_STEP * (1.0 + max_abs_entry));
        }
    }

    #[test]
    fn sqrt_configurations_pass_every_check() {
        let mut r = rng(32);
        let grid = lab::graded_grid(50.0, 1000);
        for i in 0..100 {
            let s = random_sqrt(&mut r);
            let y = r.random_range(-s.y_bound()..=s.y_bound());
            let t: TransformKind = s.into();
            assert!(
                lab::midpoint_convexity_check(&t, y, (-100.0, 100.0), 2000, 1e-9, i)
                    .unwrap()
                    .passed
            );
            assert!(
                lab::derivative_monotonicity_check(&t, y, &grid, 1e-9)
                    .unwrap()
                    .passed
            );
            let mut ds_rng = rng(1000 + i);
            let ds = random_dataset(&mut ds_rng, 20, 3, s.y_bound());
            let w: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..=2.0)).collect();
            let h = lab::fd_hessian_psd_check(&ds, &t, &w, lab::FD_STEP, lab::HESSIAN_TOL).unwrap();
            assert!(h.passed, "{s:?} {h:?}");
        }
    }

    #[test]
    fn targets_outside_bound_break_monotonicity() {
        let mut r = rng(33);
        let grid = lab::graded_grid(50.0, 1000);
        for _ in 0..100 {
            let s = random_sqrt(&mut r);
            let u: f64 = r.random_range(0.0..=1.0);
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            let y = sign * s.y_bound() * (1.0 + u);
            let rep = lab::derivative_monotonicity_check(&s.into(), y, &grid, 1e-9).unwrap();
            if u >= 0.5 {
                assert!(!rep.passed, "{s:?} y={y}");
            }
        }
    }
}

mod data_io {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn csv_round_trip(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20),
            seed in any::<u64>(),
        ) {
            let mut r = rng(seed);
            let targets: Vec<f64> = rows.iter().map(|_| r.random_range(-1e3..=1e3)).collect();
            let ds = Dataset::from_rows(&rows, targets).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            data::write_csv(&ds, std::fs::File::create(&path).unwrap()).unwrap();
            let mut spec = DatasetSpec::csv(&path);
            spec.add_bias = false;
            spec.target_column = TargetColumn::Last;
            let back = data::load_csv(&spec).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn target_bound_covers_targets(
            targets in prop::collection::vec(-1e3f64..1e3, 1..30),
            margin in 1.0f64..5.0,
        ) {
            let rows = vec![vec![1.0]; targets.len()];
            let ds = Dataset::from_rows(&rows, targets.clone()).unwrap();
            let b = data::estimate_target_bound(&ds, margin).unwrap();
            prop_assert!(b > 0.0);
            prop_assert!(targets.iter().all(|y| y.abs() <= b));
        }
    }
}
