use distillkit::distillation::run_chain;
use distillkit::kernels::gram_from_points;
use distillkit::regression::{solve_multiplier, training_error, FitConfig};
use distillkit::spectral::{eigendecompose, solve_shifted, SymMatrix};
use distillkit::{Dataset, KernelSpec};
use proptest::prelude::*;

/// Jittered grid in (0, 1) so the Gram matrix stays well conditioned.
fn points_strategy() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=12).prop_flat_map(|k| {
        prop::collection::vec(-0.3f64..0.3, k).prop_map(move |jit| {
            let kf = jit.len() as f64;
            jit.iter()
                .enumerate()
                .map(|(i, j)| (i as f64 + 0.5 + j) / kf)
                .collect()
        })
    })
}

/// Spline, or a Gaussian whose bandwidth is a multiple of the grid spacing
/// (wider bandwidths make the Gram matrix numerically singular).
fn instance() -> impl Strategy<Value = (KernelSpec, Vec<f64>, Vec<f64>)> {
    (prop::option::of(0.3f64..1.5), points_strategy()).prop_flat_map(|(width, xs)| {
        let k = xs.len();
        let kernel = match width {
            None => KernelSpec::CubicSplineGreen,
            Some(w) => KernelSpec::Gaussian {
                bandwidth: w / k as f64,
            },
        };
        (
            Just(kernel),
            Just(xs),
            prop::collection::vec(-2.0f64..2.0, k),
        )
    })
}

fn gram(kernel: &KernelSpec, xs: &[f64]) -> SymMatrix {
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    gram_from_points(kernel, &pts).unwrap()
}

fn direct_error(g: &SymMatrix, y: &[f64], c: f64) -> f64 {
    let alpha = solve_shifted(g, c, y).unwrap();
    let pred = g.matvec(&alpha).unwrap();
    y.iter()
        .zip(&pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_error_matches_direct((kernel, xs, y) in instance(), log_c in -6.0f64..1.0) {
        let g = gram(&kernel, &xs);
        let Ok(spec) = eigendecompose(&g) else { return Ok(()); };
        let c = 10f64.powf(log_c);
        let z = spec.rotate(&y).unwrap();
        let spectral = training_error(&spec, &z, c).unwrap();
        let direct = direct_error(&g, &y, c);
        prop_assert!((spectral - direct).abs() <= 1e-9 * direct.max(1e-12), "{spectral} vs {direct}");
    }

    #[test]
    fn error_increases_with_multiplier((kernel, xs, y) in instance(), log_c in -6.0f64..1.0) {
        let Ok(spec) = eigendecompose(&gram(&kernel, &xs)) else { return Ok(()); };
        let z = spec.rotate(&y).unwrap();
        let c = 10f64.powf(log_c);
        let lo = training_error(&spec, &z, c).unwrap();
        let hi = training_error(&spec, &z, 2.0 * c).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn solved_multiplier_meets_tolerance((kernel, xs, y) in instance(), frac in 0.01f64..0.9) {
        let Ok(spec) = eigendecompose(&gram(&kernel, &xs)) else { return Ok(()); };
        let k = y.len() as f64;
        let eps = frac * y.iter().map(|v| v * v).sum::<f64>() / k;
        prop_assume!(eps > 1e-8);
        let config = FitConfig::new(eps).unwrap();
        let z = spec.rotate(&y).unwrap();
        let c = solve_multiplier(&spec, &z, &config).unwrap();
        let err = training_error(&spec, &z, c).unwrap();
        prop_assert!((err - eps).abs() <= config.error_tolerance());
    }

    #[test]
    fn shifted_solve_is_linear((kernel, xs, y) in instance(), s in -3.0f64..3.0) {
        let g = gram(&kernel, &xs);
        let a = solve_shifted(&g, 0.1, &y).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| s * v).collect();
        let b = solve_shifted(&g, 0.1, &scaled).unwrap();
        for (x, w) in a.iter().zip(&b) {
            prop_assert!((s * x - w).abs() <= 1e-9 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn chain_matches_fresh_refits((kernel, xs, y) in instance(), frac in 0.001f64..0.3) {
        let g = gram(&kernel, &xs);
        let Ok(spec) = eigendecompose(&g) else { return Ok(()); };
        let k = y.len() as f64;
        let eps = frac * y.iter().map(|v| v * v).sum::<f64>() / k;
        prop_assume!(eps > 1e-8);
        let config = FitConfig::new(eps).unwrap();
        let data = Dataset::scalar(&xs, y.clone()).unwrap();
        let trace = run_chain(&data, &kernel, &config, 6).unwrap();
        let mut target = y.clone();
        for state in &trace.states {
            let c = solve_multiplier(&spec, &spec.rotate(&target).unwrap(), &config).unwrap();
            prop_assert!((c - state.c).abs() <= 1e-9 * c);
            for (a, b) in target.iter().zip(&state.y) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
            target = g.matvec(&solve_shifted(&g, c, &target).unwrap()).unwrap();
        }
    }
}
