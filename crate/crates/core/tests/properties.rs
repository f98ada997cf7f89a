//! Deterministic property suites (no Monte-Carlo content).

mod common;

use common::*;
use mfbm_core::asymptotics::sigma_matrix;
use mfbm_core::estimation::{estimate_all, EstimationConfig, Weights};
use mfbm_core::filtering::{apply_filter, dilate, make_filter, theoretical_filtered_cov};
use mfbm_core::model::{cross_cov, increment_cov, MfbmParams};
use mfbm_core::synthesis::{build_path_covariance, CirculantSampler, PathSampler};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `η̂` blows up when `π_ij(ℓ)` is near zero, so compare relative to magnitude.
fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn params_strategy(p: usize) -> impl Strategy<Value = MfbmParams> {
    any::<u64>().prop_map(move |seed| random_admissible(&mut rng(seed), p, true))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_self_similar(
        params in params_strategy(3),
        s in -20.0f64..20.0,
        t in -20.0f64..20.0,
        lambda in 0.05f64..30.0,
        i in 0usize..3,
        j in 0usize..3,
    ) {
        let lhs = cross_cov(&params, i, j, lambda * s, lambda * t);
        let rhs = lambda.powf(params.hsum(i, j)) * cross_cov(&params, i, j, s, t);
        let scale = lambda.powf(params.hsum(i, j)) * (s.abs() + t.abs()).powf(params.hsum(i, j)).max(1e-300);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(lhs.abs()));
    }

    #[test]
    fn marginal_variance_is_power_law(params in params_strategy(2), t in 0.01f64..100.0, i in 0usize..2) {
        let v = cross_cov(&params, i, i, t, t);
        let expected = params.sigma[i].powi(2) * t.powf(2.0 * params.h[i]);
        prop_assert!((v - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn increment_covariance_symmetries(params in params_strategy(3), h in -50i64..50, i in 0usize..3, j in 0usize..3) {
        let a = increment_cov(&params, i, j, h);
        let b = increment_cov(&params, j, i, -h);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let mut reversible = params.clone();
        reversible.eta.fill(0.0);
        let c = increment_cov(&reversible, i, j, h);
        let d = increment_cov(&reversible, i, j, -h);
        prop_assert!((c - d).abs() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn path_covariance_is_psd(params in params_strategy(3)) {
        let cov = build_path_covariance(&params, 40).unwrap();
        prop_assert!((&cov - cov.transpose()).abs().max() == 0.0);
        prop_assert!(min_eigenvalue(&cov) >= -1e-8 * cov.trace());
    }

    #[test]
    fn filtered_variance_scaling(params in params_strategy(2), m in 1usize..=8, i in 0usize..2) {
        let f = make_filter("db4").unwrap();
        let base = theoretical_filtered_cov(&params, &f, i, i, 1, 1, 0).unwrap();
        let scaled = theoretical_filtered_cov(&params, &f, i, i, m, m, 0).unwrap();
        let expected = (m as f64).powf(2.0 * params.h[i]);
        prop_assert!((scaled / base - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn filters_annihilate_trends(
        seed in any::<u64>(),
        c0 in -1e3f64..1e3,
        c1 in -10.0f64..10.0,
        m in 1usize..4,
    ) {
        let mut r = rng(seed);
        let base = DMatrix::from_fn(80, 2, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
        let constant = base.map(|x| x + c0);
        let trend = DMatrix::from_fn(80, 2, |t, i| base[(t, i)] + c0 + c1 * (t as f64 + 1.0));
        for name in ["diff1", "diff2", "db4", "db6"] {
            let f = make_filter(name).unwrap();
            let df = dilate(&f, m).unwrap();
            let plain = apply_filter(&base, &df).unwrap();
            let shifted = if f.q >= 2 { apply_filter(&trend, &df).unwrap() } else { apply_filter(&constant, &df).unwrap() };
            for (a, b) in plain.components.iter().flatten().zip(shifted.components.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + c0.abs() + 100.0 * c1.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sigma_is_symmetric_psd(params in params_strategy(2)) {
        let f = make_filter("db4").unwrap();
        let s = sigma_matrix(&params, &f, &[1, 2, 3]).unwrap().matrix();
        prop_assert_eq!(&s, &s.transpose());
        prop_assert!(min_eigenvalue(&s) >= -1e-8 * s.trace());
    }

    #[test]
    fn estimates_are_scale_equivariant(seed in any::<u64>(), scale in 0.1f64..10.0, comp in 0usize..3) {
        let params = random_admissible(&mut rng(seed), 3, true);
        let path = CirculantSampler::new(&params, 512).unwrap().sample(seed);
        let mut scaled = path.values.clone();
        scaled.column_mut(comp).scale_mut(scale);
        for w in [Weights::V, Weights::C, Weights::D] {
            let config = EstimationConfig { weights: w, ..EstimationConfig::default() };
            let (a, b) = match (estimate_all(&path.values, &config), estimate_all(&scaled, &config)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(_), Err(_)) => continue,
                (a, b) => return Err(TestCaseError::fail(format!("{:?} vs {:?}", a.err(), b.err()))),
            };
            for i in 0..3 {
                prop_assert!((a.h_hat[i] - b.h_hat[i]).abs() < 1e-9);
                let factor = if i == comp { scale * scale } else { 1.0 };
                prop_assert!((a.sigma2_hat[i] * factor - b.sigma2_hat[i]).abs() < 1e-9 * b.sigma2_hat[i]);
                for j in 0..3 {
                    prop_assert!(close(a.rho_hat[i][j], b.rho_hat[i][j], 1e-9));
                    prop_assert!(close(a.eta_hat[i][j], b.eta_hat[i][j], 1e-9));
                }
            }
        }
    }

    #[test]
    fn estimates_are_permutation_equivariant(seed in any::<u64>(), perm_id in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[perm_id];
        let params = random_admissible(&mut rng(seed), 3, true);
        let path = CirculantSampler::new(&params, 512).unwrap().sample(seed);
        let permuted = DMatrix::from_fn(path.n(), 3, |t, k| path.values[(t, perm[k])]);
        for w in [Weights::V, Weights::C, Weights::D] {
            let config = EstimationConfig { weights: w, ..EstimationConfig::default() };
            let (a, b) = match (estimate_all(&path.values, &config), estimate_all(&permuted, &config)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(_), Err(_)) => continue,
                (a, b) => return Err(TestCaseError::fail(format!("{:?} vs {:?}", a.err(), b.err()))),
            };
            for k in 0..3 {
                prop_assert!((b.h_hat[k] - a.h_hat[perm[k]]).abs() < 1e-10);
                prop_assert!((b.sigma2_hat[k] - a.sigma2_hat[perm[k]]).abs() < 1e-10 * a.sigma2_hat[perm[k]]);
                for l in 0..3 {
                    prop_assert!(close(b.rho_hat[k][l], a.rho_hat[perm[k]][perm[l]], 1e-10));
                    prop_assert!(close(b.eta_hat[k][l], a.eta_hat[perm[k]][perm[l]], 1e-10));
                }
            }
        }
    }
}
