//! Monte-Carlo checks of both samplers against the model kernels.

mod common;

use mfbm_core::asymptotics::sigma_matrix;
use mfbm_core::estimation::{compute_moment_vector, EstimationConfig};
use mfbm_core::filtering::make_filter;
use mfbm_core::model::{increment_cov, MfbmParams};
use mfbm_core::synthesis::{replication_seed, CirculantSampler, ExactSampler, PathSampler};
use rayon::prelude::*;

fn asymmetric_pair() -> MfbmParams {
    let mut p = MfbmParams::well_balanced(vec![0.3, 0.8], vec![1.0, 2.0], 0.4).unwrap();
    p.eta[(0, 1)] = 0.1;
    p.eta[(1, 0)] = -0.1;
    p
}

fn increments(values: &nalgebra::DMatrix<f64>, i: usize) -> Vec<f64> {
    let col = values.column(i);
    (0..values.nrows()).map(|t| if t == 0 { col[0] } else { col[t] - col[t - 1] }).collect()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Per-replication time averages of `Δx_i(t) Δx_j(t+h)`.
fn lagged_products(sampler: &dyn PathSampler, reps: u64, i: usize, j: usize, h: usize) -> Vec<f64> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let path = sampler.sample(replication_seed(99, r));
            let (a, b) = (increments(&path.values, i), increments(&path.values, j));
            let terms = a.len() - h;
            (0..terms).map(|t| a[t] * b[t + h]).sum::<f64>() / terms as f64
        })
        .collect()
}

#[test]
fn both_samplers_reproduce_increment_covariances() {
    let params = asymmetric_pair();
    let exact = ExactSampler::new(&params, 64).unwrap();
    let circ = CirculantSampler::new(&params, 200).unwrap();
    assert!(circ.is_circulant());
    for sampler in [&exact as &dyn PathSampler, &circ] {
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for h in 0..3 {
                let (m, sd) = mean_sd(&lagged_products(sampler, 1500, i, j, h));
                let target = increment_cov(&params, i, j, h as i64);
                let se = sd / (1500f64).sqrt();
                assert!((m - target).abs() < 4.0 * se, "({i},{j},{h}): {m} vs {target} ± {se}");
            }
        }
    }
}

#[test]
fn brownian_increments_are_white() {
    let params = MfbmParams::well_balanced(vec![0.5], vec![1.0], 0.0).unwrap();
    let path = CirculantSampler::new(&params, 4096).unwrap().sample(5);
    let x = increments(&path.values, 0);
    let n = x.len() as f64;
    let (m, sd) = mean_sd(&x);
    let acf = |k: usize| {
        (0..x.len() - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / (n * sd * sd)
    };
    // Ljung-Box with 20 lags; the 0.999 quantile of chi-square(20) is 45.3.
    let q: f64 = n * (n + 2.0) * (1..=20).map(|k| acf(k).powi(2) / (n - k as f64)).sum::<f64>();
    assert!(q < 45.3, "Q = {q}");
    assert!((sd - 1.0).abs() < 0.05);
}

#[test]
fn endpoint_law_agrees_between_samplers() {
    let params = asymmetric_pair();
    let n = 48;
    let exact = ExactSampler::new(&params, n).unwrap();
    let circ = CirculantSampler::new(&params, n).unwrap();
    let reps = 2000u64;
    for comp in 0..2 {
        let draw = |s: &dyn PathSampler, base: u64| -> Vec<f64> {
            (0..reps).map(|r| s.sample(base ^ r).values[(n - 1, comp)]).collect()
        };
        let (ma, sa) = mean_sd(&draw(&exact, 1 << 40));
        let (mb, sb) = mean_sd(&draw(&circ, 1 << 41));
        let target_sd = params.sigma[comp] * (n as f64).powf(params.h[comp]);
        let se_mean = target_sd * (2.0 / reps as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se_mean, "means {ma} vs {mb}");
        // Standard error of a sample variance ratio is about sqrt(2/R) per sample.
        let ratio = (sa * sa) / (sb * sb);
        assert!((ratio - 1.0).abs() < 4.0 * (4.0 / reps as f64).sqrt(), "variance ratio {ratio}");
        assert!((sa / target_sd - 1.0).abs() < 0.06);
    }
}

#[test]
fn increments_are_stationary_and_gaussian() {
    let params = asymmetric_pair();
    let circ = CirculantSampler::new(&params, 1024).unwrap();
    let reps = 200u64;
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut pooled = Vec::new();
    for r in 0..reps {
        let path = circ.sample(replication_seed(7, r));
        let x = increments(&path.values, 1);
        let half = x.len() / 2;
        first.push(x[..half].iter().map(|v| v * v).sum::<f64>() / half as f64);
        second.push(x[half..].iter().map(|v| v * v).sum::<f64>() / half as f64);
        pooled.extend(x.iter().step_by(20).map(|v| v / params.sigma[1]));
    }
    let diffs: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a - b).collect();
    let (md, sd) = mean_sd(&diffs);
    assert!(md.abs() < 4.0 * sd / (reps as f64).sqrt());

    let n = pooled.len() as f64;
    assert!(n >= 1e4);
    let (m, s) = mean_sd(&pooled);
    let skew = pooled.iter().map(|v| ((v - m) / s).powi(3)).sum::<f64>() / n;
    let kurt = pooled.iter().map(|v| ((v - m) / s).powi(4)).sum::<f64>() / n - 3.0;
    assert!(skew.abs() < 4.0 * (6.0 / n).sqrt(), "skewness {skew}");
    assert!(kurt.abs() < 4.0 * (24.0 / n).sqrt(), "excess kurtosis {kurt}");
}

#[test]
fn scaled_variance_of_filtered_moments_matches_sigma() {
    let params = MfbmParams::well_balanced(vec![0.3, 0.6], vec![1.0, 1.5], 0.4).unwrap();
    let filter = make_filter("db4").unwrap();
    let config = EstimationConfig {
        filter: filter.clone(),
        dilations: vec![1, 2],
        ..EstimationConfig::default()
    };
    let n = 1 << 13;
    let reps = 2000u64;
    let sampler = CirculantSampler::new(&params, n).unwrap();
    let moments: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| compute_moment_vector(&sampler.sample(replication_seed(3, r)).values, &config).unwrap().entries)
        .collect();
    let sigma = sigma_matrix(&params, &filter, &config.dilations).unwrap().matrix();
    // Variances of C^m_ii(0) and C^m_12(0), finite-sample sums use n − mℓ terms.
    for idx in [0, 1, 2, 3, 4] {
        let col: Vec<f64> = moments.iter().map(|m| m[idx]).collect();
        let (_, sd) = mean_sd(&col);
        let m = [1, 2, 1, 2, 1][idx];
        let scaled = (n - m * 3) as f64 * sd * sd;
        let rel = scaled / sigma[(idx, idx)] - 1.0;
        assert!(rel.abs() < 0.10, "entry {idx}: {scaled} vs {}", sigma[(idx, idx)]);
    }
}
