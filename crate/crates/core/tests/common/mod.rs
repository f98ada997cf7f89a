#![allow(dead_code)]

use mfbm_core::model::{validate, MfbmParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    use rand::SeedableRng;
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random admissible parameters. Off-diagonal ρ and η are kept away from zero
/// when `nonzero` is set, and `H_i + H_j` stays away from 1.
pub fn random_admissible(rng: &mut ChaCha20Rng, p: usize, nonzero: bool) -> MfbmParams {
    let h: Vec<f64> = loop {
        let h: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..0.9)).collect();
        let ok = (0..p).all(|i| (i..p).all(|j| ((h[i] + h[j]) - 1.0).abs() > 0.02));
        if ok {
            break h;
        }
    };
    let sigma: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..2.5)).collect();
    let g: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    let s = &g * g.transpose() + DMatrix::identity(p, p) * 0.3;
    let mut corr = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt());
    let mut eta = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let mut r: f64 = corr[(i, j)];
            let mut e: f64 = rng.random_range(-0.3..0.3);
            if nonzero {
                if r.abs() < 0.1 {
                    r = 0.1f64.copysign(r);
                }
                if e.abs() < 0.05 {
                    e = 0.05f64.copysign(e);
                }
            }
            corr[(i, j)] = r;
            corr[(j, i)] = r;
            eta[(i, j)] = e;
            eta[(j, i)] = -e;
        }
    }
    let mut scale = 1.0;
    loop {
        let rho = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { scale * corr[(i, j)] });
        let params = MfbmParams::new(h.clone(), sigma.clone(), rho, &eta * scale).unwrap();
        if validate(&params).unwrap().admissible {
            return params;
        }
        scale *= 0.7;
        assert!(scale > 1e-3, "could not find admissible parameters");
    }
}

/// Minimizer of the weighted log-regression objective by least squares on
/// the stacked system with unknowns (H, α, μ_pairs, ν_pairs).
///
/// Rows: `√w_v (2H_i L_m + α_i) = √w_v v_i^m`,
/// `√w_c ((H_i+H_j) L_m + μ_ij) = √w_c c_ij^m`, same for `d` with `ν`.
pub fn least_squares_h(
    log_m: &[f64],
    v: &[Vec<f64>],
    c: &[Vec<Vec<f64>>],
    d: &[Vec<Vec<f64>>],
    w: (f64, f64, f64),
) -> Vec<f64> {
    let p = v.len();
    let nd = log_m.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let np = pairs.len();
    let unknowns = 2 * p + 2 * np;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let (sv, sc, sd) = (w.0.sqrt(), w.1.sqrt(), w.2.sqrt());
    for i in 0..p {
        for (mi, &l) in log_m.iter().enumerate() {
            let mut r = vec![0.0; unknowns];
            r[i] = 2.0 * l * sv;
            r[p + i] = sv;
            rows.push((r, sv * v[i][mi]));
        }
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        for (mi, &l) in log_m.iter().enumerate() {
            if sc > 0.0 {
                let mut r = vec![0.0; unknowns];
                r[i] = l * sc;
                r[j] = l * sc;
                r[2 * p + k] = sc;
                rows.push((r, sc * c[i][j][mi]));
            }
            if sd > 0.0 {
                let mut r = vec![0.0; unknowns];
                r[i] = l * sd;
                r[j] = l * sd;
                r[2 * p + np + k] = sd;
                rows.push((r, sd * d[i][j][mi]));
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), unknowns, |r, col| rows[r].0[col]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let _ = nd;
    let sol = a.svd(true, true).solve(&b, 1e-12).unwrap();
    sol.iter().take(p).copied().collect()
}

/// `E[x^{m1}_i(t) x^{m2}_j(t+h)]` straight from the path covariance.
pub fn brute_filtered_cov(
    params: &MfbmParams,
    taps: &[f64],
    i: usize,
    j: usize,
    m1: usize,
    m2: usize,
    h: i64,
) -> f64 {
    let t = 7.0;
    let mut acc = 0.0;
    for (k, ak) in taps.iter().enumerate() {
        for (l, al) in taps.iter().enumerate() {
            let s = t - (m1 * k) as f64;
            let u = t + h as f64 - (m2 * l) as f64;
            acc += ak * al * mfbm_core::model::cross_cov(params, i, j, s, u);
        }
    }
    acc
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}
