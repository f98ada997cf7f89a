//! Asymptotic covariance of the moment vector and confidence intervals.
//!
//! For two moments `C_A = E[x^{m1}_a(t) x^{m1}_b(t+s1)]` and
//! `C_B = E[x^{m2}_c(t) x^{m2}_d(t+s2)]` of a Gaussian process,
//!
//! ```text
//! lim n Cov(Ĉ_A, Ĉ_B) = Σ_k γ^{m1,m2}_ac(k) γ^{m1,m2}_bd(k+s2−s1)
//!                     + γ^{m1,m2}_ad(k+s2) γ^{m1,m2}_bc(k−s1)
//! ```
//!
//! with `γ^{m1,m2}_ij(k) = E[x^{m1}_i(t) x^{m2}_j(t+k)]`. Every block of `Σ`
//! is an instance of this sum. The series converges when `q > H^∨ + 1/4`; it
//! is truncated at `|k| ≤ K` with a power-law tail estimate, `K` doubling until
//! the estimate is negligible.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MfbmError, Result};
use crate::estimation::{
    estimate_from_moments, moment_descriptors, pairs, theoretical_moment_vector, theta_labels,
    EstimationConfig, EstimationResult, MomentDescriptor, MomentVector, Weights,
};
use crate::filtering::{filtered_cov_unchecked, summability_order, Filter};
use crate::model::MfbmParams;

/// Largest truncation lag tried.
pub const MAX_TRUNCATION: usize = 1 << 16;
const TAIL_REL_TOL: f64 = 1e-8;
const TAIL_ABS_TOL: f64 = 1e-14;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaMatrix {
    pub dim: usize,
    /// Row-major `dim × dim` entries.
    pub entries: Vec<f64>,
    /// Lags `|k| ≤ truncation` were summed.
    pub truncation: usize,
    /// Largest estimated truncation error over all entries.
    pub tail_bound: f64,
}

impl SigmaMatrix {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }
}

fn check_premise(params: &MfbmParams, filter: &Filter) -> Result<()> {
    params.check_dimensions()?;
    if !summability_order(filter, params.h_max(), 2) {
        return Err(MfbmError::Unsupported(format!(
            "the asymptotic covariance needs q > H_max + 1/4; filter `{}` has q = {} and H_max = {}",
            filter.name,
            filter.q,
            params.h_max()
        )));
    }
    let p = params.p();
    for i in 0..p {
        for j in 0..p {
            if params.on_log_branch(i, j) {
                return Err(MfbmError::Unsupported(format!(
                    "H_{i}+H_{j} = 1 with nonzero eta"
                )));
            }
        }
    }
    Ok(())
}

/// `γ^{m1,m2}_ac(k)` for `k ∈ [−reach, reach]`, for every ordered component
/// pair and ordered dilation pair.
struct CovTables {
    p: usize,
    dilations: Vec<usize>,
    reach: i64,
    data: Vec<Vec<f64>>,
}

impl CovTables {
    fn new(params: &MfbmParams, filter: &Filter, dilations: &[usize], reach: i64) -> Self {
        let p = params.p();
        let nd = dilations.len();
        let keys: Vec<(usize, usize, usize, usize)> = (0..nd)
            .flat_map(|m1| (0..nd).flat_map(move |m2| (0..p).flat_map(move |a| (0..p).map(move |c| (m1, m2, a, c)))))
            .collect();
        let data = keys
            .par_iter()
            .map(|&(m1, m2, a, c)| {
                (-reach..=reach)
                    .map(|k| filtered_cov_unchecked(params, filter, a, c, dilations[m1], dilations[m2], k))
                    .collect()
            })
            .collect();
        CovTables {
            p,
            dilations: dilations.to_vec(),
            reach,
            data,
        }
    }

    fn slot(&self, m1: usize, m2: usize, a: usize, c: usize) -> &[f64] {
        let nd = self.dilations.len();
        &self.data[((m1 * nd + m2) * self.p + a) * self.p + c]
    }

    #[inline]
    fn at(table: &[f64], reach: i64, k: i64) -> f64 {
        table[(k + reach) as usize]
    }
}

fn dilation_pos(dilations: &[usize], m: usize) -> usize {
    dilations.iter().position(|&x| x == m).expect("dilation in set")
}

/// Truncated sum and tail estimate for one pair of moments.
fn entry_sum(
    tables: &CovTables,
    x: &MomentDescriptor,
    y: &MomentDescriptor,
    k_max: i64,
    decay: f64,
) -> (f64, f64) {
    let m1 = dilation_pos(&tables.dilations, x.m);
    let m2 = dilation_pos(&tables.dilations, y.m);
    let (s1, s2) = (x.lag as i64, y.lag as i64);
    let ac = tables.slot(m1, m2, x.a, y.a);
    let bd = tables.slot(m1, m2, x.b, y.b);
    let ad = tables.slot(m1, m2, x.a, y.b);
    let bc = tables.slot(m1, m2, x.b, y.a);
    let r = tables.reach;
    let term = |k: i64| {
        CovTables::at(ac, r, k) * CovTables::at(bd, r, k + s2 - s1)
            + CovTables::at(ad, r, k + s2) * CovTables::at(bc, r, k - s1)
    };
    let sum: f64 = (-k_max..=k_max).map(term).sum();
    let edge = term(k_max).abs() + term(-k_max).abs();
    let tail = 2.0 * edge * k_max as f64 / (decay - 1.0);
    (sum, tail)
}

fn sigma_for(
    params: &MfbmParams,
    filter: &Filter,
    dilations: &[usize],
    descs: &[MomentDescriptor],
    fixed_k: Option<usize>,
) -> Result<SigmaMatrix> {
    check_premise(params, filter)?;
    let dim = descs.len();
    let max_shift = descs.iter().map(|d| d.lag).max().unwrap_or(0) as i64;
    let max_m = *dilations.iter().max().expect("nonempty dilations");
    // Summand decays like |k|^{-decay}.
    let decay = 4.0 * filter.q as f64 - 4.0 * params.h_max();
    let mut k = fixed_k.unwrap_or_else(|| (32 * max_m * filter.ell.max(1)).next_power_of_two());
    let index_pairs: Vec<(usize, usize)> = (0..dim).flat_map(|r| (r..dim).map(move |c| (r, c))).collect();
    loop {
        let reach = k as i64 + 2 * max_shift + 1;
        let tables = CovTables::new(params, filter, dilations, reach);
        let sums: Vec<(f64, f64)> = index_pairs
            .par_iter()
            .map(|&(r, c)| entry_sum(&tables, &descs[r], &descs[c], k as i64, decay))
            .collect();
        let mut m = DMatrix::zeros(dim, dim);
        let mut tails = DMatrix::zeros(dim, dim);
        for (&(r, c), &(s, t)) in index_pairs.iter().zip(&sums) {
            m[(r, c)] = s;
            m[(c, r)] = s;
            tails[(r, c)] = t;
        }
        let max_diag = (0..dim).map(|d| m[(d, d)].abs()).fold(0.0_f64, f64::max);
        let converged = index_pairs.iter().all(|&(r, c)| {
            let t = tails[(r, c)];
            t <= TAIL_REL_TOL * m[(r, c)].abs() || t <= TAIL_ABS_TOL * max_diag
        });
        let tail_bound = tails.max();
        if fixed_k.is_some() || converged || k >= MAX_TRUNCATION {
            if !converged && fixed_k.is_none() {
                log::warn!("lag sums not converged at K = {k}; tail bound {tail_bound:.3e}");
            }
            return Ok(SigmaMatrix {
                dim,
                entries: m.transpose().as_slice().to_vec(),
                truncation: k,
                tail_bound,
            });
        }
        k *= 2;
    }
}

/// Asymptotic covariance `Σ` of `√n (C_n − γ)`, entries in moment-vector order.
pub fn sigma_matrix(params: &MfbmParams, filter: &Filter, dilations: &[usize]) -> Result<SigmaMatrix> {
    let descs = moment_descriptors(params.p(), dilations, filter.ell);
    sigma_for(params, filter, dilations, &descs, None)
}

/// [`sigma_matrix`] with a fixed truncation lag `K`.
pub fn sigma_matrix_truncated(
    params: &MfbmParams,
    filter: &Filter,
    dilations: &[usize],
    k: usize,
) -> Result<SigmaMatrix> {
    let descs = moment_descriptors(params.p(), dilations, filter.ell);
    sigma_for(params, filter, dilations, &descs, Some(k))
}

/// Limit of `n Cov(Ĉ_A, Ĉ_B)` for arbitrary moment descriptors, by direct
/// summation over `|k| ≤ k_max`.
pub fn sigma_entry(
    params: &MfbmParams,
    filter: &Filter,
    x: &MomentDescriptor,
    y: &MomentDescriptor,
    k_max: usize,
) -> Result<f64> {
    check_premise(params, filter)?;
    let g = |i, j, k| filtered_cov_unchecked(params, filter, i, j, x.m, y.m, k);
    let (s1, s2) = (x.lag as i64, y.lag as i64);
    let k_max = k_max as i64;
    Ok((-k_max..=k_max)
        .map(|k| g(x.a, y.a, k) * g(x.b, y.b, k + s2 - s1) + g(x.a, y.b, k + s2) * g(x.b, y.a, k - s1))
        .sum())
}

/// Denominator used for the normalized covariance `Σ̃` of the log-variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CltNormalization {
    /// `γ^{m1}_{i1i1}(0) γ^{m2}_{i2i2}(0)`, the linearization of `log C^m_ii(0)`.
    #[default]
    Variance,
    /// `γ^{m1}_{i1i2}(0) γ^{m2}_{i1i2}(0)`; vanishes when `ρ_{i1i2} = 0`.
    Literal,
}

/// Limit covariance of `√n (Ĥ^v − H)`:
/// `(I ⊗ L̆)ᵗ Σ̃ (I ⊗ L̆) / (4 (L̆ᵗL̆)²)` with
/// `Σ̃[(i1,m1),(i2,m2)] = 2 Σ_k γ^{m1,m2}_{i1i2}(k)² / normalization`.
pub fn h_clt_covariance(
    params: &MfbmParams,
    filter: &Filter,
    dilations: &[usize],
    normalization: CltNormalization,
) -> Result<DMatrix<f64>> {
    let p = params.p();
    let nd = dilations.len();
    if nd < 2 {
        return Err(MfbmError::SingularRegression(
            "at least two dilations are needed".into(),
        ));
    }
    let descs: Vec<MomentDescriptor> = (0..p)
        .flat_map(|i| dilations.iter().map(move |&m| MomentDescriptor { a: i, b: i, m, lag: 0 }))
        .collect();
    let sigma = sigma_for(params, filter, dilations, &descs, None)?.matrix();
    let mean = dilations.iter().map(|&m| (m as f64).ln()).sum::<f64>() / nd as f64;
    let lc: Vec<f64> = dilations.iter().map(|&m| (m as f64).ln() - mean).collect();
    let sxx: f64 = lc.iter().map(|l| l * l).sum();
    let g0 = |i: usize, j: usize, m: usize| filtered_cov_unchecked(params, filter, i, j, m, m, 0);
    let mut out = DMatrix::zeros(p, p);
    for i1 in 0..p {
        for i2 in 0..p {
            let mut acc = 0.0;
            for (a, &m1) in dilations.iter().enumerate() {
                for (b, &m2) in dilations.iter().enumerate() {
                    let denom = match normalization {
                        CltNormalization::Variance => g0(i1, i1, m1) * g0(i2, i2, m2),
                        CltNormalization::Literal => g0(i1, i2, m1) * g0(i1, i2, m2),
                    };
                    if denom == 0.0 {
                        return Err(MfbmError::Numerical(format!(
                            "normalization vanishes for components ({}, {})",
                            i1 + 1,
                            i2 + 1
                        )));
                    }
                    acc += lc[a] * lc[b] * sigma[(i1 * nd + a, i2 * nd + b)] / denom;
                }
            }
            out[(i1, i2)] = acc / (4.0 * sxx * sxx);
        }
    }
    Ok(out)
}

/// Jacobian of `g` (moment vector to `θ`) at `mv`, by central differences.
pub fn g_jacobian(mv: &MomentVector, config: &EstimationConfig) -> Result<DMatrix<f64>> {
    let dim = mv.len();
    let columns = (0..dim)
        .into_par_iter()
        .map(|k| {
            let x = mv.entries[k];
            let step = if x == 0.0 { FD_STEP } else { FD_STEP * x.abs() };
            let mut plus = mv.clone();
            let mut minus = mv.clone();
            plus.entries[k] += step;
            minus.entries[k] -= step;
            let tp = estimate_from_moments(&plus, config)?.theta();
            let tm = estimate_from_moments(&minus, config)?.theta();
            Ok(tp.iter().zip(&tm).map(|(a, b)| (a - b) / (2.0 * step)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = columns.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, dim, |r, c| columns[c][r]))
}

/// Limit covariance `∇g Σ ∇gᵗ` of `√n (θ̂ − θ)` at `params`.
pub fn theta_covariance(params: &MfbmParams, config: &EstimationConfig) -> Result<(DMatrix<f64>, SigmaMatrix)> {
    let mv = theoretical_moment_vector(params, config)?;
    let jac = g_jacobian(&mv, config)?;
    let sigma = sigma_matrix(params, &config.filter, &config.dilations)?;
    let cov = &jac * sigma.matrix() * jac.transpose();
    Ok((cov, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub parameter: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub level: f64,
    pub n: usize,
    pub z: f64,
    pub intervals: Vec<Interval>,
    pub sigma_truncation: usize,
    pub sigma_tail_bound: f64,
}

/// Delta-method intervals `θ̂_k ± z √((∇g Σ ∇gᵗ)_kk / n)`, with `Σ` and `∇g`
/// evaluated at the fitted parameters.
pub fn confidence_intervals(result: &EstimationResult, n: usize, level: f64) -> Result<ConfidenceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MfbmError::InvalidParameter(format!("level {level} is not in (0, 1)")));
    }
    if n == 0 {
        return Err(MfbmError::InvalidParameter("n must be positive".into()));
    }
    let params_hat = result.to_params()?;
    let (cov, sigma) = theta_covariance(&params_hat, &result.config)?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let theta = result.theta();
    let labels = theta_labels(result.p());
    let intervals = theta
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(k, (&est, parameter))| {
            let se = (cov[(k, k)].max(0.0) / n as f64).sqrt();
            Interval {
                parameter,
                estimate: est,
                std_error: se,
                lower: est - z * se,
                upper: est + z * se,
            }
        })
        .collect();
    Ok(ConfidenceReport {
        level,
        n,
        z,
        intervals,
        sigma_truncation: sigma.truncation,
        sigma_tail_bound: sigma.tail_bound,
    })
}

/// Block of `∇g Σ ∇gᵗ` for `Ĥ` under `(1,0,0)` weights; equals
/// [`h_clt_covariance`] with [`CltNormalization::Variance`].
pub fn h_block_from_delta_method(
    params: &MfbmParams,
    filter: &Filter,
    dilations: &[usize],
) -> Result<DMatrix<f64>> {
    let config = EstimationConfig::new(filter.clone(), dilations.to_vec(), Weights::V)?;
    let (cov, _) = theta_covariance(params, &config)?;
    let p = params.p();
    Ok(cov.view((0, 0), (p, p)).into_owned())
}

/// Number of `θ` coordinates for `p` components.
pub fn theta_dim(p: usize) -> usize {
    2 * p + 2 * pairs(p).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::make_filter;

    #[test]
    fn premise_is_enforced() {
        let params = MfbmParams::well_balanced(vec![0.8], vec![1.0], 0.0).unwrap();
        let diff1 = make_filter("diff1").unwrap();
        assert!(matches!(
            sigma_matrix(&params, &diff1, &[1, 2]),
            Err(MfbmError::Unsupported(_))
        ));
    }

    #[test]
    fn variance_entry_is_twice_sum_of_squares() {
        let params = MfbmParams::well_balanced(vec![0.35, 0.7], vec![1.0, 1.3], 0.4).unwrap();
        let f = make_filter("db4").unwrap();
        let s = sigma_matrix(&params, &f, &[1, 2]).unwrap();
        let k = s.truncation as i64;
        let direct: f64 = 2.0
            * (-k..=k)
                .map(|h| filtered_cov_unchecked(&params, &f, 1, 1, 2, 2, h).powi(2))
                .sum::<f64>();
        let idx = 3;
        assert!((s.matrix()[(idx, idx)] - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn truncation_doubling_stays_within_tail_bound() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.6], vec![1.0, 2.0], 0.3).unwrap();
        let f = make_filter("db4").unwrap();
        let a = sigma_matrix_truncated(&params, &f, &[1, 2, 3], 256).unwrap();
        let b = sigma_matrix_truncated(&params, &f, &[1, 2, 3], 512).unwrap();
        let diff = (a.matrix() - b.matrix()).abs().max();
        assert!(diff <= a.tail_bound, "{diff} > {}", a.tail_bound);
    }

    #[test]
    fn independent_components_give_diagonal_h_covariance() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.6], vec![1.0, 1.0], 0.0).unwrap();
        let f = make_filter("db4").unwrap();
        let c = h_clt_covariance(&params, &f, &[1, 2, 3, 4, 5], CltNormalization::Variance).unwrap();
        assert!(c[(0, 1)].abs() < 1e-15 && c[(1, 0)].abs() < 1e-15);
        assert!(c[(0, 0)] > 0.0 && c[(1, 1)] > 0.0);
        assert!(h_clt_covariance(&params, &f, &[1, 2, 3], CltNormalization::Literal).is_err());
    }

    #[test]
    fn normalizations_agree_on_the_diagonal() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.6], vec![1.0, 2.0], 0.5).unwrap();
        let f = make_filter("db4").unwrap();
        let d = [1, 2, 3, 4];
        let v = h_clt_covariance(&params, &f, &d, CltNormalization::Variance).unwrap();
        let l = h_clt_covariance(&params, &f, &d, CltNormalization::Literal).unwrap();
        for i in 0..2 {
            assert!((v[(i, i)] - l[(i, i)]).abs() < 1e-12 * v[(i, i)]);
        }
    }

    #[test]
    fn intervals_have_requested_width() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.6], vec![1.0, 2.0], 0.5).unwrap();
        let config = EstimationConfig::default();
        let mv = theoretical_moment_vector(&params, &config).unwrap();
        let est = estimate_from_moments(&mv, &config).unwrap();
        let ci = confidence_intervals(&est, 4096, 0.95).unwrap();
        assert_eq!(ci.intervals.len(), theta_dim(2));
        assert!((ci.z - 1.959963984540054).abs() < 1e-9);
        for iv in &ci.intervals {
            assert!(iv.lower <= iv.estimate && iv.estimate <= iv.upper);
        }
        assert!(ci.intervals[0].std_error > 0.0);
        assert!(confidence_intervals(&est, 4096, 1.0).is_err());
    }
}
