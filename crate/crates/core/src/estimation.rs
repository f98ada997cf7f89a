//! Filtered-moment estimation of `θ = (H, σ², ρ, η)`.
//!
//! The path is filtered at every dilation `m ∈ ℳ`; the empirical variances,
//! lag-0 cross-covariances and lag-`mℓ` cross-covariances form the moment
//! vector `C_n`, and [`estimate_from_moments`] maps it to `θ̂`. Applied to the
//! theoretical moments it returns `θ` exactly.
//!
//! The Hurst exponents come from a joint weighted log-regression:
//!
//! * `v^m_i = log C^m_ii(0)        ≈ 2H_i log m + α_i`
//! * `c^m_ij = log |C^m_ij(0)|     ≈ (H_i+H_j) log m + μ_ij`
//! * `d^m_ij = log ½|C^m_ij(mℓ) − C^m_ji(mℓ)| ≈ (H_i+H_j) log m + ν_ij`
//!
//! weighted by `(w_v, w_c, w_d)`. The presets [`Weights::V`], [`Weights::C`]
//! and [`Weights::D`] give the estimators `Ĥ^v`, `Ĥ^c` and `Ĥ^d`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MfbmError, Result};
use crate::filtering::{apply_filter, dilate, make_filter, pi_a, theoretical_filtered_cov, Filter};
use crate::model::MfbmParams;

/// Logs of absolute values below this are floored and flagged.
pub const LOG_FLOOR: f64 = 1e-300;

/// Regression weights `(w_v, w_c, w_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub v: f64,
    pub c: f64,
    pub d: f64,
}

impl Weights {
    pub const V: Weights = Weights { v: 1.0, c: 0.0, d: 0.0 };
    pub const C: Weights = Weights { v: 1.0, c: 1.0, d: 0.0 };
    pub const D: Weights = Weights { v: 1.0, c: 1.0, d: 1.0 };

    pub fn new(v: f64, c: f64, d: f64) -> Result<Self> {
        let w = Weights { v, c, d };
        w.check()?;
        Ok(w)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "v" => Ok(Weights::V),
            "c" => Ok(Weights::C),
            "d" => Ok(Weights::D),
            _ => Err(MfbmError::InvalidParameter(format!(
                "unknown weight preset `{name}` (expected v, c or d)"
            ))),
        }
    }

    fn check(&self) -> Result<()> {
        let finite = self.v.is_finite() && self.c.is_finite() && self.d.is_finite();
        if !finite || self.v <= 0.0 || self.c < 0.0 || self.d < 0.0 {
            return Err(MfbmError::InvalidParameter(format!(
                "weights must satisfy w_v > 0, w_c >= 0, w_d >= 0, got ({}, {}, {})",
                self.v, self.c, self.d
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub filter: Filter,
    /// Ascending, distinct dilations `ℳ`.
    pub dilations: Vec<usize>,
    pub weights: Weights,
    /// Dilation used for the signs of `ρ̂` and `η̂`; `None` means `min ℳ`.
    pub sign_dilation: Option<usize>,
    /// Minimum number of products in an empirical covariance.
    pub min_terms: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            filter: make_filter("db4").expect("builtin filter"),
            dilations: (1..=5).collect(),
            weights: Weights::V,
            sign_dilation: None,
            min_terms: 30,
        }
    }
}

impl EstimationConfig {
    pub fn new(filter: Filter, dilations: Vec<usize>, weights: Weights) -> Result<Self> {
        let config = EstimationConfig {
            filter,
            dilations,
            weights,
            sign_dilation: None,
            min_terms: 30,
        };
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        self.weights.check()?;
        if self.dilations.is_empty() || self.dilations[0] == 0 {
            return Err(MfbmError::InvalidParameter(
                "dilations must be a nonempty set of integers >= 1".into(),
            ));
        }
        if self.dilations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfbmError::InvalidParameter(
                "dilations must be sorted ascending and distinct".into(),
            ));
        }
        if let Some(ms) = self.sign_dilation {
            if !self.dilations.contains(&ms) {
                return Err(MfbmError::InvalidParameter(format!(
                    "sign dilation {ms} is not one of the dilations"
                )));
            }
        }
        Ok(())
    }

    fn sign_index(&self) -> usize {
        self.sign_dilation
            .and_then(|ms| self.dilations.iter().position(|&m| m == ms))
            .unwrap_or(0)
    }

    fn log_dilations(&self) -> Vec<f64> {
        self.dilations.iter().map(|&m| (m as f64).ln()).collect()
    }
}

/// Index of the unordered pair `i < j` in row order.
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// Pairs `(i, j)`, `i < j`, in row order.
pub fn pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect()
}

/// Moment `E[x^m_a(t) x^m_b(t + lag)]` that one entry of the moment vector estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentDescriptor {
    pub a: usize,
    pub b: usize,
    pub m: usize,
    pub lag: usize,
}

/// Descriptors in moment-vector order: variances, lag-0 covariances, lag-`mℓ`
/// covariances `C_ij(mℓ)`, then `C_ij(−mℓ) = C_ji(mℓ)`. Pairs are in row order
/// and dilations vary fastest.
pub fn moment_descriptors(p: usize, dilations: &[usize], ell: usize) -> Vec<MomentDescriptor> {
    let mut out = Vec::with_capacity(moment_dim(p, dilations.len()));
    for i in 0..p {
        for &m in dilations {
            out.push(MomentDescriptor { a: i, b: i, m, lag: 0 });
        }
    }
    let pr = pairs(p);
    for &(i, j) in &pr {
        for &m in dilations {
            out.push(MomentDescriptor { a: i, b: j, m, lag: 0 });
        }
    }
    for &(i, j) in &pr {
        for &m in dilations {
            out.push(MomentDescriptor { a: i, b: j, m, lag: m * ell });
        }
    }
    for &(i, j) in &pr {
        for &m in dilations {
            out.push(MomentDescriptor { a: j, b: i, m, lag: m * ell });
        }
    }
    out
}

/// `|ℳ| p (3p − 1) / 2`.
pub fn moment_dim(p: usize, n_dilations: usize) -> usize {
    n_dilations * p * (3 * p - 1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub p: usize,
    pub dilations: Vec<usize>,
    pub ell: usize,
    pub entries: Vec<f64>,
    /// Path length the moments were computed from (0 for theoretical moments).
    pub n_used: usize,
}

impl MomentVector {
    fn nd(&self) -> usize {
        self.dilations.len()
    }

    fn npairs(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    pub fn var_index(&self, i: usize, mi: usize) -> usize {
        i * self.nd() + mi
    }

    pub fn cov0_index(&self, i: usize, j: usize, mi: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        (self.p + pair_index(self.p, i, j)) * self.nd() + mi
    }

    /// Index holding `C^m_ij(mℓ)` for `i ≠ j`.
    pub fn lagged_index(&self, i: usize, j: usize, mi: usize) -> usize {
        let block = if i < j {
            self.p + self.npairs() + pair_index(self.p, i, j)
        } else {
            self.p + 2 * self.npairs() + pair_index(self.p, j, i)
        };
        block * self.nd() + mi
    }

    /// `C^{m}_ii(0)` for the `mi`-th dilation.
    pub fn var(&self, i: usize, mi: usize) -> f64 {
        self.entries[self.var_index(i, mi)]
    }

    pub fn cov0(&self, i: usize, j: usize, mi: usize) -> f64 {
        if i == j {
            self.var(i, mi)
        } else {
            self.entries[self.cov0_index(i, j, mi)]
        }
    }

    pub fn lagged(&self, i: usize, j: usize, mi: usize) -> f64 {
        self.entries[self.lagged_index(i, j, mi)]
    }

    pub fn descriptors(&self) -> Vec<MomentDescriptor> {
        moment_descriptors(self.p, &self.dilations, self.ell)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `C^m_ij(h) = (1/(N−h)) Σ_t x^m_i(t) x^m_j(t+h)` over the valid support of
/// `series` (one filtered vector per component); negative lags swap `i`, `j`.
pub fn empirical_cov(series: &[Vec<f64>], i: usize, j: usize, h: i64, min_terms: usize) -> Result<f64> {
    let (i, j, h) = if h < 0 { (j, i, (-h) as usize) } else { (i, j, h as usize) };
    let len = series[i].len();
    if len < h + min_terms.max(1) {
        return Err(MfbmError::InsufficientData(format!(
            "only {} products available at lag {h}, need {min_terms}",
            len.saturating_sub(h)
        )));
    }
    let terms = len - h;
    let xi = &series[i][..terms];
    let xj = &series[j][h..];
    let sum: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
    Ok(sum / terms as f64)
}

/// Empirical moment vector `C_n` of an `n × p` path.
pub fn compute_moment_vector(values: &DMatrix<f64>, config: &EstimationConfig) -> Result<MomentVector> {
    config.check()?;
    let n = values.nrows();
    let p = values.ncols();
    if p == 0 {
        return Err(MfbmError::DimensionMismatch("path has no components".into()));
    }
    let ell = config.filter.ell;
    let max_m = *config.dilations.last().expect("nonempty");
    if n <= 2 * max_m * ell {
        return Err(MfbmError::InsufficientData(format!(
            "n = {n} must exceed 2·max(ℳ)·ℓ = {}",
            2 * max_m * ell
        )));
    }
    let filtered = config
        .dilations
        .iter()
        .map(|&m| apply_filter(values, &dilate(&config.filter, m)?))
        .collect::<Result<Vec<_>>>()?;
    let entries = moment_descriptors(p, &config.dilations, ell)
        .into_iter()
        .map(|d| {
            let mi = config.dilations.iter().position(|&m| m == d.m).expect("dilation");
            empirical_cov(&filtered[mi].components, d.a, d.b, d.lag as i64, config.min_terms)
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 0..p {
        for (mi, fs) in filtered.iter().enumerate() {
            let v = entries[i * config.dilations.len() + mi];
            if v <= 0.0 || !v.is_finite() {
                return Err(MfbmError::InsufficientData(format!(
                    "filtered variance of component {} at dilation {} is {v}; the path is degenerate",
                    i + 1,
                    fs.m
                )));
            }
        }
    }
    Ok(MomentVector {
        p,
        dilations: config.dilations.clone(),
        ell,
        entries,
        n_used: n,
    })
}

/// The moments `γ(θ)` that `C_n` estimates.
pub fn theoretical_moment_vector(params: &MfbmParams, config: &EstimationConfig) -> Result<MomentVector> {
    config.check()?;
    params.check_dimensions()?;
    let p = params.p();
    let ell = config.filter.ell;
    let entries = moment_descriptors(p, &config.dilations, ell)
        .into_iter()
        .map(|d| theoretical_filtered_cov(params, &config.filter, d.a, d.b, d.m, d.m, d.lag as i64))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentVector {
        p,
        dilations: config.dilations.clone(),
        ell,
        entries,
        n_used: 0,
    })
}

/// Log-regression observations. `c[i][j][mi]` and `d[i][j][mi]` are symmetric
/// in `(i, j)`; diagonals are unused and zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionInputs {
    pub log_m: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub c: Vec<Vec<Vec<f64>>>,
    pub d: Vec<Vec<Vec<f64>>>,
    /// Pairs whose `c` needed the log floor.
    pub unreliable_c: Vec<(usize, usize)>,
    /// Pairs whose `d` needed the log floor.
    pub unreliable_d: Vec<(usize, usize)>,
}

fn floored_log(x: f64) -> (f64, bool) {
    let a = x.abs();
    if a < LOG_FLOOR || !a.is_finite() {
        (LOG_FLOOR.ln(), true)
    } else {
        (a.ln(), false)
    }
}

pub fn regression_inputs(mv: &MomentVector, config: &EstimationConfig) -> Result<RegressionInputs> {
    let p = mv.p;
    let nd = mv.dilations.len();
    let mut v = vec![vec![0.0; nd]; p];
    for (i, row) in v.iter_mut().enumerate() {
        for (mi, slot) in row.iter_mut().enumerate() {
            let var = mv.var(i, mi);
            if var <= 0.0 || !var.is_finite() {
                return Err(MfbmError::InsufficientData(format!(
                    "nonpositive filtered variance for component {}",
                    i + 1
                )));
            }
            *slot = var.ln();
        }
    }
    let mut c = vec![vec![vec![0.0; nd]; p]; p];
    let mut d = vec![vec![vec![0.0; nd]; p]; p];
    let mut unreliable_c = Vec::new();
    let mut unreliable_d = Vec::new();
    for (i, j) in pairs(p) {
        let (mut bad_c, mut bad_d) = (false, false);
        for mi in 0..nd {
            let (lc, fc) = floored_log(mv.cov0(i, j, mi));
            let (ld, fd) = floored_log(0.5 * (mv.lagged(i, j, mi) - mv.lagged(j, i, mi)));
            c[i][j][mi] = lc;
            c[j][i][mi] = lc;
            d[i][j][mi] = ld;
            d[j][i][mi] = ld;
            bad_c |= fc;
            bad_d |= fd;
        }
        if bad_c {
            unreliable_c.push((i, j));
        }
        if bad_d {
            unreliable_d.push((i, j));
        }
    }
    if config.weights.c > 0.0 && !unreliable_c.is_empty() {
        log::warn!("lag-0 cross-covariances vanish for pairs {unreliable_c:?}; c-weighted H is unreliable");
    }
    if config.weights.d > 0.0 && !unreliable_d.is_empty() {
        log::warn!("asymmetry differences vanish for pairs {unreliable_d:?}; d-weighted H is unreliable");
    }
    Ok(RegressionInputs {
        log_m: config.log_dilations(),
        v,
        c,
        d,
        unreliable_c,
        unreliable_d,
    })
}

fn centered(log_m: &[f64]) -> (Vec<f64>, f64) {
    let mean = log_m.iter().sum::<f64>() / log_m.len() as f64;
    (log_m.iter().map(|l| l - mean).collect(), mean)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed-form minimizer of the weighted log-regression objective.
///
/// The weights are divided by `w_v` first, so the objective is unchanged and
/// the `w_v = 1` closed form applies.
pub fn estimate_h(inputs: &RegressionInputs, weights: Weights) -> Result<Vec<f64>> {
    weights.check()?;
    let p = inputs.v.len();
    let (lc, _) = centered(&inputs.log_m);
    let sxx = dot(&lc, &lc);
    if inputs.log_m.len() < 2 || sxx <= 0.0 {
        return Err(MfbmError::SingularRegression(
            "at least two distinct dilations are needed".into(),
        ));
    }
    let (wc, wd) = if p == 1 {
        (0.0, 0.0)
    } else {
        (weights.c / weights.v, weights.d / weights.v)
    };
    let w = wc + wd;
    let lambda = 4.0 + (p as f64 - 2.0) * w;
    let r: Vec<f64> = (0..p)
        .map(|k| {
            let mut acc = 2.0 * dot(&lc, &inputs.v[k]);
            for j in (0..p).filter(|&j| j != k) {
                if wc > 0.0 {
                    acc += wc * dot(&lc, &inputs.c[k][j]);
                }
                if wd > 0.0 {
                    acc += wd * dot(&lc, &inputs.d[k][j]);
                }
            }
            acc / sxx
        })
        .collect();
    let total: f64 = r.iter().sum();
    let shrink = w / (lambda * (lambda + p as f64 * w));
    Ok(r.iter().map(|rk| rk / lambda - shrink * total).collect())
}

/// Intercepts `(α, μ, ν)`: means of the observations minus slope times `mean log m`.
pub fn estimate_intercepts(
    inputs: &RegressionInputs,
    h_hat: &[f64],
) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let p = h_hat.len();
    let (_, lbar) = centered(&inputs.log_m);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let alpha = (0..p).map(|i| mean(&inputs.v[i]) - 2.0 * h_hat[i] * lbar).collect();
    let mut mu = DMatrix::zeros(p, p);
    let mut nu = DMatrix::zeros(p, p);
    for (i, j) in pairs(p) {
        let slope = (h_hat[i] + h_hat[j]) * lbar;
        mu[(i, j)] = mean(&inputs.c[i][j]) - slope;
        nu[(i, j)] = mean(&inputs.d[i][j]) - slope;
        mu[(j, i)] = mu[(i, j)];
        nu[(j, i)] = nu[(i, j)];
    }
    (alpha, mu, nu)
}

fn pi_checked(hi: f64, hj: f64, filter: &Filter, h: i64) -> Result<f64> {
    let v = pi_a(hi, hj, filter, h);
    if !v.is_finite() || (h == 0 && v <= 0.0) {
        return Err(MfbmError::DegenerateFilter(format!(
            "π({hi:.4}, {hj:.4}; {h}) = {v} for filter `{}`",
            filter.name
        )));
    }
    Ok(v)
}

/// `σ̂²_i = exp(α̂_i) / π^a_ii(0)` with `π` evaluated at `Ĥ`.
pub fn estimate_sigma2(alpha_hat: &[f64], h_hat: &[f64], filter: &Filter) -> Result<Vec<f64>> {
    alpha_hat
        .iter()
        .zip(h_hat)
        .map(|(a, &h)| Ok(a.exp() / pi_checked(h, h, filter, 0)?))
        .collect()
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut log_sum, mut count) = (0.0, 0usize);
    for v in values {
        if v == 0.0 {
            return 0.0;
        }
        log_sum += v.ln();
        count += 1;
    }
    (log_sum / count as f64).exp()
}

fn sign_of(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Correlations from normalized lag-0 cross-covariances (geometric mean over ℳ).
pub fn estimate_rho(mv: &MomentVector, h_hat: &[f64], config: &EstimationConfig) -> Result<DMatrix<f64>> {
    let p = mv.p;
    let nd = mv.dilations.len();
    let ms = config.sign_index();
    let mut rho = DMatrix::identity(p, p);
    for (i, j) in pairs(p) {
        let gm = geometric_mean((0..nd).map(|mi| {
            mv.cov0(i, j, mi).abs() / (mv.var(i, mi) * mv.var(j, mi)).sqrt()
        }));
        let pii = pi_checked(h_hat[i], h_hat[i], &config.filter, 0)?;
        let pjj = pi_checked(h_hat[j], h_hat[j], &config.filter, 0)?;
        let pij = pi_checked(h_hat[i], h_hat[j], &config.filter, 0)?;
        let value = sign_of(mv.cov0(i, j, ms)) * gm * (pii * pjj).sqrt() / pij;
        rho[(i, j)] = value;
        rho[(j, i)] = value;
    }
    Ok(rho)
}

/// Asymmetry coefficients from `C^m_ij(mℓ) − C^m_ji(mℓ) ≈ −2 m^{H_i+H_j} η_ij σ_iσ_j π^a_ij(ℓ)`.
pub fn estimate_eta(mv: &MomentVector, h_hat: &[f64], config: &EstimationConfig) -> Result<DMatrix<f64>> {
    let p = mv.p;
    let nd = mv.dilations.len();
    let ms = config.sign_index();
    let ell = config.filter.ell as i64;
    let mut eta = DMatrix::zeros(p, p);
    for (i, j) in pairs(p) {
        let diff = |mi: usize| mv.lagged(i, j, mi) - mv.lagged(j, i, mi);
        let gm = geometric_mean((0..nd).map(|mi| {
            diff(mi).abs() / (mv.var(i, mi) * mv.var(j, mi)).sqrt()
        }));
        let pii = pi_checked(h_hat[i], h_hat[i], &config.filter, 0)?;
        let pjj = pi_checked(h_hat[j], h_hat[j], &config.filter, 0)?;
        let pij_l = pi_a(h_hat[i], h_hat[j], &config.filter, ell);
        if pij_l == 0.0 || !pij_l.is_finite() {
            return Err(MfbmError::DegenerateFilter(format!(
                "π_{i}{j}(ℓ) vanishes for filter `{}` at Ĥ = ({:.4}, {:.4})",
                config.filter.name, h_hat[i], h_hat[j]
            )));
        }
        let sign = sign_of(-diff(ms) * pij_l);
        let value = sign * 0.5 * gm * (pii * pjj).sqrt() / pij_l.abs();
        eta[(i, j)] = value;
        eta[(j, i)] = -value;
    }
    Ok(eta)
}

/// Output of the estimator, with the regression observations and configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    #[serde(rename = "H_hat")]
    pub h_hat: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
    pub rho_hat: Vec<Vec<f64>>,
    pub eta_hat: Vec<Vec<f64>>,
    pub alpha_hat: Vec<f64>,
    pub mu_hat: Vec<Vec<f64>>,
    pub nu_hat: Vec<Vec<f64>>,
    pub regression_inputs: RegressionInputs,
    pub n_used: usize,
    pub config: EstimationConfig,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl EstimationResult {
    pub fn p(&self) -> usize {
        self.h_hat.len()
    }

    pub fn rho_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.rho_hat[i][j])
    }

    pub fn eta_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.eta_hat[i][j])
    }

    /// `θ̂ = (H, σ², ρ_pairs, η_pairs)`, pairs `i < j` in row order.
    pub fn theta(&self) -> Vec<f64> {
        let p = self.p();
        let pr = pairs(p);
        let mut out = Vec::with_capacity(2 * p + 2 * pr.len());
        out.extend(&self.h_hat);
        out.extend(&self.sigma2_hat);
        out.extend(pr.iter().map(|&(i, j)| self.rho_hat[i][j]));
        out.extend(pr.iter().map(|&(i, j)| self.eta_hat[i][j]));
        out
    }

    /// Parameter set built from the estimates.
    pub fn to_params(&self) -> Result<MfbmParams> {
        MfbmParams::new(
            self.h_hat.clone(),
            self.sigma2_hat.iter().map(|s| s.sqrt()).collect(),
            self.rho_matrix(),
            self.eta_matrix(),
        )
    }
}

/// Labels matching [`EstimationResult::theta`].
pub fn theta_labels(p: usize) -> Vec<String> {
    let pr = pairs(p);
    let mut out = Vec::new();
    out.extend((1..=p).map(|i| format!("H{i}")));
    out.extend((1..=p).map(|i| format!("sigma2_{i}")));
    out.extend(pr.iter().map(|(i, j)| format!("rho{}{}", i + 1, j + 1)));
    out.extend(pr.iter().map(|(i, j)| format!("eta{}{}", i + 1, j + 1)));
    out
}

/// `θ` of a parameter set in the same order as [`EstimationResult::theta`].
pub fn theta_of(params: &MfbmParams) -> Vec<f64> {
    let p = params.p();
    let pr = pairs(p);
    let mut out = Vec::new();
    out.extend(&params.h);
    out.extend(params.sigma.iter().map(|s| s * s));
    out.extend(pr.iter().map(|&(i, j)| params.rho_ij(i, j)));
    out.extend(pr.iter().map(|&(i, j)| params.eta_ij(i, j)));
    out
}

/// The map `g`: moment vector to parameter estimates.
pub fn estimate_from_moments(mv: &MomentVector, config: &EstimationConfig) -> Result<EstimationResult> {
    config.check()?;
    if mv.dilations != config.dilations || mv.ell != config.filter.ell {
        return Err(MfbmError::DimensionMismatch(
            "moment vector was computed with a different configuration".into(),
        ));
    }
    if mv.entries.len() != moment_dim(mv.p, mv.dilations.len()) {
        return Err(MfbmError::DimensionMismatch(format!(
            "moment vector has {} entries, expected {}",
            mv.entries.len(),
            moment_dim(mv.p, mv.dilations.len())
        )));
    }
    let inputs = regression_inputs(mv, config)?;
    let h_hat = estimate_h(&inputs, config.weights)?;
    let (alpha, mu, nu) = estimate_intercepts(&inputs, &h_hat);
    let sigma2 = estimate_sigma2(&alpha, &h_hat, &config.filter)?;
    let rho = estimate_rho(mv, &h_hat, config)?;
    let eta = estimate_eta(mv, &h_hat, config)?;
    Ok(EstimationResult {
        h_hat,
        sigma2_hat: sigma2,
        rho_hat: rows(&rho),
        eta_hat: rows(&eta),
        alpha_hat: alpha,
        mu_hat: rows(&mu),
        nu_hat: rows(&nu),
        regression_inputs: inputs,
        n_used: mv.n_used,
        config: config.clone(),
    })
}

/// Estimates all parameters from an `n × p` path.
pub fn estimate_all(values: &DMatrix<f64>, config: &EstimationConfig) -> Result<EstimationResult> {
    let mv = compute_moment_vector(values, config)?;
    estimate_from_moments(&mv, config)
}
