//! Parameters of the multivariate fractional Brownian motion and its exact
//! covariance kernels.
//!
//! Components are indexed from 0 in this crate. The process is zero at time 0,
//! component `i` is an fBm with Hurst exponent `h[i]` and variance `sigma[i]^2`
//! at time 1, and the pair `(i, j)` is coupled through the correlation
//! `rho[(i, j)]` and the antisymmetric coefficient `eta[(i, j)]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{MfbmError, Result};

/// Window around `H_i + H_j = 1` inside which the logarithmic branch of the
/// kernel is used.
pub const UNIT_SUM_TOL: f64 = 1e-12;

/// Default relative PSD tolerance (multiplied by the largest eigenvalue magnitude).
pub const DEFAULT_TOL_PSD: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Full parameter set of a `p`-variate mfBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct MfbmParams {
    pub h: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: DMatrix<f64>,
    pub eta: DMatrix<f64>,
}

/// On-disk JSON layout: `{p, H, sigma, rho, eta}`; `eta` may be omitted (zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsDoc {
    p: usize,
    #[serde(rename = "H")]
    h: Vec<f64>,
    sigma: Vec<f64>,
    rho: Vec<Vec<f64>>,
    #[serde(default)]
    eta: Option<Vec<Vec<f64>>>,
}

impl TryFrom<ParamsDoc> for MfbmParams {
    type Error = MfbmError;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        let p = doc.p;
        let rho = rows_to_matrix(&doc.rho, p, "rho")?;
        let eta = match doc.eta {
            Some(rows) => rows_to_matrix(&rows, p, "eta")?,
            None => DMatrix::zeros(p, p),
        };
        MfbmParams::new(doc.h, doc.sigma, rho, eta)
    }
}

impl From<MfbmParams> for ParamsDoc {
    fn from(params: MfbmParams) -> Self {
        ParamsDoc {
            p: params.p(),
            h: params.h.clone(),
            sigma: params.sigma.clone(),
            rho: matrix_to_rows(&params.rho),
            eta: Some(matrix_to_rows(&params.eta)),
        }
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], p: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(MfbmError::DimensionMismatch(format!(
            "`{name}` must be a {p}x{p} matrix"
        )));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl MfbmParams {
    /// Builds a parameter set, checking only that the dimensions agree.
    /// Use [`validate`] for admissibility.
    pub fn new(h: Vec<f64>, sigma: Vec<f64>, rho: DMatrix<f64>, eta: DMatrix<f64>) -> Result<Self> {
        let params = MfbmParams { h, sigma, rho, eta };
        params.check_dimensions()?;
        Ok(params)
    }

    /// Time-reversible parameters (`eta = 0`) with a common off-diagonal correlation.
    pub fn well_balanced(h: Vec<f64>, sigma: Vec<f64>, rho: f64) -> Result<Self> {
        let p = h.len();
        let rho = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
        MfbmParams::new(h, sigma, rho, DMatrix::zeros(p, p))
    }

    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let p = self.h.len();
        if p == 0 {
            return Err(MfbmError::DimensionMismatch("dimension p must be at least 1".into()));
        }
        if self.sigma.len() != p {
            return Err(MfbmError::DimensionMismatch(format!(
                "sigma has {} entries, expected {p}",
                self.sigma.len()
            )));
        }
        for (name, m) in [("rho", &self.rho), ("eta", &self.eta)] {
            if m.nrows() != p || m.ncols() != p {
                return Err(MfbmError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }

    /// `H_i + H_j`.
    #[inline]
    pub fn hsum(&self, i: usize, j: usize) -> f64 {
        self.h[i] + self.h[j]
    }

    /// Correlation with the implicit unit diagonal.
    #[inline]
    pub fn rho_ij(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.rho[(i, j)]
        }
    }

    /// Asymmetry with the implicit zero diagonal.
    #[inline]
    pub fn eta_ij(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.eta[(i, j)]
        }
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when the pair sits on the `H_i + H_j = 1` branch with a nonzero
    /// asymmetry, where the logarithmic kernel differs from the power law.
    pub fn on_log_branch(&self, i: usize, j: usize) -> bool {
        (self.hsum(i, j) - 1.0).abs() <= UNIT_SUM_TOL && self.eta_ij(i, j) != 0.0
    }

    /// Relabels components: component `k` of the result is component `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut seen = vec![false; p];
        if perm.len() != p || perm.iter().any(|&k| k >= p || std::mem::replace(&mut seen[k], true)) {
            return Err(MfbmError::InvalidParameter("not a permutation".into()));
        }
        MfbmParams::new(
            perm.iter().map(|&k| self.h[k]).collect(),
            perm.iter().map(|&k| self.sigma[k]).collect(),
            DMatrix::from_fn(p, p, |a, b| self.rho[(perm[a], perm[b])]),
            DMatrix::from_fn(p, p, |a, b| self.eta[(perm[a], perm[b])]),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub admissible: bool,
    pub min_eigenvalue: f64,
    pub violations: Vec<String>,
}

/// Which off-diagonal form of the existence matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExistenceForm {
    /// `Γ(s+1)(ρ sin(πs/2) − i η cos(πs/2))`, the form used for validation.
    Corrected,
    /// `Γ(s+1)(ρ sin(πs/2) − i η sin(πs/2))`, kept to document the discrepancy.
    AsPrinted,
}

/// Hermitian matrix whose positive semidefiniteness is equivalent to the
/// existence of the process.
pub fn existence_matrix(params: &MfbmParams, form: ExistenceForm) -> DMatrix<Complex64> {
    let p = params.p();
    DMatrix::from_fn(p, p, |i, j| {
        let s = params.hsum(i, j);
        let g = gamma(s + 1.0);
        let half = PI * s / 2.0;
        let eta_factor = match form {
            ExistenceForm::Corrected => half.cos(),
            ExistenceForm::AsPrinted => half.sin(),
        };
        Complex64::new(
            g * params.rho_ij(i, j) * half.sin(),
            -g * params.eta_ij(i, j) * eta_factor,
        )
    })
}

/// Eigenvalues of a Hermitian matrix, ascending, computed through the real
/// symmetric embedding `[[A, -B], [B, A]]` of `A + iB` (every eigenvalue
/// appears twice there).
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let p = m.nrows();
    let real = DMatrix::from_fn(2 * p, 2 * p, |r, c| {
        let (i, j) = (r % p, c % p);
        let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        match (r < p, c < p) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(real).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.into_iter().step_by(2).collect()
}

/// Checks the elementary constraints and the existence condition.
///
/// `tol_psd` is relative: the smallest eigenvalue may be as low as
/// `-tol_psd * max|eigenvalue|`. Dimension mismatches are an error, never a
/// silent `admissible = false`.
pub fn validate_with_tol(params: &MfbmParams, tol_psd: f64) -> Result<ValidityReport> {
    params.check_dimensions()?;
    let p = params.p();
    let mut violations = Vec::new();

    for (i, &h) in params.h.iter().enumerate() {
        if !(h > 0.0 && h < 1.0) {
            violations.push(format!("H[{i}] = {h} outside (0,1)"));
        }
    }
    for (i, &s) in params.sigma.iter().enumerate() {
        if !(s > 0.0 && s.is_finite()) {
            violations.push(format!("sigma[{i}] = {s} must be positive"));
        }
    }
    for i in 0..p {
        if params.rho[(i, i)] != 1.0 {
            violations.push(format!("rho[{i},{i}] = {} must be 1", params.rho[(i, i)]));
        }
        if params.eta[(i, i)] != 0.0 {
            violations.push(format!("eta[{i},{i}] = {} must be 0", params.eta[(i, i)]));
        }
        for j in (i + 1)..p {
            let (r1, r2) = (params.rho[(i, j)], params.rho[(j, i)]);
            if (r1 - r2).abs() > SYMMETRY_TOL {
                violations.push(format!("rho not symmetric at ({i},{j})"));
            }
            if !(r1 > -1.0 && r1 < 1.0) {
                violations.push(format!("rho[{i},{j}] = {r1} outside (-1,1)"));
            }
            let (e1, e2) = (params.eta[(i, j)], params.eta[(j, i)]);
            if (e1 + e2).abs() > SYMMETRY_TOL {
                violations.push(format!("eta not antisymmetric at ({i},{j})"));
            }
            if !e1.is_finite() {
                violations.push(format!("eta[{i},{j}] is not finite"));
            }
        }
    }

    let ev = hermitian_eigenvalues(&existence_matrix(params, ExistenceForm::Corrected));
    let min_eigenvalue = ev.first().copied().unwrap_or(f64::NAN);
    let scale = ev.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
    if min_eigenvalue.is_nan() || min_eigenvalue < -tol_psd * scale {
        violations.push(format!(
            "existence matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})"
        ));
    }

    Ok(ValidityReport {
        admissible: violations.is_empty(),
        min_eigenvalue,
        violations,
    })
}

pub fn validate(params: &MfbmParams) -> Result<ValidityReport> {
    validate_with_tol(params, DEFAULT_TOL_PSD)
}

/// Fails with [`MfbmError::Inadmissible`] unless `params` is admissible.
pub fn ensure_admissible(params: &MfbmParams) -> Result<()> {
    let report = validate(params)?;
    if report.admissible {
        Ok(())
    } else {
        Err(MfbmError::Inadmissible {
            min_eigenvalue: report.min_eigenvalue,
            violations: report.violations,
        })
    }
}

/// `|u|^s`, with `|0|^s = 0`.
#[inline]
pub(crate) fn abs_pow(u: f64, s: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(s)
    }
}

/// The kernel `w` for correlation `rho`, asymmetry `eta` and exponent sum `s`.
#[inline]
pub fn w_kernel(rho: f64, eta: f64, s: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    if (s - 1.0).abs() <= UNIT_SUM_TOL {
        rho * h.abs() + eta * h * h.abs().ln()
    } else {
        (rho - eta * h.signum()) * h.abs().powf(s)
    }
}

/// `w_ij(h)`.
pub fn w_func(params: &MfbmParams, i: usize, j: usize, h: f64) -> f64 {
    w_kernel(params.rho_ij(i, j), params.eta_ij(i, j), params.hsum(i, j), h)
}

/// `E[x_i(s) x_j(t)]`.
pub fn cross_cov(params: &MfbmParams, i: usize, j: usize, s: f64, t: f64) -> f64 {
    let half = 0.5 * params.sigma[i] * params.sigma[j];
    half * (w_func(params, i, j, -s) + w_func(params, i, j, t) - w_func(params, i, j, t - s))
}

/// `E[Δx_i(t) Δx_j(t+h)]` for unit increments `Δx(t) = x(t+1) - x(t)`.
pub fn increment_cov(params: &MfbmParams, i: usize, j: usize, h: i64) -> f64 {
    let half = 0.5 * params.sigma[i] * params.sigma[j];
    let h = h as f64;
    half * (w_func(params, i, j, h - 1.0) - 2.0 * w_func(params, i, j, h)
        + w_func(params, i, j, h + 1.0))
}

/// Even and odd parts of the unit-increment kernel for exponent sum `s`, so that
/// `increment_cov(i, j, h) = σ_iσ_j (ρ_ij·even − η_ij·odd)`.
pub fn increment_kernel_parts(s: f64, h: i64) -> (f64, f64) {
    let h = h as f64;
    let second_diff = |f: &dyn Fn(f64) -> f64| 0.5 * (f(h - 1.0) - 2.0 * f(h) + f(h + 1.0));
    let even = second_diff(&|u| w_kernel(1.0, 0.0, s, u));
    // w_kernel(0, 1, s, u) = -odd-part of w
    let odd = -second_diff(&|u| w_kernel(0.0, 1.0, s, u));
    (even, odd)
}

/// Large-lag equivalent `½ σ_iσ_j |h|^{s-2} (ρ_ij − η_ij sign h) s (s−1)`,
/// the second derivative of `w_ij` scaled like [`increment_cov`].
///
/// On the `s = 1` branch the coefficient of the asymmetric part is not
/// available, so a nonzero `η_ij` there is rejected; with `η_ij = 0` the
/// equivalent is the continuous limit, zero.
pub fn increment_cov_asymptote(params: &MfbmParams, i: usize, j: usize, h: f64) -> Result<f64> {
    if params.on_log_branch(i, j) {
        return Err(MfbmError::Unsupported(format!(
            "asymptote for H_{i}+H_{j} = 1 with nonzero eta"
        )));
    }
    let s = params.hsum(i, j);
    Ok(params.sigma[i]
        * params.sigma[j]
        * h.abs().powf(s - 2.0)
        * (params.rho_ij(i, j) - params.eta_ij(i, j) * h.signum())
        * s
        * (s - 1.0)
        * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        pub fn close(a: f64, b: f64, rel: f64) -> bool {
            (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
        }
    }

    fn pair(h: (f64, f64), rho: f64, eta: f64) -> MfbmParams {
        let mut params = MfbmParams::well_balanced(vec![h.0, h.1], vec![1.0, 1.0], rho).unwrap();
        params.eta[(0, 1)] = eta;
        params.eta[(1, 0)] = -eta;
        params
    }

    #[test]
    fn scalar_brownian_is_admissible() {
        let params = MfbmParams::well_balanced(vec![0.5], vec![1.0], 0.0).unwrap();
        let report = validate(&params).unwrap();
        assert!(report.admissible);
        // Γ(2) sin(π/2) = 1
        assert!((report.min_eigenvalue - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_correlation_with_distant_exponents_is_rejected() {
        let report = validate(&pair((0.3, 0.8), 0.9, 0.0)).unwrap();
        assert!(!report.admissible);
        assert!(report.min_eigenvalue < 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut params = pair((0.3, 0.4), 0.1, 0.0);
        params.sigma.push(1.0);
        assert!(matches!(validate(&params), Err(MfbmError::DimensionMismatch(_))));
    }

    #[test]
    fn elementary_violations_are_listed() {
        let mut params = pair((0.3, 1.2), 0.1, 0.0);
        params.rho[(1, 0)] = 0.2;
        params.eta[(0, 1)] = 0.1;
        let report = validate(&params).unwrap();
        assert!(!report.admissible);
        assert!(report.violations.len() >= 3, "{:?}", report.violations);
    }

    #[test]
    fn printed_and_corrected_forms_differ_only_through_eta() {
        let balanced = pair((0.2, 0.6), 0.3, 0.0);
        let a = existence_matrix(&balanced, ExistenceForm::Corrected);
        let b = existence_matrix(&balanced, ExistenceForm::AsPrinted);
        assert_eq!(a, b);
        let skewed = pair((0.2, 0.6), 0.3, 0.2);
        let a = existence_matrix(&skewed, ExistenceForm::Corrected);
        let b = existence_matrix(&skewed, ExistenceForm::AsPrinted);
        assert_ne!(a[(0, 1)].im, b[(0, 1)].im);
        assert_eq!(a[(0, 1)].re, b[(0, 1)].re);
    }

    #[test]
    fn hermitian_eigenvalues_of_known_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
            ],
        );
        let ev = hermitian_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn w_func_examples() {
        let params = pair((0.5, 0.6), 0.4, 0.2);
        assert_eq!(w_func(&params, 0, 0, 1.0), 1.0);
        assert_eq!(w_func(&params, 0, 1, 0.0), 0.0);
        let expected = (0.4 + 0.2) * 2f64.powf(1.1);
        assert!(close(w_func(&params, 0, 1, -2.0), expected, 1e-14));
        // log branch with 0 log 0 = 0
        let log_pair = pair((0.3, 0.7), 0.4, 0.2);
        assert_eq!(w_func(&log_pair, 0, 1, 0.0), 0.0);
        assert!(close(w_func(&log_pair, 0, 1, 2.0), 0.4 * 2.0 + 0.2 * 2.0 * 2f64.ln(), 1e-14));
    }

    #[test]
    fn cross_cov_examples() {
        let mut params = pair((0.3, 0.7), 0.35, 0.1);
        params.sigma = vec![2.0, 0.5];
        assert!(close(cross_cov(&params, 0, 0, 1.0, 1.0), 4.0, 1e-14));
        assert!(close(cross_cov(&params, 0, 1, 1.0, 1.0), 2.0 * 0.5 * 0.35, 1e-14));
        assert_eq!(cross_cov(&params, 0, 1, 0.0, 3.0), 0.0);
        assert_eq!(cross_cov(&params, 1, 0, 2.5, 0.0), 0.0);
    }

    #[test]
    fn increment_cov_examples() {
        let params = MfbmParams::well_balanced(vec![0.5, 0.7], vec![1.5, 1.0], 0.2).unwrap();
        assert!(close(increment_cov(&params, 0, 0, 0), 2.25, 1e-14));
        for h in [-3, -1, 1, 2, 17] {
            assert!(increment_cov(&params, 0, 0, h).abs() < 1e-12);
        }
    }

    #[test]
    fn increment_cov_matches_asymptote_at_large_lag() {
        let params = pair((0.2, 0.7), 0.3, 0.15);
        for h in [10_000i64, -10_000] {
            let exact = increment_cov(&params, 0, 1, h);
            let asym = increment_cov_asymptote(&params, 0, 1, h as f64).unwrap();
            assert!(close(exact, asym, 0.05), "{exact} vs {asym}");
        }
    }

    #[test]
    fn asymptote_special_cases() {
        let bm = MfbmParams::well_balanced(vec![0.5], vec![1.0], 0.0).unwrap();
        assert_eq!(increment_cov_asymptote(&bm, 0, 0, 7.0).unwrap(), 0.0);
        let balanced = pair((0.2, 0.7), 0.3, 0.0);
        let a = increment_cov_asymptote(&balanced, 0, 1, 50.0).unwrap();
        let b = increment_cov_asymptote(&balanced, 0, 1, -50.0).unwrap();
        assert_eq!(a, b);
        let log_pair = pair((0.4, 0.6), 0.3, 0.1);
        assert!(matches!(
            increment_cov_asymptote(&log_pair, 0, 1, 5.0),
            Err(MfbmError::Unsupported(_))
        ));
    }

    #[test]
    fn kernel_parts_reassemble_increment_cov() {
        for (h, eta) in [((0.2, 0.7), 0.15), ((0.4, 0.6), 0.2), ((0.8, 0.9), -0.05)] {
            let mut params = pair(h, 0.3, eta);
            params.sigma = vec![1.3, 0.7];
            let s = params.hsum(0, 1);
            for lag in -5..=5 {
                let (e, o) = increment_kernel_parts(s, lag);
                let rebuilt = 1.3 * 0.7 * (0.3 * e - eta * o);
                assert!((rebuilt - increment_cov(&params, 0, 1, lag)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{"p":2,"H":[0.3,0.8],"sigma":[2,1],"rho":[[1,0.4],[0.4,1]]}"#;
        let params = MfbmParams::from_json(text).unwrap();
        assert_eq!(params.eta, DMatrix::zeros(2, 2));
        let back = MfbmParams::from_json(&params.to_json().unwrap()).unwrap();
        assert_eq!(back, params);
        let bad = r#"{"p":3,"H":[0.3,0.8],"sigma":[2,1],"rho":[[1,0.4],[0.4,1]]}"#;
        assert!(MfbmParams::from_json(bad).is_err());
    }
}
