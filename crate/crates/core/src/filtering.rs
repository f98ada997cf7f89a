//! Finite filters with vanishing moments, their dilations, and the exact
//! covariances of filtered mfBm paths.

// Published tap tables keep their full printed precision.
#![allow(clippy::excessive_precision)]

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MfbmError, Result};
use crate::model::{abs_pow, w_func, MfbmParams};

/// Relative tolerance on the vanishing-moment sums, scaled by `Σ|a_k| ℓ^l`.
const MOMENT_TOL: f64 = 1e-10;

// High-pass Daubechies taps, unit energy, positive first non-vanishing moment.
const DB2: [f64; 2] = [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB4: [f64; 4] = [
    0.48296291314453414337,
    -0.83651630373780790558,
    0.22414386804201338103,
    0.12940952255126038117,
];
const DB6: [f64; 6] = [
    -0.332670552950082616,
    0.80689150931109257649,
    -0.4598775021184915701,
    -0.1350110200102545887,
    0.085441273882026661693,
    0.035226291885709536603,
];
const DB8: [f64; 8] = [
    0.23037781330889650086,
    -0.71484657055291564709,
    0.63088076792985890788,
    0.027983769416859854211,
    -0.18703481171909308408,
    -0.030841381835560763627,
    0.032883011666885199735,
    0.010597401785069032105,
];
const DB10: [f64; 10] = [
    -0.16010239797419291448,
    0.60382926979718967054,
    -0.72430852843777292773,
    0.13842814590132073151,
    0.24229488706638203186,
    -0.032244869584638374648,
    -0.077571493840045713523,
    -0.0062414902127982742742,
    0.012580751999081999469,
    0.003335725285473771278,
];
const DB12: [f64; 12] = [
    0.11154074335010946362,
    -0.49462389039845308568,
    0.75113390802109535068,
    -0.31525035170919762909,
    -0.22626469396543982008,
    0.12976686756726193556,
    0.097501605587323049102,
    -0.027522865530305728626,
    -0.031582039317486029565,
    -0.00055384220116149613925,
    0.0047772575109455106396,
    0.0010773010853084795649,
];

/// Names accepted by [`make_filter`] (`diffK` also accepts any `K >= 1`).
pub const BUILTIN_FILTERS: [&str; 9] =
    ["diff1", "diff2", "diff3", "db2", "db4", "db6", "db8", "db10", "db12"];

/// Filter `a_0..a_ℓ` with exactly `q` vanishing moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub name: String,
    pub taps: Vec<f64>,
    pub ell: usize,
    pub q: usize,
}

/// `Σ_k k^l a_k`.
pub fn moment(taps: &[f64], l: u32) -> f64 {
    taps.iter()
        .enumerate()
        .map(|(k, a)| a * (k as f64).powi(l as i32))
        .sum()
}

fn moment_vanishes(taps: &[f64], l: u32) -> bool {
    let ell = (taps.len() - 1).max(1) as f64;
    let scale: f64 = taps.iter().map(|a| a.abs()).sum::<f64>() * ell.powi(l as i32);
    moment(taps, l).abs() <= MOMENT_TOL * scale
}

impl Filter {
    /// Builds a filter and infers its order `q` (number of leading vanishing
    /// moments). Filters with `q = 0` are rejected.
    pub fn from_taps(name: impl Into<String>, taps: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if taps.len() < 2 || taps.iter().any(|a| !a.is_finite()) {
            return Err(MfbmError::DegenerateFilter(format!(
                "`{name}` needs at least two finite taps"
            )));
        }
        if taps[0] == 0.0 || taps[taps.len() - 1] == 0.0 {
            return Err(MfbmError::DegenerateFilter(format!(
                "`{name}` must have nonzero first and last taps"
            )));
        }
        let ell = taps.len() - 1;
        let q = (0..=ell as u32).take_while(|&l| moment_vanishes(&taps, l)).count();
        if q == 0 {
            return Err(MfbmError::DegenerateFilter(format!(
                "`{name}` does not sum to zero"
            )));
        }
        if q > ell {
            return Err(MfbmError::DegenerateFilter(format!("`{name}` is identically zero")));
        }
        Ok(Filter { name, taps, ell, q })
    }

    /// Like [`Filter::from_taps`] but also checks a declared order.
    pub fn with_order(name: impl Into<String>, taps: Vec<f64>, q: usize) -> Result<Self> {
        let filter = Filter::from_taps(name, taps)?;
        if filter.q != q {
            return Err(MfbmError::DegenerateFilter(format!(
                "`{}` has {} vanishing moments, declared {q}",
                filter.name, filter.q
            )));
        }
        Ok(filter)
    }

    /// Custom filter from a JSON array of taps.
    pub fn from_json(name: impl Into<String>, text: &str) -> Result<Self> {
        let taps: Vec<f64> = serde_json::from_str(text)?;
        Filter::from_taps(name, taps)
    }

    /// `Σ_k k^q a_k`, nonzero by construction.
    pub fn leading_moment(&self) -> f64 {
        moment(&self.taps, self.q as u32)
    }
}

/// Builtin filter bank: `diffK` is the K-fold difference `(1,-1)^{*K}`, `dbN`
/// the N-tap Daubechies high-pass filter (`q = N/2`), scaled to unit energy
/// with a positive q-th moment.
pub fn make_filter(name: &str) -> Result<Filter> {
    if let Some(k) = name.strip_prefix("diff") {
        let k: usize = k.parse().map_err(|_| MfbmError::UnknownFilter(name.into()))?;
        if k == 0 || k > 16 {
            return Err(MfbmError::UnknownFilter(name.into()));
        }
        let mut taps = vec![1.0];
        for _ in 0..k {
            let mut next = vec![0.0; taps.len() + 1];
            for (idx, a) in taps.iter().enumerate() {
                next[idx] += a;
                next[idx + 1] -= a;
            }
            taps = next;
        }
        return Filter::with_order(name, taps, k);
    }
    let (taps, q): (&[f64], usize) = match name {
        "db2" | "haar" => (&DB2, 1),
        "db4" => (&DB4, 2),
        "db6" => (&DB6, 3),
        "db8" => (&DB8, 4),
        "db10" => (&DB10, 5),
        "db12" => (&DB12, 6),
        _ => return Err(MfbmError::UnknownFilter(name.into())),
    };
    Filter::with_order(name, taps.to_vec(), q)
}

/// Filter oversampled by `m` (m−1 zeros between taps).
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedFilter {
    pub base: Filter,
    pub m: usize,
    pub taps: Vec<f64>,
}

pub fn dilate(filter: &Filter, m: usize) -> Result<DilatedFilter> {
    if m == 0 {
        return Err(MfbmError::InvalidParameter("dilation must be >= 1".into()));
    }
    let mut taps = vec![0.0; m * filter.ell + 1];
    for (k, a) in filter.taps.iter().enumerate() {
        taps[k * m] = *a;
    }
    Ok(DilatedFilter {
        base: filter.clone(),
        m,
        taps,
    })
}

impl DilatedFilter {
    /// Support length `mℓ`.
    pub fn span(&self) -> usize {
        self.m * self.base.ell
    }
}

/// `x^m_i(t) = Σ_k a^m_k x_i(t−k)` for `t = mℓ+1..n` (1-based), one vector per component.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSeries {
    pub m: usize,
    /// `mℓ`: the value at vector index `s` is `x^m(mℓ + 1 + s)`.
    pub span: usize,
    pub n: usize,
    pub components: Vec<Vec<f64>>,
}

impl FilteredSeries {
    pub fn len(&self) -> usize {
        self.n - self.span
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Valid-support convolution of every column of the `n × p` matrix `values`.
pub fn apply_filter(values: &DMatrix<f64>, df: &DilatedFilter) -> Result<FilteredSeries> {
    let n = values.nrows();
    let span = df.span();
    if n <= span {
        return Err(MfbmError::InsufficientData(format!(
            "path of length {n} is too short for a filter of span {span}"
        )));
    }
    let nonzero: Vec<(usize, f64)> = df
        .base
        .taps
        .iter()
        .enumerate()
        .map(|(k, &a)| (k * df.m, a))
        .collect();
    let components = (0..values.ncols())
        .map(|c| {
            let col = values.column(c);
            (span..n)
                .map(|t| nonzero.iter().map(|&(k, a)| a * col[t - k]).sum())
                .collect()
        })
        .collect();
    Ok(FilteredSeries {
        m: df.m,
        span,
        n,
        components,
    })
}

/// `π^a(h) = −½ Σ_{k,l} a_k a_l |h+k−l|^{H_i+H_j}`.
pub fn pi_a(hi: f64, hj: f64, filter: &Filter, h: i64) -> f64 {
    let s = hi + hj;
    let a = &filter.taps;
    let mut acc = 0.0;
    for (k, ak) in a.iter().enumerate() {
        for (l, al) in a.iter().enumerate() {
            acc += ak * al * abs_pow((h + k as i64 - l as i64) as f64, s);
        }
    }
    -0.5 * acc
}

/// `E[x^{m1}_i(t) x^{m2}_j(t+h)]`.
///
/// The pair must not sit on the `H_i + H_j = 1` branch with a nonzero asymmetry.
pub fn theoretical_filtered_cov(
    params: &MfbmParams,
    filter: &Filter,
    i: usize,
    j: usize,
    m1: usize,
    m2: usize,
    h: i64,
) -> Result<f64> {
    if params.on_log_branch(i, j) {
        return Err(MfbmError::Unsupported(format!(
            "filtered covariance for H_{i}+H_{j} = 1 with nonzero eta"
        )));
    }
    Ok(filtered_cov_unchecked(params, filter, i, j, m1, m2, h))
}

pub(crate) fn filtered_cov_unchecked(
    params: &MfbmParams,
    filter: &Filter,
    i: usize,
    j: usize,
    m1: usize,
    m2: usize,
    h: i64,
) -> f64 {
    let a = &filter.taps;
    let mut acc = 0.0;
    for (k, ak) in a.iter().enumerate() {
        for (l, al) in a.iter().enumerate() {
            let lag = h + (m1 * k) as i64 - (m2 * l) as i64;
            acc += ak * al * w_func(params, i, j, lag as f64);
        }
    }
    -0.5 * params.sigma[i] * params.sigma[j] * acc
}

/// Whether `q > H_max + 1/(2α)`, the condition under which every filtered
/// (cross-)covariance is `α`-summable.
pub fn summability_order(filter: &Filter, h_max: f64, alpha: u32) -> bool {
    filter.q as f64 > h_max + 1.0 / (2.0 * alpha as f64)
}
