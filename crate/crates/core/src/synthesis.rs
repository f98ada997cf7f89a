//! Exact synthesis of sampled mfBm paths.
//!
//! Two samplers share one contract: a path observed at `t = 1..n`, zero-mean
//! Gaussian with the covariance of [`crate::model::cross_cov`].
//!
//! * [`ExactSampler`] factors the dense `np × np` covariance (Cholesky). It is
//!   the reference, limited by the memory guard.
//! * [`CirculantSampler`] embeds the matrix-valued increment covariance in a
//!   block-circulant matrix of size `M = 2N`, `N >= n` a power of two, whose
//!   blocks are diagonalized by the FFT. Each frequency contributes a `p × p`
//!   Hermitian spectral matrix that must be positive semidefinite; when it is
//!   not, the embedding is doubled (up to 4×) before falling back to the dense
//!   sampler.
//!
//! Random numbers come from [`SampleRng`] (ChaCha20, `rand_chacha` 0.9) seeded
//! with `seed_from_u64`; replication `r` of a seeded experiment uses
//! [`replication_seed`]`(seed, r) = seed ^ r`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{MfbmError, Result};
use crate::model::{cross_cov, ensure_admissible, increment_kernel_parts, MfbmParams};

pub type SampleRng = ChaCha20Rng;

/// Human-readable RNG identification written into experiment outputs.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64)";

/// Default cap on `n·p` for dense covariance matrices.
pub const DEFAULT_COVARIANCE_CAP: usize = 20_000;

/// Spectral factors are cached when `p²·(M/2+1)` stays below this many entries.
const FACTOR_CACHE_LIMIT: usize = 1 << 23;

const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Relative tolerance for negative eigenvalues of the spectral matrices.
const SPECTRAL_NEG_TOL: f64 = 1e-9;

pub fn replication_seed(seed: u64, replication: u64) -> u64 {
    seed ^ replication
}

/// `n × p` path sampled at `t = 1..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub values: DMatrix<f64>,
    /// Present when the path was synthesized.
    pub params_used: Option<MfbmParams>,
    pub seed: Option<u64>,
}

impl SamplePath {
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MfbmError::InsufficientData("empty path".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfbmError::Format("path contains non-finite values".into()));
        }
        Ok(SamplePath {
            values,
            params_used: None,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// Anything that can draw a path from a seed.
pub trait PathSampler: Send + Sync {
    fn sample(&self, seed: u64) -> SamplePath;
    fn n(&self) -> usize;
    fn params(&self) -> &MfbmParams;
}

/// Dense covariance of the sampled path. Entry `(i·n + s−1, j·n + t−1)` is
/// `E[x_i(s) x_j(t)]`: component-major blocks, time ascending inside a block.
pub fn build_path_covariance(params: &MfbmParams, n: usize) -> Result<DMatrix<f64>> {
    build_path_covariance_capped(params, n, DEFAULT_COVARIANCE_CAP)
}

pub fn build_path_covariance_capped(
    params: &MfbmParams,
    n: usize,
    cap: usize,
) -> Result<DMatrix<f64>> {
    params.check_dimensions()?;
    let p = params.p();
    let dim = n * p;
    if n == 0 {
        return Err(MfbmError::InvalidParameter("n must be positive".into()));
    }
    if dim > cap {
        return Err(MfbmError::InvalidParameter(format!(
            "n·p = {dim} exceeds the dense covariance cap {cap}"
        )));
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for i in 0..p {
        for j in i..p {
            for s in 0..n {
                for t in 0..n {
                    let v = cross_cov(params, i, j, (s + 1) as f64, (t + 1) as f64);
                    cov[(i * n + s, j * n + t)] = v;
                    cov[(j * n + t, i * n + s)] = v;
                }
            }
        }
    }
    Ok(cov)
}

/// Dense Cholesky sampler.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    params: MfbmParams,
    n: usize,
    factor: DMatrix<f64>,
    pub jitter: f64,
}

impl ExactSampler {
    pub fn new(params: &MfbmParams, n: usize) -> Result<Self> {
        Self::with_cap(params, n, DEFAULT_COVARIANCE_CAP)
    }

    pub fn with_cap(params: &MfbmParams, n: usize, cap: usize) -> Result<Self> {
        ensure_admissible(params)?;
        let cov = build_path_covariance_capped(params, n, cap)?;
        let dim = cov.nrows();
        let base = cov.trace() / dim as f64;
        for rung in JITTER_LADDER {
            let jitter = rung * base;
            let mut shifted = cov.clone();
            for d in 0..dim {
                shifted[(d, d)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                if rung > 0.0 {
                    log::debug!("dense covariance needed jitter {jitter:e}");
                }
                return Ok(ExactSampler {
                    params: params.clone(),
                    n,
                    factor: chol.unpack(),
                    jitter,
                });
            }
        }
        let min_ev = SymmetricEigen::new(cov).eigenvalues.min();
        Err(MfbmError::Numerical(format!(
            "Cholesky failed after maximal jitter; min eigenvalue {min_ev:.3e}"
        )))
    }
}

impl PathSampler for ExactSampler {
    fn sample(&self, seed: u64) -> SamplePath {
        let p = self.params.p();
        let dim = self.n * p;
        let mut rng = SampleRng::seed_from_u64(seed);
        let z = nalgebra::DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let x = &self.factor * z;
        let values = DMatrix::from_fn(self.n, p, |t, i| x[i * self.n + t]);
        SamplePath {
            values,
            params_used: Some(self.params.clone()),
            seed: Some(seed),
        }
    }

    fn n(&self) -> usize {
        self.n
    }

    fn params(&self) -> &MfbmParams {
        &self.params
    }
}

pub fn sample_exact(params: &MfbmParams, n: usize, seed: u64) -> Result<SamplePath> {
    Ok(ExactSampler::new(params, n)?.sample(seed))
}

/// Circulant embedding with the spectral matrices' building blocks.
///
/// For every distinct exponent sum `s = H_i + H_j` the even and odd parts of
/// the increment kernel are embedded and transformed once, so that
/// `Λ_ij(f) = σ_iσ_j (ρ_ij E_s(f) − i η_ij O_s(f))`.
struct SpectralTables {
    p: usize,
    half: usize,
    sigma: Vec<f64>,
    rho: DMatrix<f64>,
    eta: DMatrix<f64>,
    sum_index: DMatrix<usize>,
    even: Vec<Vec<f64>>,
    odd: Vec<Vec<f64>>,
    neg_tol: f64,
}

impl SpectralTables {
    fn new(params: &MfbmParams, big_n: usize) -> Self {
        let p = params.p();
        let m_size = 2 * big_n;
        let half = big_n;
        let mut sums: Vec<f64> = Vec::new();
        let sum_index = DMatrix::from_fn(p, p, |i, j| {
            let s = params.hsum(i, j);
            match sums.iter().position(|&x| x.to_bits() == s.to_bits()) {
                Some(k) => k,
                None => {
                    sums.push(s);
                    sums.len() - 1
                }
            }
        });
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(m_size);
        let transformed: Vec<(Vec<f64>, Vec<f64>)> = sums
            .iter()
            .map(|&s| {
                let mut even = vec![Complex64::new(0.0, 0.0); m_size];
                let mut odd = vec![Complex64::new(0.0, 0.0); m_size];
                for k in 0..m_size {
                    let (e, o) = if k < big_n {
                        increment_kernel_parts(s, k as i64)
                    } else if k == big_n {
                        (increment_kernel_parts(s, k as i64).0, 0.0)
                    } else {
                        increment_kernel_parts(s, k as i64 - m_size as i64)
                    };
                    even[k].re = e;
                    odd[k].re = o;
                }
                fft.process(&mut even);
                fft.process(&mut odd);
                (
                    even[..=half].iter().map(|z| z.re).collect(),
                    odd[..=half].iter().map(|z| z.im).collect(),
                )
            })
            .collect();
        let (even, odd): (Vec<_>, Vec<_>) = transformed.into_iter().unzip();

        let mut tables = SpectralTables {
            p,
            half,
            sigma: params.sigma.clone(),
            rho: DMatrix::from_fn(p, p, |i, j| params.rho_ij(i, j)),
            eta: DMatrix::from_fn(p, p, |i, j| params.eta_ij(i, j)),
            sum_index,
            even,
            odd,
            neg_tol: 0.0,
        };
        let scale = (0..=half)
            .map(|f| {
                (0..p)
                    .map(|i| tables.entry(f, i, i).re)
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        tables.neg_tol = SPECTRAL_NEG_TOL * scale;
        tables
    }

    #[inline]
    fn entry(&self, f: usize, i: usize, j: usize) -> Complex64 {
        let s = self.sum_index[(i, j)];
        let scale = self.sigma[i] * self.sigma[j];
        Complex64::new(
            scale * self.rho[(i, j)] * self.even[s][f],
            -scale * self.eta[(i, j)] * self.odd[s][f],
        )
    }

    fn spectral_matrix(&self, f: usize) -> DMatrix<Complex64> {
        let p = self.p;
        let raw = DMatrix::from_fn(p, p, |i, j| self.entry(f, i, j));
        DMatrix::from_fn(p, p, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)].conj()))
    }

    /// Square-root factor `A` with `A A* = Λ(f)`, or the offending eigenvalue.
    fn factor(&self, f: usize) -> std::result::Result<DMatrix<Complex64>, f64> {
        let lambda = self.spectral_matrix(f);
        if let Some(chol) = Cholesky::new(lambda.clone()) {
            return Ok(chol.unpack());
        }
        let eig = SymmetricEigen::new(lambda);
        let min = eig.eigenvalues.min();
        if min < -self.neg_tol {
            return Err(min);
        }
        let root = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
        let mut a = eig.eigenvectors;
        for (c, r) in root.iter().enumerate() {
            let mut col = a.column_mut(c);
            col *= *r;
        }
        Ok(a)
    }
}

enum Factors {
    /// Flattened `p×p` factors (row-major) for `f = 0..=M/2`.
    Cached(Vec<Complex64>),
    OnTheFly(SpectralTables),
}

struct CirculantEngine {
    big_n: usize,
    factors: Factors,
}

impl CirculantEngine {
    fn try_new(params: &MfbmParams, big_n: usize) -> std::result::Result<Self, f64> {
        let p = params.p();
        let tables = SpectralTables::new(params, big_n);
        let half = tables.half;
        let cache = p * p * (half + 1) <= FACTOR_CACHE_LIMIT;
        let results: Vec<std::result::Result<Option<DMatrix<Complex64>>, f64>> = (0..=half)
            .into_par_iter()
            .map(|f| tables.factor(f).map(|a| cache.then_some(a)))
            .collect();
        let mut flat = Vec::new();
        if cache {
            flat.reserve(p * p * (half + 1));
        }
        for r in results {
            match r {
                Err(min) => return Err(min),
                Ok(Some(a)) => {
                    for i in 0..p {
                        for j in 0..p {
                            flat.push(a[(i, j)]);
                        }
                    }
                }
                Ok(None) => {}
            }
        }
        let factors = if cache {
            Factors::Cached(flat)
        } else {
            Factors::OnTheFly(tables)
        };
        Ok(CirculantEngine { big_n, factors })
    }

    fn increments(&self, p: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let m_size = 2 * self.big_n;
        let half = self.big_n;
        let mut rng = SampleRng::seed_from_u64(seed);
        let noise: Vec<Complex64> = (0..m_size * p)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();

        // spectrum[i][f] = Σ_j A_ij(f) W_j(f); A(M−f) = conj(A(f)).
        let mut spectrum = vec![vec![Complex64::new(0.0, 0.0); m_size]; p];
        let mut apply = |f_src: usize, a: &dyn Fn(usize, usize) -> Complex64| {
            for (f, conj) in [(f_src, false), (m_size - f_src, true)] {
                if f == m_size || (conj && (f_src == 0 || f_src == half)) {
                    continue;
                }
                let w = &noise[f * p..(f + 1) * p];
                for (i, row) in spectrum.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, wj) in w.iter().enumerate() {
                        let aij = if conj { a(i, j).conj() } else { a(i, j) };
                        acc += aij * wj;
                    }
                    row[f] = acc;
                }
            }
        };
        match &self.factors {
            Factors::Cached(flat) => {
                for f in 0..=half {
                    let block = &flat[f * p * p..(f + 1) * p * p];
                    apply(f, &|i, j| block[i * p + j]);
                }
            }
            Factors::OnTheFly(tables) => {
                let blocks: Vec<DMatrix<Complex64>> = (0..=half)
                    .into_par_iter()
                    .map(|f| {
                        tables
                            .factor(f)
                            .unwrap_or_else(|_| DMatrix::zeros(p, p))
                    })
                    .collect();
                for (f, a) in blocks.iter().enumerate() {
                    apply(f, &|i, j| a[(i, j)]);
                }
            }
        }

        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(m_size);
        let norm = 1.0 / (m_size as f64).sqrt();
        spectrum
            .into_iter()
            .map(|mut row| {
                fft.process(&mut row);
                row[..n].iter().map(|z| z.re * norm).collect()
            })
            .collect()
    }
}

/// Block-circulant FFT sampler with dense fallback.
pub struct CirculantSampler {
    params: MfbmParams,
    n: usize,
    engine: Engine,
}

enum Engine {
    Circulant(Box<CirculantEngine>),
    Exact(Arc<ExactSampler>),
}

impl CirculantSampler {
    pub fn new(params: &MfbmParams, n: usize) -> Result<Self> {
        ensure_admissible(params)?;
        if n == 0 {
            return Err(MfbmError::InvalidParameter("n must be positive".into()));
        }
        let base = n.next_power_of_two();
        let mut last_min = 0.0;
        for big_n in [base, 2 * base, 4 * base] {
            match CirculantEngine::try_new(params, big_n) {
                Ok(engine) => {
                    return Ok(CirculantSampler {
                        params: params.clone(),
                        n,
                        engine: Engine::Circulant(Box::new(engine)),
                    })
                }
                Err(min) => {
                    last_min = min;
                    log::debug!("circulant embedding of size {} not PSD ({min:e})", 2 * big_n);
                }
            }
        }
        log::warn!(
            "circulant embedding not positive semidefinite up to size {} (min eigenvalue {last_min:.3e}); using dense sampler",
            8 * base
        );
        let exact = ExactSampler::new(params, n)?;
        Ok(CirculantSampler {
            params: params.clone(),
            n,
            engine: Engine::Exact(Arc::new(exact)),
        })
    }

    /// Whether the FFT route is in use (false after a fallback).
    pub fn is_circulant(&self) -> bool {
        matches!(self.engine, Engine::Circulant(_))
    }

    /// Embedding half-size `N` (the circulant has `2N` lags), if circulant.
    pub fn embedding_size(&self) -> Option<usize> {
        match &self.engine {
            Engine::Circulant(e) => Some(e.big_n),
            Engine::Exact(_) => None,
        }
    }

    /// Stationary increments `Δx(t)`, `t = 0..n−1`, one vector per component.
    pub fn sample_increments(&self, seed: u64) -> Vec<Vec<f64>> {
        match &self.engine {
            Engine::Circulant(engine) => engine.increments(self.params.p(), self.n, seed),
            Engine::Exact(exact) => {
                let path = exact.sample(seed);
                (0..self.params.p())
                    .map(|i| {
                        let col = path.values.column(i);
                        (0..self.n)
                            .map(|t| if t == 0 { col[0] } else { col[t] - col[t - 1] })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

impl PathSampler for CirculantSampler {
    fn sample(&self, seed: u64) -> SamplePath {
        if let Engine::Exact(exact) = &self.engine {
            return exact.sample(seed);
        }
        let incs = self.sample_increments(seed);
        let p = self.params.p();
        let mut values = DMatrix::zeros(self.n, p);
        for (i, inc) in incs.iter().enumerate() {
            let mut acc = 0.0;
            for (t, d) in inc.iter().enumerate() {
                acc += d;
                values[(t, i)] = acc;
            }
        }
        SamplePath {
            values,
            params_used: Some(self.params.clone()),
            seed: Some(seed),
        }
    }

    fn n(&self) -> usize {
        self.n
    }

    fn params(&self) -> &MfbmParams {
        &self.params
    }
}

pub fn sample_increments_circulant(params: &MfbmParams, n: usize, seed: u64) -> Result<SamplePath> {
    Ok(CirculantSampler::new(params, n)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_covariance() {
        let params = MfbmParams::well_balanced(vec![0.5], vec![1.0], 0.0).unwrap();
        let cov = build_path_covariance(&params, 2).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn covariance_at_time_one() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.7], vec![2.0, 0.5], 0.4).unwrap();
        let cov = build_path_covariance(&params, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0, 0.4, 0.4, 0.25]);
        assert!((cov - expected).abs().max() < 1e-14);
    }

    #[test]
    fn memory_guard() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.7], vec![1.0, 1.0], 0.4).unwrap();
        assert!(build_path_covariance_capped(&params, 100, 150).is_err());
    }

    #[test]
    fn inadmissible_parameters_are_refused() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.8], vec![1.0, 1.0], 0.9).unwrap();
        assert!(matches!(
            ExactSampler::new(&params, 8),
            Err(MfbmError::Inadmissible { .. })
        ));
        assert!(CirculantSampler::new(&params, 8).is_err());
    }

    #[test]
    fn samplers_are_deterministic() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.7], vec![1.0, 2.0], 0.4).unwrap();
        let a = sample_exact(&params, 20, 7).unwrap();
        let b = sample_exact(&params, 20, 7).unwrap();
        assert_eq!(a.values, b.values);
        let c = sample_increments_circulant(&params, 100, 7).unwrap();
        let d = sample_increments_circulant(&params, 100, 7).unwrap();
        assert_eq!(c.values, d.values);
        assert_ne!(c.values, sample_increments_circulant(&params, 100, 8).unwrap().values);
    }

    #[test]
    fn circulant_shapes_and_anchoring() {
        let params = MfbmParams::well_balanced(vec![0.3, 0.7, 0.5], vec![1.0; 3], 0.2).unwrap();
        let sampler = CirculantSampler::new(&params, 37).unwrap();
        assert!(sampler.is_circulant());
        assert_eq!(sampler.embedding_size(), Some(64));
        let incs = sampler.sample_increments(3);
        let path = sampler.sample(3);
        assert_eq!(path.values.shape(), (37, 3));
        for i in 0..3 {
            assert_eq!(path.values[(0, i)], incs[i][0]);
            let total: f64 = incs[i].iter().sum();
            assert!((path.values[(36, i)] - total).abs() < 1e-12);
        }
    }
}
