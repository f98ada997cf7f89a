//! Monte-Carlo tables, the convergence study and the graph-driven demo.
//!
//! Replication `r` of every experiment is sampled with seed `seed ^ r`, so a
//! table computed in two halves and merged equals the table computed at once.

use std::collections::BTreeMap;

use mfbm_core::estimation::{
    compute_moment_vector, estimate_eta, estimate_from_moments, estimate_h, estimate_rho,
    regression_inputs, theta_labels, theta_of, EstimationConfig, EstimationResult, Weights,
};
use mfbm_core::model::validate;
use mfbm_core::synthesis::{replication_seed, CirculantSampler, PathSampler};
use mfbm_core::{make_filter, MfbmError, MfbmParams, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{
    correlation_from_graph, edge_count, mean_geodesic, partial_correlation, watts_strogatz,
    weighted_lower, GraphSpec,
};

/// Symbol used for inadmissible table cells.
pub const INADMISSIBLE: &str = "×";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `η = 0`.
    WellBalanced,
    /// `η_ij = 0.2 (1 − H_i − H_j)` for `i > j`.
    General,
    /// `η_ij` for `i > j` supplied by the experiment file.
    Causal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::WellBalanced => "well-balanced",
            Family::General => "general",
            Family::Causal => "causal",
        }
    }
}

/// `"0.2"` gives every component 0.2; `"0.1:0.5"` spaces `p` values evenly.
pub fn parse_h_label(label: &str, p: usize) -> Result<Vec<f64>> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| MfbmError::InvalidParameter(format!("bad Hurst label `{label}`")))
    };
    match label.split_once(':') {
        None => Ok(vec![parse(label)?; p]),
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if p == 1 {
                return Ok(vec![a]);
            }
            Ok((0..p).map(|k| a + (b - a) * k as f64 / (p - 1) as f64).collect())
        }
    }
}

/// Parameters of one table cell. For the causal family `causal_eta` is the
/// common value of `η_ij`, `i > j`.
pub fn family_params(
    family: Family,
    h: &[f64],
    sigma: &[f64],
    rho: f64,
    causal_eta: Option<f64>,
) -> Result<MfbmParams> {
    let p = h.len();
    let mut params = MfbmParams::well_balanced(h.to_vec(), sigma.to_vec(), rho)?;
    for i in 0..p {
        for j in 0..i {
            let e = match family {
                Family::WellBalanced => 0.0,
                Family::General => 0.2 * (1.0 - h[i] - h[j]),
                Family::Causal => causal_eta.ok_or_else(|| {
                    MfbmError::InvalidParameter(
                        "the causal family needs an explicit `causal_eta`".into(),
                    )
                })?,
            };
            params.eta[(i, j)] = e;
            params.eta[(j, i)] = -e;
        }
    }
    Ok(params)
}

fn default_p() -> usize {
    2
}
fn default_n() -> usize {
    1000
}
fn default_reps() -> u64 {
    100
}
fn default_filter() -> String {
    "db4".into()
}
fn default_dilations() -> Vec<usize> {
    (1..=5).collect()
}
fn default_variants() -> Vec<String> {
    vec!["v".into(), "c".into(), "d".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McExperiment {
    pub family: Family,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Hurst labels, see [`parse_h_label`].
    pub h: Vec<String>,
    pub rho: Vec<f64>,
    /// Defaults to ones.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub replications: u64,
    /// Index of the first replication (for splitting a run).
    #[serde(default)]
    pub first_replication: u64,
    #[serde(default = "default_filter")]
    pub filter: String,
    #[serde(default = "default_dilations")]
    pub dilations: Vec<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub causal_eta: Option<f64>,
}

impl McExperiment {
    pub fn well_balanced_table() -> Self {
        McExperiment {
            family: Family::WellBalanced,
            p: 2,
            h: vec!["0.2".into(), "0.5".into(), "0.8".into(), "0.1:0.5".into(), "0.5:0.9".into()],
            rho: vec![0.1, 0.5, 0.9],
            sigma: None,
            n: default_n(),
            replications: default_reps(),
            first_replication: 0,
            filter: default_filter(),
            dilations: default_dilations(),
            variants: default_variants(),
            seed: 0,
            causal_eta: None,
        }
    }

    fn sigma(&self) -> Vec<f64> {
        self.sigma.clone().unwrap_or_else(|| vec![1.0; self.p])
    }

    fn configs(&self) -> Result<Vec<(String, EstimationConfig)>> {
        let filter = make_filter(&self.filter)?;
        self.variants
            .iter()
            .map(|v| {
                let config = EstimationConfig::new(filter.clone(), self.dilations.clone(), Weights::preset(v)?)?;
                Ok((v.clone(), config))
            })
            .collect()
    }
}

/// Per-replication squared errors of one variant in one cell; `None` marks a
/// failed estimate. Replication `k` of the vectors is `first_replication + k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: String,
    pub first_replication: u64,
    pub err_h: Vec<Option<f64>>,
    pub err_rho: Vec<Option<f64>>,
    pub err_eta: Vec<Option<f64>>,
}

fn ok_count(errs: &[Option<f64>]) -> u64 {
    errs.iter().flatten().count() as u64
}

fn mean_of(errs: &[Option<f64>]) -> f64 {
    let ok: Vec<f64> = errs.iter().flatten().copied().collect();
    ok.iter().sum::<f64>() / ok.len() as f64
}

impl VariantStats {
    pub fn replications(&self) -> u64 {
        self.err_h.len() as u64
    }
    pub fn ok_h(&self) -> u64 {
        ok_count(&self.err_h)
    }
    pub fn ok_rho(&self) -> u64 {
        ok_count(&self.err_rho)
    }
    pub fn ok_eta(&self) -> u64 {
        ok_count(&self.err_eta)
    }
    pub fn mse_h(&self) -> f64 {
        mean_of(&self.err_h)
    }
    pub fn mse_rho(&self) -> f64 {
        mean_of(&self.err_rho)
    }
    pub fn mse_eta(&self) -> f64 {
        mean_of(&self.err_eta)
    }

    fn append(&mut self, other: &VariantStats) -> Result<()> {
        if other.first_replication != self.first_replication + self.replications() {
            return Err(MfbmError::InvalidParameter(format!(
                "replication ranges are not adjacent ({} + {} vs {})",
                self.first_replication,
                self.replications(),
                other.first_replication
            )));
        }
        self.err_h.extend_from_slice(&other.err_h);
        self.err_rho.extend_from_slice(&other.err_rho);
        self.err_eta.extend_from_slice(&other.err_eta);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub h_label: String,
    pub rho: f64,
    pub admissible: bool,
    pub variants: Vec<VariantStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub family: Family,
    pub p: usize,
    pub n: usize,
    pub cells: Vec<CellResult>,
}

fn mean_sq(diffs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for d in diffs {
        s += d * d;
        k += 1;
    }
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}

/// Errors of every variant on one replication. `None` marks a failure.
fn replicate(
    sampler: &dyn PathSampler,
    params: &MfbmParams,
    configs: &[(String, EstimationConfig)],
    seed: u64,
) -> Vec<(Option<f64>, Option<f64>, Option<f64>)> {
    let path = sampler.sample(seed);
    let p = params.p();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let mv = compute_moment_vector(&path.values, &configs[0].1);
    configs
        .iter()
        .map(|(_, config)| {
            let Ok(mv) = &mv else { return (None, None, None) };
            let h_hat = regression_inputs(mv, config).and_then(|inp| estimate_h(&inp, config.weights));
            let Ok(h_hat) = h_hat else { return (None, None, None) };
            let err_h = mean_sq(h_hat.iter().zip(&params.h).map(|(a, b)| a - b));
            let err_rho = estimate_rho(mv, &h_hat, config)
                .ok()
                .map(|r| mean_sq(pairs.iter().map(|&(i, j)| r[(i, j)] - params.rho_ij(i, j))));
            let err_eta = estimate_eta(mv, &h_hat, config)
                .ok()
                .map(|e| mean_sq(pairs.iter().map(|&(i, j)| e[(i, j)] - params.eta_ij(i, j))));
            (Some(err_h), err_rho, err_eta)
        })
        .collect()
}

/// Runs every admissible cell of the grid.
pub fn run_mc_table(exp: &McExperiment) -> Result<McTable> {
    if exp.replications == 0 {
        return Err(MfbmError::InvalidParameter("replications must be >= 1".into()));
    }
    let configs = exp.configs()?;
    if configs.is_empty() {
        return Err(MfbmError::InvalidParameter("no estimator variants requested".into()));
    }
    let sigma = exp.sigma();
    let mut cells = Vec::new();
    for label in &exp.h {
        let h = parse_h_label(label, exp.p)?;
        for &rho in &exp.rho {
            let params = family_params(exp.family, &h, &sigma, rho, exp.causal_eta)?;
            let admissible = validate(&params)?.admissible;
            let mut stats: Vec<VariantStats> = configs
                .iter()
                .map(|(v, _)| VariantStats {
                    variant: v.clone(),
                    first_replication: exp.first_replication,
                    ..VariantStats::default()
                })
                .collect();
            if admissible {
                let sampler = CirculantSampler::new(&params, exp.n)?;
                let reps = exp.first_replication..exp.first_replication + exp.replications;
                let outcomes: Vec<_> = reps
                    .into_par_iter()
                    .map(|r| replicate(&sampler, &params, &configs, replication_seed(exp.seed, r)))
                    .collect();
                for outcome in &outcomes {
                    for (s, &(eh, er, ee)) in stats.iter_mut().zip(outcome) {
                        s.err_h.push(eh);
                        s.err_rho.push(er);
                        s.err_eta.push(ee);
                    }
                }
                log::info!("cell H={label} rho={rho} done");
            }
            cells.push(CellResult {
                h_label: label.clone(),
                rho,
                admissible,
                variants: stats,
            });
        }
    }
    Ok(McTable {
        family: exp.family,
        p: exp.p,
        n: exp.n,
        cells,
    })
}

/// Merges tables computed on adjacent replication ranges of the same grid;
/// the order of the arguments does not matter.
pub fn merge_tables(a: &McTable, b: &McTable) -> Result<McTable> {
    let same_grid = a.family == b.family
        && a.p == b.p
        && a.n == b.n
        && a.cells.len() == b.cells.len()
        && a.cells.iter().zip(&b.cells).all(|(x, y)| {
            x.h_label == y.h_label && x.rho == y.rho && x.variants.len() == y.variants.len()
        });
    if !same_grid {
        return Err(MfbmError::InvalidParameter("tables have different grids".into()));
    }
    let a_first = a.cells.first().and_then(|c| c.variants.first()).map_or(0, |v| v.first_replication);
    let b_first = b.cells.first().and_then(|c| c.variants.first()).map_or(0, |v| v.first_replication);
    let (a, b) = if b_first < a_first { (b, a) } else { (a, b) };
    let mut out = a.clone();
    for (cell, other) in out.cells.iter_mut().zip(&b.cells).filter(|(c, _)| c.admissible) {
        for (s, t) in cell.variants.iter_mut().zip(&other.variants) {
            s.append(t)?;
        }
    }
    Ok(out)
}

fn fmt_mse(admissible: bool, ok: u64, value: f64) -> String {
    if !admissible {
        INADMISSIBLE.to_string()
    } else if ok == 0 {
        "NaN".to_string()
    } else {
        format!("{value:?}")
    }
}

/// One CSV row per (cell, variant).
pub fn write_table_csv<W: std::io::Write>(table: &McTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "family", "p", "n", "H", "rho", "variant", "replications", "mse_H", "mse_rho", "mse_eta", "ok_H",
        "ok_rho", "ok_eta",
    ])?;
    for cell in &table.cells {
        for s in &cell.variants {
            w.write_record([
                table.family.name().to_string(),
                table.p.to_string(),
                table.n.to_string(),
                cell.h_label.clone(),
                format!("{:?}", cell.rho),
                s.variant.clone(),
                s.replications().to_string(),
                fmt_mse(cell.admissible, s.ok_h(), s.mse_h()),
                fmt_mse(cell.admissible, s.ok_rho(), s.mse_rho()),
                fmt_mse(cell.admissible, s.ok_eta(), s.mse_eta()),
                s.ok_h().to_string(),
                s.ok_rho().to_string(),
                s.ok_eta().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

impl McTable {
    pub fn cell(&self, h_label: &str, rho: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.h_label == h_label && c.rho == rho)
    }
}

impl CellResult {
    pub fn variant(&self, name: &str) -> Option<&VariantStats> {
        self.variants.iter().find(|v| v.variant == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    pub std: f64,
    pub ok: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub replications: u64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log std` against `log n`, per parameter.
    pub slopes: BTreeMap<String, f64>,
}

/// Parameters of the convergence figure: `H = (0.3, 0.8)`, `σ = (2, 1)`, `ρ = 0.4`, `η = 0`.
pub fn default_convergence_params() -> MfbmParams {
    MfbmParams::well_balanced(vec![0.3, 0.8], vec![2.0, 1.0], 0.4).expect("valid dimensions")
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Labels of the convergence study: `θ` with `σ_k` in place of `σ_k²`.
pub fn convergence_labels(p: usize) -> Vec<String> {
    theta_labels(p)
        .into_iter()
        .map(|l| match l.strip_prefix("sigma2_") {
            Some(k) => format!("sigma{k}"),
            None => l,
        })
        .collect()
}

fn with_sigma(mut theta: Vec<f64>, p: usize) -> Vec<f64> {
    for v in &mut theta[p..2 * p] {
        *v = v.sqrt();
    }
    theta
}

/// Standard deviation across replications of every estimated parameter, per
/// `n`. Scales are reported as `σ̂`, not `σ̂²`.
pub fn run_convergence(
    params: &MfbmParams,
    ns: &[usize],
    replications: u64,
    config: &EstimationConfig,
    seed: u64,
) -> Result<ConvergenceReport> {
    if replications < 2 {
        return Err(MfbmError::InvalidParameter(
            "at least two replications are needed to estimate a standard deviation".into(),
        ));
    }
    if ns.len() < 2 {
        return Err(MfbmError::InvalidParameter("need at least two sample sizes".into()));
    }
    let p = params.p();
    let truth = with_sigma(theta_of(params), p);
    let labels = convergence_labels(p);
    let mut rows = Vec::new();
    for &n in ns {
        let sampler = CirculantSampler::new(params, n)?;
        let thetas: Vec<Option<Vec<f64>>> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let path = sampler.sample(replication_seed(seed, r));
                compute_moment_vector(&path.values, config)
                    .and_then(|mv| estimate_from_moments(&mv, config))
                    .map(|e| with_sigma(e.theta(), p))
                    .ok()
            })
            .collect();
        let ok: Vec<&Vec<f64>> = thetas.iter().flatten().collect();
        if ok.len() < 2 {
            return Err(MfbmError::InsufficientData(format!(
                "fewer than two successful estimates at n = {n}"
            )));
        }
        if ok.len() < thetas.len() {
            log::warn!("{} of {} estimates failed at n = {n}", thetas.len() - ok.len(), thetas.len());
        }
        for (k, label) in labels.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|t| t[k]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            rows.push(ConvergenceRow {
                n,
                parameter: label.clone(),
                truth: truth[k],
                mean: m,
                std: var.sqrt(),
                ok: ok.len() as u64,
            });
        }
    }
    let nvals: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slopes = labels
        .iter()
        .map(|label| {
            let stds: Vec<f64> = ns
                .iter()
                .map(|&n| rows.iter().find(|r| r.n == n && &r.parameter == label).expect("row").std)
                .collect();
            (label.clone(), log_slope(&nvals, &stds))
        })
        .collect();
    Ok(ConvergenceReport {
        replications,
        rows,
        slopes,
    })
}

pub fn write_convergence_csv<W: std::io::Write>(report: &ConvergenceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "parameter", "truth", "mean", "std", "ok"])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            r.parameter.clone(),
            format!("{:?}", r.truth),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            r.ok.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// How the demo assigns Hurst exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HAssignment {
    /// Uniform draws from `{lo, lo+step, …, hi}`.
    RandomGrid { lo: f64, hi: f64, step: f64 },
    Fixed(Vec<f64>),
}

impl Default for HAssignment {
    fn default() -> Self {
        HAssignment::RandomGrid {
            lo: 0.3,
            hi: 0.8,
            step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighDimConfig {
    pub graph: GraphSpec,
    pub h: HAssignment,
    pub n: usize,
    pub seed: u64,
    /// Redraws of (H, weights) allowed until the model is admissible.
    pub max_attempts: usize,
    /// Threshold on |partial correlation| for edge detection.
    pub threshold: f64,
}

impl Default for HighDimConfig {
    fn default() -> Self {
        HighDimConfig {
            graph: GraphSpec::default(),
            h: HAssignment::default(),
            n: 8192,
            seed: 0,
            max_attempts: 50,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighDimSummary {
    pub nodes: usize,
    pub edges: usize,
    pub mean_geodesic: f64,
    pub attempts: usize,
    pub n: usize,
    pub mean_sq_error_h: f64,
    pub mean_sq_error_rho_neighbors: f64,
    pub threshold: f64,
    /// Detection of graph edges by thresholding the estimated partial correlations.
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone)]
pub struct HighDimOutput {
    pub params: MfbmParams,
    pub adjacency: DMatrix<u8>,
    pub estimate: EstimationResult,
    pub partial_true: DMatrix<f64>,
    pub partial_hat: DMatrix<f64>,
    pub summary: HighDimSummary,
}

fn draw_h(assign: &HAssignment, p: usize, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    match assign {
        HAssignment::Fixed(h) if h.len() == p => Ok(h.clone()),
        HAssignment::Fixed(h) => Err(MfbmError::DimensionMismatch(format!(
            "{} Hurst exponents for {p} nodes",
            h.len()
        ))),
        &HAssignment::RandomGrid { lo, hi, step } => {
            if !(step > 0.0 && lo <= hi) {
                return Err(MfbmError::InvalidParameter("bad Hurst grid".into()));
            }
            let count = ((hi - lo) / step).round() as usize + 1;
            Ok((0..p)
                .map(|_| {
                    let k = rng.random_range(0..count);
                    ((lo + k as f64 * step) * 1e6).round() / 1e6
                })
                .collect())
        }
    }
}

/// Builds the graph model, simulates it, and estimates it with the `v` preset.
pub fn run_highdim(cfg: &HighDimConfig) -> Result<HighDimOutput> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let p = cfg.graph.nodes;
    let adjacency = watts_strogatz(&cfg.graph, &mut rng)?;
    let mut found = None;
    for attempt in 1..=cfg.max_attempts.max(1) {
        let h = draw_h(&cfg.h, p, &mut rng)?;
        let a = weighted_lower(&adjacency, &cfg.graph, &mut rng);
        let rho = correlation_from_graph(&a)?;
        let params = MfbmParams::new(h, vec![1.0; p], rho, DMatrix::zeros(p, p))?;
        if validate(&params)?.admissible {
            found = Some((params, attempt));
            break;
        }
        log::info!("attempt {attempt}: inadmissible draw, redrawing");
    }
    let (params, attempts) = found.ok_or_else(|| {
        MfbmError::InvalidParameter(format!(
            "no admissible model in {} attempts",
            cfg.max_attempts
        ))
    })?;
    let sampler = CirculantSampler::new(&params, cfg.n)?;
    let path = sampler.sample(replication_seed(cfg.seed, 0));
    let config = EstimationConfig::default();
    let estimate = estimate_all_logged(&path.values, &config)?;
    let partial_true = partial_correlation(&params.rho)?;
    let partial_hat = partial_correlation(&estimate.rho_matrix())?;

    let mut tp = 0usize;
    let mut detected = 0usize;
    for i in 0..p {
        for j in 0..i {
            let edge = adjacency[(i, j)] == 1;
            let hit = partial_hat[(i, j)].abs() > cfg.threshold;
            detected += hit as usize;
            tp += (hit && edge) as usize;
        }
    }
    let edges = edge_count(&adjacency);
    let mse_h = mean_sq(estimate.h_hat.iter().zip(&params.h).map(|(a, b)| a - b));
    let mse_rho = mean_sq((0..p - 1).map(|i| estimate.rho_hat[i][i + 1] - params.rho[(i, i + 1)]));
    let summary = HighDimSummary {
        nodes: p,
        edges,
        mean_geodesic: mean_geodesic(&adjacency),
        attempts,
        n: cfg.n,
        mean_sq_error_h: mse_h,
        mean_sq_error_rho_neighbors: mse_rho,
        threshold: cfg.threshold,
        precision: if detected == 0 { 0.0 } else { tp as f64 / detected as f64 },
        recall: tp as f64 / edges as f64,
    };
    Ok(HighDimOutput {
        params,
        adjacency,
        estimate,
        partial_true,
        partial_hat,
        summary,
    })
}

fn estimate_all_logged(values: &DMatrix<f64>, config: &EstimationConfig) -> Result<EstimationResult> {
    let mv = compute_moment_vector(values, config)?;
    estimate_from_moments(&mv, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_labels() {
        assert_eq!(parse_h_label("0.2", 3).unwrap(), vec![0.2; 3]);
        let h = parse_h_label("0.1:0.5", 5).unwrap();
        assert!((h[1] - 0.2).abs() < 1e-15 && (h[4] - 0.5).abs() < 1e-15);
        assert!(parse_h_label("x", 2).is_err());
    }

    #[test]
    fn family_asymmetry() {
        let p = family_params(Family::General, &[0.2, 0.5], &[1.0, 1.0], 0.5, None).unwrap();
        assert!((p.eta[(1, 0)] - 0.06).abs() < 1e-15);
        assert_eq!(p.eta[(0, 1)], -p.eta[(1, 0)]);
        assert!(family_params(Family::Causal, &[0.2, 0.5], &[1.0, 1.0], 0.5, None).is_err());
    }

    #[test]
    fn inadmissible_cells_are_marked() {
        let exp = McExperiment {
            h: vec!["0.1:0.5".into()],
            rho: vec![0.9],
            replications: 1,
            ..McExperiment::well_balanced_table()
        };
        let table = run_mc_table(&exp).unwrap();
        assert!(!table.cells[0].admissible);
        let mut buf = Vec::new();
        write_table_csv(&table, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains(INADMISSIBLE));
    }

    #[test]
    fn split_runs_merge_to_the_full_table() {
        let base = McExperiment {
            h: vec!["0.3".into()],
            rho: vec![0.5],
            n: 300,
            replications: 6,
            seed: 9,
            ..McExperiment::well_balanced_table()
        };
        let full = run_mc_table(&base).unwrap();
        let first = run_mc_table(&McExperiment { replications: 4, ..base.clone() }).unwrap();
        let second = run_mc_table(&McExperiment {
            first_replication: 4,
            replications: 2,
            ..base.clone()
        })
        .unwrap();
        assert_eq!(merge_tables(&first, &second).unwrap(), full);
        assert_eq!(merge_tables(&second, &first).unwrap(), full);
        assert!(merge_tables(&first, &first).is_err());
    }

    #[test]
    fn single_replication_convergence_is_rejected() {
        let params = default_convergence_params();
        let err = run_convergence(&params, &[256, 512], 1, &EstimationConfig::default(), 0);
        assert!(matches!(err, Err(MfbmError::InvalidParameter(_))));
    }
}
