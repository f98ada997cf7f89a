//! Command-line definition and dispatch.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfbm_core::asymptotics::{confidence_intervals, sigma_matrix, ConfidenceReport};
use mfbm_core::estimation::{estimate_all, EstimationConfig, EstimationResult, Weights};
use mfbm_core::filtering::BUILTIN_FILTERS;
use mfbm_core::io::{load_path, save_path, write_matrix_binary, write_matrix_csv};
use mfbm_core::model::{ensure_admissible, validate};
use mfbm_core::synthesis::{sample_exact, CirculantSampler, PathSampler};
use mfbm_core::{make_filter, Filter, MfbmError, MfbmParams, Result};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::experiment::{
    default_convergence_params, merge_tables, run_convergence, run_highdim, run_mc_table,
    write_convergence_csv, write_table_csv, HighDimConfig, McExperiment, McTable,
};

#[derive(Debug, Parser)]
#[command(name = "mfbm", version, about = "Simulate and identify multivariate fractional Brownian motion")]
pub struct Cli {
    /// Base seed; replication r uses seed ^ r.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for Monte-Carlo runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output format for tables and results.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a parameter file describes an existing process.
    Validate {
        #[arg(long)]
        params: PathBuf,
    },
    /// Draw one sample path.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Method::Circulant)]
        method: Method,
        /// `.csv` for text, anything else for the binary layout.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate all parameters from a path file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Add delta-method confidence intervals at this level.
        #[arg(long, num_args = 0..=1, default_missing_value = "0.95")]
        ci: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter bank operations.
    Filters {
        #[command(subcommand)]
        action: FiltersAction,
    },
    /// Monte-Carlo MSE table over a parameter grid.
    McTable {
        /// Experiment description (JSON).
        #[arg(long, required_unless_present = "merge")]
        experiment: Option<PathBuf>,
        /// Override the replication count of the experiment file.
        #[arg(long)]
        replications: Option<u64>,
        /// Override the first replication index (for split runs).
        #[arg(long)]
        first_replication: Option<u64>,
        /// Merge two JSON tables from split runs instead of computing.
        #[arg(long, num_args = 2, conflicts_with = "experiment")]
        merge: Option<Vec<PathBuf>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Standard deviation of the estimates against n.
    Convergence {
        /// Defaults to H=(0.3,0.8), sigma=(2,1), rho=0.4, eta=0.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "256,1024,4096,16384")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        replications: u64,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Watts-Strogatz graph demo: estimates and partial correlations.
    Highdim {
        /// Configuration (JSON); defaults to 100 nodes, n = 8192.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        nodes: Option<usize>,
        /// Directory receiving the data files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Asymptotic covariance of the moment vector.
    Sigma {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "db4")]
        filter: String,
        #[arg(long, default_value = "1:5")]
        dilations: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MatrixFormat::Bin)]
        out_format: MatrixFormat,
    },
}

#[derive(Debug, Subcommand)]
pub enum FiltersAction {
    /// Print the builtin filters with their vanishing moments.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Circulant,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Bin,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value = "db4")]
    pub filter: String,
    /// JSON array of taps; overrides --filter.
    #[arg(long)]
    pub filter_file: Option<PathBuf>,
    /// `a:b` or a comma-separated list.
    #[arg(long, default_value = "1:5")]
    pub dilations: String,
    /// Preset `v`, `c`, `d` or explicit `wv,wc,wd`.
    #[arg(long, default_value = "v")]
    pub weights: String,
}

impl EstimatorArgs {
    pub fn config(&self) -> Result<EstimationConfig> {
        let filter = match &self.filter_file {
            Some(file) => {
                let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
                Filter::from_json(name, &fs::read_to_string(file)?)?
            }
            None => make_filter(&self.filter)?,
        };
        EstimationConfig::new(filter, parse_dilations(&self.dilations)?, parse_weights(&self.weights)?)
    }
}

pub fn parse_dilations(text: &str) -> Result<Vec<usize>> {
    let bad = || MfbmError::InvalidParameter(format!("bad dilation list `{text}`"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(num).collect()
}

pub fn parse_weights(text: &str) -> Result<Weights> {
    if !text.contains(',') {
        return Weights::preset(text.trim());
    }
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| MfbmError::InvalidParameter(format!("bad weights `{text}`")))?;
    match parts[..] {
        [v, c, d] => Weights::new(v, c, d),
        _ => Err(MfbmError::InvalidParameter(format!("expected three weights, got `{text}`"))),
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &MfbmError) -> i32 {
    match err {
        MfbmError::InsufficientData(_) => 3,
        MfbmError::Numerical(_) => 4,
        MfbmError::Io(_) => 1,
        _ => 2,
    }
}

fn read_params(file: &Path) -> Result<MfbmParams> {
    MfbmParams::from_json(&fs::read_to_string(file)?)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(file) => Box::new(BufWriter::new(File::create(file)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    #[serde(flatten)]
    result: &'a EstimationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<ConfidenceReport>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(MfbmError::InvalidParameter("--jobs must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let seed = cli.seed;
    match cli.command {
        Command::Validate { params } => {
            let params = read_params(&params)?;
            let report = validate(&params)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            ensure_admissible(&params)
        }
        Command::Simulate { params, n, method, out } => {
            let params = read_params(&params)?;
            let seed = seed.unwrap_or(0);
            let path = match method {
                Method::Circulant => CirculantSampler::new(&params, n)?.sample(seed),
                Method::Exact => sample_exact(&params, n, seed)?,
            };
            save_path(&path, &out)
        }
        Command::Estimate { input, estimator, ci, out } => {
            let path = load_path(&input)?;
            let config = estimator.config()?;
            let result = estimate_all(&path.values, &config)?;
            let confidence = ci.map(|level| confidence_intervals(&result, path.n(), level)).transpose()?;
            let output = EstimateOutput {
                result: &result,
                confidence,
            };
            write_json(&output, out.as_deref())
        }
        Command::Filters { action: FiltersAction::List } => {
            let mut w = sink(None)?;
            writeln!(w, "name,taps,q")?;
            for name in BUILTIN_FILTERS {
                let f = make_filter(name)?;
                writeln!(w, "{},{},{}", f.name, f.taps.len(), f.q)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::McTable {
            experiment,
            replications,
            first_replication,
            merge,
            out,
        } => {
            let table = match (merge, experiment) {
                (Some(files), _) => {
                    let load = |f: &PathBuf| -> Result<McTable> { Ok(serde_json::from_str(&fs::read_to_string(f)?)?) };
                    merge_tables(&load(&files[0])?, &load(&files[1])?)?
                }
                (None, Some(file)) => {
                    let mut exp: McExperiment = serde_json::from_str(&fs::read_to_string(file)?)?;
                    if let Some(s) = seed {
                        exp.seed = s;
                    }
                    if let Some(r) = replications {
                        exp.replications = r;
                    }
                    if let Some(f) = first_replication {
                        exp.first_replication = f;
                    }
                    run_mc_table(&exp)?
                }
                (None, None) => return Err(MfbmError::InvalidParameter("--experiment is required".into())),
            };
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => write_table_csv(&table, sink(out.as_deref())?),
                Format::Json => write_json(&table, out.as_deref()),
            }
        }
        Command::Convergence {
            params,
            n_list,
            replications,
            estimator,
            out,
        } => {
            let params = match params {
                Some(file) => read_params(&file)?,
                None => default_convergence_params(),
            };
            let report = run_convergence(&params, &n_list, replications, &estimator.config()?, seed.unwrap_or(0))?;
            for (label, slope) in &report.slopes {
                log::info!("log-log slope of std({label}) = {slope:.3}");
            }
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => write_convergence_csv(&report, sink(out.as_deref())?),
                Format::Json => write_json(&report, out.as_deref()),
            }
        }
        Command::Highdim {
            config,
            n,
            nodes,
            out_dir,
        } => {
            let mut cfg: HighDimConfig = match config {
                Some(file) => serde_json::from_str(&fs::read_to_string(file)?)?,
                None => HighDimConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.graph.seed = s;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(nodes) = nodes {
                cfg.graph.nodes = nodes;
            }
            write_highdim(&cfg, &out_dir)
        }
        Command::Sigma {
            params,
            filter,
            dilations,
            out,
            out_format,
        } => {
            let params = read_params(&params)?;
            let sigma = sigma_matrix(&params, &make_filter(&filter)?, &parse_dilations(&dilations)?)?;
            log::info!("truncation K = {}, tail bound {:.2e}", sigma.truncation, sigma.tail_bound);
            let w = BufWriter::new(File::create(&out)?);
            match out_format {
                MatrixFormat::Bin => write_matrix_binary(&sigma.matrix(), w),
                MatrixFormat::Csv => write_matrix_csv(&sigma.matrix(), w),
            }
        }
    }
}

fn write_highdim(cfg: &HighDimConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let out = run_highdim(cfg)?;
    let p = out.params.p();

    let mut w = csv::Writer::from_path(dir.join("hurst.csv"))?;
    w.write_record(["component", "H", "H_hat"])?;
    for i in 0..p {
        w.write_record([(i + 1).to_string(), format!("{:?}", out.params.h[i]), format!("{:?}", out.estimate.h_hat[i])])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("rho_neighbors.csv"))?;
    w.write_record(["i", "rho", "rho_hat"])?;
    for i in 0..p - 1 {
        w.write_record([
            (i + 1).to_string(),
            format!("{:?}", out.params.rho[(i, i + 1)]),
            format!("{:?}", out.estimate.rho_hat[i][i + 1]),
        ])?;
    }
    w.flush()?;

    let save = |name: &str, m: &DMatrix<f64>| write_matrix_csv(m, BufWriter::new(File::create(dir.join(name))?));
    save("partial_true.csv", &out.partial_true)?;
    save("partial_hat.csv", &out.partial_hat)?;
    save("adjacency.csv", &out.adjacency.map(f64::from))?;
    fs::write(dir.join("params.json"), out.params.to_json()?)?;
    write_json(&out.summary, Some(&dir.join("summary.json")))
}
