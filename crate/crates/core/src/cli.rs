//! Command-line front end: `run`, `certify`, `fit`, `converge`, `sweep`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{self, AnalysisError, DecayFit, DEFAULT_WINDOW_FRACTION};
use crate::config::{ConfigError, ExperimentConfig, Sidecar};
use crate::energy::{EnergyError, EnergyTrace};
use crate::multiplier::{verify_certificate, CertificateReport, MultiplierError};
use crate::solver::{self, SimulationFailure, SolverError};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Oracle errors at or below this count as exact in `converge`.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } => EXIT_IO,
            CliError::Config(_) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Unstable { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimulationFailure> for CliError {
    fn from(f: SimulationFailure) -> Self {
        f.error.into()
    }
}

impl From<MultiplierError> for CliError {
    fn from(e: MultiplierError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Io(source) => CliError::Io { context: "reading trace".into(), source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(name = "dampwave", version, about = "Damped wave simulations, multiplier certificates and decay fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Trace CSV path; the sidecar goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub override_hypotheses: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and write its energy trace.
    Run(RunArgs),
    /// Verify the multiplier certificates on the light cone.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Optional CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a decay exponent to one or more trace CSVs.
    Fit {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
        window: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh-refinement study against the d'Alembert solution (a = V = 0).
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Number of mesh levels, each halving dx.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configurations in parallel into one directory.
    Sweep {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
        window: f64,
        #[arg(long)]
        override_hypotheses: bool,
    },
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(io_err(format!("cannot create {}", path.display())))?;
    f.write_all(contents.as_bytes()).map_err(io_err(format!("cannot write {}", path.display())))
}

/// Simulates `cfg`, writing the trace to `out` (or stdout) and the sidecar.
pub fn run_config(cfg: &ExperimentConfig, out: Option<&Path>, override_hypotheses: bool) -> Result<EnergyTrace, CliError> {
    let weights = cfg.weights().transpose()?;
    let spec = cfg.run_spec(weights, override_hypotheses);
    let trace = solver::simulate(&spec)?;
    let csv = trace.to_csv_string();
    let out = out.map(Path::to_path_buf).or_else(|| cfg.outputs.trace.as_ref().map(PathBuf::from));
    match out {
        Some(path) => {
            write_file(&path, &csv)?;
            let sidecar = Sidecar { config: cfg.clone(), run: trace.meta.clone().expect("simulate attaches metadata") };
            let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
            write_file(&sidecar_path(&path), &json)?;
        }
        None => print!("{csv}"),
    }
    Ok(trace)
}

pub fn certify(cfg: &ExperimentConfig) -> Result<(CertificateReport, f64), CliError> {
    let weights = cfg
        .weights()
        .ok_or_else(|| CliError::Validation("config has no `multiplier` section".into()))??;
    let (scan, c_cert) = cfg.cone_scan();
    let c_cert = c_cert.unwrap_or_else(|| weights.default_c_cert(cfg.damping.bounds().a1, scan.radius));
    let report = verify_certificate(&weights, &cfg.damping, &cfg.potential, scan, c_cert)?;
    Ok((report, weights.theta))
}

pub fn fit_rows(traces: &[PathBuf], window: f64) -> Result<String, CliError> {
    let mut s = String::from(DecayFit::CSV_HEADER);
    s.push('\n');
    for p in traces {
        let trace = EnergyTrace::read_csv_path(p)?;
        let fit = analysis::fit_decay_exponent(&trace, window)?;
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        s.push_str(&fit.to_csv_row(&label));
        s.push('\n');
    }
    Ok(s)
}

pub fn converge(cfg: &ExperimentConfig, levels: usize) -> Result<String, CliError> {
    if levels < 2 {
        return Err(CliError::Validation("need at least two mesh levels".into()));
    }
    let runs: Vec<(f64, f64)> = (0..levels)
        .into_par_iter()
        .map(|l| {
            let dx = cfg.grid.dx / (1u64 << l) as f64;
            solver::dalembert_error(&cfg.initial, dx, cfg.grid.courant, cfg.grid.horizon, cfg.grid.sample_every)
                .map(|(e, _)| (dx, e))
        })
        .collect::<Result<_, _>>()?;
    let mut s = String::from("dx,max_error\n");
    for (dx, e) in &runs {
        s.push_str(&format!("{dx:.16e},{e:.16e}\n"));
    }
    // Errors at round-off level mean the scheme is exact for these data.
    let leveled: Vec<(f64, f64)> = runs.iter().map(|&(dx, e)| (dx, if e <= EXACT_TOL { 0.0 } else { e })).collect();
    match analysis::convergence_order(&leveled) {
        Ok(order) => s.push_str(&format!("# order={order:.6}\n")),
        Err(AnalysisError::Exact(_)) => s.push_str("# order=exact\n"),
        Err(e) => return Err(e.into()),
    }
    Ok(s)
}

pub fn sweep(configs: &[PathBuf], out: &Path, jobs: usize, window: f64, override_hypotheses: bool) -> Result<String, CliError> {
    if !out.is_dir() {
        return Err(CliError::Io {
            context: format!("output directory {}", out.display()),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Validation(e.to_string()))?;
    let results: Vec<Result<String, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|path| {
                let cfg = ExperimentConfig::load(path)?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
                let label = cfg.label.clone().unwrap_or(stem.clone());
                let trace = run_config(&cfg, Some(&out.join(format!("{stem}.csv"))), override_hypotheses)?;
                let fit = analysis::fit_decay_exponent(&trace, window)?;
                Ok(fit.to_csv_row(&label))
            })
            .collect()
    });
    let mut s = String::from(DecayFit::CSV_HEADER);
    s.push('\n');
    for r in results {
        s.push_str(&r?);
        s.push('\n');
    }
    write_file(&out.join("fits.csv"), &s)?;
    Ok(s)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            run_config(&cfg, a.out.as_deref(), a.override_hypotheses)?;
        }
        Command::Certify { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (report, theta) = certify(&cfg)?;
            println!("{}theta={theta}", report.to_key_value());
            if let Some(out) = out {
                write_file(&out, &format!("{}\n{}\n", CertificateReport::CSV_HEADER, report.to_csv_row()))?;
            }
            if !report.pass {
                return Err(CliError::Numerical("certificate does not hold on the scanned cone".into()));
            }
        }
        Command::Fit { traces, window, out } => {
            let s = fit_rows(&traces, window)?;
            match out {
                Some(p) => write_file(&p, &s)?,
                None => print!("{s}"),
            }
        }
        Command::Converge { config, levels, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = converge(&cfg, levels)?;
            match out {
                Some(p) => write_file(&p, &s)?,
                None => print!("{s}"),
            }
        }
        Command::Sweep { configs, out, jobs, window, override_hypotheses } => {
            print!("{}", sweep(&configs, &out, jobs, window, override_hypotheses)?);
        }
    }
    Ok(())
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
