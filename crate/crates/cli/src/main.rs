use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use egpd::angular::{chi_curve, chi_model, megpd_simulate, TailSide};
use egpd::bootstrap::{parametric_bootstrap, BootstrapConfig, BootstrapResult};
use egpd::copula::{compose_with_margins, simulate_copula, CopulaFamily, CopulaSpec};
use egpd::data::{apply_preprocessing, invert_preprocessing, load_csv, preprocess, write_csv, ColumnSpec, Dataset};
use egpd::diagnostics::{write_diagnostics, DiagnosticsConfig};
use egpd::egpd::EgpdParams;
use egpd::model_file::ModelFile;
use egpd::pipeline::{fit_pipeline, render_report, FitConfig};
use egpd::spline::{default_lambda_grid, log_grid};
use egpd::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Fit, simulate and check multivariate EGPD models.
#[derive(Debug, Parser)]
#[command(name = "egpd", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Comma-separated columns to use, in order.
    #[arg(long, global = true, value_delimiter = ',')]
    columns: Vec<String>,
    /// Column used as the denominator of the log-ratios (moved last).
    #[arg(long, global = true)]
    ref_column: Option<String>,
    /// Bernstein degree (default: floor(0.5 n / ln n)).
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Number of spline knots.
    #[arg(long = "K", global = true, default_value_t = 12)]
    k: usize,
    /// Smoothing-parameter grid: `lo:hi:count` (log-spaced) or a comma list.
    #[arg(long, global = true)]
    lambda_grid: Option<String>,
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Field delimiter of input files.
    #[arg(long, global = true, default_value_t = ',')]
    delimiter: char,
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV file and write model.json.
    Fit {
        data: PathBuf,
        /// Data are already positive and on the model scale.
        #[arg(long)]
        no_preprocess: bool,
        /// Also write the radial and rho iteration traces.
        #[arg(long)]
        trace: bool,
    },
    /// Simulate from a model file or a bivariate copula.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "copula", required_unless_present = "copula")]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        copula: Option<Family>,
        /// Copula dependence parameter in (0, 1].
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// EGPD margins `kappa,xi` for copula draws (uniform margins if absent).
        #[arg(long, value_delimiter = ',')]
        margins: Option<Vec<f64>>,
        /// Undo the model's preprocessing on the simulated rows.
        #[arg(long)]
        raw_scale: bool,
    },
    /// Write goodness-of-fit tables for a model and data.
    Diagnose {
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Bootstrap result (bootstrap.json) supplying the bands.
        #[arg(long)]
        bootstrap: Option<PathBuf>,
        #[arg(long)]
        no_preprocess: bool,
        /// Monte Carlo size for the model chi curves and density grids.
        #[arg(long, default_value_t = 200_000)]
        mc_size: usize,
    },
    /// Parametric bootstrap intervals for a fitted model.
    Bootstrap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        nboot: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Tail dependence curves chi^(X) and chi^(Y) from data or a model.
    Chi {
        /// CSV file; omit to use --model.
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "data")]
        model: Option<PathBuf>,
        /// Zero-based column pair.
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
        pair: Vec<usize>,
        /// Levels `lo:hi:step`.
        #[arg(long, default_value = "0.8:0.99:0.01")]
        p_grid: String,
        #[arg(long, default_value_t = 1_000_000)]
        mc_size: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Logistic,
    InvertedLogistic,
    Gaussian,
}

impl From<Family> for CopulaFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Logistic => CopulaFamily::SymmetricLogistic,
            Family::InvertedLogistic => CopulaFamily::InvertedLogistic,
            Family::Gaussian => CopulaFamily::Gaussian,
        }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(Error::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

type CliResult<T> = Result<T, Failure>;

fn parse_lambda_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || Failure::Usage(format!("invalid --lambda-grid `{s}`: expected lo:hi:count or a comma list"));
    let grid = if let [lo, hi, count] = s.split(':').collect::<Vec<_>>()[..] {
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && count >= 1) {
            return Err(bad());
        }
        log_grid(lo, hi, count)
    } else {
        s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?
    };
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(bad());
    }
    Ok(grid)
}

fn parse_p_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || Failure::Usage(format!("invalid --p-grid `{s}`: expected lo:hi:step or a comma list"));
    let grid: Vec<f64> = if let [lo, hi, step] = s.split(':').collect::<Vec<_>>()[..] {
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let step: f64 = step.parse().map_err(|_| bad())?;
        if !(step > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| ((lo + step * i as f64) * 1e12).round() / 1e12).collect()
    } else {
        s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?
    };
    if grid.is_empty() || grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(bad());
    }
    Ok(grid)
}

fn delimiter(g: &Global) -> CliResult<u8> {
    u8::try_from(g.delimiter)
        .map_err(|_| Failure::Usage(format!("delimiter `{}` is not a single-byte character", g.delimiter)))
}

fn column_spec(g: &Global, fallback: &[String]) -> CliResult<ColumnSpec> {
    Ok(ColumnSpec {
        columns: if g.columns.is_empty() { fallback.to_vec() } else { g.columns.clone() },
        reference: g.ref_column.clone(),
        delimiter: delimiter(g)?,
    })
}

fn output_path(g: &Global, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&g.output_dir)?;
    Ok(g.output_dir.join(name))
}

/// Loads data for an existing model: its columns by default, its stored
/// preprocessing applied.
fn load_for_model(g: &Global, path: &Path, file: &ModelFile, no_preprocess: bool) -> CliResult<Dataset> {
    let ds = load_csv(path, &column_spec(g, &file.columns)?)?;
    if ds.d() != file.model.d {
        return Err(Failure::Data(Error::InsufficientData(format!(
            "data have {} columns, the model expects {}",
            ds.d(),
            file.model.d
        ))));
    }
    if no_preprocess || file.preprocessing.is_empty() {
        Ok(ds)
    } else {
        Ok(apply_preprocessing(&ds, &file.preprocessing)?)
    }
}

fn write_trace(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_fit(g: &Global, data: &Path, no_preprocess: bool, trace: bool) -> CliResult<()> {
    let lambda_grid = match &g.lambda_grid {
        Some(s) => parse_lambda_grid(s)?,
        None => default_lambda_grid(),
    };
    let raw = load_csv(data, &column_spec(g, &[])?)?;
    let ds = if no_preprocess { raw } else { preprocess(&raw)? };
    let mut cfg = FitConfig {
        k: g.k,
        seed: g.seed,
        ..FitConfig::default()
    };
    cfg.radial.m = g.m;
    cfg.angular.lambda_grid = lambda_grid;
    let fit = fit_pipeline(&ds, &cfg)?;
    let path = output_path(g, "model.json")?;
    fit.file.save(&path)?;
    print!("{}", render_report(&fit.file, None));
    println!("model written to {}", path.display());
    if trace {
        write_trace(
            &output_path(g, "radial_trace.csv")?,
            &["iteration", "kappa", "xi", "loglik"],
            fit.radial
                .trace
                .iter()
                .map(|t| vec![t.iteration.to_string(), t.kappa.to_string(), t.xi.to_string(), t.loglik.to_string()])
                .collect(),
        )?;
        write_trace(
            &output_path(g, "rho_trace.csv")?,
            &["iteration", "rho", "lambda", "loglik", "penlik"],
            fit.angular
                .rho_trace
                .iter()
                .map(|t| {
                    vec![
                        t.iteration.to_string(),
                        t.rho.to_string(),
                        t.lambda.to_string(),
                        t.loglik.to_string(),
                        t.penlik.to_string(),
                    ]
                })
                .collect(),
        )?;
    }
    if fit.file.summary.converged() {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn cmd_simulate(
    g: &Global,
    n: usize,
    model: Option<&Path>,
    copula: Option<Family>,
    alpha: f64,
    margins: Option<&[f64]>,
    raw_scale: bool,
) -> CliResult<()> {
    if n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let ds = match (model, copula) {
        (Some(path), _) => {
            let file = ModelFile::load(path)?;
            let rows = megpd_simulate(n, &file.model, g.seed)?;
            let mut ds = Dataset::new(file.columns.clone(), rows)?;
            if raw_scale {
                ds.provenance.preprocessing = file.preprocessing.clone();
                ds = invert_preprocessing(&ds)?;
            }
            ds
        }
        (None, Some(family)) => {
            let spec = CopulaSpec::new(family.into(), alpha)?;
            let mut u = simulate_copula(n, &spec, g.seed)?;
            if let Some(m) = margins {
                if m.len() != 2 {
                    return Err(Failure::Usage("--margins takes two values: kappa,xi".into()));
                }
                u = compose_with_margins(&u, &EgpdParams::uniform(m[0], m[1])?)?;
            }
            Dataset::new(vec!["x1".into(), "x2".into()], u.iter().map(|p| p.to_vec()).collect())?
        }
        (None, None) => return Err(Failure::Usage("simulate needs --model or --copula".into())),
    };
    let path = output_path(g, "simulated.csv")?;
    write_csv(&path, &ds)?;
    println!("{} rows written to {}", ds.n(), path.display());
    Ok(())
}

fn cmd_diagnose(
    g: &Global,
    data: &Path,
    model: &Path,
    bootstrap: Option<&Path>,
    no_preprocess: bool,
    mc_size: usize,
) -> CliResult<()> {
    let file = ModelFile::load(model)?;
    let ds = load_for_model(g, data, &file, no_preprocess)?;
    let boot: Option<BootstrapResult> = match bootstrap {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| file_error(p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| file_error(p, e))?)
        }
        None => None,
    };
    let cfg = DiagnosticsConfig {
        seed: g.seed,
        density_sim_size: mc_size,
        chi_mc_size: mc_size,
        ..DiagnosticsConfig::default()
    };
    std::fs::create_dir_all(&g.output_dir)?;
    let written = write_diagnostics(&file, &ds.rows, boot.as_ref(), &g.output_dir, &cfg)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_bootstrap(g: &Global, model: &Path, nboot: usize, alpha: f64) -> CliResult<()> {
    let file = ModelFile::load(model)?;
    let cfg = BootstrapConfig {
        nboot,
        seed: g.seed,
        alpha,
        ..BootstrapConfig::default()
    };
    let result = parametric_bootstrap(&file, &cfg)?;
    let json = serde_json::to_string_pretty(&result).map_err(Error::from)? + "\n";
    let path = output_path(g, "bootstrap.json")?;
    std::fs::write(&path, json)?;
    let mut rows = Vec::new();
    for (name, iv) in ["kappa", "xi", "rho"].iter().zip(result.intervals()) {
        if let Some(iv) = iv {
            rows.push(vec![name.to_string(), iv.estimate.to_string(), iv.lower.to_string(), iv.upper.to_string()]);
        }
    }
    write_trace(&output_path(g, "intervals.csv")?, &["parameter", "estimate", "lower", "upper"], rows)?;
    print!("{}", render_report(&file, Some(result.intervals())));
    println!(
        "{:.0}% pivotal intervals from {} replicates ({} failed)",
        100.0 * (1.0 - alpha),
        result.nboot,
        result.failures
    );
    if let Some(note) = &result.note {
        println!("note: {note}");
    }
    println!("bootstrap written to {}", path.display());
    Ok(())
}

fn cmd_chi(g: &Global, data: Option<&Path>, model: Option<&Path>, pair: &[usize], p_grid: &str, mc_size: usize) -> CliResult<()> {
    let grid = parse_p_grid(p_grid)?;
    if pair.len() != 2 {
        return Err(Failure::Usage("--pair takes two column indices: i,j".into()));
    }
    let pair = (pair[0], pair[1]);
    if pair.0 == pair.1 {
        return Err(Failure::Usage("--pair needs two distinct columns".into()));
    }
    let curves = |side| -> CliResult<Vec<egpd::angular::ChiEstimate>> {
        Ok(match (data, model) {
            (Some(path), _) => {
                let ds = load_csv(path, &column_spec(g, &[])?)?;
                chi_curve(&ds.rows, &grid, side, pair)?
            }
            (None, Some(m)) => chi_model(&ModelFile::load(m)?.model, &grid, side, pair, mc_size, g.seed)?,
            (None, None) => return Err(Failure::Usage("chi needs a data file or --model".into())),
        })
    };
    let upper = curves(TailSide::Upper)?;
    let lower = curves(TailSide::Lower)?;
    let mut rows = Vec::new();
    for (name, c) in [("X", &upper), ("Y", &lower)] {
        for e in c.iter() {
            rows.push(vec![
                e.p.to_string(),
                name.to_string(),
                e.chi.to_string(),
                e.se.to_string(),
                e.joint_exceedances.to_string(),
                e.sparse.to_string(),
            ]);
        }
    }
    let path = output_path(g, "chi.csv")?;
    write_trace(&path, &["p", "curve", "chi", "se", "joint_exceedances", "sparse"], rows)?;
    println!("chi curves written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Fit { data, no_preprocess, trace } => cmd_fit(g, data, *no_preprocess, *trace),
        Command::Simulate {
            n,
            model,
            copula,
            alpha,
            margins,
            raw_scale,
        } => cmd_simulate(g, *n, model.as_deref(), *copula, *alpha, margins.as_deref(), *raw_scale),
        Command::Diagnose {
            data,
            model,
            bootstrap,
            no_preprocess,
            mc_size,
        } => cmd_diagnose(g, data, model, bootstrap.as_deref(), *no_preprocess, *mc_size),
        Command::Bootstrap { model, nboot, alpha } => cmd_bootstrap(g, model, *nboot, *alpha),
        Command::Chi {
            data,
            model,
            pair,
            p_grid,
            mc_size,
        } => cmd_chi(g, data.as_deref(), model.as_deref(), pair, p_grid, *mc_size),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::NotConverged) => {
            eprintln!("warning: the fit did not converge; the model was written but should be checked");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
    }
}
