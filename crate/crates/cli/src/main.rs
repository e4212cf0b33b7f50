use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vbsparse::posterior::summarize;
use vbsparse::seqmodel::coordinate_interval;
use vbsparse::simulate::COVERAGE_ZETA;
use vbsparse::{
    find_scenario, fit_means, fit_vb_empirical, lasso_fit, read_csv, run_scenario, scenario_catalog, standardize,
    CoverageReport, Lambda, LassoOptions, MetricsReport, PriorConfig, ScenarioSpec,
};

#[derive(Debug, Parser)]
#[command(name = "vbsparse", version, about = "Variational empirical-Bayes sparse regression")]
struct Cli {
    /// Worker threads for replications and grid fits.
    #[arg(long, global = true, env = "VBSPARSE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a dataset given as CSV with a `y` column.
    Fit(FitArgs),
    /// Run a catalog scenario or a scenario JSON file.
    Simulate(SimulateArgs),
    /// Closed-form fit of the normal means model to the `y` column of a CSV.
    MeansFit(MeansFitArgs),
    /// List the built-in scenarios.
    Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Overrides applied on top of the defaults or a `--config` file.
#[derive(Debug, Args)]
struct PriorArgs {
    /// JSON file with prior settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "grid-L")]
    grid_len: Option<usize>,
    #[arg(long)]
    grid_lo: Option<f64>,
    #[arg(long)]
    grid_hi: Option<f64>,
}

impl PriorArgs {
    fn resolve(&self) -> Result<PriorConfig, CliError> {
        let mut prior: PriorConfig = match &self.config {
            Some(path) => {
                let text = read_text(path)?;
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            }
            None => PriorConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut prior.alpha, self.alpha);
        set(&mut prior.gamma, self.gamma);
        set(&mut prior.a, self.a);
        set(&mut prior.c, self.c);
        set(&mut prior.a0, self.a0);
        set(&mut prior.b0, self.b0);
        set(&mut prior.delta, self.delta);
        set(&mut prior.grid_lo_frac, self.grid_lo);
        set(&mut prior.grid_hi_frac, self.grid_hi);
        if let Some(l) = self.grid_len {
            prior.grid_len = l;
        }
        prior.validate()?;
        Ok(prior)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    csv: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    /// Anchor the noise-variance grid here instead of at the lasso estimate.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Lasso penalty; `auto` selects it by cross-validation.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Emit the complete fit, including every grid point's state.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Catalog name or path to a scenario JSON file.
    scenario: String,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for metrics.csv, metrics.json and, for means scenarios, coverage.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the metrics written to stdout when `--out` is absent.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct MeansFitArgs {
    csv: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    /// Known noise variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Tail probability of each side of the credible intervals.
    #[arg(long, default_value_t = COVERAGE_ZETA)]
    zeta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] vbsparse::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn open_csv(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn parse_lambda(s: &str) -> Result<Lambda, CliError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Lambda::Auto);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(Lambda::Fixed)
        .ok_or_else(|| CliError::Input(format!("--lambda must be `auto` or a positive number, got {s:?}")))
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let prior = args.prior.resolve()?;
    let lambda = parse_lambda(&args.lambda)?;
    if let Some(s2) = args.sigma2 {
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(CliError::Input(format!("--sigma2 must be positive, got {s2}")));
        }
    }
    let (x, y, names) = read_csv(open_csv(&args.csv)?)?;
    let data = standardize(x.view(), y.view())?;
    let mut lasso = lasso_fit(&data, lambda, &LassoOptions::default())?;
    if let Some(s2) = args.sigma2 {
        lasso.sigma2_hat = s2;
    }
    let fit = fit_vb_empirical(&data, &prior, &lasso)?;
    let body = if args.full {
        serde_json::to_string_pretty(&fit)?
    } else {
        #[derive(Serialize)]
        struct Report<'a> {
            columns: &'a [String],
            #[serde(flatten)]
            summary: vbsparse::FitSummary,
        }
        serde_json::to_string_pretty(&Report { columns: &names, summary: summarize(&fit) })?
    };
    emit(args.out.as_deref(), &(body + "\n"))
}

fn load_scenario(arg: &str) -> Result<(String, ScenarioSpec), CliError> {
    if let Some(spec) = find_scenario(arg) {
        return Ok((arg.to_string(), spec));
    }
    let path = Path::new(arg);
    if path.is_file() {
        let spec: ScenarioSpec =
            serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{arg}: {e}")))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| arg.to_string());
        return Ok((name, spec));
    }
    let names: Vec<String> = scenario_catalog().into_iter().map(|(n, _)| n).collect();
    Err(CliError::Input(format!("unknown scenario {arg:?}; valid names: {}", names.join(", "))))
}

fn metrics_csv(rows: &[MetricsReport]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MetricsReport::CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

fn coverage_csv(report: &CoverageReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in report.leading_fifth() {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let prior = args.prior.resolve()?;
    let (name, mut spec) = load_scenario(&args.scenario)?;
    if let Some(r) = args.reps {
        spec.replications = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let run = run_scenario(&name, &spec, &prior, &LassoOptions::default())?;
    for m in &run.metrics {
        log::info!(
            "{} {}: mean runtime {:.3} s over {} replications",
            m.scenario,
            m.method,
            m.runtime_sec_mean,
            m.replications
        );
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("metrics.csv"), metrics_csv(&run.metrics)?)?;
            fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&run.metrics)? + "\n")?;
            if let Some(cov) = &run.coverage {
                fs::write(dir.join("coverage.csv"), coverage_csv(cov)?)?;
            }
            Ok(())
        }
        None => match args.format {
            Format::Csv => emit(None, &metrics_csv(&run.metrics)?),
            Format::Json => emit(None, &(serde_json::to_string_pretty(&run.metrics)? + "\n")),
        },
    }
}

fn cmd_means_fit(args: &MeansFitArgs) -> Result<(), CliError> {
    let prior = args.prior.resolve()?;
    if !(args.zeta > 0.0 && args.zeta < 0.5) {
        return Err(vbsparse::Error::InvalidLevel(args.zeta).into());
    }
    let (_, y, _) = read_csv(open_csv(&args.csv)?)?;
    let fit = fit_means(y.view(), args.sigma2, &prior)?;
    #[derive(Serialize)]
    struct Report {
        lambda_n: f64,
        sigma2: f64,
        tau2: f64,
        zeta: f64,
        selected: Vec<usize>,
        mu: Vec<f64>,
        phi: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    }
    let (lower, upper) = (0..y.len()).map(|i| coordinate_interval(&fit, i, args.zeta)).unzip();
    let report = Report {
        lambda_n: fit.lambda_n,
        sigma2: fit.sigma2,
        tau2: fit.tau2,
        zeta: args.zeta,
        selected: fit.selected(),
        mu: fit.mu.to_vec(),
        phi: fit.phi.to_vec(),
        lower,
        upper,
    };
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn cmd_catalog() -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "design", "n", "p", "s", "rho", "sigma_true", "seed", "replications"])?;
    for (name, s) in scenario_catalog() {
        let design = serde_json::to_value(s.design)?.as_str().unwrap_or_default().to_string();
        w.write_record([
            name,
            design,
            s.n.to_string(),
            s.p.to_string(),
            s.s.to_string(),
            s.rho.to_string(),
            s.sigma_true.to_string(),
            s.seed.to_string(),
            s.replications.to_string(),
        ])?;
    }
    emit(None, &String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::MeansFit(a) => cmd_means_fit(a),
        Command::Catalog => cmd_catalog(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(CliError::Input(format!("cannot start worker pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
