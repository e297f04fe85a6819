use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nclasso::design_lab::{fmt17, gen_theta0, Dataset, DesignSpec, NoiseSpec};
use nclasso::harness::{
    emit_report, identification_suite, increment_instance, max_average_suite, oracle_equivalence, read_records, run_sweep,
    truncation_suite, SweepConfig, SweepRecord,
};
use nclasso::model_zoo::{LinkKind, ModelKind, ModelSpec, DEFAULT_TUKEY_T0};
use nclasso::rng::derive_seed;
use nclasso::solver::{lambda_for, manual_schedule, prox_gradient_fit, FitConfig};
use nclasso::theory_probe::ProbeReport;
use nclasso::Error;

#[derive(Parser)]
#[command(name = "nclasso", version, about = "l1-penalized nonconvex M-estimation: fits, sweeps and theory probes")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it to a file.
    Generate(GenerateArgs),
    /// Fit one dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo sweep from a config file.
    Sweep(SweepArgs),
    /// Run the identification, increment and concentration checks.
    Probe(ProbeArgs),
    /// Compare fits with the exhaustive grid oracle for d <= 3.
    OracleCheck(OracleArgs),
    /// Aggregate sweep files and probe results into summary and plot data.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Robust,
    Binary,
    Nls,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Laplace,
    Student,
    Contam,
}

#[derive(Args)]
struct ModelOpts {
    #[arg(long, value_enum, default_value = "robust")]
    model: ModelArg,
    /// Tukey cutoff for the robust model.
    #[arg(long, default_value_t = DEFAULT_TUKEY_T0)]
    t0: f64,
    /// Noise family; the nls model needs gaussian.
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    /// Noise standard deviation (laplace and student are rescaled to it; for
    /// contam it is the inner sd, with a 10% component at 10x).
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
}

impl ModelOpts {
    fn kind(&self) -> ModelKind {
        match self.model {
            ModelArg::Robust => ModelKind::Robust { t0: self.t0 },
            ModelArg::Binary => ModelKind::binary(),
            ModelArg::Nls => ModelKind::Nls {
                link: LinkKind::Tanh,
                noise_sd: self.noise_sd,
            },
        }
    }

    fn noise(&self) -> NoiseSpec {
        let sd = self.noise_sd;
        match self.noise {
            NoiseArg::Gaussian => NoiseSpec::gaussian(sd),
            NoiseArg::Laplace => NoiseSpec::Laplace {
                scale: sd / 2.0_f64.sqrt(),
            },
            NoiseArg::Student => NoiseSpec::StudentT {
                dof: 3.0,
                scale: sd / 3.0_f64.sqrt(),
            },
            NoiseArg::Contam => NoiseSpec::ContaminatedGaussian {
                sd1: sd,
                sd2: 10.0 * sd,
                mix: 0.1,
            },
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    s0: usize,
    #[arg(long, default_value_t = 1.0)]
    magnitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset path; the true coefficients go to `<out>.theta0`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelOpts,
    /// Dataset written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Penalty override; defaults to the model's schedule.
    #[arg(long)]
    lambda: Option<f64>,
    /// True coefficients, one per line, for error reporting.
    #[arg(long)]
    theta0: Option<PathBuf>,
    /// Fit config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON output path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ProbeKind {
    All,
    MaxAverage,
    Truncation,
    Identification,
    Increment,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, value_enum, default_value = "all")]
    which: ProbeKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scales every Monte Carlo size down by this factor.
    #[arg(long, default_value_t = 1)]
    shrink: usize,
    /// JSON-lines output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep CSV files, optionally as `tag=path`; the tag defaults to the file stem.
    #[arg(long = "input", required = true)]
    inputs: Vec<String>,
    /// Probe results (JSON lines).
    #[arg(long)]
    probes: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Checks(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 || rayon::ThreadPoolBuilder::new().num_threads(j).build_global().is_err() {
            eprintln!("error: --jobs must be a positive integer");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Sweep(a) => sweep(a, cli.jobs),
        Command::Probe(a) => probe(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::UnsupportedDimension(_) | Error::Parse { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(3),
            }
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> CmdResult {
    let kind = a.model.kind();
    let design = DesignSpec::rademacher(a.d, 1.0);
    let theta0 = gen_theta0(a.d, a.s0, a.magnitude, derive_seed(a.seed, "theta0", 0))?;
    let model = ModelSpec::new(kind, theta0)?;
    let data = Dataset::generate(&model, &design, &a.model.noise(), a.n, derive_seed(a.seed, "data", 0))?;
    data.write(&a.out)?;
    let theta_path = PathBuf::from(format!("{}.theta0", a.out.display()));
    let text: String = model.theta0.iter().map(|v| fmt17(*v) + "\n").collect();
    fs::write(&theta_path, text).map_err(|e| Error::io(&theta_path, e))?;
    eprintln!("wrote {} and {}", a.out.display(), theta_path.display());
    Ok(())
}

fn read_theta0(path: &Path) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                context: path.display().to_string(),
                msg: e.to_string(),
            })
        })
        .collect()
}

fn fit(a: FitArgs) -> CmdResult {
    let kind = a.model.kind();
    let mut data = Dataset::read(&a.data, Some(kind))?;
    if let Some(p) = &a.theta0 {
        data.theta0 = Some(read_theta0(p)?);
    }
    let (n, d, m_x) = (data.n(), data.d(), data.m_x());
    let schedule = match a.lambda {
        Some(l) => manual_schedule(&kind, l, n, d, m_x)?,
        None => lambda_for(&kind, n, d, m_x)?,
    };
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<FitConfig>(&text).map_err(|e| Error::Parse {
                context: p.display().to_string(),
                msg: e.to_string(),
            })?
        }
        None => FitConfig::default(),
    };
    if a.config.is_none() {
        config.seed = a.seed;
    }
    let result = prox_gradient_fit(&kind, &data, &schedule, &config)?;
    let json = serde_json::json!({
        "schedule": schedule,
        "fit": result,
    });
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&json).expect("json") + "\n"))
}

fn sweep(a: SweepArgs, jobs: Option<usize>) -> CmdResult {
    let mut config = SweepConfig::read(&a.config)?;
    if let Some(o) = a.out {
        config.output = o;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    let records = run_sweep(&config, jobs)?;
    let failed = records.iter().filter(|r| !r.converged).count();
    eprintln!("{} records written to {}; {failed} not converged", records.len(), config.output.display());
    Ok(())
}

fn run_probes(a: &ProbeArgs) -> Result<Vec<ProbeReport>, Error> {
    let k = a.shrink.max(1);
    let want = |p: ProbeKind| a.which == ProbeKind::All || a.which == p;
    let mut out = Vec::new();
    if want(ProbeKind::MaxAverage) {
        out.extend(max_average_suite((500 / k).max(200), derive_seed(a.seed, "max-average", 0))?);
    }
    if want(ProbeKind::Truncation) {
        out.extend(truncation_suite((10_000_000 / k).max(2), derive_seed(a.seed, "truncation", 0))?);
    }
    if want(ProbeKind::Identification) {
        out.extend(identification_suite((200 / k).max(10), (100_000 / k).max(1000), derive_seed(a.seed, "identification", 0))?);
    }
    if want(ProbeKind::Increment) {
        let p = increment_instance(2000, 50, (500 / k).max(100), (100_000 / k).max(1000), derive_seed(a.seed, "increment", 0))?;
        out.push(p.report);
    }
    Ok(out)
}

fn probe(a: ProbeArgs) -> CmdResult {
    let reports = run_probes(&a)?;
    let text: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    write_or_print(a.out.as_deref(), &text)?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Checks(format!("{failed} of {} checks failed", reports.len())));
    }
    eprintln!("all {} checks passed", reports.len());
    Ok(())
}

fn oracle_check(a: OracleArgs) -> CmdResult {
    let cases = oracle_equivalence(a.model.kind(), a.replicates, a.n, a.seed)?;
    for (i, c) in cases.iter().enumerate() {
        println!(
            "{i} d={} fit={} grid={} {}",
            c.d,
            fmt17(c.fit_objective),
            fmt17(c.grid_objective),
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed = cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Checks(format!("{failed} of {} instances above the grid optimum", cases.len())));
    }
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    let mut sets: Vec<(String, Vec<SweepRecord>)> = Vec::new();
    for input in &a.inputs {
        let (tag, path) = match input.split_once('=') {
            Some((t, p)) => (t.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(input);
                let t = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
                (t, p)
            }
        };
        sets.push((tag, read_records(&path)?));
    }
    let probes = match &a.probes {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::io(p, e))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(ProbeReport::from_json_line)
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let borrowed: Vec<(&str, &[SweepRecord])> = sets.iter().map(|(t, r)| (t.as_str(), r.as_slice())).collect();
    let summary = emit_report(&borrowed, &probes, &a.out)?;
    println!("{}", summary.line);
    if summary.probes_failed > 0 {
        return Err(Failure::Checks(format!("{} checks failed", summary.probes_failed)));
    }
    Ok(())
}
