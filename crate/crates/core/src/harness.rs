//! Monte Carlo sweeps over `(n, d, s0)`, rate-slope estimation, reports, and
//! the default probe instances shared by the CLI and the test suites.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::design_lab::{fmt17, gen_theta0, Dataset, DesignFamily, DesignSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::linalg::{median, quantile};
use crate::model_zoo::{true_risk_oracle, LinkKind, ModelKind, ModelSpec};
use crate::rng::derive_seed;
use crate::solver::{
    ball_b_radius, grid_oracle_refined, lambda_for, lambda_for_nls, manual_schedule, penalized_objective, prox_gradient_fit,
    rate_factor, FitConfig, PenaltySchedule,
};
use crate::theory_probe::{
    gradient_identification_check, increment_ratio_probe, lemma_max_average_check, lemma_subgaussian_truncation_check, Coupling,
    IncrementProbe, MaxAverageVariant, ProbeReport, DEFAULT_GAMMA_GRID,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaPolicy {
    Theory,
    Manual { value: f64 },
    NlsK { k: f64 },
    /// `c sqrt(ln(4nd) / n)` for any model.
    RateConstant { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
    pub s0: usize,
    pub magnitude: f64,
}

/// Design family and optional mixing width; the dimension comes from each cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignTemplate {
    pub family: DesignFamily,
    #[serde(default)]
    pub n_mix: Option<usize>,
}

impl DesignTemplate {
    pub fn spec(&self, d: usize) -> DesignSpec {
        DesignSpec {
            d,
            family: self.family,
            n_mix: self.n_mix,
        }
    }
}

pub const DEFAULT_RISK_MC_N: usize = 100_000;

fn default_risk_mc_n() -> usize {
    DEFAULT_RISK_MC_N
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub design: DesignTemplate,
    pub noise: NoiseSpec,
    pub cells: Vec<Cell>,
    pub replicates: usize,
    pub lambda_policy: LambdaPolicy,
    #[serde(default)]
    pub fit: FitConfig,
    pub master_seed: u64,
    pub output: PathBuf,
    /// Monte Carlo size for `R(theta0)` in the ball-B check.
    #[serde(default = "default_risk_mc_n")]
    pub risk_mc_n: usize,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Parse {
            context: "sweep config".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.noise.validate()?;
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be >= 1"));
        }
        if self.cells.is_empty() {
            return Err(Error::invalid("at least one cell is required"));
        }
        if self.risk_mc_n < 100 {
            return Err(Error::invalid("risk_mc_n must be >= 100"));
        }
        for c in &self.cells {
            if c.n == 0 || c.s0 == 0 || c.s0 > c.d {
                return Err(Error::invalid(format!("invalid cell n={} d={} s0={}", c.n, c.d, c.s0)));
            }
            if !(c.magnitude.is_finite() && c.magnitude > 0.0) {
                return Err(Error::invalid("cell magnitude must be positive"));
            }
            self.design.spec(c.d).validate()?;
            self.fit.validate(c.d)?;
        }
        match self.lambda_policy {
            LambdaPolicy::Manual { value } if !(value.is_finite() && value > 0.0) => {
                return Err(Error::invalid("manual lambda must be positive"))
            }
            LambdaPolicy::NlsK { k } if !matches!(self.model, ModelKind::Nls { .. }) || !(k > 0.0) => {
                return Err(Error::invalid("nls_k policy needs the nls model and k > 0"))
            }
            LambdaPolicy::RateConstant { c } if !(c.is_finite() && c > 0.0) => {
                return Err(Error::invalid("rate constant must be positive"))
            }
            _ => {}
        }
        crate::design_lab::check_noise_for(&self.model, &self.noise)?;
        Ok(())
    }

    /// The rate grid: `n in {500, 1000, 2000, 4000}`, `s0 in {2, 4}`, `d = 200`,
    /// unit magnitude, 20 replicates, Rademacher design, theoretical schedule.
    pub fn rate_grid(model: ModelKind, noise: NoiseSpec, master_seed: u64, output: PathBuf) -> Self {
        let mut cells = Vec::new();
        for s0 in [2, 4] {
            for n in [500, 1000, 2000, 4000] {
                cells.push(Cell { n, d: 200, s0, magnitude: 1.0 });
            }
        }
        SweepConfig {
            model,
            design: DesignTemplate {
                family: DesignFamily::Rademacher { scale: 1.0 },
                n_mix: None,
            },
            noise,
            cells,
            replicates: 20,
            lambda_policy: LambdaPolicy::Theory,
            fit: FitConfig::default(),
            master_seed,
            output,
            risk_mc_n: DEFAULT_RISK_MC_N,
        }
    }
}

fn ser17<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&fmt17(*v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: usize,
    pub d: usize,
    pub s0: usize,
    pub replicate: usize,
    pub seed: u64,
    #[serde(serialize_with = "ser17")]
    pub lambda: f64,
    #[serde(serialize_with = "ser17")]
    pub err_l1: f64,
    #[serde(serialize_with = "ser17")]
    pub err_l2: f64,
    pub support_recovered: bool,
    #[serde(serialize_with = "ser17")]
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_ball_b: bool,
    #[serde(serialize_with = "ser17")]
    pub wall_time_ms: f64,
}

pub const CSV_HEADER: &str = "n,d,s0,replicate,seed,lambda,err_l1,err_l2,support_recovered,objective,iterations,converged,in_ball_b,wall_time_ms";

/// Seed of replicate `replicate` in cell `cell`.
pub fn record_seed(master: u64, cell: usize, replicate: usize) -> u64 {
    derive_seed(master, "sweep", ((cell as u64) << 32) | replicate as u64)
}

pub fn schedule_for(model: &ModelKind, policy: &LambdaPolicy, n: usize, d: usize, m_x: f64) -> Result<PenaltySchedule> {
    match *policy {
        LambdaPolicy::Theory => lambda_for(model, n, d, m_x),
        LambdaPolicy::Manual { value } => manual_schedule(model, value, n, d, m_x),
        LambdaPolicy::NlsK { k } => lambda_for_nls(model, n, d, m_x, k),
        LambdaPolicy::RateConstant { c } => manual_schedule(model, c * rate_factor(n, d), n, d, m_x),
    }
}

/// Population risk at the truth: exact for nls (`sigma^2`), Monte Carlo otherwise.
pub fn risk_at_truth(model: &ModelSpec, design: &DesignSpec, noise: &NoiseSpec, mc_n: usize, seed: u64) -> Result<f64> {
    match model.kind {
        ModelKind::Nls { noise_sd, .. } => Ok(noise_sd * noise_sd),
        _ => Ok(true_risk_oracle(model, design, noise, &model.theta0, mc_n, seed)?.0),
    }
}

fn run_replicate(config: &SweepConfig, cell: &Cell, cell_index: usize, replicate: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let seed = record_seed(config.master_seed, cell_index, replicate);
    let design = config.design.spec(cell.d);
    let theta0 = gen_theta0(cell.d, cell.s0, cell.magnitude, derive_seed(seed, "theta0", 0))?;
    let model = ModelSpec::new(config.model, theta0)?;
    let data = Dataset::generate(&model, &design, &config.noise, cell.n, derive_seed(seed, "data", 0))?;
    let schedule = schedule_for(&config.model, &config.lambda_policy, cell.n, cell.d, design.m_x())?;
    let fit_cfg = FitConfig {
        seed: derive_seed(seed, "fit", 0),
        ..config.fit.clone()
    };
    let mut record = SweepRecord {
        n: cell.n,
        d: cell.d,
        s0: cell.s0,
        replicate,
        seed,
        lambda: schedule.lambda,
        err_l1: f64::NAN,
        err_l2: f64::NAN,
        support_recovered: false,
        objective: f64::NAN,
        iterations: 0,
        converged: false,
        in_ball_b: false,
        wall_time_ms: 0.0,
    };
    match prox_gradient_fit(&config.model, &data, &schedule, &fit_cfg) {
        Ok(fit) => {
            let r0 = risk_at_truth(&model, &design, &config.noise, config.risk_mc_n, derive_seed(seed, "risk0", 0))?;
            let l1_0: f64 = model.theta0.iter().map(|v| v.abs()).sum();
            let radius = ball_b_radius(schedule.lambda, r0, l1_0)?;
            record.err_l1 = fit.err_l1.unwrap_or(f64::NAN);
            record.err_l2 = fit.err_l2.unwrap_or(f64::NAN);
            record.support_recovered = fit
                .theta_hat
                .iter()
                .zip(&model.theta0)
                .all(|(a, b)| sign(*a) == sign(*b));
            record.objective = fit.objective;
            record.iterations = fit.iterations;
            record.converged = fit.converged;
            record.in_ball_b = fit.theta_hat.iter().map(|v| v.abs()).sum::<f64>() <= radius;
        }
        Err(Error::NumericalFailure { .. }) => {}
        Err(e) => return Err(e),
    }
    record.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Runs every `(cell, replicate)`, appending each finished cell to
/// `config.output` as CSV. `jobs` bounds the worker count.
pub fn run_sweep(config: &SweepConfig, jobs: Option<usize>) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let out = &config.output;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| Error::Parse {
        context: format!("writing {}", out.display()),
        msg: e.to_string(),
    };
    let mut body = move || -> Result<Vec<SweepRecord>> {
        let mut all = Vec::new();
        for (ci, cell) in config.cells.iter().enumerate() {
            let rows = (0..config.replicates)
                .into_par_iter()
                .map(|r| run_replicate(config, cell, ci, r))
                .collect::<Result<Vec<_>>>()?;
            for row in &rows {
                writer.serialize(row).map_err(io_err)?;
            }
            writer.flush().map_err(|e| Error::io(out, e))?;
            all.extend(rows);
        }
        Ok(all)
    };
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        msg: e.to_string(),
    })?;
    reader
        .deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                context: path.display().to_string(),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// CSV text with the trailing `wall_time_ms` column removed.
pub fn without_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// `s0 sqrt(ln(nd) / n)`.
    S0SqrtLogOverN,
    NOnly,
    S0Only,
}

impl Predictor {
    pub fn value(&self, n: usize, d: usize, s0: usize) -> f64 {
        match self {
            Predictor::S0SqrtLogOverN => s0 as f64 * ((n as f64 * d as f64).ln() / n as f64).sqrt(),
            Predictor::NOnly => n as f64,
            Predictor::S0Only => s0 as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub d: usize,
    pub s0: usize,
    pub replicates: usize,
    pub median_err_l1: f64,
    pub iqr_err_l1: f64,
    pub median_err_l2: f64,
    pub iqr_err_l2: f64,
    pub convergence_rate: f64,
    pub ball_b_fraction: f64,
}

fn finite(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.filter(|v| v.is_finite()).collect()
}

fn stat_or_nan(v: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        f(v)
    }
}

/// Per-cell summaries in order of first appearance.
pub fn summarize(records: &[SweepRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, usize, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.n, r.d, r.s0)) {
            keys.push((r.n, r.d, r.s0));
        }
    }
    keys.into_iter()
        .map(|(n, d, s0)| {
            let rows: Vec<&SweepRecord> = records.iter().filter(|r| (r.n, r.d, r.s0) == (n, d, s0)).collect();
            let l1 = finite(rows.iter().map(|r| r.err_l1));
            let l2 = finite(rows.iter().map(|r| r.err_l2));
            let iqr = |v: &[f64]| quantile(v, 0.75) - quantile(v, 0.25);
            let k = rows.len() as f64;
            CellSummary {
                n,
                d,
                s0,
                replicates: rows.len(),
                median_err_l1: stat_or_nan(&l1, median),
                iqr_err_l1: stat_or_nan(&l1, iqr),
                median_err_l2: stat_or_nan(&l2, median),
                iqr_err_l2: stat_or_nan(&l2, iqr),
                convergence_rate: rows.iter().filter(|r| r.converged).count() as f64 / k,
                ball_b_fraction: rows.iter().filter(|r| r.in_ball_b).count() as f64 / k,
            }
        })
        .collect()
}

/// OLS of `log(median err_l1)` per cell on `log(predictor)`.
pub fn rate_slope(records: &[SweepRecord], predictor: Predictor) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = summarize(records)
        .iter()
        .map(|c| (predictor.value(c.n, c.d, c.s0), c.median_err_l1))
        .collect();
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid("rate_slope needs at least 3 distinct predictor values"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("rate_slope needs positive predictors and median errors"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub cells: usize,
    pub probes_passed: usize,
    pub probes_failed: usize,
    pub line: String,
}

/// Writes `summary.csv`, one `plot_<model>.dat` per record set, `probes.jsonl`,
/// `roster.txt` and `summary.txt` into `out_dir`.
pub fn emit_report(sets: &[(&str, &[SweepRecord])], probes: &[ProbeReport], out_dir: &Path) -> Result<ReportSummary> {
    if sets.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::invalid("emit_report needs at least one record"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };

    let mut summary = String::from(
        "model,n,d,s0,replicates,median_err_l1,iqr_err_l1,median_err_l2,iqr_err_l2,convergence_rate,ball_b_fraction\n",
    );
    let mut cells = 0;
    for (tag, records) in sets {
        let cs = summarize(records);
        cells += cs.len();
        let mut plot = String::from("# s0*sqrt(ln(n*d)/n) median_err_l1\n");
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for c in &cs {
            summary.push_str(&format!(
                "{tag},{},{},{},{},{},{},{},{},{},{}\n",
                c.n,
                c.d,
                c.s0,
                c.replicates,
                fmt17(c.median_err_l1),
                fmt17(c.iqr_err_l1),
                fmt17(c.median_err_l2),
                fmt17(c.iqr_err_l2),
                fmt17(c.convergence_rate),
                fmt17(c.ball_b_fraction)
            ));
            pts.push((Predictor::S0SqrtLogOverN.value(c.n, c.d, c.s0), c.median_err_l1));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (x, y) in pts {
            plot.push_str(&format!("{} {}\n", fmt17(x), fmt17(y)));
        }
        write(&format!("plot_{tag}.dat"), &plot)?;
    }
    write("summary.csv", &summary)?;

    let mut jsonl = String::new();
    let mut roster = String::from("# status check_name margin\n");
    for p in probes {
        jsonl.push_str(&p.to_json_line());
        jsonl.push('\n');
        roster.push_str(&format!("{} {} {}\n", if p.passed { "PASS" } else { "FAIL" }, p.check_name, fmt17(p.margin)));
    }
    write("probes.jsonl", &jsonl)?;
    write("roster.txt", &roster)?;
    let passed = probes.iter().filter(|p| p.passed).count();
    let failed = probes.len() - passed;
    let line = format!("checks passed: {passed}/{}; failed: {failed}", probes.len());
    write("summary.txt", &format!("{line}\n"))?;
    Ok(ReportSummary {
        cells,
        probes_passed: passed,
        probes_failed: failed,
        line,
    })
}

// Default probe instances.

pub const PROBE_D: usize = 10;
pub const PROBE_S0: usize = 2;

/// Rademacher design, `d = 10`, `s0 = 2` unit coefficients; Gaussian noise with
/// unit sd for the robust model.
pub fn default_probe_instance(kind: ModelKind, seed: u64) -> Result<(ModelSpec, DesignSpec, NoiseSpec)> {
    let design = DesignSpec::rademacher(PROBE_D, 1.0);
    let theta0 = gen_theta0(PROBE_D, PROBE_S0, 1.0, derive_seed(seed, "probe-theta0", 0))?;
    let noise = match kind {
        ModelKind::Nls { noise_sd, .. } => NoiseSpec::gaussian(noise_sd),
        _ => NoiseSpec::gaussian(1.0),
    };
    Ok((ModelSpec::new(kind, theta0)?, design, noise))
}

pub const MAX_AVERAGE_CELLS: [(usize, usize); 3] = [(100, 10), (400, 100), (1600, 1000)];

/// Max-average bounds for both variants on [`MAX_AVERAGE_CELLS`].
pub fn max_average_suite(reps: usize, seed: u64) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for variant in [MaxAverageVariant::Bounded, MaxAverageVariant::GaussianTimesBounded] {
        for (k, &(n, d)) in MAX_AVERAGE_CELLS.iter().enumerate() {
            out.push(lemma_max_average_check(1.0, n, d, reps, variant, derive_seed(seed, "max-average", k as u64))?);
        }
    }
    Ok(out)
}

pub const TRUNCATION_CASES: [(f64, f64, f64); 3] = [(1.0, 1.0, 0.1), (1.0, 4.0, 0.05), (2.0, 1.0, 0.5)];

pub fn truncation_suite(mc_n: usize, seed: u64) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for (k, &(v, vp, delta)) in TRUNCATION_CASES.iter().enumerate() {
        for coupling in [Coupling::Independent, Coupling::Identical] {
            out.push(lemma_subgaussian_truncation_check(v, vp, delta, coupling, mc_n, derive_seed(seed, "truncation", k as u64))?);
        }
    }
    Ok(out)
}

/// Identification checks on the default robust and binary instances over the
/// default gamma grid.
pub fn identification_suite(n_dirs: usize, mc_n: usize, seed: u64) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for kind in [ModelKind::robust(), ModelKind::binary()] {
        let (model, design, noise) = default_probe_instance(kind, seed)?;
        for (k, &gamma) in DEFAULT_GAMMA_GRID.iter().enumerate() {
            let s = derive_seed(seed, kind.tag(), k as u64);
            for mut r in gradient_identification_check(&model, &design, &noise, n_dirs, gamma, mc_n, s)? {
                r.check_name = format!("{}:{}", kind.tag(), r.check_name);
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Increment probe on a robust instance with `s0 = 2`, Rademacher design and
/// unit Gaussian noise under the theoretical schedule.
pub fn increment_instance(n: usize, d: usize, n_probe: usize, oracle_mc_n: usize, seed: u64) -> Result<IncrementProbe> {
    let design = DesignSpec::rademacher(d, 1.0);
    let noise = NoiseSpec::gaussian(1.0);
    let theta0 = gen_theta0(d, 2, 1.0, derive_seed(seed, "incr-theta0", 0))?;
    let model = ModelSpec::new(ModelKind::robust(), theta0)?;
    let data = Dataset::generate(&model, &design, &noise, n, derive_seed(seed, "incr-data", 0))?;
    let schedule = lambda_for(&model.kind, n, d, design.m_x())?;
    increment_ratio_probe(&model, &design, &noise, &data, &schedule, n_probe, oracle_mc_n, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCase {
    pub d: usize,
    pub fit_objective: f64,
    pub grid_objective: f64,
    pub passed: bool,
}

/// Half-width of the grid box for the oracle comparison.
pub const ORACLE_BOX: f64 = 3.0;

fn oracle_points(d: usize) -> usize {
    match d {
        1 => 2001,
        2 => 201,
        _ => 61,
    }
}

/// Noise paired with `kind` in the oracle and sweep defaults.
pub fn default_noise(kind: &ModelKind) -> NoiseSpec {
    match *kind {
        ModelKind::Nls { noise_sd, .. } => NoiseSpec::gaussian(noise_sd),
        _ => NoiseSpec::gaussian(1.0),
    }
}

/// Compares best-of-restarts fits with the refined grid oracle on random
/// instances with `d` cycling through 1, 2, 3 under the theoretical schedule.
pub fn oracle_equivalence(kind: ModelKind, instances: usize, n: usize, seed: u64) -> Result<Vec<OracleCase>> {
    let noise = default_noise(&kind);
    (0..instances)
        .map(|i| {
            let d = 1 + i % 3;
            let s = derive_seed(seed, "oracle", i as u64);
            let design = DesignSpec::rademacher(d, 1.0);
            let s0 = 1 + (derive_seed(s, "s0", 0) % d as u64) as usize;
            let theta0 = gen_theta0(d, s0, 1.0, derive_seed(s, "theta0", 0))?;
            let model = ModelSpec::new(kind, theta0)?;
            let data = Dataset::generate(&model, &design, &noise, n, derive_seed(s, "data", 0))?;
            let schedule = lambda_for(&kind, n, d, design.m_x())?;
            let cfg = FitConfig {
                seed: derive_seed(s, "fit", 0),
                ..FitConfig::default()
            };
            let fit = prox_gradient_fit(&kind, &data, &schedule, &cfg)?;
            let grid = grid_oracle_refined(&kind, &data, schedule.lambda, ORACLE_BOX, oracle_points(d))?;
            // re-evaluate so both sides use the same summation
            let fit_objective = penalized_objective(&kind, &data.x, &data.y, schedule.lambda, &fit.theta_hat)?;
            Ok(OracleCase {
                d,
                fit_objective,
                grid_objective: grid.objective_star,
                passed: fit_objective <= grid.objective_star + 1e-6 * (1.0 + fit_objective.abs()),
            })
        })
        .collect()
}

/// The three models with their default hyperparameters: Tukey `t0 = 4.685`,
/// logistic binary, tanh nls with `sigma = 0.5`.
pub fn default_models() -> [ModelKind; 3] {
    [
        ModelKind::robust(),
        ModelKind::binary(),
        ModelKind::Nls {
            link: LinkKind::Tanh,
            noise_sd: 0.5,
        },
    ]
}
