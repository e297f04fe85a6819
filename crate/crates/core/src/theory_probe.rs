//! Numerical checks of the identification, curvature and concentration
//! conditions behind the estimation rate.
//!
//! Every check is reported as an upper-bound inequality `measured <= bound`.
//! Lower-bound statements `a >= b` are reported with `measured = -a` and
//! `bound = -b`, so `margin = bound - measured` is nonnegative exactly when the
//! inequality holds without slack.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_lab::{fmt17, rho_x_of, Dataset, DesignSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, mean_and_se, norm_inf, norm_l1, norm_l2};
use crate::model_zoo::{
    link_raw, population_moments, risk, tukey_rho_deriv_raw, true_risk_oracle, LinkKind, ModelKind, ModelSpec,
};
use crate::quadrature::integrate;
use crate::rng::{self, fill_rademacher};
use crate::solver::{ball_b_radius, lambda_path, FitConfig, PenaltySchedule};

/// Standard errors of slack granted to Monte Carlo checks.
pub const MC_SLACK_SE: f64 = 5.0;

/// Absolute tolerance of the quadrature for `g`.
pub const G_QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub check_name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub mc_std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl ProbeReport {
    /// Builds a report; `passed` follows from `measured <= bound + 5 se` (Monte
    /// Carlo) or `measured <= bound` (deterministic, `se = 0`).
    pub fn new(check_name: impl Into<String>, measured: f64, bound: f64, mc_std_error: f64, n_samples: u64, seed: u64) -> Self {
        let slack = MC_SLACK_SE * mc_std_error;
        ProbeReport {
            check_name: check_name.into(),
            passed: measured <= bound + slack,
            measured,
            bound,
            margin: bound - measured,
            mc_std_error,
            n_samples,
            seed,
        }
    }

    /// One JSON object per line, numbers with 17 significant digits.
    pub fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(200);
        let name = serde_json::to_string(&self.check_name).expect("string serializes");
        let _ = write!(
            s,
            "{{\"check_name\":{name},\"passed\":{},\"measured\":{},\"bound\":{},\"margin\":{},\"mc_std_error\":{},\"n_samples\":{},\"seed\":{}}}",
            self.passed,
            json_num(self.measured),
            json_num(self.bound),
            json_num(self.margin),
            json_num(self.mc_std_error),
            self.n_samples,
            self.seed
        );
        s
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse {
            context: "probe report".into(),
            msg: e.to_string(),
        })
    }
}

fn json_num(v: f64) -> String {
    if v.is_finite() {
        fmt17(v)
    } else {
        // JSON has no infinities
        "null".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GMethod {
    Quadrature,
    MonteCarlo { n: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GEstimate {
    pub value: f64,
    /// Quadrature error estimate, or Monte Carlo standard error.
    pub std_error: f64,
    pub method: GMethod,
    /// Quadrature did not reach its tolerance and Monte Carlo was used instead.
    pub fell_back: bool,
}

const FALLBACK_MC_N: usize = 1_000_000;

/// `g(t) = E[rho'(t + eps)]` for Tukey's loss with cutoff `t0`.
pub fn estimate_g(noise: &NoiseSpec, t0: f64, t: f64, method: GMethod) -> Result<GEstimate> {
    noise.validate()?;
    if !(t0 > 0.0 && t.is_finite()) {
        return Err(Error::invalid("estimate_g needs t0 > 0 and finite t"));
    }
    match method {
        GMethod::Quadrature => {
            if noise.pdf(0.0).is_none() {
                // point mass at zero
                return Ok(GEstimate {
                    value: tukey_rho_deriv_raw(t, t0),
                    std_error: 0.0,
                    method,
                    fell_back: false,
                });
            }
            // substitute u = t + e: rho' vanishes outside [-t0, t0]
            let integrand = |u: f64| tukey_rho_deriv_raw(u, t0) * noise.pdf(u - t).unwrap_or(0.0);
            let mut value = 0.0;
            let mut error = 0.0;
            let mut ok = true;
            // split at the density's possible kink (u = t) and at the origin
            let mut cuts = vec![-t0, t0];
            for c in [0.0, t] {
                if c > -t0 && c < t0 {
                    cuts.push(c);
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let per_piece = G_QUAD_TOL / (cuts.len() - 1) as f64;
            for w in cuts.windows(2) {
                let r = integrate(integrand, w[0], w[1], per_piece);
                value += r.value;
                error += r.error;
                ok &= r.converged;
            }
            if ok {
                Ok(GEstimate {
                    value,
                    std_error: error,
                    method,
                    fell_back: false,
                })
            } else {
                let mc = estimate_g(
                    noise,
                    t0,
                    t,
                    GMethod::MonteCarlo {
                        n: FALLBACK_MC_N,
                        seed: rng::derive_seed(0, "g-fallback", t.to_bits()),
                    },
                )?;
                Ok(GEstimate { fell_back: true, ..mc })
            }
        }
        GMethod::MonteCarlo { n, seed } => {
            if n < 2 {
                return Err(Error::invalid("Monte Carlo g needs n >= 2"));
            }
            let chunk = 1 << 16;
            let parts: Vec<(f64, f64)> = (0..n.div_ceil(chunk))
                .into_par_iter()
                .map(|c| {
                    let mut r = rng::stream(seed, "g-mc", c as u64);
                    let m = chunk.min(n - c * chunk);
                    let (mut s, mut q) = (0.0, 0.0);
                    for _ in 0..m {
                        let v = tukey_rho_deriv_raw(t + noise.sample(&mut r), t0);
                        s += v;
                        q += v * v;
                    }
                    (s, q)
                })
                .collect();
            let (s, q) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
            let nf = n as f64;
            let mean = s / nf;
            let var = ((q - nf * mean * mean) / (nf - 1.0)).max(0.0);
            Ok(GEstimate {
                value: mean,
                std_error: (var / nf).sqrt(),
                method,
                fell_back: false,
            })
        }
    }
}

fn g_quad(noise: &NoiseSpec, t0: f64, t: f64) -> Result<f64> {
    Ok(estimate_g(noise, t0, t, GMethod::Quadrature)?.value)
}

/// Central-difference `g'(0)` with step `1e-4 t0` on quadrature values.
pub fn g_prime_zero(noise: &NoiseSpec, t0: f64) -> Result<f64> {
    let h = 1e-4 * t0;
    Ok((g_quad(noise, t0, h)? - g_quad(noise, t0, -h)?) / (2.0 * h))
}

/// Smallest ratio of `g(t)/t` over the given positive points; `g` is odd so
/// positive `t` suffice.
fn min_g_ratio(noise: &NoiseSpec, t0: f64, points: &[f64]) -> Result<f64> {
    let vals = points
        .par_iter()
        .map(|&t| g_quad(noise, t0, t).map(|g| g / t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// `L(s) = inf_{0 < t <= s} g(t)/t`, approximated on `grid` log-spaced points
/// spanning `[1e-4 s, s]`.
pub fn estimate_big_l(noise: &NoiseSpec, t0: f64, s: f64, grid: usize) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("s must be positive"));
    }
    if grid < 100 {
        return Err(Error::invalid("grid must have at least 100 points"));
    }
    let lo = (1e-4 * s).ln();
    let hi = s.ln();
    let points: Vec<f64> = (0..grid)
        .map(|k| (lo + (hi - lo) * k as f64 / (grid - 1) as f64).exp())
        .collect();
    min_g_ratio(noise, t0, &points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSpec {
    /// l2 radius around theta0.
    pub gamma: f64,
    /// Radius of the strong-convexity neighbourhood.
    pub eta_star: f64,
    /// Bound on `|theta0|_2` (binary and nls).
    pub m_0: f64,
}

impl CurvatureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.eta_star > 0.0 && self.m_0 > 0.0) {
            return Err(Error::invalid("gamma, eta_star and m_0 must be positive"));
        }
        Ok(())
    }
}

pub const DEFAULT_ETA_STAR: f64 = 1.0;
pub const DEFAULT_GAMMA_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const BIG_L_GRID: usize = 200;

/// Tail radius for the robust curvature bound: `2 sqrt(M_X^2 gamma^2 ln(8 sqrt2 M_X^2 / rho_X))`.
pub fn robust_tail_radius(gamma: f64, m_x: f64, rho_x: f64) -> f64 {
    2.0 * (m_x * m_x * gamma * gamma * (8.0 * 2.0_f64.sqrt() * m_x * m_x / rho_x).ln()).sqrt()
}

/// Tail radius for the link models: `2 M_X max(gamma, M_0) sqrt(ln(16 sqrt2 M_X^2 / rho_X))`.
pub fn link_tail_radius(gamma: f64, m_0: f64, m_x: f64, rho_x: f64) -> f64 {
    2.0 * m_x * gamma.max(m_0) * (16.0 * 2.0_f64.sqrt() * m_x * m_x / rho_x).ln().sqrt()
}

fn link_min_deriv_sq(link: LinkKind, radius: f64) -> f64 {
    // both links have derivatives decreasing in |t|
    link_raw(link, radius).1.powi(2)
}

/// Lower bound `c(gamma)` on `grad R(theta)^T (theta - theta0) / |theta - theta0|_2^2`
/// over `|theta - theta0|_2 <= gamma`.
pub fn curvature_constant(model: &ModelKind, spec: &CurvatureSpec, m_x: f64, rho_x: f64, noise: &NoiseSpec) -> Result<f64> {
    spec.validate()?;
    if !(m_x > 0.0 && rho_x > 0.0 && rho_x <= m_x * m_x * (1.0 + 1e-12)) {
        return Err(Error::invalid("need m_x > 0 and 0 < rho_x <= m_x^2"));
    }
    match *model {
        ModelKind::Robust { t0 } => {
            let s = robust_tail_radius(spec.gamma, m_x, rho_x);
            Ok(estimate_big_l(noise, t0, s, BIG_L_GRID)? * rho_x / 2.0)
        }
        ModelKind::Binary { link } | ModelKind::Nls { link, .. } => {
            let s = link_tail_radius(spec.gamma, spec.m_0, m_x, rho_x);
            Ok(link_min_deriv_sq(link, 2.0 * s) * rho_x)
        }
    }
}

fn unit_direction<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm_l2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Worst standardized violation among `(measured_i, se_i)` against a common bound.
fn worst_case(measured: &[f64], se: &[f64], bound: f64) -> usize {
    let score = |i: usize| {
        let excess = measured[i] - bound;
        if se[i] > 0.0 {
            excess / se[i]
        } else if excess > 0.0 {
            f64::INFINITY
        } else {
            excess
        }
    };
    (0..measured.len())
        .max_by(|&a, &b| score(a).total_cmp(&score(b)))
        .expect("nonempty")
}

/// Monte Carlo check that `grad R(theta)^T (theta - theta0) >= 0` and that the
/// ratio to `|theta - theta0|_2^2` stays above `c(gamma)` on random points with
/// `|theta - theta0|_2 <= gamma`.
///
/// Returns two reports: the inner-product sign check and the ratio check.
pub fn gradient_identification_check(
    model: &ModelSpec,
    design: &DesignSpec,
    noise: &NoiseSpec,
    n_dirs: usize,
    gamma: f64,
    mc_n: usize,
    seed: u64,
) -> Result<Vec<ProbeReport>> {
    if n_dirs < 10 {
        return Err(Error::invalid("n_dirs must be >= 10"));
    }
    let d = model.d();
    let rho_x = rho_x_of(design)?;
    let m_x = design.m_x();
    let spec = CurvatureSpec {
        gamma,
        eta_star: gamma,
        m_0: norm_l2(&model.theta0),
    };
    let c = curvature_constant(&model.kind, &spec, m_x, rho_x, noise)?;

    let mut rng = rng::stream(seed, "ident-dirs", 0);
    let offsets: Vec<Vec<f64>> = (0..n_dirs)
        .map(|_| {
            let u = unit_direction(&mut rng, d);
            // radii in (0.05 gamma, gamma]; the ratio is undefined at theta0
            let delta = gamma * (0.05 + 0.95 * (1.0 - rng.random::<f64>()));
            u.into_iter().map(|x| delta * x).collect()
        })
        .collect();
    let thetas: Vec<Vec<f64>> = offsets
        .iter()
        .map(|o| model.theta0.iter().zip(o).map(|(a, b)| a + b).collect())
        .collect();
    let kind = model.kind;
    let moments = population_moments(model, design, noise, mc_n, rng::derive_seed(seed, "ident-mc", 0), n_dirs, |row, y, out| {
        for (k, (th, off)) in thetas.iter().zip(&offsets).enumerate() {
            let (_, dl) = kind.loss_and_deriv(dot(row, th), y);
            out[k] = dl * dot(row, off);
        }
    })?;
    let sq: Vec<f64> = offsets.iter().map(|o| norm_l2(o).powi(2)).collect();

    let neg_inner: Vec<f64> = moments.iter().map(|m| -m.0).collect();
    let inner_se: Vec<f64> = moments.iter().map(|m| m.1).collect();
    let i = worst_case(&neg_inner, &inner_se, 0.0);
    let inner = ProbeReport::new(format!("identification_inner[gamma={gamma}]"), neg_inner[i], 0.0, inner_se[i], mc_n as u64, seed);

    let neg_ratio: Vec<f64> = moments.iter().zip(&sq).map(|(m, s)| -m.0 / s).collect();
    let ratio_se: Vec<f64> = moments.iter().zip(&sq).map(|(m, s)| m.1 / s).collect();
    let j = worst_case(&neg_ratio, &ratio_se, -c);
    let ratio = ProbeReport::new(format!("identification_ratio[gamma={gamma}]"), neg_ratio[j], -c, ratio_se[j], mc_n as u64, seed);
    Ok(vec![inner, ratio])
}

/// Scans `2 (R(theta) - R(theta0)) / |theta - theta0|_2^2` on rays out to
/// `eta_star` and compares its minimum with `c(eta_star)`.
pub fn risk_curvature_scan(
    model: &ModelSpec,
    design: &DesignSpec,
    noise: &NoiseSpec,
    eta_star: f64,
    n_radii: usize,
    mc_n: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if !(eta_star > 0.0) || n_radii == 0 {
        return Err(Error::invalid("need eta_star > 0 and n_radii >= 1"));
    }
    const N_RAYS: usize = 8;
    let d = model.d();
    let spec = CurvatureSpec {
        gamma: eta_star,
        eta_star,
        m_0: norm_l2(&model.theta0),
    };
    let c = curvature_constant(&model.kind, &spec, design.m_x(), rho_x_of(design)?, noise)?;
    let mut rng = rng::stream(seed, "curv-rays", 0);
    let mut offsets = Vec::with_capacity(N_RAYS * n_radii);
    for _ in 0..N_RAYS {
        let u = unit_direction(&mut rng, d);
        for k in 1..=n_radii {
            let r = eta_star * k as f64 / n_radii as f64;
            offsets.push(u.iter().map(|x| r * x).collect::<Vec<f64>>());
        }
    }
    let kind = model.kind;
    let theta0 = &model.theta0;
    let moments = population_moments(model, design, noise, mc_n, rng::derive_seed(seed, "curv-mc", 0), offsets.len(), |row, y, out| {
        let base_index = dot(row, theta0);
        let base = kind.loss_raw(base_index, y);
        for (k, off) in offsets.iter().enumerate() {
            out[k] = kind.loss_raw(base_index + dot(row, off), y) - base;
        }
    })?;
    let neg: Vec<f64> = moments
        .iter()
        .zip(&offsets)
        .map(|(m, o)| -2.0 * m.0 / norm_l2(o).powi(2))
        .collect();
    let se: Vec<f64> = moments
        .iter()
        .zip(&offsets)
        .map(|(m, o)| 2.0 * m.1 / norm_l2(o).powi(2))
        .collect();
    let i = worst_case(&neg, &se, -c);
    Ok(ProbeReport::new(format!("risk_curvature[eta={eta_star}]"), neg[i], -c, se[i], mc_n as u64, seed))
}

/// Detailed outcome of [`increment_ratio_probe`].
#[derive(Clone, Debug)]
pub struct IncrementProbe {
    pub report: ProbeReport,
    /// Ratio at every probe point, in generation order (the first point is theta0).
    pub ratios: Vec<f64>,
    pub ball_radius: f64,
}

/// Sampled supremum over `B` of `|D(theta) - D(theta0)| / max(|theta - theta0|_1, delta_n)`
/// where `D = R_hat - R`, compared against `r_n`.
///
/// This is a lower bound on the true supremum: the point cloud mixes sparse
/// and dense perturbations of theta0, uniform points of `B` and a warm-started
/// lambda path.
#[allow(clippy::too_many_arguments)]
pub fn increment_ratio_probe(
    model: &ModelSpec,
    design: &DesignSpec,
    noise: &NoiseSpec,
    data: &Dataset,
    schedule: &PenaltySchedule,
    n_probe: usize,
    oracle_mc_n: usize,
    seed: u64,
) -> Result<IncrementProbe> {
    if n_probe < 100 {
        return Err(Error::invalid("n_probe must be >= 100"));
    }
    let d = data.d();
    check_len(&model.theta0, d)?;
    let theta0 = &model.theta0;
    let kind = model.kind;
    let (r_theta0, _) = true_risk_oracle(model, design, noise, theta0, oracle_mc_n, rng::derive_seed(seed, "incr-r0", 0))?;
    let radius = ball_b_radius(schedule.lambda, r_theta0, norm_l1(theta0))?;

    let clip_to_ball = |mut t: Vec<f64>| {
        let l1 = norm_l1(&t);
        if l1 > radius {
            t.iter_mut().for_each(|v| *v *= radius / l1);
        }
        t
    };
    let mut points: Vec<Vec<f64>> = vec![theta0.clone()];
    // warm-started path from the schedule's lambda downwards
    let path_lambdas: Vec<f64> = (0..5).map(|k| schedule.lambda * 0.25_f64.powi(k)).collect();
    let path_cfg = FitConfig {
        restarts: 1,
        max_iters: 500,
        ..FitConfig::default()
    };
    for fit in lambda_path(&kind, data, &path_lambdas, &path_cfg)? {
        points.push(clip_to_ball(fit.theta_hat));
    }
    let mut rng = rng::stream(seed, "incr-points", 0);
    let lo = schedule.delta_n.min(radius) * 0.1;
    while points.len() < n_probe {
        let r = (lo.ln() + (radius.ln() - lo.ln()) * rng.random::<f64>()).exp();
        let pt = match points.len() % 3 {
            0 => {
                let k = rng.random_range(1..=d.min(5));
                let mut dir = vec![0.0; d];
                for j in rand::seq::index::sample(&mut rng, d, k) {
                    dir[j] = if rng.random::<bool>() { 1.0 } else { -1.0 } * (0.5 + rng.random::<f64>());
                }
                let l1 = norm_l1(&dir);
                theta0.iter().zip(&dir).map(|(a, b)| a + r * b / l1).collect()
            }
            1 => {
                let dir = unit_direction(&mut rng, d);
                let l1 = norm_l1(&dir);
                theta0.iter().zip(&dir).map(|(a, b)| a + r * b / l1).collect()
            }
            _ => {
                let dir = unit_direction(&mut rng, d);
                let l1 = norm_l1(&dir);
                dir.into_iter().map(|b| r * b / l1).collect()
            }
        };
        points.push(clip_to_ball(pt));
    }

    let emp0 = risk(&kind, &data.x, &data.y, theta0)?;
    let emp: Vec<f64> = points
        .par_iter()
        .map(|t| risk(&kind, &data.x, &data.y, t).map(|r| r - emp0))
        .collect::<Result<Vec<f64>>>()?;
    let pop = population_moments(model, design, noise, oracle_mc_n, rng::derive_seed(seed, "incr-mc", 0), points.len(), |row, y, out| {
        let base_index = dot(row, theta0);
        let base = kind.loss_raw(base_index, y);
        for (k, t) in points.iter().enumerate() {
            out[k] = kind.loss_raw(dot(row, t), y) - base;
        }
    })?;
    let mut ratios = Vec::with_capacity(points.len());
    let mut ses = Vec::with_capacity(points.len());
    for ((t, e), (p, p_se)) in points.iter().zip(&emp).zip(&pop) {
        let dist: f64 = t.iter().zip(theta0).map(|(a, b)| (a - b).abs()).sum();
        let denom = dist.max(schedule.delta_n);
        ratios.push((e - p).abs() / denom);
        ses.push(p_se / denom);
    }
    let (imax, max_ratio) = ratios
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let report = ProbeReport::new("increment_ratio", max_ratio, schedule.r_n, ses[imax], oracle_mc_n as u64, seed);
    Ok(IncrementProbe {
        report,
        ratios,
        ball_radius: radius,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxAverageVariant {
    /// `Z_i` with i.i.d. `+-M` coordinates.
    Bounded,
    /// `Z_i = eps_i X_i`, `eps_i ~ N(0, 1)`, `X_i` with `+-M` coordinates.
    GaussianTimesBounded,
}

/// Checks `E|n^-1 sum_i Z_i|_inf <= M sqrt(2 ln(2d) / n)` by Monte Carlo over
/// `reps` replicates. For the Gaussian variant `M` plays the role of `sigma M_X`.
pub fn lemma_max_average_check(m: f64, n: usize, d: usize, reps: usize, variant: MaxAverageVariant, seed: u64) -> Result<ProbeReport> {
    if reps < 200 {
        return Err(Error::invalid("reps must be >= 200"));
    }
    if n == 0 || d == 0 || !(m > 0.0) {
        return Err(Error::invalid("need n, d >= 1 and M > 0"));
    }
    let maxes: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, "max-average", r as u64);
            let mut sum = vec![0.0; d];
            let mut row = vec![0.0; d];
            for _ in 0..n {
                fill_rademacher(&mut rng, m, &mut row);
                let w = match variant {
                    MaxAverageVariant::Bounded => 1.0,
                    MaxAverageVariant::GaussianTimesBounded => StandardNormal.sample(&mut rng),
                };
                for (s, x) in sum.iter_mut().zip(&row) {
                    *s += w * x;
                }
            }
            norm_inf(&sum) / n as f64
        })
        .collect();
    let (mean, se) = mean_and_se(&maxes);
    let bound = m * (2.0 * (2.0 * d as f64).ln() / n as f64).sqrt();
    let tag = match variant {
        MaxAverageVariant::Bounded => "max_average_bounded",
        MaxAverageVariant::GaussianTimesBounded => "max_average_gaussian",
    };
    Ok(ProbeReport::new(format!("{tag}[n={n},d={d}]"), mean, bound, se, reps as u64, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    /// `Z' = sqrt(v'/v) Z`.
    Identical,
}

/// Truncation threshold `2 sqrt(v' ln(4 sqrt2 / delta))`.
pub fn truncation_threshold(v_prime: f64, delta: f64) -> f64 {
    2.0 * (v_prime * (4.0 * 2.0_f64.sqrt() / delta).ln()).sqrt()
}

/// Checks `E[Z^2 1{|Z'| > 2 sqrt(v' ln(4 sqrt2/delta))}] <= v delta` for centred
/// Gaussians with variances `v`, `v'`.
pub fn lemma_subgaussian_truncation_check(v: f64, v_prime: f64, delta: f64, coupling: Coupling, mc_n: usize, seed: u64) -> Result<ProbeReport> {
    if !(v > 0.0 && v_prime > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("need v, v' > 0 and delta in (0, 1)"));
    }
    if mc_n < 2 {
        return Err(Error::invalid("mc_n must be >= 2"));
    }
    let t = truncation_threshold(v_prime, delta);
    let (sv, svp) = (v.sqrt(), v_prime.sqrt());
    let chunk = 1 << 16;
    let parts: Vec<(f64, f64)> = (0..mc_n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, "truncation", c as u64);
            let (mut s, mut q) = (0.0, 0.0);
            for _ in 0..chunk.min(mc_n - c * chunk) {
                let g: f64 = StandardNormal.sample(&mut rng);
                let z = sv * g;
                let zp = match coupling {
                    Coupling::Independent => {
                        let h: f64 = StandardNormal.sample(&mut rng);
                        svp * h
                    }
                    Coupling::Identical => svp * g,
                };
                let val = if zp.abs() > t { z * z } else { 0.0 };
                s += val;
                q += val * val;
            }
            (s, q)
        })
        .collect();
    let (s, q) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = mc_n as f64;
    let mean = s / n;
    let se = (((q - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt();
    let name = format!("subgaussian_truncation[v={v},v'={v_prime},delta={delta},{coupling:?}]");
    Ok(ProbeReport::new(name, mean, v * delta, se, mc_n as u64, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    const T0: f64 = crate::model_zoo::DEFAULT_TUKEY_T0;

    #[test]
    fn report_arithmetic_and_json() {
        let r = ProbeReport::new("x", 1.0, 0.9, 0.03, 10, 4);
        assert_eq!(r.margin, 0.9 - 1.0);
        assert!(r.passed);
        let r = ProbeReport::new("y", 1.0, 0.9, 0.0, 10, 4);
        assert!(!r.passed);
        let line = r.to_json_line();
        assert!(line.starts_with("{\"check_name\":\"y\",\"passed\":false,\"measured\":1.0000000000000000e0,"));
        let back = ProbeReport::from_json_line(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn g_is_odd_and_positive() {
        let noise = NoiseSpec::gaussian(1.0);
        for k in 0..20 {
            let t = 0.3 * k as f64 - 2.9;
            let a = estimate_g(&noise, T0, t, GMethod::Quadrature).unwrap().value;
            let b = estimate_g(&noise, T0, -t, GMethod::Quadrature).unwrap().value;
            assert!((a + b).abs() <= 2.0 * G_QUAD_TOL, "t={t}: {a} vs {b}");
        }
        assert!(estimate_g(&noise, T0, 0.0, GMethod::Quadrature).unwrap().value.abs() <= G_QUAD_TOL);
        for t in [0.01, 0.5, 2.0, 6.0] {
            assert!(estimate_g(&noise, T0, t, GMethod::Quadrature).unwrap().value > 0.0);
        }
    }

    #[test]
    fn g_quadrature_matches_monte_carlo() {
        let noise = NoiseSpec::gaussian(1.0);
        let q = estimate_g(&noise, T0, 0.5, GMethod::Quadrature).unwrap();
        let mc = estimate_g(&noise, T0, 0.5, GMethod::MonteCarlo { n: 1_000_000, seed: 2 }).unwrap();
        assert!(!q.fell_back);
        assert!((q.value - mc.value).abs() <= 4.0 * mc.std_error, "{} vs {} +- {}", q.value, mc.value, mc.std_error);
        for noise in [
            NoiseSpec::Laplace { scale: 1.0 },
            NoiseSpec::StudentT { dof: 3.0, scale: 1.0 },
            NoiseSpec::ContaminatedGaussian { sd1: 1.0, sd2: 6.0, mix: 0.2 },
        ] {
            let q = estimate_g(&noise, T0, 1.0, GMethod::Quadrature).unwrap();
            let mc = estimate_g(&noise, T0, 1.0, GMethod::MonteCarlo { n: 1_000_000, seed: 3 }).unwrap();
            assert!((q.value - mc.value).abs() <= 4.0 * mc.std_error, "{}: {} vs {}", noise.tag(), q.value, mc.value);
        }
    }

    #[test]
    fn big_l_limits_and_monotonicity() {
        let noise = NoiseSpec::gaussian(1.0);
        let gp = g_prime_zero(&noise, T0).unwrap();
        let tiny = estimate_big_l(&noise, T0, 1e-3, 100).unwrap();
        assert!(((tiny - gp) / gp).abs() < 0.01, "{tiny} vs {gp}");
        let mut prev = f64::INFINITY;
        for s in [0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0] {
            let l = estimate_big_l(&noise, T0, s, 100).unwrap();
            assert!(l > 0.0);
            assert!(l <= prev, "L({s}) = {l} > {prev}");
            prev = l;
        }
        assert!(estimate_big_l(&noise, T0, 1.0, 99).is_err());
    }

    #[test]
    fn g_prime_zero_closed_form_for_point_mass() {
        // without noise g = rho', so g'(0) = 6 / t0^2
        let gp = g_prime_zero(&NoiseSpec::gaussian(0.0), T0).unwrap();
        assert!((gp - 6.0 / (T0 * T0)).abs() < 1e-6);
    }

    #[test]
    fn curvature_examples() {
        let noise = NoiseSpec::gaussian(1.0);
        let s = robust_tail_radius(1.0, 1.0, 1.0);
        assert!((s - 2.0 * (8.0 * 2.0_f64.sqrt()).ln().sqrt()).abs() < 1e-15);
        assert!((s - 3.115134110730906).abs() < 1e-12, "{s}");
        assert!((s - 3.1148).abs() < 2e-3);
        let spec = CurvatureSpec { gamma: 1.0, eta_star: 1.0, m_0: 1.0 };
        let c = curvature_constant(&ModelKind::robust(), &spec, 1.0, 1.0, &noise).unwrap();
        let l = estimate_big_l(&noise, T0, s, 200).unwrap();
        assert_eq!(c, 0.5 * l);

        let sb = link_tail_radius(1.0, 1.0, 1.0, 1.0);
        assert!((sb - 3.532230067546424).abs() < 1e-12, "{sb}");
        assert!((sb - 3.5334).abs() < 2e-3);
        let cb = curvature_constant(&ModelKind::binary(), &spec, 1.0, 1.0, &noise).unwrap();
        let e = (-2.0 * sb).exp();
        let sigma_prime = e / (1.0 + e).powi(2);
        assert!((cb - sigma_prime * sigma_prime).abs() < 1e-18);
    }

    #[test]
    fn curvature_nonincreasing_in_gamma() {
        let noise = NoiseSpec::gaussian(1.0);
        for kind in [ModelKind::robust(), ModelKind::binary(), ModelKind::nls(0.5)] {
            let mut prev = f64::INFINITY;
            for k in 1..=10 {
                let spec = CurvatureSpec { gamma: 0.25 * k as f64, eta_star: 1.0, m_0: 1.0 };
                let c = curvature_constant(&kind, &spec, 1.0, 1.0, &noise).unwrap();
                assert!(c > 0.0 && c <= prev, "{kind:?}: {c} > {prev}");
                prev = c;
            }
        }
    }

    #[test]
    fn max_average_single_coordinate() {
        // d = 1: E|mean of n signs| = sqrt(2/(pi n)) asymptotically; the bound is sqrt(2 ln2 / n)
        let n = 100;
        let r = lemma_max_average_check(1.0, n, 1, 2000, MaxAverageVariant::Bounded, 5).unwrap();
        // exact E|S_n|/n for S_n a sum of n signs: 2^{-n} C(n, n/2) for even n
        let exact = statrs::function::factorial::binomial(n as u64, n as u64 / 2) * 0.5_f64.powi(n as i32);
        assert!((r.measured - exact).abs() <= 4.0 * r.mc_std_error, "{} vs {exact}", r.measured);
        assert!(r.passed && r.measured < r.bound);
        let r = lemma_max_average_check(1.0, 400, 100, 400, MaxAverageVariant::GaussianTimesBounded, 6).unwrap();
        assert!((r.bound - 0.16276236307187292).abs() < 1e-15);
        assert!(r.passed && r.measured < r.bound, "{r:?}");
        assert!(lemma_max_average_check(1.0, n, 1, 199, MaxAverageVariant::Bounded, 5).is_err());
    }

    #[test]
    fn truncation_independent_matches_closed_form() {
        let (v, vp, delta) = (1.0, 4.0, 0.05);
        let r = lemma_subgaussian_truncation_check(v, vp, delta, Coupling::Independent, 2_000_000, 8).unwrap();
        let t = truncation_threshold(vp, delta);
        let expect = v * erfc(t / (2.0 * vp).sqrt());
        assert!((r.measured - expect).abs() <= 4.0 * r.mc_std_error + 1e-12, "{} vs {expect}", r.measured);
        assert!(r.passed);
        // delta near one: the threshold is small but the bound is generous
        assert!(lemma_subgaussian_truncation_check(1.0, 1.0, 0.95, Coupling::Identical, 200_000, 1).unwrap().passed);
    }

    #[test]
    fn identification_small_instance() {
        let model = ModelSpec::new(ModelKind::robust(), vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let design = DesignSpec::rademacher(4, 1.0);
        let reps = gradient_identification_check(&model, &design, &NoiseSpec::gaussian(1.0), 10, 1.0, 20_000, 3).unwrap();
        assert_eq!(reps.len(), 2);
        assert!(reps.iter().all(|r| r.passed), "{reps:?}");
        assert!(gradient_identification_check(&model, &design, &NoiseSpec::gaussian(1.0), 9, 1.0, 20_000, 3).is_err());
    }

    #[test]
    fn curvature_scan_small_radius_matches_second_derivative() {
        // robust, Rademacher design, no noise: along direction u the second
        // derivative of R at theta0 is E[rho''(0) (X^T u)^2] = (6 / t0^2) |u|^2
        let model = ModelSpec::new(ModelKind::robust(), vec![1.0, 0.0, -1.0]).unwrap();
        let design = DesignSpec::rademacher(3, 1.0);
        let r = risk_curvature_scan(&model, &design, &NoiseSpec::gaussian(0.0), 0.02, 2, 400_000, 1).unwrap();
        let expect = 6.0 / (T0 * T0);
        assert!((-r.measured - expect).abs() < 5.0 * r.mc_std_error + 1e-4, "{} vs {expect}", -r.measured);
        assert!(r.passed);
    }
}
