//! Penalized estimator `argmin_theta R_hat(theta) + lambda |theta|_1`.
//!
//! The fit is proximal gradient descent with Armijo backtracking, restarted
//! from several initial points because the risks are nonconvex. For `d <= 3`
//! an exhaustive grid search provides an independent reference minimizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_lab::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, norm_l1, norm_l2, sub, Matrix};
use crate::model_zoo::{link_raw, risk, risk_and_grad, ModelKind};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormulaTag {
    RobustTheory,
    BinaryTheory,
    NlsK { k: f64 },
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub lambda: f64,
    pub delta_n: f64,
    pub r_n: f64,
    pub formula_tag: FormulaTag,
}

/// `sqrt(ln(4nd) / n)`, the common factor of every schedule.
pub fn rate_factor(n: usize, d: usize) -> f64 {
    ((4.0 * n as f64 * d as f64).ln() / n as f64).sqrt()
}

fn increments(model: &ModelKind, n: usize, d: usize, m_x: f64) -> (f64, f64) {
    let delta_n = ((2.0 * d as f64).ln() / n as f64).sqrt();
    let r_n = 16.0 * model.constants().lipschitz_l * m_x * rate_factor(n, d);
    (delta_n, r_n)
}

fn check_sizes(n: usize, d: usize, m_x: f64) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n and d must be >= 1"));
    }
    if !(m_x.is_finite() && m_x > 0.0) {
        return Err(Error::invalid("m_x must be positive"));
    }
    Ok(())
}

/// Default nls constant: the binary-style bounded part plus a Gaussian cross-term margin.
pub fn default_nls_k(model: &ModelKind, m_x: f64) -> f64 {
    match *model {
        ModelKind::Nls { noise_sd, .. } => {
            let m_f = model.constants().m_f.unwrap_or(1.0);
            96.0 * m_f * m_x + 8.0 * noise_sd * m_f * m_x
        }
        _ => f64::NAN,
    }
}

/// Penalty schedule for `model` at sample size `n`, dimension `d`, design bound `m_x`.
///
/// Robust: `32 M_rho M_X sqrt(ln(4nd)/n)`; binary: `96 M_sigma M_X sqrt(ln(4nd)/n)`;
/// nls: `K sqrt(ln(4nd)/n)` with [`default_nls_k`].
pub fn lambda_for(model: &ModelKind, n: usize, d: usize, m_x: f64) -> Result<PenaltySchedule> {
    match model {
        ModelKind::Nls { .. } => lambda_for_nls(model, n, d, m_x, default_nls_k(model, m_x)),
        _ => {
            check_sizes(n, d, m_x)?;
            model.validate()?;
            let c = model.constants();
            let s = rate_factor(n, d);
            let (lambda, formula_tag) = match model {
                ModelKind::Robust { .. } => (32.0 * c.m_rho.unwrap() * m_x * s, FormulaTag::RobustTheory),
                ModelKind::Binary { .. } => (96.0 * c.m_sigma.unwrap() * m_x * s, FormulaTag::BinaryTheory),
                ModelKind::Nls { .. } => unreachable!(),
            };
            let (delta_n, r_n) = increments(model, n, d, m_x);
            // lambda >= 2 r_n; relative slack for the binary case where it is an equality
            if lambda < 2.0 * r_n * (1.0 - 1e-12) {
                return Err(Error::invalid(format!("schedule violates lambda >= 2 r_n: {lambda} < 2 * {r_n}")));
            }
            Ok(PenaltySchedule {
                lambda,
                delta_n,
                r_n,
                formula_tag,
            })
        }
    }
}

pub fn lambda_for_nls(model: &ModelKind, n: usize, d: usize, m_x: f64, k: f64) -> Result<PenaltySchedule> {
    check_sizes(n, d, m_x)?;
    if !matches!(model, ModelKind::Nls { .. }) {
        return Err(Error::invalid("the K-constant schedule applies to the nls model"));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid("K must be positive"));
    }
    let (delta_n, r_n) = increments(model, n, d, m_x);
    Ok(PenaltySchedule {
        lambda: k * rate_factor(n, d),
        delta_n,
        r_n,
        formula_tag: FormulaTag::NlsK { k },
    })
}

pub fn manual_schedule(model: &ModelKind, lambda: f64, n: usize, d: usize, m_x: f64) -> Result<PenaltySchedule> {
    check_sizes(n, d, m_x)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let (delta_n, r_n) = increments(model, n, d, m_x);
    Ok(PenaltySchedule {
        lambda,
        delta_n,
        r_n,
        formula_tag: FormulaTag::Manual,
    })
}

/// Proximal map of `tau |.|_1`.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau >= 0.0);
    v.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    Zero,
    WarmRidge { ridge: f64 },
    Custom { theta: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backtracking {
    pub shrink: f64,
    pub grow: f64,
    pub init_step: f64,
}

impl Default for Backtracking {
    fn default() -> Self {
        Backtracking {
            shrink: 0.5,
            grow: 2.0,
            init_step: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iters: usize,
    pub tol_objective: f64,
    pub tol_prox_residual: f64,
    pub restarts: usize,
    pub init: Init,
    pub step: Backtracking,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Seed for the random restart points.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 5000,
            tol_objective: 1e-10,
            tol_prox_residual: 1e-8,
            restarts: 5,
            init: Init::Zero,
            step: Backtracking::default(),
            sufficient_decrease: 1e-4,
            seed: 0,
        }
    }
}

pub const DEFAULT_RIDGE: f64 = 1e-2;

impl FitConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.tol_objective > 0.0 && self.tol_prox_residual > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        let s = &self.step;
        if !(s.shrink > 0.0 && s.shrink < 1.0 && s.grow >= 1.0 && s.init_step > 0.0) {
            return Err(Error::invalid("backtracking needs shrink in (0,1), grow >= 1, init_step > 0"));
        }
        match &self.init {
            Init::WarmRidge { ridge } if !(*ridge > 0.0) => return Err(Error::invalid("ridge must be positive")),
            Init::Custom { theta } => check_len(theta, d)?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub prox_residual: f64,
    /// Step length at termination; the prox residual is measured with it.
    pub final_step: f64,
    pub restart_index: usize,
    pub err_l1: Option<f64>,
    pub err_l2: Option<f64>,
    pub support: Vec<usize>,
    /// Filled in by callers that know `R(theta0)`.
    pub in_ball_b: Option<bool>,
    /// Penalized objective after each accepted step of the winning restart,
    /// starting with the initial point.
    pub trace: Vec<f64>,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
}

/// Penalized objective `R_hat(theta) + lambda |theta|_1`.
pub fn penalized_objective(model: &ModelKind, x: &Matrix, y: &[f64], lambda: f64, theta: &[f64]) -> Result<f64> {
    Ok(risk(model, x, y, theta)? + lambda * norm_l1(theta))
}

struct RunOutcome {
    theta: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    prox_residual: f64,
    step: f64,
    trace: Vec<f64>,
}

fn prox_residual(theta: &[f64], grad: &[f64], step: f64, lambda: f64) -> f64 {
    let moved: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - step * g).collect();
    let p = soft_threshold(&moved, step * lambda);
    norm_l2(&sub(theta, &p)) / norm_l2(theta).max(1.0)
}

fn run_single(model: &ModelKind, data: &Dataset, lambda: f64, cfg: &FitConfig, init: Vec<f64>) -> Result<RunOutcome> {
    let (x, y) = (&data.x, &data.y);
    let mut theta = init;
    let (f0, mut g) = risk_and_grad(model, x, y, &theta)?;
    let mut obj = f0 + lambda * norm_l1(&theta);
    if !obj.is_finite() {
        return Err(Error::NumericalFailure {
            iter: 0,
            what: "non-finite objective at the initial point".into(),
        });
    }
    let mut step = cfg.step.init_step;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut residual = prox_residual(&theta, &g, step, lambda);
    let mut residual_step = step;
    let mut iterations = 0;
    const MIN_STEP: f64 = 1e-300;

    while iterations < cfg.max_iters {
        iterations += 1;
        let accepted = loop {
            let moved: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let cand = soft_threshold(&moved, step * lambda);
            let (fc, gc) = risk_and_grad(model, x, y, &cand)?;
            let obj_c = fc + lambda * norm_l1(&cand);
            if !obj_c.is_finite() {
                return Err(Error::NumericalFailure {
                    iter: iterations,
                    what: "non-finite objective".into(),
                });
            }
            let dist2: f64 = cand.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
            if obj_c <= obj - cfg.sufficient_decrease / step * dist2 {
                break Some((cand, gc, obj_c));
            }
            step *= cfg.step.shrink;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((cand, gc, obj_c)) = accepted else {
            // no admissible step: numerically stationary
            break;
        };
        let change = obj - obj_c;
        theta = cand;
        g = gc;
        obj = obj_c;
        trace.push(obj);
        residual = prox_residual(&theta, &g, step, lambda);
        if change <= cfg.tol_objective * obj.abs() && residual <= cfg.tol_prox_residual {
            converged = true;
            residual_step = step;
            break;
        }
        residual_step = step;
        step *= cfg.step.grow;
    }
    Ok(RunOutcome {
        theta,
        objective: obj,
        iterations,
        converged,
        prox_residual: residual,
        step: residual_step,
        trace,
    })
}

/// Ridge solution on a linearized response, used as a warm start.
pub fn ridge_start(model: &ModelKind, data: &Dataset, ridge: f64) -> Result<Vec<f64>> {
    let (n, d) = (data.n(), data.d());
    let target: Vec<f64> = match *model {
        ModelKind::Robust { .. } => data.y.clone(),
        ModelKind::Binary { link } | ModelKind::Nls { link, .. } => {
            let (f0, df0) = link_raw(link, 0.0);
            data.y.iter().map(|v| (v - f0) / df0).collect()
        }
    };
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for row in data.x.iter_rows() {
        for a in 0..d {
            let ra = row[a];
            for b in a..d {
                gram[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += ridge * n as f64;
    }
    let rhs = DVector::from_vec(data.x.tr_mul_vec(&target));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure {
            iter: 0,
            what: "ridge system not positive definite".into(),
        })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Uniform draw from the l1 ball of the given radius.
fn l1_ball_point<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..=d).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e[..d]
        .iter()
        .map(|v| {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s * radius * v / total
        })
        .collect()
}

fn restart_points(model: &ModelKind, data: &Dataset, lambda: f64, cfg: &FitConfig) -> Result<Vec<Vec<f64>>> {
    let d = data.d();
    let mut inits = Vec::with_capacity(cfg.restarts);
    let resolve = |init: &Init| -> Result<Vec<f64>> {
        match init {
            Init::Zero => Ok(vec![0.0; d]),
            Init::WarmRidge { ridge } => ridge_start(model, data, *ridge),
            Init::Custom { theta } => Ok(theta.clone()),
        }
    };
    inits.push(resolve(&cfg.init)?);
    for fallback in [Init::Zero, Init::WarmRidge { ridge: DEFAULT_RIDGE }] {
        if inits.len() >= cfg.restarts {
            break;
        }
        let same = matches!(
            (&cfg.init, &fallback),
            (Init::Zero, Init::Zero) | (Init::WarmRidge { .. }, Init::WarmRidge { .. })
        );
        if !same {
            inits.push(resolve(&fallback)?);
        }
    }
    if inits.len() < cfg.restarts {
        let radius = match &data.theta0 {
            Some(t0) => norm_l1(t0),
            None => (risk(model, &data.x, &data.y, &vec![0.0; d])? + 1.0) / lambda,
        };
        let mut rng = rng::stream(cfg.seed, "restart", data.seed);
        while inits.len() < cfg.restarts {
            inits.push(l1_ball_point(&mut rng, d, radius));
        }
    }
    Ok(inits)
}

/// Best-of-restarts proximal gradient fit.
pub fn prox_gradient_fit(model: &ModelKind, data: &Dataset, schedule: &PenaltySchedule, config: &FitConfig) -> Result<FitResult> {
    let d = data.d();
    config.validate(d)?;
    model.validate()?;
    let lambda = schedule.lambda;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    check_len(&data.y, data.n())?;
    if let Some(t0) = &data.theta0 {
        check_len(t0, d)?;
    }
    let inits = restart_points(model, data, lambda, config)?;
    let runs: Vec<Result<RunOutcome>> = inits
        .into_par_iter()
        .map(|init| run_single(model, data, lambda, config, init))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let restart_objectives: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    let (best_idx, _) = restart_objectives
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let best = runs.into_iter().nth(best_idx).expect("at least one restart");
    let (err_l1, err_l2) = match &data.theta0 {
        Some(t0) => {
            let diff = sub(&best.theta, t0);
            (Some(norm_l1(&diff)), Some(norm_l2(&diff)))
        }
        None => (None, None),
    };
    let support = best
        .theta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect();
    Ok(FitResult {
        theta_hat: best.theta,
        objective: best.objective,
        iterations: best.iterations,
        converged: best.converged,
        prox_residual: best.prox_residual,
        final_step: best.step,
        restart_index: best_idx,
        err_l1,
        err_l2,
        support,
        in_ball_b: None,
        trace: best.trace,
        restart_objectives,
    })
}

/// Warm-started fits along `lambdas` (expected in decreasing order).
pub fn lambda_path(model: &ModelKind, data: &Dataset, lambdas: &[f64], config: &FitConfig) -> Result<Vec<FitResult>> {
    let (n, d, m_x) = (data.n(), data.d(), data.m_x());
    let mut out = Vec::with_capacity(lambdas.len());
    let mut cfg = config.clone();
    for &lambda in lambdas {
        let schedule = manual_schedule(model, lambda, n, d, m_x)?;
        let fit = prox_gradient_fit(model, data, &schedule, &cfg)?;
        cfg.init = Init::Custom {
            theta: fit.theta_hat.clone(),
        };
        cfg.restarts = 1;
        out.push(fit);
    }
    Ok(out)
}

/// Indices `k` where `|theta(lambda_{k+1})|_1 < |theta(lambda_k)|_1 - tol` along a
/// decreasing-lambda path (the l1 norm should not shrink as lambda decreases).
pub fn path_monotonicity_violations(path: &[FitResult], tol: f64) -> Vec<usize> {
    path.windows(2)
        .enumerate()
        .filter(|(_, w)| norm_l1(&w[1].theta_hat) < norm_l1(&w[0].theta_hat) - tol)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSolution {
    pub theta_star: Vec<f64>,
    pub objective_star: f64,
}

fn grid_search(model: &ModelKind, data: &Dataset, lambda: f64, center: &[f64], half_width: f64, points: usize) -> Result<GridSolution> {
    let d = center.len();
    let h = 2.0 * half_width / (points - 1) as f64;
    let axis: Vec<Vec<f64>> = center
        .iter()
        .map(|c| (0..points).map(|k| c - half_width + k as f64 * h).collect())
        .collect();
    let total = points.pow(d as u32);
    let (x, y) = (&data.x, &data.y);
    let eval = |flat: usize| -> (f64, Vec<f64>) {
        let mut theta = vec![0.0; d];
        let mut rem = flat;
        for j in (0..d).rev() {
            theta[j] = axis[j][rem % points];
            rem /= points;
        }
        let mut acc = 0.0;
        for (row, &yi) in x.iter_rows().zip(y) {
            acc += model.loss_raw(dot(row, &theta), yi);
        }
        (acc / x.rows() as f64 + lambda * norm_l1(&theta), theta)
    };
    // blocks keep the lexicographic first-minimum rule under parallel evaluation
    let block = points.max(64);
    let best = (0..total.div_ceil(block))
        .into_par_iter()
        .map(|b| {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for flat in b * block..((b + 1) * block).min(total) {
                let (v, t) = eval(flat);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, t));
                }
            }
            best.expect("nonempty block")
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<(f64, Vec<f64>)>, |acc, (v, t)| match acc {
            Some((bv, bt)) if bv <= v => Some((bv, bt)),
            _ => Some((v, t)),
        })
        .expect("nonempty grid");
    if !best.0.is_finite() {
        return Err(Error::NumericalFailure {
            iter: 0,
            what: "non-finite objective on the grid".into(),
        });
    }
    Ok(GridSolution {
        theta_star: best.1,
        objective_star: best.0,
    })
}

fn check_grid_args(data: &Dataset, lambda: f64, box_half_width: f64, points_per_axis: usize) -> Result<()> {
    if data.d() > 3 {
        return Err(Error::UnsupportedDimension(data.d()));
    }
    if points_per_axis < 11 {
        return Err(Error::invalid("points_per_axis must be >= 11"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be a finite nonnegative number"));
    }
    if !(box_half_width > 0.0 && box_half_width.is_finite()) {
        return Err(Error::invalid("box_half_width must be positive"));
    }
    Ok(())
}

/// Exhaustive minimization of the penalized objective over a regular grid on
/// `[-w, w]^d`, `d <= 3`. Ties resolve to the first point in lexicographic order.
pub fn grid_oracle(model: &ModelKind, data: &Dataset, lambda: f64, box_half_width: f64, points_per_axis: usize) -> Result<GridSolution> {
    check_grid_args(data, lambda, box_half_width, points_per_axis)?;
    grid_search(model, data, lambda, &vec![0.0; data.d()], box_half_width, points_per_axis)
}

/// [`grid_oracle`] followed by one pass of the same grid over the cell
/// neighbourhood of the coarse minimizer. Never worse than the coarse result.
pub fn grid_oracle_refined(model: &ModelKind, data: &Dataset, lambda: f64, box_half_width: f64, points_per_axis: usize) -> Result<GridSolution> {
    let coarse = grid_oracle(model, data, lambda, box_half_width, points_per_axis)?;
    let h = 2.0 * box_half_width / (points_per_axis - 1) as f64;
    let fine = grid_search(model, data, lambda, &coarse.theta_star, h, points_per_axis)?;
    Ok(if fine.objective_star < coarse.objective_star {
        fine
    } else {
        coarse
    })
}

/// Radius of the l1 ball `B`: `(R(theta0) + 1) / lambda + |theta0|_1`.
pub fn ball_b_radius(lambda: f64, r_theta0: f64, l1_theta0: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if !(r_theta0 >= 0.0) {
        return Err(Error::invalid("R(theta0) must be nonnegative"));
    }
    Ok((r_theta0 + 1.0) / lambda + l1_theta0)
}

pub fn ball_b_check(theta: &[f64], schedule: &PenaltySchedule, r_theta0: f64, l1_theta0: f64) -> Result<bool> {
    Ok(norm_l1(theta) <= ball_b_radius(schedule.lambda, r_theta0, l1_theta0)?)
}
