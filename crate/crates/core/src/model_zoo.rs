//! Losses, links and risk evaluation for the three single-index models:
//! Tukey-bisquare robust regression, squared-loss binary classification and
//! nonlinear least squares.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_lab::{Dataset, DesignSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, Matrix};
use crate::rng;

/// Classical 95%-efficiency cutoff for the bisquare loss.
pub const DEFAULT_TUKEY_T0: f64 = 4.685;

/// `sup_t |rho'(t)| * t0` for the bisquare loss, attained at `t = t0 / sqrt(5)`.
pub fn tukey_deriv_peak_factor() -> f64 {
    96.0 / (25.0 * 5.0_f64.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Logistic,
    Tanh,
}

/// The estimation problem and its loss hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelKind {
    Robust { t0: f64 },
    Binary { link: LinkKind },
    Nls { link: LinkKind, noise_sd: f64 },
}

impl ModelKind {
    pub fn robust() -> Self {
        ModelKind::Robust {
            t0: DEFAULT_TUKEY_T0,
        }
    }

    pub fn binary() -> Self {
        ModelKind::Binary {
            link: LinkKind::Logistic,
        }
    }

    pub fn nls(noise_sd: f64) -> Self {
        ModelKind::Nls {
            link: LinkKind::Tanh,
            noise_sd,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Robust { .. } => "robust",
            ModelKind::Binary { .. } => "binary",
            ModelKind::Nls { .. } => "nls",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelKind::Robust { t0 } => {
                if !(t0.is_finite() && t0 > 0.0) {
                    return Err(Error::invalid(format!("Tukey t0 must be positive, got {t0}")));
                }
            }
            ModelKind::Binary { link } => {
                // the success probability must live in [0, 1]
                if link != LinkKind::Logistic {
                    return Err(Error::invalid("binary model requires a [0,1]-valued link (logistic)"));
                }
            }
            ModelKind::Nls { noise_sd, .. } => {
                if !(noise_sd.is_finite() && noise_sd >= 0.0) {
                    return Err(Error::invalid(format!("noise_sd must be >= 0, got {noise_sd}")));
                }
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> LossConstants {
        LossConstants::for_model(self)
    }

    /// `(l(t, y), dl/dt)` without validating `y`.
    #[inline]
    pub(crate) fn loss_and_deriv(&self, t: f64, y: f64) -> (f64, f64) {
        match *self {
            ModelKind::Robust { t0 } => {
                let r = y - t;
                (tukey_rho_raw(r, t0), -tukey_rho_deriv_raw(r, t0))
            }
            ModelKind::Binary { link } | ModelKind::Nls { link, .. } => {
                let (v, dv) = link_raw(link, t);
                let r = y - v;
                (r * r, -2.0 * r * dv)
            }
        }
    }

    #[inline]
    pub(crate) fn loss_raw(&self, t: f64, y: f64) -> f64 {
        match *self {
            ModelKind::Robust { t0 } => tukey_rho_raw(y - t, t0),
            ModelKind::Binary { link } | ModelKind::Nls { link, .. } => {
                let r = y - link_raw(link, t).0;
                r * r
            }
        }
    }

    pub(crate) fn check_response(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::invalid("non-finite response"));
        }
        if matches!(self, ModelKind::Binary { .. }) && y != 0.0 && y != 1.0 {
            return Err(Error::invalid(format!("binary response must be 0 or 1, got {y}")));
        }
        Ok(())
    }
}

/// A model together with its true parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub theta0: Vec<f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, theta0: Vec<f64>) -> Result<Self> {
        kind.validate()?;
        if theta0.is_empty() {
            return Err(Error::invalid("theta0 must have length d >= 1"));
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta0 has non-finite entries"));
        }
        if theta0.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("theta0 must have at least one nonzero entry"));
        }
        Ok(ModelSpec { kind, theta0 })
    }

    pub fn d(&self) -> usize {
        self.theta0.len()
    }

    pub fn s0(&self) -> usize {
        self.theta0.iter().filter(|v| **v != 0.0).count()
    }
}

/// Bounds on the loss ingredients that enter the penalty schedules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConstants {
    /// `max(sup|rho|, sup|rho'|)`; robust only.
    pub m_rho: Option<f64>,
    /// `sup sigma'`; binary only.
    pub m_sigma: Option<f64>,
    /// Bound on `|f|` and `f'`; nls only.
    pub m_f: Option<f64>,
    /// Lipschitz constant of the loss in its first argument (for nls: of the
    /// bounded part `(f(t) - f(t'))^2`).
    pub lipschitz_l: f64,
}

impl LossConstants {
    pub fn for_model(kind: &ModelKind) -> Self {
        match *kind {
            ModelKind::Robust { t0 } => {
                let peak = tukey_deriv_peak_factor() / t0;
                LossConstants {
                    m_rho: Some(peak.max(1.0)),
                    m_sigma: None,
                    m_f: None,
                    lipschitz_l: peak,
                }
            }
            ModelKind::Binary { link } => {
                let m_sigma = link_deriv_sup(link);
                LossConstants {
                    m_rho: None,
                    m_sigma: Some(m_sigma),
                    m_f: None,
                    lipschitz_l: 3.0 * m_sigma,
                }
            }
            ModelKind::Nls { link, .. } => {
                let m_f = link_deriv_sup(link).max(1.0);
                LossConstants {
                    m_rho: None,
                    m_sigma: None,
                    m_f: Some(m_f),
                    lipschitz_l: 4.0 * m_f * m_f,
                }
            }
        }
    }
}

fn link_deriv_sup(link: LinkKind) -> f64 {
    match link {
        LinkKind::Logistic => 0.25,
        LinkKind::Tanh => 1.0,
    }
}

fn check_tukey_args(t: f64, t0: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::invalid("non-finite argument"));
    }
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::invalid(format!("Tukey t0 must be positive, got {t0}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn tukey_rho_raw(t: f64, t0: f64) -> f64 {
    if t.abs() > t0 {
        return 1.0;
    }
    let u = t / t0;
    let w = 1.0 - u * u;
    1.0 - w * w * w
}

#[inline]
pub(crate) fn tukey_rho_deriv_raw(t: f64, t0: f64) -> f64 {
    if t.abs() >= t0 {
        return 0.0;
    }
    let u = t / t0;
    let w = 1.0 - u * u;
    6.0 * t / (t0 * t0) * w * w
}

/// Tukey's bisquare loss `1 - (1 - (t/t0)^2)^3` on `|t| <= t0`, `1` outside.
pub fn tukey_rho(t: f64, t0: f64) -> Result<f64> {
    check_tukey_args(t, t0)?;
    Ok(tukey_rho_raw(t, t0))
}

pub fn tukey_rho_deriv(t: f64, t0: f64) -> Result<f64> {
    check_tukey_args(t, t0)?;
    Ok(tukey_rho_deriv_raw(t, t0))
}

#[inline]
pub(crate) fn link_raw(kind: LinkKind, t: f64) -> (f64, f64) {
    match kind {
        LinkKind::Logistic => {
            let e = (-t.abs()).exp();
            let v = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            let dv = e / ((1.0 + e) * (1.0 + e));
            (v, dv)
        }
        LinkKind::Tanh => {
            let e = (-2.0 * t.abs()).exp();
            let v = t.tanh();
            // sech^2 without cancellation for large |t|
            let dv = 4.0 * e / ((1.0 + e) * (1.0 + e));
            (v, dv)
        }
    }
}

/// Link value and derivative.
pub fn link_eval(kind: LinkKind, t: f64) -> Result<(f64, f64)> {
    if !t.is_finite() {
        return Err(Error::invalid("non-finite argument"));
    }
    Ok(link_raw(kind, t))
}

pub fn loss_value(model: &ModelKind, t: f64, y: f64) -> Result<f64> {
    model.validate()?;
    if !t.is_finite() {
        return Err(Error::invalid("non-finite argument"));
    }
    model.check_response(y)?;
    Ok(model.loss_raw(t, y))
}

fn check_data(model: &ModelKind, x: &Matrix, y: &[f64], theta: &[f64]) -> Result<()> {
    check_len(theta, x.cols())?;
    check_len(y, x.rows())?;
    if x.rows() == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    model.validate()
}

/// Mean loss over the rows of `(x, y)`.
pub fn risk(model: &ModelKind, x: &Matrix, y: &[f64], theta: &[f64]) -> Result<f64> {
    check_data(model, x, y, theta)?;
    let total: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(row, &yi)| model.loss_raw(dot(row, theta), yi))
        .sum();
    Ok(total / x.rows() as f64)
}

/// Mean loss and its gradient in one pass.
pub fn risk_and_grad(model: &ModelKind, x: &Matrix, y: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_data(model, x, y, theta)?;
    let n = x.rows() as f64;
    let mut total = 0.0;
    let mut weights = Vec::with_capacity(x.rows());
    for (row, &yi) in x.iter_rows().zip(y) {
        let (l, dl) = model.loss_and_deriv(dot(row, theta), yi);
        total += l;
        weights.push(dl / n);
    }
    Ok((total / n, x.tr_mul_vec(&weights)))
}

/// Empirical risk `(1/n) sum_i l(x_i^T theta, y_i)`.
pub fn empirical_risk(model: &ModelKind, data: &Dataset, theta: &[f64]) -> Result<f64> {
    risk(model, &data.x, &data.y, theta)
}

pub fn empirical_risk_grad(model: &ModelKind, data: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
    risk_and_grad(model, &data.x, &data.y, theta).map(|(_, g)| g)
}

/// Rows per Monte Carlo chunk; each chunk owns an RNG stream.
pub(crate) const POPULATION_CHUNK: usize = 4096;

/// Streams `mc_n` fresh draws of `(X, Y)` and averages `k` per-row statistics.
///
/// Returns `(mean, standard error)` for each statistic. Chunks are drawn from
/// independent streams and combined in index order, so the result does not
/// depend on the thread count.
pub fn population_moments<F>(
    model: &ModelSpec,
    design: &DesignSpec,
    noise: &NoiseSpec,
    mc_n: usize,
    seed: u64,
    k: usize,
    stat: F,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    design.validate()?;
    crate::design_lab::check_noise_for(&model.kind, noise)?;
    check_len(&model.theta0, design.d)?;
    if mc_n == 0 {
        return Err(Error::invalid("mc_n must be positive"));
    }
    let chunks = mc_n.div_ceil(POPULATION_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rows = POPULATION_CHUNK.min(mc_n - c * POPULATION_CHUNK);
            let mut rng = rng::stream(seed, "population", c as u64);
            let mut sums = vec![0.0; k];
            let mut sq = vec![0.0; k];
            let mut out = vec![0.0; k];
            let mut row = vec![0.0; design.d];
            let mut scratch = design.scratch();
            for _ in 0..rows {
                design.sample_row(&mut rng, &mut scratch, &mut row);
                let y = crate::design_lab::sample_response(&model.kind, &model.theta0, &row, noise, &mut rng);
                stat(&row, y, &mut out);
                for j in 0..k {
                    sums[j] += out[j];
                    sq[j] += out[j] * out[j];
                }
            }
            (sums, sq)
        })
        .collect();
    let mut sums = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for (s, q) in &partial {
        for j in 0..k {
            sums[j] += s[j];
            sq[j] += q[j];
        }
    }
    let n = mc_n as f64;
    Ok((0..k)
        .map(|j| {
            let mean = sums[j] / n;
            let var = if mc_n > 1 {
                ((sq[j] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, (var / n).sqrt())
        })
        .collect())
}

/// Monte Carlo estimate of the population risk `E[l(X^T theta, Y)]` from a
/// fresh sample of size `mc_n`.
pub fn true_risk_oracle(
    model: &ModelSpec,
    design: &DesignSpec,
    noise: &NoiseSpec,
    theta: &[f64],
    mc_n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if mc_n < 100 {
        return Err(Error::invalid("true_risk_oracle needs mc_n >= 100"));
    }
    check_len(theta, design.d)?;
    let kind = model.kind;
    let m = population_moments(model, design, noise, mc_n, seed, 1, |row, y, out| {
        out[0] = kind.loss_raw(dot(row, theta), y);
    })?;
    Ok(m[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: f64 = DEFAULT_TUKEY_T0;

    #[test]
    fn tukey_values() {
        assert_eq!(tukey_rho(0.0, T0).unwrap(), 0.0);
        assert_eq!(tukey_rho(5.0, T0).unwrap(), 1.0);
        assert!((tukey_rho(T0 / 2.0, T0).unwrap() - 37.0 / 64.0).abs() < 1e-15);
        assert!(tukey_rho(f64::NAN, T0).is_err());
        assert!(tukey_rho(1.0, 0.0).is_err());
        assert!(tukey_rho_deriv(1.0, -1.0).is_err());
    }

    #[test]
    fn tukey_deriv_peak() {
        assert_eq!(tukey_rho_deriv(0.0, T0).unwrap(), 0.0);
        assert_eq!(tukey_rho_deriv(T0, T0).unwrap(), 0.0);
        let closed = tukey_deriv_peak_factor() / T0;
        let at_peak = tukey_rho_deriv(T0 / 5.0_f64.sqrt(), T0).unwrap();
        assert!((at_peak - closed).abs() < 1e-14);
        // brute-force grid over [0, t0]
        let brute = (0..=1_000_000)
            .map(|k| tukey_rho_deriv_raw(T0 * k as f64 / 1e6, T0))
            .fold(0.0_f64, f64::max);
        assert!((brute - closed).abs() < 1e-10, "{brute} vs {closed}");
    }

    #[test]
    fn robust_constants() {
        let c = ModelKind::robust().constants();
        assert_eq!(c.m_rho, Some(1.0));
        // small cutoff: the derivative bound dominates
        let c = ModelKind::Robust { t0: 1.0 }.constants();
        assert!((c.m_rho.unwrap() - 96.0 / (25.0 * 5.0_f64.sqrt())).abs() < 1e-15);
        let b = ModelKind::binary().constants();
        assert_eq!(b.m_sigma, Some(0.25));
        assert_eq!(b.lipschitz_l, 0.75);
        let n = ModelKind::nls(0.5).constants();
        assert_eq!(n.m_f, Some(1.0));
        assert_eq!(n.lipschitz_l, 4.0);
    }

    #[test]
    fn links() {
        assert_eq!(link_eval(LinkKind::Logistic, 0.0).unwrap(), (0.5, 0.25));
        assert_eq!(link_eval(LinkKind::Tanh, 0.0).unwrap(), (0.0, 1.0));
        // reference values: 1/(1+e^-10) and e^-10/(1+e^-10)^2 to 17 digits
        let (v, dv) = link_eval(LinkKind::Logistic, 10.0).unwrap();
        assert!((v - 0.999_954_602_131_297_6).abs() < 1e-15);
        assert!((dv - 4.539_580_773_595_167e-5).abs() < 1e-18);
        let (v, dv) = link_eval(LinkKind::Tanh, 400.0).unwrap();
        assert_eq!(v, 1.0);
        assert!(dv > 0.0 || dv == 0.0);
        assert!(link_eval(LinkKind::Tanh, f64::INFINITY).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_value(&ModelKind::robust(), 1.3, 1.3).unwrap(), 0.0);
        assert_eq!(loss_value(&ModelKind::binary(), 0.0, 1.0).unwrap(), 0.25);
        assert_eq!(loss_value(&ModelKind::nls(1.0), 0.0, 0.0).unwrap(), 0.0);
        assert!(loss_value(&ModelKind::binary(), 0.0, 0.5).is_err());
        assert!(ModelKind::Binary { link: LinkKind::Tanh }.validate().is_err());
    }

    #[test]
    fn empirical_risk_examples() {
        let kind = ModelKind::Robust { t0: 1.0 };
        let x = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        // theta = 0, responses are the residuals
        let r = risk(&kind, &x, &[0.0, 2.0], &[0.0]).unwrap();
        assert_eq!(r, 0.5);
        let x1 = Matrix::from_vec(1, 2, vec![0.5, -1.0]).unwrap();
        assert_eq!(risk(&kind, &x1, &[0.5 * 0.3 - 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!(risk(&kind, &x1, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let kind = ModelKind::robust();
        let x = Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let theta = [0.2, 0.1];
        let y = x.mul_vec(&theta);
        let (_, g) = risk_and_grad(&kind, &x, &y, &theta).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);

        let x = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let (_, g) = risk_and_grad(&ModelKind::binary(), &x, &[1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![-0.25, 0.0]);
    }

    fn central_fd(kind: &ModelKind, x: &Matrix, y: &[f64], theta: &[f64]) -> Vec<f64> {
        (0..theta.len())
            .map(|j| {
                let h = 1e-5 * theta[j].abs().max(1.0);
                let mut p = theta.to_vec();
                let mut m = theta.to_vec();
                p[j] += h;
                m[j] -= h;
                (risk(kind, x, y, &p).unwrap() - risk(kind, x, y, &m).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = rng::stream(11, "fd", 0);
        for (k, kind) in [ModelKind::robust(), ModelKind::binary(), ModelKind::nls(0.5)].iter().enumerate() {
            for rep in 0..100 {
                let d = 4;
                let theta0 = vec![1.0, -1.0, 0.0, 0.0];
                let model = ModelSpec::new(*kind, theta0).unwrap();
                let design = DesignSpec::rademacher(d, 1.0);
                let noise = NoiseSpec::gaussian(if k == 2 { 0.5 } else { 1.0 });
                let data = Dataset::generate(&model, &design, &noise, 50, (k * 1000 + rep) as u64).unwrap();
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (_, g) = risk_and_grad(kind, &data.x, &data.y, &theta).unwrap();
                let fd = central_fd(kind, &data.x, &data.y, &theta);
                let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den = crate::linalg::norm_l2(&fd).max(1e-3);
                // Tukey kinks at |r| = t0 are C^2-smooth, so central differences are accurate
                assert!(num / den <= 1e-6, "{kind:?} rep {rep}: rel err {}", num / den);
            }
        }
    }

    proptest! {
        #[test]
        fn tukey_symmetry(t in -20.0..20.0f64, t0 in 0.1..10.0f64) {
            prop_assert_eq!(tukey_rho_raw(-t, t0), tukey_rho_raw(t, t0));
            prop_assert_eq!(tukey_rho_deriv_raw(-t, t0), -tukey_rho_deriv_raw(t, t0));
            let v = tukey_rho_raw(t, t0);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(tukey_rho_deriv_raw(t.abs(), t0) >= 0.0);
            prop_assert!(tukey_rho_deriv_raw(t, t0).abs() <= tukey_deriv_peak_factor() / t0 * (1.0 + 1e-12));
        }

        #[test]
        fn tukey_monotone_in_abs(a in 0.0..10.0f64, b in 0.0..10.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(tukey_rho_raw(lo, 3.0) <= tukey_rho_raw(hi, 3.0));
        }

        #[test]
        // tanh rounds to +-1 beyond |t| ~ 19 in double precision
        fn link_derivs_positive(t in -15.0..15.0f64) {
            for kind in [LinkKind::Logistic, LinkKind::Tanh] {
                let (v, dv) = link_raw(kind, t);
                prop_assert!(dv > 0.0);
                match kind {
                    LinkKind::Logistic => {
                        prop_assert!(v > 0.0 && v < 1.0);
                        prop_assert!((dv - v * (1.0 - v)).abs() < 1e-15);
                    }
                    LinkKind::Tanh => {
                        prop_assert!(v > -1.0 && v < 1.0);
                        prop_assert!((dv - (1.0 - v * v)).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn lipschitz_and_boundedness() {
        use rand::Rng;
        let mut rng = rng::stream(3, "lip", 0);
        let robust = ModelKind::robust();
        let binary = ModelKind::binary();
        let lr = robust.constants();
        let lb = binary.constants();
        let nls = ModelKind::nls(1.0).constants();
        let m_f = nls.m_f.unwrap();
        for _ in 0..10_000 {
            let t: f64 = rng.random_range(-15.0..15.0);
            let s: f64 = rng.random_range(-15.0..15.0);
            let y: f64 = rng.random_range(-15.0..15.0);
            let yb = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let dr = (robust.loss_raw(t, y) - robust.loss_raw(s, y)).abs();
            assert!(dr <= lr.lipschitz_l * (t - s).abs() + 1e-15);
            assert!(robust.loss_raw(t, y) <= lr.m_rho.unwrap());
            let db = (binary.loss_raw(t, yb) - binary.loss_raw(s, yb)).abs();
            assert!(db <= lb.lipschitz_l * (t - s).abs() + 1e-15);
            assert!(binary.loss_raw(t, yb) <= 1.0);
            // bounded part of the nls decomposition, anchored at c = f(y)
            let c = y.tanh();
            let bt = (t.tanh() - c).powi(2);
            let bs = (s.tanh() - c).powi(2);
            assert!((bt - bs).abs() <= nls.lipschitz_l * (t - s).abs() + 1e-15);
            assert!(bt <= 4.0 * m_f * m_f);
        }
    }

    #[test]
    fn true_risk_oracle_nls_at_truth() {
        let sd = 0.7;
        let model = ModelSpec::new(ModelKind::nls(sd), vec![1.0, 0.0, -0.5]).unwrap();
        let design = DesignSpec::rademacher(3, 1.0);
        let (est, se) = true_risk_oracle(&model, &design, &NoiseSpec::gaussian(sd), &model.theta0, 100_000, 5).unwrap();
        assert!((est - sd * sd).abs() <= 4.0 * se, "{est} +- {se}");
        let again = true_risk_oracle(&model, &design, &NoiseSpec::gaussian(sd), &model.theta0, 100_000, 5).unwrap();
        assert_eq!((est, se), again);
        assert!(true_risk_oracle(&model, &design, &NoiseSpec::gaussian(sd), &model.theta0, 99, 5).is_err());
    }

    #[test]
    fn true_risk_oracle_robust_matches_quadrature() {
        let model = ModelSpec::new(ModelKind::robust(), vec![0.5, -0.5]).unwrap();
        let design = DesignSpec::rademacher(2, 1.0);
        let noise = NoiseSpec::gaussian(2.0);
        let (est, se) = true_risk_oracle(&model, &design, &noise, &model.theta0, 200_000, 9).unwrap();
        // E[rho(eps)] by composite Simpson on [-t0, t0] plus the saturated tails
        let pdf = |e: f64| (-(e * e) / 8.0).exp() / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        let m = 20_000;
        let h = 2.0 * T0 / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let e = -T0 + k as f64 * h;
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * tukey_rho_raw(e, T0) * pdf(e);
        }
        let inside = acc * h / 3.0;
        let tail = statrs::function::erf::erfc(T0 / (2.0 * 2.0_f64.sqrt()));
        let expect = inside + tail;
        assert!((est - expect).abs() <= 4.0 * se, "{est} +- {se} vs {expect}");
    }

    #[test]
    fn true_risk_oracle_binary_conditional_variance() {
        let model = ModelSpec::new(ModelKind::binary(), vec![1.0, 1.0, 0.0]).unwrap();
        let design = DesignSpec::rademacher(3, 1.0);
        let (est, se) = true_risk_oracle(&model, &design, &NoiseSpec::gaussian(1.0), &model.theta0, 200_000, 21).unwrap();
        // X^T theta0 takes values -2, 0, 2 with probabilities 1/4, 1/2, 1/4
        let v = |t: f64| {
            let s = 1.0 / (1.0 + (-t).exp());
            s * (1.0 - s)
        };
        let expect = 0.25 * v(-2.0) + 0.5 * v(0.0) + 0.25 * v(2.0);
        assert!((est - expect).abs() <= 4.0 * se, "{est} +- {se} vs {expect}");
    }
}
