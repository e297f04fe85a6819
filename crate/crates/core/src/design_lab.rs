//! Synthetic bounded sub-Gaussian designs, noise laws and responses.
//!
//! All designs have independent symmetric bounded base coordinates, so
//! `|X|_inf <= m_x`, `E[X] = 0` and `X` is `m_x^2`-sub-Gaussian. The optional
//! moving-average variant averages `n_mix` adjacent base coordinates, which
//! keeps those three properties while making the covariance non-diagonal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, Matrix};
use crate::model_zoo::{link_raw, ModelKind, ModelSpec};
use crate::rng::{self, fill_rademacher, uniform_sym};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DesignFamily {
    Rademacher { scale: f64 },
    Uniform { half_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub d: usize,
    pub family: DesignFamily,
    #[serde(default)]
    pub n_mix: Option<usize>,
}

impl DesignSpec {
    pub fn rademacher(d: usize, scale: f64) -> Self {
        DesignSpec {
            d,
            family: DesignFamily::Rademacher { scale },
            n_mix: None,
        }
    }

    pub fn uniform(d: usize, half_width: f64) -> Self {
        DesignSpec {
            d,
            family: DesignFamily::Uniform { half_width },
            n_mix: None,
        }
    }

    pub fn with_mixing(mut self, width: usize) -> Self {
        self.n_mix = Some(width);
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("design dimension d must be >= 1"));
        }
        let m = self.m_x();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::invalid(format!("design bound must be positive, got {m}")));
        }
        if self.n_mix == Some(0) {
            return Err(Error::invalid("n_mix must be >= 1"));
        }
        Ok(())
    }

    /// Sup-norm bound `M_X` of a design row.
    pub fn m_x(&self) -> f64 {
        match self.family {
            DesignFamily::Rademacher { scale } => scale,
            DesignFamily::Uniform { half_width } => half_width,
        }
    }

    fn mix_width(&self) -> usize {
        self.n_mix.unwrap_or(1).max(1)
    }

    /// Variance of one base coordinate.
    fn base_variance(&self) -> f64 {
        match self.family {
            DesignFamily::Rademacher { scale } => scale * scale,
            DesignFamily::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    /// Analytic `E[X X^T]`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let w = self.mix_width();
        let v = self.base_variance();
        DMatrix::from_fn(self.d, self.d, |i, j| {
            let lag = i.abs_diff(j);
            if lag < w {
                v * (w - lag) as f64 / (w * w) as f64
            } else {
                0.0
            }
        })
    }

    pub(crate) fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.d + self.mix_width() - 1]
    }

    pub(crate) fn sample_row<R: Rng>(&self, rng: &mut R, scratch: &mut [f64], row: &mut [f64]) {
        let w = self.mix_width();
        let target: &mut [f64] = if w == 1 { row } else { scratch };
        match self.family {
            DesignFamily::Rademacher { scale } => fill_rademacher(rng, scale, target),
            DesignFamily::Uniform { half_width } => {
                for v in target.iter_mut() {
                    *v = uniform_sym(rng, half_width);
                }
            }
        }
        if w > 1 {
            let inv = 1.0 / w as f64;
            let mut acc: f64 = scratch[..w].iter().sum();
            row[0] = acc * inv;
            for j in 1..row.len() {
                acc += scratch[j + w - 1] - scratch[j - 1];
                row[j] = acc * inv;
            }
            // running sums drift by a few ulps; keep the hard bound exact
            let m = self.m_x();
            for v in row.iter_mut() {
                *v = v.clamp(-m, m);
            }
        }
    }
}

/// Smallest eigenvalue of `E[X X^T]`.
pub fn rho_x_of(spec: &DesignSpec) -> Result<f64> {
    spec.validate()?;
    if spec.mix_width() == 1 {
        return Ok(spec.base_variance());
    }
    let eig = SymmetricEigen::new(spec.covariance());
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `n x d` design matrix with i.i.d. rows.
pub fn gen_design(spec: &DesignSpec, n: usize, seed: u64) -> Result<Matrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut rng = rng::stream(seed, "design", 0);
    let mut x = Matrix::zeros(n, spec.d);
    let mut scratch = spec.scratch();
    for i in 0..n {
        spec.sample_row(&mut rng, &mut scratch, x.row_mut(i));
    }
    Ok(x)
}

/// Sparse truth: `s0` entries of `+-magnitude` on a uniformly drawn support.
pub fn gen_theta0(d: usize, s0: usize, magnitude: f64, seed: u64) -> Result<Vec<f64>> {
    if s0 == 0 || s0 > d {
        return Err(Error::invalid(format!("need 1 <= s0 <= d, got s0={s0}, d={d}")));
    }
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::invalid("magnitude must be positive"));
    }
    let mut rng = rng::stream(seed, "theta0", 0);
    let mut theta = vec![0.0; d];
    for j in index::sample(&mut rng, d, s0) {
        theta[j] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    Ok(theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { sd: f64 },
    Laplace { scale: f64 },
    #[serde(rename = "student")]
    StudentT { dof: f64, scale: f64 },
    #[serde(rename = "contam")]
    ContaminatedGaussian { sd1: f64, sd2: f64, mix: f64 },
}

impl NoiseSpec {
    pub fn gaussian(sd: f64) -> Self {
        NoiseSpec::Gaussian { sd }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Gaussian { sd } => sd.is_finite() && sd >= 0.0,
            NoiseSpec::Laplace { scale } => scale.is_finite() && scale > 0.0,
            NoiseSpec::StudentT { dof, scale } => dof.is_finite() && dof > 0.0 && scale.is_finite() && scale > 0.0,
            NoiseSpec::ContaminatedGaussian { sd1, sd2, mix } => {
                sd1.is_finite() && sd1 > 0.0 && sd2.is_finite() && sd2 > 0.0 && mix > 0.0 && mix < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid noise parameters: {self:?}")))
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::Laplace { .. } => "laplace",
            NoiseSpec::StudentT { .. } => "student",
            NoiseSpec::ContaminatedGaussian { .. } => "contam",
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            NoiseSpec::Laplace { scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            }
            NoiseSpec::StudentT { dof, scale } => {
                // parameters validated upstream
                let t = StudentT::new(dof).expect("validated dof");
                scale * t.sample(rng)
            }
            NoiseSpec::ContaminatedGaussian { sd1, sd2, mix } => {
                let z: f64 = StandardNormal.sample(rng);
                if rng.random::<f64>() < mix {
                    sd2 * z
                } else {
                    sd1 * z
                }
            }
        }
    }

    /// Lebesgue density; `None` for the degenerate `Gaussian { sd: 0 }`.
    pub fn pdf(&self, e: f64) -> Option<f64> {
        use statrs::function::gamma::ln_gamma;
        let normal = |sd: f64| (-(e * e) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        match *self {
            NoiseSpec::Gaussian { sd } if sd == 0.0 => None,
            NoiseSpec::Gaussian { sd } => Some(normal(sd)),
            NoiseSpec::Laplace { scale } => Some((-e.abs() / scale).exp() / (2.0 * scale)),
            NoiseSpec::StudentT { dof, scale } => {
                let z = e / scale;
                let log_c = ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln();
                Some((log_c - (dof + 1.0) / 2.0 * (1.0 + z * z / dof).ln()).exp() / scale)
            }
            NoiseSpec::ContaminatedGaussian { sd1, sd2, mix } => Some((1.0 - mix) * normal(sd1) + mix * normal(sd2)),
        }
    }
}

/// The nls model requires Gaussian noise whose sd matches the model's.
pub(crate) fn check_noise_for(kind: &ModelKind, noise: &NoiseSpec) -> Result<()> {
    noise.validate()?;
    if let ModelKind::Nls { noise_sd, .. } = *kind {
        match *noise {
            NoiseSpec::Gaussian { sd } if sd == noise_sd => {}
            NoiseSpec::Gaussian { sd } => {
                return Err(Error::invalid(format!(
                    "nls noise sd {sd} does not match the model's noise_sd {noise_sd}"
                )))
            }
            _ => return Err(Error::invalid("nls model requires Gaussian noise")),
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn sample_response<R: Rng>(kind: &ModelKind, theta0: &[f64], row: &[f64], noise: &NoiseSpec, rng: &mut R) -> f64 {
    let index = dot(row, theta0);
    match *kind {
        ModelKind::Robust { .. } => index + noise.sample(rng),
        ModelKind::Binary { link } => {
            let p = link_raw(link, index).0;
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        ModelKind::Nls { link, .. } => link_raw(link, index).0 + noise.sample(rng),
    }
}

/// Responses for design `x` under `model`. The binary model ignores `noise`.
pub fn gen_response(model: &ModelSpec, x: &Matrix, noise: &NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    check_len(&model.theta0, x.cols())?;
    check_noise_for(&model.kind, noise)?;
    let mut rng = rng::stream(seed, "response", 0);
    Ok(x.iter_rows()
        .map(|row| sample_response(&model.kind, &model.theta0, row, noise, &mut rng))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub model: ModelKind,
    /// Known only for generated data.
    pub theta0: Option<Vec<f64>>,
    pub design: Option<DesignSpec>,
    pub seed: u64,
}

impl Dataset {
    /// Design and responses from independent sub-streams of `seed`.
    pub fn generate(model: &ModelSpec, design: &DesignSpec, noise: &NoiseSpec, n: usize, seed: u64) -> Result<Self> {
        check_len(&model.theta0, design.d)?;
        let x = gen_design(design, n, rng::derive_seed(seed, "dataset-design", 0))?;
        let y = gen_response(model, &x, noise, rng::derive_seed(seed, "dataset-noise", 0))?;
        Ok(Dataset {
            x,
            y,
            model: model.kind,
            theta0: Some(model.theta0.clone()),
            design: Some(*design),
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// `M_X` from the design spec when known, else the largest observed entry.
    pub fn m_x(&self) -> f64 {
        self.design.map(|d| d.m_x()).unwrap_or_else(|| self.x.max_abs())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.n() * (self.d() + 1) * 25 + 80);
        let _ = writeln!(
            out,
            "# nclasso-dataset v1; n={} d={} model={} seed={}",
            self.n(),
            self.d(),
            self.model.tag(),
            self.seed
        );
        for (row, y) in self.x.iter_rows().zip(&self.y) {
            let _ = write!(out, "{}", fmt17(*y));
            for v in row {
                let _ = write!(out, ",{}", fmt17(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parses the text format. `model` supplies loss hyperparameters; its tag
    /// must match the header. Without it, defaults for the header tag are used.
    pub fn from_text(text: &str, model: Option<ModelKind>) -> Result<Self> {
        let perr = |msg: String| Error::Parse {
            context: "dataset".into(),
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr("empty file".into()))?;
        let rest = header
            .strip_prefix("# nclasso-dataset v1; ")
            .ok_or_else(|| perr(format!("bad header: {header}")))?;
        let (mut n, mut d, mut tag, mut seed) = (None, None, None, None);
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| perr(format!("bad header field {field}")))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "d" => d = v.parse::<usize>().ok(),
                "model" => tag = Some(v.to_string()),
                "seed" => seed = v.parse::<u64>().ok(),
                _ => return Err(perr(format!("unknown header field {k}"))),
            }
        }
        let (n, d, tag, seed) = match (n, d, tag, seed) {
            (Some(n), Some(d), Some(t), Some(s)) => (n, d, t, s),
            _ => return Err(perr("header must carry n, d, model and seed".into())),
        };
        let model = match model {
            Some(m) if m.tag() == tag => m,
            Some(m) => return Err(perr(format!("header model {tag} does not match {}", m.tag()))),
            None => match tag.as_str() {
                "robust" => ModelKind::robust(),
                "binary" => ModelKind::binary(),
                "nls" => ModelKind::nls(0.0),
                other => return Err(perr(format!("unknown model tag {other}"))),
            },
        };
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| perr(format!("row {}: {e}", i + 1)))?;
            if vals.len() != d + 1 {
                return Err(perr(format!("row {} has {} values, expected {}", i + 1, vals.len(), d + 1)));
            }
            model.check_response(vals[0])?;
            y.push(vals[0]);
            x.extend_from_slice(&vals[1..]);
        }
        if y.len() != n {
            return Err(perr(format!("expected {n} rows, found {}", y.len())));
        }
        Ok(Dataset {
            x: Matrix::from_vec(n, d, x)?,
            y,
            model,
            theta0: None,
            design: None,
            seed,
        })
    }

    pub fn read(path: &Path, model: Option<ModelKind>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, model)
    }
}

/// Decimal rendering with 17 significant digits (round-trips every `f64`).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
