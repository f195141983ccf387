//! Probability paths `x_t = Φ_t(x0, x1)` with conditional targets `u_t = ∂_t Φ_t`.
//!
//! Every supported path is affine in the endpoints,
//! `x_t = a(t)·x0 + b(t)·x1`, so a path kind is fully described by the
//! coefficient pair and its time derivatives.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};

/// `1 - t` is clamped to this floor where the VP target is singular (`t = 1`).
pub const VP_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    /// `x_t = (1-t)·x0 + t·x1`.
    #[default]
    Linear,
    /// `x_t = (1-(1-σ_min)t)·x0 + t·x1`.
    OtSigma { sigma_min: f64 },
    /// Variance-preserving diffusion path with linear β schedule, data at `t = 1`.
    Vp { beta_min: f64, beta_max: f64 },
    /// Linear interpolation between rows of a coupling table (reflow).
    Coupled,
}

/// Affine path coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    /// weight on x0
    pub a: f64,
    /// weight on x1
    pub b: f64,
    pub da: f64,
    pub db: f64,
    pub dda: f64,
    pub ddb: f64,
}

impl PathKind {
    pub fn vp_default() -> Self {
        PathKind::Vp {
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PathKind::OtSigma { sigma_min } if !(0.0..1.0).contains(&sigma_min) => Err(Error::Config(
                format!("sigma_min = {sigma_min} must lie in [0, 1)"),
            )),
            PathKind::Vp { beta_min, beta_max } if !(beta_min > 0.0 && beta_max > 0.0) => Err(
                Error::Config(format!("β schedule must be positive (got {beta_min}, {beta_max})")),
            ),
            _ => Ok(()),
        }
    }

    pub fn coeffs(&self, t: f64) -> Coeffs {
        match *self {
            PathKind::Linear | PathKind::Coupled => Coeffs {
                a: 1.0 - t,
                b: t,
                da: -1.0,
                db: 1.0,
                dda: 0.0,
                ddb: 0.0,
            },
            PathKind::OtSigma { sigma_min } => Coeffs {
                a: 1.0 - (1.0 - sigma_min) * t,
                b: t,
                da: -(1.0 - sigma_min),
                db: 1.0,
                dda: 0.0,
                ddb: 0.0,
            },
            PathKind::Vp { beta_min, beta_max } => {
                // s = 1 - t runs the diffusion forward; α_s = exp(-T(s)/2).
                let s = (1.0 - t).max(0.0);
                let slope = beta_max - beta_min;
                let big_t = beta_min * s + 0.5 * slope * s * s;
                let beta = beta_min + slope * s;
                let alpha = (-0.5 * big_t).exp();
                let dalpha = 0.5 * beta * alpha;
                let ddalpha = -0.5 * slope * alpha + 0.5 * beta * dalpha;
                // σ is singular in derivative at s = 0; evaluate its
                // derivatives just inside the interval there.
                let se = s.max(VP_EDGE);
                let big_te = beta_min * se + 0.5 * slope * se * se;
                let beta_e = beta_min + slope * se;
                let alpha_e = (-0.5 * big_te).exp();
                let dalpha_e = 0.5 * beta_e * alpha_e;
                let ddalpha_e = -0.5 * slope * alpha_e + 0.5 * beta_e * dalpha_e;
                let sigma = (1.0 - alpha * alpha).max(0.0).sqrt();
                let sigma_e = (-(-big_te).exp_m1()).sqrt();
                let dsigma = -alpha_e * dalpha_e / sigma_e;
                let ddsigma = -(dalpha_e * dalpha_e + alpha_e * ddalpha_e) / sigma_e
                    + alpha_e * dalpha_e * dsigma / (sigma_e * sigma_e);
                Coeffs {
                    a: sigma,
                    b: alpha,
                    da: dsigma,
                    db: dalpha,
                    dda: ddsigma,
                    ddb: ddalpha,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointPair {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x_t: Vec<f64>,
    pub u_t: Vec<f64>,
    pub t: f64,
    pub endpoint_id: u64,
}

/// Training data: plain samples of the target, or a reflow coupling table.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Points { dim: usize, rows: Vec<Vec<f64>> },
    Coupling { dim: usize, pairs: Vec<(Vec<f64>, Vec<f64>)> },
}

impl DataSource {
    pub fn points(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Data("rows have inconsistent dimension".into()));
        }
        Ok(DataSource::Points { dim, rows })
    }

    pub fn coupling(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let dim = pairs.first().map(|p| p.0.len()).unwrap_or(0);
        if pairs.iter().any(|(a, b)| a.len() != dim || b.len() != dim) {
            return Err(Error::Data("coupling rows have inconsistent dimension".into()));
        }
        Ok(DataSource::Coupling { dim, pairs })
    }

    pub fn dim(&self) -> usize {
        match self {
            DataSource::Points { dim, .. } | DataSource::Coupling { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DataSource::Points { rows, .. } => rows.len(),
            DataSource::Coupling { pairs, .. } => pairs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn standard_normal<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws `batch_size` endpoint pairs; `first_id` numbers them consecutively.
///
/// Plain data gets an independent standard-normal `x0` per row; a coupling
/// table returns its stored `(x0, x1)` rows verbatim.
pub fn sample_endpoints<R: Rng>(
    source: &DataSource,
    batch_size: usize,
    first_id: u64,
    rng: &mut R,
) -> Result<Vec<EndpointPair>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if source.is_empty() {
        return Err(Error::Data("data source is empty".into()));
    }
    let n = source.len();
    let dim = source.dim();
    Ok((0..batch_size as u64)
        .map(|k| {
            let i = rng.random_range(0..n);
            match source {
                DataSource::Points { rows, .. } => EndpointPair {
                    x0: standard_normal(dim, rng),
                    x1: rows[i].clone(),
                    id: first_id + k,
                },
                DataSource::Coupling { pairs, .. } => EndpointPair {
                    x0: pairs[i].0.clone(),
                    x1: pairs[i].1.clone(),
                    id: first_id + k,
                },
            }
        })
        .collect())
}

pub fn sample_path(kind: &PathKind, ep: &EndpointPair, t: f64) -> Result<PathSample> {
    check_unit_interval(t, "t")?;
    let c = kind.coeffs(t);
    Ok(PathSample {
        x_t: ep.x0.iter().zip(&ep.x1).map(|(a, b)| c.a * a + c.b * b).collect(),
        u_t: ep.x0.iter().zip(&ep.x1).map(|(a, b)| c.da * a + c.db * b).collect(),
        t,
        endpoint_id: ep.id,
    })
}

/// Both samples are built from the same endpoints.
pub fn sample_paired(
    kind: &PathKind,
    ep: &EndpointPair,
    t: f64,
    t_prime: f64,
) -> Result<(PathSample, PathSample)> {
    Ok((sample_path(kind, ep, t)?, sample_path(kind, ep, t_prime)?))
}

/// Whether paired samples share the augmentation noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSharing {
    #[default]
    Independent,
    Shared,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("noise scale σ = {sigma} must be >= 0")))
    }
}

/// `x_t ← x_t + ε`, `ε ~ N(0, σ² I)`; `u_t` and `t` are untouched.
pub fn noise_augment<R: Rng>(sample: &PathSample, sigma: f64, rng: &mut R) -> Result<PathSample> {
    check_sigma(sigma)?;
    let mut out = sample.clone();
    if sigma > 0.0 {
        for v in &mut out.x_t {
            let e: f64 = StandardNormal.sample(rng);
            *v += sigma * e;
        }
    }
    Ok(out)
}

pub fn noise_augment_paired<R: Rng>(
    pair: &(PathSample, PathSample),
    sigma: f64,
    sharing: NoiseSharing,
    rng: &mut R,
) -> Result<(PathSample, PathSample)> {
    check_sigma(sigma)?;
    match sharing {
        NoiseSharing::Independent => Ok((
            noise_augment(&pair.0, sigma, rng)?,
            noise_augment(&pair.1, sigma, rng)?,
        )),
        NoiseSharing::Shared => {
            let eps = standard_normal(pair.0.x_t.len(), rng);
            let shift = |s: &PathSample| {
                let mut o = s.clone();
                for (v, e) in o.x_t.iter_mut().zip(&eps) {
                    *v += sigma * e;
                }
                o
            };
            Ok((shift(&pair.0), shift(&pair.1)))
        }
    }
}
