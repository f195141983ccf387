//! Pairing operators `t ↦ t'`: the antithetic map and a learned monotone map
//!
//! `φ(t) = σ(Σ_i a_i σ(t + b_i) + c)` with `a_i = softplus(ã_i) > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::nn::{sigmoid, softplus};
use crate::params::ParamVector;

pub const A_RAW: &str = "pairing.a_raw";
pub const OFFSETS: &str = "pairing.b";
pub const BIAS: &str = "pairing.c";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    Fixed,
    #[default]
    Learned,
}

/// Pairing configuration. Learned parameters live in the model's
/// [`ParamVector`] under the `pairing.*` segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingSpec {
    pub mode: PairingMode,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_hidden() -> usize {
    8
}

fn default_grid() -> usize {
    32
}

impl Default for PairingSpec {
    fn default() -> Self {
        Self::learned()
    }
}

impl PairingSpec {
    pub fn fixed() -> Self {
        Self {
            mode: PairingMode::Fixed,
            hidden: default_hidden(),
            grid: default_grid(),
        }
    }

    pub fn learned() -> Self {
        Self {
            mode: PairingMode::Learned,
            hidden: default_hidden(),
            grid: default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!("monotonicity grid K = {} must be >= 2", self.grid)));
        }
        if self.mode == PairingMode::Learned && self.hidden == 0 {
            return Err(Error::Config("learned pairing needs at least one hidden unit".into()));
        }
        Ok(())
    }

    /// Parameter segments owned by the pairing (empty for the fixed map).
    pub fn segments(&self) -> Vec<(String, usize)> {
        match self.mode {
            PairingMode::Fixed => vec![],
            PairingMode::Learned => vec![
                (A_RAW.to_string(), self.hidden),
                (OFFSETS.to_string(), self.hidden),
                (BIAS.to_string(), 1),
            ],
        }
    }

    /// `ã_i = 0`, `b_i` evenly spaced over `[-1, 0]`, `c = 0`.
    pub fn init(&self, params: &mut ParamVector) -> Result<()> {
        if self.mode == PairingMode::Fixed {
            return Ok(());
        }
        let h = self.hidden;
        params
            .segment_mut(A_RAW)
            .ok_or_else(|| Error::Config("missing pairing segments".into()))?
            .fill(0.0);
        let b = params.segment_mut(OFFSETS).unwrap();
        for (i, v) in b.iter_mut().enumerate() {
            *v = if h == 1 { -0.5 } else { -1.0 + i as f64 / (h - 1) as f64 };
        }
        params.segment_mut(BIAS).unwrap()[0] = 0.0;
        Ok(())
    }
}

/// Antithetic map `t ↦ 1 - t`.
pub fn psi_fixed(t: f64) -> Result<f64> {
    check_unit_interval(t, "t")?;
    Ok(1.0 - t)
}

/// Resolved view of the learned map's parameters.
#[derive(Debug, Clone, Copy)]
pub struct Phi<'a> {
    a_raw: &'a [f64],
    b: &'a [f64],
    c: f64,
    offsets: (usize, usize, usize),
}

impl<'a> Phi<'a> {
    pub fn new(spec: &PairingSpec, params: &'a ParamVector) -> Result<Self> {
        if spec.mode != PairingMode::Learned {
            return Err(Error::Config("φ requested but pairing mode is fixed".into()));
        }
        let find = |n: &str| {
            params
                .find(n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing segment `{n}`")))
        };
        let (sa, sb, sc) = (find(A_RAW)?, find(OFFSETS)?, find(BIAS)?);
        let v = params.values();
        Ok(Self {
            a_raw: &v[sa.offset..sa.offset + sa.len],
            b: &v[sb.offset..sb.offset + sb.len],
            c: v[sc.offset],
            offsets: (sa.offset, sb.offset, sc.offset),
        })
    }

    /// Effective slopes `a_i = softplus(ã_i)`.
    pub fn slopes(&self) -> Vec<f64> {
        self.a_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s: f64 = self
            .a_raw
            .iter()
            .zip(self.b)
            .map(|(&r, &b)| softplus(r) * sigmoid(t + b))
            .sum::<f64>()
            + self.c;
        sigmoid(s)
    }

    /// Returns `(φ(t), dφ/dt)` and adds `upstream · ∂φ/∂params` into `grad`.
    pub fn eval_backward(&self, t: f64, upstream: f64, grad: &mut [f64]) -> (f64, f64) {
        let mut s = self.c;
        for (&r, &b) in self.a_raw.iter().zip(self.b) {
            s += softplus(r) * sigmoid(t + b);
        }
        let phi = sigmoid(s);
        let ds = phi * (1.0 - phi);
        let (oa, ob, oc) = self.offsets;
        let mut dt = 0.0;
        for (i, (&r, &b)) in self.a_raw.iter().zip(self.b).enumerate() {
            let a = softplus(r);
            let sg = sigmoid(t + b);
            let dsg = sg * (1.0 - sg);
            grad[oa + i] += upstream * ds * sg * sigmoid(r);
            grad[ob + i] += upstream * ds * a * dsg;
            dt += a * dsg;
        }
        grad[oc] += upstream * ds;
        (phi, ds * dt)
    }
}

pub fn phi_eval(spec: &PairingSpec, params: &ParamVector, t: f64) -> Result<f64> {
    check_unit_interval(t, "t")?;
    Ok(Phi::new(spec, params)?.eval(t))
}

/// Auxiliary time for `t` under the configured pairing.
pub fn pair_time(spec: &PairingSpec, params: &ParamVector, t: f64) -> Result<f64> {
    match spec.mode {
        PairingMode::Fixed => psi_fixed(t),
        PairingMode::Learned => phi_eval(spec, params, t),
    }
}

/// Adjacent order violations of a table of values: the indicator count and
/// the hinge surrogate `Σ max(0, v_k - v_{k+1})`.
pub fn order_violations(values: &[f64]) -> (usize, f64) {
    values.windows(2).fold((0, 0.0), |(n, s), w| {
        if w[1] < w[0] {
            (n + 1, s + (w[0] - w[1]))
        } else {
            (n, s)
        }
    })
}

/// Monotonicity penalty of `φ` on the grid `g_k = k/K`, `k = 1..K`.
///
/// Fixed pairing has nothing to penalize and returns `(0, 0.0)`.
pub fn mono_penalty(spec: &PairingSpec, params: &ParamVector, grid: usize) -> Result<(usize, f64)> {
    if grid < 2 {
        return Err(Error::Config(format!("monotonicity grid K = {grid} must be >= 2")));
    }
    if spec.mode == PairingMode::Fixed {
        return Ok((0, 0.0));
    }
    let phi = Phi::new(spec, params)?;
    let table: Vec<f64> = (1..=grid).map(|k| phi.eval(k as f64 / grid as f64)).collect();
    Ok(order_violations(&table))
}

/// Adds `weight · ∇ surrogate` into `grad`; returns `(count, surrogate)`.
pub fn mono_penalty_backward(
    spec: &PairingSpec,
    params: &ParamVector,
    grid: usize,
    weight: f64,
    grad: &mut [f64],
) -> Result<(usize, f64)> {
    let (count, surrogate) = mono_penalty(spec, params, grid)?;
    if count == 0 || weight == 0.0 {
        return Ok((count, surrogate));
    }
    let phi = Phi::new(spec, params)?;
    let g = |k: usize| k as f64 / grid as f64;
    for k in 1..grid {
        if phi.eval(g(k + 1)) < phi.eval(g(k)) {
            phi.eval_backward(g(k), weight, grad);
            phi.eval_backward(g(k + 1), -weight, grad);
        }
    }
    Ok((count, surrogate))
}
