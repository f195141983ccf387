//! The velocity field `v_θ(x, t)`: an MLP over `[x, sin/cos(2^k π t), t]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::nn::{Activation, Mlp, Tape};
use crate::params::ParamVector;

pub const PREFIX: &str = "velocity";

/// Network shape. `depth` counts affine layers, so depth 3 has two hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub dim: usize,
    pub width: usize,
    pub depth: usize,
    pub freqs: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            dim: 2,
            width: 64,
            depth: 3,
            freqs: 4,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.width < 1 || self.depth < 2 {
            return Err(Error::Config(format!(
                "arch needs dim >= 1, width >= 1, depth >= 2 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.dim + 2 * self.freqs + 1
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(std::iter::repeat_n(self.width, self.depth - 1));
        sizes.push(self.dim);
        sizes
    }

    pub fn segments(&self) -> Vec<(String, usize)> {
        Mlp::segments(PREFIX, &self.layer_sizes())
    }
}

/// Writes the embedded network input for `(x, t)` into `row`.
pub fn embed(arch: &Arch, x: &[f64], t: f64, row: &mut [f64]) {
    let d = arch.dim;
    row[..d].copy_from_slice(x);
    let mut omega = PI;
    for k in 0..arch.freqs {
        let (s, c) = (omega * t).sin_cos();
        row[d + 2 * k] = s;
        row[d + 2 * k + 1] = c;
        omega *= 2.0;
    }
    row[d + 2 * arch.freqs] = t;
}

/// Velocity network resolved against a parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    arch: Arch,
    mlp: Mlp,
}

/// Forward cache for a batch of `(x, t)` rows.
#[derive(Debug, Clone)]
pub struct BatchTape {
    tape: Tape,
    ts: Vec<f64>,
}

impl BatchTape {
    /// Row-major `rows × dim` velocities.
    pub fn output(&self) -> &[f64] {
        self.tape.output()
    }
}

/// Gradients of a scalar with respect to the network's `(x, t)` inputs.
#[derive(Debug, Clone)]
pub struct InputGrad {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl VelocityNet {
    pub fn new(arch: Arch, params: &ParamVector) -> Result<Self> {
        arch.validate()?;
        let mlp = Mlp::resolve(params, PREFIX, &arch.layer_sizes(), Activation::Silu)?;
        Ok(Self { arch, mlp })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn forward(&self, values: &[f64], x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_unit_interval(t, "t")?;
        if x.len() != self.arch.dim {
            return Err(Error::Config(format!(
                "state has dimension {} but the model expects {}",
                x.len(),
                self.arch.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("x"));
        }
        Ok(self.forward_batch(values, x, &[t])?.tape.output().to_vec())
    }

    /// Row-wise forward over `xs` (`ts.len() × dim`).
    pub fn forward_batch(&self, values: &[f64], xs: &[f64], ts: &[f64]) -> Result<BatchTape> {
        let d = self.arch.dim;
        let width = self.arch.input_dim();
        let rows = ts.len();
        if xs.len() != rows * d {
            return Err(Error::Config("batch shape mismatch".into()));
        }
        let mut input = vec![0.0; rows * width];
        for (r, &t) in ts.iter().enumerate() {
            check_unit_interval(t, "t")?;
            embed(&self.arch, &xs[r * d..(r + 1) * d], t, &mut input[r * width..(r + 1) * width]);
        }
        let tape = self.mlp.forward(values, &input, rows)?;
        Ok(BatchTape {
            tape,
            ts: ts.to_vec(),
        })
    }

    /// Backpropagates `grad_out` (`rows × dim`) into `grad` and optionally
    /// returns gradients with respect to each row's `x` and `t`.
    pub fn backward_batch(
        &self,
        values: &[f64],
        tape: &BatchTape,
        grad_out: &[f64],
        grad: &mut [f64],
        want_inputs: bool,
    ) -> Option<InputGrad> {
        let gin = self.mlp.backward(values, &tape.tape, grad_out, grad, want_inputs)?;
        let d = self.arch.dim;
        let width = self.arch.input_dim();
        let rows = tape.ts.len();
        let mut gx = Vec::with_capacity(rows * d);
        let mut gt = Vec::with_capacity(rows);
        for (r, &t) in tape.ts.iter().enumerate() {
            let row = &gin[r * width..(r + 1) * width];
            gx.extend_from_slice(&row[..d]);
            let mut acc = row[d + 2 * self.arch.freqs];
            let mut omega = PI;
            for k in 0..self.arch.freqs {
                let (s, c) = (omega * t).sin_cos();
                acc += omega * (row[d + 2 * k] * c - row[d + 2 * k + 1] * s);
                omega *= 2.0;
            }
            gt.push(acc);
        }
        Some(InputGrad { x: gx, t: gt })
    }

    /// Velocity and its exact divergence `tr ∂v/∂x` (forward-mode, `dim` tangents).
    pub fn velocity_and_divergence(&self, values: &[f64], x: &[f64], t: f64) -> (Vec<f64>, f64) {
        let d = self.arch.dim;
        let width = self.arch.input_dim();
        let mut input = vec![0.0; width];
        embed(&self.arch, x, t, &mut input);
        let mut tangents = vec![0.0; d * width];
        for j in 0..d {
            tangents[j * width + j] = 1.0;
        }
        let (v, dv) = self.mlp.forward_tangent(values, &input, &tangents);
        let div = (0..d).map(|j| dv[j * d + j]).sum();
        (v, div)
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_params(arch: &Arch, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut params = ParamVector::zeros(&arch.segments())?;
    let net = VelocityNet::new(*arch, &params)?;
    let mut rng = crate::rng::child(seed, crate::rng::INIT);
    net.mlp.init_glorot(&mut params, &mut rng);
    Ok(params)
}
