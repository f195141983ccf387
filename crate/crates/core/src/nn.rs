//! Batched multilayer perceptron over segments of a [`ParamVector`].
//!
//! Activations are row-major `rows × width` buffers. Weights are stored
//! `fan_out × fan_in` row-major, so a layer computes `Z = H Wᵀ + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Silu,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z * sigmoid(z),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

// C (m×n) = A (m×k) · Wᵀ where W is n×k.
fn gemm_a_wt(m: usize, k: usize, n: usize, a: &[f64], w: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: slice lengths match the strides checked above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            w.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

// C (n×k) += Gᵀ (n×m) · H (m×k), with G m×n.
fn gemm_gt_h_acc(m: usize, n: usize, k: usize, g: &[f64], h: &[f64], c: &mut [f64]) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(h.len(), m * k);
    debug_assert_eq!(c.len(), n * k);
    if m == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            n, m, k, 1.0,
            g.as_ptr(), 1, n as isize,
            h.as_ptr(), k as isize, 1,
            1.0,
            c.as_mut_ptr(), k as isize, 1,
        );
    }
}

// C (m×k) = G (m×n) · W (n×k).
fn gemm_g_w(m: usize, n: usize, k: usize, g: &[f64], w: &[f64], c: &mut [f64]) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(c.len(), m * k);
    if m == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0,
            g.as_ptr(), n as isize, 1,
            w.as_ptr(), k as isize, 1,
            0.0,
            c.as_mut_ptr(), k as isize, 1,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w_off: usize,
    b_off: usize,
    w_name: String,
}

/// Layer offsets resolved against a parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    act: Activation,
}

/// Cached activations from a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl Mlp {
    /// Segment names and sizes for an MLP with layer widths `sizes`.
    pub fn segments(prefix: &str, sizes: &[usize]) -> Vec<(String, usize)> {
        sizes
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    (format!("{prefix}.layer{l}.weight"), w[0] * w[1]),
                    (format!("{prefix}.layer{l}.bias"), w[1]),
                ]
            })
            .collect()
    }

    pub fn resolve(params: &ParamVector, prefix: &str, sizes: &[usize], act: Activation) -> Result<Self> {
        let mut layers = Vec::with_capacity(sizes.len().saturating_sub(1));
        for (l, w) in sizes.windows(2).enumerate() {
            let w_name = format!("{prefix}.layer{l}.weight");
            let b_name = format!("{prefix}.layer{l}.bias");
            let ws = params
                .find(&w_name)
                .ok_or_else(|| Error::Config(format!("missing segment `{w_name}`")))?;
            let bs = params
                .find(&b_name)
                .ok_or_else(|| Error::Config(format!("missing segment `{b_name}`")))?;
            if ws.len != w[0] * w[1] || bs.len != w[1] {
                return Err(Error::Config(format!("segment sizes of layer {l} do not match")));
            }
            layers.push(Layer {
                fan_in: w[0],
                fan_out: w[1],
                w_off: ws.offset,
                b_off: bs.offset,
                w_name,
            });
        }
        if layers.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        Ok(Self { layers, act })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot<R: Rng>(&self, params: &mut ParamVector, rng: &mut R) {
        let values = params.values_mut();
        for layer in &self.layers {
            let bound = glorot_bound(layer.fan_in, layer.fan_out);
            for v in &mut values[layer.w_off..layer.w_off + layer.fan_in * layer.fan_out] {
                *v = rng.random_range(-bound..=bound);
            }
            values[layer.b_off..layer.b_off + layer.fan_out].fill(0.0);
        }
    }

    pub fn glorot_bounds(&self) -> Vec<(String, f64)> {
        self.layers
            .iter()
            .map(|l| (l.w_name.clone(), glorot_bound(l.fan_in, l.fan_out)))
            .collect()
    }

    /// Forward pass over `rows` inputs laid out row-major.
    pub fn forward(&self, values: &[f64], input: &[f64], rows: usize) -> Result<Tape> {
        debug_assert_eq!(input.len(), rows * self.input_dim());
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &values[layer.w_off..layer.w_off + layer.fan_in * layer.fan_out];
            let b = &values[layer.b_off..layer.b_off + layer.fan_out];
            let mut z = vec![0.0; rows * layer.fan_out];
            gemm_a_wt(rows, layer.fan_in, layer.fan_out, &h, w, &mut z);
            for row in z.chunks_exact_mut(layer.fan_out) {
                for (zi, bi) in row.iter_mut().zip(b) {
                    *zi += bi;
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(&layer.w_name));
            }
            inputs.push(h);
            if l + 1 < n {
                h = z.iter().map(|&v| self.act.apply(v)).collect();
                pre.push(z);
            } else {
                h = z;
            }
        }
        Ok(Tape {
            rows,
            inputs,
            pre,
            output: h,
        })
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the network input when `want_input` is set.
    pub fn backward(
        &self,
        values: &[f64],
        tape: &Tape,
        grad_out: &[f64],
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = tape.rows;
        let n = self.layers.len();
        let mut g = grad_out.to_vec();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if l + 1 < n {
                for (gi, &zi) in g.iter_mut().zip(&tape.pre[l]) {
                    *gi *= self.act.derivative(zi);
                }
            }
            gemm_gt_h_acc(
                rows,
                layer.fan_out,
                layer.fan_in,
                &g,
                &tape.inputs[l],
                &mut grad[layer.w_off..layer.w_off + layer.fan_in * layer.fan_out],
            );
            let gb = &mut grad[layer.b_off..layer.b_off + layer.fan_out];
            for row in g.chunks_exact(layer.fan_out) {
                for (a, b) in gb.iter_mut().zip(row) {
                    *a += b;
                }
            }
            if l > 0 || want_input {
                let w = &values[layer.w_off..layer.w_off + layer.fan_in * layer.fan_out];
                let mut gin = vec![0.0; rows * layer.fan_in];
                gemm_g_w(rows, layer.fan_out, layer.fan_in, &g, w, &mut gin);
                g = gin;
            }
        }
        want_input.then_some(g)
    }

    /// Output for one input plus directional derivatives along each tangent.
    ///
    /// `tangents` holds `k` input-space directions row-major; the result's
    /// second element holds the `k` output-space derivatives row-major.
    pub fn forward_tangent(&self, values: &[f64], input: &[f64], tangents: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = tangents.len() / self.input_dim();
        let n = self.layers.len();
        let mut h = input.to_vec();
        let mut dh = tangents.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &values[layer.w_off..layer.w_off + layer.fan_in * layer.fan_out];
            let b = &values[layer.b_off..layer.b_off + layer.fan_out];
            let mut z = b.to_vec();
            let mut dz = vec![0.0; k * layer.fan_out];
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                *zj += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                for c in 0..k {
                    dz[c * layer.fan_out + j] = row
                        .iter()
                        .zip(&dh[c * layer.fan_in..(c + 1) * layer.fan_in])
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
            if l + 1 < n {
                for c in 0..k {
                    for j in 0..layer.fan_out {
                        dz[c * layer.fan_out + j] *= self.act.derivative(z[j]);
                    }
                }
                h = z.iter().map(|&v| self.act.apply(v)).collect();
            } else {
                h = z;
            }
            dh = dz;
        }
        (h, dh)
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{finite_diff_check, DifferentiableProgram};

    /// Mean squared error of an MLP against fixed targets.
    struct MlpRegression {
        mlp: Mlp,
    }

    struct Batch {
        x: Vec<f64>,
        y: Vec<f64>,
        rows: usize,
    }

    impl DifferentiableProgram for MlpRegression {
        type Batch = Batch;

        fn forward(&self, p: &ParamVector, b: &Batch) -> Result<f64> {
            let tape = self.mlp.forward(p.values(), &b.x, b.rows)?;
            Ok(tape.output().iter().zip(&b.y).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / b.rows as f64)
        }

        fn forward_backward(&self, p: &ParamVector, b: &Batch) -> Result<(f64, ParamVector)> {
            let tape = self.mlp.forward(p.values(), &b.x, b.rows)?;
            let go: Vec<f64> = tape
                .output()
                .iter()
                .zip(&b.y)
                .map(|(o, y)| 2.0 * (o - y) / b.rows as f64)
                .collect();
            let mut g = p.zeros_like();
            self.mlp.backward(p.values(), &tape, &go, g.values_mut(), false);
            Ok((self.forward(p, b)?, g))
        }
    }

    // Plain nested-loop forward pass, written independently of the gemm path.
    fn naive_forward(p: &ParamVector, sizes: &[usize], act: Activation, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = sizes.len() - 1;
        for l in 0..n {
            let w = p.segment(&format!("net.layer{l}.weight")).unwrap();
            let b = p.segment(&format!("net.layer{l}.bias")).unwrap();
            let mut z = vec![0.0; sizes[l + 1]];
            for j in 0..sizes[l + 1] {
                let mut s = b[j];
                for i in 0..sizes[l] {
                    s += w[j * sizes[l] + i] * h[i];
                }
                z[j] = if l + 1 < n {
                    match act {
                        Activation::Tanh => s.tanh(),
                        Activation::Silu => s / (1.0 + (-s).exp()),
                    }
                } else {
                    s
                };
            }
            h = z;
        }
        h
    }

    fn setup(act: Activation, seed: u64) -> (MlpRegression, ParamVector, Batch, Vec<usize>) {
        let sizes = vec![3, 7, 5, 2];
        let mut p = ParamVector::zeros(&Mlp::segments("net", &sizes)).unwrap();
        let mlp = Mlp::resolve(&p, "net", &sizes, act).unwrap();
        let mut rng = crate::rng::child(seed, "nn-test");
        for v in p.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let rows = 6;
        let x = (0..rows * 3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y = (0..rows * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        (MlpRegression { mlp }, p, Batch { x, y, rows }, sizes)
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        for act in [Activation::Tanh, Activation::Silu] {
            let (prog, p, b, sizes) = setup(act, 3);
            let tape = prog.mlp.forward(p.values(), &b.x, b.rows).unwrap();
            for r in 0..b.rows {
                let naive = naive_forward(&p, &sizes, act, &b.x[r * 3..(r + 1) * 3]);
                for (a, e) in tape.output()[r * 2..(r + 1) * 2].iter().zip(&naive) {
                    assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0), "{a} vs {e}");
                }
            }
        }
    }

    #[test]
    fn tanh_mlp_passes_fd_check() {
        for seed in 0..5 {
            let (prog, p, b, _) = setup(Activation::Tanh, seed);
            let d = finite_diff_check(&prog, &p, &b, 1e-5).unwrap();
            assert!(d <= 1e-4, "discrepancy {d}");
        }
    }

    #[test]
    fn input_gradient_matches_fd() {
        let (prog, p, b, _) = setup(Activation::Silu, 11);
        let tape = prog.mlp.forward(p.values(), &b.x, b.rows).unwrap();
        let ones = vec![1.0; tape.output().len()];
        let mut g = p.zeros_like();
        let gin = prog.mlp.backward(p.values(), &tape, &ones, g.values_mut(), true).unwrap();
        let h = 1e-6;
        for i in 0..b.x.len() {
            let mut xp = b.x.clone();
            xp[i] += h;
            let mut xm = b.x.clone();
            xm[i] -= h;
            let fp: f64 = prog.mlp.forward(p.values(), &xp, b.rows).unwrap().output().iter().sum();
            let fm: f64 = prog.mlp.forward(p.values(), &xm, b.rows).unwrap().output().iter().sum();
            assert!(((fp - fm) / (2.0 * h) - gin[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn tangent_matches_backprop_jacobian() {
        let (prog, p, b, _) = setup(Activation::Silu, 5);
        let x = &b.x[0..3];
        let tangents = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let (out, jac_cols) = prog.mlp.forward_tangent(p.values(), x, &tangents);
        let tape = prog.mlp.forward(p.values(), x, 1).unwrap();
        assert!(out.iter().zip(tape.output()).all(|(a, b)| (a - b).abs() < 1e-14));
        for o in 0..2 {
            let mut seed = vec![0.0; 2];
            seed[o] = 1.0;
            let mut g = p.zeros_like();
            let row = prog.mlp.backward(p.values(), &tape, &seed, g.values_mut(), true).unwrap();
            for c in 0..3 {
                assert!((row[c] - jac_cols[c * 2 + o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_reports_layer() {
        let (prog, mut p, b, _) = setup(Activation::Tanh, 1);
        p.segment_mut("net.layer1.weight").unwrap()[0] = f64::INFINITY;
        p.segment_mut("net.layer1.weight").unwrap()[1] = 1e308;
        let err = prog.mlp.forward(p.values(), &b.x, b.rows).unwrap_err();
        assert!(matches!(err, Error::Numerical { ref segment } if segment.starts_with("net.layer")));
    }
}
