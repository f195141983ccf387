//! Vector fields `v(x, t)` that the samplers integrate.

/// A time-dependent velocity field on `R^dim`, `t ∈ [0, 1]`.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// Velocity and `tr ∂v/∂x`. The default uses central differences with
    /// step `1e-5`; implementors with an exact Jacobian should override it.
    fn velocity_and_divergence(&self, x: &[f64], t: f64) -> (Vec<f64>, f64) {
        let h = 1e-5;
        let mut probe = x.to_vec();
        let mut div = 0.0;
        for j in 0..x.len() {
            probe[j] = x[j] + h;
            let up = self.velocity(&probe, t)[j];
            probe[j] = x[j] - h;
            let dn = self.velocity(&probe, t)[j];
            probe[j] = x[j];
            div += (up - dn) / (2.0 * h);
        }
        (self.velocity(x, t), div)
    }

    /// Row-wise velocities for `ts.len()` states laid out row-major.
    fn velocity_batch(&self, xs: &[f64], ts: &[f64]) -> Vec<f64> {
        let d = self.dim();
        ts.iter()
            .enumerate()
            .flat_map(|(r, &t)| self.velocity(&xs[r * d..(r + 1) * d], t))
            .collect()
    }
}

/// `v ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl VelocityField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }

    fn velocity(&self, _: &[f64], _: f64) -> Vec<f64> {
        vec![0.0; self.0]
    }

    fn velocity_and_divergence(&self, _: &[f64], _: f64) -> (Vec<f64>, f64) {
        (vec![0.0; self.0], 0.0)
    }
}

/// `v ≡ c`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub Vec<f64>);

impl VelocityField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn velocity(&self, _: &[f64], _: f64) -> Vec<f64> {
        self.0.clone()
    }

    fn velocity_and_divergence(&self, _: &[f64], _: f64) -> (Vec<f64>, f64) {
        (self.0.clone(), 0.0)
    }
}

/// `v(x, t) = A x + b` with `A` row-major `dim × dim`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineField {
    /// `v(x) = -x`.
    pub fn decay(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = -1.0;
        }
        Self {
            dim,
            matrix,
            offset: vec![0.0; dim],
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).sum()
    }
}

impl VelocityField for AffineField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &[f64], _: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                self.offset[i]
                    + self.matrix[i * self.dim..(i + 1) * self.dim]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    fn velocity_and_divergence(&self, x: &[f64], t: f64) -> (Vec<f64>, f64) {
        (self.velocity(x, t), self.trace())
    }
}

/// `v(x, t) = t · e`.
#[derive(Debug, Clone)]
pub struct TimeRampField(pub Vec<f64>);

impl VelocityField for TimeRampField {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn velocity(&self, _: &[f64], t: f64) -> Vec<f64> {
        self.0.iter().map(|e| t * e).collect()
    }
}
