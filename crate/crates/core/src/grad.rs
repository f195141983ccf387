//! Scalar programs with exact gradients, checked against finite differences.
//!
//! Gradients are hand-derived per layer rather than taped. The contract is
//! the finite-difference check, not the mechanism.

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// A deterministic scalar loss over a parameter vector and a batch.
pub trait DifferentiableProgram {
    type Batch: ?Sized;

    fn forward(&self, params: &ParamVector, batch: &Self::Batch) -> Result<f64>;

    /// Loss together with its gradient, laid out like `params`.
    fn forward_backward(
        &self,
        params: &ParamVector,
        batch: &Self::Batch,
    ) -> Result<(f64, ParamVector)>;
}

pub fn eval_loss<P: DifferentiableProgram>(
    prog: &P,
    params: &ParamVector,
    batch: &P::Batch,
) -> Result<f64> {
    params.check_finite()?;
    let loss = prog.forward(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::numerical("loss"));
    }
    Ok(loss)
}

pub fn eval_grad<P: DifferentiableProgram>(
    prog: &P,
    params: &ParamVector,
    batch: &P::Batch,
) -> Result<ParamVector> {
    eval_loss_and_grad(prog, params, batch).map(|(_, g)| g)
}

pub fn eval_loss_and_grad<P: DifferentiableProgram>(
    prog: &P,
    params: &ParamVector,
    batch: &P::Batch,
) -> Result<(f64, ParamVector)> {
    params.check_finite()?;
    let (loss, grad) = prog.forward_backward(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::numerical("loss"));
    }
    debug_assert!(grad.same_layout(params));
    grad.check_finite()?;
    Ok((loss, grad))
}

/// Max over coordinates of the gap between the analytic gradient and a
/// central difference: relative where `|analytic| > 1e-6`, absolute below.
pub fn finite_diff_check<P: DifferentiableProgram>(
    prog: &P,
    params: &ParamVector,
    batch: &P::Batch,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step {step} must be > 0")));
    }
    let analytic = eval_grad(prog, params, batch)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + step;
        let up = eval_loss(prog, &probe, batch)?;
        probe.values_mut()[i] = orig - step;
        let down = eval_loss(prog, &probe, batch)?;
        probe.values_mut()[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let a = analytic.values()[i];
        let gap = (a - fd).abs();
        worst = worst.max(if a.abs() > 1e-6 { gap / a.abs() } else { gap });
    }
    Ok(worst)
}

/// Sum of two programs evaluated on a pair of batches.
pub struct Sum<A, B>(pub A, pub B);

impl<A, B> DifferentiableProgram for Sum<A, B>
where
    A: DifferentiableProgram,
    B: DifferentiableProgram,
    A::Batch: Sized,
    B::Batch: Sized,
{
    type Batch = (A::Batch, B::Batch);

    fn forward(&self, params: &ParamVector, batch: &Self::Batch) -> Result<f64> {
        Ok(self.0.forward(params, &batch.0)? + self.1.forward(params, &batch.1)?)
    }

    fn forward_backward(
        &self,
        params: &ParamVector,
        batch: &Self::Batch,
    ) -> Result<(f64, ParamVector)> {
        let (la, mut ga) = self.0.forward_backward(params, &batch.0)?;
        let (lb, gb) = self.1.forward_backward(params, &batch.1)?;
        ga.add_assign(&gb);
        Ok((la + lb, ga))
    }
}

/// `‖θ - c‖²`.
pub struct SquaredDistance {
    pub center: Vec<f64>,
}

impl DifferentiableProgram for SquaredDistance {
    type Batch = ();

    fn forward(&self, params: &ParamVector, _: &()) -> Result<f64> {
        Ok(params
            .values()
            .iter()
            .zip(&self.center)
            .map(|(p, c)| (p - c) * (p - c))
            .sum())
    }

    fn forward_backward(&self, params: &ParamVector, _: &()) -> Result<(f64, ParamVector)> {
        let mut g = params.zeros_like();
        for ((gi, p), c) in g.values_mut().iter_mut().zip(params.values()).zip(&self.center) {
            *gi = 2.0 * (p - c);
        }
        Ok((self.forward(params, &())?, g))
    }
}

/// `⟨a, θ⟩ + b`.
pub struct Linear {
    pub coef: Vec<f64>,
    pub offset: f64,
}

impl DifferentiableProgram for Linear {
    type Batch = ();

    fn forward(&self, params: &ParamVector, _: &()) -> Result<f64> {
        Ok(self
            .coef
            .iter()
            .zip(params.values())
            .map(|(a, p)| a * p)
            .sum::<f64>()
            + self.offset)
    }

    fn forward_backward(&self, params: &ParamVector, _: &()) -> Result<(f64, ParamVector)> {
        let mut g = params.zeros_like();
        g.values_mut().copy_from_slice(&self.coef);
        Ok((self.forward(params, &())?, g))
    }
}
