//! Probability-flow ODE integration, exact likelihood and trajectory probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::paths::{EndpointPair, PathKind};

/// States along one integration from `t = 0` to `t = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Velocity evaluations spent producing this trajectory.
    pub nfe: usize,
}

impl Trajectory {
    pub fn start(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn end(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Piecewise-linear interpolation of the state at `t`, clamped to the grid.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let ts = &self.times;
        if t <= ts[0] {
            return self.states[0].clone();
        }
        if t >= ts[ts.len() - 1] {
            return self.end().to_vec();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.states[k]
            .iter()
            .zip(&self.states[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rk45Options {
    pub atol: f64,
    pub rtol: f64,
    pub h0: f64,
    pub max_steps: usize,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Self {
            atol: 1e-5,
            rtol: 1e-5,
            h0: 1e-3,
            max_steps: 100_000,
        }
    }
}

impl Rk45Options {
    pub fn with_tolerances(atol: f64, rtol: f64) -> Self {
        Self { atol, rtol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0 && self.h0 > 0.0) {
            return Err(Error::Config(format!(
                "tolerances and initial step must be > 0 (atol {}, rtol {}, h0 {})",
                self.atol, self.rtol, self.h0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum Solver {
    Euler { steps: usize },
    Rk45(Rk45Options),
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Rk45(Rk45Options::default())
    }
}

fn non_finite(step: usize) -> Error {
    Error::Integration {
        step,
        reason: "non-finite state".into(),
    }
}

/// Fixed-step explicit Euler with `h = 1/steps`; `nfe = steps`.
pub fn euler_integrate<F: VelocityField + ?Sized>(field: &F, z0: &[f64], steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::Config("Euler needs at least one step".into()));
    }
    let h = 1.0 / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut z = z0.to_vec();
    times.push(0.0);
    states.push(z.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        let v = field.velocity(&z, t);
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += h * vi;
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(non_finite(k));
        }
        times.push(if k + 1 == steps { 1.0 } else { (k + 1) as f64 * h });
        states.push(z.clone());
    }
    Ok(Trajectory { times, states, nfe: steps })
}

/// Euler endpoints for many starts at once, batching the field evaluations.
///
/// Rows that turn non-finite are reported as `None`.
pub fn euler_endpoints<F: VelocityField + ?Sized>(
    field: &F,
    z0: &[Vec<f64>],
    steps: usize,
) -> Result<Vec<Option<Vec<f64>>>> {
    if steps == 0 {
        return Err(Error::Config("Euler needs at least one step".into()));
    }
    let d = field.dim();
    let n = z0.len();
    let mut z: Vec<f64> = z0.iter().flatten().copied().collect();
    if z.len() != n * d {
        return Err(Error::Config("start states do not match the field dimension".into()));
    }
    let h = 1.0 / steps as f64;
    for k in 0..steps {
        let ts = vec![k as f64 * h; n];
        let v = field.velocity_batch(&z, &ts);
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += h * vi;
        }
    }
    Ok(z.chunks(d)
        .map(|r| r.iter().all(|x| x.is_finite()).then(|| r.to_vec()))
        .collect())
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Step counts of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub nfe: usize,
}

/// Dormand–Prince 5(4) with FSAL and a PI step controller on `y' = f(t, y)`
/// from `t0` to `t1` (either direction).
///
/// One evaluation starts the run; each attempted step, accepted or not,
/// costs six more because the seventh stage is reused as the next first
/// stage. Hence `nfe = 1 + 6·(accepted + rejected)`.
pub fn dopri5<Fn>(
    mut f: Fn,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &Rk45Options,
    mut record: Option<&mut Vec<(f64, Vec<f64>)>>,
) -> Result<(Vec<f64>, StepStats)>
where
    Fn: FnMut(f64, &[f64]) -> Vec<f64>,
{
    opts.validate()?;
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    if let Some(r) = record.as_deref_mut() {
        r.push((t, y.clone()));
    }
    if span == 0.0 {
        return Ok((y, stats));
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = f(t, &y);
    stats.nfe = 1;
    let mut h = opts.h0.min(span);
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;
    let beta = 0.04;
    let alpha = 0.2 - 0.75 * beta;
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    loop {
        let remaining = (t1 - t).abs();
        if remaining <= 1e-14 * span.max(1.0) {
            break;
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < 1e-12 {
            return Err(Error::Integration {
                step: stats.accepted + stats.rejected,
                reason: format!("step size {h:e} underflow at t = {t}"),
            });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integration {
                step: stats.accepted + stats.rejected,
                reason: "step budget exhausted".into(),
            });
        }
        let hs = dir * h;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += hs * A[s][j] * kj[i];
                }
                ys[i] = acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&ys);
            }
            k[s] = f(t + C[s] * hs, &ys);
        }
        stats.nfe += 6;
        let mut err = 0.0;
        for i in 0..n {
            let e: f64 = hs * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            if y_new.iter().any(|v| !v.is_finite()) && h < 1e-10 {
                return Err(non_finite(stats.accepted + stats.rejected));
            }
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            if let Some(r) = record.as_deref_mut() {
                r.push((t, y.clone()));
            }
            let mut fac = if err == 0.0 {
                10.0
            } else {
                0.9 * err.powf(-alpha) * err_prev.powf(beta)
            };
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_prev = err.max(1e-4);
            h *= fac;
            last_rejected = false;
            if last {
                break;
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-alpha)).max(0.2);
            last_rejected = true;
        }
    }
    Ok((y, stats))
}

/// Adaptive integration of `ż = v(z, t)` over `[0, 1]`.
pub fn rk45_integrate<F: VelocityField + ?Sized>(field: &F, z0: &[f64], opts: &Rk45Options) -> Result<Trajectory> {
    let mut rec = Vec::new();
    let (_, stats) = dopri5(|t, y| field.velocity(y, t), z0, 0.0, 1.0, opts, Some(&mut rec))?;
    let (times, states) = rec.into_iter().unzip();
    Ok(Trajectory { times, states, nfe: stats.nfe })
}

pub fn integrate<F: VelocityField + ?Sized>(field: &F, z0: &[f64], solver: &Solver) -> Result<Trajectory> {
    match solver {
        Solver::Euler { steps } => euler_integrate(field, z0, *steps),
        Solver::Rk45(o) => rk45_integrate(field, z0, o),
    }
}

/// Endpoint and cost of one integration, or the reason it failed.
pub type Outcome = Result<(Vec<f64>, usize)>;

/// Integrates every start independently; results keep input order.
pub fn integrate_many<F: VelocityField + ?Sized>(field: &F, z0: &[Vec<f64>], solver: &Solver) -> Vec<Outcome> {
    if let Solver::Euler { steps } = solver {
        return match euler_endpoints(field, z0, *steps) {
            Ok(ends) => ends
                .into_iter()
                .map(|e| e.map(|z| (z, *steps)).ok_or_else(|| non_finite(*steps)))
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                z0.iter().map(|_| Err(Error::Config(msg.clone()))).collect()
            }
        };
    }
    z0.par_iter()
        .map(|z| integrate(field, z, solver).map(|tr| (tr.end().to_vec(), tr.nfe)))
        .collect()
}

/// Per-sample negative log-likelihoods in nats per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub nfe_total: usize,
}

/// `-log p(x)/d` by integrating `(z, ℓ)` with `ż = v`, `ℓ̇ = div v` from
/// `t = 1` down to `t = 0`; `log p(x) = log N(z_0) + ℓ(0)`.
pub fn exact_nll<F: VelocityField + ?Sized>(field: &F, data: &[Vec<f64>], opts: &Rk45Options) -> Result<NllReport> {
    let d = field.dim();
    if data.is_empty() {
        return Err(Error::Config("no samples for likelihood".into()));
    }
    if data.iter().any(|x| x.len() != d) {
        return Err(Error::Config(format!("samples must have dimension {d}")));
    }
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let rows: Vec<Result<(f64, usize)>> = data
        .par_iter()
        .map(|x| {
            let mut y0 = x.clone();
            y0.push(0.0);
            let aug = |t: f64, y: &[f64]| {
                let (mut v, div) = field.velocity_and_divergence(&y[..d], t);
                v.push(div);
                v
            };
            let (y, st) = dopri5(aug, &y0, 1.0, 0.0, opts, None)?;
            let log_p0: f64 = y[..d].iter().map(|z| -0.5 * z * z - half_log_2pi).sum();
            Ok((-(log_p0 + y[d]) / d as f64, st.nfe))
        })
        .collect();
    let mut per_sample = Vec::with_capacity(rows.len());
    let mut nfe_total = 0;
    for r in rows {
        let (v, n) = r?;
        per_sample.push(v);
        nfe_total += n;
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(NllReport { per_sample, mean, nfe_total })
}

/// Straight-line path states `x_t` on an even grid, one trajectory per
/// endpoint pair; `nfe` is zero because nothing is integrated.
pub fn path_bank(kind: &PathKind, endpoints: &[EndpointPair], grid: usize) -> Vec<Trajectory> {
    let grid = grid.max(2);
    let times: Vec<f64> = (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect();
    endpoints
        .iter()
        .map(|ep| {
            let states = times
                .iter()
                .map(|&t| {
                    let c = kind.coeffs(t);
                    ep.x0.iter().zip(&ep.x1).map(|(a, b)| c.a * a + c.b * b).collect()
                })
                .collect();
            Trajectory { times: times.clone(), states, nfe: 0 }
        })
        .collect()
}

/// Mean of `‖v(x_{t+Δ}, t+Δ) - v(x_t, t)‖² / Δ²` over `probes` evenly spaced
/// times in `[0, 1-Δ]` on every trajectory of the bank.
pub fn time_variation_probe<F: VelocityField + ?Sized>(
    field: &F,
    bank: &[Trajectory],
    delta: f64,
    probes: usize,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 0.1) {
        return Err(Error::Config(format!("probe offset Δ = {delta} must lie in (0, 0.1]")));
    }
    if bank.is_empty() || probes == 0 {
        return Err(Error::Config("empty trajectory bank or probe grid".into()));
    }
    let span = 1.0 - delta;
    let sums: Vec<f64> = bank
        .par_iter()
        .map(|tr| {
            (0..probes)
                .map(|k| {
                    let t = if probes == 1 { 0.0 } else { span * k as f64 / (probes - 1) as f64 };
                    let a = field.velocity(&tr.state_at(t), t);
                    let b = field.velocity(&tr.state_at(t + delta), t + delta);
                    a.iter().zip(&b).map(|(x, y)| (y - x).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / (bank.len() * probes) as f64 / (delta * delta))
}

/// Mean over starts of `∫ ‖v(z_t, t) - (z_1 - z_0)‖² dt` along Euler
/// trajectories with `steps` steps; zero for perfectly straight flows.
pub fn straightness<F: VelocityField + ?Sized>(field: &F, z0: &[Vec<f64>], steps: usize) -> Result<f64> {
    if z0.is_empty() {
        return Err(Error::Config("no start states".into()));
    }
    let vals: Vec<Result<f64>> = z0
        .par_iter()
        .map(|z| {
            let tr = euler_integrate(field, z, steps)?;
            let chord: Vec<f64> = tr.end().iter().zip(tr.start()).map(|(a, b)| a - b).collect();
            let h = 1.0 / steps as f64;
            Ok(tr.states[..steps]
                .iter()
                .zip(&tr.states[1..])
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .zip(&chord)
                        .map(|((x, y), c)| ((y - x) / h - c).powi(2))
                        .sum::<f64>()
                        * h
                })
                .sum())
        })
        .collect();
    let mut acc = 0.0;
    for v in vals {
        acc += v?;
    }
    Ok(acc / z0.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AffineField, ConstantField, TimeRampField, ZeroField};

    #[test]
    fn euler_zero_and_constant_fields() {
        let z0 = [0.3, -1.2];
        for n in [1, 3, 16] {
            let tr = euler_integrate(&ZeroField(2), &z0, n).unwrap();
            assert_eq!(tr.end(), &z0);
            assert_eq!(tr.nfe, n);
            let tr = euler_integrate(&ConstantField(vec![1.0, -2.0]), &z0, n).unwrap();
            assert!((tr.end()[0] - 1.3).abs() < 1e-14 && (tr.end()[1] + 3.2).abs() < 1e-14);
        }
        assert!(euler_integrate(&ZeroField(2), &z0, 0).is_err());
    }

    #[test]
    fn euler_first_order() {
        let f = AffineField::decay(1);
        let exact = (-1.0f64).exp();
        let ns: Vec<usize> = (0..8).map(|k| 10 << k).collect();
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let e = (euler_integrate(&f, &[1.0], n).unwrap().end()[0] - exact).abs();
                ((n as f64).ln(), e.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn rk45_decay_and_accounting() {
        let f = AffineField::decay(2);
        let z0 = [1.0, -0.5];
        let mut rec = Vec::new();
        let (y, st) = dopri5(|t, y| f.velocity(y, t), &z0, 0.0, 1.0, &Rk45Options::default(), Some(&mut rec)).unwrap();
        let e = (-1.0f64).exp();
        assert!((y[0] - e).abs() < 1e-6 && (y[1] + 0.5 * e).abs() < 1e-6);
        assert_eq!(st.nfe, 1 + 6 * (st.accepted + st.rejected));
        assert_eq!(rec.len(), st.accepted + 1);
        assert_eq!(rec.last().unwrap().0, 1.0);
    }

    #[test]
    fn rk45_zero_field_never_rejects() {
        let tr = rk45_integrate(&ZeroField(3), &[1.0, 2.0, 3.0], &Rk45Options::default()).unwrap();
        assert_eq!(tr.end(), &[1.0, 2.0, 3.0]);
        assert_eq!(tr.nfe, 1 + 6 * (tr.states.len() - 1));
    }

    #[test]
    fn rk45_counts_evaluations() {
        use std::cell::Cell;
        let calls = Cell::new(0usize);
        let (_, st) = dopri5(
            |t, y: &[f64]| {
                calls.set(calls.get() + 1);
                vec![(10.0 * t).cos() * y[0]]
            },
            &[1.0],
            0.0,
            1.0,
            &Rk45Options::default(),
            None,
        )
        .unwrap();
        assert_eq!(calls.get(), st.nfe);
        assert!(st.rejected + st.accepted > 0);
    }

    #[test]
    fn rk45_backward_direction() {
        let f = AffineField::decay(1);
        let (y, _) = dopri5(|t, y| f.velocity(y, t), &[1.0], 1.0, 0.0, &Rk45Options::default(), None).unwrap();
        assert!((y[0] - 1.0f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn rk45_rejects_bad_tolerances() {
        assert!(rk45_integrate(&ZeroField(1), &[0.0], &Rk45Options::with_tolerances(0.0, 1e-5)).is_err());
    }

    #[test]
    fn rk45_blowup_is_an_integration_error() {
        struct Blow;
        impl VelocityField for Blow {
            fn dim(&self) -> usize {
                1
            }
            fn velocity(&self, x: &[f64], _t: f64) -> Vec<f64> {
                vec![x[0] * x[0] * 1e3]
            }
        }
        assert!(matches!(
            rk45_integrate(&Blow, &[1.0], &Rk45Options::default()),
            Err(Error::Integration { .. })
        ));
    }

    #[test]
    fn nll_affine_closed_form() {
        let f = AffineField {
            dim: 2,
            matrix: vec![-0.5, 0.2, 0.1, 0.3],
            offset: vec![0.1, -0.2],
        };
        // Exact: z0 = Φ⁻¹(x); log p1(x) = log N(z0) - tr A.
        let x = vec![0.4, -0.7];
        let mut rec = Vec::new();
        let (z0, _) = dopri5(|t, y| f.velocity(y, t), &x, 1.0, 0.0, &Rk45Options::with_tolerances(1e-10, 1e-10), Some(&mut rec)).unwrap();
        let lp0: f64 = z0.iter().map(|z| -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()).sum();
        let expect = -(lp0 - f.trace()) / 2.0;
        let r = exact_nll(&f, &[x], &Rk45Options::default()).unwrap();
        assert!((r.mean - expect).abs() < 1e-4, "{} vs {}", r.mean, expect);
    }

    #[test]
    fn nll_is_order_invariant() {
        let f = AffineField::decay(2);
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3 - 1.0, 0.5 - 0.1 * i as f64]).collect();
        let mut rev = data.clone();
        rev.reverse();
        let a = exact_nll(&f, &data, &Rk45Options::default()).unwrap();
        let b = exact_nll(&f, &rev, &Rk45Options::default()).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-14);
    }

    #[test]
    fn probe_on_known_fields() {
        let frozen: Vec<Trajectory> = (0..4)
            .map(|i| Trajectory {
                times: vec![0.0, 1.0],
                states: vec![vec![i as f64, 1.0]; 2],
                nfe: 0,
            })
            .collect();
        for delta in [0.01, 0.05, 0.1] {
            let est = time_variation_probe(&TimeRampField(vec![0.6, 0.8]), &frozen, delta, 16).unwrap();
            assert!((est - 1.0).abs() < 1e-9);
            assert_eq!(time_variation_probe(&ConstantField(vec![1.0, 2.0]), &frozen, delta, 16).unwrap(), 0.0);
        }
        assert!(time_variation_probe(&ZeroField(2), &frozen, 0.2, 4).is_err());
    }

    #[test]
    fn interpolation_hits_grid_points() {
        let tr = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![vec![0.0], vec![1.0], vec![3.0]],
            nfe: 0,
        };
        assert_eq!(tr.state_at(0.5), vec![1.0]);
        assert_eq!(tr.state_at(0.75), vec![2.0]);
        assert_eq!(tr.state_at(2.0), vec![3.0]);
    }

    #[test]
    fn batched_euler_matches_single() {
        let f = AffineField::decay(2);
        let starts = vec![vec![1.0, 2.0], vec![-0.5, 0.25]];
        let ends = euler_endpoints(&f, &starts, 7).unwrap();
        for (s, e) in starts.iter().zip(ends) {
            assert_eq!(euler_integrate(&f, s, 7).unwrap().end(), e.unwrap().as_slice());
        }
    }

    #[test]
    fn straight_flow_has_zero_straightness() {
        let s = straightness(&ConstantField(vec![1.0, -1.0]), &[vec![0.0, 0.0], vec![2.0, 1.0]], 8).unwrap();
        assert!(s.abs() < 1e-20);
        assert!(straightness(&TimeRampField(vec![1.0]), &[vec![0.0]], 8).unwrap() > 0.0);
    }
}
