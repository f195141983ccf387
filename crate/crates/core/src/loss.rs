use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::grad::DifferentiableProgram;
use crate::pairing::{mono_penalty_backward, psi_fixed, PairingMode, Phi};
use crate::params::ParamVector;
use crate::paths::{sample_endpoints, DataSource, EndpointPair, NoiseSharing, PathSample};
use crate::rng::{self, Rng};
use crate::velocity::VelocityNet;

/// Independent random streams consumed by batch drawing.
#[derive(Debug, Clone)]
pub struct Streams {
    pub data: Rng,
    pub time: Rng,
    pub noise: Rng,
    pub gate: Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            data: rng::child(seed, rng::DATA),
            time: rng::child(seed, rng::TIME),
            noise: rng::child(seed, rng::NOISE),
            gate: rng::child(seed, rng::GATE),
        }
    }
}

/// One Bernoulli(`p`) draw for the pair-term gate.
pub fn draw_gate<R: rand::Rng>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// Everything random about one optimizer step, frozen so the loss is a
/// deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TpcBatch {
    pub endpoints: Vec<EndpointPair>,
    pub t: Vec<f64>,
    /// Unit-variance noise for the primary states, `B × dim`; empty when unused.
    pub noise: Vec<f64>,
    /// Same for the paired states.
    pub noise_paired: Vec<f64>,
    pub gate: bool,
}

impl TpcBatch {
    pub fn draw(config: &TrainConfig, source: &DataSource, first_id: u64, streams: &mut Streams) -> Result<Self> {
        let endpoints = sample_endpoints(source, config.batch_size, first_id, &mut streams.data)?;
        let t: Vec<f64> = (0..config.batch_size).map(|_| streams.time.random::<f64>()).collect();
        let (mut noise, mut noise_paired) = (Vec::new(), Vec::new());
        if config.noise_sigma > 0.0 {
            let n = config.batch_size * source.dim();
            noise = crate::paths::standard_normal(n, &mut streams.noise);
            if config.uses_pairs() {
                noise_paired = match config.noise_sharing {
                    NoiseSharing::Independent => crate::paths::standard_normal(n, &mut streams.noise),
                    NoiseSharing::Shared => noise.clone(),
                };
            }
        }
        let gate = config.lambda_tpc > 0.0 && draw_gate(config.p_tpc, &mut streams.gate);
        Ok(Self {
            endpoints,
            t,
            noise,
            noise_paired,
            gate,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Per-step loss breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub total: f64,
    pub gate: bool,
    pub fm: f64,
    /// FM residual at the paired times, when they were evaluated.
    pub fm_paired: Option<f64>,
    pub tpc: Option<f64>,
    pub mono_count: usize,
    pub mono_surrogate: f64,
    pub nfe: usize,
}

/// The full training objective
/// `L_FM + b·λ_tpc·L_pair + λ_mono·surrogate (+ paired residual)`.
pub struct Objective<'c> {
    config: &'c TrainConfig,
    net: VelocityNet,
}

struct Stacked {
    x: Vec<f64>,
    u: Vec<f64>,
}

fn stack(config: &TrainConfig, eps: &[EndpointPair], ts: &[f64], noise: &[f64]) -> Stacked {
    let d = config.arch.dim;
    let mut x = Vec::with_capacity(ts.len() * d);
    let mut u = Vec::with_capacity(ts.len() * d);
    for (ep, &t) in eps.iter().zip(ts) {
        let c = config.path.coeffs(t);
        for (a, b) in ep.x0.iter().zip(&ep.x1) {
            x.push(c.a * a + c.b * b);
            u.push(c.da * a + c.db * b);
        }
    }
    if !noise.is_empty() {
        for (v, e) in x.iter_mut().zip(noise) {
            *v += config.noise_sigma * e;
        }
    }
    Stacked { x, u }
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

impl<'c> Objective<'c> {
    pub fn new(config: &'c TrainConfig, params: &ParamVector) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            net: VelocityNet::new(config.arch, params)?,
        })
    }

    fn check_batch(&self, batch: &TpcBatch) -> Result<()> {
        let d = self.config.arch.dim;
        let n = batch.len();
        if n == 0 || batch.endpoints.len() != n {
            return Err(Error::Config("batch is empty or has mismatched lengths".into()));
        }
        if batch.endpoints.iter().any(|e| e.x0.len() != d || e.x1.len() != d) {
            return Err(Error::Config(format!("endpoint dimension differs from model dimension {d}")));
        }
        if self.config.noise_sigma > 0.0 {
            let paired = if self.config.uses_pairs() { n * d } else { 0 };
            if batch.noise.len() != n * d || batch.noise_paired.len() != paired {
                return Err(Error::Config("noise buffers do not match the batch".into()));
            }
        }
        Ok(())
    }

    /// Loss, telemetry, and optionally the gradient accumulated into `grad`.
    pub fn evaluate(
        &self,
        params: &ParamVector,
        batch: &TpcBatch,
        mut grad: Option<&mut [f64]>,
    ) -> Result<(f64, Telemetry)> {
        self.check_batch(batch)?;
        let cfg = self.config;
        let vals = params.values();
        let n = batch.len();
        let d = cfg.arch.dim;
        let inv = 1.0 / n as f64;

        let prim = stack(cfg, &batch.endpoints, &batch.t, &batch.noise);
        let tape = self.net.forward_batch(vals, &prim.x, &batch.t)?;
        let v = tape.output();
        let r: Vec<f64> = v.iter().zip(&prim.u).map(|(a, b)| a - b).collect();
        let fm = sq(&r) * inv;

        let learned = cfg.pairing.mode == PairingMode::Learned;
        let phi = if learned { Some(Phi::new(&cfg.pairing, params)?) } else { None };

        let mut tel = Telemetry {
            gate: batch.gate,
            fm,
            nfe: n,
            ..Telemetry::default()
        };
        let mut total = fm;
        let w_pair = if batch.gate { cfg.lambda_tpc } else { 0.0 };
        let two = if cfg.two_residual { 1.0 } else { 0.0 };

        let mut g_v: Vec<f64> = r.iter().map(|x| 2.0 * inv * x).collect();
        let mut paired_grad = None;

        if cfg.uses_pairs() {
            let tp: Vec<f64> = match &phi {
                Some(p) => batch.t.iter().map(|&t| p.eval(t)).collect(),
                None => batch.t.iter().map(|&t| psi_fixed(t)).collect::<Result<_>>()?,
            };
            let pair = stack(cfg, &batch.endpoints, &tp, &batch.noise_paired);
            let tape_p = self.net.forward_batch(vals, &pair.x, &tp)?;
            let vp = tape_p.output();
            let rp: Vec<f64> = vp.iter().zip(&pair.u).map(|(a, b)| a - b).collect();
            let q: Vec<f64> = v.iter().zip(vp).map(|(a, b)| a - b).collect();
            let fm_p = sq(&rp) * inv;
            let tpc = sq(&q) * inv;
            tel.fm_paired = Some(fm_p);
            tel.tpc = Some(tpc);
            tel.nfe += n;
            total += two * fm_p + w_pair * tpc;

            for (g, qi) in g_v.iter_mut().zip(&q) {
                *g += 2.0 * inv * w_pair * qi;
            }
            let g_vp: Vec<f64> = rp
                .iter()
                .zip(&q)
                .map(|(ri, qi)| 2.0 * inv * (two * ri - w_pair * qi))
                .collect();
            paired_grad = Some((tape_p, g_vp, tp, rp));
        }

        let pairing_mass = learned && (w_pair > 0.0 || two > 0.0);
        if let Some(g) = grad.as_deref_mut() {
            self.net.backward_batch(vals, &tape, &g_v, g, false);
            if let Some((tape_p, g_vp, tp, rp)) = &paired_grad {
                let ig = self.net.backward_batch(vals, tape_p, g_vp, g, pairing_mass);
                if let (Some(ig), Some(phi)) = (ig, &phi) {
                    for i in 0..n {
                        let c = cfg.path.coeffs(tp[i]);
                        let ep = &batch.endpoints[i];
                        let mut dl_dtp = ig.t[i];
                        for j in 0..d {
                            let (a, b) = (ep.x0[j], ep.x1[j]);
                            dl_dtp += ig.x[i * d + j] * (c.da * a + c.db * b);
                            dl_dtp -= two * 2.0 * inv * rp[i * d + j] * (c.dda * a + c.ddb * b);
                        }
                        phi.eval_backward(batch.t[i], dl_dtp, g);
                    }
                }
            }
        }

        if learned {
            let mut scratch;
            let g: &mut [f64] = match grad {
                Some(g) => g,
                None => {
                    scratch = vec![0.0; params.len()];
                    &mut scratch
                }
            };
            let (count, surrogate) =
                mono_penalty_backward(&cfg.pairing, params, cfg.pairing.grid, cfg.lambda_mono, g)?;
            tel.mono_count = count;
            tel.mono_surrogate = surrogate;
            total += cfg.lambda_mono * surrogate;
        }

        tel.total = total;
        if !total.is_finite() {
            return Err(Error::numerical("loss"));
        }
        Ok((total, tel))
    }
}

impl DifferentiableProgram for Objective<'_> {
    type Batch = TpcBatch;

    fn forward(&self, params: &ParamVector, batch: &TpcBatch) -> Result<f64> {
        Ok(self.evaluate(params, batch, None)?.0)
    }

    fn forward_backward(&self, params: &ParamVector, batch: &TpcBatch) -> Result<(f64, ParamVector)> {
        let mut g = params.zeros_like();
        let (l, _) = self.evaluate(params, batch, Some(g.values_mut()))?;
        Ok((l, g))
    }
}

/// Mean squared regression residual `‖v(x_t, t) - u_t‖²` over fixed samples.
pub struct FmLoss {
    net: VelocityNet,
}

/// Mean squared velocity gap `‖v(x_t, t) - v(x_t', t')‖²` over fixed pairs.
pub struct PairLoss {
    net: VelocityNet,
}

fn flatten(samples: &[&PathSample], d: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Config("no samples".into()));
    }
    let mut x = Vec::with_capacity(samples.len() * d);
    let mut u = Vec::with_capacity(samples.len() * d);
    let mut t = Vec::with_capacity(samples.len());
    for s in samples {
        if s.x_t.len() != d || s.u_t.len() != d {
            return Err(Error::Config(format!("sample dimension differs from model dimension {d}")));
        }
        x.extend_from_slice(&s.x_t);
        u.extend_from_slice(&s.u_t);
        t.push(s.t);
    }
    Ok((x, u, t))
}

impl FmLoss {
    pub fn new(net: VelocityNet) -> Self {
        Self { net }
    }

    fn run(&self, params: &ParamVector, batch: &[PathSample], grad: Option<&mut [f64]>) -> Result<f64> {
        let d = self.net.arch().dim;
        let refs: Vec<&PathSample> = batch.iter().collect();
        let (x, u, t) = flatten(&refs, d)?;
        let tape = self.net.forward_batch(params.values(), &x, &t)?;
        let r: Vec<f64> = tape.output().iter().zip(&u).map(|(a, b)| a - b).collect();
        let inv = 1.0 / batch.len() as f64;
        if let Some(g) = grad {
            let go: Vec<f64> = r.iter().map(|v| 2.0 * inv * v).collect();
            self.net.backward_batch(params.values(), &tape, &go, g, false);
        }
        Ok(sq(&r) * inv)
    }
}

impl DifferentiableProgram for FmLoss {
    type Batch = [PathSample];

    fn forward(&self, params: &ParamVector, batch: &[PathSample]) -> Result<f64> {
        self.run(params, batch, None)
    }

    fn forward_backward(&self, params: &ParamVector, batch: &[PathSample]) -> Result<(f64, ParamVector)> {
        let mut g = params.zeros_like();
        let l = self.run(params, batch, Some(g.values_mut()))?;
        Ok((l, g))
    }
}

impl PairLoss {
    pub fn new(net: VelocityNet) -> Self {
        Self { net }
    }

    fn run(
        &self,
        params: &ParamVector,
        batch: &[(PathSample, PathSample)],
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let d = self.net.arch().dim;
        let first: Vec<&PathSample> = batch.iter().map(|p| &p.0).collect();
        let second: Vec<&PathSample> = batch.iter().map(|p| &p.1).collect();
        let (x, _, t) = flatten(&first, d)?;
        let (xp, _, tp) = flatten(&second, d)?;
        let vals = params.values();
        let tape = self.net.forward_batch(vals, &x, &t)?;
        let tape_p = self.net.forward_batch(vals, &xp, &tp)?;
        let q: Vec<f64> = tape.output().iter().zip(tape_p.output()).map(|(a, b)| a - b).collect();
        let inv = 1.0 / batch.len() as f64;
        if let Some(g) = grad {
            let go: Vec<f64> = q.iter().map(|v| 2.0 * inv * v).collect();
            let neg: Vec<f64> = go.iter().map(|v| -v).collect();
            self.net.backward_batch(vals, &tape, &go, g, false);
            self.net.backward_batch(vals, &tape_p, &neg, g, false);
        }
        Ok(sq(&q) * inv)
    }
}

impl DifferentiableProgram for PairLoss {
    type Batch = [(PathSample, PathSample)];

    fn forward(&self, params: &ParamVector, batch: &[(PathSample, PathSample)]) -> Result<f64> {
        self.run(params, batch, None)
    }

    fn forward_backward(
        &self,
        params: &ParamVector,
        batch: &[(PathSample, PathSample)],
    ) -> Result<(f64, ParamVector)> {
        let mut g = params.zeros_like();
        let l = self.run(params, batch, Some(g.values_mut()))?;
        Ok((l, g))
    }
}
