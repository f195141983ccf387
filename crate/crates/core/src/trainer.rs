//! The optimization loop, its telemetry, and reflow.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grad::DifferentiableProgram;
use crate::loss::{Objective, Streams, TpcBatch};
use crate::model::{Checkpoint, FlowModel};
use crate::optim::Adam;
use crate::paths::{standard_normal, DataSource};
use crate::rng;
use crate::sampler::{integrate_many, Solver};

/// One row of the per-step metric log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub gate: bool,
    pub fm: f64,
    pub fm_paired: Option<f64>,
    pub tpc: Option<f64>,
    pub mono_count: usize,
    pub mono_surrogate: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub nfe: usize,
    pub wall_time: f64,
}

/// Trailing-window statistics of per-step gradient norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub step: u64,
    pub window: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Unbiased variance of the last `window` values, or `None` if fewer exist.
pub fn grad_variance_window(norms: &[f64], window: usize) -> Option<(f64, f64)> {
    if window < 2 || norms.len() < window {
        return None;
    }
    let tail = &norms[norms.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (window - 1) as f64;
    Some((mean, var))
}

/// Live optimizer state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: u64,
    pub model: FlowModel,
    pub optimizer: Adam,
    pub streams: Streams,
    pub grad_norms: Vec<f64>,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Self::from_model(config, FlowModel::init(config.arch, config.pairing, config.seed)?)
    }

    /// Starts from existing parameters with fresh optimizer moments.
    pub fn from_model(config: &TrainConfig, model: FlowModel) -> Result<Self> {
        config.validate()?;
        if *model.arch() != config.arch || *model.pairing() != config.pairing {
            return Err(Error::Config("initial model does not match the configured arch and pairing".into()));
        }
        let optimizer = Adam::new(config.optimizer, model.params());
        Ok(Self {
            step: 0,
            model,
            optimizer,
            streams: Streams::new(config.seed),
            grad_norms: Vec::new(),
        })
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            seed,
            step: self.step,
        }
    }
}

/// Progress notifications; returning an error stops training.
pub enum Event<'a> {
    Step(&'a StepRecord),
    Variance(&'a VarianceEntry),
    Checkpoint(&'a Checkpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub step: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last successful step.
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
    pub variance_log: Vec<VarianceEntry>,
    /// Set when a non-finite loss or gradient ended the run early.
    pub aborted: Option<Abort>,
}

pub fn train(config: &TrainConfig, source: &DataSource) -> Result<TrainOutcome> {
    train_with(config, source, |_| Ok(()))
}

/// Runs `config.steps` Adam steps on the objective. Deterministic in
/// `config.seed`.
pub fn train_with<F>(config: &TrainConfig, source: &DataSource, observe: F) -> Result<TrainOutcome>
where
    F: FnMut(Event<'_>) -> Result<()>,
{
    train_from(config, source, None, observe)
}

/// Like [`train_with`], optionally continuing from `init` instead of a fresh
/// initialization.
pub fn train_from<F>(
    config: &TrainConfig,
    source: &DataSource,
    init: Option<FlowModel>,
    mut observe: F,
) -> Result<TrainOutcome>
where
    F: FnMut(Event<'_>) -> Result<()>,
{
    config.validate()?;
    if source.dim() != config.arch.dim {
        return Err(Error::Config(format!(
            "data dimension {} does not match arch.dim {}",
            source.dim(),
            config.arch.dim
        )));
    }
    let mut state = match init {
        Some(m) => TrainState::from_model(config, m)?,
        None => TrainState::new(config)?,
    };
    let mut log = Vec::with_capacity(config.steps as usize);
    let mut variance_log = Vec::new();
    let start = Instant::now();
    let mut aborted = None;

    while state.step < config.steps {
        let batch = TpcBatch::draw(config, source, state.step * config.batch_size as u64, &mut state.streams)?;
        let objective = Objective::new(config, state.model.params())?;
        let mut grad = state.model.params().zeros_like();
        let evaluated = objective
            .evaluate(state.model.params(), &batch, Some(grad.values_mut()))
            .and_then(|(l, tel)| grad.check_finite().map(|_| (l, tel)));
        let (_, tel) = match evaluated {
            Ok(v) => v,
            Err(e @ Error::Numerical { .. }) => {
                aborted = Some(Abort { step: state.step + 1, reason: e.to_string() });
                break;
            }
            Err(e) => return Err(e),
        };
        let mut next = state.model.params().clone();
        let grad_norm = state.optimizer.step(&mut next, &grad)?;
        if let Err(e) = next.check_finite() {
            aborted = Some(Abort { step: state.step + 1, reason: e.to_string() });
            break;
        }
        *state.model.params_mut() = next;
        state.step += 1;
        state.grad_norms.push(grad_norm);

        let rec = StepRecord {
            step: state.step,
            gate: tel.gate,
            fm: tel.fm,
            fm_paired: tel.fm_paired,
            tpc: tel.tpc,
            mono_count: tel.mono_count,
            mono_surrogate: tel.mono_surrogate,
            total: tel.total,
            grad_norm,
            nfe: tel.nfe,
            wall_time: start.elapsed().as_secs_f64(),
        };
        observe(Event::Step(&rec))?;
        log.push(rec);
        if let Some((mean, variance)) = grad_variance_window(&state.grad_norms, config.variance_window) {
            let entry = VarianceEntry {
                step: state.step,
                window: config.variance_window,
                mean,
                variance,
            };
            observe(Event::Variance(&entry))?;
            variance_log.push(entry);
        }
        if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
            observe(Event::Checkpoint(&state.checkpoint(config.seed)))?;
        }
    }

    Ok(TrainOutcome {
        checkpoint: state.checkpoint(config.seed),
        log,
        variance_log,
        aborted,
    })
}

/// Loss at fixed parameters on a freshly drawn batch, for diagnostics.
pub fn probe_loss(config: &TrainConfig, model: &FlowModel, source: &DataSource, seed: u64) -> Result<f64> {
    let mut streams = Streams::new(seed);
    let batch = TpcBatch::draw(config, source, 0, &mut streams)?;
    Objective::new(config, model.params())?.forward(model.params(), &batch)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of `values` over the final `fraction` of entries.
pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    let k = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len().max(1));
    let tail = &values[values.len().saturating_sub(k)..];
    tail.iter().sum::<f64>() / tail.len().max(1) as f64
}

/// A coupling table produced by integrating a trained flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflow {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub skipped: usize,
    pub nfe_total: usize,
}

/// Draws `n_pairs` base points (stream `reflow` of `seed`), pushes each
/// through the flow and keeps `(z0, z1)`. Failed integrations are skipped
/// and counted.
pub fn reflow<F: VelocityField + ?Sized>(field: &F, n_pairs: usize, solver: &Solver, seed: u64) -> Reflow {
    let mut r = rng::child(seed, "reflow");
    let d = field.dim();
    let starts: Vec<Vec<f64>> = (0..n_pairs).map(|_| standard_normal(d, &mut r)).collect();
    let results = integrate_many(field, &starts, solver);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut skipped = 0;
    let mut nfe_total = 0;
    for (z0, res) in starts.into_iter().zip(results) {
        match res {
            Ok((z1, nfe)) => {
                nfe_total += nfe;
                pairs.push((z0, z1));
            }
            Err(_) => skipped += 1,
        }
    }
    Reflow { pairs, skipped, nfe_total }
}
