use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::PairingSpec;
use crate::paths::{NoiseSharing, PathKind};
use crate::velocity::Arch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    /// Learning rate for the pairing parameters.
    pub lr_pairing: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_pairing: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 10.0,
        }
    }
}

/// Everything that determines a training run, apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub lambda_tpc: f64,
    pub p_tpc: f64,
    pub lambda_mono: f64,
    pub pairing: PairingSpec,
    /// Also regress the paired residual `‖v_t' - u_t'‖²`.
    pub two_residual: bool,
    pub path: PathKind,
    pub noise_sigma: f64,
    pub noise_sharing: NoiseSharing,
    pub arch: Arch,
    pub optimizer: OptimizerConfig,
    /// `0` disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub variance_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 20_000,
            batch_size: 256,
            lambda_tpc: 0.10,
            p_tpc: 0.75,
            lambda_mono: 0.001,
            pairing: PairingSpec::learned(),
            two_residual: false,
            path: PathKind::Linear,
            noise_sigma: 0.0,
            noise_sharing: NoiseSharing::Independent,
            arch: Arch::default(),
            optimizer: OptimizerConfig::default(),
            checkpoint_every: 1000,
            variance_window: 200,
        }
    }
}

impl TrainConfig {
    /// Plain flow matching: the temporal pair term switched off.
    pub fn baseline() -> Self {
        Self {
            lambda_tpc: 0.0,
            p_tpc: 0.0,
            ..Self::default()
        }
    }

    /// Plain flow matching with the same per-step velocity evaluations as
    /// `self`: the batch absorbs the evaluations the pair term would use.
    pub fn matched_baseline(&self) -> Self {
        Self {
            lambda_tpc: 0.0,
            p_tpc: 0.0,
            two_residual: false,
            batch_size: self.nfe_per_step(),
            ..self.clone()
        }
    }

    /// Field name of the first invalid setting, with a message.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((name, format!("{name} = {v} must be a finite value >= 0")))
            }
        };
        nonneg("lambda_tpc", self.lambda_tpc)?;
        nonneg("lambda_mono", self.lambda_mono)?;
        nonneg("noise_sigma", self.noise_sigma)?;
        if !(0.0..=1.0).contains(&self.p_tpc) {
            return Err(("p_tpc", format!("p_tpc = {} must lie in [0, 1]", self.p_tpc)));
        }
        if self.batch_size == 0 {
            return Err(("batch_size", "batch_size must be >= 1".into()));
        }
        if self.variance_window < 2 {
            return Err(("variance_window", "variance_window must be >= 2".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr_pairing >= 0.0 && o.eps > 0.0 && o.clip_norm >= 0.0)
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
        {
            return Err(("optimizer", format!("invalid optimizer settings {o:?}")));
        }
        self.path.validate().map_err(|e| ("path", e.to_string()))?;
        self.arch.validate().map_err(|e| ("arch", e.to_string()))?;
        self.pairing.validate().map_err(|e| ("pairing", e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(_, m)| Error::Config(m))
    }

    /// Whether the paired evaluation is needed at all.
    pub fn uses_pairs(&self) -> bool {
        self.lambda_tpc > 0.0 || self.two_residual
    }

    /// Velocity evaluations per optimizer step.
    pub fn nfe_per_step(&self) -> usize {
        self.batch_size * if self.uses_pairs() { 2 } else { 1 }
    }
}
