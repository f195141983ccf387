//! Empirical checks of the control-variate view of temporal pairing.
//!
//! Every statistic scalarizes vectors through `Var(Z) = E‖Z - EZ‖²`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{Dataset2D, DatasetName};
use crate::grad::DifferentiableProgram;
use crate::loss::{FmLoss, Objective, Streams, TpcBatch};
use crate::model::FlowModel;
use crate::pairing::pair_time;
use crate::params::ParamVector;
use crate::paths::{
    noise_augment_paired, sample_endpoints, sample_paired, DataSource, NoiseSharing, PathKind,
};
use crate::rng;

/// How the second time of a pair is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PairRule {
    Identity,
    Antithetic,
    /// `t + offset`, clamped to `[0, 1]`.
    Shift { offset: f64 },
    /// Whatever pairing the model carries.
    Model,
}

impl PairRule {
    pub fn apply(&self, model: &FlowModel, t: f64) -> Result<f64> {
        Ok(match *self {
            PairRule::Identity => t,
            PairRule::Antithetic => 1.0 - t,
            PairRule::Shift { offset } => (t + offset).clamp(0.0, 1.0),
            PairRule::Model => pair_time(model.pairing(), model.params(), t)?,
        })
    }
}

/// Per-sample regression gradients at `t` and at the paired time, built from
/// the same endpoints and noise draw `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedGradSample {
    pub g: ParamVector,
    pub h: ParamVector,
    pub xi: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSetup {
    pub path: PathKind,
    pub noise_sigma: f64,
    pub noise_sharing: NoiseSharing,
}

impl From<&TrainConfig> for SamplingSetup {
    fn from(c: &TrainConfig) -> Self {
        Self {
            path: c.path,
            noise_sigma: c.noise_sigma,
            noise_sharing: c.noise_sharing,
        }
    }
}

/// `n` independent draws at frozen parameters; reproducible in `seed`.
pub fn collect_paired_grads(
    model: &FlowModel,
    rule: PairRule,
    setup: &SamplingSetup,
    source: &DataSource,
    n: usize,
    seed: u64,
) -> Result<Vec<PairedGradSample>> {
    if n < 2 {
        return Err(Error::Config("need at least two paired gradient draws".into()));
    }
    let mut data = rng::child(seed, rng::DATA);
    let mut time = rng::child(seed, rng::TIME);
    let mut noise = rng::child(seed, rng::NOISE);
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let ep = sample_endpoints(source, 1, draws.len() as u64, &mut data)?.remove(0);
        let t: f64 = time.random();
        let tp = rule.apply(model, t)?;
        let pair = sample_paired(&setup.path, &ep, t, tp)?;
        draws.push(noise_augment_paired(&pair, setup.noise_sigma, setup.noise_sharing, &mut noise)?);
    }
    let fm = FmLoss::new(model.net().clone());
    draws
        .par_iter()
        .map(|(a, b)| {
            let (_, g) = fm.forward_backward(model.params(), std::slice::from_ref(a))?;
            let (_, h) = fm.forward_backward(model.params(), std::slice::from_ref(b))?;
            g.check_finite()?;
            h.check_finite()?;
            Ok(PairedGradSample { g, h, xi: a.endpoint_id })
        })
        .collect()
}

/// Summary of the estimator `G - αH`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub var_g: f64,
    pub var_h: f64,
    pub cov: f64,
    pub rho: f64,
    pub alpha_star: f64,
    /// The α actually used for `var_reduced`.
    pub alpha: f64,
    /// Direct empirical variance of `G - αH`.
    pub var_reduced: f64,
    /// Standard error of `var_reduced`.
    pub var_reduced_se: f64,
    /// `|var_reduced - (VarG + α²VarH - 2α·Cov)|`, relative to `VarG`.
    pub identity_residual: f64,
    pub n_samples: usize,
}

fn check_shapes(g: &[Vec<f64>], h: &[Vec<f64>]) -> Result<usize> {
    if g.len() != h.len() || g.len() < 2 {
        return Err(Error::Config("need at least two equally many G and H samples".into()));
    }
    let d = g[0].len();
    if g.iter().chain(h).any(|v| v.len() != d) {
        return Err(Error::Config("G and H samples have different lengths".into()));
    }
    Ok(d)
}

fn mean_vec(xs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; xs[0].len()];
    for x in xs {
        for (a, b) in m.iter_mut().zip(x) {
            *a += b;
        }
    }
    let n = xs.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn centered(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = mean_vec(xs);
    xs.iter().map(|x| x.iter().zip(&m).map(|(a, b)| a - b).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unbiased scalar variance and its standard error `sd(q)/√n`, where
/// `q_i = ‖z_i - z̄‖²`.
pub fn scalar_variance(z: &[Vec<f64>]) -> (f64, f64) {
    let n = z.len();
    let q: Vec<f64> = centered(z).iter().map(|c| dot(c, c)).collect();
    let var = q.iter().sum::<f64>() / (n - 1) as f64;
    let qm = q.iter().sum::<f64>() / n as f64;
    let sd = (q.iter().map(|x| (x - qm).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    (var, sd / (n as f64).sqrt())
}

/// Moments of paired vectors; α defaults to `α* = Cov/VarH`.
pub fn control_variate_stats(g: &[Vec<f64>], h: &[Vec<f64>], alpha: Option<f64>) -> Result<VarianceReport> {
    check_shapes(g, h)?;
    let n = g.len();
    let (cg, ch) = (centered(g), centered(h));
    let k = 1.0 / (n - 1) as f64;
    let var_g = k * cg.iter().map(|c| dot(c, c)).sum::<f64>();
    let var_h = k * ch.iter().map(|c| dot(c, c)).sum::<f64>();
    let cov = k * cg.iter().zip(&ch).map(|(a, b)| dot(a, b)).sum::<f64>();
    if var_h <= 0.0 && alpha.is_none() {
        return Err(Error::Degenerate("VarH = 0: optimal control-variate coefficient undefined".into()));
    }
    let alpha_star = if var_h > 0.0 { cov / var_h } else { 0.0 };
    let rho = if var_g > 0.0 && var_h > 0.0 {
        (cov / (var_g * var_h).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let a = alpha.unwrap_or(alpha_star);
    let z: Vec<Vec<f64>> = g
        .iter()
        .zip(h)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - a * q).collect())
        .collect();
    let (var_reduced, var_reduced_se) = scalar_variance(&z);
    let algebra = var_g + a * a * var_h - 2.0 * a * cov;
    Ok(VarianceReport {
        var_g,
        var_h,
        cov,
        rho,
        alpha_star,
        alpha: a,
        var_reduced,
        var_reduced_se,
        identity_residual: (var_reduced - algebra).abs() / var_g.max(f64::MIN_POSITIVE),
        n_samples: n,
    })
}

fn split(samples: &[PairedGradSample]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    samples
        .iter()
        .map(|s| (s.g.values().to_vec(), s.h.values().to_vec()))
        .unzip()
}

pub fn control_variate_report(samples: &[PairedGradSample], alpha: Option<f64>) -> Result<VarianceReport> {
    let (g, h) = split(samples);
    control_variate_stats(&g, &h, alpha)
}

/// Both sides of `ρ ≥ 1 - E‖G-H‖²/(2·VarG)` on centered samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`.
    pub gap: f64,
    /// Batch-means standard error of `gap`.
    pub gap_se: f64,
    /// The inequality is only guaranteed when `VarH ≥ VarG`.
    pub premise_var_h_ge_var_g: bool,
}

fn corr_parts(cg: &[Vec<f64>], ch: &[Vec<f64>]) -> Result<(f64, f64, f64, f64)> {
    let n = cg.len() as f64;
    let var_g = cg.iter().map(|c| dot(c, c)).sum::<f64>() / n;
    let var_h = ch.iter().map(|c| dot(c, c)).sum::<f64>() / n;
    if var_g <= 0.0 {
        return Err(Error::Degenerate("VarG = 0: correlation bound undefined".into()));
    }
    let cov = cg.iter().zip(ch).map(|(a, b)| dot(a, b)).sum::<f64>() / n;
    let msd = cg
        .iter()
        .zip(ch)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    let rho = if var_h > 0.0 { cov / (var_g * var_h).sqrt() } else { 0.0 };
    Ok((rho, 1.0 - msd / (2.0 * var_g), var_g, var_h))
}

pub fn corr_lower_bound_check(g: &[Vec<f64>], h: &[Vec<f64>]) -> Result<CorrBound> {
    check_shapes(g, h)?;
    let (cg, ch) = (centered(g), centered(h));
    let (lhs, rhs, var_g, var_h) = corr_parts(&cg, &ch)?;
    let batches = 20.min(g.len() / 2).max(2);
    let size = g.len() / batches;
    let gaps: Vec<f64> = (0..batches)
        .filter_map(|b| {
            let r = b * size..(b + 1) * size;
            let (l, r_, _, _) = corr_parts(&centered(&g[r.clone()]), &centered(&h[r])).ok()?;
            Some(l - r_)
        })
        .collect();
    let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let sd = (gaps.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (gaps.len() - 1).max(1) as f64).sqrt();
    // Batch estimates have √batches times the spread of the full estimate.
    let gap_se = sd / (gaps.len() as f64).sqrt();
    Ok(CorrBound {
        lhs,
        rhs,
        gap: lhs - rhs,
        gap_se,
        premise_var_h_ge_var_g: var_h >= var_g,
    })
}

pub fn corr_bound_report(samples: &[PairedGradSample]) -> Result<CorrBound> {
    let (g, h) = split(samples);
    corr_lower_bound_check(&g, &h)
}

/// `n` Gaussian pairs in `R^dim` with `Var(G) = var_g`, `Var(H) = var_h`
/// and correlation `rho` under the scalar convention.
pub fn planted_pairs<R: rand::Rng>(
    dim: usize,
    var_g: f64,
    var_h: f64,
    rho: f64,
    n: usize,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (sg, sh) = ((var_g / dim as f64).sqrt(), (var_h / dim as f64).sqrt());
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    (0..n)
        .map(|_| {
            let mut g = Vec::with_capacity(dim);
            let mut h = Vec::with_capacity(dim);
            for _ in 0..dim {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                g.push(sg * x);
                h.push(sh * (rho * x + c * y));
            }
            (g, h)
        })
        .unzip()
}

/// A least-squares velocity model `v(x, t) = W·f(x, t)` on random Fourier
/// features, where both the regression risk and the pair seminorm are
/// quadratic in `W`.
#[derive(Debug, Clone)]
pub struct TikhonovInstance {
    /// Feature second moment `E[f fᵀ]`.
    gram: DMatrix<f64>,
    /// Pair seminorm matrix `E[(f - f')(f - f')ᵀ]`.
    pair: DMatrix<f64>,
    /// `E[f uᵀ]`, one column per output coordinate.
    cross: DMatrix<f64>,
    /// `E‖u‖²`.
    target_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TikhonovRow {
    pub lambda: f64,
    /// Pair seminorm of the regularized solution.
    pub seminorm: f64,
    /// `R(v*)/λ`.
    pub bound: f64,
    pub satisfied: bool,
    pub slack: f64,
    /// Pair seminorm of the unregularized minimizer, which always bounds `seminorm`.
    pub seminorm_unregularized: f64,
    /// Set when a normal-equation solve needed the fallback ridge.
    pub regularized: bool,
}

/// Ridge added when a normal-equation matrix is not positive definite.
pub const FALLBACK_RIDGE: f64 = 1e-10;

/// Relative slack allowed for solver round-off when judging the bound.
pub const SOLVER_TOL: f64 = 1e-8;

impl TikhonovInstance {
    /// Features of `(x, t)` on `points` linear-interpolation samples between
    /// standard normal noise and two-moons data, paired antithetically.
    ///
    /// With `realizable` the targets are replaced by an exact member of the
    /// model class.
    pub fn random(seed: u64, features: usize, points: usize, realizable: bool) -> Result<Self> {
        let mut r = rng::child(seed, "tikhonov");
        let data = Dataset2D::new(DatasetName::TwoMoons, points, 0.05, seed).generate()?;
        let source = DataSource::points(data)?;
        let eps = sample_endpoints(&source, points, 0, &mut r)?;
        let d = source.dim();
        let omega: Vec<Vec<f64>> = (0..features)
            .map(|_| (0..=d).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let phase: Vec<f64> = (0..features).map(|_| r.random::<f64>() * std::f64::consts::TAU).collect();
        let scale = (2.0 / features as f64).sqrt();
        let feat = |x: &[f64], t: f64| -> DVector<f64> {
            DVector::from_iterator(
                features,
                omega.iter().zip(&phase).map(|(w, b)| {
                    let s: f64 = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + w[d] * t;
                    scale * (s + b).cos()
                }),
            )
        };
        let truth = DMatrix::from_fn(features, d, |_, _| StandardNormal.sample(&mut r));
        let kind = PathKind::Linear;
        let mut gram = DMatrix::zeros(features, features);
        let mut pair = DMatrix::zeros(features, features);
        let mut cross = DMatrix::zeros(features, d);
        let mut energy = 0.0;
        for ep in &eps {
            let t: f64 = r.random();
            let (a, b) = sample_paired(&kind, ep, t, 1.0 - t)?;
            let fa = feat(&a.x_t, t);
            let fb = feat(&b.x_t, 1.0 - t);
            let u = if realizable {
                truth.transpose() * &fa
            } else {
                DVector::from_vec(a.u_t.clone())
            };
            gram += &fa * fa.transpose();
            let diff = &fa - &fb;
            pair += &diff * diff.transpose();
            cross += &fa * u.transpose();
            energy += u.norm_squared();
        }
        let k = 1.0 / points as f64;
        Ok(Self {
            gram: gram * k,
            pair: pair * k,
            cross: cross * k,
            target_energy: energy * k,
        })
    }

    fn solve(&self, lambda: f64) -> (DMatrix<f64>, bool) {
        let m = &self.gram + &self.pair * lambda;
        if let Some(ch) = m.clone().cholesky() {
            return (ch.solve(&self.cross), false);
        }
        let n = m.nrows();
        let ridged = m + DMatrix::identity(n, n) * FALLBACK_RIDGE;
        let w = ridged
            .clone()
            .cholesky()
            .map(|c| c.solve(&self.cross))
            .unwrap_or_else(|| ridged.lu().solve(&self.cross).unwrap_or_else(|| DMatrix::zeros(n, self.cross.ncols())));
        (w, true)
    }

    /// Regression risk `E‖W·f - u‖²`.
    pub fn risk(&self, w: &DMatrix<f64>) -> f64 {
        let quad = (w.transpose() * &self.gram * w).trace();
        let lin = (w.transpose() * &self.cross).trace();
        (quad - 2.0 * lin + self.target_energy).max(0.0)
    }

    /// Pair seminorm `E‖W·f - W·f'‖²`.
    pub fn seminorm(&self, w: &DMatrix<f64>) -> f64 {
        (w.transpose() * &self.pair * w).trace().max(0.0)
    }

    pub fn check(&self, lambdas: &[f64]) -> Result<Vec<TikhonovRow>> {
        let (w_star, reg0) = self.solve(0.0);
        let r_star = self.risk(&w_star);
        let t_star = self.seminorm(&w_star);
        lambdas
            .iter()
            .map(|&lambda| {
                if !(lambda > 0.0) {
                    return Err(Error::Config(format!("λ = {lambda} must be > 0")));
                }
                let (w, reg) = self.solve(lambda);
                let seminorm = self.seminorm(&w);
                let bound = r_star / lambda;
                let tol = SOLVER_TOL * (1.0 + bound.abs());
                Ok(TikhonovRow {
                    lambda,
                    seminorm,
                    bound,
                    satisfied: seminorm <= bound + tol,
                    slack: bound - seminorm,
                    seminorm_unregularized: t_star,
                    regularized: reg || reg0,
                })
            })
            .collect()
    }
}

/// Spread of the full-objective gradient across independent minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradSpread {
    pub p_tpc: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub mean_norm: f64,
    pub nfe_per_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatedComparison {
    pub configured: GradSpread,
    pub ungated: GradSpread,
    /// `configured.variance / ungated.variance`.
    pub ratio: f64,
    /// Approximate 95% interval for `ratio` (delta method on the log ratio).
    pub ratio_ci: (f64, f64),
    pub draws: usize,
}

fn grad_spread(config: &TrainConfig, model: &FlowModel, source: &DataSource, n: usize, seed: u64) -> Result<GradSpread> {
    let grads: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut streams = Streams::new(seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let batch = TpcBatch::draw(config, source, 0, &mut streams)?;
            let obj = Objective::new(config, model.params())?;
            let (_, g) = obj.forward_backward(model.params(), &batch)?;
            g.check_finite()?;
            Ok(g.values().to_vec())
        })
        .collect::<Result<_>>()?;
    let (variance, variance_se) = scalar_variance(&grads);
    let mean_norm = grads.iter().map(|g| dot(g, g).sqrt()).sum::<f64>() / n as f64;
    Ok(GradSpread {
        p_tpc: config.p_tpc,
        variance,
        variance_se,
        mean_norm,
        nfe_per_step: config.nfe_per_step(),
    })
}

/// Gradient variance of the configured objective against the same objective
/// with the gate held shut. Both settings evaluate the paired times, so the
/// per-step velocity evaluations match; both see identical minibatches.
pub fn gated_estimator_variance(
    config: &TrainConfig,
    model: &FlowModel,
    source: &DataSource,
    n: usize,
    seed: u64,
) -> Result<GatedComparison> {
    if n < 2 {
        return Err(Error::Config("need at least two gradient draws".into()));
    }
    let configured = grad_spread(config, model, source, n, seed)?;
    let off = TrainConfig { p_tpc: 0.0, ..config.clone() };
    let ungated = grad_spread(&off, model, source, n, seed)?;
    if ungated.variance <= 0.0 {
        return Err(Error::Degenerate("gradient variance with the gate shut is zero".into()));
    }
    let ratio = configured.variance / ungated.variance;
    let rel = |s: &GradSpread| if s.variance > 0.0 { s.variance_se / s.variance } else { 0.0 };
    let z = 1.96 * (rel(&configured).powi(2) + rel(&ungated).powi(2)).sqrt();
    Ok(GatedComparison {
        configured,
        ungated,
        ratio,
        ratio_ci: (ratio * (-z).exp(), ratio * z.exp()),
        draws: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabOptions {
    pub seed: u64,
    pub paired_draws: usize,
    pub gated_draws: usize,
    /// Offset of the local pairing `t' = t + offset`.
    pub local_offset: f64,
    pub tikhonov_features: usize,
    pub tikhonov_points: usize,
}

impl Default for LabOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            paired_draws: 2000,
            gated_draws: 200,
            local_offset: 0.01,
            tikhonov_features: 10,
            tikhonov_points: 256,
        }
    }
}

pub const TIKHONOV_LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub rule: PairRule,
    pub stats: VarianceReport,
    pub corr_bound: CorrBound,
}

/// Everything the lab measures for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabReport {
    pub options: LabOptions,
    pub rules: Vec<RuleReport>,
    pub tikhonov: Vec<TikhonovRow>,
    pub gated: GatedComparison,
}

/// Runs all checks at frozen parameters.
pub fn run_lab(config: &TrainConfig, model: &FlowModel, source: &DataSource, opts: &LabOptions) -> Result<LabReport> {
    let setup = SamplingSetup::from(config);
    let rules = [
        PairRule::Model,
        PairRule::Shift { offset: opts.local_offset },
        PairRule::Antithetic,
    ];
    let mut reports = Vec::new();
    for rule in rules {
        let samples = collect_paired_grads(model, rule, &setup, source, opts.paired_draws, opts.seed)?;
        reports.push(RuleReport {
            rule,
            stats: control_variate_report(&samples, None)?,
            corr_bound: corr_bound_report(&samples)?,
        });
    }
    let inst = TikhonovInstance::random(opts.seed, opts.tikhonov_features, opts.tikhonov_points, false)?;
    Ok(LabReport {
        options: *opts,
        rules: reports,
        tikhonov: inst.check(&TIKHONOV_LAMBDAS)?,
        gated: gated_estimator_variance(config, model, source, opts.gated_draws, opts.seed)?,
    })
}

fn rule_name(r: &PairRule) -> String {
    match r {
        PairRule::Identity => "identity".into(),
        PairRule::Antithetic => "antithetic".into(),
        PairRule::Shift { offset } => format!("shift {offset}"),
        PairRule::Model => "model".into(),
    }
}

impl LabReport {
    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "paired gradients ({} draws)", self.options.paired_draws);
        let _ = writeln!(
            s,
            "{:<12} {:>12} {:>12} {:>12} {:>9} {:>10} {:>12} {:>10} {:>10}",
            "pairing", "VarG", "VarH", "Cov", "rho", "alpha*", "Var(G-aH)", "bound lhs", "bound rhs"
        );
        for r in &self.rules {
            let v = &r.stats;
            let _ = writeln!(
                s,
                "{:<12} {:>12.5e} {:>12.5e} {:>12.5e} {:>9.4} {:>10.4} {:>12.5e} {:>10.4} {:>10.4}",
                rule_name(&r.rule),
                v.var_g,
                v.var_h,
                v.cov,
                v.rho,
                v.alpha_star,
                v.var_reduced,
                r.corr_bound.lhs,
                r.corr_bound.rhs
            );
        }
        let _ = writeln!(s, "\nregularized selection");
        let _ = writeln!(s, "{:>8} {:>14} {:>14} {:>14} {:>10}", "lambda", "seminorm", "R*/lambda", "unreg. semi", "holds");
        for t in &self.tikhonov {
            let _ = writeln!(
                s,
                "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>10}",
                t.lambda, t.seminorm, t.bound, t.seminorm_unregularized, t.satisfied
            );
        }
        let g = &self.gated;
        let _ = writeln!(s, "\ngradient variance across minibatches ({} draws)", g.draws);
        let _ = writeln!(s, "{:>8} {:>14} {:>12} {:>8}", "p_tpc", "variance", "se", "nfe");
        for x in [&g.configured, &g.ungated] {
            let _ = writeln!(s, "{:>8} {:>14.6e} {:>12.4e} {:>8}", x.p_tpc, x.variance, x.variance_se, x.nfe_per_step);
        }
        let _ = writeln!(s, "ratio {:.4} (95% {:.4} .. {:.4})", g.ratio, g.ratio_ci.0, g.ratio_ci.1);
        s
    }
}
