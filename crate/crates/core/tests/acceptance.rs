//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Comparative criteria train real models; `TPCFLOW_ACCEPTANCE_STEPS`
//! shortens those runs for quick iteration. A failing criterion is reported
//! but only fails the process when `TPCFLOW_ACCEPTANCE_STRICT` is set.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use tpcflow::eval::{energy_distance, Dataset2D, DatasetName};
use tpcflow::field::AffineField;
use tpcflow::grad::{finite_diff_check, DifferentiableProgram};
use tpcflow::loss::{draw_gate, FmLoss, Objective, PairLoss, TpcBatch};
use tpcflow::pairing::{mono_penalty, Phi};
use tpcflow::paths::{sample_endpoints, sample_path, standard_normal, EndpointPair, PathSample};
use tpcflow::rng::{self, Rng};
use tpcflow::sampler::{
    euler_endpoints, euler_integrate, exact_nll, path_bank, rk45_integrate, straightness, time_variation_probe,
    Rk45Options, Solver,
};
use tpcflow::trainer::{reflow, tail_mean, train_from};
use tpcflow::variance::{control_variate_stats, corr_lower_bound_check, planted_pairs, TikhonovInstance, TIKHONOV_LAMBDAS};
use tpcflow::{
    Arch, DataSource, FlowModel, NoiseSharing, PairingMode, PairingSpec, ParamVector, PathKind, Result, TrainConfig,
};

const SEEDS: [u64; 3] = [0, 1, 2];
const DATA_N: usize = 10_000;
const EVAL_N: usize = 10_000;
const TPC_BATCH: usize = 128;
const ENTROPY_RATE: f64 = 1.418_938_533_204_672_7;

struct Verdict {
    pass: bool,
    detail: String,
    table: Vec<String>,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into(), table: Vec::new() }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Variant {
    Tpc,
    Fm,
}

impl Variant {
    fn label(self) -> &'static str {
        match self {
            Variant::Tpc => "TPC-FM",
            Variant::Fm => "FM",
        }
    }
}

struct Run {
    model: FlowModel,
    tail_variance: f64,
}

struct Lab {
    steps: u64,
    moons: DataSource,
    reference: Vec<Vec<f64>>,
    runs: HashMap<(Variant, u64, u32), Run>,
    training_secs: f64,
}

impl Lab {
    fn new() -> Self {
        let steps = std::env::var("TPCFLOW_ACCEPTANCE_STEPS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(20_000);
        let moons = Dataset2D::new(DatasetName::TwoMoons, DATA_N, 0.05, 0).generate().unwrap();
        let reference = Dataset2D::new(DatasetName::TwoMoons, EVAL_N, 0.05, 99).generate().unwrap();
        Self {
            steps,
            moons: DataSource::points(moons).unwrap(),
            reference,
            runs: HashMap::new(),
            training_secs: 0.0,
        }
    }

    fn config(&self, v: Variant, seed: u64) -> TrainConfig {
        let tpc = TrainConfig {
            seed,
            steps: self.steps,
            batch_size: TPC_BATCH,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        match v {
            Variant::Tpc => tpc,
            Variant::Fm => tpc.matched_baseline(),
        }
    }

    /// Depth 1 trains on data; depth k+1 reflows the depth-k model and
    /// continues training from it on the coupling.
    fn run(&mut self, v: Variant, seed: u64, depth: u32) -> &Run {
        let key = (v, seed, depth);
        if !self.runs.contains_key(&key) {
            let t = Instant::now();
            let mut cfg = self.config(v, seed);
            let (source, init) = if depth == 1 {
                (self.moons.clone(), None)
            } else {
                let prev = self.run(v, seed, depth - 1).model.clone();
                let table = reflow(&prev, DATA_N, &Solver::Rk45(Rk45Options::default()), seed + 100 * depth as u64);
                assert_eq!(table.skipped, 0);
                cfg.path = PathKind::Coupled;
                (DataSource::coupling(table.pairs).unwrap(), Some(prev))
            };
            let out = train_from(&cfg, &source, init, |_| Ok(())).unwrap();
            assert!(out.aborted.is_none(), "{v:?} seed {seed} aborted");
            let tail: Vec<f64> = out
                .variance_log
                .iter()
                .filter(|e| e.step as f64 > 0.75 * cfg.steps as f64)
                .map(|e| e.variance)
                .collect();
            let tail_variance = tail_mean(&tail, 1.0);
            self.training_secs += t.elapsed().as_secs_f64();
            self.runs.insert(key, Run { model: out.checkpoint.model, tail_variance });
        }
        &self.runs[&key]
    }

    fn one_step_ed(&mut self, v: Variant, seed: u64, depth: u32, steps: usize) -> f64 {
        let mut r = rng::child(1000 + seed, "eval");
        let starts: Vec<Vec<f64>> = (0..EVAL_N).map(|_| standard_normal(2, &mut r)).collect();
        let model = self.run(v, seed, depth).model.clone();
        let pts: Vec<Vec<f64>> = euler_endpoints(&model, &starts, steps).unwrap().into_iter().map(Option::unwrap).collect();
        energy_distance(&pts, &self.reference).unwrap()
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn random_params(arch: Arch, pairing: PairingSpec, seed: u64, r: &mut Rng) -> FlowModel {
    let m = FlowModel::init(arch, pairing, seed).unwrap();
    let mut p = m.params().clone();
    for v in p.values_mut() {
        let e: f64 = StandardNormal.sample(r);
        *v += 0.1 * e;
    }
    FlowModel::from_params(arch, pairing, p).unwrap()
}

fn random_endpoints(n: usize, r: &mut Rng) -> Vec<EndpointPair> {
    (0..n as u64)
        .map(|id| EndpointPair {
            x0: standard_normal(2, r),
            x1: standard_normal(2, r).iter().map(|v| 2.0 * v).collect(),
            id,
        })
        .collect()
}

fn random_path(r: &mut Rng) -> PathKind {
    match r.random_range(0..3) {
        0 => PathKind::Linear,
        1 => PathKind::OtSigma { sigma_min: 1e-3 },
        _ => PathKind::vp_default(),
    }
}

/// `Σ_j w_j φ(t_j)` as a program over the pairing parameters.
struct PhiProgram {
    spec: PairingSpec,
    ts: Vec<f64>,
    weights: Vec<f64>,
}

impl DifferentiableProgram for PhiProgram {
    type Batch = ();

    fn forward(&self, params: &ParamVector, _: &()) -> Result<f64> {
        let phi = Phi::new(&self.spec, params)?;
        Ok(self.ts.iter().zip(&self.weights).map(|(&t, w)| w * phi.eval(t)).sum())
    }

    fn forward_backward(&self, params: &ParamVector, _: &()) -> Result<(f64, ParamVector)> {
        let phi = Phi::new(&self.spec, params)?;
        let mut g = params.zeros_like();
        let mut total = 0.0;
        for (&t, &w) in self.ts.iter().zip(&self.weights) {
            total += w * phi.eval_backward(t, w, g.values_mut()).0;
        }
        Ok((total, g))
    }
}

fn gradient_correctness(_: &mut Lab) -> Verdict {
    let arch = Arch { dim: 2, width: 16, depth: 3, freqs: 2 };
    let step = 1e-5;
    let mut worst = [0.0f64; 4];
    for k in 0..20u64 {
        let mut r = rng::child(k, "gradient-draws");
        let learned = k % 2 == 0;
        let pairing = if learned { PairingSpec::learned() } else { PairingSpec::fixed() };
        let model = random_params(arch, pairing, k, &mut r);
        let path = random_path(&mut r);
        let eps = random_endpoints(8, &mut r);
        let ts: Vec<f64> = (0..8).map(|_| r.random_range(0.02..0.98)).collect();
        let samples: Vec<PathSample> = eps.iter().zip(&ts).map(|(e, &t)| sample_path(&path, e, t).unwrap()).collect();
        let fm = FmLoss::new(model.net().clone());
        worst[0] = worst[0].max(finite_diff_check(&fm, model.params(), &samples[..], step).unwrap());

        let pairs: Vec<(PathSample, PathSample)> = eps
            .iter()
            .zip(&ts)
            .map(|(e, &t)| (sample_path(&path, e, t).unwrap(), sample_path(&path, e, r.random_range(0.02..0.98)).unwrap()))
            .collect();
        let pl = PairLoss::new(model.net().clone());
        worst[1] = worst[1].max(finite_diff_check(&pl, model.params(), &pairs[..], step).unwrap());

        let sigma = if k % 3 == 0 { 0.1 } else { 0.0 };
        let cfg = TrainConfig {
            arch,
            pairing,
            path,
            batch_size: 8,
            lambda_tpc: r.random_range(0.05..1.0),
            two_residual: k % 4 == 1,
            noise_sigma: sigma,
            noise_sharing: if k % 2 == 0 { NoiseSharing::Shared } else { NoiseSharing::Independent },
            ..TrainConfig::default()
        };
        let noise = |r: &mut Rng| if sigma > 0.0 { standard_normal(16, r) } else { Vec::new() };
        let batch = TpcBatch {
            endpoints: eps.clone(),
            t: ts.clone(),
            noise: noise(&mut r),
            noise_paired: noise(&mut r),
            gate: k % 5 != 0,
        };
        let obj = Objective::new(&cfg, model.params()).unwrap();
        worst[2] = worst[2].max(finite_diff_check(&obj, model.params(), &batch, step).unwrap());

        let spec = PairingSpec::learned();
        let mut pp = ParamVector::zeros(&spec.segments()).unwrap();
        spec.init(&mut pp).unwrap();
        for v in pp.values_mut() {
            *v += r.random_range(-1.0..1.0);
        }
        let prog = PhiProgram {
            spec,
            ts: (0..16).map(|_| r.random()).collect(),
            weights: (0..16).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        worst[3] = worst[3].max(finite_diff_check(&prog, &pp, &(), step).unwrap());
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    verdict(
        max <= 1e-4,
        format!(
            "max FD discrepancy over 20 draws: fm {:.1e}, pair {:.1e}, total {:.1e}, phi {:.1e} (limit 1e-4)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn gating_identity(_: &mut Lab) -> Verdict {
    let mut r = rng::child(7, "gating");
    let arch = Arch { dim: 2, width: 32, depth: 3, freqs: 4 };
    let model = random_params(arch, PairingSpec::learned(), 7, &mut r);
    let eps = random_endpoints(64, &mut r);
    let t: Vec<f64> = (0..64).map(|_| r.random()).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [0.25, 0.75, 1.0] {
        let cfg = TrainConfig { arch, batch_size: 64, p_tpc: p, ..TrainConfig::default() };
        let obj = Objective::new(&cfg, model.params()).unwrap();
        let mut batch = TpcBatch { endpoints: eps.clone(), t: t.clone(), noise: vec![], noise_paired: vec![], gate: true };
        let (on, tel) = obj.evaluate(model.params(), &batch, None).unwrap();
        batch.gate = false;
        let (off, _) = obj.evaluate(model.params(), &batch, None).unwrap();
        let mut g = rng::child((p * 100.0) as u64, rng::GATE);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| if draw_gate(p, &mut g) { on } else { off }).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        let expect = tel.fm + p * cfg.lambda_tpc * tel.tpc.unwrap() + cfg.lambda_mono * tel.mono_surrogate;
        let ok = (mean - expect).abs() <= 3.0 * se + 1e-12 * expect.abs();
        pass &= ok;
        parts.push(format!("p={p}: |Δ|={:.2e} vs 3SE={:.2e}", (mean - expect).abs(), 3.0 * se));
    }
    verdict(pass, parts.join("; "))
}

fn control_variate_law(_: &mut Lab) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, rho) in [0.0, 0.5, 0.9].into_iter().enumerate() {
        let mut r = rng::child(i as u64, "planted");
        let (g, h) = planted_pairs(4, 1.0, 1.5, rho, 100_000, &mut r);
        let rep = control_variate_stats(&g, &h, None).unwrap();
        let expect = 1.0 - rho * rho;
        let z = (rep.var_reduced - expect) / rep.var_reduced_se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("rho={rho}: Var={:.4} vs {:.4} ({:+.2} SE)", rep.var_reduced, expect, z));
    }
    verdict(pass, parts.join("; "))
}

fn correlation_bound(_: &mut Lab) -> Verdict {
    let mut worst_dir = f64::INFINITY;
    let mut r = rng::child(4, "corr-instances");
    for _ in 0..50 {
        let var_g = r.random_range(0.5..2.0);
        let var_h = var_g * r.random_range(1.0..4.0);
        let rho = r.random_range(-0.5..0.99);
        let dim = r.random_range(1..6);
        let (g, h) = planted_pairs(dim, var_g, var_h, rho, 4000, &mut r);
        let b = corr_lower_bound_check(&g, &h).unwrap();
        worst_dir = worst_dir.min(b.gap / b.gap_se);
    }
    let mut worst_eq: f64 = 0.0;
    for _ in 0..10 {
        let v = r.random_range(0.5..2.0);
        let rho = r.random_range(0.0..0.99);
        let (g, h) = planted_pairs(3, v, v, rho, 4000, &mut r);
        let b = corr_lower_bound_check(&g, &h).unwrap();
        worst_eq = worst_eq.max((b.gap / b.gap_se).abs());
    }
    verdict(
        worst_dir >= -3.0 && worst_eq <= 3.0,
        format!(
            "50 instances with VarH >= VarG: min gap {:+.2} SE (>= -3); equal-variance instances: max |gap| {:.2} SE (<= 3)",
            worst_dir, worst_eq
        ),
    )
}

fn tikhonov(_: &mut Lab) -> Verdict {
    let mut held = 0;
    let mut min_slack = f64::INFINITY;
    for seed in 0..20 {
        let rows = TikhonovInstance::random(seed, 10, 256, false).unwrap().check(&TIKHONOV_LAMBDAS).unwrap();
        held += rows.iter().filter(|r| r.satisfied).count();
        min_slack = rows.iter().map(|r| r.slack / r.bound).fold(min_slack, f64::min);
    }
    verdict(
        held == 80,
        format!("{held}/80 (instance, λ) cells satisfy seminorm <= R*/λ; min relative slack {min_slack:.3}"),
    )
}

fn solver_orders(_: &mut Lab) -> Verdict {
    let f = AffineField::decay(1);
    let exact = (-1.0f64).exp();
    let mut pts = Vec::new();
    let mut nfe_ok = true;
    for k in 0..8 {
        let n = 10usize << k;
        let tr = euler_integrate(&f, &[1.0], n).unwrap();
        nfe_ok &= tr.nfe == n;
        pts.push(((n as f64).ln(), (tr.end()[0] - exact).abs().ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = -pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let tr = rk45_integrate(&f, &[1.0], &Rk45Options::default()).unwrap();
    let rk_err = (tr.end()[0] - exact).abs();
    verdict(
        (slope - 1.0).abs() <= 0.1 && rk_err <= 1e-6 && nfe_ok,
        format!("Euler slope {slope:.4} (1 ± 0.1); RK45 error {rk_err:.2e} (<= 1e-6) with nfe {}; Euler nfe == N: {nfe_ok}", tr.nfe),
    )
}

fn variance_reduction(lab: &mut Lab) -> Verdict {
    let mut table = vec![format!("{:>6} {:>14} {:>14} {:>8}", "seed", "TPC-FM", "FM", "ratio")];
    let (mut sum_t, mut sum_f, mut lower) = (0.0, 0.0, 0);
    for s in SEEDS {
        let t = lab.run(Variant::Tpc, s, 1).tail_variance;
        let f = lab.run(Variant::Fm, s, 1).tail_variance;
        sum_t += t;
        sum_f += f;
        lower += (t < f) as usize;
        table.push(format!("{s:>6} {t:>14.6e} {f:>14.6e} {:>8.4}", t / f));
    }
    let ratio = sum_t / sum_f;
    let mut v = verdict(
        ratio < 1.0,
        format!(
            "trailing-window grad-norm variance, final 25% of {} steps: TPC/FM ratio {ratio:.4} (seed mean); TPC lower on {lower}/3 seeds",
            lab.steps
        ),
    );
    v.table = table;
    v
}

fn quality_at_equal_nfe(lab: &mut Lab) -> Verdict {
    let mut table = vec![format!("{:>4} {:>22} {:>22}", "N", "TPC-FM (mean ± sd)", "FM (mean ± sd)")];
    let mut pass = true;
    for n in [1, 2, 5, 10] {
        let mut m = [(0.0, 0.0); 2];
        for (i, v) in [Variant::Tpc, Variant::Fm].into_iter().enumerate() {
            let eds: Vec<f64> = SEEDS.iter().map(|&s| lab.one_step_ed(v, s, 1, n)).collect();
            m[i] = mean_sd(&eds);
        }
        pass &= m[0].0 <= m[1].0;
        table.push(format!("{n:>4} {:>12.6} ± {:<8.6} {:>12.6} ± {:<8.6}", m[0].0, m[0].1, m[1].0, m[1].1));
    }
    let mut v = verdict(pass, "energy distance vs 10^4 held-out points, Euler N in {1,2,5,10}, mean of 3 seeds; TPC <= FM at every N required");
    v.table = table;
    v
}

fn temporal_roughness(lab: &mut Lab) -> Verdict {
    let mut table = vec![format!("{:>6} {:>14} {:>14}", "seed", "TPC-FM", "FM")];
    let mut pass = true;
    for s in SEEDS {
        let mut r = rng::child(s, "bank");
        let eps = sample_endpoints(&lab.moons, 512, 0, &mut r).unwrap();
        let bank = path_bank(&PathKind::Linear, &eps, 101);
        let t = time_variation_probe(&lab.run(Variant::Tpc, s, 1).model, &bank, 0.01, 50).unwrap();
        let f = time_variation_probe(&lab.run(Variant::Fm, s, 1).model, &bank, 0.01, 50).unwrap();
        pass &= t < f;
        table.push(format!("{s:>6} {t:>14.6} {f:>14.6}"));
    }
    let mut v = verdict(pass, "time-variation probe (Δ = 0.01) on identical path banks; TPC < FM on every seed required");
    v.table = table;
    v
}

fn monotone_pairing(lab: &mut Lab) -> Verdict {
    let models: Vec<FlowModel> = lab
        .runs
        .iter()
        .filter(|(k, _)| k.0 == Variant::Tpc)
        .map(|(_, r)| r.model.clone())
        .collect();
    let mut bad = 0;
    for m in &models {
        assert_eq!(m.pairing().mode, PairingMode::Learned);
        let (count, _) = mono_penalty(m.pairing(), m.params(), m.pairing().grid).unwrap();
        let phi = Phi::new(m.pairing(), m.params()).unwrap();
        let vals: Vec<f64> = (0..1000).map(|k| phi.eval(k as f64 / 999.0)).collect();
        if count != 0 || vals.windows(2).any(|w| w[1] < w[0]) {
            bad += 1;
        }
    }
    verdict(
        !models.is_empty() && bad == 0,
        format!("{} trained learned-pairing models checked; {bad} with an order violation", models.len()),
    )
}

fn nll_sanity(lab: &mut Lab) -> Verdict {
    let t = Instant::now();
    let data = Dataset2D::new(DatasetName::StdNormal, DATA_N, 0.0, 5).generate().unwrap();
    let cfg = TrainConfig {
        steps: lab.steps.min(5000),
        batch_size: TPC_BATCH,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let out = train_from(&cfg, &DataSource::points(data).unwrap(), None, |_| Ok(())).unwrap();
    lab.training_secs += t.elapsed().as_secs_f64();
    let held = Dataset2D::new(DatasetName::StdNormal, 4000, 0.0, 6).generate().unwrap();
    let nll = exact_nll(&out.checkpoint.model, &held, &Rk45Options::default()).unwrap();
    let sd = (nll.per_sample.iter().map(|v| (v - nll.mean).powi(2)).sum::<f64>() / (held.len() - 1) as f64).sqrt();
    verdict(
        (nll.mean - ENTROPY_RATE).abs() <= 0.05,
        format!(
            "exact NLL {:.4} ± {:.4} nats/dim on 4000 held-out points after {} steps; target {ENTROPY_RATE:.4} ± 0.05",
            nll.mean,
            sd / (held.len() as f64).sqrt(),
            cfg.steps
        ),
    )
}

fn reflow_regression(lab: &mut Lab) -> Verdict {
    let mut table = vec![format!("{:>6} {:>8} {:>22} {:>12}", "depth", "variant", "ED N=1 (mean ± sd)", "straightness")];
    let mut ed = HashMap::new();
    for depth in [1u32, 2] {
        for v in [Variant::Tpc, Variant::Fm] {
            let mut eds = Vec::new();
            let mut st = 0.0;
            for s in SEEDS {
                eds.push(lab.one_step_ed(v, s, depth, 1));
                let mut r = rng::child(s, "straightness");
                let starts: Vec<Vec<f64>> = (0..256).map(|_| standard_normal(2, &mut r)).collect();
                st += straightness(&lab.run(v, s, depth).model, &starts, 100).unwrap();
            }
            let (e, sd) = mean_sd(&eds);
            st /= SEEDS.len() as f64;
            ed.insert((depth, v), e);
            table.push(format!("{depth:>6} {:>8} {e:>12.6} ± {sd:<8.6} {st:>12.6}", v.label()));
        }
    }
    let deeper = [Variant::Tpc, Variant::Fm].iter().all(|&v| ed[&(2, v)] <= ed[&(1, v)]);
    let tpc_better = [1, 2].iter().all(|&d| ed[&(d, Variant::Tpc)] <= ed[&(d, Variant::Fm)]);
    let mut v = verdict(
        deeper && tpc_better,
        format!("one-step energy distance, mean of 3 seeds: 2-RF <= 1-RF for both variants: {deeper}; TPC <= FM at each depth: {tpc_better}"),
    );
    v.table = table;
    v
}

type Criterion = (u32, &'static str, fn(&mut Lab) -> Verdict);

fn main() {
    let strict = std::env::var_os("TPCFLOW_ACCEPTANCE_STRICT").is_some();
    let criteria: [Criterion; 12] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "gating identity", gating_identity),
        (3, "control-variate law", control_variate_law),
        (4, "correlation lower bound", correlation_bound),
        (5, "regularized selection bound", tikhonov),
        (6, "solver orders and NFE accounting", solver_orders),
        (7, "gradient variance, TPC vs FM", variance_reduction),
        (8, "quality at equal NFE", quality_at_equal_nfe),
        (9, "temporal roughness", temporal_roughness),
        (10, "monotone learned pairing", monotone_pairing),
        (11, "likelihood on standard normal data", nll_sanity),
        (12, "reflow one-step quality", reflow_regression),
    ];
    let mut lab = Lab::new();
    let mut failed = 0;
    println!("acceptance: {} training steps per comparative run", lab.steps);
    for (id, name, f) in criteria {
        let t = Instant::now();
        let train_before = lab.training_secs;
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut lab)));
        let secs = t.elapsed().as_secs_f64();
        let trained = lab.training_secs - train_before;
        let v = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += (!v.pass) as usize;
        let timing = if trained > 0.0 {
            format!("{secs:.1}s, {trained:.1}s training")
        } else {
            format!("{secs:.1}s")
        };
        println!("[{}] {id:>2}. {name} ({timing}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        for line in &v.table {
            println!("        {line}");
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
