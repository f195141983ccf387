mod exit;
mod manifest;
mod runconfig;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tpcflow::eval::{energy_distance, Dataset2D, DatasetName};
use tpcflow::field::VelocityField;
use tpcflow::io;
use tpcflow::paths::standard_normal;
use tpcflow::rng;
use tpcflow::sampler::{exact_nll, integrate, integrate_many, Rk45Options, Solver};
use tpcflow::trainer::{reflow, train_with, Event};
use tpcflow::variance::run_lab;
use tpcflow::Checkpoint;

use exit::{CmdResult, Failure};
use manifest::RunManifest;
use runconfig::RunConfig;

#[derive(Parser)]
#[command(name = "tpcflow", version, about = "Flow matching with temporal pair consistency")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of optimizer steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Draw samples by integrating the flow from noise.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write every trajectory in long format.
        #[arg(long)]
        trajectories: bool,
    },
    /// Compare a sample file with a reference file.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Adds the exact likelihood of the reference points under this model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Cap on reference points used for the likelihood.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1e-5)]
        atol: f64,
        #[arg(long, default_value_t = 1e-5)]
        rtol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the gradient-variance checks on a trained model.
    Variance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a coupling table by pushing noise through a trained flow.
    Reflow {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a toy dataset as CSV.
    Data {
        #[arg(long, default_value = "two_moons")]
        dataset: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Euler,
    Rk45,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "rk45")]
    solver: SolverKind,
    /// Euler steps.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    atol: f64,
    #[arg(long, default_value_t = 1e-5)]
    rtol: f64,
}

impl SolverArgs {
    fn solver(&self) -> CmdResult<Solver> {
        match self.solver {
            SolverKind::Euler if self.steps == 0 => Err(Failure::config("--steps must be >= 1 for euler")),
            SolverKind::Euler => Ok(Solver::Euler { steps: self.steps }),
            SolverKind::Rk45 if !(self.atol > 0.0 && self.rtol > 0.0) => {
                Err(Failure::config("--atol and --rtol must be > 0"))
            }
            SolverKind::Rk45 => Ok(Solver::Rk45(Rk45Options::with_tolerances(self.atol, self.rtol))),
        }
    }
}

fn ensure_dir(p: &Path) -> CmdResult {
    std::fs::create_dir_all(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
}

fn load_checkpoint(p: &Path) -> CmdResult<Checkpoint> {
    Checkpoint::load(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
}

fn too_many_failures(failed: usize, total: usize) -> bool {
    failed * 100 > total
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, steps: Option<u64>) -> CmdResult {
    let mut rc = RunConfig::load(config)?;
    if let Some(s) = seed {
        rc.train.seed = s;
    }
    if let Some(s) = steps {
        rc.train.steps = s;
    }
    let source = rc.data_source()?;
    ensure_dir(out)?;
    let ck_dir = out.join("checkpoints");
    ensure_dir(&ck_dir)?;
    let mut manifest = RunManifest::begin(rc.train.seed);
    manifest.snapshot(out, config, &rc.raw)?;
    let telemetry_path = out.join("telemetry.csv");
    let variance_path = out.join("variance.csv");
    let final_path = out.join("final.ckpt");
    manifest.outputs = vec![telemetry_path.clone(), variance_path.clone(), ck_dir.clone(), final_path.clone()];
    manifest.write(out)?;

    let mut tel = csv_writer(&telemetry_path)?;
    let mut var = csv_writer(&variance_path)?;
    let outcome = train_with(&rc.train, &source, |ev| {
        match ev {
            Event::Step(r) => tel.serialize(r)?,
            Event::Variance(v) => var.serialize(v)?,
            Event::Checkpoint(c) => c.save(&ck_dir.join(format!("step_{:08}.ckpt", c.step)))?,
        }
        Ok(())
    })?;
    tel.flush()?;
    var.flush()?;
    outcome.checkpoint.save(&final_path)?;
    if let Some(a) = outcome.aborted {
        manifest.finish(out, "aborted")?;
        return Err(Failure::new(
            exit::NUMERIC,
            format!("training aborted at step {}: {}; last good parameters saved", a.step, a.reason),
        ));
    }
    manifest.finish(out, "ok")?;
    eprintln!("trained {} steps; final checkpoint {}", outcome.checkpoint.step, final_path.display());
    Ok(())
}

fn csv_writer(path: &Path) -> CmdResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn cmd_sample(checkpoint: &Path, solver: &SolverArgs, n: usize, out: &Path, seed: Option<u64>, trajectories: bool) -> CmdResult {
    let ck = load_checkpoint(checkpoint)?;
    let solver = solver.solver()?;
    let seed = seed.unwrap_or(ck.seed);
    ensure_dir(out)?;
    let mut manifest = RunManifest::begin(seed);
    let samples_path = out.join("samples.csv");
    let summary_path = out.join("summary.json");
    manifest.outputs = vec![samples_path.clone(), summary_path.clone()];
    manifest.write(out)?;

    let model = &ck.model;
    let d = model.dim();
    let mut r = rng::child(seed, "sample");
    let starts: Vec<Vec<f64>> = (0..n).map(|_| standard_normal(d, &mut r)).collect();
    let t0 = Instant::now();
    let mut points = Vec::with_capacity(n);
    let (mut failed, mut nfe_total) = (0usize, 0usize);
    if trajectories {
        let traj_path = out.join("trajectories.csv");
        let mut w = csv_writer(&traj_path)?;
        let mut header = vec!["traj_id".to_string(), "t".to_string()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(|e| Failure::config(e.to_string()))?;
        for (id, z) in starts.iter().enumerate() {
            match integrate(model, z, &solver) {
                Ok(tr) => {
                    nfe_total += tr.nfe;
                    for (t, s) in tr.times.iter().zip(&tr.states) {
                        let mut rec = vec![id.to_string(), t.to_string()];
                        rec.extend(s.iter().map(|v| v.to_string()));
                        w.write_record(&rec).map_err(|e| Failure::config(e.to_string()))?;
                    }
                    points.push(tr.end().to_vec());
                }
                Err(_) => failed += 1,
            }
        }
        w.flush()?;
        manifest.outputs.push(traj_path);
    } else {
        for res in integrate_many(model, &starts, &solver) {
            match res {
                Ok((z, nfe)) => {
                    nfe_total += nfe;
                    points.push(z);
                }
                Err(_) => failed += 1,
            }
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    io::save_points(&samples_path, d, &points)?;
    let ok = points.len();
    let summary = json!({
        "n": n,
        "failed": failed,
        "solver": solver,
        "nfe_total": nfe_total,
        "nfe_mean": if ok > 0 { nfe_total as f64 / ok as f64 } else { 0.0 },
        "wall_time": wall,
    });
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;
    println!("{summary}");
    if too_many_failures(failed, n) {
        manifest.finish(out, "integration failures")?;
        return Err(Failure::new(exit::INTEGRATION, format!("{failed} of {n} trajectories failed")));
    }
    manifest.finish(out, "ok")
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    samples: &Path,
    reference: &Path,
    checkpoint: Option<&Path>,
    n: Option<usize>,
    atol: f64,
    rtol: f64,
    out: Option<&Path>,
) -> CmdResult {
    let read = |p: &Path| io::load_points(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())));
    let (da, a) = read(samples)?;
    let (db, b) = read(reference)?;
    if da != db {
        return Err(Failure::config(format!("dimension mismatch: samples have {da} columns, reference {db}")));
    }
    let mut metrics = serde_json::Map::new();
    metrics.insert("n_samples".into(), json!(a.len()));
    metrics.insert("n_reference".into(), json!(b.len()));
    if !a.is_empty() && !b.is_empty() {
        metrics.insert("energy_distance".into(), json!(energy_distance(&a, &b)?));
    }
    if let Some(cp) = checkpoint {
        let ck = load_checkpoint(cp)?;
        if ck.model.dim() != db {
            return Err(Failure::config("checkpoint dimension differs from the reference data"));
        }
        let pts = &b[..n.unwrap_or(b.len()).min(b.len())];
        if !pts.is_empty() {
            let nll = exact_nll(&ck.model, pts, &Rk45Options::with_tolerances(atol, rtol))?;
            metrics.insert("nll_per_dim".into(), json!(nll.mean));
            metrics.insert("nll_nfe_total".into(), json!(nll.nfe_total));
        }
    }
    let text = serde_json::to_string_pretty(&metrics)?;
    println!("{text}");
    if let Some(o) = out {
        ensure_dir(o)?;
        std::fs::write(o.join("metrics.json"), text)?;
    }
    Ok(())
}

fn cmd_variance(checkpoint: &Path, config: &Path, out: &Path, seed: Option<u64>) -> CmdResult {
    let ck = load_checkpoint(checkpoint)?;
    let mut rc = RunConfig::load(config)?;
    rc.train.arch = *ck.model.arch();
    rc.train.pairing = *ck.model.pairing();
    if let Some(s) = seed {
        rc.lab.seed = s;
    }
    let source = rc.data_source()?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::begin(rc.lab.seed);
    manifest.snapshot(out, config, &rc.raw)?;
    let json_path = out.join("variance_report.json");
    let text_path = out.join("variance_report.txt");
    manifest.outputs = vec![json_path.clone(), text_path.clone()];
    manifest.write(out)?;
    let report = match run_lab(&rc.train, &ck.model, &source, &rc.lab) {
        Ok(r) => r,
        Err(e) => {
            manifest.finish(out, "failed")?;
            return Err(e.into());
        }
    };
    std::fs::write(&json_path, serde_json::to_vec_pretty(&report)?)?;
    let text = report.to_text();
    std::fs::write(&text_path, &text)?;
    print!("{text}");
    manifest.finish(out, "ok")
}

fn cmd_reflow(checkpoint: &Path, solver: &SolverArgs, n: usize, out: &Path, seed: Option<u64>) -> CmdResult {
    let ck = load_checkpoint(checkpoint)?;
    let solver = solver.solver()?;
    let seed = seed.unwrap_or(ck.seed);
    ensure_dir(out)?;
    let mut manifest = RunManifest::begin(seed);
    let coupling_path = out.join("coupling.csv");
    let summary_path = out.join("summary.json");
    manifest.outputs = vec![coupling_path.clone(), summary_path.clone()];
    manifest.write(out)?;
    let res = reflow(&ck.model, n, &solver, seed);
    io::save_coupling(&coupling_path, ck.model.dim(), &res.pairs)?;
    let summary = json!({
        "n_pairs": n,
        "written": res.pairs.len(),
        "skipped": res.skipped,
        "nfe_total": res.nfe_total,
        "solver": solver,
    });
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;
    println!("{summary}");
    if too_many_failures(res.skipped, n) {
        manifest.finish(out, "integration failures")?;
        return Err(Failure::new(exit::INTEGRATION, format!("{} of {n} trajectories skipped", res.skipped)));
    }
    manifest.finish(out, "ok")
}

fn cmd_data(dataset: &str, n: usize, noise: f64, seed: u64, out: &Path) -> CmdResult {
    let name: DatasetName = dataset.parse()?;
    let pts = Dataset2D::new(name, n, noise, seed).generate()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    io::save_points(out, 2, &pts)?;
    Ok(())
}

fn configure_threads() -> CmdResult {
    if let Ok(v) = std::env::var("TPCFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::config(format!("TPCFLOW_THREADS = `{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    configure_threads()?;
    match cli.command {
        Cmd::Train { config, out, seed, steps } => cmd_train(&config, &out, seed, steps),
        Cmd::Sample { checkpoint, solver, n, out, seed, trajectories } => {
            cmd_sample(&checkpoint, &solver, n, &out, seed, trajectories)
        }
        Cmd::Eval { samples, reference, checkpoint, n, atol, rtol, out } => {
            cmd_eval(&samples, &reference, checkpoint.as_deref(), n, atol, rtol, out.as_deref())
        }
        Cmd::Variance { checkpoint, config, out, seed } => cmd_variance(&checkpoint, &config, &out, seed),
        Cmd::Reflow { checkpoint, solver, n, out, seed } => cmd_reflow(&checkpoint, &solver, n, &out, seed),
        Cmd::Data { dataset, n, noise, seed, out } => cmd_data(&dataset, n, noise, seed, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::exit(exit::OK),
        Err(f) => {
            eprintln!("error: {f}");
            std::process::exit(f.code);
        }
    }
}
