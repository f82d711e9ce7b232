//! Experiment pipeline: instance construction, optimization runs, test-set
//! evaluation, spectral reports and derivative checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tnhvp::complex::{haar_product_state, rng_from_seed, random_cmat4, split_seed};
use tnhvp::cost::risk_value;
use tnhvp::kernel::overlap_only;
use tnhvp::manifold::project_all;
use tnhvp::optim::{riemannian_adam_minimize_observed, trust_region_minimize_observed, OptimResult, StopReason, TraceRecord};
use tnhvp::spectral::{cg_convergence_probe, materialize_problem_hessian, spectrum_report, CgProbe, SpectrumReport, TangentBasis};
use tnhvp::trotter::{fourth_order_trotter, second_order_trotter, second_order_trotter_ti, SpinChainModel};
use tnhvp::{BrickwallCircuit, CircuitObjective, Executor, GateVec, Problem, Sample, TruncationPolicy, C64};

use crate::config::{ExperimentConfig, Init, ResolvedOptimizer};
use crate::error::CliError;
use crate::formats::{save_mps, CircuitCheckpoint};

pub const TRACE_SCHEMA: &str = "tnhvp.trace/1";
pub const SUMMARY_SCHEMA: &str = "tnhvp.summary/1";
pub const EVAL_SCHEMA: &str = "tnhvp.eval/1";
pub const SPECTRUM_SCHEMA: &str = "tnhvp.spectrum/1";
pub const SAMPLES_SCHEMA: &str = "tnhvp.samples/1";
pub const DERIVATIVES_SCHEMA: &str = "tnhvp.derivatives/1";

const TRAIN_STREAM: u64 = 0x7472_6169_6e;
const TEST_STREAM: u64 = 0x7465_7374;

pub fn version_stamp() -> String {
    match option_env!("TNHVP_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Everything a run needs, built deterministically from the configuration.
pub struct Instance {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub model: SpinChainModel,
    pub reference: BrickwallCircuit,
    pub start: BrickwallCircuit,
    pub train: Vec<Sample>,
    pub train_seeds: Vec<u64>,
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
        Self::build_with_start(cfg, None)
    }

    /// Like [`Instance::build`], with the ansatz replaced by a checkpoint when given.
    pub fn build_with_start(cfg: &ExperimentConfig, start: Option<BrickwallCircuit>) -> Result<Instance, CliError> {
        let model = cfg.model()?;
        let reference = build_reference(cfg, &model)?;
        let start = match start {
            Some(c) => c,
            None => build_start(cfg, &model, &reference)?,
        };
        let (train, train_seeds) = make_samples(cfg, &reference, cfg.training.n_samples, split_seed(cfg.training.seed, TRAIN_STREAM))?;
        Ok(Instance { cfg: cfg.clone(), hash: cfg.hash(), model, reference, start, train, train_seeds })
    }

    pub fn test_samples(&self) -> Result<Vec<Sample>, CliError> {
        let e = &self.cfg.evaluation;
        Ok(make_samples(&self.cfg, &self.reference, e.n_test_samples, split_seed(e.test_seed, TEST_STREAM))?.0)
    }

    pub fn dim(&self) -> usize {
        16 * self.start.n_params()
    }

    pub fn resolved_optimizer(&self) -> ResolvedOptimizer {
        self.cfg.optimizer.resolve(self.dim())
    }

    pub fn objective<'a, E: Executor>(&'a self, exec: &'a E) -> CircuitObjective<'a, E> {
        let mut obj = CircuitObjective::new(self.start.clone(), &self.train, exec);
        obj.retraction = self.resolved_optimizer().retraction();
        obj
    }
}

pub fn training_policy(cfg: &ExperimentConfig) -> TruncationPolicy {
    TruncationPolicy { chi_max: cfg.training.chi_max, trunc_tol: cfg.training.trunc_tol }
}

pub fn reference_policy(cfg: &ExperimentConfig) -> TruncationPolicy {
    TruncationPolicy { chi_max: cfg.reference.chi_ref, trunc_tol: cfg.reference.trunc_tol }
}

pub fn build_reference(cfg: &ExperimentConfig, model: &SpinChainModel) -> Result<BrickwallCircuit, CliError> {
    Ok(match cfg.reference.order {
        2 => second_order_trotter(model, cfg.reference.n_steps)?,
        _ => fourth_order_trotter(model, cfg.reference.n_steps)?,
    })
}

pub fn build_start(cfg: &ExperimentConfig, model: &SpinChainModel, reference: &BrickwallCircuit) -> Result<BrickwallCircuit, CliError> {
    let a = &cfg.ansatz;
    match a.init {
        Init::Strang => {
            let steps = (a.n_layers - 1) / 2;
            if steps == 0 {
                return Err(CliError::Config("[ansatz] n_layers: strang init needs at least 3 layers".into()));
            }
            Ok(if a.ti { second_order_trotter_ti(model, steps)? } else { second_order_trotter(model, steps)? })
        }
        Init::Reference => {
            if reference.n_layers() != a.n_layers {
                return Err(CliError::Config(format!(
                    "[ansatz] n_layers: reference init needs {} layers to match the reference circuit",
                    reference.n_layers()
                )));
            }
            Ok(reference.clone())
        }
        Init::Checkpoint => {
            let path = a.checkpoint.as_ref().expect("validated");
            let c = CircuitCheckpoint::load(path)?.to_circuit()?;
            check_layout(&c, cfg)?;
            Ok(c)
        }
    }
}

/// Rejects circuits whose layout differs from the configured ansatz.
pub fn check_layout(c: &BrickwallCircuit, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let a = &cfg.ansatz;
    if c.n_qubits() != cfg.model.n_sites() || c.n_layers() != a.n_layers || c.ti() != a.ti {
        return Err(CliError::Config(format!(
            "dimension mismatch: circuit has {} qubits, {} layers, ti = {}; config expects {}, {}, {}",
            c.n_qubits(),
            c.n_layers(),
            c.ti(),
            cfg.model.n_sites(),
            a.n_layers,
            a.ti
        )));
    }
    Ok(())
}

/// Haar product inputs labelled by the reference at `chi_ref`, then carried at
/// the training truncation.
pub fn make_samples(cfg: &ExperimentConfig, reference: &BrickwallCircuit, n: usize, seed: u64) -> Result<(Vec<Sample>, Vec<u64>), CliError> {
    let (train, refp) = (training_policy(cfg), reference_policy(cfg));
    let mut samples = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    for s in 0..n {
        let sd = split_seed(seed, s as u64);
        let psi = haar_product_state(cfg.model.n_sites(), sd, refp)?;
        let labelled = Sample::from_reference(psi, reference, refp)?;
        samples.push(Sample::new(labelled.psi0.with_policy(train), labelled.phi0.with_policy(train))?);
        seeds.push(sd);
    }
    Ok((samples, seeds))
}

/// Per-sample fidelities `|T_s|²` in sample order.
pub fn fidelities<E: Executor>(c: &BrickwallCircuit, samples: &[Sample], exec: &E) -> Result<Vec<f64>, CliError> {
    let per = exec.map(samples.len(), |i| overlap_only(&samples[i].psi0, &samples[i].phi0, c));
    per.into_iter().map(|t| t.map(|t| t.norm_sqr()).map_err(CliError::from)).collect()
}

fn mean_risk(fid: &[f64]) -> f64 {
    fid.iter().map(|f| 1.0 - f).sum::<f64>() / fid.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub schema: String,
    pub config_hash: String,
    pub optimizer: String,
    #[serde(flatten)]
    pub record: TraceRecord,
    /// Gradient plus HVP evaluations so far.
    pub derivative_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub config_hash: String,
    pub version: String,
    pub optimizer: String,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub n_params: usize,
    pub dim: usize,
    pub initial_train_risk: f64,
    pub final_train_risk: f64,
    pub initial_test_risk: f64,
    pub final_test_risk: f64,
    /// `initial_test_risk / final_test_risk`.
    pub test_risk_reduction: f64,
    pub final_test_fidelities: Vec<f64>,
    pub grad_evals: usize,
    pub hvp_evals: usize,
    pub kernel_calls: usize,
    pub accepted_steps: usize,
    pub loss_increases: usize,
    pub max_unitarity_residual: f64,
    pub workers: usize,
    /// Not covered by the determinism contract.
    pub wall_time_s: f64,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub result: OptimResult<GateVec>,
    pub final_circuit: BrickwallCircuit,
    pub directory: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).expect("artifact serializes");
    std::fs::write(path, s + "\n").map_err(|e| CliError::io(path.display(), e))
}

fn opt_f(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn csv_row(r: &TraceRecord) -> String {
    format!(
        "{},{:e},{:e},{},{},{},{},{},{}",
        r.iter,
        r.loss,
        r.grad_norm,
        r.grad_evals,
        r.hvp_evals,
        r.grad_evals + r.hvp_evals,
        r.accepted.map(|a| a.to_string()).unwrap_or_default(),
        opt_f(r.radius),
        opt_f(r.rho)
    )
}

/// Streams trace lines and periodic checkpoints while the optimizer runs.
struct TraceSink<'a> {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    dir: &'a Path,
    inst: &'a Instance,
    optimizer: &'static str,
    checkpoint_every: usize,
    error: Option<CliError>,
}

impl TraceSink<'_> {
    fn record(&mut self, r: &TraceRecord, x: &GateVec) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_record(r, x) {
            self.error = Some(e);
        }
    }

    fn try_record(&mut self, r: &TraceRecord, x: &GateVec) -> Result<(), CliError> {
        let line = TraceLine {
            schema: TRACE_SCHEMA.into(),
            config_hash: self.inst.hash.clone(),
            optimizer: self.optimizer.into(),
            record: r.clone(),
            derivative_evals: r.grad_evals + r.hvp_evals,
        };
        let io = |e| CliError::io("trace", e);
        writeln!(self.jsonl, "{}", serde_json::to_string(&line).expect("trace serializes")).map_err(io)?;
        writeln!(self.csv, "{}", csv_row(r)).map_err(io)?;
        if self.checkpoint_every > 0 && r.iter % self.checkpoint_every == 0 {
            let c = self.inst.start.with_gates(x.0.clone())?;
            CircuitCheckpoint::new(&c, &self.inst.hash, Some(r.iter)).save(&self.dir.join(format!("checkpoint_{:05}.json", r.iter)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub seed: u64,
    pub psi0: String,
    pub phi0: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    pub schema: String,
    pub config_hash: String,
    pub n_sites: usize,
    pub policy: TruncationPolicy,
    pub samples: Vec<SampleEntry>,
}

fn write_samples(dir: &Path, inst: &Instance) -> Result<(), CliError> {
    let sdir = dir.join("samples");
    std::fs::create_dir_all(&sdir).map_err(|e| CliError::io(sdir.display(), e))?;
    let mut entries = Vec::new();
    for (i, (s, seed)) in inst.train.iter().zip(&inst.train_seeds).enumerate() {
        let (p, f) = (format!("psi0_{i:04}.mps"), format!("phi0_{i:04}.mps"));
        save_mps(&sdir.join(&p), &s.psi0)?;
        save_mps(&sdir.join(&f), &s.phi0)?;
        entries.push(SampleEntry { index: i, seed: *seed, psi0: p, phi0: f });
    }
    let m = SampleManifest {
        schema: SAMPLES_SCHEMA.into(),
        config_hash: inst.hash.clone(),
        n_sites: inst.cfg.model.n_sites(),
        policy: training_policy(&inst.cfg),
        samples: entries,
    };
    write_json(&sdir.join("manifest.json"), &m)
}

/// Reads a training set written by `run`, refusing a different configuration.
pub fn load_samples(dir: &Path, expected_hash: &str) -> Result<Vec<Sample>, CliError> {
    let sdir = dir.join("samples");
    let path = sdir.join("manifest.json");
    let s = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let m: SampleManifest = serde_json::from_str(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if m.config_hash != expected_hash {
        return Err(CliError::Config(format!("{} belongs to config {}, not {expected_hash}", path.display(), m.config_hash)));
    }
    m.samples
        .iter()
        .map(|e| {
            let psi = crate::formats::load_mps(&sdir.join(&e.psi0), m.policy)?;
            let phi = crate::formats::load_mps(&sdir.join(&e.phi0), m.policy)?;
            Ok(Sample::new(psi, phi)?)
        })
        .collect()
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    schema: &'static str,
    config_hash: &'a str,
    version: String,
    config: &'a ExperimentConfig,
    resolved_optimizer: ResolvedOptimizer,
    n_params: usize,
    n_placements: usize,
    dim: usize,
}

/// Full pipeline. Artifacts go to `out_dir` (or the configured directory).
pub fn run_experiment<E: Executor>(cfg: &ExperimentConfig, out_dir: Option<&Path>, exec: &E) -> Result<RunOutcome, CliError> {
    let t0 = Instant::now();
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.directory.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
    let inst = Instance::build(cfg)?;
    let opt = inst.resolved_optimizer();
    write_json(
        &dir.join("config.json"),
        &ConfigEcho {
            schema: "tnhvp.config/1",
            config_hash: &inst.hash,
            version: version_stamp(),
            config: cfg,
            resolved_optimizer: opt.clone(),
            n_params: inst.start.n_params(),
            n_placements: inst.start.n_placements(),
            dim: inst.dim(),
        },
    )?;
    write_samples(&dir, &inst)?;
    let test = inst.test_samples()?;
    let initial_test_risk = mean_risk(&fidelities(&inst.start, &test, exec)?);

    let mut sink = TraceSink {
        jsonl: create(&dir.join("trace.jsonl"))?,
        csv: create(&dir.join("trace.csv"))?,
        dir: &dir,
        inst: &inst,
        optimizer: opt.name(),
        checkpoint_every: cfg.output.checkpoint_every,
        error: None,
    };
    writeln!(sink.csv, "# config_hash={}\niter,loss,grad_norm,grad_evals,hvp_evals,derivative_evals,accepted,radius,rho", inst.hash)
        .map_err(|e| CliError::io("trace.csv", e))?;
    let mut obj = inst.objective(exec);
    let x0 = inst.start.params();
    let result = match &opt {
        ResolvedOptimizer::TrustRegion { config, .. } => trust_region_minimize_observed(&mut obj, x0, config, |r, x| sink.record(r, x)),
        ResolvedOptimizer::Adam { config, .. } => riemannian_adam_minimize_observed(&mut obj, x0, config, |r, x| sink.record(r, x)),
    }
    .map_err(|e| CliError::Numeric(format!("{} optimizer: {e}", opt.name())))?;
    if let Some(e) = sink.error.take() {
        return Err(e);
    }
    sink.jsonl.flush().map_err(|e| CliError::io("trace.jsonl", e))?;
    sink.csv.flush().map_err(|e| CliError::io("trace.csv", e))?;
    drop(sink);
    let counters = obj.counters;

    let final_circuit = inst.start.with_gates(result.point.0.clone())?;
    let last_iter = result.trace.records.last().map(|r| r.iter).unwrap_or(0);
    CircuitCheckpoint::new(&final_circuit, &inst.hash, Some(last_iter)).save(&dir.join("checkpoint.json"))?;
    let final_fid = fidelities(&final_circuit, &test, exec)?;
    let final_test_risk = mean_risk(&final_fid);
    let recs = &result.trace.records;
    let last = recs.last().expect("trace has the initial record");
    let summary = RunSummary {
        schema: SUMMARY_SCHEMA.into(),
        config_hash: inst.hash.clone(),
        version: version_stamp(),
        optimizer: opt.name().into(),
        stop_reason: result.stop,
        iterations: last.iter,
        n_params: inst.start.n_params(),
        dim: inst.dim(),
        initial_train_risk: recs[0].loss,
        final_train_risk: last.loss,
        initial_test_risk,
        final_test_risk,
        test_risk_reduction: initial_test_risk / final_test_risk,
        final_test_fidelities: final_fid,
        grad_evals: last.grad_evals,
        hvp_evals: last.hvp_evals,
        kernel_calls: counters.kernel_calls,
        accepted_steps: recs.iter().filter(|r| r.accepted == Some(true)).count(),
        loss_increases: result.trace.loss_increases(),
        max_unitarity_residual: recs.iter().map(|r| r.feasibility).fold(0.0, f64::max),
        workers: exec.workers(),
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    // One row per run; concatenating rows across layer counts gives risk vs layers.
    let mut csv = create(&dir.join("summary.csv"))?;
    writeln!(
        csv,
        "# config_hash={}\nmodel_sites,n_layers,optimizer,iterations,initial_test_risk,final_test_risk\n{},{},{},{},{:e},{:e}",
        inst.hash,
        cfg.model.n_sites(),
        cfg.ansatz.n_layers,
        opt.name(),
        last.iter,
        initial_test_risk,
        final_test_risk
    )
    .and_then(|_| csv.flush())
    .map_err(|e| CliError::io("summary.csv", e))?;
    Ok(RunOutcome { summary, result, final_circuit, directory: dir })
}

/// Loads a checkpoint for `cfg`, refusing a different config hash unless `force`.
pub fn load_checkpoint_for(path: &Path, cfg: &ExperimentConfig, force: bool) -> Result<BrickwallCircuit, CliError> {
    let ck = CircuitCheckpoint::load(path)?;
    let hash = cfg.hash();
    if ck.config_hash != hash && !force {
        return Err(CliError::Config(format!(
            "{} was produced under config {}, this config hashes to {hash}; pass --force to evaluate anyway",
            path.display(),
            ck.config_hash
        )));
    }
    let c = ck.to_circuit()?;
    check_layout(&c, cfg)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub config_hash: String,
    pub checkpoint: Option<PathBuf>,
    pub n_test_samples: usize,
    pub test_seed: u64,
    pub mean_risk: f64,
    pub fidelities: Vec<f64>,
}

/// Test-set risk of a checkpoint, or of the configured initial ansatz.
pub fn evaluate_test_risk<E: Executor>(cfg: &ExperimentConfig, checkpoint: Option<&Path>, force: bool, exec: &E) -> Result<EvalReport, CliError> {
    let model = cfg.model()?;
    let reference = build_reference(cfg, &model)?;
    let circuit = match checkpoint {
        Some(p) => load_checkpoint_for(p, cfg, force)?,
        None => build_start(cfg, &model, &reference)?,
    };
    let e = &cfg.evaluation;
    let (test, _) = make_samples(cfg, &reference, e.n_test_samples, split_seed(e.test_seed, TEST_STREAM))?;
    let fid = fidelities(&circuit, &test, exec)?;
    Ok(EvalReport {
        schema: EVAL_SCHEMA.into(),
        config_hash: cfg.hash(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        n_test_samples: e.n_test_samples,
        test_seed: e.test_seed,
        mean_risk: mean_risk(&fid),
        fidelities: fid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgSummary {
    #[serde(flatten)]
    pub probe: CgProbe,
    pub iterations: usize,
    /// Iteration budget counted as "the first quarter": `ceil(dim / 4)`.
    pub quarter_iters: usize,
    /// Best model decrease reached within `quarter_iters` iterations over the
    /// decrease at the last CG iterate. Plain CG oscillates on indefinite
    /// Hessians, so the value exactly at `quarter_iters` is not used.
    pub quarter_decrease_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOutput {
    pub schema: String,
    pub config_hash: String,
    pub checkpoint: Option<PathBuf>,
    pub dim: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub asymmetry: f64,
    #[serde(flatten)]
    pub report: SpectrumReport,
    /// `log10` of the ratio between the largest and smallest eigenvalue magnitude above `tol`.
    pub orders_of_magnitude: f64,
    pub cg: CgSummary,
}

pub fn cg_summary(probe: CgProbe, dim: usize) -> CgSummary {
    let quarter = dim.div_ceil(4);
    let last = probe.model_values.last().copied().unwrap_or(0.0);
    let best = probe.model_values.iter().take(quarter + 1).copied().fold(0.0, f64::min);
    let frac = if last < 0.0 { best / last } else { 1.0 };
    CgSummary { iterations: probe.residual_norms.len() - 1, quarter_iters: quarter, quarter_decrease_fraction: frac, probe }
}

/// Dense Riemannian Hessian of the training risk at a checkpoint (or the initial ansatz).
pub fn spectral_report<E: Executor>(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    force: bool,
    exec: &E,
) -> Result<SpectrumOutput, CliError> {
    let start = match checkpoint {
        Some(p) => Some(load_checkpoint_for(p, cfg, force)?),
        None => None,
    };
    let n_params = match &start {
        Some(c) => c.n_params(),
        None => {
            let a = &cfg.ansatz;
            if a.ti {
                a.n_layers
            } else {
                tnhvp::circuit::placement_count(cfg.model.n_sites(), a.n_layers)
            }
        }
    };
    let dim = 16 * n_params;
    let cap = cfg.spectral.dim_cap;
    if dim > cap {
        let hint = if cfg.ansatz.ti { String::new() } else { format!("; ti = true would give dimension {}", 16 * cfg.ansatz.n_layers) };
        return Err(CliError::Config(format!(
            "Hessian dimension {dim} exceeds [spectral] dim_cap = {cap}; reduce ansatz n_layers{hint}"
        )));
    }
    let inst = Instance::build_with_start(cfg, start)?;
    let mut obj = inst.objective(exec);
    let x = inst.start.params();
    let (loss, g) = obj.gradient(&x)?;
    let h = materialize_problem_hessian(&mut obj, &x, cap)?;
    let report = spectrum_report(&h);
    let gc = TangentBasis::at(&x)?.coords(&g);
    let iters = cfg.spectral.cg_iters.unwrap_or(dim);
    let probe = cg_convergence_probe(&h, &gc, iters)?;
    Ok(SpectrumOutput {
        schema: SPECTRUM_SCHEMA.into(),
        config_hash: inst.hash.clone(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        dim,
        loss,
        grad_norm: g.norm(),
        asymmetry: h.asymmetry,
        orders_of_magnitude: report.condition_number.log10(),
        report,
        cg: cg_summary(probe, dim),
    })
}

pub fn write_spectrum(dir: &Path, s: &SpectrumOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    write_json(&dir.join("spectrum.json"), s)?;
    let mut ev = create(&dir.join("eigenvalues.csv"))?;
    let mut body = format!("# config_hash={}\nindex,eigenvalue,abs\n", s.config_hash);
    for (i, l) in s.report.eigenvalues.iter().enumerate() {
        body.push_str(&format!("{i},{l:e},{:e}\n", l.abs()));
    }
    ev.write_all(body.as_bytes()).and_then(|_| ev.flush()).map_err(|e| CliError::io("eigenvalues.csv", e))?;
    let mut cg = create(&dir.join("cg_probe.csv"))?;
    let mut body = format!("# config_hash={}\niter,residual_norm,model_value\n", s.config_hash);
    for (i, (r, m)) in s.cg.probe.residual_norms.iter().zip(&s.cg.probe.model_values).enumerate() {
        body.push_str(&format!("{i},{r:e},{m:e}\n"));
    }
    cg.write_all(body.as_bytes()).and_then(|_| cg.flush()).map_err(|e| CliError::io("cg_probe.csv", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub schema: String,
    pub config_hash: String,
    pub eps: f64,
    pub n_coords: usize,
    /// `‖g_S − d_S‖ / ‖g_S‖` over the sampled real coordinates `S`.
    pub gradient_rel_error: f64,
    /// `‖H[V] − (∇f(G+εV) − ∇f(G−εV))/2ε‖ / ‖H[V]‖`.
    pub hvp_rel_error: f64,
    /// `|⟨u, H_R v⟩ − ⟨H_R u, v⟩|` for random tangents of unit norm.
    pub riemannian_symmetry: f64,
    pub gradient_tol: f64,
    pub hvp_tol: f64,
    pub symmetry_tol: f64,
    pub passed: bool,
}

pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const HVP_REL_TOL: f64 = 1e-4;
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Finite-difference audit of the analytic gradient and HVP at `x`.
pub fn check_derivatives_at<E: Executor>(
    inst: &Instance,
    x: &GateVec,
    n_coords: usize,
    eps: f64,
    seed: u64,
    exec: &E,
) -> Result<DerivativeReport, CliError> {
    let mut obj = inst.objective(exec);
    let mut rng = rng_from_seed(seed);
    let v = GateVec(x.iter().map(|_| random_cmat4(&mut rng)).collect());
    let r = obj.euclidean(x, Some(&v))?;
    let circuit = |y: &GateVec| inst.start.with_gates(y.0.clone());
    let risk = |y: &GateVec| risk_value(&circuit(y)?, &inst.train, exec);

    let n_real = 32 * x.len();
    let mut coords: Vec<usize> = Vec::new();
    let mut k = 0;
    while coords.len() < n_coords.min(n_real) {
        let c = (split_seed(seed, k) % n_real as u64) as usize;
        if !coords.contains(&c) {
            coords.push(c);
        }
        k += 1;
    }
    let analytic = r.grad.to_real();
    let (mut num, mut den) = (0.0, 0.0);
    for &c in &coords {
        let d: f64 = tnhvp::fd::fd_partial(risk, x, c, eps)?;
        num += (analytic[c] - d).powi(2);
        den += analytic[c].powi(2);
    }
    let gradient_rel_error = (num / den.max(f64::MIN_POSITIVE)).sqrt();

    let grad_at = |y: &GateVec| -> tnhvp::Result<GateVec> {
        let c = circuit(y)?;
        Ok(tnhvp::cost::empirical_risk(&c, &inst.train, None, &Default::default(), exec)?.grad)
    };
    let fd_h = tnhvp::fd::fd_directional_vec(grad_at, x, &v, eps)?;
    let mut diff = r.hvp.clone();
    diff.axpy(C64::new(-1.0, 0.0), &fd_h);
    let hvp_rel_error = diff.norm() / r.hvp.norm().max(f64::MIN_POSITIVE);

    let tangent = |rng: &mut tnhvp::complex::SeededRng| -> Result<GateVec, CliError> {
        let w = project_all(x, &GateVec(x.iter().map(|_| random_cmat4(rng)).collect()))?;
        let n = w.norm();
        Ok(w.scaled(C64::new(1.0 / n, 0.0)))
    };
    let (u, w) = (tangent(&mut rng)?, tangent(&mut rng)?);
    let hu = obj.hessian_vec(x, &u)?;
    let hw = obj.hessian_vec(x, &w)?;
    let riemannian_symmetry = (u.re_dot(&hw) - hu.re_dot(&w)).abs();
    let passed = gradient_rel_error <= GRADIENT_REL_TOL && hvp_rel_error <= HVP_REL_TOL && riemannian_symmetry <= SYMMETRY_TOL;
    Ok(DerivativeReport {
        schema: DERIVATIVES_SCHEMA.into(),
        config_hash: inst.hash.clone(),
        eps,
        n_coords: coords.len(),
        gradient_rel_error,
        hvp_rel_error,
        riemannian_symmetry,
        gradient_tol: GRADIENT_REL_TOL,
        hvp_tol: HVP_REL_TOL,
        symmetry_tol: SYMMETRY_TOL,
        passed,
    })
}

pub fn check_derivatives<E: Executor>(cfg: &ExperimentConfig, n_coords: usize, eps: f64, seed: u64, exec: &E) -> Result<DerivativeReport, CliError> {
    let inst = Instance::build(cfg)?;
    let x = inst.start.params();
    check_derivatives_at(&inst, &x, n_coords, eps, seed, exec)
}
