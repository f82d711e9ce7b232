//! Acceptance suite. Runs every criterion in order and prints one
//! `[nn] PASS|FAIL` line per criterion; exits non-zero if any fails.
//!
//! Benchmark runs (criteria 7, 9-12) share one trust-region and one ADAM run
//! of the bundled Ising desk config.

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use tempfile::TempDir;
use tnhvp::circuit::{apply_circuit, build_brickwall, placement_count};
use tnhvp::complex::{haar_product_state, haar_unitary_gate, random_cmat4, rng_from_seed};
use tnhvp::kernel::{hvp_kernel, hvp_kernel_ti, KernelOptions, PassOrder, TangentMode};
use tnhvp::manifold::project;
use tnhvp::oracle::{substitution_hvp, DenseState};
use tnhvp::{BrickwallCircuit, CMat4, GateVec, Mps, TruncationPolicy};
use tnhvp_cli::pipeline::{check_derivatives_at, run_experiment, spectral_report, DerivativeReport, Instance, RunOutcome};
use tnhvp_cli::{ExperimentConfig, PoolExecutor};

const GRADIENT_TOL: f64 = 1e-5;
const HVP_FD_TOL: f64 = 1e-4;
const SUBSTITUTION_TOL: f64 = 1e-9;
const PASS_ORDER_TOL: f64 = 1e-10;
const TANGENT_BOND_CAP: usize = 32;
const TANGENT_MODE_TOL: f64 = 1e-8;
const DEPTH_TOL: f64 = 1e-10;
const PROJECTION_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-8;
const UNITARITY_TOL: f64 = 1e-10;
const TI_TOL: f64 = 1e-10;
const RISK_REDUCTION: f64 = 10.0;
const BENCH_WALL_S: f64 = 600.0;
const SPECTRUM_DECADES: f64 = 4.0;
const CG_FRACTION: f64 = 0.9;

const FD_EPS: f64 = 1e-5;
const FD_COORDS: usize = 24;
const SEEDS: [u64; 5] = [11, 23, 37, 41, 59];

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn exact() -> TruncationPolicy {
    TruncationPolicy::new(1 << 16, 0.0).unwrap()
}

fn random_gates(n: usize, seed: u64) -> Vec<CMat4> {
    (0..n).map(|i| haar_unitary_gate(seed.wrapping_mul(7919) + i as u64)).collect()
}

fn random_circuit(n_qubits: usize, layers: usize, seed: u64) -> BrickwallCircuit {
    build_brickwall(n_qubits, layers, random_gates(placement_count(n_qubits, layers), seed), false).unwrap()
}

/// Product state entangled by a random 4-layer circuit.
fn entangled_state(n: usize, seed: u64, policy: TruncationPolicy) -> Mps {
    let psi = haar_product_state(n, seed, policy).unwrap();
    apply_circuit(&random_circuit(n, 4, seed + 1), &psi, false).unwrap()
}

fn random_direction(len: usize, seed: u64) -> GateVec {
    let mut rng = rng_from_seed(seed);
    GateVec((0..len).map(|_| random_cmat4(&mut rng)).collect())
}

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
[model]
kind = "ising"
n_sites = 6
j = 1.0
g = 0.75
h = 0.6
t = 0.4

[reference]
order = 4
n_steps = 2
chi_ref = 64
trunc_tol = 0.0

[ansatz]
n_layers = 3

[training]
n_samples = 2
seed = {seed}
chi_max = 64
trunc_tol = 0.0

[optimizer]
kind = "trust_region"
"#
    ))
    .unwrap()
}

struct Ctx {
    tmp: TempDir,
    derivatives: OnceCell<Vec<DerivativeReport>>,
    ising_tr: OnceCell<(ExperimentConfig, RunOutcome)>,
    ising_adam: OnceCell<RunOutcome>,
}

impl Ctx {
    fn derivatives(&self) -> &[DerivativeReport] {
        self.derivatives.get_or_init(|| {
            let exec = PoolExecutor::new(1).unwrap();
            SEEDS
                .iter()
                .map(|&seed| {
                    let inst = Instance::build(&small_config(seed)).unwrap();
                    let x = GateVec(random_gates(inst.start.n_params(), seed));
                    check_derivatives_at(&inst, &x, FD_COORDS, FD_EPS, seed, &exec).unwrap()
                })
                .collect()
        })
    }

    fn bench(&self, file: &str, sub: &str, workers: usize) -> (ExperimentConfig, RunOutcome) {
        let cfg = ExperimentConfig::load(&configs().join(file)).unwrap();
        let exec = PoolExecutor::new(workers).unwrap();
        let out = run_experiment(&cfg, Some(&self.tmp.path().join(sub)), &exec).unwrap();
        (cfg, out)
    }

    fn ising_tr(&self) -> &(ExperimentConfig, RunOutcome) {
        self.ising_tr.get_or_init(|| self.bench("ising_desk.toml", "ising_tr", 1))
    }

    fn ising_adam(&self) -> &RunOutcome {
        self.ising_adam.get_or_init(|| self.bench("ising_desk_adam.toml", "ising_adam", 1).1)
    }
}

type Outcome = (bool, String);

fn c01_gradient_fd(ctx: &Ctx) -> Outcome {
    let worst = ctx.derivatives().iter().map(|r| r.gradient_rel_error).fold(0.0, f64::max);
    let coords = ctx.derivatives()[0].n_coords;
    (
        worst <= GRADIENT_TOL && coords >= 20,
        format!("max relative error {worst:.2e} over {} instances x {coords} coords (tol {GRADIENT_TOL:.0e})", SEEDS.len()),
    )
}

fn c02_hvp_fd(ctx: &Ctx) -> Outcome {
    let worst = ctx.derivatives().iter().map(|r| r.hvp_rel_error).fold(0.0, f64::max);
    (worst <= HVP_FD_TOL, format!("max relative error {worst:.2e} (tol {HVP_FD_TOL:.0e})"))
}

fn c03_substitution_oracle(_: &Ctx) -> Outcome {
    // A 6-qubit brickwall has 3 + 2 gates per layer pair; 4 layers give K = 10.
    let mut worst = 0.0f64;
    let mut k = 0;
    for seed in SEEDS {
        let c = random_circuit(6, 4, seed);
        k = c.n_placements();
        let (psi, phi) = (entangled_state(6, seed + 100, exact()), entangled_state(6, seed + 200, exact()));
        let v = random_direction(k, seed + 300);
        let od = hvp_kernel(&psi, &phi, &c, Some(&v), &KernelOptions::default()).unwrap();
        let dense = substitution_hvp(&c, &DenseState::from_mps(&psi).unwrap(), &DenseState::from_mps(&phi).unwrap(), &v).unwrap();
        worst = worst.max(od.hvp.max_abs_diff(&dense));
    }
    (worst <= SUBSTITUTION_TOL, format!("n=6, K={k}: max |kernel - substitution| {worst:.2e} (tol {SUBSTITUTION_TOL:.0e})"))
}

fn c04_pass_orders(_: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let c = random_circuit(6, 5, seed);
        let (psi, phi) = (entangled_state(6, seed + 100, exact()), entangled_state(6, seed + 200, exact()));
        let v = random_direction(c.n_params(), seed + 300);
        let run = |pass_order| {
            let opts = KernelOptions { pass_order, ..Default::default() };
            hvp_kernel(&psi, &phi, &c, Some(&v), &opts).unwrap()
        };
        let (f, b) = (run(PassOrder::ForwardFirst), run(PassOrder::BackwardFirst));
        worst = worst.max((f.overlap - b.overlap).norm()).max(f.grad.max_abs_diff(&b.grad)).max(f.hvp.max_abs_diff(&b.hvp));
    }
    (worst <= PASS_ORDER_TOL, format!("max difference {worst:.2e} over {} instances (tol {PASS_ORDER_TOL:.0e})", SEEDS.len()))
}

fn c05_bond_bound(_: &Ctx) -> Outcome {
    let chi16 = TruncationPolicy::new(16, 0.0).unwrap();
    let c = random_circuit(10, 7, 5);
    let (psi, phi) = (entangled_state(10, 105, chi16), entangled_state(10, 205, chi16));
    let v = random_direction(c.n_params(), 305);
    let od = hvp_kernel(&psi, &phi, &c, Some(&v), &KernelOptions::default()).unwrap();
    let max_bond = od.stats.max_tangent_bond;

    let c8 = random_circuit(8, 5, 6);
    let (psi8, phi8) = (entangled_state(8, 106, exact()), entangled_state(8, 206, exact()));
    let v8 = random_direction(c8.n_params(), 306);
    let run = |tangent_mode| {
        let opts = KernelOptions { tangent_mode, ..Default::default() };
        hvp_kernel(&psi8, &phi8, &c8, Some(&v8), &opts).unwrap()
    };
    let diff = run(TangentMode::Augmented).hvp.max_abs_diff(&run(TangentMode::RecursiveSum).hvp);
    (
        max_bond <= TANGENT_BOND_CAP && diff <= TANGENT_MODE_TOL,
        format!(
            "n=10, 7 layers, chi 16: max tangent bond {max_bond} (cap {TANGENT_BOND_CAP}); n=8 augmented vs recursive {diff:.2e} (tol {TANGENT_MODE_TOL:.0e})"
        ),
    )
}

fn c06_depth_invariance(_: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    let mut depths = 0;
    for seed in SEEDS {
        let c = random_circuit(6, 6, seed);
        let (psi, phi) = (entangled_state(6, seed + 100, exact()), entangled_state(6, seed + 200, exact()));
        let opts = KernelOptions { record_depth_overlaps: true, ..Default::default() };
        let od = hvp_kernel(&psi, &phi, &c, None, &opts).unwrap();
        let t = &od.stats.depth_overlaps;
        depths = t.len();
        assert_eq!(depths, c.n_placements() + 1);
        worst = t.iter().map(|tk| (tk - t[0]).norm()).fold(worst, f64::max);
    }
    (worst <= DEPTH_TOL, format!("{depths} depths: max |T_k - T_0| {worst:.2e} (tol {DEPTH_TOL:.0e})"))
}

fn c07_geometry(ctx: &Ctx) -> Outcome {
    let mut idem = 0.0f64;
    let mut rng = rng_from_seed(7);
    for i in 0..200 {
        let g = haar_unitary_gate(1000 + i);
        let v = random_cmat4(&mut rng);
        let p = project(&g, &v).unwrap();
        idem = (project(&g, &p).unwrap() - p).iter().map(|z| z.norm()).fold(idem, f64::max);
    }
    let sym = ctx.derivatives().iter().map(|r| r.riemannian_symmetry).fold(0.0, f64::max);
    let unit = [&ctx.ising_tr().1, ctx.ising_adam()].iter().map(|o| o.summary.max_unitarity_residual).fold(0.0, f64::max);
    (
        idem <= PROJECTION_TOL && sym <= SYMMETRY_TOL && unit <= UNITARITY_TOL,
        format!(
            "idempotency {idem:.2e} (tol {PROJECTION_TOL:.0e}); |<u,Hv>-<Hu,v>| {sym:.2e} (tol {SYMMETRY_TOL:.0e}); iterate unitarity {unit:.2e} (tol {UNITARITY_TOL:.0e})"
        ),
    )
}

fn c08_ti_kernel(_: &Ctx) -> Outcome {
    let (n, layers) = (6, 3);
    let mut worst = 0.0f64;
    let mut worst_dense = 0.0f64;
    for seed in SEEDS {
        let layer_gates = random_gates(layers, seed);
        let ti = build_brickwall(n, layers, layer_gates.clone(), true).unwrap();
        let v = random_direction(layers, seed + 300);
        // Untied circuit and expanded direction built by hand: layer l holds
        // floor((n - l%2) / 2) gates.
        let per_layer: Vec<usize> = (0..layers).map(|l| (n - l % 2) / 2).collect();
        let untied_gates: Vec<CMat4> = per_layer.iter().enumerate().flat_map(|(l, &m)| std::iter::repeat(layer_gates[l]).take(m)).collect();
        let expanded = GateVec(per_layer.iter().enumerate().flat_map(|(l, &m)| std::iter::repeat(v.0[l]).take(m)).collect());
        let untied = build_brickwall(n, layers, untied_gates, false).unwrap();
        let (psi, phi) = (entangled_state(n, seed + 100, exact()), entangled_state(n, seed + 200, exact()));

        let tied = hvp_kernel_ti(&psi, &phi, &ti, Some(&v), &KernelOptions::default()).unwrap();
        let flat = hvp_kernel(&psi, &phi, &untied, Some(&expanded), &KernelOptions::default()).unwrap();
        let dense = substitution_hvp(&untied, &DenseState::from_mps(&psi).unwrap(), &DenseState::from_mps(&phi).unwrap(), &expanded).unwrap();
        let sum = |xs: &GateVec| -> GateVec {
            let mut out = Vec::new();
            let mut k = 0;
            for &m in &per_layer {
                out.push(xs.0[k..k + m].iter().fold(CMat4::zeros(), |a, b| a + b));
                k += m;
            }
            GateVec(out)
        };
        worst = worst
            .max((tied.overlap - flat.overlap).norm())
            .max(tied.grad.max_abs_diff(&sum(&flat.grad)))
            .max(tied.hvp.max_abs_diff(&sum(&flat.hvp)));
        worst_dense = worst_dense.max(tied.hvp.max_abs_diff(&sum(&dense)));
    }
    (
        worst <= TI_TOL && worst_dense <= SUBSTITUTION_TOL,
        format!("n=6, L=3: tied vs summed untied {worst:.2e} (tol {TI_TOL:.0e}); vs summed dense substitution {worst_dense:.2e}"),
    )
}

fn accepted_monotone(o: &RunOutcome) -> bool {
    let losses: Vec<f64> =
        o.result.trace.records.iter().filter(|r| r.accepted != Some(false)).map(|r| r.loss).collect();
    losses.windows(2).all(|w| w[1] <= w[0])
}

fn c09_benchmarks(ctx: &Ctx) -> Outcome {
    let (_, ising) = ctx.ising_tr();
    let t0 = Instant::now();
    let (_, heis) = ctx.bench("heisenberg_desk.toml", "heisenberg_tr", 1);
    let heis_wall = t0.elapsed().as_secs_f64();
    let ok = |o: &RunOutcome, wall: f64| {
        o.summary.final_test_risk <= o.summary.initial_test_risk / RISK_REDUCTION && accepted_monotone(o) && wall <= BENCH_WALL_S
    };
    let line = |name: &str, o: &RunOutcome, wall: f64| {
        let s = &o.summary;
        format!(
            "{name} test risk {:.3e} -> {:.3e} ({:.0}x, need {RISK_REDUCTION}x), accepted losses monotone {}, {wall:.0} s",
            s.initial_test_risk,
            s.final_test_risk,
            s.test_risk_reduction,
            accepted_monotone(o)
        )
    };
    (
        ok(ising, ising.summary.wall_time_s) && ok(&heis, heis_wall),
        format!("{}; {}", line("Ising n=12", ising, ising.summary.wall_time_s), line("Heisenberg n=10", &heis, heis_wall)),
    )
}

fn c10_optimizer_comparison(ctx: &Ctx) -> Outcome {
    let adam = ctx.ising_adam();
    let tr = &ctx.ising_tr().1;
    let (adam_up, tr_up) = (adam.result.trace.loss_increases(), tr.result.trace.loss_increases());
    (
        adam_up >= 1 && tr_up == 0 && accepted_monotone(tr),
        format!("ADAM (step 0.01) loss increases {adam_up} over {} iterations; trust-region increases {tr_up}", adam.summary.iterations),
    )
}

fn c11_spectrum(ctx: &Ctx) -> Outcome {
    let (cfg, out) = ctx.ising_tr();
    let mid = out.summary.iterations / 2;
    let ck = out.directory.join(format!("checkpoint_{mid:05}.json"));
    let s = spectral_report(cfg, Some(&ck), false, &PoolExecutor::new(1).unwrap()).unwrap();
    (
        s.asymmetry <= SYMMETRY_TOL && s.orders_of_magnitude >= SPECTRUM_DECADES && s.cg.quarter_decrease_fraction >= CG_FRACTION,
        format!(
            "iteration {mid} snapshot, dim {}: asymmetry {:.2e}, spectrum spans {:.1} decades ({} negative), CG reaches {:.0}% of its decrease within {} iterations",
            s.dim,
            s.asymmetry,
            s.orders_of_magnitude,
            s.report.n_negative,
            100.0 * s.cg.quarter_decrease_fraction,
            s.cg.quarter_iters
        ),
    )
}

fn c12_determinism(ctx: &Ctx) -> Outcome {
    let one = &ctx.ising_tr().1;
    let (_, eight) = ctx.bench("ising_desk.toml", "ising_tr_8", 8);
    let same = |f: &str| std::fs::read(one.directory.join(f)).unwrap() == std::fs::read(eight.directory.join(f)).unwrap();
    let files = ["trace.jsonl", "trace.csv", "checkpoint.json"];
    let identical = files.iter().all(|f| same(f));
    (
        identical && one.summary.final_test_risk == eight.summary.final_test_risk,
        format!("1 vs 8 workers: {} byte-identical, final test risk equal", files.join(", ")),
    )
}

fn main() {
    let ctx = Ctx { tmp: TempDir::new().unwrap(), derivatives: OnceCell::new(), ising_tr: OnceCell::new(), ising_adam: OnceCell::new() };
    let criteria: [(&str, fn(&Ctx) -> Outcome); 12] = [
        ("gradient vs finite differences", c01_gradient_fd),
        ("HVP vs finite differences", c02_hvp_fd),
        ("HVP vs substitution oracle", c03_substitution_oracle),
        ("pass-order equivalence", c04_pass_orders),
        ("tangent bond bound", c05_bond_bound),
        ("depth invariance", c06_depth_invariance),
        ("Riemannian geometry", c07_geometry),
        ("translation-invariant kernel", c08_ti_kernel),
        ("desk compression benchmarks", c09_benchmarks),
        ("optimizer comparison", c10_optimizer_comparison),
        ("spectral diagnostics", c11_spectrum),
        ("determinism across workers", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(|| f(&ctx))) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        failed += usize::from(!pass);
        println!("[{:02}] {} {name} ({:.1} s): {detail}", i + 1, if pass { "PASS" } else { "FAIL" }, t0.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
