//! Two-pass evaluation of the overlap `T = φ̃^T G_K ⋯ G_1 ψ₀`, its gate
//! gradients `∂T/∂G_k` and the Hessian-vector product `H_T[V]`.
//!
//! Forward states `ψ^[k] = G_k ψ^[k-1]` and tangents
//! `Dψ^[k] = G_k Dψ^[k-1] + V_k ψ^[k-1]` (with `Dψ^[0] = 0`) are propagated
//! alongside backward states `φ̃^[j+1] = G^T φ̃^[j]` and tangents
//! `Dφ̃^[j+1] = G^T Dφ̃^[j] + V^T φ̃^[j]`, where the backward recursion consumes
//! gates from `K` down to `1`. At gate `k`
//!
//! * `∂T/∂G_k = E(φ̃^[K-k], ψ^[k-1])`,
//! * `H_T[V]_k = E(Dφ̃^[K-k], ψ^[k-1]) + E(φ̃^[K-k], Dψ^[k-1])`,
//!
//! with `E(a, b)[P][Q]` the contraction of `a` and `b` over every index except
//! the gate's output (`P`, on `a`) and input (`Q`, on `b`) legs. Left and right
//! transfer blocks are cached per site and reused while the underlying site
//! tensors are unchanged, so consecutive gates only pay for what moved.
//!
//! Memory: one pass is cached (`K + 1` states and tangents, tangents at bond
//! up to `2·chi_max`); the other is computed on the fly. [`PassOrder`] selects
//! which pass is cached. Both orders produce the same numbers.

use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::BrickwallCircuit;
use crate::complex::{CMat4, GateVec, C64, ONE, ZERO};
use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul, matmul_tn, Mat};
use crate::mps::{add, inner, transfer_left, transfer_right, Mps, SiteTensor, Sweep, TruncationPolicy};
use crate::tangent::TangentPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PassOrder {
    /// Cache the forward pass, accumulate during the backward pass.
    #[default]
    ForwardFirst,
    /// Cache the backward pass, accumulate during the forward pass.
    BackwardFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TangentMode {
    /// Tangents share the gauge of their base state (block-triangular form).
    #[default]
    Augmented,
    /// Tangents are separate MPS updated by add-and-recompress to `2·chi_max`.
    RecursiveSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelOptions {
    pub pass_order: PassOrder,
    pub tangent_mode: TangentMode,
    /// Record `T` at every contraction depth (costs one extra contraction per gate).
    pub record_depth_overlaps: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KernelStats {
    pub forward_gate_applications: usize,
    pub backward_gate_applications: usize,
    /// Largest tangent bond dimension seen during the call.
    pub max_tangent_bond: usize,
    /// `T_d = φ̃^[K-d] · ψ^[d]` for `d = 0..=K` when requested.
    pub depth_overlaps: Vec<C64>,
    /// Accumulated discarded weight of all truncations in both passes.
    pub discarded_weight: f64,
}

/// Overlap with its gradient and HVP. Entries are per placement for
/// [`hvp_kernel`] and per parameter for [`hvp_kernel_ti`] / [`overlap_derivatives`].
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapDerivatives {
    pub overlap: C64,
    pub grad: GateVec,
    pub hvp: GateVec,
    pub stats: KernelStats,
}

enum Track {
    Plain(Mps),
    Augmented(TangentPair),
    Sum { state: Mps, tangent: Option<Mps> },
}

struct Snapshot {
    state: Mps,
    tangent: Option<Mps>,
}

impl Track {
    fn new(state: Mps, with_tangent: bool, mode: TangentMode) -> Track {
        match (with_tangent, mode) {
            (false, _) => Track::Plain(state),
            (true, TangentMode::Augmented) => Track::Augmented(TangentPair::zero(state)),
            (true, TangentMode::RecursiveSum) => Track::Sum { state, tangent: None },
        }
    }

    fn step(&mut self, gate: &CMat4, var: Option<&CMat4>, site: usize, sweep: Sweep) -> Result<f64> {
        match self {
            Track::Plain(m) => m.apply_gate_mut(gate, site, sweep),
            Track::Augmented(tp) => tp.propagate(gate, var, site, sweep),
            Track::Sum { state, tangent } => {
                let tpol = doubled(state.policy());
                let var = var.filter(|v| v.iter().any(|z| *z != ZERO));
                let zpsi = match var {
                    Some(z) => {
                        let mut m = state.clone().with_policy(tpol);
                        m.apply_gate_mut(z, site, sweep)?;
                        Some(m)
                    }
                    None => None,
                };
                let gd = match tangent.take() {
                    Some(mut d) => {
                        d.apply_gate_mut(gate, site, sweep)?;
                        Some(d)
                    }
                    None => None,
                };
                *tangent = match (gd, zpsi) {
                    (Some(a), Some(b)) => Some(add(&a, &b, ONE, ONE)?.0),
                    (a, b) => a.or(b),
                };
                state.apply_gate_mut(gate, site, sweep)
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        match self {
            Track::Plain(m) => Snapshot { state: m.clone(), tangent: None },
            Track::Augmented(tp) => Snapshot {
                state: tp.state().clone(),
                tangent: if tp.is_zero() { None } else { Some(tp.tangent_mps()) },
            },
            Track::Sum { state, tangent } => Snapshot { state: state.clone(), tangent: tangent.clone() },
        }
    }

    fn max_tangent_bond(&self) -> usize {
        match self {
            Track::Plain(_) => 0,
            Track::Augmented(tp) => tp.max_tangent_bond(),
            Track::Sum { tangent, .. } => tangent.as_ref().map(|t| t.max_bond()).unwrap_or(0),
        }
    }
}

fn doubled(p: TruncationPolicy) -> TruncationPolicy {
    TruncationPolicy { chi_max: 2 * p.chi_max, trunc_tol: p.trunc_tol }
}

#[derive(Default)]
struct TransferStack {
    keys: Vec<(u64, u64)>,
    mats: Vec<Mat>,
}

impl TransferStack {
    fn reset_base(&mut self) {
        if self.mats.is_empty() {
            self.mats.push(Mat::from_data(1, 1, vec![ONE]));
        }
    }

    /// Transfer block over sites `0..upto`.
    fn left(&mut self, bra: &[SiteTensor], ket: &[SiteTensor], upto: usize) -> &Mat {
        self.reset_base();
        let mut p = 0;
        while p < upto && p < self.keys.len() && self.keys[p] == (bra[p].id, ket[p].id) {
            p += 1;
        }
        self.keys.truncate(p);
        self.mats.truncate(p + 1);
        for q in p..upto {
            let next = transfer_left(&self.mats[q], &bra[q], &ket[q]);
            self.mats.push(next);
            self.keys.push((bra[q].id, ket[q].id));
        }
        &self.mats[upto]
    }

    /// Transfer block over sites `from..n`.
    fn right(&mut self, bra: &[SiteTensor], ket: &[SiteTensor], from: usize) -> &Mat {
        self.reset_base();
        let n = bra.len();
        let count = n - from;
        let mut p = 0;
        while p < count && p < self.keys.len() && self.keys[p] == (bra[n - 1 - p].id, ket[n - 1 - p].id) {
            p += 1;
        }
        self.keys.truncate(p);
        self.mats.truncate(p + 1);
        for q in p..count {
            let j = n - 1 - q;
            let next = transfer_right(&self.mats[q], &bra[j], &ket[j]);
            self.mats.push(next);
            self.keys.push((bra[j].id, ket[j].id));
        }
        &self.mats[count]
    }
}

#[derive(Default)]
struct EnvCache {
    left: TransferStack,
    right: TransferStack,
}

impl EnvCache {
    fn env(&mut self, bra: &Mps, ket: &Mps, s: usize) -> CMat4 {
        let l = self.left.left(&bra.sites, &ket.sites, s).clone();
        let r = self.right.right(&bra.sites, &ket.sites, s + 2);
        hole(&l, r, &bra.theta(s), &ket.theta(s))
    }
}

/// `E[P][Q] = Σ L[a,b] bra[a,P,d] R[d,f] ket[b,Q,f]`.
fn hole(l: &Mat, r: &Mat, bra: &Mat, ket: &Mat) -> CMat4 {
    let (bl, br) = (bra.rows / 2, bra.cols / 2);
    let (kl, kr) = (ket.rows / 2, ket.cols / 2);
    debug_assert_eq!((l.rows, l.cols, r.rows, r.cols), (bl, kl, br, kr));
    // T1[b, (P, d)] = Σ_a L[a, b] bra[a, (P, d)]
    let t1 = matmul_tn(&l.data, bl, kl, &bra.data, 4 * br);
    // Y[(b, P), f] = Σ_d T1[(b, P), d] R[d, f]
    let y = matmul(&t1.data, 4 * kl, br, &r.data, kr);
    let mut e = CMat4::zeros();
    for b in 0..kl {
        for p in 0..4 {
            let yrow = &y.data[(b * 4 + p) * kr..(b * 4 + p + 1) * kr];
            for q in 0..4 {
                let krow = &ket.data[(b * 4 + q) * kr..(b * 4 + q + 1) * kr];
                let mut acc = ZERO;
                for (x, z) in yrow.iter().zip(krow) {
                    acc += x * z;
                }
                e[(p, q)] += acc;
            }
        }
    }
    e
}

fn contract_with_gate(e: &CMat4, g: &CMat4) -> C64 {
    e.iter().zip(g.iter()).map(|(a, b)| a * b).sum()
}

struct Envs {
    phi: EnvCache,
    dphi: EnvCache,
    dpsi: EnvCache,
}

impl Envs {
    fn new() -> Self {
        Envs { phi: EnvCache::default(), dphi: EnvCache::default(), dpsi: EnvCache::default() }
    }

    /// Gradient and HVP contributions of one placement.
    fn at(&mut self, back: &Snapshot, fwd: &Snapshot, s: usize) -> (CMat4, CMat4) {
        let grad = self.phi.env(&back.state, &fwd.state, s);
        let mut hvp = CMat4::zeros();
        if let Some(dphi) = &back.tangent {
            hvp += self.dphi.env(dphi, &fwd.state, s);
        }
        if let Some(dpsi) = &fwd.tangent {
            hvp += self.dpsi.env(&back.state, dpsi, s);
        }
        (grad, hvp)
    }
}

fn validate(psi0: &Mps, phi0: &Mps, circuit: &BrickwallCircuit, direction: Option<&GateVec>) -> Result<Option<Vec<CMat4>>> {
    let n = circuit.n_qubits();
    if psi0.n_sites() != n || phi0.n_sites() != n {
        return Err(invalid("state and circuit qubit counts differ"));
    }
    direction.map(|d| circuit.expand(d.as_slice())).transpose()
}

/// Untied kernel: one gradient/HVP entry per placement.
pub fn hvp_kernel(
    psi0: &Mps,
    phi0: &Mps,
    circuit: &BrickwallCircuit,
    direction: Option<&GateVec>,
    opts: &KernelOptions,
) -> Result<OverlapDerivatives> {
    let dirs = validate(psi0, phi0, circuit, direction)?;
    let kk = circuit.n_placements();
    if kk == 0 {
        return Ok(OverlapDerivatives {
            overlap: inner(phi0, psi0)?,
            grad: GateVec(vec![]),
            hvp: GateVec(vec![]),
            stats: KernelStats::default(),
        });
    }
    let with_tangent = dirs.is_some();
    let gate = |k: usize| *circuit.gate_at(k);
    let var = |k: usize| dirs.as_ref().map(|d| d[k]);
    let site = |k: usize| circuit.placements()[k].left_site;
    let mut stats = KernelStats::default();
    let mut grad = vec![CMat4::zeros(); kk];
    let mut hvp = vec![CMat4::zeros(); kk];
    let mut envs = Envs::new();
    let mut depth = vec![ZERO; kk + 1];
    let bond_cap = 2 * psi0.policy().chi_max.max(phi0.policy().chi_max);

    let check_bond = |t: &Track, stats: &mut KernelStats| -> Result<()> {
        let b = t.max_tangent_bond();
        stats.max_tangent_bond = stats.max_tangent_bond.max(b);
        if b > bond_cap {
            return Err(Error::Internal(alloc::format!("tangent bond {b} exceeds {bond_cap}")));
        }
        Ok(())
    };

    // Position `i` in `order` is the i-th gate applied; depth overlaps are
    // indexed by position.
    let order = circuit.traversal();
    match opts.pass_order {
        PassOrder::ForwardFirst => {
            let mut fwd = Track::new(psi0.clone(), with_tangent, opts.tangent_mode);
            let mut cache = Vec::with_capacity(kk + 1);
            cache.push(fwd.snapshot());
            for &(k, sweep) in &order {
                stats.discarded_weight += fwd.step(&gate(k), var(k).as_ref(), site(k), sweep)?;
                stats.forward_gate_applications += 1;
                check_bond(&fwd, &mut stats)?;
                cache.push(fwd.snapshot());
            }
            let mut back = Track::new(phi0.clone(), with_tangent, opts.tangent_mode);
            for (i, &(k, sweep)) in order.iter().enumerate().rev() {
                let b = back.snapshot();
                if opts.record_depth_overlaps {
                    depth[i + 1] = inner(&b.state, &cache[i + 1].state)?;
                }
                let (g, h) = envs.at(&b, &cache[i], site(k));
                grad[k] = g;
                hvp[k] = h;
                let vt = var(k).map(|v| v.transpose());
                stats.discarded_weight += back.step(&gate(k).transpose(), vt.as_ref(), site(k), sweep.flip())?;
                stats.backward_gate_applications += 1;
                check_bond(&back, &mut stats)?;
            }
            if opts.record_depth_overlaps {
                depth[0] = inner(&back.snapshot().state, &cache[0].state)?;
            }
        }
        PassOrder::BackwardFirst => {
            let mut back = Track::new(phi0.clone(), with_tangent, opts.tangent_mode);
            let mut cache: Vec<Option<Snapshot>> = (0..=kk).map(|_| None).collect();
            for (i, &(k, sweep)) in order.iter().enumerate().rev() {
                cache[i + 1] = Some(back.snapshot());
                let vt = var(k).map(|v| v.transpose());
                stats.discarded_weight += back.step(&gate(k).transpose(), vt.as_ref(), site(k), sweep.flip())?;
                stats.backward_gate_applications += 1;
                check_bond(&back, &mut stats)?;
            }
            cache[0] = Some(back.snapshot());
            let cached = |j: usize| cache[j].as_ref().expect("backward cache is complete");
            let mut fwd = Track::new(psi0.clone(), with_tangent, opts.tangent_mode);
            if opts.record_depth_overlaps {
                depth[0] = inner(&cached(0).state, psi0)?;
            }
            for (i, &(k, sweep)) in order.iter().enumerate() {
                let f = fwd.snapshot();
                let (g, h) = envs.at(cached(i + 1), &f, site(k));
                grad[k] = g;
                hvp[k] = h;
                stats.discarded_weight += fwd.step(&gate(k), var(k).as_ref(), site(k), sweep)?;
                stats.forward_gate_applications += 1;
                check_bond(&fwd, &mut stats)?;
                if opts.record_depth_overlaps {
                    depth[i + 1] = inner(&cached(i + 1).state, &fwd.snapshot().state)?;
                }
            }
        }
    }

    let last = order[kk - 1].0;
    let overlap = contract_with_gate(&grad[last], &gate(last));
    if opts.record_depth_overlaps {
        stats.depth_overlaps = depth;
    }
    Ok(OverlapDerivatives { overlap, grad: GateVec(grad), hvp: GateVec(hvp), stats })
}

/// Translationally invariant kernel: entries summed over each layer's placements.
pub fn hvp_kernel_ti(
    psi0: &Mps,
    phi0: &Mps,
    circuit: &BrickwallCircuit,
    direction: Option<&GateVec>,
    opts: &KernelOptions,
) -> Result<OverlapDerivatives> {
    if !circuit.ti() {
        return Err(invalid("hvp_kernel_ti needs a translationally invariant circuit"));
    }
    overlap_derivatives(psi0, phi0, circuit, direction, opts)
}

/// Kernel with entries per circuit parameter (placements of a tied layer summed).
pub fn overlap_derivatives(
    psi0: &Mps,
    phi0: &Mps,
    circuit: &BrickwallCircuit,
    direction: Option<&GateVec>,
    opts: &KernelOptions,
) -> Result<OverlapDerivatives> {
    let mut od = hvp_kernel(psi0, phi0, circuit, direction, opts)?;
    if circuit.ti() {
        od.grad = GateVec(circuit.reduce(od.grad.as_slice()));
        od.hvp = GateVec(circuit.reduce(od.hvp.as_slice()));
    }
    Ok(od)
}

/// `T` alone: one forward sweep and a final contraction.
pub fn overlap_only(psi0: &Mps, phi0: &Mps, circuit: &BrickwallCircuit) -> Result<C64> {
    let psi = crate::circuit::apply_circuit(circuit, psi0, false)?;
    inner(phi0, &psi)
}
