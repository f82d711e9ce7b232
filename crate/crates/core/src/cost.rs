//! Hilbert-Schmidt cost and its derivatives.
//!
//! The minimized objective is the empirical risk
//! `f(G) = 1 − (1/S) Σ_s |T_s|²` with `T_s = φ̃_s^T U(G) ψ_s`. Gradients are
//! reported in the convention `∇f = ∂f/∂Re G + i ∂f/∂Im G`, so that
//! `f(G + εV) = f(G) + ε Re⟨∇f, V⟩ + O(ε²)` with `⟨A, B⟩ = tr(A†B)`.
//!
//! With `E_k = ∂T/∂G_k` and `H_T[V]_k` from the kernel, per sample:
//!
//! | quantity | value |
//! |---|---|
//! | `∇L_F` | `−conj(E_k)` |
//! | `H_F[V]` | `−conj(H_T[V]_k)` |
//! | `Ω` | `−Σ_k ⟨∇_k L_F, V_k⟩ = Σ_k Σ_ij (E_k)_ij (V_k)_ij = DT[V]` |
//! | `L_HS` | `1 − |T|²` |
//! | `∇L_HS` | `2 T ∇L_F` |
//! | `H_HS[V]` | `2 (Ω ∇L_F + T H_F[V])` |
//!
//! Every row was fixed against central differences of `1 − |T|²`.

use alloc::vec::Vec;

use crate::circuit::{apply_circuit, BrickwallCircuit};
use crate::complex::{hs_inner, GateVec, C64, ZERO};
use crate::error::{invalid, Result};
use crate::exec::Executor;
use crate::kernel::{overlap_derivatives, overlap_only, KernelOptions, OverlapDerivatives};
use crate::mps::{Mps, TruncationPolicy};

/// Training pair: input `ψ₀` and the dual label `φ̃₀ = conj(U_ref ψ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub psi0: Mps,
    pub phi0: Mps,
}

impl Sample {
    pub fn new(psi0: Mps, phi0: Mps) -> Result<Sample> {
        if psi0.n_sites() != phi0.n_sites() {
            return Err(invalid("sample input and label have different sizes"));
        }
        Ok(Sample { psi0, phi0 })
    }

    /// Labels `ψ₀` with the reference circuit, applied at `chi_ref`.
    pub fn from_reference(psi0: Mps, reference: &BrickwallCircuit, chi_ref: TruncationPolicy) -> Result<Sample> {
        let target = apply_circuit(reference, &psi0.clone().with_policy(chi_ref), false)?;
        Sample::new(psi0, target.conj().with_policy(chi_ref))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDerivatives {
    pub loss: f64,
    pub grad: GateVec,
    pub hvp: GateVec,
    pub omega: C64,
    pub overlap: C64,
}

/// `Ω = −Σ_k ⟨∇_k L_F, V_k⟩`.
pub fn omega(grad_lf: &GateVec, direction: &GateVec) -> Result<C64> {
    if grad_lf.len() != direction.len() {
        return Err(invalid("Ω: gradient and direction lengths differ"));
    }
    Ok(-grad_lf.iter().zip(direction.iter()).map(|(g, v)| hs_inner(g, v)).sum::<C64>())
}

pub fn postprocess_sample(od: &OverlapDerivatives, direction: Option<&GateVec>) -> Result<SampleDerivatives> {
    let t = od.overlap;
    let grad_lf = GateVec(od.grad.iter().map(|e| -e.conjugate()).collect());
    let (om, hvp) = match direction {
        Some(v) => {
            let om = omega(&grad_lf, v)?;
            let hvp = grad_lf
                .iter()
                .zip(od.hvp.iter())
                .map(|(g, h)| (g * om - h.conjugate() * t) * C64::new(2.0, 0.0))
                .collect();
            (om, GateVec(hvp))
        }
        None => (ZERO, GateVec::zeros(od.grad.len())),
    };
    let grad = GateVec(grad_lf.iter().map(|g| g * (t * 2.0)).collect());
    Ok(SampleDerivatives { loss: 1.0 - t.norm_sqr(), grad, hvp, omega: om, overlap: t })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRisk {
    pub value: f64,
    pub grad: GateVec,
    /// Zero when no direction was given.
    pub hvp: GateVec,
    pub n_samples: usize,
    pub overlaps: Vec<C64>,
    /// One per sample.
    pub kernel_calls: usize,
}

fn check_samples(circuit: &BrickwallCircuit, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(invalid("empty sample set"));
    }
    if samples.iter().any(|s| s.psi0.n_sites() != circuit.n_qubits() || s.phi0.n_sites() != circuit.n_qubits()) {
        return Err(invalid("sample size does not match the circuit"));
    }
    Ok(())
}

/// Risk with gradient (and HVP along `direction`), reduced in sample order.
pub fn empirical_risk<E: Executor>(
    circuit: &BrickwallCircuit,
    samples: &[Sample],
    direction: Option<&GateVec>,
    opts: &KernelOptions,
    exec: &E,
) -> Result<EmpiricalRisk> {
    check_samples(circuit, samples)?;
    let per: Vec<Result<SampleDerivatives>> = exec.map(samples.len(), |i| {
        let s = &samples[i];
        let od = overlap_derivatives(&s.psi0, &s.phi0, circuit, direction, opts)?;
        postprocess_sample(&od, direction)
    });
    let mut value = 0.0;
    let mut grad = GateVec::zeros(circuit.n_params());
    let mut hvp = GateVec::zeros(circuit.n_params());
    let mut overlaps = Vec::with_capacity(samples.len());
    for r in per {
        let d = r?;
        value += d.loss;
        add_into(&mut grad, &d.grad);
        add_into(&mut hvp, &d.hvp);
        overlaps.push(d.overlap);
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(EmpiricalRisk {
        value: value * inv,
        grad: grad.scaled(C64::new(inv, 0.0)),
        hvp: hvp.scaled(C64::new(inv, 0.0)),
        n_samples: samples.len(),
        overlaps,
        kernel_calls: samples.len(),
    })
}

/// Risk value only, from forward sweeps.
pub fn risk_value<E: Executor>(circuit: &BrickwallCircuit, samples: &[Sample], exec: &E) -> Result<f64> {
    check_samples(circuit, samples)?;
    let per: Vec<Result<C64>> = exec.map(samples.len(), |i| overlap_only(&samples[i].psi0, &samples[i].phi0, circuit));
    let mut acc = 0.0;
    for t in per {
        acc += 1.0 - t?.norm_sqr();
    }
    Ok(acc / samples.len() as f64)
}

fn add_into(acc: &mut GateVec, x: &GateVec) {
    for (a, b) in acc.0.iter_mut().zip(x.iter()) {
        *a += b;
    }
}
