//! Dense statevector reference implementation for small systems (n ≤ 10).
//!
//! Used only for verification: exact circuit application, overlaps, gate
//! environments, the gate-substitution HVP, dense Hamiltonians and their
//! exact propagators. Same conventions as the MPS path: site 0 is the most
//! significant bit and overlaps are bilinear.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::circuit::BrickwallCircuit;
use crate::complex::{kron2, pauli, CMat4, GateVec, C64, ONE, ZERO};
use crate::error::{invalid, Result};
use crate::mps::Mps;
use crate::trotter::{ModelKind, SpinChainModel};

pub const MAX_QUBITS: usize = 10;
pub const MAX_SUBSTITUTION_QUBITS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n: usize,
    amps: Vec<C64>,
}

impl DenseState {
    pub fn new(n: usize, amps: Vec<C64>) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(invalid(format!("dense oracle refuses n = {n} > {MAX_QUBITS}")));
        }
        if amps.len() != 1usize << n {
            return Err(invalid("amplitude count is not 2^n"));
        }
        Ok(DenseState { n, amps })
    }

    pub fn from_mps(m: &Mps) -> Result<Self> {
        if m.n_sites() > MAX_QUBITS {
            return Err(invalid(format!("dense oracle refuses n = {} > {MAX_QUBITS}", m.n_sites())));
        }
        DenseState::new(m.n_sites(), m.to_dense())
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn conj(&self) -> DenseState {
        DenseState { n: self.n, amps: self.amps.iter().map(|z| z.conj()).collect() }
    }

    /// Bilinear `self^T other`.
    pub fn dot(&self, other: &DenseState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a * b).sum()
    }

    fn pair_indices(&self, s: usize) -> impl Iterator<Item = [usize; 4]> + '_ {
        let hi = 1usize << (self.n - 1 - s);
        let lo = 1usize << (self.n - 2 - s);
        (0..self.amps.len()).filter(move |i| i & hi == 0 && i & lo == 0).map(move |i| [i, i | lo, i | hi, i | hi | lo])
    }

    pub fn apply_gate(&mut self, g: &CMat4, s: usize) {
        assert!(s + 1 < self.n);
        let idx: Vec<[usize; 4]> = self.pair_indices(s).collect();
        for ix in idx {
            let v = [self.amps[ix[0]], self.amps[ix[1]], self.amps[ix[2]], self.amps[ix[3]]];
            for p in 0..4 {
                self.amps[ix[p]] = (0..4).map(|q| g[(p, q)] * v[q]).sum();
            }
        }
    }

    pub fn apply_circuit(&mut self, c: &BrickwallCircuit) {
        for (k, p) in c.placements().iter().enumerate() {
            self.apply_gate(c.gate_at(k), p.left_site);
        }
    }

    /// `E[P][Q] = Σ_spectators bra[..P..] ket[..Q..]` at sites `(s, s+1)`.
    pub fn environment(bra: &DenseState, ket: &DenseState, s: usize) -> CMat4 {
        let mut e = CMat4::zeros();
        for ix in bra.pair_indices(s) {
            for p in 0..4 {
                for q in 0..4 {
                    e[(p, q)] += bra.amps[ix[p]] * ket.amps[ix[q]];
                }
            }
        }
        e
    }
}

/// `phi0^T U psi0`.
pub fn dense_overlap(c: &BrickwallCircuit, psi0: &DenseState, phi0: &DenseState) -> Result<C64> {
    check(c, psi0, phi0, MAX_QUBITS)?;
    let mut psi = psi0.clone();
    psi.apply_circuit(c);
    Ok(phi0.dot(&psi))
}

fn check(c: &BrickwallCircuit, psi0: &DenseState, phi0: &DenseState, max: usize) -> Result<()> {
    if c.n_qubits() > max {
        return Err(invalid(format!("dense oracle refuses n = {} > {max}", c.n_qubits())));
    }
    if psi0.n != c.n_qubits() || phi0.n != c.n_qubits() {
        return Err(invalid("qubit count mismatch"));
    }
    Ok(())
}

/// Environment of every placement for an explicit per-placement gate list.
fn placement_environments(c: &BrickwallCircuit, gates: &[CMat4], psi0: &DenseState, phi0: &DenseState) -> Vec<CMat4> {
    let kk = gates.len();
    let mut fwd = Vec::with_capacity(kk + 1);
    let mut psi = psi0.clone();
    fwd.push(psi.clone());
    for k in 0..kk {
        psi.apply_gate(&gates[k], c.placements()[k].left_site);
        fwd.push(psi.clone());
    }
    let mut out = vec![CMat4::zeros(); kk];
    let mut phi = phi0.clone();
    for k in (0..kk).rev() {
        let s = c.placements()[k].left_site;
        out[k] = DenseState::environment(&phi, &fwd[k], s);
        phi.apply_gate(&gates[k].transpose(), s);
    }
    out
}

/// `∂T/∂G` per placement.
pub fn dense_placement_gradient(c: &BrickwallCircuit, psi0: &DenseState, phi0: &DenseState) -> Result<Vec<CMat4>> {
    check(c, psi0, phi0, MAX_QUBITS)?;
    let gates: Vec<CMat4> = (0..c.n_placements()).map(|k| *c.gate_at(k)).collect();
    Ok(placement_environments(c, &gates, psi0, phi0))
}

/// `∂T/∂G` per parameter (summed over tied placements).
pub fn dense_gradient(c: &BrickwallCircuit, psi0: &DenseState, phi0: &DenseState) -> Result<GateVec> {
    Ok(GateVec(c.reduce(&dense_placement_gradient(c, psi0, phi0)?)))
}

/// `H_T[V]` by substituting, for every gate `k`, each other gate `k' ≠ k` with
/// its direction and summing the resulting environments of `k`. Per parameter.
pub fn substitution_hvp(c: &BrickwallCircuit, psi0: &DenseState, phi0: &DenseState, direction: &GateVec) -> Result<GateVec> {
    check(c, psi0, phi0, MAX_SUBSTITUTION_QUBITS)?;
    let dirs = c.expand(direction.as_slice())?;
    let base: Vec<CMat4> = (0..c.n_placements()).map(|k| *c.gate_at(k)).collect();
    let kk = base.len();
    let mut per_placement = vec![CMat4::zeros(); kk];
    for kp in 0..kk {
        let mut gates = base.clone();
        gates[kp] = dirs[kp];
        let envs = placement_environments(c, &gates, psi0, phi0);
        for k in 0..kk {
            if k != kp {
                per_placement[k] += envs[k];
            }
        }
    }
    Ok(GateVec(c.reduce(&per_placement)))
}

/// Dense `2^n × 2^n` unitary of a circuit.
pub fn circuit_unitary(c: &BrickwallCircuit) -> Result<DMatrix<C64>> {
    let n = c.n_qubits();
    if n > MAX_QUBITS {
        return Err(invalid("circuit too large for the dense oracle"));
    }
    let dim = 1usize << n;
    let mut u = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut e = vec![ZERO; dim];
        e[col] = ONE;
        let mut st = DenseState::new(n, e)?;
        st.apply_circuit(c);
        for row in 0..dim {
            u[(row, col)] = st.amps[row];
        }
    }
    Ok(u)
}

fn embed_two_site(n: usize, s: usize, h: &CMat4) -> DMatrix<C64> {
    let dim = 1usize << n;
    let mut out = DMatrix::zeros(dim, dim);
    let st = DenseState { n, amps: vec![ZERO; dim] };
    for ix in st.pair_indices(s) {
        for p in 0..4 {
            for q in 0..4 {
                out[(ix[p], ix[q])] += h[(p, q)];
            }
        }
    }
    out
}

/// Full chain Hamiltonian assembled site by site (independent of the
/// bond-term splitting used by the Trotter builders).
pub fn dense_hamiltonian(model: &SpinChainModel) -> Result<DMatrix<C64>> {
    let n = model.n_sites;
    if n > MAX_QUBITS {
        return Err(invalid("chain too long for the dense oracle"));
    }
    let id2 = pauli(0);
    let c = |x: f64| C64::new(x, 0.0);
    let mut h = DMatrix::zeros(1 << n, 1 << n);
    for s in 0..n - 1 {
        let bond = match model.kind {
            ModelKind::Ising { j, .. } => kron2(&pauli(3), &pauli(3)) * c(j),
            ModelKind::Heisenberg { j, .. } => (1..4).map(|a| kron2(&pauli(a), &pauli(a)) * c(j[a - 1])).sum(),
        };
        h += embed_two_site(n, s, &bond);
    }
    for site in 0..n {
        let single = |a: usize| {
            if site + 1 < n {
                embed_two_site(n, site, &kron2(&pauli(a), &id2))
            } else {
                embed_two_site(n, site - 1, &kron2(&id2, &pauli(a)))
            }
        };
        match model.kind {
            ModelKind::Ising { g, h: hz, .. } => {
                h += single(1) * c(g) + single(3) * c(hz);
            }
            ModelKind::Heisenberg { h: hv, .. } => {
                for a in 1..4 {
                    h += single(a) * c(hv[a - 1]);
                }
            }
        }
    }
    Ok(h)
}

/// `exp(-i t H)` for Hermitian `H` by eigendecomposition.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, -t * l).exp()));
    v * d * v.adjoint()
}

/// Operator 2-norm distance proxy: Frobenius norm of the difference.
pub fn operator_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
