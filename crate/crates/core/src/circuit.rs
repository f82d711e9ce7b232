//! Brickwall circuits.
//!
//! Layer `ℓ` (0-based) acts on pairs starting at site 0 when `ℓ` is even and at
//! site 1 when `ℓ` is odd. Placements are enumerated layer-major and left to
//! right inside a layer; the placement index is the application order `k`.
//! In a translationally invariant circuit every placement of layer `ℓ` uses the
//! shared gate `gates[ℓ]`.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::complex::{CMat4, GateVec};
use crate::error::{invalid, Result};
use crate::mps::{Mps, Sweep};

/// Per-gate (or per-layer when tied) variation of the circuit parameters.
pub type TangentDirection = GateVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Placement {
    /// Index into the circuit's gate list.
    pub param: usize,
    pub left_site: usize,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrickwallCircuit {
    n_qubits: usize,
    placements: Vec<Placement>,
    layers: Vec<Range<usize>>,
    gates: Vec<CMat4>,
    ti: bool,
}

/// First left site of layer `layer`.
pub fn layer_offset(layer: usize) -> usize {
    layer % 2
}

/// Left sites of the gates in layer `layer` of an `n`-qubit brickwall.
pub fn layer_sites(n_qubits: usize, layer: usize) -> Vec<usize> {
    (layer_offset(layer)..n_qubits.saturating_sub(1)).step_by(2).collect()
}

/// Number of placements of an `n`-qubit, `n_layers` brickwall.
pub fn placement_count(n_qubits: usize, n_layers: usize) -> usize {
    (0..n_layers).map(|l| layer_sites(n_qubits, l).len()).sum()
}

pub fn build_brickwall(n_qubits: usize, n_layers: usize, init_gates: Vec<CMat4>, ti: bool) -> Result<BrickwallCircuit> {
    if n_qubits < 2 {
        return Err(invalid("a brickwall circuit needs at least 2 qubits"));
    }
    if n_layers == 0 {
        return Err(invalid("a brickwall circuit needs at least one layer"));
    }
    let k = placement_count(n_qubits, n_layers);
    let expected = if ti { n_layers } else { k };
    if init_gates.len() != expected {
        return Err(invalid(format!(
            "expected {expected} gates for {n_qubits} qubits and {n_layers} layers (ti = {ti}), got {}",
            init_gates.len()
        )));
    }
    let mut placements = Vec::with_capacity(k);
    let mut layers = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        let start = placements.len();
        let mut last_end = None;
        for s in layer_sites(n_qubits, layer) {
            if let Some(e) = last_end {
                assert!(s > e, "overlapping placements in layer {layer}");
            }
            last_end = Some(s + 1);
            let param = if ti { layer } else { placements.len() };
            placements.push(Placement { param, left_site: s, layer });
        }
        layers.push(start..placements.len());
    }
    Ok(BrickwallCircuit { n_qubits, placements, layers, gates: init_gates, ti })
}

impl BrickwallCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn ti(&self) -> bool {
        self.ti
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    /// Placement index range `I_ℓ` of each layer.
    pub fn layers(&self) -> &[Range<usize>] {
        &self.layers
    }

    pub fn gates(&self) -> &[CMat4] {
        &self.gates
    }

    pub fn params(&self) -> GateVec {
        GateVec(self.gates.clone())
    }

    /// Number of placements `K`.
    pub fn n_placements(&self) -> usize {
        self.placements.len()
    }

    /// Number of independent gate matrices (`K`, or `L` when tied).
    pub fn n_params(&self) -> usize {
        self.gates.len()
    }

    /// Gate applied at placement `k`.
    pub fn gate_at(&self, k: usize) -> &CMat4 {
        &self.gates[self.placements[k].param]
    }

    /// Same layout with new parameters.
    pub fn with_gates(&self, gates: Vec<CMat4>) -> Result<BrickwallCircuit> {
        if gates.len() != self.gates.len() {
            return Err(invalid(format!("expected {} gates, got {}", self.gates.len(), gates.len())));
        }
        Ok(BrickwallCircuit { gates, ..self.clone() })
    }

    /// Untied copy: one stored gate per placement.
    pub fn untied(&self) -> BrickwallCircuit {
        let gates = (0..self.n_placements()).map(|k| *self.gate_at(k)).collect();
        build_brickwall(self.n_qubits, self.n_layers(), gates, false).expect("layout is unchanged")
    }

    /// Expands a per-parameter list to one entry per placement.
    pub fn expand(&self, per_param: &[CMat4]) -> Result<Vec<CMat4>> {
        if per_param.len() != self.n_params() {
            return Err(invalid("direction length does not match the circuit's parameter count"));
        }
        Ok(self.placements.iter().map(|p| per_param[p.param]).collect())
    }

    /// A contraction order: layers in sequence, even layers left to right and
    /// odd layers right to left, with the sweep direction that keeps the MPS
    /// center next to the following gate. Gates inside a layer commute, so any
    /// such order gives the same circuit.
    pub fn traversal(&self) -> Vec<(usize, Sweep)> {
        let mut out = Vec::with_capacity(self.n_placements());
        for (l, r) in self.layers.iter().enumerate() {
            if l % 2 == 0 {
                out.extend(r.clone().map(|k| (k, Sweep::Right)));
            } else {
                out.extend(r.clone().rev().map(|k| (k, Sweep::Left)));
            }
        }
        out
    }

    /// Sums a per-placement list into per-parameter slots.
    pub fn reduce(&self, per_placement: &[CMat4]) -> Vec<CMat4> {
        let mut out = alloc::vec![CMat4::zeros(); self.n_params()];
        for (p, m) in self.placements.iter().zip(per_placement) {
            out[p.param] += m;
        }
        out
    }
}

/// Applies the gates in order `k = 1..K`, or the adjoint circuit (reverse order,
/// adjoint gates) when `adjoint` is set.
pub fn apply_circuit(circuit: &BrickwallCircuit, state: &Mps, adjoint: bool) -> Result<Mps> {
    if state.n_sites() != circuit.n_qubits() {
        return Err(invalid(format!(
            "circuit has {} qubits, state has {} sites",
            circuit.n_qubits(),
            state.n_sites()
        )));
    }
    let mut out = state.clone();
    if adjoint {
        for (k, sweep) in circuit.traversal().into_iter().rev() {
            let g = circuit.gate_at(k).adjoint();
            out.apply_gate_mut(&g, circuit.placements[k].left_site, sweep.flip())?;
        }
    } else {
        for (k, sweep) in circuit.traversal() {
            out.apply_gate_mut(circuit.gate_at(k), circuit.placements[k].left_site, sweep)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{haar_unitary_gate, ONE};
    use crate::mps::{braket, tests::random_mps, TruncationPolicy};
    use crate::oracle::DenseState;

    fn sites_of(c: &BrickwallCircuit) -> Vec<(usize, usize)> {
        c.placements().iter().map(|p| (p.layer, p.left_site)).collect()
    }

    #[test]
    fn layouts() {
        let c = build_brickwall(4, 2, alloc::vec![CMat4::identity(); 3], false).unwrap();
        assert_eq!(sites_of(&c), alloc::vec![(0, 0), (0, 2), (1, 1)]);
        let c = build_brickwall(5, 2, alloc::vec![CMat4::identity(); 4], false).unwrap();
        assert_eq!(sites_of(&c), alloc::vec![(0, 0), (0, 2), (1, 1), (1, 3)]);
        let c = build_brickwall(50, 11, alloc::vec![CMat4::identity(); 11], true).unwrap();
        assert_eq!((c.n_params(), c.n_placements()), (11, 270));
        assert!(c.placements().iter().all(|p| p.param == p.layer));
        assert!(build_brickwall(4, 2, alloc::vec![CMat4::identity(); 2], false).is_err());
        assert!(build_brickwall(1, 2, alloc::vec![], true).is_err());
    }

    #[test]
    fn identity_circuit_is_identity() {
        let psi = random_mps(6, 3, TruncationPolicy::default());
        let c = build_brickwall(6, 3, alloc::vec![CMat4::identity(); placement_count(6, 3)], false).unwrap();
        let out = apply_circuit(&c, &psi, false).unwrap();
        assert!((braket(&out, &psi).unwrap() - ONE).norm() < 1e-12);
    }

    #[test]
    fn matches_dense_and_inverts() {
        let psi = random_mps(6, 4, TruncationPolicy::default());
        let k = placement_count(6, 4);
        let gates = (0..k).map(|i| haar_unitary_gate(i as u64 + 40)).collect();
        let c = build_brickwall(6, 4, gates, false).unwrap();
        let out = apply_circuit(&c, &psi, false).unwrap();
        let mut d = DenseState::from_mps(&psi).unwrap();
        d.apply_circuit(&c);
        let err: f64 = out.to_dense().iter().zip(d.amps()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-10);
        let back = apply_circuit(&c, &out, true).unwrap();
        assert!(braket(&back, &psi).unwrap().norm() >= 1.0 - 1e-10);
        assert!(apply_circuit(&c, &random_mps(5, 1, TruncationPolicy::default()), false).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn apply_then_adjoint_is_identity_and_matches_dense(n in 2usize..8, layers in 1usize..6, seed in 0u64..10_000) {
                let gates = (0..placement_count(n, layers)).map(|i| haar_unitary_gate(seed * 97 + i as u64)).collect();
                let c = build_brickwall(n, layers, gates, false).unwrap();
                let psi = random_mps(n, seed, TruncationPolicy::default());
                let out = apply_circuit(&c, &psi, false).unwrap();
                let mut dense = DenseState::from_mps(&psi).unwrap();
                dense.apply_circuit(&c);
                let err = out.to_dense().iter().zip(dense.amps()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                prop_assert!(err <= 1e-10);
                let back = apply_circuit(&c, &out, true).unwrap();
                prop_assert!((braket(&back, &psi).unwrap() - ONE).norm() <= 1e-10);
            }
        }
    }
}
