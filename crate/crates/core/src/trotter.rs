//! Ising and Heisenberg chains and Trotterized brickwall circuits.
//!
//! Ising: `H = J Σ Z_i Z_{i+1} + Σ (g X_i + h Z_i)`.
//! Heisenberg: `H = Σ_α J_α Σ σ^α_i σ^α_{i+1} + Σ_α h_α Σ σ^α_i`.
//!
//! Single-site terms are split evenly between the two bonds touching a site;
//! the end sites only touch one bond and put their full weight on it.
//!
//! The fourth-order builder uses Suzuki's five-stage composition
//! `S2(u dt)² S2((1−4u) dt) S2(u dt)²` with `u = 1/(4 − 4^{1/3})`.

use alloc::vec::Vec;
use nalgebra::{Matrix4, SymmetricEigen};

use crate::circuit::{build_brickwall, layer_sites, BrickwallCircuit};
use crate::complex::{kron2, pauli, CMat4, C64};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    Ising { j: f64, g: f64, h: f64 },
    Heisenberg { j: [f64; 3], h: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpinChainModel {
    pub kind: ModelKind,
    pub n_sites: usize,
    pub t: f64,
}

impl SpinChainModel {
    pub fn new(kind: ModelKind, n_sites: usize, t: f64) -> Result<Self> {
        if n_sites < 2 {
            return Err(invalid("a spin chain needs at least 2 sites"));
        }
        if !t.is_finite() {
            return Err(invalid("evolution time must be finite"));
        }
        Ok(SpinChainModel { kind, n_sites, t })
    }

    pub fn ising(n_sites: usize, j: f64, g: f64, h: f64, t: f64) -> Result<Self> {
        SpinChainModel::new(ModelKind::Ising { j, g, h }, n_sites, t)
    }

    pub fn heisenberg(n_sites: usize, j: [f64; 3], h: [f64; 3], t: f64) -> Result<Self> {
        SpinChainModel::new(ModelKind::Heisenberg { j, h }, n_sites, t)
    }

    fn bond_term(&self, w_left: f64, w_right: f64) -> CMat4 {
        let c = |x: f64| C64::new(x, 0.0);
        let id = pauli(0);
        match self.kind {
            ModelKind::Ising { j, g, h } => {
                let zz = kron2(&pauli(3), &pauli(3)) * c(j);
                let field = |w: f64, left: bool| {
                    let (x, z) = if left {
                        (kron2(&pauli(1), &id), kron2(&pauli(3), &id))
                    } else {
                        (kron2(&id, &pauli(1)), kron2(&id, &pauli(3)))
                    };
                    (x * c(g) + z * c(h)) * c(w)
                };
                zz + field(w_left, true) + field(w_right, false)
            }
            ModelKind::Heisenberg { j, h } => {
                let mut m = CMat4::zeros();
                for a in 1..4 {
                    m += kron2(&pauli(a), &pauli(a)) * c(j[a - 1]);
                    m += kron2(&pauli(a), &id) * c(h[a - 1] * w_left);
                    m += kron2(&id, &pauli(a)) * c(h[a - 1] * w_right);
                }
                m
            }
        }
    }

    /// Local term of bond `(left_site, left_site + 1)` including its share of the fields.
    pub fn bond_hamiltonian(&self, left_site: usize) -> CMat4 {
        let n = self.n_sites;
        let wl = if left_site == 0 { 1.0 } else { 0.5 };
        let wr = if left_site + 2 == n { 1.0 } else { 0.5 };
        self.bond_term(wl, wr)
    }

    /// Bond term with bulk weights on both sites (used for tied layers).
    pub fn bulk_bond_hamiltonian(&self) -> CMat4 {
        self.bond_term(0.5, 0.5)
    }
}

/// `exp(−i dt h)` for a Hermitian 4x4 `h`.
pub fn expm_hermitian4(h: &CMat4, dt: f64) -> CMat4 {
    let eig = SymmetricEigen::new(*h);
    let phases = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, -dt * l).exp()));
    eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

pub fn two_site_step(model: &SpinChainModel, left_site: usize, dt: f64) -> Result<CMat4> {
    if left_site + 1 >= model.n_sites {
        return Err(invalid("bond index out of range"));
    }
    Ok(expm_hermitian4(&model.bond_hamiltonian(left_site), dt))
}

/// Merges a sequence of `(parity, dt)` half/full layers; adjacent layers of equal
/// parity commute term by term and are combined by adding their times.
fn merge(seq: &[(usize, f64)]) -> Vec<f64> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &(p, dt) in seq {
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += dt,
            _ => out.push((p, dt)),
        }
    }
    debug_assert!(out.iter().enumerate().all(|(i, (p, _))| *p == i % 2));
    out.into_iter().map(|(_, dt)| dt).collect()
}

fn strang(seq: &mut Vec<(usize, f64)>, dt: f64) {
    seq.push((0, dt / 2.0));
    seq.push((1, dt));
    seq.push((0, dt / 2.0));
}

fn assemble(model: &SpinChainModel, layer_dts: &[f64], ti: bool) -> Result<BrickwallCircuit> {
    let n = model.n_sites;
    let mut gates = Vec::new();
    for (l, &dt) in layer_dts.iter().enumerate() {
        if ti {
            gates.push(expm_hermitian4(&model.bulk_bond_hamiltonian(), dt));
        } else {
            for s in layer_sites(n, l) {
                gates.push(two_site_step(model, s, dt)?);
            }
        }
    }
    build_brickwall(n, layer_dts.len(), gates, ti)
}

fn second_order_layers(model: &SpinChainModel, n_steps: usize) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    let dt = model.t / n_steps as f64;
    let mut seq = Vec::new();
    for _ in 0..n_steps {
        strang(&mut seq, dt);
    }
    Ok(merge(&seq))
}

/// Strang splitting with merged half layers: `2·n_steps + 1` layers.
pub fn second_order_trotter(model: &SpinChainModel, n_steps: usize) -> Result<BrickwallCircuit> {
    assemble(model, &second_order_layers(model, n_steps)?, false)
}

/// Strang layout with one shared gate per layer built from the bulk bond term.
/// Boundary fields carry half weight, so this only approximates the open chain.
pub fn second_order_trotter_ti(model: &SpinChainModel, n_steps: usize) -> Result<BrickwallCircuit> {
    assemble(model, &second_order_layers(model, n_steps)?, true)
}

/// Suzuki fourth-order composition of Strang steps.
pub fn fourth_order_trotter(model: &SpinChainModel, n_steps: usize) -> Result<BrickwallCircuit> {
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    let u = 1.0 / (4.0 - num_traits::Float::cbrt(4.0f64));
    let dt = model.t / n_steps as f64;
    let mut seq = Vec::new();
    for _ in 0..n_steps {
        for c in [u, u, 1.0 - 4.0 * u, u, u] {
            strang(&mut seq, c * dt);
        }
    }
    assemble(model, &merge(&seq), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{frob_norm, unitarity_residual};
    use crate::oracle::{circuit_unitary, dense_hamiltonian, expm_hermitian, operator_distance};

    /// Scaling-and-squaring Taylor reference for `exp(A)`.
    fn expm_taylor(a: &CMat4) -> CMat4 {
        let norm = frob_norm(a);
        let mut s = 0;
        while norm / f64::powi(2.0, s) > 0.25 {
            s += 1;
        }
        let b = a * C64::new(f64::powi(2.0, -s), 0.0);
        let mut term = CMat4::identity();
        let mut sum = CMat4::identity();
        for k in 1..30 {
            term = term * b * C64::new(1.0 / k as f64, 0.0);
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    fn ising() -> SpinChainModel {
        SpinChainModel::ising(6, 1.0, 0.75, 0.6, 0.1).unwrap()
    }

    #[test]
    fn step_examples() {
        let m = ising();
        assert!(frob_norm(&(two_site_step(&m, 2, 0.0).unwrap() - CMat4::identity())) < 1e-15);
        let pure = SpinChainModel::ising(4, 1.0, 0.0, 0.0, 1.0).unwrap();
        let dt = 0.3;
        let g = two_site_step(&pure, 1, dt).unwrap();
        let ph = |s: f64| C64::new(0.0, -s * dt).exp();
        let expect = CMat4::from_diagonal(&nalgebra::Vector4::new(ph(1.0), ph(-1.0), ph(-1.0), ph(1.0)));
        assert!(frob_norm(&(g - expect)) < 1e-14);
        let heis = SpinChainModel::heisenberg(5, [1.0, 1.0, -0.5], [0.75, 0.0, 0.0], 0.25).unwrap();
        for model in [m, heis] {
            for s in 0..model.n_sites - 1 {
                let g = two_site_step(&model, s, 0.37).unwrap();
                let r = expm_taylor(&(model.bond_hamiltonian(s) * C64::new(0.0, -0.37)));
                assert!(frob_norm(&(g - r)) < 1e-12);
                assert!(unitarity_residual(&g) < 1e-12);
            }
        }
    }

    #[test]
    fn strang_layer_counts() {
        let m = ising();
        assert_eq!(second_order_trotter(&m, 1).unwrap().n_layers(), 3);
        assert_eq!(second_order_trotter(&m, 5).unwrap().n_layers(), 11);
        assert_eq!(fourth_order_trotter(&m, 2).unwrap().n_layers(), 21);
        assert!(second_order_trotter(&m, 0).is_err());
        let ti = second_order_trotter_ti(&m, 5).unwrap();
        assert!(ti.ti() && ti.n_params() == 11);
    }

    fn err(c: &BrickwallCircuit, exact: &nalgebra::DMatrix<C64>) -> f64 {
        operator_distance(&circuit_unitary(c).unwrap(), exact)
    }

    #[test]
    fn second_order_convergence() {
        let m = ising();
        let exact = expm_hermitian(&dense_hamiltonian(&m).unwrap(), m.t);
        let e4 = err(&second_order_trotter(&m, 4).unwrap(), &exact);
        let e8 = err(&second_order_trotter(&m, 8).unwrap(), &exact);
        let slope = num_traits::Float::log2(e4 / e8);
        assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
        for c in [second_order_trotter(&m, 4).unwrap()] {
            assert!(c.gates().iter().all(|g| unitarity_residual(g) < 1e-12));
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let small = SpinChainModel::ising(4, 1.0, 0.75, 0.6, 1e-3).unwrap();
        let exact = expm_hermitian(&dense_hamiltonian(&small).unwrap(), small.t);
        assert!(err(&fourth_order_trotter(&small, 1).unwrap(), &exact) < 1e-12);
        for model in [
            SpinChainModel::ising(4, 1.0, 0.75, 0.6, 0.5).unwrap(),
            SpinChainModel::heisenberg(4, [1.0, 1.0, -0.5], [0.75, 0.0, 0.0], 0.5).unwrap(),
        ] {
            let exact = expm_hermitian(&dense_hamiltonian(&model).unwrap(), model.t);
            let e2 = err(&fourth_order_trotter(&model, 2).unwrap(), &exact);
            let e4 = err(&fourth_order_trotter(&model, 4).unwrap(), &exact);
            let slope = num_traits::Float::log2(e2 / e4);
            assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn trotter_gates_are_unitary(
                n in 2usize..9,
                j in prop::array::uniform3(-2.0f64..2.0),
                h in prop::array::uniform3(-2.0f64..2.0),
                t in -1.0f64..1.0,
                steps in 1usize..4,
            ) {
                let m = SpinChainModel::heisenberg(n, j, h, t).unwrap();
                for c in [second_order_trotter(&m, steps).unwrap(), fourth_order_trotter(&m, steps).unwrap(), second_order_trotter_ti(&m, steps).unwrap()] {
                    prop_assert!(c.gates().iter().all(|g| unitarity_residual(g) <= 1e-12));
                }
            }
        }
    }
}
