//! 4x4 complex gate matrices, parameter-shaped gate vectors, the two-qubit
//! Pauli basis, and seeded sampling of Haar-random states and gates.
//!
//! Pauli order is `(I, X, Y, Z)`; two-qubit elements `P_a ⊗ P_b` are enumerated
//! row-major over `(a, b)`, i.e. element `4*a + b`. The spectral module's
//! coordinate layout depends on this order.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::mps::{Mps, TruncationPolicy};

pub type C64 = num_complex::Complex64;
pub type CMat4 = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Seeded generator used by every stochastic operation.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed for `stream` (splitmix64 finalizer).
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `trace(A^† B)`.
pub fn hs_inner(a: &CMat4, b: &CMat4) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Real metric `Re trace(A^† B)`.
pub fn re_inner(a: &CMat4, b: &CMat4) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frob_norm(a: &CMat4) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &CMat4) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖G^† G − I‖_F`.
pub fn unitarity_residual(g: &CMat4) -> f64 {
    frob_norm(&(g.adjoint() * g - CMat4::identity()))
}

/// Single-qubit Pauli matrix, index order `(I, X, Y, Z)`.
pub fn pauli(a: usize) -> [[C64; 2]; 2] {
    match a {
        0 => [[ONE, ZERO], [ZERO, ONE]],
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        3 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("Pauli index {a} out of range"),
    }
}

/// Kronecker product `A ⊗ B`; `A` acts on the left (more significant) site.
pub fn kron2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> CMat4 {
    CMat4::from_fn(|r, c| a[r / 2][c / 2] * b[r % 2][c % 2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliBasisElement {
    pub a: usize,
    pub b: usize,
    pub matrix: CMat4,
}

impl PauliBasisElement {
    pub fn new(a: usize, b: usize) -> Self {
        PauliBasisElement { a, b, matrix: kron2(&pauli(a), &pauli(b)) }
    }
}

/// All 16 two-qubit Pauli products in row-major `(a, b)` order.
pub fn pauli_basis() -> Vec<PauliBasisElement> {
    (0..16).map(|i| PauliBasisElement::new(i / 4, i % 4)).collect()
}

/// Orthonormal basis `{ i G (P_a ⊗ P_b) / 2 }` of the tangent space at `G`.
pub fn pauli_tangent_basis(g: &CMat4) -> Result<Vec<CMat4>> {
    let res = unitarity_residual(g);
    if !(res <= 1e-8) {
        return Err(invalid(alloc::format!("gate is not unitary (residual {res:.3e})")));
    }
    Ok(pauli_basis().iter().map(|p| g * p.matrix * C64::new(0.0, 0.5)).collect())
}

fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Haar-random single-qubit state drawn from `rng`.
pub fn haar_qubit<R: Rng>(rng: &mut R) -> [C64; 2] {
    loop {
        let a = complex_normal(rng);
        let b = complex_normal(rng);
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n > 1e-300 {
            return [a / n, b / n];
        }
    }
}

/// Product state with Haar-random single-qubit factors.
pub fn haar_product_state(n_qubits: usize, seed: u64, policy: TruncationPolicy) -> Result<Mps> {
    if n_qubits < 2 {
        return Err(invalid("haar_product_state needs at least 2 qubits"));
    }
    let mut rng = rng_from_seed(seed);
    let sites: Vec<[C64; 2]> = (0..n_qubits).map(|_| haar_qubit(&mut rng)).collect();
    Mps::product_state(&sites, policy)
}

/// Haar-random `U(4)` element drawn from `rng` (QR of a complex Ginibre matrix
/// with the phases of `R`'s diagonal moved into `Q`).
pub fn haar_unitary_with<R: Rng>(rng: &mut R) -> CMat4 {
    let z = CMat4::from_fn(|_, _| complex_normal(rng) * core::f64::consts::FRAC_1_SQRT_2);
    let qr = z.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q;
    for j in 0..4 {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..4 {
            out[(i, j)] *= phase;
        }
    }
    out
}

pub fn haar_unitary_gate(seed: u64) -> CMat4 {
    haar_unitary_with(&mut rng_from_seed(seed))
}

/// Matrix with i.i.d. standard complex normal entries.
pub fn random_cmat4<R: Rng>(rng: &mut R) -> CMat4 {
    CMat4::from_fn(|_, _| complex_normal(rng))
}

/// Ordered list of 4x4 matrices: circuit parameters, gradients, directions,
/// tangent vectors. The metric is `Re Σ_k trace(A_k^† B_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateVec(pub Vec<CMat4>);

impl GateVec {
    pub fn zeros(len: usize) -> Self {
        GateVec(alloc::vec![CMat4::zeros(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, CMat4> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[CMat4] {
        &self.0
    }

    pub fn re_dot(&self, other: &GateVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| re_inner(a, b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.re_dot(self).sqrt()
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: C64, x: &GateVec) {
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: C64) -> GateVec {
        GateVec(self.0.iter().map(|a| a * alpha).collect())
    }

    pub fn conj(&self) -> GateVec {
        GateVec(self.0.iter().map(|a| a.map(|z| z.conj())).collect())
    }

    pub fn max_abs_diff(&self, other: &GateVec) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Real coordinates `(re, im)` of every entry, gate-major and row-major inside a gate.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len() * 32);
        for g in &self.0 {
            for r in 0..4 {
                for c in 0..4 {
                    out.push(g[(r, c)].re);
                    out.push(g[(r, c)].im);
                }
            }
        }
        out
    }

    pub fn from_real(values: &[f64]) -> GateVec {
        assert_eq!(values.len() % 32, 0, "real coordinate count must be a multiple of 32");
        GateVec(
            values
                .chunks(32)
                .map(|ch| CMat4::from_fn(|r, c| C64::new(ch[2 * (4 * r + c)], ch[2 * (4 * r + c) + 1])))
                .collect(),
        )
    }
}

impl From<Vec<CMat4>> for GateVec {
    fn from(v: Vec<CMat4>) -> Self {
        GateVec(v)
    }
}
