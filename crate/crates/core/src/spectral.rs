//! Dense Riemannian Hessian in the Pauli tangent basis, its spectrum, and a
//! plain CG replay on `H x = −g`.
//!
//! Coordinates: basis element `16·p + 4·a + b` is `i G_p (P_a ⊗ P_b) / 2` for
//! gate parameter `p`. The basis is orthonormal for `Re tr(A†B)`, so
//! `H_ij = Re⟨E_i, H_R E_j⟩` needs one HVP per column.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::complex::{pauli_tangent_basis, re_inner, CMat4, GateVec};
use crate::error::{Error, Result};
use crate::manifold::project_all;

pub const DEFAULT_DIM_CAP: usize = 16 * 64;

/// Orthonormal tangent basis at a point of `U(4)^×P`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    per_gate: Vec<Vec<CMat4>>,
}

impl TangentBasis {
    pub fn at(gates: &GateVec) -> Result<TangentBasis> {
        let per_gate = gates.iter().map(pauli_tangent_basis).collect::<Result<_>>()?;
        Ok(TangentBasis { per_gate })
    }

    pub fn dim(&self) -> usize {
        16 * self.per_gate.len()
    }

    /// Basis element `i` as a full tangent vector.
    pub fn element(&self, i: usize) -> GateVec {
        let mut v = GateVec::zeros(self.per_gate.len());
        v.0[i / 16] = self.per_gate[i / 16][i % 16];
        v
    }

    pub fn coords(&self, v: &GateVec) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (basis, m) in self.per_gate.iter().zip(v.iter()) {
            out.extend(basis.iter().map(|e| re_inner(e, m)));
        }
        out
    }

    pub fn vector(&self, c: &[f64]) -> GateVec {
        GateVec(
            self.per_gate
                .iter()
                .enumerate()
                .map(|(p, basis)| basis.iter().enumerate().fold(CMat4::zeros(), |acc, (j, e)| acc + e * crate::complex::C64::new(c[16 * p + j], 0.0)))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianMatrix {
    pub dim: usize,
    /// Row-major, symmetrized.
    pub entries: Vec<f64>,
    /// `max |H_ij − H_ji|` before symmetrization.
    pub asymmetry: f64,
    pub hvp_evals: usize,
}

impl HessianMatrix {
    pub fn from_dense(dim: usize, entries: Vec<f64>) -> Result<HessianMatrix> {
        if entries.len() != dim * dim {
            return Err(crate::error::invalid("Hessian entries do not match dim²"));
        }
        let mut h = HessianMatrix { dim, entries, asymmetry: 0.0, hvp_evals: 0 };
        h.symmetrize();
        Ok(h)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.entries[i * self.dim..(i + 1) * self.dim].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (self.entries[i * n + j], self.entries[j * n + i]);
                asym = asym.max((a - b).abs());
                let m = 0.5 * (a + b);
                self.entries[i * n + j] = m;
                self.entries[j * n + i] = m;
            }
        }
        self.asymmetry = asym;
    }
}

/// Builds `H_ij = Re⟨E_i, H_R E_j⟩` column by column with `dim` HVP calls.
pub fn materialize_hessian<F>(gates: &GateVec, mut hvp: F, dim_cap: usize) -> Result<HessianMatrix>
where
    F: FnMut(&GateVec) -> Result<GateVec>,
{
    let basis = TangentBasis::at(gates)?;
    let dim = basis.dim();
    if dim > dim_cap {
        return Err(Error::DimensionCap { dim, cap: dim_cap });
    }
    let mut cols = alloc::vec![0.0; dim * dim];
    for j in 0..dim {
        let col = basis.coords(&hvp(&basis.element(j))?);
        for (i, c) in col.into_iter().enumerate() {
            cols[i * dim + j] = c;
        }
    }
    let mut h = HessianMatrix { dim, entries: cols, asymmetry: 0.0, hvp_evals: dim };
    h.symmetrize();
    Ok(h)
}

/// Materializes the Riemannian Hessian of any problem on `U(4)^×P`.
pub fn materialize_problem_hessian<P>(problem: &mut P, x: &GateVec, dim_cap: usize) -> Result<HessianMatrix>
where
    P: crate::optim::Problem<Point = GateVec, Tangent = GateVec>,
{
    materialize_hessian(x, |v| problem.hessian_vec(x, v), dim_cap)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `max|λ| / min{|λ| : |λ| > tol}` with `tol = 1e-10·max|λ|`.
    pub condition_number: f64,
    pub n_negative: usize,
    pub tol: f64,
    /// Largest fraction of eigenvalue magnitudes (above `tol`) inside one decade.
    pub decade_cluster_fraction: f64,
}

pub fn spectrum_report(h: &HessianMatrix) -> SpectrumReport {
    let n = h.dim;
    if n == 0 {
        return SpectrumReport { eigenvalues: Vec::new(), condition_number: 1.0, n_negative: 0, tol: 0.0, decade_cluster_fraction: 0.0 };
    }
    let m = DMatrix::from_row_slice(n, n, &h.entries);
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let max_abs = ev.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-10 * max_abs;
    let min_abs = ev.iter().map(|x| x.abs()).filter(|x| *x > tol).fold(f64::INFINITY, f64::min);
    let condition_number = if max_abs > 0.0 && min_abs.is_finite() { max_abs / min_abs } else { 1.0 };
    let n_negative = ev.iter().filter(|x| **x < -tol).count();
    let mut logs: Vec<f64> = ev.iter().map(|x| x.abs()).filter(|x| *x > tol).map(|x| x.log10()).collect();
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..logs.len() {
        while logs[hi] - logs[lo] > 1.0 {
            lo += 1;
        }
        best = best.max(hi + 1 - lo);
    }
    let decade_cluster_fraction = if logs.is_empty() { 0.0 } else { best as f64 / logs.len() as f64 };
    SpectrumReport { eigenvalues: ev, condition_number, n_negative, tol, decade_cluster_fraction }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CgProbe {
    /// `‖H x_j + g‖` for `j = 0..`, starting at `x_0 = 0`.
    pub residual_norms: Vec<f64>,
    /// `m(x_j) = gᵀx_j + ½ x_jᵀ H x_j`.
    pub model_values: Vec<f64>,
}

/// Plain (untruncated) CG on `H x = −g`. Stops early on an exactly zero
/// residual or a vanishing curvature `dᵀHd`.
pub fn cg_convergence_probe(h: &HessianMatrix, g: &[f64], n_iters: usize) -> Result<CgProbe> {
    if g.len() != h.dim {
        return Err(crate::error::invalid("gradient length does not match the Hessian"));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = alloc::vec![0.0; h.dim];
    let mut r: Vec<f64> = g.to_vec();
    let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
    let mut rr = dot(&r, &r);
    let mut probe = CgProbe { residual_norms: alloc::vec![rr.sqrt()], model_values: alloc::vec![0.0] };
    for _ in 0..n_iters {
        if rr == 0.0 {
            break;
        }
        let hd = h.apply(&d);
        let dhd = dot(&d, &hd);
        if dhd == 0.0 || !dhd.is_finite() {
            break;
        }
        let alpha = rr / dhd;
        for i in 0..h.dim {
            x[i] += alpha * d[i];
            r[i] += alpha * hd[i];
        }
        let rr_new = dot(&r, &r);
        let hx = h.apply(&x);
        probe.residual_norms.push(rr_new.sqrt());
        probe.model_values.push(dot(g, &x) + 0.5 * dot(&x, &hx));
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..h.dim {
            d[i] = -r[i] + beta * d[i];
        }
    }
    Ok(probe)
}

/// Projects `v` onto the tangent space and returns its basis coordinates.
pub fn tangent_coords(gates: &GateVec, v: &GateVec) -> Result<Vec<f64>> {
    Ok(TangentBasis::at(gates)?.coords(&project_all(gates, v)?))
}
