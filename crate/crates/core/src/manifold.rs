//! Geometry of the product manifold `U(4)^×K` with metric `Re tr(A†B)`.
//!
//! Tangent vectors at `G` are `ξ` with `G†ξ` skew-Hermitian. The Riemannian
//! Hessian uses the form `H_R[Z] = P_G(H[Z] − ½ Z ∇f† G − ½ G ∇f† Z)`; under
//! `P_G` this coincides with the usual `P_G(H[Z] − Z sym(G†∇f))`, and both the
//! symmetry and the second-order retraction tests pin it.

use nalgebra::{Complex, ComplexField};

use crate::complex::{frob_norm, unitarity_residual, CMat4, GateVec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{svd, Mat};

/// Unitarity tolerance for points handed to the geometry.
pub const UNITARY_TOL: f64 = 1e-8;
/// Tangency tolerance for directions handed to the Riemannian HVP.
pub const TANGENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Retraction {
    /// Unitary factor of the polar decomposition of `G + ξ`.
    #[default]
    Polar,
    /// Q factor of `G + ξ` with a positive-diagonal R.
    Qr,
}

fn check_unitary(g: &CMat4) -> Result<()> {
    let r = unitarity_residual(g);
    if !(r <= UNITARY_TOL) {
        return Err(invalid(alloc::format!("gate is not unitary (residual {r:.3e})")));
    }
    Ok(())
}

/// `P_G(V) = ½V − ½ G V† G` without the unitarity check.
pub fn project_unchecked(g: &CMat4, v: &CMat4) -> CMat4 {
    (v - g * v.adjoint() * g) * Complex::new(0.5, 0.0)
}

pub fn project(g: &CMat4, v: &CMat4) -> Result<CMat4> {
    check_unitary(g)?;
    Ok(project_unchecked(g, v))
}

/// `‖G†ξ + (G†ξ)†‖_F`.
pub fn tangent_residual(g: &CMat4, xi: &CMat4) -> f64 {
    let a = g.adjoint() * xi;
    frob_norm(&(a + a.adjoint()))
}

fn check_lengths(a: &GateVec, b: &GateVec) -> Result<()> {
    if a.len() != b.len() {
        return Err(invalid("gate list and tangent list lengths differ"));
    }
    Ok(())
}

pub fn project_all(gates: &GateVec, v: &GateVec) -> Result<GateVec> {
    check_lengths(gates, v)?;
    gates.iter().zip(v.iter()).map(|(g, x)| project(g, x)).collect::<Result<_>>().map(GateVec)
}

/// Gate-wise projection of the Euclidean gradient.
pub fn riemannian_grad(gates: &GateVec, euclid_grad: &GateVec) -> Result<GateVec> {
    project_all(gates, euclid_grad)
}

pub fn riemannian_hvp(gates: &GateVec, euclid_grad: &GateVec, euclid_hvp: &GateVec, direction: &GateVec) -> Result<GateVec> {
    check_lengths(gates, euclid_grad)?;
    check_lengths(gates, euclid_hvp)?;
    check_lengths(gates, direction)?;
    let half = Complex::new(0.5, 0.0);
    let mut out = alloc::vec::Vec::with_capacity(gates.len());
    for (((g, df), h), z) in gates.iter().zip(euclid_grad.iter()).zip(euclid_hvp.iter()).zip(direction.iter()) {
        check_unitary(g)?;
        let r = tangent_residual(g, z);
        if r > TANGENT_TOL * (1.0 + frob_norm(z)) {
            return Err(Error::NonTangent(r));
        }
        let dfa = df.adjoint();
        let corrected = h - (z * dfa * g + g * dfa * z) * half;
        out.push(project_unchecked(g, &corrected));
    }
    Ok(GateVec(out))
}

/// Transport by projection onto the tangent space at the new point.
pub fn transport(g_new: &GateVec, xi: &GateVec) -> Result<GateVec> {
    project_all(g_new, xi)
}

pub fn retract(g: &CMat4, xi: &CMat4, kind: Retraction) -> Result<CMat4> {
    let m = g + xi;
    if !crate::complex::is_finite(&m) {
        return Err(Error::DegenerateRetraction);
    }
    let out = match kind {
        Retraction::Polar => {
            let d = svd(&Mat::from_data(4, 4, m.transpose().iter().copied().collect()))?;
            if !(d.s[3] > 1e-10) {
                return Err(Error::DegenerateRetraction);
            }
            let w = d.u.matmul(&d.vt);
            CMat4::from_row_slice(&w.data)
        }
        Retraction::Qr => {
            let qr = m.qr();
            let (mut q, r) = (qr.q(), qr.r());
            for i in 0..4 {
                let d = r[(i, i)];
                if !(d.norm() > 1e-10) {
                    return Err(Error::DegenerateRetraction);
                }
                let phase = d / Complex::from_real(d.norm());
                for row in 0..4 {
                    q[(row, i)] *= phase;
                }
            }
            q
        }
    };
    if !(unitarity_residual(&out) <= 1e-12) {
        return Err(Error::DegenerateRetraction);
    }
    Ok(out)
}

pub fn retract_all(gates: &GateVec, xi: &GateVec, kind: Retraction) -> Result<GateVec> {
    check_lengths(gates, xi)?;
    gates.iter().zip(xi.iter()).map(|(g, x)| retract(g, x, kind)).collect::<Result<_>>().map(GateVec)
}

/// Largest per-gate `‖G†G − I‖_F`.
pub fn max_unitarity_residual(gates: &GateVec) -> f64 {
    gates.iter().map(unitarity_residual).fold(0.0, f64::max)
}
