//! Tangent states carried in the same gauge as their base state.
//!
//! A tangent `Dψ = Σ_j A_1 … B_j … A_n` is stored as the base tensors `A_j`
//! plus one derivative tensor `B_j` per site. Written as a single MPS its site
//! tensors are the lower-triangular blocks `[[A_j, 0], [B_j, A_j]]`, so its bond
//! dimension is exactly twice that of the base state and never exceeds
//! `2·chi_max`.
//!
//! A gate `G` with variation `Z` maps the pair `(ψ, Dψ)` to `(Gψ, G·Dψ + Z·ψ)`.
//! Both are obtained from the two-site blocks `Θ' = GΘ` and `DΘ' = G·DΘ + ZΘ`.
//! `Θ'` is split by a truncated SVD; its isometry is then applied as a fixed
//! projector to `DΘ'`. When the bond cap leaves room, the isometry is first
//! extended by the directions of `DΘ'` that lie outside its range (with zero
//! weight in the base state), which makes the update exact.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::complex::{CMat4, C64, ZERO};
use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul, svd, Mat};
use crate::mps::{apply_gate_theta, Mps, SiteTensor, Sweep, TruncationPolicy};

/// Base state plus per-site derivative tensors sharing its gauge.
#[derive(Debug, Clone)]
pub struct TangentPair {
    pub(crate) state: Mps,
    pub(crate) deriv: Vec<SiteTensor>,
}

/// Two-site block of the augmented representation, `[[Θ, 0], [DΘ, Θ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTwoSite {
    /// Row-major `(2·rows) × (2·cols)` block matrix.
    pub theta: Vec<C64>,
    pub rows: usize,
    pub cols: usize,
}

impl AugmentedTwoSite {
    pub fn block(&self, bi: usize, bj: usize) -> Vec<C64> {
        let w = 2 * self.cols;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            let start = (bi * self.rows + i) * w + bj * self.cols;
            out.extend_from_slice(&self.theta[start..start + self.cols]);
        }
        out
    }
}

impl TangentPair {
    /// Pairs `state` with the zero tangent.
    pub fn zero(state: Mps) -> Self {
        let deriv = state.sites.iter().map(|s| SiteTensor::zeros(s.left, s.right)).collect();
        TangentPair { state, deriv }
    }

    pub fn state(&self) -> &Mps {
        &self.state
    }

    pub fn n_sites(&self) -> usize {
        self.state.n_sites()
    }

    pub fn is_zero(&self) -> bool {
        self.deriv.iter().all(|b| b.is_zero())
    }

    /// Bond dimensions of the tangent written as a single MPS.
    pub fn tangent_bond_dims(&self) -> Vec<usize> {
        self.state.bond_dims().into_iter().map(|d| 2 * d).collect()
    }

    pub fn max_tangent_bond(&self) -> usize {
        self.tangent_bond_dims().into_iter().max().unwrap_or(2)
    }

    /// The two-site augmented block at `(s, s+1)`.
    pub fn augmented_block(&self, s: usize) -> Result<AugmentedTwoSite> {
        self.state.check_site(s)?;
        let theta = self.state.theta(s);
        let dtheta = self.dtheta(s);
        let (rows, cols) = (theta.rows, theta.cols);
        let mut out = vec![ZERO; 4 * rows * cols];
        let w = 2 * cols;
        for i in 0..rows {
            for j in 0..cols {
                let t = theta.data[i * cols + j];
                out[i * w + j] = t;
                out[(rows + i) * w + cols + j] = t;
                out[(rows + i) * w + j] = dtheta.data[i * cols + j];
            }
        }
        Ok(AugmentedTwoSite { theta: out, rows, cols })
    }

    fn dtheta(&self, s: usize) -> Mat {
        let (a0, a1) = (&self.state.sites[s], &self.state.sites[s + 1]);
        let (b0, b1) = (&self.deriv[s], &self.deriv[s + 1]);
        let mut d = if b0.is_zero() {
            Mat::zeros(2 * a0.left, 2 * a1.right)
        } else {
            matmul(&b0.data, 2 * b0.left, b0.right, &a1.data, 2 * a1.right)
        };
        if !b1.is_zero() {
            d.add_assign(&matmul(&a0.data, 2 * a0.left, a0.right, &b1.data, 2 * b1.right));
        }
        d
    }

    /// Applies `gate` to the base state and `gate·Dψ + variation·ψ` to the tangent.
    pub fn propagate(&mut self, gate: &CMat4, variation: Option<&CMat4>, left_site: usize, sweep: Sweep) -> Result<f64> {
        self.state.check_site(left_site)?;
        self.center_into(left_site)?;
        let s = left_site;
        let l = self.state.sites[s].left;
        let r = self.state.sites[s + 1].right;
        let theta = self.state.theta(s);
        let dtheta = self.dtheta(s);
        let theta_new = apply_gate_theta(gate, &theta, l, r);
        let mut dtheta_new = apply_gate_theta(gate, &dtheta, l, r);
        if let Some(z) = variation {
            dtheta_new.add_assign(&apply_gate_theta(z, &theta, l, r));
        }
        self.split(s, theta_new, dtheta_new, sweep)
    }

    /// Moves the shared orthogonality center to `to`.
    pub fn move_center(&mut self, to: usize) -> Result<()> {
        let n = self.n_sites();
        if to >= n {
            return Err(invalid("center index out of range"));
        }
        let c = match self.state.center {
            Some(c) => c,
            None => {
                if !self.is_zero() {
                    return Err(Error::Internal("tangent pair lost its gauge".into()));
                }
                self.state.move_center(to);
                self.deriv = self.state.sites.iter().map(|s| SiteTensor::zeros(s.left, s.right)).collect();
                return Ok(());
            }
        };
        for j in c..to {
            self.gauge_step(j, Sweep::Right)?;
        }
        let mut j = c;
        while j > to {
            self.gauge_step(j - 1, Sweep::Left)?;
            j -= 1;
        }
        Ok(())
    }

    fn center_into(&mut self, s: usize) -> Result<()> {
        match self.state.center {
            Some(c) if c == s || c == s + 1 => Ok(()),
            Some(c) if c < s => self.move_center(s),
            Some(_) => self.move_center(s + 1),
            None => self.move_center(s),
        }
    }

    fn gauge_step(&mut self, s: usize, sweep: Sweep) -> Result<()> {
        if self.deriv[s].is_zero() && self.deriv[s + 1].is_zero() {
            // Nothing to carry: a plain QR move keeps the zero tangent zero.
            let target = match sweep {
                Sweep::Right => s + 1,
                Sweep::Left => s,
            };
            self.state.move_center(target);
            self.deriv[s] = SiteTensor::zeros(self.state.sites[s].left, self.state.sites[s].right);
            self.deriv[s + 1] = SiteTensor::zeros(self.state.sites[s + 1].left, self.state.sites[s + 1].right);
            return Ok(());
        }
        let theta = self.state.theta(s);
        let dtheta = self.dtheta(s);
        self.split(s, theta, dtheta, sweep).map(|_| ())
    }

    fn split(&mut self, s: usize, theta: Mat, dtheta: Mat, sweep: Sweep) -> Result<f64> {
        let policy = self.state.policy;
        let l = self.state.sites[s].left;
        let r = self.state.sites[s + 1].right;
        let d = svd(&theta)?;
        if !(d.s[0] > 0.0) || !d.s[0].is_finite() {
            return Err(Error::DegenerateState);
        }
        let k = policy.keep(&d.s);
        let total: f64 = d.s.iter().map(|x| x * x).sum();
        let dropped: f64 = d.s[k..].iter().map(|x| x * x).sum();
        let dzero = dtheta.data.iter().all(|z| z.re == 0.0 && z.im == 0.0);
        match sweep {
            Sweep::Right => {
                let mut u = d.u.first_cols(k);
                if !dzero && k < policy.chi_max {
                    u = extend_columns(&u, &dtheta, policy.chi_max - k, policy)?;
                }
                let ud = u.adjoint();
                let k2 = u.cols;
                let a1 = ud.matmul(&theta);
                let b1 = ud.matmul(&dtheta);
                self.state.sites[s] = SiteTensor::from_mat(l, k2, u);
                self.state.sites[s + 1] = SiteTensor::from_mat(k2, r, a1);
                self.deriv[s] = SiteTensor::zeros(l, k2);
                self.deriv[s + 1] = if dzero { SiteTensor::zeros(k2, r) } else { SiteTensor::from_mat(k2, r, b1) };
                self.state.center = Some(s + 1);
            }
            Sweep::Left => {
                let mut vt = d.vt.first_rows(k);
                if !dzero && k < policy.chi_max {
                    let ext = extend_columns(&vt.adjoint(), &dtheta.adjoint(), policy.chi_max - k, policy)?;
                    vt = ext.adjoint();
                }
                let v = vt.adjoint();
                let k2 = vt.rows;
                let a0 = theta.matmul(&v);
                let b0 = dtheta.matmul(&v);
                self.state.sites[s] = SiteTensor::from_mat(l, k2, a0);
                self.state.sites[s + 1] = SiteTensor::from_mat(k2, r, vt);
                self.deriv[s] = if dzero { SiteTensor::zeros(l, k2) } else { SiteTensor::from_mat(l, k2, b0) };
                self.deriv[s + 1] = SiteTensor::zeros(k2, r);
                self.state.center = Some(s);
            }
        }
        debug_assert!(self.state.max_bond() <= policy.chi_max);
        Ok(if total > 0.0 { dropped / total } else { 0.0 })
    }

    /// The tangent as a standalone MPS with block tensors `[[A, 0], [B, A]]`.
    pub fn tangent_mps(&self) -> Mps {
        let n = self.n_sites();
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (&self.state.sites[j], &self.deriv[j]);
            let (l, r) = (a.left, a.right);
            let first = j == 0;
            let last = j == n - 1;
            let bl = if first { 1 } else { 2 * l };
            let br = if last { 1 } else { 2 * r };
            let mut data = vec![ZERO; bl * 2 * br];
            for p in 0..2 {
                for x in 0..l {
                    for y in 0..r {
                        let av = a.at(x, p, y);
                        let bv = b.at(x, p, y);
                        // Block rows: 0 = upper, 1 = lower. First site keeps the lower row;
                        // last site keeps the left column.
                        let mut put = |row: usize, col: usize, v: C64| {
                            data[(row * 2 + p) * br + col] += v;
                        };
                        match (first, last) {
                            (true, true) => put(0, 0, bv),
                            (true, false) => {
                                put(0, y, bv);
                                put(0, r + y, av);
                            }
                            (false, true) => {
                                put(x, 0, av);
                                put(l + x, 0, bv);
                            }
                            (false, false) => {
                                put(x, y, av);
                                put(l + x, y, bv);
                                put(l + x, r + y, av);
                            }
                        }
                    }
                }
            }
            let id = mix_ids(a.id, b.id);
            sites.push(SiteTensor { left: bl, right: br, data, id });
        }
        let policy = TruncationPolicy { chi_max: 2 * self.state.policy.chi_max, trunc_tol: self.state.policy.trunc_tol };
        Mps { sites, policy, center: None }
    }
}

/// Orthonormal extension of the columns of `u` by the leading left singular
/// vectors of `(1 − u u†)·d`, at most `room` of them.
fn extend_columns(u: &Mat, d: &Mat, room: usize, policy: TruncationPolicy) -> Result<Mat> {
    let mut resid = d.clone();
    resid.sub_assign(&u.matmul(&u.adjoint().matmul(d)));
    let dn = d.frob_sq().sqrt();
    let rn = resid.frob_sq().sqrt();
    if !(rn > 1e-13 * dn) {
        return Ok(u.clone());
    }
    let max_new = room.min(u.rows - u.cols);
    if max_new == 0 {
        return Ok(u.clone());
    }
    let rd = svd(&resid)?;
    let floor = (policy.trunc_tol * rd.s[0]).max(1e-13 * dn);
    let extra = rd.s.iter().take_while(|&&x| x > floor).count().min(max_new);
    if extra == 0 {
        return Ok(u.clone());
    }
    // Re-orthogonalize against u to remove round-off leakage.
    let mut w = rd.u.first_cols(extra);
    w.sub_assign(&u.matmul(&u.adjoint().matmul(&w)));
    let (q, _) = crate::linalg::qr(&w);
    Ok(u.hcat(&q))
}

pub(crate) fn mix_ids(a: u64, b: u64) -> u64 {
    crate::complex::split_seed(a, b.rotate_left(17) ^ 0xA5A5_5A5A_DEAD_BEEF)
}
