//! Open-boundary matrix product states.
//!
//! Site tensors are stored row-major with index order `(left, physical, right)`,
//! so the same buffer is both the `(2·left) × right` and the `left × (2·right)`
//! matricization. A two-site block `Θ[a, p1, p2, b]` is the `(2·l) × (2·r)`
//! product of the left-grouped and right-grouped matrices.
//!
//! Every site tensor carries an identifier that changes whenever its content
//! changes; contraction caches use it to decide what can be reused.
//!
//! Forward states are cached in truncated form: when the bond cap binds, the
//! cached intermediate states are the truncated ones, and derivatives are those
//! of the truncated contraction.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::complex::{CMat4, C64, ONE, ZERO};
use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul, matmul_tn, qr, svd, Mat};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Relative singular-value cutoff plus a hard bond cap.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncationPolicy {
    pub chi_max: usize,
    pub trunc_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { chi_max: 1 << 16, trunc_tol: 1e-12 }
    }
}

impl TruncationPolicy {
    pub fn new(chi_max: usize, trunc_tol: f64) -> Result<Self> {
        if chi_max == 0 {
            return Err(invalid("chi_max must be positive"));
        }
        if !(trunc_tol >= 0.0) {
            return Err(invalid("trunc_tol must be non-negative"));
        }
        Ok(TruncationPolicy { chi_max, trunc_tol })
    }

    /// Number of singular values (sorted descending) to keep.
    pub(crate) fn keep(&self, s: &[f64]) -> usize {
        let smax = s.first().copied().unwrap_or(0.0);
        let cut = self.trunc_tol * smax;
        let mut k = s.iter().take_while(|&&x| x > cut).count();
        k = k.min(self.chi_max).max(1);
        k
    }
}

/// Where the orthogonality center ends up after a two-site update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Left,
    Right,
}

impl Sweep {
    pub fn flip(self) -> Sweep {
        match self {
            Sweep::Left => Sweep::Right,
            Sweep::Right => Sweep::Left,
        }
    }
}

/// Rank-3 site tensor `(left, physical=2, right)`.
#[derive(Debug, Clone)]
pub struct SiteTensor {
    pub(crate) left: usize,
    pub(crate) right: usize,
    pub(crate) data: Vec<C64>,
    pub(crate) id: u64,
}

impl PartialEq for SiteTensor {
    fn eq(&self, other: &Self) -> bool {
        self.left == other.left && self.right == other.right && self.data == other.data
    }
}

impl SiteTensor {
    pub fn new(left: usize, right: usize, data: Vec<C64>) -> Result<Self> {
        if left == 0 || right == 0 || data.len() != left * 2 * right {
            return Err(invalid("site tensor shape does not match its data"));
        }
        Ok(SiteTensor { left, right, data, id: fresh_id() })
    }

    pub(crate) fn from_mat(left: usize, right: usize, m: Mat) -> Self {
        debug_assert_eq!(m.data.len(), left * 2 * right);
        SiteTensor { left, right, data: m.data, id: fresh_id() }
    }

    pub(crate) fn zeros(left: usize, right: usize) -> Self {
        SiteTensor { left, right, data: vec![ZERO; 2 * left * right], id: fresh_id() }
    }

    pub fn left_bond(&self) -> usize {
        self.left
    }

    pub fn right_bond(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    #[inline]
    pub fn at(&self, a: usize, p: usize, b: usize) -> C64 {
        self.data[(a * 2 + p) * self.right + b]
    }

    /// `(2·left) × right` view.
    pub(crate) fn left_mat(&self) -> Mat {
        Mat::from_data(2 * self.left, self.right, self.data.clone())
    }

    /// `left × (2·right)` view.
    pub(crate) fn right_mat(&self) -> Mat {
        Mat::from_data(self.left, 2 * self.right, self.data.clone())
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// Matrix product state with open boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    pub(crate) sites: Vec<SiteTensor>,
    pub(crate) policy: TruncationPolicy,
    pub(crate) center: Option<usize>,
}

impl Mps {
    pub fn new(sites: Vec<SiteTensor>, policy: TruncationPolicy) -> Result<Self> {
        if sites.len() < 2 {
            return Err(invalid("an MPS needs at least two sites"));
        }
        if sites[0].left != 1 || sites[sites.len() - 1].right != 1 {
            return Err(invalid("boundary bonds must have dimension 1"));
        }
        for w in sites.windows(2) {
            if w[0].right != w[1].left {
                return Err(invalid("adjacent bond dimensions disagree"));
            }
        }
        Ok(Mps { sites, policy, center: None })
    }

    pub fn product_state(vectors: &[[C64; 2]], policy: TruncationPolicy) -> Result<Self> {
        let sites = vectors.iter().map(|v| SiteTensor::new(1, 1, vec![v[0], v[1]])).collect::<Result<Vec<_>>>()?;
        let mut m = Mps::new(sites, policy)?;
        // A product state is canonical around any site if every factor is normalized,
        // which holds for Haar samples; other inputs get an explicit gauge pass.
        let normalized = vectors.iter().all(|v| ((v[0].norm_sqr() + v[1].norm_sqr()) - 1.0).abs() < 1e-14);
        if normalized {
            m.center = Some(0);
        }
        Ok(m)
    }

    /// Computational basis state; `bits[0]` is site 0.
    pub fn basis_state(bits: &[u8], policy: TruncationPolicy) -> Result<Self> {
        let v: Vec<[C64; 2]> = bits.iter().map(|&b| if b == 0 { [ONE, ZERO] } else { [ZERO, ONE] }).collect();
        Mps::product_state(&v, policy)
    }

    /// Exact decomposition of a dense vector (site 0 = most significant bit).
    pub fn from_dense(amps: &[C64], n: usize, policy: TruncationPolicy) -> Result<Self> {
        if n < 2 || amps.len() != 1usize << n {
            return Err(invalid("dense vector length must be 2^n with n >= 2"));
        }
        let mut sites = Vec::with_capacity(n);
        let mut rest = Mat::from_data(1, amps.len(), amps.to_vec());
        let mut left = 1;
        for _ in 0..n - 1 {
            let cols = rest.data.len() / (2 * left);
            let m = Mat::from_data(2 * left, cols, rest.data);
            let d = svd(&m)?;
            let k = policy.keep(&d.s);
            let u = d.u.first_cols(k);
            let mut sv = d.vt.first_rows(k);
            for i in 0..k {
                for j in 0..sv.cols {
                    sv.data[i * sv.cols + j] *= d.s[i];
                }
            }
            sites.push(SiteTensor::from_mat(left, k, u));
            rest = sv;
            left = k;
        }
        sites.push(SiteTensor::from_mat(left, 1, rest));
        let mut m = Mps::new(sites, policy)?;
        m.center = Some(n - 1);
        Ok(m)
    }

    /// Dense statevector, site 0 = most significant bit.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut acc = Mat::from_data(1, 1, vec![ONE]);
        for s in &self.sites {
            // acc: (2^j) × left  → (2^{j+1}) × right
            let rows = acc.rows;
            let prod = matmul(&acc.data, rows, s.left, &s.data, 2 * s.right);
            acc = Mat::from_data(rows * 2, s.right, prod.data);
        }
        acc.data
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn with_policy(mut self, policy: TruncationPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Internal bond dimensions, `n - 1` entries.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|s| s.right).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Mps {
        let sites = self
            .sites
            .iter()
            .map(|s| SiteTensor { left: s.left, right: s.right, data: s.data.iter().map(|z| z.conj()).collect(), id: fresh_id() })
            .collect();
        Mps { sites, policy: self.policy, center: self.center }
    }

    pub fn scaled(&self, c: C64) -> Mps {
        let mut out = self.clone();
        let j = self.center.unwrap_or(0);
        let s = &mut out.sites[j];
        for z in s.data.iter_mut() {
            *z *= c;
        }
        s.id = fresh_id();
        out
    }

    /// `⟨self|self⟩` with the usual sesquilinear product.
    pub fn norm_sqr(&self) -> f64 {
        inner(&self.conj(), self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// Moves the orthogonality center to `to`, establishing the gauge if needed.
    pub fn move_center(&mut self, to: usize) {
        let n = self.sites.len();
        assert!(to < n);
        let (from_left, from_right) = match self.center {
            Some(c) => (c, c),
            None => (0, n - 1),
        };
        for j in from_left..to {
            self.shift_right(j);
        }
        for j in (to + 1..=from_right).rev() {
            self.shift_left(j);
        }
        self.center = Some(to);
    }

    fn shift_right(&mut self, j: usize) {
        let a = &self.sites[j];
        let (q, r) = qr(&a.left_mat());
        let k = q.cols;
        let l = a.left;
        let next = &self.sites[j + 1];
        let nr = matmul(&r.data, r.rows, r.cols, &next.data, 2 * next.right);
        let nright = next.right;
        self.sites[j] = SiteTensor::from_mat(l, k, q);
        self.sites[j + 1] = SiteTensor::from_mat(k, nright, nr);
    }

    fn shift_left(&mut self, j: usize) {
        // LQ via QR of the adjoint.
        let a = &self.sites[j];
        let (q, r) = qr(&a.right_mat().adjoint());
        let k = q.cols;
        let right = a.right;
        let l_mat = r.adjoint();
        let q_t = q.adjoint();
        let prev = &self.sites[j - 1];
        let pl = prev.left;
        let np = matmul(&prev.data, 2 * pl, prev.right, &l_mat.data, k);
        self.sites[j] = SiteTensor::from_mat(k, right, q_t);
        self.sites[j - 1] = SiteTensor::from_mat(pl, k, np);
    }

    pub(crate) fn check_site(&self, left_site: usize) -> Result<()> {
        if left_site + 1 >= self.sites.len() {
            return Err(invalid(alloc::format!(
                "gate site {left_site} out of range for {} sites",
                self.sites.len()
            )));
        }
        Ok(())
    }

    /// Brings the center into `{s, s+1}`.
    pub(crate) fn center_into(&mut self, s: usize) {
        match self.center {
            Some(c) if c == s || c == s + 1 => {}
            Some(c) if c < s => self.move_center(s),
            Some(_) => self.move_center(s + 1),
            None => self.move_center(s),
        }
    }

    pub(crate) fn theta(&self, s: usize) -> Mat {
        let a = &self.sites[s];
        let b = &self.sites[s + 1];
        matmul(&a.data, 2 * a.left, a.right, &b.data, 2 * b.right)
    }

    /// Applies `gate` (or its adjoint) to sites `(left_site, left_site+1)`.
    pub fn apply_two_site_gate(&self, gate: &CMat4, left_site: usize, adjoint: bool) -> Result<Mps> {
        let mut out = self.clone();
        let g = if adjoint { gate.adjoint() } else { *gate };
        out.apply_gate_mut(&g, left_site, Sweep::Right)?;
        Ok(out)
    }

    /// In-place gate application; returns the discarded weight `Σ_dropped s² / Σ s²`.
    pub fn apply_gate_mut(&mut self, gate: &CMat4, left_site: usize, sweep: Sweep) -> Result<f64> {
        self.check_site(left_site)?;
        self.center_into(left_site);
        let l = self.sites[left_site].left;
        let r = self.sites[left_site + 1].right;
        let theta = apply_gate_theta(gate, &self.theta(left_site), l, r);
        self.split(left_site, theta, sweep)
    }

    /// Replaces sites `(s, s+1)` by the truncated SVD of `theta`.
    pub(crate) fn split(&mut self, s: usize, theta: Mat, sweep: Sweep) -> Result<f64> {
        let l = self.sites[s].left;
        let r = self.sites[s + 1].right;
        let d = svd(&theta)?;
        if !(d.s[0] > 0.0) || !d.s[0].is_finite() {
            return Err(Error::DegenerateState);
        }
        let k = self.policy.keep(&d.s);
        let total: f64 = d.s.iter().map(|x| x * x).sum();
        let dropped: f64 = d.s[k..].iter().map(|x| x * x).sum();
        let mut u = d.u.first_cols(k);
        let mut vt = d.vt.first_rows(k);
        match sweep {
            Sweep::Right => {
                for i in 0..k {
                    for j in 0..vt.cols {
                        vt.data[i * vt.cols + j] *= d.s[i];
                    }
                }
                self.center = Some(s + 1);
            }
            Sweep::Left => {
                for i in 0..u.rows {
                    for j in 0..k {
                        u.data[i * k + j] *= d.s[j];
                    }
                }
                self.center = Some(s);
            }
        }
        self.sites[s] = SiteTensor::from_mat(l, k, u);
        self.sites[s + 1] = SiteTensor::from_mat(k, r, vt);
        Ok(if total > 0.0 { dropped / total } else { 0.0 })
    }

    /// Recompresses with the stored policy by a left-to-right QR sweep followed by a
    /// right-to-left SVD sweep. Returns the accumulated discarded weight.
    pub fn compress(&mut self) -> Result<f64> {
        let n = self.sites.len();
        self.center = None;
        self.move_center(n - 1);
        let mut discarded = 0.0;
        for s in (0..n - 1).rev() {
            let theta = self.theta(s);
            discarded += self.split(s, theta, Sweep::Left)?;
        }
        Ok(discarded)
    }
}

/// `Θ'[a,P,b] = Σ_Q G[P,Q] Θ[a,Q,b]` on a two-site block of shape `(2l) × (2r)`.
pub(crate) fn apply_gate_theta(gate: &CMat4, theta: &Mat, l: usize, r: usize) -> Mat {
    let mut out = Mat::zeros(2 * l, 2 * r);
    for a in 0..l {
        for p in 0..4 {
            let (p1, p2) = (p / 2, p % 2);
            let orow = (a * 2 + p1) * 2 * r + p2 * r;
            for q in 0..4 {
                let g = gate[(p, q)];
                if g.re == 0.0 && g.im == 0.0 {
                    continue;
                }
                let (q1, q2) = (q / 2, q % 2);
                let irow = (a * 2 + q1) * 2 * r + q2 * r;
                for b in 0..r {
                    out.data[orow + b] += g * theta.data[irow + b];
                }
            }
        }
    }
    out
}

/// Left transfer step `L'[c,d] = Σ L[a,b] bra[a,p,c] ket[b,p,d]`.
pub(crate) fn transfer_left(l: &Mat, bra: &SiteTensor, ket: &SiteTensor) -> Mat {
    // X[a,(p,d)] = Σ_b L[a,b] ket[b,(p,d)]
    let x = matmul(&l.data, l.rows, l.cols, &ket.data, 2 * ket.right);
    // L'[c,d] = Σ_{(a,p)} bra[(a,p),c] X[(a,p),d]
    matmul_tn(&bra.data, 2 * bra.left, bra.right, &x.data, ket.right)
}

/// Right transfer step `R'[a,b] = Σ bra[a,p,c] ket[b,p,d] R[c,d]`.
pub(crate) fn transfer_right(r: &Mat, bra: &SiteTensor, ket: &SiteTensor) -> Mat {
    // Y[(a,p),d] = Σ_c bra[(a,p),c] R[c,d]
    let y = matmul(&bra.data, 2 * bra.left, bra.right, &r.data, r.cols);
    // R'[a,b] = Σ_{p,d} Y[a,(p,d)] ket[b,(p,d)]
    let mut out = Mat::zeros(bra.left, ket.left);
    let w = 2 * ket.right;
    for a in 0..bra.left {
        let yr = &y.data[a * w..(a + 1) * w];
        for b in 0..ket.left {
            let kr = &ket.data[b * w..(b + 1) * w];
            let mut acc = ZERO;
            for (x, z) in yr.iter().zip(kr) {
                acc += x * z;
            }
            out.data[a * ket.left + b] = acc;
        }
    }
    out
}

/// Bilinear overlap `bra^T ket` (no conjugation). For the sesquilinear
/// `⟨a|b⟩` pass `a.conj()` as `bra`.
pub fn inner(bra: &Mps, ket: &Mps) -> Result<C64> {
    if bra.n_sites() != ket.n_sites() {
        return Err(invalid("inner product of states with different site counts"));
    }
    let mut l = Mat::from_data(1, 1, vec![ONE]);
    for (b, k) in bra.sites.iter().zip(&ket.sites) {
        l = transfer_left(&l, b, k);
    }
    Ok(l.data[0])
}

/// Sesquilinear `⟨a|b⟩`.
pub fn braket(a: &Mps, b: &Mps) -> Result<C64> {
    inner(&a.conj(), b)
}

/// `c_a·a + c_b·b` via the direct sum, recompressed to `a`'s policy.
/// Returns the state and the discarded weight of the recompression.
pub fn add(a: &Mps, b: &Mps, coeff_a: C64, coeff_b: C64) -> Result<(Mps, f64)> {
    let n = a.n_sites();
    if n != b.n_sites() {
        return Err(invalid("cannot add states with different site counts"));
    }
    let mut sites = Vec::with_capacity(n);
    for j in 0..n {
        let (x, y) = (&a.sites[j], &b.sites[j]);
        let left = if j == 0 { 1 } else { x.left + y.left };
        let right = if j == n - 1 { 1 } else { x.right + y.right };
        let mut t = SiteTensor::zeros(left, right);
        let (ca, cb) = if j == 0 { (coeff_a, coeff_b) } else { (ONE, ONE) };
        let (yl0, yr0) = (if j == 0 { 0 } else { x.left }, if j == n - 1 { 0 } else { x.right });
        for p in 0..2 {
            for aa in 0..x.left {
                for bb in 0..x.right {
                    t.data[(aa * 2 + p) * right + bb] = ca * x.at(aa, p, bb);
                }
            }
            for aa in 0..y.left {
                for bb in 0..y.right {
                    t.data[((aa + yl0) * 2 + p) * right + bb + yr0] += cb * y.at(aa, p, bb);
                }
            }
        }
        sites.push(t);
    }
    let mut out = Mps::new(sites, a.policy)?;
    if out.to_norm_is_zero() {
        return Ok((zero_like(a), 0.0));
    }
    let w = out.compress_allow_zero()?;
    Ok((out, w))
}

impl Mps {
    fn to_norm_is_zero(&self) -> bool {
        self.sites.iter().any(|s| s.is_zero())
    }

    fn compress_allow_zero(&mut self) -> Result<f64> {
        match self.compress() {
            Ok(w) => Ok(w),
            Err(Error::DegenerateState) => {
                *self = zero_like(self);
                Ok(0.0)
            }
            Err(e) => Err(e),
        }
    }
}

/// Bond-1 state with all-zero tensors.
pub fn zero_like(m: &Mps) -> Mps {
    let sites = (0..m.n_sites()).map(|_| SiteTensor::zeros(1, 1)).collect();
    Mps { sites, policy: m.policy, center: None }
}
