//! Small row-major dense complex matrices. Contractions are written by hand;
//! factorizations go through nalgebra.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::linalg::Bidiagonal;
use nalgebra::DMatrix;
use num_complex::Complex64 as C;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![C::new(0.0, 0.0); rows * cols] }
    }

    #[cfg(test)]
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<C>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        matmul(&self.data, self.rows, self.cols, &other.data, other.cols)
    }

    pub fn adjoint(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    #[cfg(test)]
    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn sub_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
    }

    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Columns `[0, k)`.
    pub fn first_cols(&self, k: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, k);
        for i in 0..self.rows {
            out.data[i * k..(i + 1) * k].copy_from_slice(&self.data[i * self.cols..i * self.cols + k]);
        }
        out
    }

    /// Rows `[0, k)`.
    pub fn first_rows(&self, k: usize) -> Mat {
        Mat::from_data(k, self.cols, self.data[..k * self.cols].to_vec())
    }

    pub fn hcat(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut out = Mat::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols]
                .copy_from_slice(&self.data[i * self.cols..(i + 1) * self.cols]);
            out.data[i * cols + self.cols..(i + 1) * cols]
                .copy_from_slice(&other.data[i * other.cols..(i + 1) * other.cols]);
        }
        out
    }

    pub fn to_na(&self) -> DMatrix<C> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_na(m: &DMatrix<C>) -> Mat {
        let mut out = Mat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

/// Row-major product of an `m x k` and a `k x n` matrix.
pub(crate) fn matmul(a: &[C], m: usize, k: usize, b: &[C], n: usize) -> Mat {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![C::new(0.0, 0.0); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip.re == 0.0 && aip.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Mat::from_data(m, n, out)
}

/// `a^T b` for row-major `a` (`k x m`) and `b` (`k x n`).
pub(crate) fn matmul_tn(a: &[C], k: usize, m: usize, b: &[C], n: usize) -> Mat {
    let mut out = vec![C::new(0.0, 0.0); m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            if api.re == 0.0 && api.im == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
    Mat::from_data(m, n, out)
}

pub(crate) struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

/// Thin SVD with singular values in descending order.
///
/// The Householder bidiagonalization comes from nalgebra; the real bidiagonal is
/// then diagonalized here by Golub-Reinsch implicit-shift QR sweeps, with the
/// (real) rotations accumulated into the complex singular vectors. nalgebra's
/// own SVD iteration (0.33) returns wrong factors for rank-deficient input.
pub(crate) fn svd(m: &Mat) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::Numerical("non-finite entries entering SVD".into()));
    }
    if m.rows < m.cols {
        let t = svd(&m.adjoint())?;
        return Ok(Svd { u: t.vt.adjoint(), s: t.s, vt: t.u.adjoint() });
    }
    let (rows, n) = (m.rows, m.cols);
    let bi = Bidiagonal::new(m.to_na());
    let mut w: Vec<f64> = bi.diagonal().iter().copied().collect();
    let mut rv1 = vec![0.0; n];
    for (i, e) in bi.off_diagonal().iter().enumerate() {
        rv1[i + 1] = *e;
    }
    let (u_na, vt_na) = (bi.u(), bi.v_t());
    // Row i of `ut` is column i of U; row i of `vr` is row i of V^†.
    let mut ut = Rows::new(n, rows, |i, r| u_na[(r, i)]);
    let mut vr = Rows::new(n, n, |i, c| vt_na[(i, c)]);
    bidiagonal_qr(&mut w, &mut rv1, &mut ut, &mut vr)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Mat::zeros(rows, n);
    let mut vt = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (new, &old) in order.iter().enumerate() {
        s.push(w[old]);
        for (r, z) in ut.row(old).iter().enumerate() {
            u.data[r * n + new] = *z;
        }
        vt.data[new * n..(new + 1) * n].copy_from_slice(vr.row(old));
    }
    Ok(Svd { u, s, vt })
}

/// Row-major stack of equally long complex rows.
struct Rows {
    len: usize,
    data: Vec<C>,
}

impl Rows {
    fn new(count: usize, len: usize, f: impl Fn(usize, usize) -> C) -> Rows {
        let mut data = Vec::with_capacity(count * len);
        for i in 0..count {
            for j in 0..len {
                data.push(f(i, j));
            }
        }
        Rows { len, data }
    }

    fn row(&self, i: usize) -> &[C] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    /// `(a, b) <- (c·a + s·b, c·b − s·a)` for rows `a < b` or `a > b`.
    fn rotate(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let len = self.len;
        let (lo, hi, swap) = if a < b { (a, b, false) } else { (b, a, true) };
        let (head, tail) = self.data.split_at_mut(hi * len);
        let (x, y) = (&mut head[lo * len..(lo + 1) * len], &mut tail[..len]);
        let (ra, rb) = if swap { (y, x) } else { (x, y) };
        for (p, q) in ra.iter_mut().zip(rb.iter_mut()) {
            let (pa, qb) = (*p, *q);
            *p = pa * c + qb * s;
            *q = qb * c - pa * s;
        }
    }

    fn negate(&mut self, i: usize) {
        for z in &mut self.data[i * self.len..(i + 1) * self.len] {
            *z = -*z;
        }
    }
}

/// Diagonalizes the upper bidiagonal with diagonal `w` and superdiagonal
/// `rv1[1..]` (`rv1[i]` couples columns `i-1` and `i`).
fn bidiagonal_qr(w: &mut [f64], rv1: &mut [f64], ut: &mut Rows, vr: &mut Rows) -> Result<()> {
    let n = w.len();
    let anorm = w.iter().zip(rv1.iter()).map(|(a, b)| a.abs() + b.abs()).fold(0.0, f64::max);
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            // Find the split point l: rv1[l] negligible, or w[l-1] negligible.
            let mut l = k;
            let mut cancel = true;
            loop {
                if rv1[l].abs() + anorm == anorm {
                    cancel = false;
                    break;
                }
                if w[l - 1].abs() + anorm == anorm {
                    break;
                }
                l -= 1;
            }
            if cancel {
                // w[l-1] is zero: chase rv1[l] out with rotations from the left.
                let nm = l - 1;
                let (mut c, mut s) = (0.0, 1.0);
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() + anorm == anorm {
                        break;
                    }
                    let g = w[i];
                    let h = f.hypot(g);
                    w[i] = h;
                    c = g / h;
                    s = -f / h;
                    ut.rotate(nm, i, c, s);
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                    vr.negate(k);
                }
                break;
            }
            its += 1;
            if its > 100 {
                return Err(Error::Numerical("SVD did not converge".into()));
            }
            let nm = k - 1;
            let (mut x, y0, g0, h0) = (w[l], w[nm], rv1[nm], rv1[k]);
            let mut f = ((y0 - z) * (y0 + z) + (g0 - h0) * (g0 + h0)) / (2.0 * h0 * y0);
            let g1 = f.hypot(1.0);
            f = ((x - z) * (x + z) + h0 * ((y0 / (f + g1.copysign(f))) - h0)) / x;
            let (mut c, mut s) = (1.0, 1.0);
            for j in l..=nm {
                let i = j + 1;
                let mut g = rv1[i];
                let mut y = w[i];
                let mut h = s * g;
                g *= c;
                let mut zz = f.hypot(h);
                rv1[j] = zz;
                c = f / zz;
                s = h / zz;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                vr.rotate(j, i, c, s);
                zz = f.hypot(h);
                w[j] = zz;
                if zz != 0.0 {
                    c = f / zz;
                    s = h / zz;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                ut.rotate(j, i, c, s);
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
    }
    Ok(())
}

/// Thin QR, `m = q r` with `q` having orthonormal columns.
pub(crate) fn qr(m: &Mat) -> (Mat, Mat) {
    let dec = m.to_na().qr();
    (Mat::from_na(&dec.q()), Mat::from_na(&dec.r()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let data = (0..rows * cols).map(|_| C::new(next(), next())).collect();
        Mat::from_data(rows, cols, data)
    }

    #[test]
    fn svd_reconstructs_and_sorts() {
        for &(r, c) in &[(4, 7), (7, 4), (6, 6)] {
            let m = sample(r, c, 3);
            let d = svd(&m).unwrap();
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let mut us = d.u.clone();
            for i in 0..us.rows {
                for j in 0..us.cols {
                    us.data[i * us.cols + j] *= d.s[j];
                }
            }
            let mut back = us.matmul(&d.vt);
            back.sub_assign(&m);
            assert!(back.frob_sq().sqrt() < 1e-12);
        }
    }

    #[test]
    fn transpose_product_matches() {
        let a = sample(5, 3, 1);
        let b = sample(5, 4, 2);
        let x = matmul_tn(&a.data, 5, 3, &b.data, 4);
        let mut y = a.transpose().matmul(&b);
        y.sub_assign(&x);
        assert!(y.frob_sq() < 1e-28);
    }

    #[test]
    fn svd_of_rank_deficient_products() {
        let mut seed = 11;
        for rows in 1..9 {
            for cols in 1..9 {
                for rank in 1..=rows.min(cols) {
                    seed += 1;
                    let a = sample(rows, rank, seed);
                    let b = sample(rank, cols, seed + 1000);
                    let m = a.matmul(&b);
                    let d = svd(&m).unwrap();
                    let k = d.s.len();
                    let mut us = d.u.clone();
                    for i in 0..rows {
                        for j in 0..k {
                            us.data[i * k + j] *= d.s[j];
                        }
                    }
                    let mut back = us.matmul(&d.vt);
                    back.sub_assign(&m);
                    assert!(back.frob_sq().sqrt() < 1e-12, "{rows}x{cols} rank {rank}");
                    let mut gram = d.u.adjoint().matmul(&d.u);
                    gram.sub_assign(&Mat::identity(k));
                    assert!(gram.frob_sq().sqrt() < 1e-12);
                    assert!(d.s[rank..].iter().all(|x| *x < 1e-12 * d.s[0]));
                    let nrm: f64 = d.s.iter().map(|x| x * x).sum();
                    assert!((nrm - m.frob_sq()).abs() < 1e-12 * nrm);
                }
            }
        }
    }

    #[test]
    fn qr_reconstructs() {
        let m = sample(8, 3, 9);
        let (q, r) = qr(&m);
        assert_eq!((q.rows, q.cols, r.rows, r.cols), (8, 3, 3, 3));
        let mut back = q.matmul(&r);
        back.sub_assign(&m);
        assert!(back.frob_sq().sqrt() < 1e-12);
    }
}
