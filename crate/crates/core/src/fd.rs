//! Central finite differences over gate parameters.
//!
//! The complex gradient of a real function follows `∇f = ∂f/∂x + i·∂f/∂y`
//! entrywise (`x`, `y` the real and imaginary parts), so that the directional
//! derivative along `V` is `Re⟨∇f, V⟩ = Re tr(∇f^† V)`.

use alloc::vec::Vec;

use crate::complex::{GateVec, C64, I};
use crate::error::{invalid, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(invalid("finite-difference step must lie in [1e-7, 1e-3]"));
    }
    Ok(())
}

fn shifted(x: &GateVec, coord: usize, delta: f64) -> GateVec {
    let mut r = x.to_real();
    r[coord] += delta;
    GateVec::from_real(&r)
}

/// `∂f/∂θ` for real coordinate `coord` of `x` (ordering of [`GateVec::to_real`]).
pub fn fd_partial<T, F>(mut f: F, x: &GateVec, coord: usize, eps: f64) -> Result<T>
where
    T: core::ops::Sub<Output = T> + core::ops::Div<f64, Output = T>,
    F: FnMut(&GateVec) -> Result<T>,
{
    check_eps(eps)?;
    let plus = f(&shifted(x, coord, eps))?;
    let minus = f(&shifted(x, coord, -eps))?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Complex gradient of a real function, one central difference per real coordinate.
pub fn fd_gradient<F>(mut f: F, x: &GateVec, eps: f64) -> Result<GateVec>
where
    F: FnMut(&GateVec) -> Result<f64>,
{
    let n = x.len() * 32;
    let mut parts = Vec::with_capacity(n);
    for c in 0..n {
        parts.push(fd_partial(&mut f, x, c, eps)?);
    }
    Ok(GateVec::from_real(&parts))
}

/// Partials of a complex function with respect to the real and the imaginary
/// part of every entry.
pub fn fd_complex_partials<F>(mut f: F, x: &GateVec, eps: f64) -> Result<(GateVec, GateVec)>
where
    F: FnMut(&GateVec) -> Result<C64>,
{
    let n = x.len() * 32;
    let mut dre = GateVec::zeros(x.len());
    let mut dim = GateVec::zeros(x.len());
    for c in 0..n {
        let d: C64 = fd_partial(&mut f, x, c, eps)?;
        let (g, e) = (c / 32, (c % 32) / 2);
        let slot = if c % 2 == 0 { &mut dre.0[g] } else { &mut dim.0[g] };
        slot[(e / 4, e % 4)] = d;
    }
    Ok((dre, dim))
}

/// Wirtinger derivatives `(∂f/∂z, ∂f/∂z̄)` of a complex function from its real partials.
pub fn wirtinger(dre: &GateVec, dim: &GateVec) -> (GateVec, GateVec) {
    let mut dz = dre.clone();
    dz.axpy(-I, dim);
    let mut dzb = dre.clone();
    dzb.axpy(I, dim);
    (dz.scaled(C64::new(0.5, 0.0)), dzb.scaled(C64::new(0.5, 0.0)))
}

fn along(x: &GateVec, v: &GateVec, t: f64) -> GateVec {
    let mut y = x.clone();
    y.axpy(C64::new(t, 0.0), v);
    y
}

/// `(f(x + εv) − f(x − εv)) / 2ε`.
pub fn fd_directional<T, F>(mut f: F, x: &GateVec, v: &GateVec, eps: f64) -> Result<T>
where
    T: core::ops::Sub<Output = T> + core::ops::Div<f64, Output = T>,
    F: FnMut(&GateVec) -> Result<T>,
{
    check_eps(eps)?;
    Ok((f(&along(x, v, eps))? - f(&along(x, v, -eps))?) / (2.0 * eps))
}

/// Directional difference of a gate-vector valued map, e.g. a gradient.
pub fn fd_directional_vec<F>(mut f: F, x: &GateVec, v: &GateVec, eps: f64) -> Result<GateVec>
where
    F: FnMut(&GateVec) -> Result<GateVec>,
{
    check_eps(eps)?;
    let mut d = f(&along(x, v, eps))?;
    let m = f(&along(x, v, -eps))?;
    d.axpy(C64::new(-1.0, 0.0), &m);
    Ok(d.scaled(C64::new(1.0 / (2.0 * eps), 0.0)))
}

/// Central differences at `eps` and `2·eps` plus the Richardson extrapolation.
/// For a second-order-accurate difference, `|d(2ε) − d*| / |d(ε) − d*| ≈ 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Richardson {
    pub at_eps: f64,
    pub at_2eps: f64,
    pub extrapolated: f64,
}

pub fn fd_directional_richardson<F>(mut f: F, x: &GateVec, v: &GateVec, eps: f64) -> Result<Richardson>
where
    F: FnMut(&GateVec) -> Result<f64>,
{
    let a: f64 = fd_directional(&mut f, x, v, eps)?;
    let b: f64 = fd_directional(&mut f, x, v, 2.0 * eps)?;
    Ok(Richardson { at_eps: a, at_2eps: b, extrapolated: (4.0 * a - b) / 3.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{random_cmat4, rng_from_seed, CMat4};

    #[test]
    fn quadratic_distance() {
        let mut rng = rng_from_seed(1);
        let a = random_cmat4(&mut rng);
        let g = GateVec(alloc::vec![random_cmat4(&mut rng)]);
        let f = |x: &GateVec| -> Result<f64> { Ok((x.0[0] - a).iter().map(|z| z.norm_sqr()).sum()) };
        let grad = fd_gradient(f, &g, 1e-5).unwrap();
        let expect = (g.0[0] - a) * C64::new(2.0, 0.0);
        assert!(crate::complex::frob_norm(&(grad.0[0] - expect)) < 1e-6);
    }

    #[test]
    fn linear_functional() {
        let mut rng = rng_from_seed(2);
        let b = random_cmat4(&mut rng);
        let g = GateVec(alloc::vec![random_cmat4(&mut rng)]);
        let f = |x: &GateVec| -> Result<f64> { Ok((b * x.0[0]).trace().re) };
        let grad = fd_gradient(f, &g, 1e-5).unwrap();
        // Re tr(BG) = Re Σ B_ji G_ij, so ∇ = conj(B)^T.
        let expect: CMat4 = b.adjoint();
        assert!(crate::complex::frob_norm(&(grad.0[0] - expect)) < 1e-8);
    }

    #[test]
    fn rejects_bad_steps() {
        let g = GateVec::zeros(1);
        assert!(fd_gradient(|_| Ok(0.0), &g, 1e-2).is_err());
        assert!(fd_gradient(|_| Ok(0.0), &g, 1e-9).is_err());
    }

    #[test]
    fn richardson_ratio_is_four_for_smooth_functions() {
        let g = GateVec(alloc::vec![random_cmat4(&mut rng_from_seed(3))]);
        let v = GateVec(alloc::vec![random_cmat4(&mut rng_from_seed(4))]);
        let f = |x: &GateVec| -> Result<f64> { Ok(x.0[0].iter().map(|z| z.re.sin() * z.im.cos()).sum()) };
        let exact: f64 = g.0[0]
            .iter()
            .zip(v.0[0].iter())
            .map(|(z, d)| z.re.cos() * z.im.cos() * d.re - z.re.sin() * z.im.sin() * d.im)
            .sum();
        let r = fd_directional_richardson(f, &g, &v, 5e-4).unwrap();
        let ratio = (r.at_2eps - exact).abs() / (r.at_eps - exact).abs();
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        assert!((r.extrapolated - exact).abs() < 1e-10);
    }
}
