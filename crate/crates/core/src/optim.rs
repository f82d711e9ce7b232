//! Riemannian trust-region with a truncated CG inner solver, and Riemannian
//! ADAM, over any [`Problem`].
//!
//! Counter convention: the trust-region loop evaluates the gradient once at the
//! start and once at every proposed point (accepted or not), so gradient
//! evaluations equal proposals plus one; HVP evaluations equal the inner CG
//! iteration count.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::complex::GateVec;
use crate::error::{invalid, Error, Result};

/// Real inner-product space of tangent vectors.
pub trait Vector: Clone {
    fn dot(&self, other: &Self) -> f64;
    /// `self += alpha · x`.
    fn axpy(&mut self, alpha: f64, x: &Self);
    fn scale(&mut self, alpha: f64);
    fn zeros_like(&self) -> Self;
    /// Real coordinates, used by elementwise methods.
    fn to_components(&self) -> Vec<f64>;
    fn from_components(&self, c: &[f64]) -> Self;

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Vector for GateVec {
    fn dot(&self, other: &Self) -> f64 {
        self.re_dot(other)
    }

    fn axpy(&mut self, alpha: f64, x: &Self) {
        GateVec::axpy(self, crate::complex::C64::new(alpha, 0.0), x)
    }

    fn scale(&mut self, alpha: f64) {
        for m in &mut self.0 {
            *m *= crate::complex::C64::new(alpha, 0.0);
        }
    }

    fn zeros_like(&self) -> Self {
        GateVec::zeros(self.len())
    }

    fn to_components(&self) -> Vec<f64> {
        self.to_real()
    }

    fn from_components(&self, c: &[f64]) -> Self {
        GateVec::from_real(c)
    }
}

impl Vector for Vec<f64> {
    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x) {
            *a += alpha * b;
        }
    }

    fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            *a *= alpha;
        }
    }

    fn zeros_like(&self) -> Self {
        alloc::vec![0.0; self.len()]
    }

    fn to_components(&self) -> Vec<f64> {
        self.clone()
    }

    fn from_components(&self, c: &[f64]) -> Self {
        c.to_vec()
    }
}

/// Objective on a manifold with first- and second-order information.
pub trait Problem {
    type Point: Clone;
    type Tangent: Vector;

    fn cost(&mut self, x: &Self::Point) -> Result<f64>;
    /// Value and Riemannian gradient.
    fn gradient(&mut self, x: &Self::Point) -> Result<(f64, Self::Tangent)>;
    /// Riemannian Hessian applied to a tangent vector at `x`.
    fn hessian_vec(&mut self, x: &Self::Point, v: &Self::Tangent) -> Result<Self::Tangent>;
    fn retract(&mut self, x: &Self::Point, v: &Self::Tangent) -> Result<Self::Point>;
    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    fn project(&mut self, x: &Self::Point, v: &Self::Tangent) -> Result<Self::Tangent>;
    /// Moves `v` into the tangent space at `to`.
    fn transport(&mut self, to: &Self::Point, v: &Self::Tangent) -> Result<Self::Tangent> {
        self.project(to, v)
    }
    /// Distance of `x` from the manifold (reported in traces).
    fn feasibility(&self, _x: &Self::Point) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TcgStop {
    ZeroGradient,
    NegativeCurvature,
    ExceededRadius,
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TcgResult<T> {
    pub step: T,
    /// `H[step]`, accumulated during the iteration.
    pub hstep: T,
    pub boundary_hit: bool,
    pub n_hvp: usize,
    pub stop: TcgStop,
    /// `m(0) − m(step) = −⟨g, step⟩ − ½⟨step, H step⟩`.
    pub model_decrease: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcgConfig {
    pub max_iters: usize,
    pub kappa: f64,
    pub theta: f64,
}

/// Steihaug-Toint truncated CG on `min ⟨g,ξ⟩ + ½⟨ξ,Hξ⟩` subject to `‖ξ‖ ≤ delta`.
pub fn truncated_cg<T: Vector, H>(g: &T, mut hvp: H, delta: f64, cfg: &TcgConfig) -> Result<TcgResult<T>>
where
    H: FnMut(&T) -> Result<T>,
{
    let zero = g.zeros_like();
    let mut out = TcgResult {
        step: zero.clone(),
        hstep: zero.clone(),
        boundary_hit: false,
        n_hvp: 0,
        stop: TcgStop::ZeroGradient,
        model_decrease: 0.0,
    };
    let r0 = g.norm();
    if !(r0 > 0.0) || !(delta > 0.0) {
        return Ok(out);
    }
    let mut r = g.clone();
    let mut d = g.clone();
    d.scale(-1.0);
    let mut rr = r0 * r0;
    let mut ee = 0.0;
    let target = r0 * r0.powf(cfg.theta).min(cfg.kappa);
    out.stop = TcgStop::MaxIterations;
    for _ in 0..cfg.max_iters {
        let hd = hvp(&d)?;
        out.n_hvp += 1;
        let dhd = d.dot(&hd);
        let ed = out.step.dot(&d);
        let dd = d.dot(&d);
        let alpha = rr / dhd;
        let ee_new = ee + 2.0 * alpha * ed + alpha * alpha * dd;
        if !(dhd > 0.0) || ee_new >= delta * delta {
            let tau = (-ed + (ed * ed + dd * (delta * delta - ee)).max(0.0).sqrt()) / dd;
            out.step.axpy(tau, &d);
            out.hstep.axpy(tau, &hd);
            out.boundary_hit = true;
            out.stop = if dhd > 0.0 { TcgStop::ExceededRadius } else { TcgStop::NegativeCurvature };
            break;
        }
        out.step.axpy(alpha, &d);
        out.hstep.axpy(alpha, &hd);
        ee = ee_new;
        r.axpy(alpha, &hd);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            out.stop = TcgStop::Converged;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        d.scale(beta);
        d.axpy(-1.0, &r);
    }
    out.model_decrease = -g.dot(&out.step) - 0.5 * out.step.dot(&out.hstep);
    if !(out.model_decrease >= 0.0) {
        // Roundoff can spoil monotonicity on a nearly flat model; fall back to the
        // Cauchy point, which never increases the model.
        let hg = hvp(g)?;
        out.n_hvp += 1;
        let ghg = g.dot(&hg);
        let tau = if ghg > 0.0 { (r0 * r0 * r0 / (delta * ghg)).min(1.0) } else { 1.0 };
        let scale = -tau * delta / r0;
        out.step = g.clone();
        out.step.scale(scale);
        out.hstep = hg;
        out.hstep.scale(scale);
        out.boundary_hit = tau >= 1.0;
        out.model_decrease = -g.dot(&out.step) - 0.5 * out.step.dot(&out.hstep);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrustRegionConfig {
    pub delta0: f64,
    pub delta_max: f64,
    pub rho_accept: f64,
    pub shrink: f64,
    pub expand: f64,
    pub tcg_max_iters: usize,
    pub tcg_kappa: f64,
    pub tcg_theta: f64,
    pub max_outer_iters: usize,
    pub grad_tol: f64,
}

impl TrustRegionConfig {
    /// Defaults for a problem of real dimension `dim` (`16·K` for `K` gates).
    pub fn for_dim(dim: usize) -> Self {
        let delta0 = 0.01 * (dim as f64).sqrt();
        TrustRegionConfig {
            delta0,
            delta_max: 100.0 * delta0,
            rho_accept: 0.1,
            shrink: 0.25,
            expand: 2.0,
            tcg_max_iters: dim,
            tcg_kappa: 0.1,
            tcg_theta: 1.0,
            max_outer_iters: 100,
            grad_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 <= self.delta_max) {
            return Err(invalid("trust region needs 0 < delta0 <= delta_max"));
        }
        if !(self.rho_accept > 0.0 && self.rho_accept < 0.25) {
            return Err(invalid("rho_accept must lie in (0, 1/4)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.expand > 1.0) {
            return Err(invalid("shrink must lie in (0, 1) and expand above 1"));
        }
        if self.tcg_max_iters == 0 {
            return Err(invalid("tcg_max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: usize,
    /// Loss at the current iterate (after the accept/reject decision).
    pub loss: f64,
    pub grad_norm: f64,
    /// Radius used for this iteration's proposal (trust region only).
    pub radius: Option<f64>,
    pub rho: Option<f64>,
    pub accepted: Option<bool>,
    pub tcg_iters: usize,
    pub tcg_stop: Option<TcgStop>,
    pub grad_evals: usize,
    pub hvp_evals: usize,
    pub feasibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    GradTol,
    MaxIterations,
    RadiusCollapsed,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Number of iterations whose loss exceeds the previous one.
    pub fn loss_increases(&self) -> usize {
        self.records.windows(2).filter(|w| w[1].loss > w[0].loss).count()
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult<P> {
    pub point: P,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
}

fn with_context(e: Error, iter: usize) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(alloc::format!("iteration {iter}: {m}")),
        Error::Internal(m) => Error::Internal(alloc::format!("iteration {iter}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(alloc::format!("iteration {iter}: {m}")),
        other => other,
    }
}

pub fn trust_region_minimize<P: Problem>(problem: &mut P, x0: P::Point, cfg: &TrustRegionConfig) -> Result<OptimResult<P::Point>> {
    trust_region_minimize_observed(problem, x0, cfg, |_, _| {})
}

/// [`trust_region_minimize`] calling `observe` with every trace record and the
/// current iterate right after the record is written.
pub fn trust_region_minimize_observed<P: Problem, O: FnMut(&TraceRecord, &P::Point)>(
    problem: &mut P,
    x0: P::Point,
    cfg: &TrustRegionConfig,
    mut observe: O,
) -> Result<OptimResult<P::Point>> {
    cfg.validate()?;
    let tcg = TcgConfig { max_iters: cfg.tcg_max_iters, kappa: cfg.tcg_kappa, theta: cfg.tcg_theta };
    let mut x = x0;
    let (mut f, mut g) = problem.gradient(&x).map_err(|e| with_context(e, 0))?;
    let mut gnorm = g.norm();
    let (mut grad_evals, mut hvp_evals) = (1, 0);
    let mut delta = cfg.delta0;
    let mut trace = ConvergenceTrace::default();
    trace.records.push(TraceRecord {
        iter: 0,
        loss: f,
        grad_norm: gnorm,
        radius: Some(delta),
        rho: None,
        accepted: None,
        tcg_iters: 0,
        tcg_stop: None,
        grad_evals,
        hvp_evals,
        feasibility: problem.feasibility(&x),
    });
    observe(trace.records.last().expect("just pushed"), &x);
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=cfg.max_outer_iters {
        if gnorm <= cfg.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        if delta < 1e-14 * cfg.delta0 {
            stop = StopReason::RadiusCollapsed;
            break;
        }
        let radius = delta;
        let xr = &x;
        // Krylov directions drift off the tangent space in round-off; re-project.
        let sol = truncated_cg(
            &g,
            |v| {
                let v = problem.project(xr, v)?;
                problem.hessian_vec(xr, &v)
            },
            delta,
            &tcg,
        ).map_err(|e| with_context(e, iter))?;
        hvp_evals += sol.n_hvp;
        let proposal = match problem.retract(&x, &sol.step) {
            Ok(p) => Some(p),
            Err(Error::DegenerateRetraction) => None,
            Err(e) => return Err(with_context(e, iter)),
        };
        let mut rho = f64::NEG_INFINITY;
        let mut accepted = false;
        if let Some(xn) = proposal {
            let (fn_, gn) = problem.gradient(&xn).map_err(|e| with_context(e, iter))?;
            grad_evals += 1;
            let reg = 1e3 * f64::EPSILON * f.abs().max(1.0);
            if sol.model_decrease > 0.0 {
                rho = (f - fn_ + reg) / (sol.model_decrease + reg);
            }
            if rho > cfg.rho_accept && fn_ <= f {
                accepted = true;
                x = xn;
                f = fn_;
                g = gn;
                gnorm = g.norm();
            }
        }
        if rho < 0.25 {
            delta *= cfg.shrink;
        } else if rho > 0.75 && sol.boundary_hit {
            delta = (cfg.expand * delta).min(cfg.delta_max);
        }
        trace.records.push(TraceRecord {
            iter,
            loss: f,
            grad_norm: gnorm,
            radius: Some(radius),
            rho: if rho.is_finite() { Some(rho) } else { None },
            accepted: Some(accepted),
            tcg_iters: sol.n_hvp,
            tcg_stop: Some(sol.stop),
            grad_evals,
            hvp_evals,
            feasibility: problem.feasibility(&x),
        });
        observe(trace.records.last().expect("just pushed"), &x);
    }
    if stop == StopReason::MaxIterations && gnorm <= cfg.grad_tol {
        stop = StopReason::GradTol;
    }
    Ok(OptimResult { point: x, trace, stop })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
}

impl AdamConfig {
    pub fn new(step_size: f64, max_iters: usize) -> Self {
        AdamConfig { step_size, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_iters }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(invalid("ADAM step size must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(invalid("ADAM needs beta1, beta2 in [0, 1) and eps > 0"));
        }
        Ok(())
    }
}

/// Riemannian ADAM: moments kept per real coordinate, the scaled direction
/// projected back to the tangent space, and the first moment transported by
/// projection after each retraction. One gradient evaluation per iteration.
pub fn riemannian_adam_minimize<P: Problem>(problem: &mut P, x0: P::Point, cfg: &AdamConfig) -> Result<OptimResult<P::Point>> {
    riemannian_adam_minimize_observed(problem, x0, cfg, |_, _| {})
}

pub fn riemannian_adam_minimize_observed<P: Problem, O: FnMut(&TraceRecord, &P::Point)>(
    problem: &mut P,
    x0: P::Point,
    cfg: &AdamConfig,
    mut observe: O,
) -> Result<OptimResult<P::Point>> {
    cfg.validate()?;
    let mut x = x0;
    let mut trace = ConvergenceTrace::default();
    let mut m: Option<P::Tangent> = None;
    let mut v: Vec<f64> = Vec::new();
    for t in 0..=cfg.max_iters {
        let (f, g) = problem.gradient(&x).map_err(|e| with_context(e, t))?;
        trace.records.push(TraceRecord {
            iter: t,
            loss: f,
            grad_norm: g.norm(),
            radius: None,
            rho: None,
            accepted: None,
            tcg_iters: 0,
            tcg_stop: None,
            grad_evals: t + 1,
            hvp_evals: 0,
            feasibility: problem.feasibility(&x),
        });
        observe(trace.records.last().expect("just pushed"), &x);
        if t == cfg.max_iters {
            break;
        }
        let step = t as i32 + 1;
        let mut mt = m.take().unwrap_or_else(|| g.zeros_like());
        mt.scale(cfg.beta1);
        mt.axpy(1.0 - cfg.beta1, &g);
        let gc = g.to_components();
        if v.is_empty() {
            v = alloc::vec![0.0; gc.len()];
        }
        for (vi, gi) in v.iter_mut().zip(&gc) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let c1 = 1.0 - cfg.beta1.powi(step);
        let c2 = 1.0 - cfg.beta2.powi(step);
        let dir: Vec<f64> = mt
            .to_components()
            .iter()
            .zip(&v)
            .map(|(mi, vi)| -cfg.step_size * (mi / c1) / ((vi / c2).sqrt() + cfg.eps))
            .collect();
        let dir = problem.project(&x, &g.from_components(&dir)).map_err(|e| with_context(e, t))?;
        let xn = problem.retract(&x, &dir).map_err(|e| with_context(e, t))?;
        m = Some(problem.transport(&xn, &mt).map_err(|e| with_context(e, t))?);
        x = xn;
    }
    Ok(OptimResult { point: x, trace, stop: StopReason::MaxIterations })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    /// `f(x) = ½ xᵀAx + bᵀx` on `R^n`.
    pub(crate) struct Quadratic {
        pub a: DMatrix<f64>,
        pub b: DVector<f64>,
    }

    impl Quadratic {
        pub(crate) fn random_spd(n: usize, seed: u64) -> Self {
            let mut rng = crate::complex::rng_from_seed(seed);
            let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
            let a = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
            let b = DVector::<f64>::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
            Quadratic { a, b }
        }

        fn apply(&self, x: &[f64]) -> Vec<f64> {
            (&self.a * DVector::from_column_slice(x)).iter().copied().collect()
        }
    }

    impl Problem for Quadratic {
        type Point = Vec<f64>;
        type Tangent = Vec<f64>;

        fn cost(&mut self, x: &Vec<f64>) -> Result<f64> {
            let ax = self.apply(x);
            Ok(0.5 * x.dot(&ax) + self.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        }

        fn gradient(&mut self, x: &Vec<f64>) -> Result<(f64, Vec<f64>)> {
            let mut g = self.apply(x);
            g.axpy(1.0, &self.b.iter().copied().collect());
            Ok((self.cost(x)?, g))
        }

        fn hessian_vec(&mut self, _x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(self.apply(v))
        }

        fn retract(&mut self, x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            let mut y = x.clone();
            y.axpy(1.0, v);
            Ok(y)
        }

        fn project(&mut self, _x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(v.clone())
        }
    }

    fn cfg(n: usize) -> TcgConfig {
        TcgConfig { max_iters: n, kappa: 1e-12, theta: 1.0 }
    }

    #[test]
    fn tcg_identity_and_negative_curvature() {
        let g = alloc::vec![0.3, -1.2, 0.5];
        let r = truncated_cg(&g, |v: &Vec<f64>| Ok(v.clone()), 100.0, &cfg(3)).unwrap();
        assert_eq!(r.n_hvp, 1);
        assert!(r.step.iter().zip(&g).all(|(s, x)| (s + x).abs() < 1e-15));
        let r = truncated_cg(
            &g,
            |v: &Vec<f64>| {
                let mut w = v.clone();
                w.scale(-1.0);
                Ok(w)
            },
            0.7,
            &cfg(3),
        )
        .unwrap();
        assert_eq!(r.stop, TcgStop::NegativeCurvature);
        assert!((r.step.norm() - 0.7).abs() < 1e-14);
        let gn = g.norm();
        assert!(r.step.iter().zip(&g).all(|(s, x)| (s + 0.7 * x / gn).abs() < 1e-14));
        let z = truncated_cg(&alloc::vec![0.0; 3], |v: &Vec<f64>| Ok(v.clone()), 1.0, &cfg(3)).unwrap();
        assert_eq!((z.stop, z.n_hvp, z.step.norm()), (TcgStop::ZeroGradient, 0, 0.0));
    }

    #[test]
    fn tcg_matches_dense_solve() {
        let mut q = Quadratic::random_spd(16, 3);
        let g: Vec<f64> = q.b.iter().copied().collect();
        let r = truncated_cg(&g, |v: &Vec<f64>| q.hessian_vec(v, v), 1e6, &TcgConfig { max_iters: 64, kappa: 1e-14, theta: 1.0 }).unwrap();
        let x = q.a.clone().lu().solve(&(-&q.b)).unwrap();
        assert!(r.step.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
        assert!(r.model_decrease >= 0.0);
    }

    #[test]
    fn tcg_model_never_increases() {
        for seed in 0..20 {
            let mut rng = crate::complex::rng_from_seed(seed);
            let n = 8;
            let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
            let h = &m + m.transpose();
            let g: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let delta = rng.gen::<f64>() * 2.0;
            let r = truncated_cg(&g, |v: &Vec<f64>| Ok((&h * DVector::from_column_slice(v)).iter().copied().collect()), delta, &cfg(n))
                .unwrap();
            assert!(r.model_decrease >= 0.0);
            assert!(r.step.norm() <= delta * (1.0 + 1e-12));
        }
    }

    #[test]
    fn trust_region_solves_quadratic() {
        let mut q = Quadratic::random_spd(12, 5);
        let x = q.a.clone().lu().solve(&(-&q.b)).unwrap();
        let mut c = TrustRegionConfig::for_dim(12);
        c.max_outer_iters = 12;
        c.grad_tol = 1e-12;
        let res = trust_region_minimize(&mut q, alloc::vec![0.0; 12], &c).unwrap();
        assert!(res.point.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
        let tr = &res.trace.records;
        let proposals = tr.len() - 1;
        assert_eq!(tr.last().unwrap().grad_evals, proposals + 1);
        assert_eq!(tr.last().unwrap().hvp_evals, tr.iter().map(|r| r.tcg_iters).sum::<usize>());
        for w in tr.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
            assert!(w[1].grad_evals >= w[0].grad_evals && w[1].hvp_evals >= w[0].hvp_evals);
        }
    }

    #[test]
    fn trust_region_at_minimum_stops_immediately() {
        let mut q = Quadratic::random_spd(6, 8);
        let x: Vec<f64> = q.a.clone().lu().solve(&(-&q.b)).unwrap().iter().copied().collect();
        let mut c = TrustRegionConfig::for_dim(6);
        c.grad_tol = 1e-10;
        let res = trust_region_minimize(&mut q, x, &c).unwrap();
        assert_eq!(res.stop, StopReason::GradTol);
        assert!(res.trace.records.len() <= 2);
    }

    #[test]
    fn config_validation() {
        let mut c = TrustRegionConfig::for_dim(16);
        assert!(c.validate().is_ok());
        c.rho_accept = 0.3;
        assert!(c.validate().is_err());
        let mut c = TrustRegionConfig::for_dim(16);
        c.delta0 = 2.0 * c.delta_max;
        assert!(c.validate().is_err());
        assert!(AdamConfig::new(0.0, 10).validate().is_err());
    }

    /// `f(θ) = θ²` on the line.
    struct Parabola;

    impl Problem for Parabola {
        type Point = Vec<f64>;
        type Tangent = Vec<f64>;
        fn cost(&mut self, x: &Vec<f64>) -> Result<f64> {
            Ok(x[0] * x[0])
        }
        fn gradient(&mut self, x: &Vec<f64>) -> Result<(f64, Vec<f64>)> {
            Ok((x[0] * x[0], alloc::vec![2.0 * x[0]]))
        }
        fn hessian_vec(&mut self, _x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(alloc::vec![2.0 * v[0]])
        }
        fn retract(&mut self, x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(alloc::vec![x[0] + v[0]])
        }
        fn project(&mut self, _x: &Vec<f64>, v: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(v.clone())
        }
    }

    #[test]
    fn adam_matches_scalar_reference() {
        let c = AdamConfig::new(0.01, 200);
        let res = riemannian_adam_minimize(&mut Parabola, alloc::vec![1.0], &c).unwrap();
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * th;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            th -= 0.01 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((res.point[0] - th).abs() < 1e-12);
        let losses: Vec<f64> = res.trace.records.iter().map(|r| r.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(losses[200] < 0.05 * losses[0]);
        assert_eq!(res.trace.records.last().unwrap().grad_evals, 201);
    }

    #[test]
    fn adam_stays_at_stationary_point() {
        let c = AdamConfig::new(0.1, 10);
        let res = riemannian_adam_minimize(&mut Parabola, alloc::vec![0.0], &c).unwrap();
        assert_eq!(res.point[0], 0.0);
    }
}
