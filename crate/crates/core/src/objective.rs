//! The empirical risk of a brickwall circuit as a [`Problem`] on `U(4)^×P`.

use crate::circuit::BrickwallCircuit;
use crate::complex::GateVec;
use crate::cost::{empirical_risk, risk_value, EmpiricalRisk, Sample};
use crate::error::Result;
use crate::exec::Executor;
use crate::kernel::KernelOptions;
use crate::manifold::{max_unitarity_residual, project_all, retract_all, riemannian_grad, riemannian_hvp, Retraction};
use crate::optim::Problem;

/// Evaluation counters. One kernel call is one two-pass sweep for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counters {
    pub value_evals: usize,
    pub gradient_evals: usize,
    pub hvp_evals: usize,
    pub kernel_calls: usize,
}

pub struct CircuitObjective<'a, E: Executor> {
    template: BrickwallCircuit,
    samples: &'a [Sample],
    exec: &'a E,
    pub opts: KernelOptions,
    pub retraction: Retraction,
    pub counters: Counters,
}

impl<'a, E: Executor> CircuitObjective<'a, E> {
    pub fn new(template: BrickwallCircuit, samples: &'a [Sample], exec: &'a E) -> Self {
        CircuitObjective {
            template,
            samples,
            exec,
            opts: KernelOptions::default(),
            retraction: Retraction::Polar,
            counters: Counters::default(),
        }
    }

    pub fn template(&self) -> &BrickwallCircuit {
        &self.template
    }

    pub fn samples(&self) -> &[Sample] {
        self.samples
    }

    pub fn circuit_at(&self, x: &GateVec) -> Result<BrickwallCircuit> {
        self.template.with_gates(x.0.clone())
    }

    /// Euclidean risk, gradient and (optionally) HVP at `x`.
    pub fn euclidean(&mut self, x: &GateVec, direction: Option<&GateVec>) -> Result<EmpiricalRisk> {
        let c = self.circuit_at(x)?;
        let r = empirical_risk(&c, self.samples, direction, &self.opts, self.exec)?;
        self.counters.kernel_calls += r.kernel_calls;
        Ok(r)
    }
}

impl<E: Executor> Problem for CircuitObjective<'_, E> {
    type Point = GateVec;
    type Tangent = GateVec;

    fn cost(&mut self, x: &GateVec) -> Result<f64> {
        self.counters.value_evals += 1;
        risk_value(&self.circuit_at(x)?, self.samples, self.exec)
    }

    fn gradient(&mut self, x: &GateVec) -> Result<(f64, GateVec)> {
        self.counters.gradient_evals += 1;
        let r = self.euclidean(x, None)?;
        Ok((r.value, riemannian_grad(x, &r.grad)?))
    }

    fn hessian_vec(&mut self, x: &GateVec, v: &GateVec) -> Result<GateVec> {
        self.counters.hvp_evals += 1;
        let r = self.euclidean(x, Some(v))?;
        riemannian_hvp(x, &r.grad, &r.hvp, v)
    }

    fn retract(&mut self, x: &GateVec, v: &GateVec) -> Result<GateVec> {
        retract_all(x, v, self.retraction)
    }

    fn project(&mut self, x: &GateVec, v: &GateVec) -> Result<GateVec> {
        project_all(x, v)
    }

    fn feasibility(&self, x: &GateVec) -> f64 {
        max_unitarity_residual(x)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::circuit::{build_brickwall, placement_count};
    use crate::complex::{haar_product_state, haar_unitary_gate, random_cmat4, rng_from_seed, C64};
    use crate::exec::SequentialExecutor;
    use crate::fd::fd_directional_richardson;
    use crate::manifold::tangent_residual;
    use crate::mps::TruncationPolicy;
    use crate::optim::{trust_region_minimize, TrustRegionConfig, Vector};

    pub(crate) fn instance(n: usize, layers: usize, n_samples: usize, seed: u64) -> (BrickwallCircuit, BrickwallCircuit, alloc::vec::Vec<Sample>) {
        let k = placement_count(n, layers);
        let reference = build_brickwall(n, layers, (0..k).map(|i| haar_unitary_gate(seed + i as u64)).collect(), false).unwrap();
        let start = build_brickwall(n, layers, (0..k).map(|i| haar_unitary_gate(seed + 500 + i as u64)).collect(), false).unwrap();
        let samples = (0..n_samples)
            .map(|s| {
                let psi = haar_product_state(n, seed + 1000 + s as u64, TruncationPolicy::default()).unwrap();
                Sample::from_reference(psi, &reference, TruncationPolicy::default()).unwrap()
            })
            .collect();
        (reference, start, samples)
    }

    pub(crate) fn random_tangent(x: &GateVec, seed: u64) -> GateVec {
        let mut rng = rng_from_seed(seed);
        let v = GateVec(x.iter().map(|_| random_cmat4(&mut rng)).collect());
        project_all(x, &v).unwrap()
    }

    #[test]
    fn gradient_agrees_with_difference_along_retraction() {
        let (_, start, samples) = instance(6, 3, 2, 3);
        let mut obj = CircuitObjective::new(start.clone(), &samples, &SequentialExecutor);
        let x = start.params();
        let xi = random_tangent(&x, 9);
        let (_, g) = obj.gradient(&x).unwrap();
        assert!(g.iter().zip(x.iter()).all(|(gg, xx)| tangent_residual(xx, gg) < 1e-12));
        let mut o2 = CircuitObjective::new(start.clone(), &samples, &SequentialExecutor);
        let f = |y: &GateVec| -> Result<f64> {
            // y = x + t·xi; evaluate along the retracted curve instead
            let mut t = y.clone();
            t.axpy(C64::new(-1.0, 0.0), &x);
            let tt = t.re_dot(&xi) / xi.re_dot(&xi);
            let mut step = xi.clone();
            Vector::scale(&mut step, tt);
            let p = o2.retract(&x, &step)?;
            o2.cost(&p)
        };
        let r = fd_directional_richardson(f, &x, &xi, 1e-4).unwrap();
        let exact = g.re_dot(&xi);
        assert!((r.extrapolated - exact).abs() < 1e-7 * (1.0 + exact.abs()), "{} vs {exact}", r.extrapolated);
        assert!((r.at_eps - exact).abs() < 1e-5 * (1.0 + exact.abs()));
    }

    #[test]
    fn riemannian_hessian_is_symmetric_and_second_order() {
        let (_, start, samples) = instance(6, 3, 2, 4);
        let mut obj = CircuitObjective::new(start.clone(), &samples, &SequentialExecutor);
        let x = start.params();
        let (u, v) = (random_tangent(&x, 1), random_tangent(&x, 2));
        let hu = obj.hessian_vec(&x, &u).unwrap();
        let hv = obj.hessian_vec(&x, &v).unwrap();
        assert!((u.re_dot(&hv) - hu.re_dot(&v)).abs() < 1e-8);
        // Second derivative of f along the (second-order) polar retraction curve.
        let f0 = obj.cost(&x).unwrap();
        let t: f64 = 1e-3;
        let mut step = u.clone();
        Vector::scale(&mut step, t);
        let xp = obj.retract(&x, &step).unwrap();
        let fp = obj.cost(&xp).unwrap();
        Vector::scale(&mut step, -1.0);
        let xm = obj.retract(&x, &step).unwrap();
        let fm = obj.cost(&xm).unwrap();
        let second = (fp - 2.0 * f0 + fm) / (t * t);
        let exact = u.re_dot(&hu);
        assert!((second - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{second} vs {exact}");
    }

    #[test]
    fn trust_region_at_reference_stops() {
        let (reference, _, samples) = instance(6, 2, 3, 5);
        let mut obj = CircuitObjective::new(reference.clone(), &samples, &SequentialExecutor);
        let mut cfg = TrustRegionConfig::for_dim(16 * reference.n_params());
        cfg.grad_tol = 1e-8;
        let res = trust_region_minimize(&mut obj, reference.params(), &cfg).unwrap();
        assert!(res.trace.records.len() <= 2);
        assert!(res.trace.records[0].grad_norm <= 1e-8);
        assert!(res.trace.records[0].loss.abs() < 1e-12);
    }

    #[test]
    fn trust_region_decreases_risk_on_manifold() {
        let (_, start, samples) = instance(6, 2, 4, 6);
        let mut obj = CircuitObjective::new(start.clone(), &samples, &SequentialExecutor);
        let mut cfg = TrustRegionConfig::for_dim(16 * start.n_params());
        cfg.max_outer_iters = 15;
        let res = trust_region_minimize(&mut obj, start.params(), &cfg).unwrap();
        let tr = &res.trace.records;
        assert!(tr.last().unwrap().loss < tr[0].loss);
        for w in tr.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
        assert!(tr.iter().all(|r| r.feasibility <= 1e-10));
        assert_eq!(obj.counters.gradient_evals, tr.last().unwrap().grad_evals);
        assert_eq!(obj.counters.hvp_evals, tr.last().unwrap().hvp_evals);
        assert_eq!(obj.counters.kernel_calls, 4 * (obj.counters.gradient_evals + obj.counters.hvp_evals));
    }
}
