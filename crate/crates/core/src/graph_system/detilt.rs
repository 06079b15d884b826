use super::{entropic_force, sigma, tilt_kernel, MarkovGraph, Tilt};
use crate::cosh_core::{cosh_dual, log_mean};
use crate::error::Result;
use crate::numerics::integrate;

/// Quadratic log-mean structure of a tilted graph, de-tilted edgewise.
#[derive(Debug, Clone)]
pub struct DetiltedQuadratic {
    pub tilted: MarkovGraph,
}

/// Double-directed per-pair values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetiltEdge {
    pub xi: f64,
    /// Quadratic structure `(1/2) Lambda(rho_x kappa^F_xy, rho_y kappa^F_yx) Xi^2` at the given tilt.
    pub quadratic: f64,
    /// Quadrature of `k^F int_0^Xi Lambda(w e^{s/2}, w e^{-s/2}) s ds`, `w = sqrt(u^F_x u^F_y)`.
    pub quadrature: f64,
    /// `sqrt(kappa_xy kappa_yx rho_x rho_y) C*(Xi)`.
    pub cosh_form: f64,
    /// Induced net flux `sqrt(kappa_xy kappa_yx rho_x rho_y) sinh(Xi/2)`.
    pub flux: f64,
}

pub fn detilt_quadratic(g: &MarkovGraph, tilt: &Tilt) -> Result<DetiltedQuadratic> {
    Ok(DetiltedQuadratic { tilted: tilt_kernel(g, tilt)? })
}

impl DetiltedQuadratic {
    /// Evaluates every pair at state `rho` (positive) and forces `xi`.
    pub fn evaluate(&self, rho: &[f64], xi: &[f64]) -> Result<Vec<DetiltEdge>> {
        let g = &self.tilted;
        g.check_state(rho)?;
        let sig = sigma(g, rho);
        let mut out = Vec::with_capacity(xi.len());
        for ((e, &x), &s) in g.edges().iter().zip(xi).zip(&sig) {
            let k = g.pi()[e.x] * e.k_xy;
            let w = (rho[e.x] / g.pi()[e.x] * rho[e.y] / g.pi()[e.y]).sqrt();
            let integrand = |t: f64| k * log_mean(w * (0.5 * t).exp(), w * (-0.5 * t).exp()) * t;
            let q = integrate(integrand, 0.0, x.abs(), 1e-14, 1e-13)?;
            out.push(DetiltEdge {
                xi: x,
                quadratic: 0.5 * log_mean(rho[e.x] * e.k_xy, rho[e.y] * e.k_yx) * x * x,
                quadrature: q.value,
                cosh_form: 2.0 * s * cosh_dual(x),
                flux: 2.0 * s * (0.5 * x).sinh(),
            });
        }
        Ok(out)
    }

    /// Evaluates at the force `-grad D H(. | pi^F)`.
    pub fn evaluate_at_gradient(&self, rho: &[f64]) -> Result<Vec<DetiltEdge>> {
        let xi = entropic_force(&self.tilted, rho);
        self.evaluate(rho, &xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g3() -> MarkovGraph {
        MarkovGraph::from_conductances(
            MarkovGraph::default_ids(3),
            vec![0.25, 0.25, 0.5],
            &[(0, 1, 0.5), (1, 2, 1.1), (0, 2, 0.3)],
        )
        .unwrap()
    }

    #[test]
    fn zero_force_gives_zero() {
        let d = detilt_quadratic(&g3(), &Tilt::symmetric(vec![0.2, 0.0, -0.4])).unwrap();
        for e in d.evaluate(&[0.3, 0.3, 0.4], &[0.0; 3]).unwrap() {
            assert_eq!(e.quadrature, 0.0);
            assert_eq!(e.cosh_form, 0.0);
        }
    }

    #[test]
    fn quadrature_matches_cosh_form() {
        let d = detilt_quadratic(&g3(), &Tilt::symmetric(vec![0.2, 0.0, -0.4])).unwrap();
        for e in d.evaluate(&[0.3, 0.3, 0.4], &[2.0, -1.3, 0.7]).unwrap() {
            assert_relative_eq!(e.quadrature, e.cosh_form, max_relative = 1e-8);
        }
        for e in d.evaluate_at_gradient(&[0.5, 0.1, 0.4]).unwrap() {
            assert_relative_eq!(e.quadrature, e.cosh_form, max_relative = 1e-8);
        }
    }

    #[test]
    fn independent_of_tilt() {
        let g = g3();
        let rho = [0.2, 0.5, 0.3];
        let xi = [1.0, -0.4, 2.5];
        let a = detilt_quadratic(&g, &Tilt::symmetric(vec![0.2, 0.0, -0.4])).unwrap().evaluate(&rho, &xi).unwrap();
        let b = detilt_quadratic(&g, &Tilt::symmetric(vec![-1.0, 1.5, 0.3])).unwrap().evaluate(&rho, &xi).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p.quadrature - q.quadrature).abs() <= 1e-10 * p.quadrature.abs().max(1.0));
            assert!((p.flux - q.flux).abs() <= 1e-12);
            assert!(p.quadratic != q.quadratic);
        }
    }
}
