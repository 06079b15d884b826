//! Scalar building blocks of cosh-type dissipation.
//!
//! The Legendre pair
//!
//! ```text
//! C*(xi) = 4 (cosh(xi/2) - 1)
//! C(s)   = 2 s log((s + sqrt(s^2 + 4)) / 2) - 2 sqrt(s^2 + 4) + 4
//! ```
//!
//! together with perspective values, entropy densities, logarithmic means, the
//! large-deviation rate density `L` and the cell function `N`.
//!
//! Extended reals are plain `f64`: `f64::INFINITY` is the `+inf` marker and
//! only arises in the documented singular branches. The two-sided bracket `B`
//! may also return `f64::NEG_INFINITY`.

mod cell;

pub use cell::{cell_n_variational, CellProblem, CellSolution};

use crate::error::{invalid, Result};

/// Real number or `+inf` marker (see module docs).
pub type ExtReal = f64;

/// Above this `|xi|` the hyperbolic cosine overflows.
const COSH_OVERFLOW: f64 = 1400.0;

/// `C*(xi) = 4(cosh(xi/2) - 1)`, evaluated as `8 sinh^2(xi/4)`.
pub fn cosh_dual(xi: f64) -> f64 {
    if xi.abs() > COSH_OVERFLOW {
        return f64::INFINITY;
    }
    let s = (0.25 * xi).sinh();
    8.0 * s * s
}

/// Derivative `C*'(xi) = 2 sinh(xi/2)`.
pub fn cosh_dual_deriv(xi: f64) -> f64 {
    2.0 * (0.5 * xi).sinh()
}

/// `C(s)`, the Legendre transform of [`cosh_dual`].
pub fn cosh_primal(s: f64) -> f64 {
    if !s.is_finite() {
        return f64::INFINITY;
    }
    let root = s.hypot(2.0);
    // 4 - 2 sqrt(s^2+4) rewritten without cancellation
    2.0 * s * ((0.5 * s).asinh() - s / (2.0 + root))
}

/// Derivative `C'(s) = 2 arsinh(s/2)`.
pub fn cosh_primal_deriv(s: f64) -> f64 {
    2.0 * (0.5 * s).asinh()
}

/// Perspective `C(s | sigma)`: `sigma C(s/sigma)` for `sigma > 0`, `0` at
/// `(0, 0)` and `+inf` for `sigma = 0`, `s != 0`.
pub fn perspective(s: f64, sigma: f64) -> ExtReal {
    if sigma > 0.0 {
        sigma * cosh_primal(s / sigma)
    } else if s == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Relative entropy density `eta(a | b) = a log(a/b) - a + b`.
pub fn eta(a: f64, b: f64) -> ExtReal {
    if a == 0.0 {
        b
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln() - a + b
    }
}

/// `H(mu | nu) = sum_x eta(mu_x | nu_x)`.
pub fn relative_entropy(mu: &[f64], nu: &[f64]) -> Result<ExtReal> {
    if mu.len() != nu.len() {
        return invalid(format!("length mismatch {} vs {}", mu.len(), nu.len()));
    }
    Ok(mu.iter().zip(nu).map(|(&a, &b)| eta(a, b)).sum())
}

fn sinhc_half(l: f64) -> f64 {
    // sinh(l/2) / (l/2)
    let x = 0.5 * l;
    if l.abs() < 1e-8 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// Logarithmic mean `(a - b)/(log a - log b)`, `a` for `a = b`, `0` if either
/// argument vanishes.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    let l = a.ln() - b.ln();
    a.sqrt() * b.sqrt() * sinhc_half(l)
}

/// Harmonic-logarithmic mean `Lambda(1/a, 1/b)^{-1}`, `0` if `ab = 0`.
pub fn harm_log_mean(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    let l = a.ln() - b.ln();
    a.sqrt() * b.sqrt() / sinhc_half(l)
}

/// Rate density `L(j; alpha, beta; k)`, the contraction
/// `inf { eta(a | alpha k) + eta(b | beta k) : (b - a)/2 = j }`.
pub fn rate_density_l(j: f64, alpha: f64, beta: f64, k: f64) -> ExtReal {
    if alpha > 0.0 && beta > 0.0 {
        let g = alpha.sqrt() * beta.sqrt();
        // (k/2) sqrt(ab) C*(log b/a) = k (sqrt a - sqrt b)^2
        let boundary = k * (alpha.sqrt() - beta.sqrt()).powi(2);
        0.5 * perspective(2.0 * j, k * g) + boundary - j * (beta.ln() - alpha.ln())
    } else if alpha == 0.0 && j >= 0.0 {
        eta(2.0 * j, beta * k)
    } else if beta == 0.0 && j <= 0.0 {
        eta(-2.0 * j, alpha * k)
    } else {
        f64::INFINITY
    }
}

/// Two-sided bracket `B(alpha, beta, j)`, the extension of `j (log beta - log alpha)`.
pub fn bracket_b(alpha: f64, beta: f64, j: f64) -> ExtReal {
    if j == 0.0 || (alpha == 0.0 && beta == 0.0) {
        0.0
    } else if alpha > 0.0 && beta > 0.0 {
        j * (beta.ln() - alpha.ln())
    } else if alpha == 0.0 {
        if j > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else if j < 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Explicit cell function `N(j, alpha, beta; k) = C(j | k sqrt(ab)) + 2k (sqrt a - sqrt b)^2`.
pub fn cell_n_explicit(j: f64, alpha: f64, beta: f64, k: f64) -> ExtReal {
    perspective(j, k * alpha.sqrt() * beta.sqrt()) + 2.0 * k * (alpha.sqrt() - beta.sqrt()).powi(2)
}

/// Dual characterisation
/// `N = sup_zeta [zeta j + 2k (alpha + beta - 2 sqrt(ab) cosh(zeta/2))]`.
///
/// For `ab > 0` the concave objective is maximised at the analytic stationary
/// point, refined by a few Newton steps; for `ab = 0` the objective is affine.
pub fn cell_n_dual(j: f64, alpha: f64, beta: f64, k: f64) -> ExtReal {
    let g = alpha.sqrt() * beta.sqrt();
    if g == 0.0 {
        return if j == 0.0 { 2.0 * k * (alpha + beta) } else { f64::INFINITY };
    }
    let obj = |z: f64| z * j + 2.0 * k * (alpha + beta - 2.0 * g * (0.5 * z).cosh());
    let mut z = 2.0 * (j / (2.0 * k * g)).asinh();
    for _ in 0..3 {
        let d1 = j - 2.0 * k * g * (0.5 * z).sinh();
        let d2 = -k * g * (0.5 * z).cosh();
        z -= d1 / d2;
    }
    obj(z)
}

/// Maximiser of the dual objective for `ab > 0`: `2 arsinh(j / (2k sqrt(ab)))`.
pub fn cell_n_dual_argmax(j: f64, alpha: f64, beta: f64, k: f64) -> f64 {
    2.0 * (j / (2.0 * k * alpha.sqrt() * beta.sqrt())).asinh()
}

/// Series law `(1/k1 + 1/k2)^{-1}`.
pub fn series_combine(k1: f64, k2: f64) -> Result<f64> {
    if !(k1 > 0.0 && k2 > 0.0) {
        return invalid(format!("series_combine needs positive inputs, got {k1}, {k2}"));
    }
    Ok(1.0 / (1.0 / k1 + 1.0 / k2))
}

/// Parallel law `sum k_i`.
pub fn parallel_combine(ks: &[f64]) -> Result<f64> {
    if ks.is_empty() || ks.iter().any(|&k| !(k > 0.0)) {
        return invalid("parallel_combine needs a non-empty list of positive inputs");
    }
    Ok(ks.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::golden_section;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dual_examples() {
        assert_eq!(cosh_dual(0.0), 0.0);
        assert_eq!(cosh_dual(-2.0), cosh_dual(2.0));
        assert_relative_eq!(cosh_dual(2.0), 4.0 * (1f64.cosh() - 1.0), max_relative = 1e-14);
        assert!(cosh_dual(2000.0).is_infinite());
    }

    #[test]
    fn primal_examples() {
        assert_eq!(cosh_primal(0.0), 0.0);
        // direct evaluation of the defining logarithmic expression
        let s: f64 = 1.0;
        let literal = 2.0 * s * ((s + (s * s + 4.0).sqrt()) / 2.0).ln() - 2.0 * (s * s + 4.0).sqrt() + 4.0;
        assert_relative_eq!(cosh_primal(1.0), literal, max_relative = 1e-14);
        assert_relative_eq!(cosh_primal(1.0), 0.490_287_7, max_relative = 1e-7);
        let s = 2.0 * 1f64.sinh();
        assert_relative_eq!(cosh_primal(s), 2.0 * s - cosh_dual(2.0), max_relative = 1e-13);
        assert_relative_eq!(cosh_primal(s), 2.528_482_4, max_relative = 1e-7);
    }

    #[test]
    fn primal_numeric_legendre() {
        // sup over a fine xi-grid, independent of the closed form
        for &s in &[0.3, 1.0, 4.0, -2.5] {
            let (_, m) = golden_section(|xi| -(s * xi - cosh_dual(xi)), -30.0, 30.0, 1e-14);
            assert_relative_eq!(-m, cosh_primal(s), max_relative = 1e-10);
        }
    }

    #[test]
    fn primal_small_and_large_arguments() {
        assert_relative_eq!(cosh_primal(1e-6), 0.5e-12, max_relative = 1e-6);
        assert!(cosh_primal(1e300).is_finite());
        assert_eq!(cosh_primal(-3.0), cosh_primal(3.0));
    }

    #[test]
    fn perspective_examples() {
        assert_eq!(perspective(0.0, 0.0), 0.0);
        assert!(perspective(1.0, 0.0).is_infinite());
        assert_eq!(perspective(2.0, 1.0), cosh_primal(2.0));
        assert_relative_eq!(perspective(6.0, 3.0), 3.0 * cosh_primal(2.0), max_relative = 1e-15);
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta(1.0, 1.0), 0.0);
        assert_eq!(eta(0.0, 3.0), 3.0);
        assert_relative_eq!(eta(2.0, 1.0), 2.0 * 2f64.ln() - 1.0, max_relative = 1e-14);
        assert!(eta(1.0, 0.0).is_infinite());
    }

    #[test]
    fn relative_entropy_examples() {
        assert_eq!(relative_entropy(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_relative_eq!(relative_entropy(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), max_relative = 1e-15);
        assert!(relative_entropy(&[1.0, 0.0], &[0.0, 1.0]).unwrap().is_infinite());
        assert!(relative_entropy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn means_examples() {
        assert_eq!(log_mean(2.5, 2.5), 2.5);
        assert_eq!(harm_log_mean(3.0, 0.0), 0.0);
        assert_relative_eq!(log_mean(std::f64::consts::E, 1.0), 1.718_281_828_459_045, max_relative = 1e-14);
        // near-equal arguments: compare against the quotient evaluated in a shifted form
        let a = 1.0 + 1e-9;
        assert_relative_eq!(log_mean(a, 1.0), 1.0 + 0.5e-9, max_relative = 1e-15);
        let (a, b) = (2.0, 5.0);
        assert_relative_eq!(harm_log_mean(a, b), a * b * (b.ln() - a.ln()) / (b - a), max_relative = 1e-14);
    }

    #[test]
    fn rate_density_examples() {
        assert_relative_eq!(rate_density_l(0.0, 4.0, 1.0, 1.0), 1.0, max_relative = 1e-14);
        // 1D minimisation over a = b of eta(a|4) + eta(a|1)
        let (_, m) = golden_section(|a| eta(a, 4.0) + eta(a, 1.0), 1e-9, 10.0, 1e-14);
        assert_relative_eq!(rate_density_l(0.0, 4.0, 1.0, 1.0), m, max_relative = 1e-10);
        assert_eq!(rate_density_l(0.7, 0.0, 2.0, 1.5), eta(1.4, 3.0));
        assert!(rate_density_l(-0.7, 0.0, 2.0, 1.5).is_infinite());
        assert_eq!(rate_density_l(-0.4, 2.0, 0.0, 1.0), eta(0.8, 2.0));
        assert!(rate_density_l(0.4, 2.0, 0.0, 1.0).is_infinite());
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(bracket_b(0.3, 2.0, 0.0), 0.0);
        assert_eq!(bracket_b(0.0, 0.0, 5.0), 0.0);
        assert_eq!(bracket_b(0.0, 1.0, 1.0), f64::INFINITY);
        assert_eq!(bracket_b(0.0, 1.0, -1.0), f64::NEG_INFINITY);
        assert_eq!(bracket_b(1.0, 0.0, -1.0), f64::INFINITY);
        assert_eq!(bracket_b(1.0, 0.0, 1.0), f64::NEG_INFINITY);
        assert_relative_eq!(bracket_b(1.0, (2.0f64).exp(), 1.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn cell_explicit_and_dual_examples() {
        assert_eq!(cell_n_explicit(0.0, 1.0, 1.0, 3.0), 0.0);
        assert!(cell_n_explicit(1.0, 0.0, 1.0, 1.0).is_infinite());
        assert_relative_eq!(cell_n_explicit(1.0, 1.0, 1.0, 1.0), cosh_primal(1.0), max_relative = 1e-15);
        assert_eq!(cell_n_dual(0.0, 1.0, 1.0, 1.0), 0.0);
        assert_relative_eq!(cell_n_dual(1.0, 1.0, 1.0, 1.0), cosh_primal(1.0), max_relative = 1e-13);
        assert_relative_eq!(cell_n_dual(0.0, 4.0, 1.0, 1.0), 2.0, max_relative = 1e-13);
        assert!(cell_n_dual(1.0, 0.0, 1.0, 1.0).is_infinite());
    }

    #[test]
    fn dual_matches_brute_force_sup() {
        for &(j, a, b, k) in &[(1.0, 1.0, 1.0, 1.0), (0.3, 4.0, 1.0, 2.0), (-2.0, 0.5, 3.0, 0.7)] {
            let g: f64 = a * b;
            let g = g.sqrt();
            let (_, m) =
                golden_section(|z: f64| -(z * j + 2.0 * k * (a + b - 2.0 * g * (0.5 * z).cosh())), -60.0, 60.0, 1e-15);
            assert_relative_eq!(cell_n_dual(j, a, b, k), -m, max_relative = 1e-9);
            assert_relative_eq!(cell_n_explicit(j, a, b, k), -m, max_relative = 1e-9);
        }
    }

    #[test]
    fn combine_laws() {
        assert_eq!(series_combine(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(parallel_combine(&[1.0, 2.0, 3.0]).unwrap(), 6.0);
        assert!(series_combine(0.0, 1.0).is_err());
        assert!(parallel_combine(&[1.0, -1.0]).is_err());
        // numeric series law on a log-gamma grid with golden-section refinement
        let (j, a, b, k1, k2) = (1.0, 1.0, 1.0, 1.0, 2.0);
        let f = |lg: f64| {
            let g = lg.exp();
            cell_n_explicit(j, a, g, k1) + cell_n_explicit(j, g, b, k2)
        };
        let (_, m) = golden_section(f, -5.0, 5.0, 1e-14);
        assert_relative_eq!(m, cell_n_explicit(j, a, b, 2.0 / 3.0), max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn dual_even_nonneg(xi in -50.0f64..50.0) {
            prop_assert!(cosh_dual(xi) >= 0.0);
            prop_assert_eq!(cosh_dual(xi), cosh_dual(-xi));
        }

        #[test]
        fn legendre_at_stationary_point(xi in -20.0f64..20.0) {
            let s = cosh_dual_deriv(xi);
            let lhs = s * xi - cosh_primal(s);
            prop_assert!((lhs - cosh_dual(xi)).abs() <= 1e-10 * (1.0 + cosh_dual(xi)));
            prop_assert!((cosh_primal_deriv(s) - xi).abs() <= 1e-10 * (1.0 + xi.abs()));
        }

        #[test]
        fn hellinger_identity(lp in -13.8f64..13.8, lq in -13.8f64..13.8) {
            let (p, q) = (lp.exp(), lq.exp());
            let lhs = (p * q).sqrt() * cosh_dual(lp - lq);
            let rhs = 2.0 * (p.sqrt() - q.sqrt()).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) || lhs == rhs);
        }

        #[test]
        fn n_homogeneity(j in -5.0f64..5.0, a in 0.01f64..5.0, b in 0.01f64..5.0, k in 0.1f64..5.0, lam in 0.1f64..10.0) {
            let base = cell_n_explicit(j, a, b, k);
            let s1 = cell_n_explicit(lam * j, lam * a, lam * b, k);
            let s2 = cell_n_explicit(lam * j, a, b, lam * k);
            prop_assert!((s1 - lam * base).abs() <= 1e-12 * lam * base.max(1e-300));
            prop_assert!((s2 - lam * base).abs() <= 1e-12 * lam * base.max(1e-300));
        }

        #[test]
        fn bracket_bounded_by_n(j in -5.0f64..5.0, a in 0.0f64..5.0, b in 0.0f64..5.0, k in 0.1f64..5.0, za in 0u8..4, zb in 0u8..4) {
            let a = if za == 0 { 0.0 } else { a };
            let b = if zb == 0 { 0.0 } else { b };
            let bb = bracket_b(a, b, j);
            let n = cell_n_explicit(j, a, b, k);
            prop_assert!(bb.abs() <= n * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn means_between_min_and_max(a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
            let lo = a.min(b) * (1.0 - 1e-14);
            let hi = a.max(b) * (1.0 + 1e-14);
            let l = log_mean(a, b);
            let h = harm_log_mean(a, b);
            prop_assert!(lo <= l && l <= hi);
            prop_assert!(lo <= h && h <= hi);
            prop_assert_eq!(l, log_mean(b, a));
        }

        #[test]
        fn l_is_nonnegative(j in -5.0f64..5.0, a in 0.0f64..5.0, b in 0.0f64..5.0, k in 0.0f64..5.0) {
            prop_assert!(rate_density_l(j, a, b, k) >= -1e-12);
        }
    }
}
