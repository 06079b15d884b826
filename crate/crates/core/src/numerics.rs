//! Small numerical kernels shared by the modules: adaptive quadrature,
//! golden-section search, bisection, an embedded Runge-Kutta integrator and a
//! tridiagonal solver for birth-death generators.

use crate::error::{Error, Result};

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WK[7] * fc;
    let mut gauss = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[i] * s;
        if i % 2 == 1 {
            gauss += GK_WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of an adaptive quadrature: value and estimated absolute error.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol*|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature> {
    integrate_with_breaks(f, &[a, b], abs_tol, rel_tol)
}

/// Like [`integrate`] but starting from a user-supplied partition, which helps
/// when the integrand is sharply peaked at known points.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    if breaks.len() < 2 {
        return Err(Error::InvalidArgument("quadrature needs an interval".into()));
    }
    let mut pieces: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..5000 {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::NumericalFailure("non-finite integrand".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error });
        }
        let (idx, _) =
            pieces.iter().enumerate().fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (a, b, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
    let value: f64 = pieces.iter().map(|p| p.2).sum();
    let error: f64 = pieces.iter().map(|p| p.3).sum();
    Err(Error::NumericalFailure(format!("quadrature did not converge: value {value}, error estimate {error}")))
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
/// Returns the minimiser and the minimum value.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a).abs() > tol * (1.0 + c.abs() + d.abs()) && iter < 500 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection root finder for a continuous function with a sign change on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NumericalFailure("bisection: no sign change".into()));
    }
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Options for [`dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Components above this negative threshold are clipped to zero after each
    /// accepted step; anything more negative is a step failure.
    pub positivity_floor: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-13, max_step: f64::INFINITY, max_steps: 10_000_000, positivity_floor: None }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

/// Dormand-Prince 5(4) integration of `y' = f(y)`, reporting the solution at
/// every time in `grid` (which must start at the initial time and increase).
/// Steps are clipped so that each grid point is hit exactly.
pub fn dopri5<F>(f: F, y0: &[f64], grid: &[f64], opts: OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());
    if grid.len() < 2 {
        return Ok(out);
    }
    let mut y = y0.to_vec();
    let mut t = grid[0];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(&y, &mut k1);
    let mut h = {
        let scale: f64 =
            y.iter().zip(&k1).map(|(yi, ki)| (ki / (opts.atol + opts.rtol * yi.abs())).powi(2)).sum::<f64>()
                / n.max(1) as f64;
        let guess = if scale > 0.0 { 0.01 / scale.sqrt() } else { 1e-3 };
        guess.min(opts.max_step).min(grid[1] - grid[0])
    };
    let mut steps = 0usize;
    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::NumericalFailure("ODE step budget exhausted".into()));
            }
            let mut hs = h.min(target - t).min(opts.max_step);
            let last = hs >= target - t;
            if last {
                hs = target - t;
            }
            axpy(&mut tmp, &y, hs, &[(A21, &k1)]);
            f(&tmp, &mut k2);
            axpy(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
            f(&tmp, &mut k3);
            axpy(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(&tmp, &mut k4);
            axpy(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(&tmp, &mut k5);
            axpy(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            f(&tmp, &mut k6);
            axpy(&mut ynew, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            f(&ynew, &mut k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = hs * 0.1;
                if h < 1e-300 {
                    return Err(Error::NumericalFailure("ODE step size underflow".into()));
                }
                continue;
            }
            if err <= 1.0 {
                let mut clipped = false;
                if let Some(floor) = opts.positivity_floor {
                    for v in ynew.iter_mut() {
                        if *v < 0.0 {
                            if *v < floor {
                                return Err(Error::NumericalFailure(format!(
                                    "negative component {v} below projection floor {floor}"
                                )));
                            }
                            *v = 0.0;
                            clipped = true;
                        }
                    }
                }
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                if clipped {
                    f(&y, &mut k1);
                } else {
                    std::mem::swap(&mut k1, &mut k7);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.2)).max(0.1);
                if h < 1e-300 {
                    return Err(Error::NumericalFailure("ODE step size underflow".into()));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Symmetric birth-death generator in "u-form": weights `pi` on the nodes of
/// a path and face conductances `k` (`k[i]` couples node `i` and `i+1`).
/// The dynamics are `pi_i du_i/dt = k_{i-1}(u_{i-1}-u_i) + k_i(u_{i+1}-u_i)`
/// with `rho = pi * u`.
#[derive(Debug, Clone)]
pub struct PathGenerator {
    pub pi: Vec<f64>,
    pub k: Vec<f64>,
}

impl PathGenerator {
    /// One implicit Euler step `(Pi + h L) u' = Pi u` applied to masses `rho`.
    ///
    /// The elimination is organised so that only additions of non-negative
    /// quantities occur (the Laplacian row sums are never formed), which keeps
    /// componentwise relative accuracy even for conductances spanning many
    /// orders of magnitude.
    pub fn implicit_euler(&self, rho: &[f64], h: f64, out: &mut [f64], work: &mut PathWork) {
        let n = self.pi.len();
        let k = &self.k;
        work.resize(n);
        let PathWork { e, d, y } = work;
        // forward sweep: e_i = pi_i + h k_{i-1} e_{i-1} / d_{i-1}, d_i = e_i + h k_i
        for i in 0..n {
            let (ei, yi) = if i == 0 {
                (self.pi[0], rho[0])
            } else {
                let hk = h * k[i - 1];
                let frac = hk / d[i - 1];
                (self.pi[i] + frac * e[i - 1], rho[i] + frac * y[i - 1])
            };
            e[i] = ei;
            y[i] = yi;
            d[i] = if i + 1 < n { ei + h * k[i] } else { ei };
        }
        // back substitution: u_i = (y_i + h k_i u_{i+1}) / d_i
        let mut u_next = 0.0;
        for i in (0..n).rev() {
            let num = if i + 1 < n { y[i] + h * k[i] * u_next } else { y[i] };
            let u = num / d[i];
            out[i] = self.pi[i] * u;
            u_next = u;
        }
    }

    /// Second-order step built from implicit Euler by Richardson extrapolation.
    pub fn richardson_step(&self, rho: &[f64], h: f64, out: &mut [f64], work: &mut PathWork) {
        let n = rho.len();
        let mut full = vec![0.0; n];
        let mut half = vec![0.0; n];
        self.implicit_euler(rho, h, &mut full, work);
        self.implicit_euler(rho, 0.5 * h, &mut half, work);
        let mut half2 = vec![0.0; n];
        self.implicit_euler(&half, 0.5 * h, &mut half2, work);
        for i in 0..n {
            out[i] = 2.0 * half2[i] - full[i];
        }
    }

    /// Net mass flux across every face, `k_i (u_i - u_{i+1})`.
    pub fn face_fluxes(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.k.len()).map(|i| self.k[i] * (rho[i] / self.pi[i] - rho[i + 1] / self.pi[i + 1])).collect()
    }
}

/// Scratch space for [`PathGenerator`] solves.
#[derive(Debug, Default, Clone)]
pub struct PathWork {
    e: Vec<f64>,
    d: Vec<f64>,
    y: Vec<f64>,
}

impl PathWork {
    fn resize(&mut self, n: usize) {
        self.e.resize(n, 0.0);
        self.d.resize(n, 0.0);
        self.y.resize(n, 0.0);
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Ordinary least squares `y = slope*x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomial_and_peak() {
        let q = integrate(|x| x * x, 0.0, 3.0, 1e-14, 1e-14).unwrap();
        assert!((q.value - 9.0).abs() < 1e-12);
        let q = integrate(|x| (-(x * x) / 1e-4).exp(), -1.0, 1.0, 1e-15, 1e-12).unwrap();
        assert!((q.value - (std::f64::consts::PI * 1e-4).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dopri_exponential_decay() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let sol = dopri5(|y, dy| dy[0] = -2.0 * y[0], &[1.0], &grid, OdeOptions::default()).unwrap();
        for (t, y) in grid.iter().zip(&sol) {
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn path_generator_conserves_mass_and_relaxes() {
        let g = PathGenerator { pi: vec![0.25, 0.5, 0.25], k: vec![1.0, 1e9] };
        let mut rho = vec![1.0, 0.0, 0.0];
        let mut out = vec![0.0; 3];
        let mut work = PathWork::default();
        for _ in 0..2000 {
            g.implicit_euler(&rho, 0.01, &mut out, &mut work);
            rho.copy_from_slice(&out);
        }
        let mass: f64 = rho.iter().sum();
        assert!((mass - 1.0).abs() < 1e-13);
        for (r, p) in rho.iter().zip(&g.pi) {
            assert!((r - p).abs() < 1e-6);
        }
    }
}
