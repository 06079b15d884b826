use crate::error::{invalid, Error, Result};

/// Data of the variational cell problem: constant flux `j`, boundary densities
/// `alpha = w(0)`, `beta = w(1)` and a piecewise-constant conductivity on `[0, 1]`.
///
/// The profile takes value `values[i]` on `[breaks[i], breaks[i+1])`; `breaks`
/// starts at 0 and ends at 1.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub j: f64,
    pub alpha: f64,
    pub beta: f64,
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
    pub n: usize,
}

/// Discrete minimiser of the cell problem.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub value: f64,
    /// Density at the cell centres.
    pub w: Vec<f64>,
    pub newton_iterations: usize,
    /// Harmonic mean `(int 1/k)^{-1}` of the profile.
    pub harmonic_k: f64,
}

impl CellProblem {
    pub fn constant(j: f64, alpha: f64, beta: f64, k: f64, n: usize) -> Self {
        CellProblem { j, alpha, beta, breaks: vec![0.0, 1.0], values: vec![k], n }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("cell problem needs n >= 2");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return invalid("boundary densities must be non-negative");
        }
        if self.alpha * self.beta == 0.0 {
            return invalid("variational cell formula needs alpha, beta > 0; use the explicit branch");
        }
        if self.breaks.len() != self.values.len() + 1
            || self.breaks.first() != Some(&0.0)
            || self.breaks.last() != Some(&1.0)
            || self.breaks.windows(2).any(|w| w[1] <= w[0])
        {
            return invalid("profile breaks must increase from 0 to 1");
        }
        if self.values.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return invalid("conductivity must be bounded below by a positive constant");
        }
        Ok(())
    }

    /// `int_0^1 dz / k(z)` over `[a, b]`.
    fn resistance(&self, a: f64, b: f64) -> f64 {
        let mut r = 0.0;
        for (i, &k) in self.values.iter().enumerate() {
            let lo = self.breaks[i].max(a);
            let hi = self.breaks[i + 1].min(b);
            if hi > lo {
                r += (hi - lo) / k;
            }
        }
        r
    }

    pub fn harmonic_k(&self) -> f64 {
        1.0 / self.resistance(0.0, 1.0)
    }
}

/// Minimises the discretised cell functional
/// `int_0^1 [ j^2/(2 k w) + 2 k |d/dz sqrt(w)|^2 ] dz`, `w(0) = alpha`, `w(1) = beta`,
/// by damped Newton in `v = sqrt(w)` on a uniform grid of cell centres.
pub fn cell_n_variational(p: &CellProblem) -> Result<CellSolution> {
    p.validate()?;
    let n = p.n;
    let h = 1.0 / n as f64;
    // mobility weight of the j^2 term per cell: int_cell 1/k
    let rcell: Vec<f64> = (0..n).map(|i| p.resistance(i as f64 * h, (i + 1) as f64 * h)).collect();
    // face conductances, faces 0..=n with boundary faces at half-cell distance
    let mut g = vec![0.0; n + 1];
    g[0] = 1.0 / p.resistance(0.0, 0.5 * h);
    g[n] = 1.0 / p.resistance(1.0 - 0.5 * h, 1.0);
    for (f, gf) in g.iter_mut().enumerate().take(n).skip(1) {
        *gf = 1.0 / p.resistance((f as f64 - 0.5) * h, (f as f64 + 0.5) * h);
    }
    let (va, vb) = (p.alpha.sqrt(), p.beta.sqrt());
    let j2 = p.j * p.j;
    let energy = |v: &[f64]| -> f64 {
        let mut e = 0.0;
        for i in 0..n {
            e += 0.5 * j2 * rcell[i] / (v[i] * v[i]);
        }
        let mut prev = va;
        for f in 0..=n {
            let next = if f < n { v[f] } else { vb };
            e += 2.0 * g[f] * (next - prev).powi(2);
            prev = next;
        }
        e
    };
    let mut v: Vec<f64> = (0..n).map(|i| va + (vb - va) * (i as f64 + 0.5) * h).collect();
    let floor = 1e-7;
    let mut e = energy(&v);
    let mut grad = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut step = vec![0.0; n];
    let mut iters = 0;
    for it in 0..200 {
        iters = it + 1;
        for i in 0..n {
            let left = if i == 0 { va } else { v[i - 1] };
            let right = if i + 1 == n { vb } else { v[i + 1] };
            grad[i] = -j2 * rcell[i] / v[i].powi(3) + 4.0 * g[i] * (v[i] - left) + 4.0 * g[i + 1] * (v[i] - right);
            diag[i] = 3.0 * j2 * rcell[i] / v[i].powi(4) + 4.0 * (g[i] + g[i + 1]);
            if i + 1 < n {
                off[i] = -4.0 * g[i + 1];
            }
        }
        solve_tridiagonal(&off, &diag, &off, &grad, &mut step);
        let mut t = 1.0;
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut trial = vec![0.0; n];
        loop {
            for i in 0..n {
                trial[i] = (v[i] - t * step[i]).max(floor);
            }
            let et = energy(&trial);
            if et <= e - 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let change = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        let scale = v.iter().cloned().fold(0.0, f64::max);
        v.copy_from_slice(&trial);
        e = energy(&v);
        if change <= 1e-14 * scale {
            break;
        }
        if it == 199 {
            return Err(Error::NumericalFailure("cell Newton iteration did not converge".into()));
        }
    }
    Ok(CellSolution {
        value: e,
        w: v.iter().map(|x| x * x).collect(),
        newton_iterations: iters,
        harmonic_k: p.harmonic_k(),
    })
}

/// Thomas algorithm for `sub[i-1] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    d[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i - 1] * c[i - 1];
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / beta;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
}
