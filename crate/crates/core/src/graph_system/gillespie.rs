use super::MarkovGraph;
use crate::cosh_core::{eta, rate_density_l, ExtReal};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Empirical measure on a time grid with per-interval one-way fluxes
/// `(J_xy, J_yx)` for every stored pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OneWayPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `oneway[i][e]` is the mean one-way flux pair on `[t_i, t_{i+1})`.
    pub oneway: Vec<Vec<(f64, f64)>>,
    /// State used for the jump intensities on `[t_i, t_{i+1})`: the time average
    /// for simulated paths, the left endpoint for constructed ones.
    pub occupation: Vec<Vec<f64>>,
}

impl OneWayPath {
    /// Largest residual of `rho_{i+1} - rho_i - dt (inflow - outflow)`.
    pub fn continuity_residual(&self, g: &MarkovGraph) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.oneway.len() {
            let dt = self.times[i + 1] - self.times[i];
            let mut d = vec![0.0; g.len()];
            for (e, &(a, b)) in g.edges().iter().zip(&self.oneway[i]) {
                d[e.x] += b - a;
                d[e.y] += a - b;
            }
            for x in 0..g.len() {
                worst = worst.max((self.states[i + 1][x] - self.states[i][x] - dt * d[x]).abs());
            }
        }
        worst
    }

    /// Re-integrates states from `rho0` so that continuity holds.
    pub fn from_oneway(g: &MarkovGraph, times: Vec<f64>, rho0: Vec<f64>, oneway: Vec<Vec<(f64, f64)>>) -> Self {
        let mut states = vec![rho0];
        for i in 0..oneway.len() {
            let dt = times[i + 1] - times[i];
            let mut next = states[i].clone();
            for (e, &(a, b)) in g.edges().iter().zip(&oneway[i]) {
                next[e.x] += dt * (b - a);
                next[e.y] += dt * (a - b);
            }
            states.push(next);
        }
        let occupation = states[..oneway.len()].to_vec();
        OneWayPath { times, states, oneway, occupation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// Every particle drawn independently from `pi`.
    Stationary,
    AllAt(usize),
    Counts(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct GillespieOptions {
    pub n_particles: u64,
    pub t_end: f64,
    pub seed: u64,
    /// Number of output intervals.
    pub n_out: usize,
    pub initial: Initial,
}

#[derive(Debug, Clone)]
pub struct GillespieResult {
    pub path: OneWayPath,
    /// Time-averaged empirical measure over `[0, T]`.
    pub occupation: Vec<f64>,
    /// Total one-way jump counts per pair.
    pub counts: Vec<(u64, u64)>,
    pub events: u64,
    /// SHA-256 of the event sequence `(time bits, from, to)`.
    pub digest: String,
}

/// Independent particles jumping with rates `kappa`, simulated as one
/// population by the direct method.
pub fn gillespie(g: &MarkovGraph, opts: &GillespieOptions) -> Result<GillespieResult> {
    let n = g.len();
    if opts.n_particles == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() || opts.n_out == 0 {
        return Err(Error::InvalidArgument("T must be positive and n_out >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut count = vec![0u64; n];
    match &opts.initial {
        Initial::Stationary => {
            for _ in 0..opts.n_particles {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (x, p) in g.pi().iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = x;
                        break;
                    }
                }
                count[pick] += 1;
            }
        }
        Initial::AllAt(x) => {
            if *x >= n {
                return Err(Error::InvalidArgument(format!("node {x} out of range")));
            }
            count[*x] = opts.n_particles;
        }
        Initial::Counts(c) => {
            if c.len() != n || c.iter().sum::<u64>() != opts.n_particles {
                return Err(Error::InvalidArgument("initial counts must match nodes and particle number".into()));
            }
            count.clone_from(c);
        }
    }
    // outgoing lists (target, rate, pair index, forward?)
    let mut out: Vec<Vec<(usize, f64, usize, bool)>> = vec![Vec::new(); n];
    for (i, e) in g.edges().iter().enumerate() {
        if e.k_xy > 0.0 {
            out[e.x].push((e.y, e.k_xy, i, true));
        }
        if e.k_yx > 0.0 {
            out[e.y].push((e.x, e.k_yx, i, false));
        }
    }
    let q = g.exit_rates();
    let np = opts.n_particles as f64;
    let dt_out = opts.t_end / opts.n_out as f64;
    let times: Vec<f64> = (0..=opts.n_out).map(|i| i as f64 * dt_out).collect();
    let mut states = vec![count.iter().map(|&c| c as f64 / np).collect::<Vec<_>>()];
    let mut interval = vec![(0u64, 0u64); g.edges().len()];
    let mut oneway = Vec::with_capacity(opts.n_out);
    let mut totals = vec![(0u64, 0u64); g.edges().len()];
    let mut occ = vec![0.0; n];
    let mut hasher = Sha256::new();
    let mut t = 0.0;
    let mut next_out = 1;
    let mut events = 0u64;
    let mut occ_int = vec![0.0; n];
    let mut occupation_path = Vec::with_capacity(opts.n_out);
    let flush = |interval: &mut Vec<(u64, u64)>,
                 occ_int: &mut Vec<f64>,
                 count: &[u64],
                 states: &mut Vec<Vec<f64>>,
                 oneway: &mut Vec<Vec<(f64, f64)>>,
                 occupation_path: &mut Vec<Vec<f64>>| {
        let scale = 1.0 / (np * dt_out);
        oneway.push(interval.iter().map(|&(a, b)| (a as f64 * scale, b as f64 * scale)).collect());
        states.push(count.iter().map(|&c| c as f64 / np).collect());
        occupation_path.push(occ_int.iter().map(|o| o * scale).collect());
        interval.iter_mut().for_each(|v| *v = (0, 0));
        occ_int.iter_mut().for_each(|v| *v = 0.0);
    };
    loop {
        let total: f64 = count.iter().zip(&q).map(|(&c, &r)| c as f64 * r).sum();
        let wait = if total > 0.0 { -(1.0 - rng.gen::<f64>()).ln() / total } else { f64::INFINITY };
        let t_next = t + wait;
        // close output intervals passed before the next event
        while next_out <= opts.n_out && times[next_out] <= t_next {
            let tb = times[next_out];
            for x in 0..n {
                occ_int[x] += count[x] as f64 * (tb - t);
            }
            t = tb;
            for x in 0..n {
                occ[x] += occ_int[x];
            }
            flush(&mut interval, &mut occ_int, &count, &mut states, &mut oneway, &mut occupation_path);
            next_out += 1;
        }
        if next_out > opts.n_out {
            break;
        }
        for x in 0..n {
            occ_int[x] += count[x] as f64 * (t_next - t);
        }
        t = t_next;
        let mut u = rng.gen::<f64>() * total;
        let mut from = n - 1;
        for x in 0..n {
            let w = count[x] as f64 * q[x];
            if u < w {
                from = x;
                break;
            }
            u -= w;
        }
        while count[from] == 0 || q[from] == 0.0 {
            from -= 1;
        }
        let mut v = rng.gen::<f64>() * q[from];
        let mut pick = *out[from].last().unwrap();
        for &o in &out[from] {
            if v < o.1 {
                pick = o;
                break;
            }
            v -= o.1;
        }
        let (to, _, pair, fwd) = pick;
        count[from] -= 1;
        count[to] += 1;
        if fwd {
            interval[pair].0 += 1;
            totals[pair].0 += 1;
        } else {
            interval[pair].1 += 1;
            totals[pair].1 += 1;
        }
        hasher.update(t.to_bits().to_le_bytes());
        hasher.update((from as u64).to_le_bytes());
        hasher.update((to as u64).to_le_bytes());
        events += 1;
    }
    let occupation = occ.iter().map(|o| o / (np * opts.t_end)).collect();
    let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(GillespieResult {
        path: OneWayPath { times, states, oneway, occupation: occupation_path },
        occupation,
        counts: totals,
        events,
        digest,
    })
}

/// `J = int sum_E eta(J_xy | rho_x kappa_xy) dt`, left-endpoint in time;
/// `+inf` if the path violates continuity.
pub fn ldp_rate(g: &MarkovGraph, path: &OneWayPath) -> Result<ExtReal> {
    if path.states.len() != path.times.len()
        || path.oneway.len() + 1 != path.times.len()
        || path.occupation.len() != path.oneway.len()
    {
        return Err(Error::InvalidTrajectory("path shape mismatch".into()));
    }
    if path.oneway.iter().any(|f| f.len() != g.edges().len()) {
        return Err(Error::InvalidTrajectory("one flux pair per edge required".into()));
    }
    if path.states.iter().chain(&path.occupation).flatten().any(|&r| !(r >= 0.0)) {
        return Err(Error::InvalidTrajectory("negative or NaN density on the path".into()));
    }
    let scale = path.states[0].iter().sum::<f64>().max(1.0);
    if !(path.continuity_residual(g) <= 1e-9 * scale) {
        return Ok(f64::INFINITY);
    }
    let mut total = 0.0;
    for i in 0..path.oneway.len() {
        let dt = path.times[i + 1] - path.times[i];
        let rho = &path.occupation[i];
        let mut s = 0.0;
        for (e, &(a, b)) in g.edges().iter().zip(&path.oneway[i]) {
            s += eta(a, rho[e.x] * e.k_xy) + eta(b, rho[e.y] * e.k_yx);
        }
        total += dt * s;
    }
    Ok(total)
}

/// Noiseless path `J_xy = rho_x kappa_xy` by explicit Euler on `times`.
pub fn typical_path(g: &MarkovGraph, rho0: &[f64], times: &[f64]) -> OneWayPath {
    let mut states = vec![rho0.to_vec()];
    let mut oneway = Vec::with_capacity(times.len().saturating_sub(1));
    for i in 0..times.len().saturating_sub(1) {
        let rho = &states[i];
        let f: Vec<(f64, f64)> = g.edges().iter().map(|e| (rho[e.x] * e.k_xy, rho[e.y] * e.k_yx)).collect();
        let dt = times[i + 1] - times[i];
        let mut next = rho.clone();
        for (e, &(a, b)) in g.edges().iter().zip(&f) {
            next[e.x] += dt * (b - a);
            next[e.y] += dt * (a - b);
        }
        oneway.push(f);
        states.push(next);
    }
    let occupation = states[..oneway.len()].to_vec();
    OneWayPath { times: times.to_vec(), states, oneway, occupation }
}

/// Contracted rate at fixed net flux `j_xy = (J_xy - J_yx)/2`: per pair
/// `L(j_yx; u_x, u_y; k_xy)` with `u = rho/pi`, `k_xy = pi_x kappa_xy`.
pub fn ldp_contracted(g: &MarkovGraph, rho: &[f64], net: &[f64]) -> ExtReal {
    g.edges()
        .iter()
        .zip(net)
        .map(|(e, &j)| {
            let k = g.pi()[e.x] * e.k_xy;
            rate_density_l(-j, rho[e.x] / g.pi()[e.x], rho[e.y] / g.pi()[e.y], k)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::golden_section;

    fn two(p: f64) -> MarkovGraph {
        MarkovGraph::new(MarkovGraph::default_ids(2), vec![p, 1.0 - p], &[(0, 1, 1.0), (1, 0, p / (1.0 - p))]).unwrap()
    }

    fn opts(n: u64, t: f64, seed: u64) -> GillespieOptions {
        GillespieOptions { n_particles: n, t_end: t, seed, n_out: 50, initial: Initial::Stationary }
    }

    #[test]
    fn no_rates_no_jumps() {
        let g = MarkovGraph::new(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[]).unwrap();
        let r = gillespie(&g, &opts(100, 1.0, 1)).unwrap();
        assert_eq!(r.events, 0);
        assert!(r.path.states.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_under_seed() {
        let g = two(0.5);
        let a = gillespie(&g, &opts(500, 5.0, 9)).unwrap();
        let b = gillespie(&g, &opts(500, 5.0, 9)).unwrap();
        let c = gillespie(&g, &opts(500, 5.0, 10)).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.path, b.path);
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn empirical_path_satisfies_continuity() {
        let g = two(0.3);
        let r = gillespie(&g, &GillespieOptions { initial: Initial::AllAt(0), ..opts(1000, 3.0, 4) }).unwrap();
        assert!(r.path.continuity_residual(&g) < 1e-12);
        assert!(ldp_rate(&g, &r.path).unwrap().is_finite());
    }

    #[test]
    fn typical_path_zero_and_perturbation_positive() {
        let g = two(0.3);
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let p = typical_path(&g, &[0.9, 0.1], &times);
        assert_eq!(ldp_rate(&g, &p).unwrap(), 0.0);
        let doubled: Vec<Vec<(f64, f64)>> = p
            .oneway
            .iter()
            .enumerate()
            .map(|(i, f)| if i < 10 { vec![(2.0 * f[0].0, f[0].1)] } else { f.clone() })
            .collect();
        let q = OneWayPath::from_oneway(&g, times, vec![0.9, 0.1], doubled);
        let v = ldp_rate(&g, &q).unwrap();
        assert!(v > 0.0 && v.is_finite(), "{v}");
        let mut broken = p.clone();
        broken.states[5][0] += 0.1;
        assert!(ldp_rate(&g, &broken).unwrap().is_infinite());
    }

    #[test]
    fn contraction_matches_one_dimensional_minimisation() {
        let g = two(0.3);
        let rho = [0.55, 0.45];
        for &j in &[0.0, 0.2, -0.35] {
            let (ax, ay) = (rho[0] * g.rate(0, 1), rho[1] * g.rate(1, 0));
            // J_xy - J_yx = 2 j, parametrised by J_yx = b
            let f = |b: f64| eta(b + 2.0 * j, ax) + eta(b, ay);
            let lo = (-2.0 * j).max(0.0) + 1e-14;
            let (_, m) = golden_section(f, lo, 10.0, 1e-13);
            let c = ldp_contracted(&g, &rho, &[j]);
            assert!((c - m).abs() < 1e-8, "{c} {m}");
        }
    }
}
