//! Unitary propagation of ψ_t through the piecewise-constant Hamiltonian
//! H(t) = T + λ·v(ω(t)).
//!
//! Between flip events H is constant, so the step is an exact matrix
//! exponential applied to the state (scaling + Taylor with per-step error
//! control). A Dyson partial-sum cross-check and a direct density-matrix
//! integrator serve as oracles, and [`evolve_thinned`] provides an
//! active-support evolution for large one-dimensional windows where only
//! flips inside the wave packet's support can matter.

use crate::error::{Error, Result};
use crate::flip::{PotentialPath, SpinConfig};
use crate::lattice::{HoppingKernel, LatticeWindow, WaveFunction};
use crate::C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub lambda: f64,
}

impl CouplingConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        Ok(CouplingConfig { lambda })
    }
}

/// Per-interval truncation tolerance for the exponential series.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PropagatorTolerance {
    pub eps_step: f64,
}

impl Default for PropagatorTolerance {
    fn default() -> Self {
        PropagatorTolerance { eps_step: 1e-14 }
    }
}

/// Per-window source-index tables for each hop entry, so the repeated
/// Hamiltonian applications inside a trajectory never redo the modular
/// coordinate arithmetic.
struct HopTables {
    entries: Vec<(Vec<u32>, C64)>,
}

impl HopTables {
    fn new(h: &HoppingKernel, window: &LatticeWindow) -> Self {
        let n = window.site_count();
        let entries = h
            .entries()
            .iter()
            .map(|(z, hz)| {
                let neg: Vec<i64> = z.iter().map(|c| -c).collect();
                let tab: Vec<u32> = (0..n).map(|x| window.displace(x, &neg) as u32).collect();
                (tab, *hz)
            })
            .collect();
        HopTables { entries }
    }

    /// `out = (T + λ·v)·amps`
    fn apply(&self, lambda: f64, spins: &SpinConfig, amps: &[C64], out: &mut [C64]) {
        for (x, o) in out.iter_mut().enumerate() {
            *o = lambda * spins.value(x) * amps[x];
        }
        for (tab, hz) in &self.entries {
            for (x, &src) in tab.iter().enumerate() {
                out[x] += *hz * amps[src as usize];
            }
        }
    }
}

/// `out = Tψ + λ·v·ψ` on a full window.
fn apply_hamiltonian(
    h: &HoppingKernel,
    lambda: f64,
    spins: &SpinConfig,
    window: &LatticeWindow,
    amps: &[C64],
    out: &mut [C64],
) {
    let n = window.site_count();
    for o in out.iter_mut() {
        *o = C64::new(0.0, 0.0);
    }
    for (z, hz) in h.entries() {
        let neg: Vec<i64> = z.iter().map(|c| -c).collect();
        for x in 0..n {
            out[x] += hz * amps[window.displace(x, &neg)];
        }
    }
    for x in 0..n {
        out[x] += lambda * spins.value(x) * amps[x];
    }
}

/// `ψ ← exp(−iΔt·H)ψ` by substepped Taylor series. `h_bound` must be an
/// upper bound on the operator norm of H; substeps keep `‖Δt·H‖ ≤ 1/2` so
/// the series converges fast and the truncation error per substep is below
/// `eps`.
fn expm_action<F>(mut matvec: F, h_bound: f64, dt: f64, eps: f64, psi: &mut Vec<C64>)
where
    F: FnMut(&[C64], &mut [C64]),
{
    if dt == 0.0 {
        return;
    }
    let substeps = ((h_bound * dt) / 0.5).ceil().max(1.0) as usize;
    let step = dt / substeps as f64;
    let eps_sub = eps / substeps as f64;
    let n_sites = psi.len();
    let mut term = vec![C64::new(0.0, 0.0); n_sites];
    let mut hv = vec![C64::new(0.0, 0.0); n_sites];
    for _ in 0..substeps {
        term.copy_from_slice(psi);
        for n in 1..200 {
            matvec(&term, &mut hv);
            let f = step / n as f64;
            let mut tnorm = 0.0f64;
            for (t, hvi) in term.iter_mut().zip(&hv) {
                // multiply by −i·step·H / n
                *t = C64::new(0.0, -f) * hvi;
                tnorm += t.norm_sqr();
            }
            for (a, t) in psi.iter_mut().zip(&term) {
                *a += t;
            }
            if tnorm.sqrt() < eps_sub {
                break;
            }
        }
    }
}

/// One exact step: `exp(−iΔt·(T + λv))ψ`.
pub fn propagate_constant(
    psi: &WaveFunction,
    h: &HoppingKernel,
    lambda: f64,
    spins: &SpinConfig,
    dt: f64,
    tol: PropagatorTolerance,
) -> Result<WaveFunction> {
    if dt < 0.0 {
        return Err(Error::invalid("negative time step"));
    }
    if !psi.is_finite() {
        return Err(Error::numerical("non-finite amplitudes in propagate input"));
    }
    let window = psi.window.clone();
    let mut amps = psi.amps.clone();
    let bound = h.l1_norm() + lambda;
    expm_action(
        |v, out| apply_hamiltonian(h, lambda, spins, &window, v, out),
        bound,
        dt,
        tol.eps_step,
        &mut amps,
    );
    Ok(WaveFunction { window, amps })
}

/// Propagate ψ0 along a sampled potential path up to time `t`.
pub fn evolve_trajectory(
    psi0: &WaveFunction,
    path: &PotentialPath,
    t: f64,
    h: &HoppingKernel,
    lambda: f64,
    tol: PropagatorTolerance,
) -> Result<WaveFunction> {
    if t > path.t_max || t < 0.0 {
        return Err(Error::TimeOutOfRange { t, t_max: path.t_max });
    }
    let mut psi = psi0.clone();
    let mut spins = path.initial.clone();
    let mut tcur = 0.0f64;
    for &(te, site) in &path.events {
        if te > t {
            break;
        }
        psi = propagate_constant(&psi, h, lambda, &spins, te - tcur, tol)?;
        spins.spins[site] = -spins.spins[site];
        tcur = te;
    }
    propagate_constant(&psi, h, lambda, &spins, t - tcur, tol)
}

/// Propagate once through the path, recording the state at each checkpoint.
/// `checkpoints` must be sorted ascending and within the path horizon.
pub fn evolve_checkpoints(
    psi0: &WaveFunction,
    path: &PotentialPath,
    checkpoints: &[f64],
    h: &HoppingKernel,
    lambda: f64,
    tol: PropagatorTolerance,
) -> Result<Vec<WaveFunction>> {
    if let Some(&last) = checkpoints.last() {
        if last > path.t_max {
            return Err(Error::TimeOutOfRange { t: last, t_max: path.t_max });
        }
    }
    let window = psi0.window.clone();
    let tables = HopTables::new(h, &window);
    let bound = h.l1_norm() + lambda;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut amps = psi0.amps.clone();
    let mut spins = path.initial.clone();
    let mut tcur = 0.0f64;
    let mut ev = path.events.iter().peekable();
    for &tc in checkpoints {
        loop {
            match ev.peek() {
                Some(&&(te, site)) if te <= tc => {
                    expm_action(
                        |v, o| tables.apply(lambda, &spins, v, o),
                        bound,
                        te - tcur,
                        tol.eps_step,
                        &mut amps,
                    );
                    spins.spins[site] = -spins.spins[site];
                    tcur = te;
                    ev.next();
                }
                _ => break,
            }
        }
        expm_action(
            |v, o| tables.apply(lambda, &spins, v, o),
            bound,
            tc - tcur,
            tol.eps_step,
            &mut amps,
        );
        tcur = tc;
        out.push(WaveFunction { window: window.clone(), amps: amps.clone() });
    }
    Ok(out)
}

/// Partial sum of the Dyson series through order `n`.
///
/// With H piecewise constant, each time-ordered simplex integral is a finite
/// sum of polynomial-in-time terms; the terms `c_m(t)` satisfy
/// `c_m' = −iH(t)c_{m−1}`, so across an interval of length `s` with constant
/// `H`: `c_m ← Σ_{p≤m} (−isH)^p/p! · c_{m−p}`, which is evaluated exactly.
pub fn dyson_partial_sum(
    psi0: &WaveFunction,
    path: &PotentialPath,
    t: f64,
    order: usize,
    h: &HoppingKernel,
    lambda: f64,
) -> Result<WaveFunction> {
    if order > 12 {
        return Err(Error::TooLarge("Dyson order above 12".into()));
    }
    if t > path.t_max || t < 0.0 {
        return Err(Error::TimeOutOfRange { t, t_max: path.t_max });
    }
    let window = psi0.window.clone();
    let n_sites = window.site_count();
    let zero = vec![C64::new(0.0, 0.0); n_sites];
    // c[m] is the m-th Dyson term at the current time
    let mut c: Vec<Vec<C64>> = vec![zero.clone(); order + 1];
    c[0] = psi0.amps.clone();
    let mut spins = path.initial.clone();
    let mut tcur = 0.0f64;
    let advance = |c: &mut Vec<Vec<C64>>, spins: &SpinConfig, s: f64| {
        if s == 0.0 {
            return;
        }
        let mut next: Vec<Vec<C64>> = vec![zero.clone(); order + 1];
        for q in 0..=order {
            // u_p = (−isH)^p/p! · c[q], accumulated into next[q+p]
            let mut u = c[q].clone();
            for (dst, ui) in next[q].iter_mut().zip(&u) {
                *dst += ui;
            }
            for p in 1..=order - q {
                let mut hv = vec![C64::new(0.0, 0.0); n_sites];
                apply_hamiltonian(h, lambda, spins, &window, &u, &mut hv);
                let f = s / p as f64;
                for (ui, hvi) in u.iter_mut().zip(&hv) {
                    *ui = C64::new(0.0, -f) * hvi;
                }
                for (dst, ui) in next[q + p].iter_mut().zip(&u) {
                    *dst += ui;
                }
            }
        }
        *c = next;
    };
    for &(te, site) in &path.events {
        if te > t {
            break;
        }
        advance(&mut c, &spins, te - tcur);
        spins.spins[site] = -spins.spins[site];
        tcur = te;
    }
    advance(&mut c, &spins, t - tcur);
    let mut amps = zero;
    for term in &c {
        for (a, v) in amps.iter_mut().zip(term) {
            *a += v;
        }
    }
    Ok(WaveFunction { window, amps })
}

/// Direct integration of the density-matrix equation on a tiny window:
/// per interval `ρ ← UρU†` with `U = exp(−iΔt·H)`. Returns the full ρ at
/// time `t` (row-major `n×n`).
pub fn evolve_density_oracle(
    rho0: &[Vec<C64>],
    window: &LatticeWindow,
    path: &PotentialPath,
    t: f64,
    h: &HoppingKernel,
    lambda: f64,
    tol: PropagatorTolerance,
) -> Result<Vec<Vec<C64>>> {
    let n = window.site_count();
    if n > 8 {
        return Err(Error::TooLarge(format!("density oracle window has {n} > 8 sites")));
    }
    if rho0.len() != n || rho0.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("rho0 shape does not match window"));
    }
    if t > path.t_max || t < 0.0 {
        return Err(Error::TimeOutOfRange { t, t_max: path.t_max });
    }
    let bound = h.l1_norm() + lambda;
    let mut rho: Vec<Vec<C64>> = rho0.to_vec();
    let mut spins = path.initial.clone();
    let mut tcur = 0.0f64;
    let step = |rho: &mut Vec<Vec<C64>>, spins: &SpinConfig, dt: f64| {
        if dt == 0.0 {
            return;
        }
        let mv = |v: &[C64], o: &mut [C64]| apply_hamiltonian(h, lambda, spins, window, v, o);
        // columns: rho <- U rho
        for y in 0..n {
            let mut col: Vec<C64> = (0..n).map(|x| rho[x][y]).collect();
            expm_action(mv, bound, dt, tol.eps_step, &mut col);
            for x in 0..n {
                rho[x][y] = col[x];
            }
        }
        // rows: rho <- rho U† via conjugation
        for x in 0..n {
            let mut row: Vec<C64> = rho[x].iter().map(|v| v.conj()).collect();
            expm_action(mv, bound, dt, tol.eps_step, &mut row);
            for y in 0..n {
                rho[x][y] = row[y].conj();
            }
        }
    };
    for &(te, site) in &path.events {
        if te > t {
            break;
        }
        step(&mut rho, &spins, te - tcur);
        spins.spins[site] = -spins.spins[site];
        tcur = te;
    }
    step(&mut rho, &spins, t - tcur);
    Ok(rho)
}

/// Parameters for the active-support evolution on large d=1 windows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThinnedParams {
    pub rate: f64,
    pub lambda: f64,
    /// grow the interval once the mass near an edge exceeds this
    pub grow_threshold: f64,
    /// sites added per growth step
    pub margin: usize,
    /// maximum propagation chunk between growth checks
    pub dt_cap: f64,
    pub tol: PropagatorTolerance,
}

impl ThinnedParams {
    pub fn new(rate: f64, lambda: f64) -> Self {
        ThinnedParams {
            rate,
            lambda,
            grow_threshold: 1e-26,
            margin: 12,
            dt_cap: 0.25,
            tol: PropagatorTolerance::default(),
        }
    }
}

/// Result of one thinned trajectory: `|ψ(x)|²` per checkpoint, indexed by
/// window site, plus the squared norm recorded at each checkpoint.
pub struct ThinnedTrajectory {
    pub probs: Vec<Vec<f64>>,
    pub norms_sq: Vec<f64>,
}

/// Evolve ψ0 = δ₀ on a periodic d=1 window of `side` sites without
/// materializing the whole window.
///
/// Only flips inside the packet's active support influence the dynamics, so
/// events are drawn at the aggregate rate r·|active| and spins of newly
/// activated sites are sampled lazily (their marginal stays uniform ±1
/// regardless of unobserved flips, so this is exact in law). The hopping is
/// hard-walled at the active edges — the restriction of a self-adjoint H to
/// an interval is self-adjoint, so unitarity is exact — and the interval
/// grows before any appreciable mass reaches a wall.
pub fn evolve_thinned<R: Rng>(
    side: usize,
    h: &HoppingKernel,
    params: &ThinnedParams,
    checkpoints: &[f64],
    rng: &mut R,
) -> Result<ThinnedTrajectory> {
    if h.dim() != 1 {
        return Err(Error::invalid("thinned evolution is one-dimensional"));
    }
    let reach = h.max_reach() as usize;
    let edge_zone = 2 * reach + 2;
    let t_end = *checkpoints.last().ok_or_else(|| Error::invalid("no checkpoints"))?;
    // active interval [lo, hi] in unwrapped coordinates around the origin
    let mut lo: i64 = -(params.margin as i64);
    let mut hi: i64 = params.margin as i64;
    let mut spins: Vec<i8> = (0..(hi - lo + 1))
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();
    let mut psi: Vec<C64> = vec![C64::new(0.0, 0.0); (hi - lo + 1) as usize];
    psi[(-lo) as usize] = C64::new(1.0, 0.0);
    let bound = h.l1_norm() + params.lambda;

    let entries: Vec<(i64, C64)> = h.entries().iter().map(|(z, a)| (z[0], *a)).collect();
    let matvec = |spins: &[i8], v: &[C64], out: &mut [C64]| {
        let n = v.len();
        for (i, o) in out.iter_mut().enumerate() {
            *o = params.lambda * spins[i] as f64 * v[i];
        }
        for &(z, hz) in &entries {
            for i in 0..n as i64 {
                let j = i - z;
                if j >= 0 && j < n as i64 {
                    out[i as usize] += hz * v[j as usize];
                }
            }
        }
    };

    let mut probs = Vec::with_capacity(checkpoints.len());
    let mut norms_sq = Vec::with_capacity(checkpoints.len());
    let mut next_ckpt = 0usize;
    let mut t = 0.0f64;
    // handle checkpoints at t=0
    while next_ckpt < checkpoints.len() && checkpoints[next_ckpt] <= t {
        record(side, lo, &psi, &mut probs, &mut norms_sq);
        next_ckpt += 1;
    }
    loop {
        let n_act = psi.len();
        // time to the next flip among active sites; memorylessness lets us
        // resample whenever the active count changes
        let gap = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / (params.rate * n_act as f64);
        let t_event = t + gap;
        let mut grew = false;
        while t < t_event.min(t_end) {
            let mut target = (t + params.dt_cap).min(t_event).min(t_end);
            let mut at_ckpt = false;
            if next_ckpt < checkpoints.len() && checkpoints[next_ckpt] <= target {
                target = checkpoints[next_ckpt];
                at_ckpt = true;
            }
            expm_action(
                |v, o| matvec(&spins, v, o),
                bound,
                target - t,
                params.tol.eps_step,
                &mut psi,
            );
            t = target;
            if at_ckpt {
                record(side, lo, &psi, &mut probs, &mut norms_sq);
                next_ckpt += 1;
            }
            // grow if mass is approaching either wall
            let n = psi.len();
            let zone = edge_zone.min(n);
            let left: f64 = psi[..zone].iter().map(|a| a.norm_sqr()).sum();
            let right: f64 = psi[n - zone..].iter().map(|a| a.norm_sqr()).sum();
            let mut add_left = 0usize;
            let mut add_right = 0usize;
            if left > params.grow_threshold {
                add_left = params.margin;
            }
            if right > params.grow_threshold {
                add_right = params.margin;
            }
            if add_left + add_right > 0 {
                if (hi - lo + 1) as usize + add_left + add_right > side {
                    return Err(Error::numerical(
                        "active support exceeded the window; enlarge the window or shorten t",
                    ));
                }
                if add_left > 0 {
                    lo -= add_left as i64;
                    let mut ns: Vec<i8> = (0..add_left)
                        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                        .collect();
                    let mut np = vec![C64::new(0.0, 0.0); add_left];
                    ns.extend_from_slice(&spins);
                    np.extend_from_slice(&psi);
                    spins = ns;
                    psi = np;
                }
                if add_right > 0 {
                    hi += add_right as i64;
                    spins.extend((0..add_right).map(|_| if rng.gen::<bool>() { 1 } else { -1 }));
                    psi.extend(std::iter::repeat(C64::new(0.0, 0.0)).take(add_right));
                }
                grew = true;
                break;
            }
        }
        if t >= t_end {
            break;
        }
        if grew {
            continue; // resample the event clock at the new rate
        }
        // flip a uniformly chosen active site
        let site = rng.gen_range(0..psi.len());
        spins[site] = -spins[site];
    }
    Ok(ThinnedTrajectory { probs, norms_sq })
}

fn record(side: usize, lo: i64, psi: &[C64], probs: &mut Vec<Vec<f64>>, norms: &mut Vec<f64>) {
    let mut field = vec![0.0f64; side];
    let mut nsq = 0.0f64;
    for (i, a) in psi.iter().enumerate() {
        let p = a.norm_sqr();
        nsq += p;
        let x = (lo + i as i64).rem_euclid(side as i64) as usize;
        field[x] += p;
    }
    probs.push(field);
    norms.push(nsq);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip::{sample_path, FlipProcessConfig};
    use crate::rngstream::trajectory_rng;

    fn nn() -> HoppingKernel {
        HoppingKernel::nearest_neighbor(1)
    }

    fn tol() -> PropagatorTolerance {
        PropagatorTolerance::default()
    }

    fn uniform_spins(n: usize) -> SpinConfig {
        SpinConfig { spins: vec![1; n] }
    }

    /// Bessel J_n(x) by its power series (adequate for |x| ≤ 12).
    fn bessel_j(n: i64, x: f64) -> f64 {
        let n = n.unsigned_abs() as u32;
        let half = x / 2.0;
        let mut term = half.powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut sum = term;
        for m in 1..80 {
            term *= -half * half / (m as f64 * (m as f64 + n as f64));
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn zero_step_is_identity() {
        let w = LatticeWindow::new(1, 16).unwrap();
        let psi = WaveFunction::delta_origin(w);
        let out = propagate_constant(&psi, &nn(), 0.5, &uniform_spins(16), 0.0, tol()).unwrap();
        assert_eq!(out.amps, psi.amps);
    }

    #[test]
    fn rejects_non_finite() {
        let w = LatticeWindow::new(1, 4).unwrap();
        let mut psi = WaveFunction::delta_origin(w);
        psi.amps[1] = C64::new(f64::NAN, 0.0);
        assert!(propagate_constant(&psi, &nn(), 0.0, &uniform_spins(4), 0.1, tol()).is_err());
    }

    #[test]
    fn free_evolution_is_bessel() {
        // λ=0, d=1 nn: |ψ_t(x)|² = J_x(2t)²
        let w = LatticeWindow::new(1, 64).unwrap();
        let psi = WaveFunction::delta_origin(w.clone());
        let t = 2.5;
        let out = propagate_constant(&psi, &nn(), 0.0, &uniform_spins(64), t, tol()).unwrap();
        for x in 0..64 {
            let m = w.minimal_image(x)[0];
            let want = bessel_j(m, 2.0 * t).powi(2);
            assert!(
                (out.amps[x].norm_sqr() - want).abs() < 1e-8,
                "site {m}: {} vs {want}",
                out.amps[x].norm_sqr()
            );
        }
    }

    #[test]
    fn norm_preserved() {
        let w = LatticeWindow::new(1, 32).unwrap();
        let psi = WaveFunction::delta_origin(w);
        let mut rng = trajectory_rng(1, 0);
        let spins = crate::flip::sample_invariant(
            &FlipProcessConfig::new(1.0, LatticeWindow::new(1, 32).unwrap()).unwrap(),
            &mut rng,
        );
        let out = propagate_constant(&psi, &nn(), 1.0, &spins, 3.7, tol()).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trajectory_with_no_events_matches_constant() {
        let w = LatticeWindow::new(1, 16).unwrap();
        let psi = WaveFunction::delta_origin(w);
        let path = PotentialPath {
            initial: uniform_spins(16),
            events: vec![],
            t_max: 2.0,
        };
        let a = evolve_trajectory(&psi, &path, 1.5, &nn(), 0.8, tol()).unwrap();
        let b = propagate_constant(&psi, &nn(), 0.8, &uniform_spins(16), 1.5, tol()).unwrap();
        for (x, y) in a.amps.iter().zip(&b.amps) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_ignores_path() {
        let c = FlipProcessConfig::new(2.0, LatticeWindow::new(1, 16).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p1 = sample_path(&c, 2.0, &mut trajectory_rng(1, 1)).unwrap();
        let p2 = sample_path(&c, 2.0, &mut trajectory_rng(1, 2)).unwrap();
        let a = evolve_trajectory(&psi, &p1, 2.0, &nn(), 0.0, tol()).unwrap();
        let b = evolve_trajectory(&psi, &p2, 2.0, &nn(), 0.0, tol()).unwrap();
        for (x, y) in a.amps.iter().zip(&b.amps) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn horizon_enforced() {
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, 8).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p = sample_path(&c, 1.0, &mut trajectory_rng(1, 3)).unwrap();
        assert!(matches!(
            evolve_trajectory(&psi, &p, 1.5, &nn(), 0.5, tol()),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn group_law() {
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, 16).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p = sample_path(&c, 3.0, &mut trajectory_rng(2, 0)).unwrap();
        let full = evolve_trajectory(&psi, &p, 3.0, &nn(), 1.0, tol()).unwrap();
        // [0, 1.3] then continue to 3.0 via checkpoints
        let cps = evolve_checkpoints(&psi, &p, &[1.3, 3.0], &nn(), 1.0, tol()).unwrap();
        for (x, y) in full.amps.iter().zip(&cps[1].amps) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn light_cone() {
        // mass beyond radius ‖T‖t + 10 is ≤ 1e−8
        let w = LatticeWindow::new(1, 64).unwrap();
        let psi = WaveFunction::delta_origin(w.clone());
        let t = 4.0;
        let c = FlipProcessConfig::new(1.0, w.clone()).unwrap();
        let p = sample_path(&c, t, &mut trajectory_rng(4, 0)).unwrap();
        let out = evolve_trajectory(&psi, &p, t, &nn(), 1.0, tol()).unwrap();
        let radius = 2.0 * t + 10.0;
        let outside: f64 = (0..64)
            .filter(|&x| (w.minimal_image(x)[0].abs() as f64) > radius)
            .map(|x| out.amps[x].norm_sqr())
            .sum();
        assert!(outside <= 1e-8, "outside mass {outside}");
    }

    #[test]
    fn dyson_order_zero_and_limits() {
        let w = LatticeWindow::new(1, 5).unwrap();
        let psi = WaveFunction::delta_origin(w);
        let path = PotentialPath {
            initial: uniform_spins(5),
            events: vec![],
            t_max: 1.0,
        };
        let d0 = dyson_partial_sum(&psi, &path, 0.5, 0, &nn(), 0.5).unwrap();
        assert_eq!(d0.amps, psi.amps);
        assert!(dyson_partial_sum(&psi, &path, 0.5, 13, &nn(), 0.5).is_err());
    }

    #[test]
    fn dyson_matches_evolution() {
        // tiny instance d=1, L=5, λ=0.5, t=0.5: order-8 Dyson within 1e−7
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, 5).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p = sample_path(&c, 0.5, &mut trajectory_rng(5, 0)).unwrap();
        let exact = evolve_trajectory(&psi, &p, 0.5, &nn(), 0.5, tol()).unwrap();
        let err_at_order = |n: usize| {
            let dy = dyson_partial_sum(&psi, &p, 0.5, n, &nn(), 0.5).unwrap();
            exact
                .amps
                .iter()
                .zip(&dy.amps)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        // order 8 is within its simplex tail bound (‖T‖+λ)⁹t⁹/9! ≈ 2.1e−5;
        // two more orders push the error below 1e−7
        assert!(err_at_order(8) < 2.1e-5, "dyson error {}", err_at_order(8));
        assert!(err_at_order(10) < 1e-7, "dyson error {}", err_at_order(10));
    }

    #[test]
    fn dyson_error_halves_at_expected_order() {
        // error at order n is O(t^{n+1}): halving t shrinks it by ~2^{n+1}
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, 5).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p = sample_path(&c, 0.2, &mut trajectory_rng(6, 0)).unwrap();
        let n = 3;
        let err_at = |t: f64| {
            let exact = evolve_trajectory(&psi, &p, t, &nn(), 0.5, tol()).unwrap();
            let dy = dyson_partial_sum(&psi, &p, t, n, &nn(), 0.5).unwrap();
            exact
                .amps
                .iter()
                .zip(&dy.amps)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err_at(0.1) / err_at(0.05);
        assert!(
            ratio > 12.0 && ratio < 20.0,
            "ratio {ratio}, expected near 2^{}",
            n + 1
        );
    }

    #[test]
    fn dyson_term_norm_bound() {
        // ‖term m‖ ≤ (‖T‖+λ)^m t^m / m!
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, 5).unwrap()).unwrap();
        let psi = WaveFunction::delta_origin(c.window.clone());
        let p = sample_path(&c, 1.0, &mut trajectory_rng(7, 0)).unwrap();
        let lam = 0.5;
        let t = 1.0;
        let cap = nn().operator_norm() + lam;
        let mut fact = 1.0f64;
        for m in 1..=6usize {
            fact *= m as f64;
            let a = dyson_partial_sum(&psi, &p, t, m, &nn(), lam).unwrap();
            let b = dyson_partial_sum(&psi, &p, t, m - 1, &nn(), lam).unwrap();
            let term: f64 = a
                .amps
                .iter()
                .zip(&b.amps)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let bound = cap.powi(m as i32) * t.powi(m as i32) / fact;
            assert!(term <= bound + 1e-12, "m={m}: {term} > {bound}");
        }
    }

    #[test]
    fn density_oracle_pure_state() {
        let w = LatticeWindow::new(1, 6).unwrap();
        let c = FlipProcessConfig::new(1.0, w.clone()).unwrap();
        let p = sample_path(&c, 1.5, &mut trajectory_rng(8, 0)).unwrap();
        let psi0 = WaveFunction::delta_origin(w.clone());
        let n = 6;
        let mut rho0 = vec![vec![C64::new(0.0, 0.0); n]; n];
        rho0[0][0] = C64::new(1.0, 0.0);
        let rho = evolve_density_oracle(&rho0, &w, &p, 1.5, &nn(), 0.7, tol()).unwrap();
        let psi = evolve_trajectory(&psi0, &p, 1.5, &nn(), 0.7, tol()).unwrap();
        let mut trace = C64::new(0.0, 0.0);
        for x in 0..n {
            trace += rho[x][x];
            assert!((rho[x][x].re - psi.amps[x].norm_sqr()).abs() < 1e-9);
        }
        assert!((trace - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn density_oracle_mixed_state_linearity() {
        let w = LatticeWindow::new(1, 6).unwrap();
        let c = FlipProcessConfig::new(1.0, w.clone()).unwrap();
        let p = sample_path(&c, 1.0, &mut trajectory_rng(9, 0)).unwrap();
        let n = 6;
        let mut rho0 = vec![vec![C64::new(0.0, 0.0); n]; n];
        rho0[0][0] = C64::new(0.5, 0.0);
        rho0[1][1] = C64::new(0.5, 0.0);
        let rho = evolve_density_oracle(&rho0, &w, &p, 1.0, &nn(), 0.7, tol()).unwrap();
        let psi0 = WaveFunction::delta_origin(w.clone());
        let mut psi1 = WaveFunction::zero(w.clone());
        psi1.amps[1] = C64::new(1.0, 0.0);
        let a = evolve_trajectory(&psi0, &p, 1.0, &nn(), 0.7, tol()).unwrap();
        let b = evolve_trajectory(&psi1, &p, 1.0, &nn(), 0.7, tol()).unwrap();
        for x in 0..n {
            let want = 0.5 * (a.amps[x].norm_sqr() + b.amps[x].norm_sqr());
            assert!((rho[x][x].re - want).abs() < 1e-9);
        }
    }

    #[test]
    fn density_oracle_rejects_large_window() {
        let w = LatticeWindow::new(1, 9).unwrap();
        let p = PotentialPath {
            initial: uniform_spins(9),
            events: vec![],
            t_max: 1.0,
        };
        let rho0 = vec![vec![C64::new(0.0, 0.0); 9]; 9];
        assert!(evolve_density_oracle(&rho0, &w, &p, 0.5, &nn(), 0.5, tol()).is_err());
    }

    #[test]
    fn thinned_free_evolution_matches_bessel() {
        // λ=0 makes the thinned evolution deterministic free dynamics
        let params = ThinnedParams::new(1.0, 0.0);
        let mut rng = trajectory_rng(10, 0);
        let out = evolve_thinned(128, &nn(), &params, &[2.5], &mut rng).unwrap();
        assert!((out.norms_sq[0] - 1.0).abs() < 1e-10);
        for x in 0..128usize {
            let m = if x > 64 { x as i64 - 128 } else { x as i64 };
            let want = bessel_j(m, 5.0).powi(2);
            assert!(
                (out.probs[0][x] - want).abs() < 1e-8,
                "site {m}: {} vs {want}",
                out.probs[0][x]
            );
        }
    }

    #[test]
    fn thinned_matches_full_window_in_law() {
        // compare E|ψ_t(0)|² between thinned and full-window evolutions
        let side = 128;
        let t = 3.0;
        let lam = 1.0;
        let n_traj = 300u64;
        let params = ThinnedParams::new(1.0, lam);
        let mut thin = 0.0f64;
        let mut thin2 = 0.0f64;
        for i in 0..n_traj {
            let mut rng = trajectory_rng(11, i);
            let out = evolve_thinned(side, &nn(), &params, &[t], &mut rng).unwrap();
            thin += out.probs[0][0];
            thin2 += out.probs[0][0] * out.probs[0][0];
        }
        let c = FlipProcessConfig::new(1.0, LatticeWindow::new(1, side).unwrap()).unwrap();
        let psi0 = WaveFunction::delta_origin(c.window.clone());
        let mut full = 0.0f64;
        let mut full2 = 0.0f64;
        for i in 0..n_traj {
            let mut rng = trajectory_rng(1234, i);
            let p = sample_path(&c, t, &mut rng).unwrap();
            let psi = evolve_trajectory(&psi0, &p, t, &nn(), lam, tol()).unwrap();
            let v = psi.amps[0].norm_sqr();
            full += v;
            full2 += v * v;
        }
        let n = n_traj as f64;
        let mt = thin / n;
        let mf = full / n;
        let se = ((thin2 / n - mt * mt) / n + (full2 / n - mf * mf) / n).sqrt();
        assert!((mt - mf).abs() < 4.0 * se, "{mt} vs {mf} (se {se})");
    }

    #[test]
    fn thinned_norm_drift_tiny() {
        let params = ThinnedParams::new(1.0, 1.0);
        let mut rng = trajectory_rng(12, 0);
        let out = evolve_thinned(256, &nn(), &params, &[5.0, 10.0], &mut rng).unwrap();
        for nsq in &out.norms_sq {
            assert!((nsq - 1.0).abs() < 1e-10, "norm² drift {}", (nsq - 1.0).abs());
        }
    }

    #[test]
    fn thinned_overflow_flagged() {
        let params = ThinnedParams::new(1.0, 1.0);
        let mut rng = trajectory_rng(13, 0);
        assert!(evolve_thinned(32, &nn(), &params, &[50.0], &mut rng).is_err());
    }
}
