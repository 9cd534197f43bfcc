//! Monte Carlo estimation of the disorder-averaged density `E|ψ_t(x)|²`,
//! its characteristic function, the second moment, and diffusion-matrix
//! extraction with bootstrap uncertainty quantification.
//!
//! Trajectories are independent given `(master_seed, index)`; the reduction
//! is a fixed-order chunked sum with compensated accumulation, so identical
//! specs produce bitwise-identical results regardless of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolve::{evolve_checkpoints, evolve_thinned, PropagatorTolerance, ThinnedParams};
use crate::flip::{sample_path, FlipProcessConfig};
use crate::lattice::{HoppingKernel, LatticeWindow, WaveFunction};
use crate::rngstream::trajectory_rng;
use crate::stats::{bootstrap_se_indexed, fit_line, Kahan};
use crate::{C64, Error, Result};

/// Trajectories per deterministic reduction chunk.
const CHUNK: usize = 256;
/// Store per-trajectory site fields (for per-site bootstrap) only below
/// this many raw values; otherwise per-site errors fall back to `sd/√n`.
const RAW_FIELD_LIMIT: usize = 4_000_000;
/// Resamples for every bootstrap error bar.
pub const BOOT_RESAMPLES: usize = 200;
/// A trajectory whose squared norm drifts further than this aborts the run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;
/// Sites within this distance of the window boundary count as boundary mass.
const BOUNDARY_ZONE: i64 = 5;
/// Windows at least this wide (d=1) use the thinned active-support evolver;
/// narrower windows are cheap to evolve whole, and the thinned evolver's
/// conservative support growth wants generous headroom.
const THINNED_MIN_SIDE: usize = 128;

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub master_seed: u64,
    /// sorted checkpoint times
    pub checkpoints: Vec<f64>,
    pub window: LatticeWindow,
    pub h: HoppingKernel,
    pub lambda: f64,
    pub rate: f64,
    /// wavevectors whose characteristic function is tracked per trajectory
    /// (enables bootstrap error bars for CF-based fits)
    pub cf_ks: Vec<Vec<f64>>,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj must be positive"));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::invalid("no checkpoint times"));
        }
        if self
            .checkpoints
            .windows(2)
            .any(|w| w[0] >= w[1])
            || self.checkpoints[0] < 0.0
        {
            return Err(Error::invalid("checkpoints must be sorted, distinct, nonnegative"));
        }
        if self.lambda < 0.0 || self.rate <= 0.0 {
            return Err(Error::invalid("need λ ≥ 0 and r > 0"));
        }
        let d = self.window.dim;
        if self.h.dim() != d || self.cf_ks.iter().any(|k| k.len() != d) {
            return Err(Error::invalid("dimension mismatch between window, kernel, k-list"));
        }
        Ok(())
    }
}

/// Site-indexed mean of `|ψ_t(x)|²` per checkpoint with error bars, plus the
/// per-trajectory scalar observables needed for diffusion fits.
#[derive(Debug, Clone)]
pub struct MeanField {
    pub checkpoints: Vec<f64>,
    pub window: LatticeWindow,
    pub n_traj: usize,
    pub master_seed: u64,
    /// `mean[cp][site]`
    pub mean: Vec<Vec<f64>>,
    /// per-site standard error (bootstrap when the raw field is stored,
    /// `sd/√n` otherwise)
    pub se: Vec<Vec<f64>>,
    /// `m2_axis[cp][axis][traj]`: per-trajectory second moment per axis,
    /// minimal-image displacement from the origin
    pub m2_axis: Vec<Vec<Vec<f64>>>,
    /// tracked wavevectors and `cf_traj[cp][k][traj] = Σ_x e^{−ik·x}|ψ(x)|²`
    pub cf_ks: Vec<Vec<f64>>,
    pub cf_traj: Vec<Vec<Vec<C64>>>,
    /// mean-field mass within [`BOUNDARY_ZONE`] sites of the window boundary
    pub boundary_mass: Vec<f64>,
    /// worst `|‖ψ‖² − 1|` seen at any checkpoint of any trajectory
    pub max_norm_drift: f64,
}

struct ChunkOut {
    sum: Vec<Vec<Kahan>>,
    sumsq: Vec<Vec<Kahan>>,
    m2_axis: Vec<Vec<Vec<f64>>>,
    cf: Vec<Vec<Vec<C64>>>,
    raw: Option<Vec<Vec<Vec<f64>>>>,
    max_norm_drift: f64,
}

/// Estimated full width of the thinned evolver's active interval at time `t`:
/// ballistic front at the kernel's group velocity, the Airy widening of the
/// front down at the growth-threshold amplitude, and the growth margins. The
/// thinned route is only taken when this fits inside the window; otherwise
/// the support would wrap and whole-window periodic evolution is both exact
/// and cheaper.
fn thinned_width_estimate(h: &HoppingKernel, t: f64) -> usize {
    let v: f64 = h
        .entries()
        .iter()
        .map(|(z, a)| z.iter().map(|c| c.abs()).sum::<i64>() as f64 * a.norm())
        .sum();
    let front = v * t;
    let radius = front + 12.0 * front.cbrt() + 36.0;
    (2.0 * radius).ceil() as usize
}

fn simulate_one<Rng: rand::Rng>(
    spec: &EnsembleSpec,
    rng: &mut Rng,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let t_end = *spec.checkpoints.last().unwrap();
    if spec.window.dim == 1
        && spec.window.side >= THINNED_MIN_SIDE
        && thinned_width_estimate(&spec.h, t_end) <= spec.window.side
    {
        let mut params = ThinnedParams::new(spec.rate, spec.lambda);
        params.tol = PropagatorTolerance::default();
        let traj = evolve_thinned(spec.window.side, &spec.h, &params, &spec.checkpoints, rng)?;
        let drift = traj
            .norms_sq
            .iter()
            .map(|&n| (n - 1.0).abs())
            .fold(0.0f64, f64::max);
        Ok((traj.probs, drift))
    } else {
        let fp = FlipProcessConfig { rate: spec.rate, window: spec.window.clone() };
        let path = sample_path(&fp, t_end, rng)?;
        let psi0 = WaveFunction::delta_origin(spec.window.clone());
        let states = evolve_checkpoints(
            &psi0,
            &path,
            &spec.checkpoints,
            &spec.h,
            spec.lambda,
            PropagatorTolerance::default(),
        )?;
        let mut drift = 0.0f64;
        let probs = states
            .iter()
            .map(|s| {
                let p: Vec<f64> = s.amps.iter().map(|a| a.norm_sqr()).collect();
                drift = drift.max((p.iter().sum::<f64>() - 1.0).abs());
                p
            })
            .collect();
        Ok((probs, drift))
    }
}

/// Mean field over `n_traj` independent trajectories: fresh invariant-measure
/// spin configuration and fresh flip path per trajectory, deterministic given
/// `master_seed`.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<MeanField> {
    spec.validate()?;
    let n_sites = spec.window.site_count();
    let ncp = spec.checkpoints.len();
    let nk = spec.cf_ks.len();
    let d = spec.window.dim;
    let keep_raw = n_sites * ncp * spec.n_traj <= RAW_FIELD_LIMIT;

    // geometry tables shared by all trajectories
    let images: Vec<Vec<i64>> = (0..n_sites).map(|s| spec.window.minimal_image(s)).collect();
    let phases: Vec<Vec<C64>> = spec
        .cf_ks
        .iter()
        .map(|k| {
            images
                .iter()
                .map(|x| {
                    let dot: f64 = k.iter().zip(x).map(|(ki, &xi)| ki * xi as f64).sum();
                    C64::from_polar(1.0, -dot)
                })
                .collect()
        })
        .collect();

    let chunk_ranges: Vec<(usize, usize)> = (0..spec.n_traj)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(spec.n_traj)))
        .collect();

    let chunks: Vec<Result<ChunkOut>> = chunk_ranges
        .par_iter()
        .map(|&(lo, hi)| -> Result<ChunkOut> {
            let mut out = ChunkOut {
                sum: vec![vec![Kahan::default(); n_sites]; ncp],
                sumsq: vec![vec![Kahan::default(); n_sites]; ncp],
                m2_axis: vec![vec![Vec::with_capacity(hi - lo); d]; ncp],
                cf: vec![vec![Vec::with_capacity(hi - lo); nk]; ncp],
                raw: keep_raw.then(|| vec![Vec::with_capacity(hi - lo); ncp]),
                max_norm_drift: 0.0,
            };
            for i in lo..hi {
                let mut rng = trajectory_rng(spec.master_seed, i as u64);
                let (probs, drift) = simulate_one(spec, &mut rng)?;
                if drift > NORM_DRIFT_LIMIT {
                    return Err(Error::numerical(format!(
                        "trajectory {i}: norm drift {drift:.3e} exceeds {NORM_DRIFT_LIMIT:.0e}"
                    )));
                }
                out.max_norm_drift = out.max_norm_drift.max(drift);
                for (cp, p) in probs.iter().enumerate() {
                    for (s, &v) in p.iter().enumerate() {
                        out.sum[cp][s].add(v);
                        out.sumsq[cp][s].add(v * v);
                    }
                    for axis in 0..d {
                        let m: f64 = p
                            .iter()
                            .zip(&images)
                            .map(|(&v, x)| v * (x[axis] * x[axis]) as f64)
                            .sum();
                        out.m2_axis[cp][axis].push(m);
                    }
                    for (ki, ph) in phases.iter().enumerate() {
                        let c: C64 = p.iter().zip(ph).map(|(&v, &e)| v * e).sum();
                        out.cf[cp][ki].push(c);
                    }
                    if let Some(raw) = out.raw.as_mut() {
                        raw[cp].push(p.clone());
                    }
                }
            }
            Ok(out)
        })
        .collect();

    // fixed-order deterministic reduction
    let mut sum = vec![vec![Kahan::default(); n_sites]; ncp];
    let mut sumsq = vec![vec![Kahan::default(); n_sites]; ncp];
    let mut m2_axis = vec![vec![Vec::with_capacity(spec.n_traj); d]; ncp];
    let mut cf_traj = vec![vec![Vec::with_capacity(spec.n_traj); nk]; ncp];
    let mut raw: Option<Vec<Vec<Vec<f64>>>> =
        keep_raw.then(|| vec![Vec::with_capacity(spec.n_traj); ncp]);
    let mut max_norm_drift = 0.0f64;
    for chunk in chunks {
        let c = chunk?;
        max_norm_drift = max_norm_drift.max(c.max_norm_drift);
        for cp in 0..ncp {
            for s in 0..n_sites {
                sum[cp][s].add(c.sum[cp][s].value());
                sumsq[cp][s].add(c.sumsq[cp][s].value());
            }
            for axis in 0..d {
                m2_axis[cp][axis].extend_from_slice(&c.m2_axis[cp][axis]);
            }
            for ki in 0..nk {
                cf_traj[cp][ki].extend_from_slice(&c.cf[cp][ki]);
            }
            if let (Some(acc), Some(cr)) = (raw.as_mut(), c.raw.as_ref()) {
                acc[cp].extend_from_slice(&cr[cp]);
            }
        }
    }

    let n = spec.n_traj as f64;
    let mean: Vec<Vec<f64>> = sum
        .iter()
        .map(|row| row.iter().map(|k| k.value() / n).collect())
        .collect();
    let mut se = vec![vec![0.0f64; n_sites]; ncp];
    if spec.n_traj > 1 {
        match &raw {
            Some(raw) => {
                // per-site bootstrap with a dedicated deterministic stream
                for cp in 0..ncp {
                    let mut brng = trajectory_rng(spec.master_seed, u64::MAX - cp as u64);
                    for s in 0..n_sites {
                        se[cp][s] = bootstrap_se_indexed(
                            spec.n_traj,
                            BOOT_RESAMPLES,
                            &mut brng,
                            |idx| idx.iter().map(|&i| raw[cp][i][s]).sum::<f64>() / n,
                        );
                    }
                }
            }
            None => {
                for cp in 0..ncp {
                    for s in 0..n_sites {
                        let m = mean[cp][s];
                        let var = (sumsq[cp][s].value() / n - m * m).max(0.0);
                        se[cp][s] = (var / (n - 1.0)).sqrt();
                    }
                }
            }
        }
    }

    let boundary_mass: Vec<f64> = mean
        .iter()
        .map(|row| {
            let half = spec.window.side as i64 / 2;
            row.iter()
                .zip(&images)
                .filter(|(_, x)| x.iter().any(|&c| c.abs() >= half - BOUNDARY_ZONE))
                .map(|(&v, _)| v)
                .sum()
        })
        .collect();

    Ok(MeanField {
        checkpoints: spec.checkpoints.clone(),
        window: spec.window.clone(),
        n_traj: spec.n_traj,
        master_seed: spec.master_seed,
        mean,
        se,
        m2_axis,
        cf_ks: spec.cf_ks.clone(),
        cf_traj,
        boundary_mass,
        max_norm_drift,
    })
}

impl MeanField {
    /// `∑_x e^{−ik·x} field(x)` at a checkpoint, with a bootstrap error bar
    /// on the real part when `k` is one of the tracked wavevectors (per-site
    /// error propagation, which ignores cross-site correlation, otherwise).
    pub fn characteristic_function(&self, cp: usize, k: &[f64]) -> Result<(C64, f64)> {
        if cp >= self.checkpoints.len() {
            return Err(Error::invalid("checkpoint index out of range"));
        }
        if k.len() != self.window.dim {
            return Err(Error::invalid("wavevector dimension mismatch"));
        }
        if let Some(ki) = self
            .cf_ks
            .iter()
            .position(|kk| kk.iter().zip(k).all(|(a, b)| (a - b).abs() < 1e-12))
        {
            let samples = &self.cf_traj[cp][ki];
            let mean: C64 = samples.iter().sum::<C64>() / samples.len() as f64;
            if samples.len() < 2 {
                return Ok((mean, 0.0));
            }
            let re: Vec<f64> = samples.iter().map(|c| c.re).collect();
            let mut brng =
                trajectory_rng(self.master_seed, u64::MAX / 2 - (cp * 1000 + ki) as u64);
            let se = crate::stats::bootstrap_se(&re, BOOT_RESAMPLES, &mut brng, |v| {
                v.iter().sum::<f64>() / v.len() as f64
            });
            return Ok((mean, se));
        }
        let mut acc = C64::new(0.0, 0.0);
        let mut var = 0.0f64;
        for s in 0..self.window.site_count() {
            let x = self.window.minimal_image(s);
            let dot: f64 = k.iter().zip(&x).map(|(ki, &xi)| ki * xi as f64).sum();
            acc += self.mean[cp][s] * C64::from_polar(1.0, -dot);
            var += self.se[cp][s] * self.se[cp][s];
        }
        Ok((acc, var.sqrt()))
    }

    /// `∑_x |x|² field(x)` with a bootstrap error bar; errs when appreciable
    /// mass sits near the window boundary (minimal image unreliable).
    pub fn second_moment(&self, cp: usize) -> Result<(f64, f64)> {
        if cp >= self.checkpoints.len() {
            return Err(Error::invalid("checkpoint index out of range"));
        }
        if self.boundary_mass[cp] > 1e-6 {
            return Err(Error::numerical(format!(
                "boundary mass {:.3e} at t={} invalidates the second moment",
                self.boundary_mass[cp], self.checkpoints[cp]
            )));
        }
        let n = self.n_traj;
        let total: Vec<f64> = (0..n)
            .map(|i| self.m2_axis[cp].iter().map(|ax| ax[i]).sum())
            .collect();
        let mean = total.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Ok((mean, 0.0));
        }
        let mut brng = trajectory_rng(self.master_seed, u64::MAX / 4 - cp as u64);
        let se = crate::stats::bootstrap_se(&total, BOOT_RESAMPLES, &mut brng, |v| {
            v.iter().sum::<f64>() / v.len() as f64
        });
        Ok((mean, se))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FitMethod {
    M2Slope,
    CfFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub method: FitMethod,
    /// d×d symmetric diffusion matrix estimate
    pub d_matrix: Vec<Vec<f64>>,
    /// bootstrap standard error per matrix entry
    pub d_se: Vec<Vec<f64>>,
    pub r_squared: f64,
    /// fit window `[t_lo, t_hi]` (times used)
    pub fit_window: (f64, f64),
    /// regression intercept (CF fit) or `M2` intercept (M2 fit)
    pub intercept: f64,
    pub flags: Vec<String>,
}

/// Least-squares slope of `M2(t)` over the late-time window
/// `[t_max/2, t_max]`; the slope estimates `2·ΣD_ii` (Gaussian profile with
/// covariance `2Dt`), per-axis slopes give the diagonal entries.
pub fn fit_diffusion_m2(field: &MeanField) -> Result<DiffusionEstimate> {
    let t_max = *field.checkpoints.last().unwrap();
    let t_lo = t_max / 2.0;
    let idx: Vec<usize> = (0..field.checkpoints.len())
        .filter(|&i| field.checkpoints[i] >= t_lo - 1e-12)
        .collect();
    if idx.len() < 5 {
        return Err(Error::invalid(format!(
            "need at least 5 checkpoints in [{t_lo}, {t_max}], have {}",
            idx.len()
        )));
    }
    for &i in &idx {
        if field.boundary_mass[i] > 1e-6 {
            return Err(Error::numerical(
                "boundary mass invalidates the M2 fit window".to_string(),
            ));
        }
    }
    let d = field.window.dim;
    let n = field.n_traj;
    let ts: Vec<f64> = idx.iter().map(|&i| field.checkpoints[i]).collect();
    let mut flags = Vec::new();

    let axis_means = |axis: usize, sel: &[usize]| -> Vec<f64> {
        idx.iter()
            .map(|&i| {
                sel.iter().map(|&j| field.m2_axis[i][axis][j]).sum::<f64>() / sel.len() as f64
            })
            .collect()
    };
    let all: Vec<usize> = (0..n).collect();

    let mut d_matrix = vec![vec![0.0; d]; d];
    let mut d_se = vec![vec![0.0; d]; d];
    let mut total_m2: Vec<f64> = vec![0.0; idx.len()];
    for axis in 0..d {
        let m2 = axis_means(axis, &all);
        for (slot, v) in total_m2.iter_mut().zip(&m2) {
            *slot += v;
        }
        let fit = fit_line(&ts, &m2);
        d_matrix[axis][axis] = fit.slope / 2.0;
        if n >= 2 {
            let mut brng = trajectory_rng(field.master_seed, u64::MAX / 8 - axis as u64);
            d_se[axis][axis] = bootstrap_se_indexed(n, BOOT_RESAMPLES, &mut brng, |sel| {
                fit_line(&ts, &axis_means(axis, sel)).slope / 2.0
            });
        }
    }
    let total_fit = fit_line(&ts, &total_m2);
    if total_fit.r_squared < 0.95 {
        flags.push(format!("nonlinear M2 fit: R² = {:.4}", total_fit.r_squared));
    }
    // diffusive-vs-ballistic diagnostic from the log-log exponent, which
    // separates slopes 1 and 2 even when both fit a line well
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let log_m: Vec<f64> = total_m2.iter().map(|m| m.max(1e-300).ln()).collect();
    let exponent = fit_line(&log_t, &log_m).slope;
    if exponent > 1.5 {
        flags.push(format!("ballistic growth: M2 exponent {exponent:.3}"));
    }
    Ok(DiffusionEstimate {
        method: FitMethod::M2Slope,
        d_matrix,
        d_se,
        r_squared: total_fit.r_squared,
        fit_window: (ts[0], *ts.last().unwrap()),
        intercept: total_fit.intercept,
        flags,
    })
}

/// Log-log exponent of `M2(t)` over the fit window (≈1 diffusive,
/// ≈2 ballistic).
pub fn m2_exponent(field: &MeanField) -> Result<f64> {
    let t_max = *field.checkpoints.last().unwrap();
    let idx: Vec<usize> = (0..field.checkpoints.len())
        .filter(|&i| field.checkpoints[i] >= t_max / 2.0 - 1e-12)
        .collect();
    if idx.len() < 3 {
        return Err(Error::invalid("need at least 3 late checkpoints"));
    }
    let ts: Vec<f64> = idx.iter().map(|&i| field.checkpoints[i].ln()).collect();
    let ms: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let total: f64 = (0..field.n_traj)
                .map(|j| field.m2_axis[i].iter().map(|ax| ax[j]).sum::<f64>())
                .sum::<f64>()
                / field.n_traj as f64;
            total.max(1e-300).ln()
        })
        .collect();
    Ok(fit_line(&ts, &ms).slope)
}

/// Regression of `−ln Re CF(k, t)` against the monomials `t·k_ik_j` over the
/// tracked wavevectors at one checkpoint, recovering the diffusion matrix of
/// the Gaussian limit; `R²` diagnoses Gaussianity.
pub fn fit_diffusion_cf(field: &MeanField, cp: usize) -> Result<DiffusionEstimate> {
    let d = field.window.dim;
    if cp >= field.checkpoints.len() {
        return Err(Error::invalid("checkpoint index out of range"));
    }
    let t = field.checkpoints[cp];
    if t <= 0.0 {
        return Err(Error::invalid("CF fit needs a positive time"));
    }
    let mut flags = Vec::new();
    // usable points: tracked nonzero k with positive Re CF
    let mut xs: Vec<Vec<f64>> = Vec::new(); // monomials per point
    let mut ys: Vec<f64> = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    let monomials = |k: &[f64]| -> Vec<f64> {
        let mut m = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                let c = if i == j { 1.0 } else { 2.0 };
                m.push(c * t * k[i] * k[j]);
            }
        }
        m
    };
    for (ki, k) in field.cf_ks.iter().enumerate() {
        if k.iter().all(|&c| c.abs() < 1e-14) {
            continue;
        }
        let samples = &field.cf_traj[cp][ki];
        let mean_re: f64 = samples.iter().map(|c| c.re).sum::<f64>() / samples.len() as f64;
        if mean_re <= 0.0 {
            flags.push(format!("dropped k index {ki}: Re CF = {mean_re:.3e} ≤ 0"));
            continue;
        }
        xs.push(monomials(k));
        ys.push(-mean_re.ln());
        used.push(ki);
    }
    let p = d * (d + 1) / 2;
    if xs.len() < (p + 1).max(6) {
        return Err(Error::numerical(format!(
            "CF fit has {} usable points, needs at least {}",
            xs.len(),
            (p + 1).max(6)
        )));
    }
    let solve_normal = |xs: &[Vec<f64>], ys: &[f64]| -> Result<(Vec<f64>, f64, f64)> {
        // least squares with intercept via normal equations (p+1 unknowns)
        let q = p + 1;
        let mut a = vec![vec![C64::new(0.0, 0.0); q]; q];
        let mut b = vec![C64::new(0.0, 0.0); q];
        for (row, &y) in xs.iter().zip(ys) {
            let mut full = vec![1.0];
            full.extend_from_slice(row);
            for i in 0..q {
                for j in 0..q {
                    a[i][j] += C64::new(full[i] * full[j], 0.0);
                }
                b[i] += C64::new(full[i] * y, 0.0);
            }
        }
        let sol = crate::sparse::dense_solve(a, b)?;
        let coef: Vec<f64> = sol.iter().map(|c| c.re).collect();
        let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (row, &y) in xs.iter().zip(ys) {
            let pred: f64 = coef[0]
                + row.iter().zip(&coef[1..]).map(|(x, c)| x * c).sum::<f64>();
            ss_res += (y - pred) * (y - pred);
            ss_tot += (y - y_mean) * (y - y_mean);
        }
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Ok((coef[1..].to_vec(), coef[0], r2))
    };
    let (coef, intercept, r_squared) = solve_normal(&xs, &ys)?;
    let mut d_matrix = vec![vec![0.0; d]; d];
    let mut slot = 0usize;
    for i in 0..d {
        for j in i..d {
            d_matrix[i][j] = coef[slot];
            d_matrix[j][i] = coef[slot];
            slot += 1;
        }
    }
    // bootstrap over trajectories: recompute mean CFs on resampled indices
    let mut d_se = vec![vec![0.0; d]; d];
    if field.n_traj >= 2 {
        let n = field.n_traj;
        let mut entry = 0usize;
        for i in 0..d {
            for j in i..d {
                let mut brng =
                    trajectory_rng(field.master_seed, u64::MAX / 16 - entry as u64);
                let se = bootstrap_se_indexed(n, BOOT_RESAMPLES, &mut brng, |sel| {
                    let mut bxs = Vec::new();
                    let mut bys = Vec::new();
                    for (&ki, row) in used.iter().zip(&xs) {
                        let re: f64 = sel
                            .iter()
                            .map(|&s| field.cf_traj[cp][ki][s].re)
                            .sum::<f64>()
                            / sel.len() as f64;
                        if re > 0.0 {
                            bxs.push(row.clone());
                            bys.push(-re.ln());
                        }
                    }
                    match solve_normal(&bxs, &bys) {
                        Ok((c, _, _)) => {
                            let mut s = 0usize;
                            for a in 0..d {
                                for b in a..d {
                                    if a == i && b == j {
                                        return c[s];
                                    }
                                    s += 1;
                                }
                            }
                            0.0
                        }
                        Err(_) => 0.0,
                    }
                });
                d_se[i][j] = se;
                d_se[j][i] = se;
                entry += 1;
            }
        }
    }
    if r_squared < 0.95 {
        flags.push(format!("non-Gaussian CF fit: R² = {r_squared:.4}"));
    }
    Ok(DiffusionEstimate {
        method: FitMethod::CfFit,
        d_matrix,
        d_se,
        r_squared,
        fit_window: (t, t),
        intercept,
        flags,
    })
}

/// Snap a target wavevector to the nearest dual-grid point of the window,
/// returning the snapped vector and the snap error `|k_snap − k|`.
pub fn snap_to_dual(window: &LatticeWindow, k: &[f64]) -> (Vec<f64>, f64) {
    let step = 2.0 * std::f64::consts::PI / window.side as f64;
    let snapped: Vec<f64> = k.iter().map(|&ki| (ki / step).round() * step).collect();
    let err = snapped
        .iter()
        .zip(k)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (snapped, err)
}
