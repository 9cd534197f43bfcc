//! The flip-process Markov potential: each site of the window carries a ±1
//! spin that flips at the times of an independent rate-`r` Poisson clock.
//! The invariant measure is the uniform product measure.

use crate::error::{Error, Result};
use crate::lattice::LatticeWindow;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlipProcessConfig {
    pub rate: f64,
    pub window: LatticeWindow,
}

impl FlipProcessConfig {
    pub fn new(rate: f64, window: LatticeWindow) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::invalid("flip rate must be positive"));
        }
        Ok(FlipProcessConfig { rate, window })
    }
}

/// Spin configuration on a window; entries are exactly ±1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfig {
    pub spins: Vec<i8>,
}

impl SpinConfig {
    pub fn value(&self, site: usize) -> f64 {
        self.spins[site] as f64
    }
}

/// Event-driven record of one flip-process trajectory on `[0, t_max]`.
///
/// Paths are right continuous: the value *at* an event time is the post-flip
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialPath {
    pub initial: SpinConfig,
    /// (time, site), times strictly increasing.
    pub events: Vec<(f64, usize)>,
    pub t_max: f64,
}

impl PotentialPath {
    /// Configuration at time `t` (right-continuous convention).
    pub fn potential_at(&self, t: f64) -> Result<SpinConfig> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::TimeOutOfRange { t, t_max: self.t_max });
        }
        let mut cfg = self.initial.clone();
        for &(s, site) in &self.events {
            if s > t {
                break;
            }
            cfg.spins[site] = -cfg.spins[site];
        }
        Ok(cfg)
    }
}

/// Uniform product measure on {−1,+1}^window.
pub fn sample_invariant<R: Rng>(cfg: &FlipProcessConfig, rng: &mut R) -> SpinConfig {
    let n = cfg.window.site_count();
    SpinConfig {
        spins: (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect(),
    }
}

/// Sample a full path: exponential gaps at aggregate rate `r·N`, uniform site
/// per event (equivalent in law to independent per-site clocks).
pub fn sample_path<R: Rng>(cfg: &FlipProcessConfig, t_max: f64, rng: &mut R) -> Result<PotentialPath> {
    if !(t_max > 0.0) {
        return Err(Error::invalid("t_max must be positive"));
    }
    let n = cfg.window.site_count();
    let initial = sample_invariant(cfg, rng);
    let total_rate = cfg.rate * n as f64;
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / total_rate;
        if t >= t_max {
            break;
        }
        events.push((t, rng.gen_range(0..n)));
    }
    Ok(PotentialPath { initial, events, t_max })
}

/// Constants of the flip process entering the spectral-gap bound:
/// mixing time `T = 1/(2r)`, sectoriality `γ = 0` (the generator is
/// symmetric), non-degeneracy `χ = 1/(√2·r)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarkovConstants {
    pub gap_t: f64,
    pub sector_gamma: f64,
    pub nondeg_chi: f64,
}

impl MarkovConstants {
    pub fn flip(rate: f64) -> Self {
        MarkovConstants {
            gap_t: 1.0 / (2.0 * rate),
            sector_gamma: 0.0,
            nondeg_chi: 1.0 / (std::f64::consts::SQRT_2 * rate),
        }
    }

    /// Lower bound δ_λ on the spectral gap of `L̂_0` off the ground state,
    /// given the disorder strength `λ` and the hopping symbol sup-norm.
    pub fn delta_lambda(&self, lambda: f64, h_inf: f64) -> f64 {
        let t = self.gap_t;
        let denom = 2.0 + self.sector_gamma + 2.0 * t * h_inf + 4.0 * t * lambda;
        let lc2 = (lambda * self.nondeg_chi).powi(2);
        (1.0 / t) * lc2 / (denom * denom + lc2)
    }
}

/// Dense matrix of the flip generator `B` on functions over {−1,1}ⁿ.
/// Configurations are indexed by bitmask; bit set ⇔ spin −1 at that site.
/// `B f(σ) = r·Σ_x [f(σ) − f(σ with site x flipped)]`.
pub fn flip_generator_dense(n: usize, rate: f64) -> Result<Vec<Vec<f64>>> {
    let dim = 1usize
        .checked_shl(n as u32)
        .filter(|&d| d <= 4096)
        .ok_or_else(|| Error::TooLarge(format!("2^{n} configurations exceed dense limit")))?;
    let mut b = vec![vec![0.0; dim]; dim];
    for sigma in 0..dim {
        b[sigma][sigma] = rate * n as f64;
        for x in 0..n {
            b[sigma][sigma ^ (1 << x)] = -rate;
        }
    }
    Ok(b)
}

/// Character `e_A(σ) = Π_{x∈A} σ(x)` as a vector over bitmask-indexed
/// configurations, `A` itself a bitmask.
pub fn character_vector(n: usize, a_mask: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|sigma| if (sigma & a_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// Write a path in the line-oriented text format: a `#`-header with seed,
/// rate, and window, then one `time site` pair per line.
pub fn write_path<W: Write>(
    w: &mut W,
    path: &PotentialPath,
    cfg: &FlipProcessConfig,
    seed: u64,
) -> Result<()> {
    writeln!(
        w,
        "# seed={} rate={} dim={} side={} t_max={}",
        seed, cfg.rate, cfg.window.dim, cfg.window.side, path.t_max
    )?;
    let init: Vec<String> = path.initial.spins.iter().map(|s| s.to_string()).collect();
    writeln!(w, "# initial {}", init.join(" "))?;
    for &(t, site) in &path.events {
        writeln!(w, "{t:.17e} {site}")?;
    }
    Ok(())
}

/// Parse the format produced by [`write_path`].
pub fn read_path<R: BufRead>(r: &mut R) -> Result<PotentialPath> {
    let mut initial = None;
    let mut t_max = 0.0f64;
    let mut events = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(vals) = rest.strip_prefix("initial") {
                let spins: std::result::Result<Vec<i8>, _> =
                    vals.split_whitespace().map(str::parse).collect();
                initial = Some(SpinConfig {
                    spins: spins.map_err(|e| Error::invalid(format!("bad spin: {e}")))?,
                });
            } else {
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("t_max=") {
                        t_max = v
                            .parse()
                            .map_err(|e| Error::invalid(format!("bad t_max: {e}")))?;
                    }
                }
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let t: f64 = it
            .next()
            .ok_or_else(|| Error::invalid("missing event time"))?
            .parse()
            .map_err(|e| Error::invalid(format!("bad time: {e}")))?;
        let site: usize = it
            .next()
            .ok_or_else(|| Error::invalid("missing event site"))?
            .parse()
            .map_err(|e| Error::invalid(format!("bad site: {e}")))?;
        events.push((t, site));
    }
    let initial = initial.ok_or_else(|| Error::invalid("path file has no initial line"))?;
    Ok(PotentialPath { initial, events, t_max })
}
