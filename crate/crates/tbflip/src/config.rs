//! Run configuration: a single sectioned `key = value` text file (TOML
//! grammar), with programmatic overrides for command-line flags and a
//! manifest format that reproduces runs bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::lattice::{HoppingKernel, LatticeWindow};
use crate::spectral::basis::{CharacterBasis, Truncation};
use crate::spectral::report::SpectralOptions;
use crate::{Error, Result};

/// Bumped whenever an output schema changes.
pub const ARTIFACT_VERSION: &str = "tbflip-artifacts-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// lattice dimension
    pub dim: usize,
    /// periodic window side
    pub side: usize,
    /// coupling strength λ
    pub lambda: f64,
    /// flip rate r
    pub rate: f64,
    /// hopping kernel; `nearest` is the nearest-neighbor Laplacian-type
    /// kernel h(±e_i) = 1
    pub kernel: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 1, side: 512, lambda: 1.0, rate: 1.0, kernel: "nearest".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub t_max: f64,
    /// checkpoints on the linear late-time grid `[t_max/2, t_max]`
    pub n_linear: usize,
    /// explicit checkpoint times (overrides the generated grid)
    pub times: Vec<f64>,
    /// dual-grid integer wavevectors tracked per trajectory
    pub cf_k_indices: Vec<Vec<i64>>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_traj: 200,
            seed: 42,
            t_max: 50.0,
            n_linear: 7,
            times: Vec::new(),
            cf_k_indices: vec![vec![1], vec![2], vec![3], vec![4], vec![5], vec![6]],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub pos_radius: i64,
    pub set_size: usize,
    pub set_radius: i64,
    /// number of E(k) samples per axis (k = j·k_step, j = 0..k_count)
    pub k_count: usize,
    pub k_step: f64,
    pub hessian_step: f64,
    pub with_gap: bool,
    pub arnoldi_m: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            pos_radius: 12,
            set_size: 2,
            set_radius: 2,
            k_count: 5,
            k_step: 0.05,
            hessian_step: 1e-3,
            with_gap: false,
            arnoldi_m: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// ring length for the dense oracles
    pub ring: usize,
    pub t: f64,
    /// Monte Carlo trajectories for the comparison
    pub n_traj: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { ring: 5, t: 2.0, n_traj: 20_000, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub ensemble: EnsembleConfig,
    pub spectral: SpectralConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

/// Written next to every output; feeding it back as `--config` reproduces
/// the run bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

impl RunConfig {
    pub fn from_str_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load from a `key = value` config file, or from a previously written
    /// JSON manifest (recognized by its leading `{`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("manifest parse: {e}")))?;
            if m.artifact_version != ARTIFACT_VERSION {
                return Err(Error::Config(format!(
                    "manifest artifact version {} does not match {}",
                    m.artifact_version, ARTIFACT_VERSION
                )));
            }
            return Ok(m.config);
        }
        Self::from_str_toml(&text)
    }

    /// Apply a `section.key=value` override (the value is parsed with the
    /// config-file grammar).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key '{path}' is not section.key")))?;
        let snippet = format!("[{section}]\n{key} = {value}\n");
        // bare words (e.g. kernel=nearest) fall back to a quoted string
        let patch: toml::Value = toml::from_str(&snippet).or_else(|_| {
            toml::from_str(&format!(
                "[{section}]\n{key} = {:?}\n",
                value.trim()
            ))
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
        })?;
        let mut whole = toml::Value::try_from(self.clone())
            .map_err(|e| Error::Config(e.to_string()))?;
        let (Some(wt), Some(pt)) = (whole.as_table_mut(), patch.as_table()) else {
            return Err(Error::Config("override did not parse to a table".into()));
        };
        let sec = wt
            .get_mut(section)
            .and_then(|v| v.as_table_mut())
            .ok_or_else(|| Error::Config(format!("unknown section '{section}'")))?;
        let inner = pt[section].as_table().expect("snippet shape");
        for (k, v) in inner {
            if !sec.contains_key(k) {
                return Err(Error::Config(format!("unknown key '{section}.{k}'")));
            }
            sec.insert(k.clone(), v.clone());
        }
        *self = whole
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.dim == 0 || m.dim > 3 {
            return Err(Error::Config(format!("model.dim = {} outside 1..=3", m.dim)));
        }
        if m.side < 2 {
            return Err(Error::Config("model.side must be at least 2".into()));
        }
        if m.lambda < 0.0 {
            return Err(Error::Config("model.lambda must be nonnegative".into()));
        }
        if m.rate <= 0.0 {
            return Err(Error::Config("model.rate must be positive".into()));
        }
        if m.kernel != "nearest" {
            return Err(Error::Config(format!(
                "model.kernel '{}' unknown (supported: nearest)",
                m.kernel
            )));
        }
        let e = &self.ensemble;
        if e.n_traj == 0 {
            return Err(Error::Config("ensemble.n_traj must be positive".into()));
        }
        if e.t_max <= 0.0 {
            return Err(Error::Config("ensemble.t_max must be positive".into()));
        }
        if e.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("ensemble.times must be strictly increasing".into()));
        }
        if e.cf_k_indices.iter().any(|k| k.len() != m.dim) {
            return Err(Error::Config(
                "ensemble.cf_k_indices entries must have model.dim components".into(),
            ));
        }
        let s = &self.spectral;
        if s.pos_radius < 1 || s.set_radius < 0 {
            return Err(Error::Config("spectral truncation radii out of range".into()));
        }
        let dim_estimate = basis_size_estimate(m.dim, s);
        if dim_estimate > 200_000 {
            return Err(Error::Config(format!(
                "spectral truncation too large: estimated dimension {dim_estimate} > 200000"
            )));
        }
        let o = &self.oracle;
        if o.ring < 2 || o.ring > 7 {
            let bytes = (o.ring as u128 * (1u128 << o.ring)).pow(2) * 16;
            return Err(Error::Config(format!(
                "oracle.ring = {} outside 2..=7 (dense fiber matrix would need ~{} bytes)",
                o.ring, bytes
            )));
        }
        if o.t < 0.0 || o.n_traj == 0 {
            return Err(Error::Config("oracle.t must be ≥ 0 and oracle.n_traj positive".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> HoppingKernel {
        HoppingKernel::nearest_neighbor(self.model.dim)
    }

    pub fn window(&self) -> Result<LatticeWindow> {
        LatticeWindow::new(self.model.dim, self.model.side)
    }

    /// Checkpoint grid: geometric early times `t_max/2^m` (m ≥ 1, down to
    /// ~t_max/32) plus `n_linear` evenly spaced times on `[t_max/2, t_max]`,
    /// unless explicit times are configured.
    pub fn checkpoints(&self) -> Vec<f64> {
        if !self.ensemble.times.is_empty() {
            return self.ensemble.times.clone();
        }
        let t_max = self.ensemble.t_max;
        let mut ts: Vec<f64> = (2..=5).map(|m| t_max / f64::powi(2.0, m)).collect();
        let n = self.ensemble.n_linear.max(2);
        for i in 0..n {
            ts.push(t_max / 2.0 + (t_max / 2.0) * i as f64 / (n - 1) as f64);
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        ts
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let window = self.window()?;
        let cf_ks = self
            .ensemble
            .cf_k_indices
            .iter()
            .map(|m| window.dual_k(m))
            .collect();
        Ok(EnsembleSpec {
            n_traj: self.ensemble.n_traj,
            master_seed: self.ensemble.seed,
            checkpoints: self.checkpoints(),
            window,
            h: self.kernel(),
            lambda: self.model.lambda,
            rate: self.model.rate,
            cf_ks,
        })
    }

    pub fn basis(&self) -> Result<CharacterBasis> {
        CharacterBasis::build(
            self.model.dim,
            Truncation {
                pos_radius: self.spectral.pos_radius,
                set_size: self.spectral.set_size,
                set_radius: self.spectral.set_radius,
            },
        )
    }

    pub fn spectral_options(&self) -> SpectralOptions {
        let d = self.model.dim;
        let mut k_points = Vec::new();
        for axis in 0..d {
            for j in 0..=self.spectral.k_count {
                let mut k = vec![0.0; d];
                k[axis] = j as f64 * self.spectral.k_step;
                if axis == 0 || j > 0 {
                    k_points.push(k);
                }
            }
        }
        SpectralOptions {
            k_points,
            hessian_step: self.spectral.hessian_step,
            with_gap: self.spectral.with_gap,
            arnoldi_m: self.spectral.arnoldi_m,
        }
    }

    /// Short stable hash of the resolved config, used in output file names.
    /// The output section is excluded so the same run lands under the same
    /// name regardless of where its artifacts are written.
    pub fn param_hash(&self) -> String {
        let mut physical = self.clone();
        physical.output = OutputConfig::default();
        let json = serde_json::to_string(&physical).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")[..8].to_string()
    }
}

fn basis_size_estimate(d: usize, s: &SpectralConfig) -> u64 {
    let pos = (2 * s.pos_radius as u64 + 1).pow(d as u32);
    let ball = (2 * s.set_radius as u64 + 1).pow(d as u32) * 2;
    let mut subsets: u64 = 1;
    let mut choose: u64 = 1;
    for i in 0..s.set_size as u64 {
        choose = choose.saturating_mul(ball.saturating_sub(i)) / (i + 1);
        subsets = subsets.saturating_add(choose);
    }
    pos.saturating_mul(subsets)
}
