//! Lattice geometry, the translation-invariant hopping operator `T`, its
//! Fourier symbol, and validation of the hopping assumptions.

use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Finite periodic window approximating `Z^d`.
///
/// Sites are indexed row-major: `index = c_0 + side*(c_1 + side*(c_2 + ...))`
/// with every coordinate in `[0, side)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub dim: usize,
    pub side: usize,
}

impl LatticeWindow {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 || side == 0 {
            return Err(Error::invalid("window dimension and side must be positive"));
        }
        let mut n: usize = 1;
        for _ in 0..dim {
            n = n
                .checked_mul(side)
                .ok_or_else(|| Error::TooLarge(format!("window {side}^{dim} overflows")))?;
        }
        Ok(LatticeWindow { dim, side })
    }

    pub fn site_count(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn index_of(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let side = self.side as i64;
        let mut idx = 0usize;
        for &c in coords.iter().rev() {
            let c = c.rem_euclid(side) as usize;
            idx = idx * self.side + c;
        }
        idx
    }

    pub fn coords_of(&self, mut index: usize) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push((index % self.side) as i64);
            index /= self.side;
        }
        out
    }

    /// Site index displaced by `zeta`, wrapping modulo the side on every axis.
    pub fn displace(&self, index: usize, zeta: &[i64]) -> usize {
        let mut c = self.coords_of(index);
        for (ci, z) in c.iter_mut().zip(zeta) {
            *ci += z;
        }
        self.index_of(&c)
    }

    /// Minimal-image displacement of a site from the origin, per axis in
    /// `(-side/2, side/2]`.
    pub fn minimal_image(&self, index: usize) -> Vec<i64> {
        let side = self.side as i64;
        self.coords_of(index)
            .into_iter()
            .map(|c| if 2 * c > side { c - side } else { c })
            .collect()
    }

    /// Discrete dual-grid wavevector `2π m / side` per axis.
    pub fn dual_k(&self, m: &[i64]) -> Vec<f64> {
        m.iter()
            .map(|&mi| 2.0 * std::f64::consts::PI * mi as f64 / self.side as f64)
            .collect()
    }
}

/// Finite-support hopping kernel `h`, defining `Tψ(x) = Σ_ζ h(ζ) ψ(x−ζ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoppingKernel {
    entries: Vec<(Vec<i64>, C64)>,
}

/// Outcome of checking the hopping assumptions on a kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub self_adjoint: bool,
    pub support_spans: bool,
    pub second_moment: f64,
    pub pass: bool,
    pub messages: Vec<String>,
}

impl HoppingKernel {
    /// Build from displacement/amplitude pairs. Zero amplitudes are dropped,
    /// duplicate displacements summed.
    pub fn new(entries: Vec<(Vec<i64>, C64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("hopping kernel must have at least one entry"));
        }
        let dim = entries[0].0.len();
        let mut merged: Vec<(Vec<i64>, C64)> = Vec::new();
        for (z, h) in entries {
            if z.len() != dim {
                return Err(Error::invalid("hopping displacements have mixed dimensions"));
            }
            if let Some(e) = merged.iter_mut().find(|(m, _)| *m == z) {
                e.1 += h;
            } else {
                merged.push((z, h));
            }
        }
        merged.retain(|(_, h)| h.norm() > 0.0);
        if merged.is_empty() {
            return Err(Error::invalid("hopping kernel is identically zero"));
        }
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(HoppingKernel { entries: merged })
    }

    /// Nearest-neighbor kernel `h(±e_j) = 1` in `d` dimensions.
    pub fn nearest_neighbor(d: usize) -> Self {
        let mut entries = Vec::new();
        for axis in 0..d {
            for sgn in [-1i64, 1] {
                let mut z = vec![0i64; d];
                z[axis] = sgn;
                entries.push((z, C64::new(1.0, 0.0)));
            }
        }
        HoppingKernel::new(entries).expect("nn kernel is valid")
    }

    pub fn dim(&self) -> usize {
        self.entries[0].0.len()
    }

    pub fn entries(&self) -> &[(Vec<i64>, C64)] {
        &self.entries
    }

    fn amplitude(&self, z: &[i64]) -> C64 {
        self.entries
            .iter()
            .find(|(m, _)| m == z)
            .map(|(_, h)| *h)
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// Check self-adjointness, non-degeneracy (support spans `R^d`) and report
    /// the second moment `Σ|x|²|h(x)|` (finite by construction).
    pub fn validate(&self, d: usize) -> Result<ValidationReport> {
        if self.dim() != d {
            return Err(Error::invalid(format!(
                "kernel dimension {} does not match lattice dimension {d}",
                self.dim()
            )));
        }
        let mut messages = Vec::new();
        let mut self_adjoint = true;
        for (z, h) in &self.entries {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            let back = self.amplitude(&neg);
            if (back - h.conj()).norm() > 1e-14 {
                self_adjoint = false;
                messages.push(format!("h(-{z:?}) != conj h({z:?})"));
            }
        }
        let support_spans = self.support_rank() == d;
        if !support_spans {
            messages.push("kernel support does not span R^d".to_string());
        }
        let second_moment = self
            .entries
            .iter()
            .map(|(z, h)| z.iter().map(|c| (c * c) as f64).sum::<f64>() * h.norm())
            .sum();
        Ok(ValidationReport {
            self_adjoint,
            support_spans,
            second_moment,
            pass: self_adjoint && support_spans,
            messages,
        })
    }

    /// Rank of the span of the support vectors (Gaussian elimination).
    fn support_rank(&self) -> usize {
        let d = self.dim();
        let mut rows: Vec<Vec<f64>> = self
            .entries
            .iter()
            .map(|(z, _)| z.iter().map(|&c| c as f64).collect())
            .collect();
        let mut rank = 0;
        for col in 0..d {
            let Some(pivot) = (rank..rows.len()).max_by(|&a, &b| {
                rows[a][col]
                    .abs()
                    .partial_cmp(&rows[b][col].abs())
                    .unwrap()
            }) else {
                break;
            };
            if rows[pivot][col].abs() < 1e-12 {
                continue;
            }
            rows.swap(rank, pivot);
            for r in rank + 1..rows.len() {
                let f = rows[r][col] / rows[rank][col];
                for c in col..d {
                    rows[r][c] -= f * rows[rank][c];
                }
            }
            rank += 1;
            if rank == d {
                break;
            }
        }
        rank
    }

    /// The symbol `ĥ(k) = Σ_x e^{−ik·x} h(x)`.
    pub fn symbol(&self, k: &[f64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (z, h) in &self.entries {
            let phase: f64 = z.iter().zip(k).map(|(&zi, &ki)| zi as f64 * ki).sum();
            acc += h * C64::from_polar(1.0, -phase);
        }
        acc
    }

    /// `‖T‖ = max_k |ĥ(k)|`, located by a coarse grid plus local zoom,
    /// refined until stable to 1e−9.
    pub fn operator_norm(&self) -> f64 {
        let d = self.dim();
        let tau = 2.0 * std::f64::consts::PI;
        // coarse scan
        let n = 64usize;
        let mut best = 0.0f64;
        let mut best_k = vec![0.0; d];
        let mut idx = vec![0usize; d];
        loop {
            let k: Vec<f64> = idx.iter().map(|&i| tau * i as f64 / n as f64).collect();
            let v = self.symbol(&k).norm();
            if v > best {
                best = v;
                best_k = k;
            }
            // odometer over the d-dimensional grid
            let mut axis = 0;
            loop {
                if axis == d {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == d {
                break;
            }
        }
        // local zoom: 5-point sub-grids per axis around the current best,
        // shrinking the spacing until the value stabilizes
        let mut spacing = tau / n as f64;
        let mut prev = best;
        for _ in 0..200 {
            let mut improved = best;
            let mut improved_k = best_k.clone();
            let mut idx = vec![0usize; d];
            loop {
                let k: Vec<f64> = best_k
                    .iter()
                    .zip(&idx)
                    .map(|(&c, &i)| c + spacing * (i as f64 - 2.0) / 2.0)
                    .collect();
                let v = self.symbol(&k).norm();
                if v > improved {
                    improved = v;
                    improved_k = k;
                }
                let mut axis = 0;
                loop {
                    if axis == d {
                        break;
                    }
                    idx[axis] += 1;
                    if idx[axis] < 5 {
                        break;
                    }
                    idx[axis] = 0;
                    axis += 1;
                }
                if axis == d {
                    break;
                }
            }
            best = improved;
            best_k = improved_k;
            spacing *= 0.5;
            if (best - prev).abs() < 1e-12 && spacing < 1e-9 {
                break;
            }
            prev = best;
        }
        best
    }

    /// `Σ_ζ |h(ζ)|`, an ∞-norm bound on `T` used to size propagator substeps.
    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, h)| h.norm()).sum()
    }

    /// `Σ_ζ |ζ| |h(ζ)|`: the derived constant `c` in `‖L̂_k − L̂_0‖ ≤ c|k|`.
    pub fn perturbation_constant(&self) -> f64 {
        self.entries
            .iter()
            .map(|(z, h)| {
                let norm = (z.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
                norm * h.norm()
            })
            .sum()
    }

    /// Largest single-axis reach of the kernel support.
    pub fn max_reach(&self) -> i64 {
        self.entries
            .iter()
            .flat_map(|(z, _)| z.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Complex field on a lattice window.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub window: LatticeWindow,
    pub amps: Vec<C64>,
}

impl WaveFunction {
    pub fn zero(window: LatticeWindow) -> Self {
        let n = window.site_count();
        WaveFunction {
            window,
            amps: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// δ at the origin site.
    pub fn delta_origin(window: LatticeWindow) -> Self {
        let mut psi = WaveFunction::zero(window);
        psi.amps[0] = C64::new(1.0, 0.0);
        psi
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// `(Tψ)(x) = Σ_ζ h(ζ) ψ(x−ζ)` with periodic wrap.
pub fn apply_hopping(h: &HoppingKernel, psi: &WaveFunction) -> WaveFunction {
    let mut out = WaveFunction::zero(psi.window.clone());
    let n = psi.window.site_count();
    for (z, amp) in h.entries() {
        let neg: Vec<i64> = z.iter().map(|c| -c).collect();
        for x in 0..n {
            let src = psi.window.displace(x, &neg);
            out.amps[x] += amp * psi.amps[src];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn1() -> HoppingKernel {
        HoppingKernel::nearest_neighbor(1)
    }

    #[test]
    fn validate_nn_passes() {
        let rep = nn1().validate(1).unwrap();
        assert!(rep.pass && rep.self_adjoint && rep.support_spans);
        assert!((rep.second_moment - 2.0).abs() < 1e-14);
    }

    #[test]
    fn validate_rejects_empty() {
        assert!(HoppingKernel::new(vec![]).is_err());
    }

    #[test]
    fn validate_flags_hyperplane_support() {
        // d=2, support only on (±1, 0): k=(0,π) annihilates the support
        let h = HoppingKernel::new(vec![
            (vec![1, 0], C64::new(1.0, 0.0)),
            (vec![-1, 0], C64::new(1.0, 0.0)),
        ])
        .unwrap();
        let rep = h.validate(2).unwrap();
        assert!(rep.self_adjoint);
        assert!(!rep.support_spans);
        assert!(!rep.pass);
    }

    #[test]
    fn validate_flags_non_self_adjoint() {
        let h = HoppingKernel::new(vec![
            (vec![1], C64::new(1.0, 0.0)),
            (vec![-1], C64::new(2.0, 0.0)),
        ])
        .unwrap();
        let rep = h.validate(1).unwrap();
        assert!(!rep.self_adjoint);
        assert!(!rep.pass);
    }

    #[test]
    fn apply_hopping_delta() {
        let w = LatticeWindow::new(1, 8).unwrap();
        let psi = WaveFunction::delta_origin(w);
        let out = apply_hopping(&nn1(), &psi);
        assert_eq!(out.amps[1], C64::new(1.0, 0.0));
        assert_eq!(out.amps[7], C64::new(1.0, 0.0));
        assert_eq!(out.amps[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn constant_is_eigenvector() {
        let w = LatticeWindow::new(1, 8).unwrap();
        let mut psi = WaveFunction::zero(w);
        psi.amps.iter_mut().for_each(|a| *a = C64::new(1.0, 0.0));
        let out = apply_hopping(&nn1(), &psi);
        for a in &out.amps {
            assert!((a - C64::new(2.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn self_adjoint_against_dense_transpose() {
        // <phi, T psi> = <T phi, psi> on random fields
        let w = LatticeWindow::new(2, 5).unwrap();
        let h = HoppingKernel::nearest_neighbor(2);
        let mut rng = crate::rngstream::trajectory_rng(42, 0);
        use rand::Rng;
        let n = w.site_count();
        let mut phi = WaveFunction::zero(w.clone());
        let mut psi = WaveFunction::zero(w.clone());
        for x in 0..n {
            phi.amps[x] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            psi.amps[x] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let t_psi = apply_hopping(&h, &psi);
        let t_phi = apply_hopping(&h, &phi);
        let lhs: C64 = phi.amps.iter().zip(&t_psi.amps).map(|(a, b)| a.conj() * b).sum();
        let rhs: C64 = t_phi.amps.iter().zip(&psi.amps).map(|(a, b)| a.conj() * b).sum();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn plane_waves_are_eigenvectors() {
        let w = LatticeWindow::new(1, 16).unwrap();
        let h = nn1();
        for m in 0..16i64 {
            let k = w.dual_k(&[m]);
            let mut psi = WaveFunction::zero(w.clone());
            for x in 0..16 {
                psi.amps[x] = C64::from_polar(1.0, k[0] * x as f64);
            }
            let out = apply_hopping(&h, &psi);
            let ev = h.symbol(&k);
            for x in 0..16 {
                assert!((out.amps[x] - ev * psi.amps[x]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn symbol_values() {
        let h = nn1();
        assert!((h.symbol(&[0.0]) - C64::new(2.0, 0.0)).norm() < 1e-14);
        assert!(h.symbol(&[std::f64::consts::FRAC_PI_2]).norm() < 1e-14);
        let h2 = HoppingKernel::nearest_neighbor(2);
        let pi = std::f64::consts::PI;
        assert!((h2.symbol(&[pi, pi]) - C64::new(-4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn operator_norm_nn() {
        assert!((nn1().operator_norm() - 2.0).abs() < 1e-9);
        assert!((HoppingKernel::nearest_neighbor(2).operator_norm() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn operator_norm_matches_dense_grid_oracle() {
        // d=1, h(±1)=1, h(±2)=1/2: oracle is a dense 10^6-point scan
        let h = HoppingKernel::new(vec![
            (vec![1], C64::new(1.0, 0.0)),
            (vec![-1], C64::new(1.0, 0.0)),
            (vec![2], C64::new(0.5, 0.0)),
            (vec![-2], C64::new(0.5, 0.0)),
        ])
        .unwrap();
        let n = 1_000_000usize;
        let tau = 2.0 * std::f64::consts::PI;
        let mut oracle = 0.0f64;
        for i in 0..n {
            let k = tau * i as f64 / n as f64;
            let v = (2.0 * k.cos() + (2.0 * k).cos()).abs();
            if v > oracle {
                oracle = v;
            }
        }
        assert!((h.operator_norm() - oracle).abs() < 1e-8);
    }

    #[test]
    fn norm_matches_dual_grid_max() {
        let w = LatticeWindow::new(1, 64).unwrap();
        let h = nn1();
        let grid_max = (0..64i64)
            .map(|m| h.symbol(&w.dual_k(&[m])).norm())
            .fold(0.0f64, f64::max);
        assert!((h.operator_norm() - grid_max).abs() < 1e-9);
    }

    #[test]
    fn window_wraps() {
        let w = LatticeWindow::new(2, 4).unwrap();
        let idx = w.index_of(&[3, 3]);
        assert_eq!(w.displace(idx, &[1, 1]), w.index_of(&[0, 0]));
        assert_eq!(w.minimal_image(w.index_of(&[3, 0])), vec![-1, 0]);
        // bijection
        for i in 0..w.site_count() {
            assert_eq!(w.index_of(&w.coords_of(i)), i);
        }
    }
}
