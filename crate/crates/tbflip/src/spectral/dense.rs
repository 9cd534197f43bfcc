//! Dense oracles on a small periodic ring with the full spin space.
//!
//! Two independent dense computations of the disorder-averaged density are
//! provided for cross-validation of the sparse character-basis machinery:
//!
//! * the fiber semigroup `e^{−tL̂_k}` acting on `ℓ²(ring) ⊗ L²({−1,1}^L)`,
//!   contracted to the characteristic function `⟨δ₀⊗1, e^{−tL̂_k} ρ̂_{0;k}⊗1⟩`
//!   and inverse-transformed over the dual grid ("Pillet oracle");
//! * the master equation for the conditioned density matrix
//!   `R_c(x,y) = E[ρ_t(x,y) 1_{ω_t=c}]`, a linear ODE of dimension `L²·2^L`.
//!
//! A Walsh-transform equivalence check pins the character-basis operator
//! conventions (in particular the spin-set translation orientation) to the
//! direct definition of the fiber operator.

use serde::{Deserialize, Serialize};

use crate::lattice::HoppingKernel;
use crate::{C64, Error, Result};

/// Largest ring for the fiber-space oracle (`n = L·2^L` dense).
const MAX_RING_FIBER: usize = 7;
/// Largest ring for the master-equation oracle (`n = L²·2^L` dense).
const MAX_RING_MASTER: usize = 5;

fn spin(c: usize, y: usize, l: usize) -> f64 {
    if (c >> (y % l)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `(σ_z s)(y) = s(y+z)`: bit `y` of the result is bit `(y+z) mod L` of `c`.
fn shift_config(c: usize, z: i64, l: usize) -> usize {
    let mut out = 0usize;
    for y in 0..l {
        let src = (y as i64 + z).rem_euclid(l as i64) as usize;
        if (c >> src) & 1 == 1 {
            out |= 1 << y;
        }
    }
    out
}

fn ring_hops(h: &HoppingKernel, l: usize) -> Result<Vec<(i64, C64)>> {
    let mut out = Vec::new();
    for (z, amp) in h.entries() {
        if z.len() != 1 {
            return Err(Error::invalid("dense ring oracles require d = 1"));
        }
        if z[0].unsigned_abs() as usize * 2 >= l {
            return Err(Error::invalid(
                "hopping range must be below half the ring length",
            ));
        }
        out.push((z[0], *amp));
    }
    Ok(out)
}

/// Dense matrix of the fiber operator `L̂_k = iK̂_k + iλV̂ + B` on the ring,
/// row-major, basis index `(x, c) ↦ x·2^L + c`.
pub fn fiber_matrix(
    l: usize,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    k: f64,
) -> Result<Vec<C64>> {
    if l < 2 || l > MAX_RING_FIBER {
        return Err(Error::TooLarge(format!(
            "fiber oracle ring length {l} outside 2..={MAX_RING_FIBER}"
        )));
    }
    let hops = ring_hops(h, l)?;
    let ns = 1usize << l;
    let n = l * ns;
    let idx = |x: i64, c: usize| (x.rem_euclid(l as i64) as usize) * ns + c;
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    let i = C64::new(0.0, 1.0);
    for x in 0..l as i64 {
        for c in 0..ns {
            let row = idx(x, c);
            // iK̂_k: row (x,c) reads columns (x−z, c) and (x−z, σ_z c)
            for &(z, amp) in &hops {
                m[row * n + idx(x - z, c)] += i * amp;
                m[row * n + idx(x - z, shift_config(c, z, l))] +=
                    -i * amp * C64::from_polar(1.0, -k * z as f64);
            }
            // iλV̂ and B diagonal
            m[row * n + row] += i * lambda * (spin(c, x as usize, l) - spin(c, 0, l))
                + rate * l as f64;
            // B off-diagonal: −r per single-spin flip
            for y in 0..l {
                m[row * n + idx(x, c ^ (1 << y))] -= rate;
            }
        }
    }
    Ok(m)
}

/// `w = e^{−tM} v` by uniform substepping and a Taylor series per substep.
fn expm_action_dense(n: usize, m: &[C64], v: &[C64], t: f64) -> Result<Vec<C64>> {
    let row_sum = (0..n)
        .map(|r| m[r * n..(r + 1) * n].iter().map(|e| e.norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let steps = ((t * row_sum / 2.0).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let mut w = v.to_vec();
    let mut term = vec![C64::new(0.0, 0.0); n];
    let mut next = vec![C64::new(0.0, 0.0); n];
    for _ in 0..steps {
        term.copy_from_slice(&w);
        let mut acc = w.clone();
        let mut converged = false;
        for p in 1..=120usize {
            for (r, slot) in next.iter_mut().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for (col, &tv) in term.iter().enumerate() {
                    s += m[r * n + col] * tv;
                }
                *slot = s * (-dt / p as f64);
            }
            std::mem::swap(&mut term, &mut next);
            let mut tn = 0.0f64;
            let mut an = 0.0f64;
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += b;
                tn += b.norm_sqr();
                an += a.norm_sqr();
            }
            if tn.sqrt() <= 1e-16 * an.sqrt().max(1e-300) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical("dense exponential Taylor stagnated"));
        }
        w = acc;
    }
    Ok(w)
}

/// Fourier transform of the initial density matrix that the fiber semigroup
/// propagates, `ρ̂_{0;k}(x) = Σ_y e^{ik·y} ρ0(x+y, y)`, with ring wrapping.
/// The sign pairs with the characteristic-function convention
/// `CF(k) = Σ_x e^{ik·x} Eρ_t(x,x)`: differentiating
/// `Σ_y e^{ik·y} E[ψ_t(x+y) ψ̄_t(y) 1(τ_y ω_t = ω)]` in `t` reproduces
/// exactly the `e^{−ikζ} f(x−ζ, σ_ζ ω)` kinetic term of `L̂_k`.
fn rho_hat(rho0: &[Vec<C64>], l: usize, k: f64) -> Vec<C64> {
    let li = l as i64;
    (0..li)
        .map(|x| {
            (0..li)
                .map(|y| {
                    let a = (x + y).rem_euclid(li) as usize;
                    let b = y.rem_euclid(li) as usize;
                    C64::from_polar(1.0, k * y as f64) * rho0[a][b]
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilletOracle {
    /// dual-grid wavevectors `2πm/L`
    pub ks: Vec<f64>,
    /// characteristic function `⟨δ₀⊗1, e^{−tL̂_k} ρ̂_{0;k}⊗1⟩` per `k`
    pub cf: Vec<C64>,
    /// reconstructed mean density `Eρ_t(x,x)` per ring site
    pub density: Vec<f64>,
}

/// Disorder-averaged density at time `t` from the dense fiber semigroup,
/// for initial density matrix `rho0` (site-indexed, `L×L`).
pub fn pillet_oracle(
    l: usize,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    t: f64,
    rho0: &[Vec<C64>],
) -> Result<PilletOracle> {
    if rho0.len() != l || rho0.iter().any(|r| r.len() != l) {
        return Err(Error::invalid("rho0 shape does not match the ring"));
    }
    let ns = 1usize << l;
    let n = l * ns;
    let ks: Vec<f64> = (0..l)
        .map(|m| 2.0 * std::f64::consts::PI * m as f64 / l as f64)
        .collect();
    let mut cf = Vec::with_capacity(l);
    for &k in &ks {
        let m = fiber_matrix(l, lambda, rate, h, k)?;
        let rh = rho_hat(rho0, l, k);
        let mut v0 = vec![C64::new(0.0, 0.0); n];
        for x in 0..l {
            for c in 0..ns {
                v0[x * ns + c] = rh[x];
            }
        }
        let w = expm_action_dense(n, &m, &v0, t)?;
        // ⟨δ₀⊗1, w⟩ with the uniform spin weight 1/2^L
        let s: C64 = (0..ns).map(|c| w[c]).sum();
        cf.push(s / ns as f64);
    }
    let density = (0..l)
        .map(|x| {
            let s: C64 = ks
                .iter()
                .zip(&cf)
                .map(|(&k, &c)| c * C64::from_polar(1.0, -k * x as f64))
                .sum();
            (s / l as f64).re
        })
        .collect();
    Ok(PilletOracle { ks, cf, density })
}

/// Characteristic functions `Σ_x e^{ikx} Eρ_t(x,x)` per dual `k` from the
/// master equation `dR_c/dt = −i[H_c, R_c] + r Σ_y (R_{c^y} − R_c)` on the
/// conditioned density matrices `R_c(x,y) = E[ρ_t(x,y) 1_{ω_t=c}]`.
pub fn master_equation_cf(
    l: usize,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    t: f64,
    rho0: &[Vec<C64>],
) -> Result<Vec<C64>> {
    if l < 2 || l > MAX_RING_MASTER {
        return Err(Error::TooLarge(format!(
            "master-equation oracle ring length {l} outside 2..={MAX_RING_MASTER}"
        )));
    }
    if rho0.len() != l || rho0.iter().any(|r| r.len() != l) {
        return Err(Error::invalid("rho0 shape does not match the ring"));
    }
    let hops = ring_hops(h, l)?;
    let ns = 1usize << l;
    let n = l * l * ns;
    let li = l as i64;
    let idx = |x: i64, y: i64, c: usize| {
        ((x.rem_euclid(li) as usize) * l + y.rem_euclid(li) as usize) * ns + c
    };
    // m = −G so that e^{−tM} = e^{tG}
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    let i = C64::new(0.0, 1.0);
    for x in 0..li {
        for y in 0..li {
            for c in 0..ns {
                let row = idx(x, y, c);
                // −i(H_c R): hopping into x, plus the diagonal potential
                for &(z, amp) in &hops {
                    m[row * n + idx(x - z, y, c)] += i * amp;
                }
                // +i(R H_c): hopping out of y (H(y', y) = h(y'−y))
                for &(z, amp) in &hops {
                    m[row * n + idx(x, y + z, c)] -= i * amp;
                }
                m[row * n + row] += i
                    * lambda
                    * (spin(c, x as usize, l) - spin(c, y as usize, l))
                    + rate * l as f64;
                for u in 0..l {
                    m[row * n + idx(x, y, c ^ (1 << u))] -= rate;
                }
            }
        }
    }
    let mut v0 = vec![C64::new(0.0, 0.0); n];
    for x in 0..l {
        for y in 0..l {
            for c in 0..ns {
                v0[(x * l + y) * ns + c] = rho0[x][y] / ns as f64;
            }
        }
    }
    let w = expm_action_dense(n, &m, &v0, t)?;
    let cf = (0..l)
        .map(|mm| {
            let k = 2.0 * std::f64::consts::PI * mm as f64 / l as f64;
            (0..l)
                .map(|x| {
                    let diag: C64 = (0..ns).map(|c| w[(x * l + x) * ns + c]).sum();
                    diag * C64::from_polar(1.0, k * x as f64)
                })
                .sum()
        })
        .collect();
    Ok(cf)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberReport {
    pub ks: Vec<f64>,
    pub cf_fiber: Vec<C64>,
    pub cf_master: Vec<C64>,
    pub max_diff: f64,
}

/// Cross-validate the fiber semigroup against the master equation: the two
/// dense computations of `Σ_x e^{−ikx} Eρ_t(x,x)` must agree on every dual
/// `k`.
pub fn fiber_consistency(
    l: usize,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    t: f64,
    rho0: &[Vec<C64>],
) -> Result<FiberReport> {
    let po = pillet_oracle(l, lambda, rate, h, t, rho0)?;
    let cf_master = master_equation_cf(l, lambda, rate, h, t, rho0)?;
    let max_diff = po
        .cf
        .iter()
        .zip(&cf_master)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    Ok(FiberReport { ks: po.ks, cf_fiber: po.cf, cf_master, max_diff })
}

/// Maximum entrywise difference between the Walsh-transformed dense fiber
/// operator and the character-basis operator built from the sparse rules on
/// the same ring (full spin sets, no truncation). Pins the `A+ζ` translation
/// orientation and all coefficient conventions.
pub fn walsh_equivalence_error(
    l: usize,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    k: f64,
) -> Result<f64> {
    if l > 5 {
        return Err(Error::TooLarge("walsh check limited to rings of ≤ 5 sites".into()));
    }
    let hops = ring_hops(h, l)?;
    let ns = 1usize << l;
    let n = l * ns;
    let li = l as i64;
    let m = fiber_matrix(l, lambda, rate, h, k)?;
    // unitary U: column (x, A) is δ_x ⊗ e_A / √(2^L), with the character
    // e_A(c) = Π_{y∈A} spin(c, y) = (−1)^{|A \ c|}
    let e_val = |a: usize, c: usize| -> f64 {
        if (a & !c).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let scale = 1.0 / (ns as f64).sqrt();
    let mut u = vec![0.0f64; n * n];
    for x in 0..l {
        for a in 0..ns {
            let col = x * ns + a;
            for c in 0..ns {
                u[(x * ns + c) * n + col] = e_val(a, c) * scale;
            }
        }
    }
    // q = Uᵀ m U (U real orthogonal)
    let mut p = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for col in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                s += m[r * n + j] * u[j * n + col];
            }
            p[r * n + col] = s;
        }
    }
    let mut q = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for col in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                s += u[j * n + r] * p[j * n + col];
            }
            q[r * n + col] = s;
        }
    }
    // expected character-basis matrix on the ring
    let mut e = vec![C64::new(0.0, 0.0); n * n];
    let i = C64::new(0.0, 1.0);
    let idx = |x: i64, a: usize| (x.rem_euclid(li) as usize) * ns + a;
    for x in 0..li {
        for a in 0..ns {
            let col = idx(x, a);
            e[col * n + col] += 2.0 * rate * (a.count_ones() as f64);
            // iλV̂: (x,A) → (x, AΔ{x}) − (x, AΔ{0})
            e[idx(x, a ^ (1 << (x as usize))) * n + col] += i * lambda;
            e[idx(x, a ^ 1) * n + col] -= i * lambda;
            // iK̂_k: (x,A) → Σ_ζ h(ζ)[(x+ζ, A) − e^{−ikζ}(x+ζ, A+ζ)]
            for &(z, amp) in &hops {
                e[idx(x + z, a) * n + col] += i * amp;
                e[idx(x + z, shift_config(a, -z, l)) * n + col] -=
                    i * amp * C64::from_polar(1.0, -k * z as f64);
            }
        }
    }
    Ok(q.iter().zip(&e).map(|(a, b)| (a - b).norm()).fold(0.0f64, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{evolve_checkpoints, PropagatorTolerance};
    use crate::flip::{sample_path, FlipProcessConfig};
    use crate::lattice::{LatticeWindow, WaveFunction};
    use crate::rngstream::trajectory_rng;

    fn nn() -> HoppingKernel {
        HoppingKernel::nearest_neighbor(1)
    }

    fn delta_rho(l: usize) -> Vec<Vec<C64>> {
        let mut r = vec![vec![C64::new(0.0, 0.0); l]; l];
        r[0][0] = C64::new(1.0, 0.0);
        r
    }

    #[test]
    fn pillet_density_at_t0_is_initial() {
        let po = pillet_oracle(4, 0.7, 1.0, &nn(), 0.0, &delta_rho(4)).unwrap();
        assert!((po.density[0] - 1.0).abs() < 1e-12);
        for x in 1..4 {
            assert!(po.density[x].abs() < 1e-12);
        }
    }

    #[test]
    fn pillet_density_is_normalized() {
        let po = pillet_oracle(5, 0.5, 1.0, &nn(), 2.0, &delta_rho(5)).unwrap();
        let sum: f64 = po.density.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
        assert!(po.density.iter().all(|&d| d > -1e-12));
    }

    #[test]
    fn pillet_matches_free_evolution_at_lambda_zero() {
        let l = 6usize;
        let t = 1.7f64;
        let po = pillet_oracle(l, 0.0, 1.0, &nn(), t, &delta_rho(l)).unwrap();
        // free ring evolution of δ₀ in the Fourier basis, ĥ(k) = 2cos k
        for x in 0..l {
            let mut amp = C64::new(0.0, 0.0);
            for m in 0..l {
                let k = 2.0 * std::f64::consts::PI * m as f64 / l as f64;
                amp += C64::from_polar(1.0, k * x as f64 - t * 2.0 * k.cos());
            }
            amp /= l as f64;
            assert!(
                (po.density[x] - amp.norm_sqr()).abs() < 1e-9,
                "site {x}: {} vs {}",
                po.density[x],
                amp.norm_sqr()
            );
        }
    }

    #[test]
    fn fiber_consistency_reference_instance() {
        let fr = fiber_consistency(4, 0.7, 1.0, &nn(), 1.5, &delta_rho(4)).unwrap();
        assert!(fr.max_diff < 1e-9, "max diff {}", fr.max_diff);
        // k=0 component is the trace on both sides
        assert!((fr.cf_fiber[0].re - 1.0).abs() < 1e-9);
        assert!((fr.cf_master[0].re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fiber_consistency_spread_initial_state() {
        // a correlated two-site pure state exercises the ρ̂ wrap convention
        let l = 4usize;
        let a = C64::new(0.6, 0.0);
        let b = C64::new(0.0, 0.8);
        let psi = [a, b];
        let mut rho = vec![vec![C64::new(0.0, 0.0); l]; l];
        for (i, &pi) in psi.iter().enumerate() {
            for (j, &pj) in psi.iter().enumerate() {
                rho[i][j] = pi * pj.conj();
            }
        }
        let fr = fiber_consistency(l, 0.4, 1.3, &nn(), 1.0, &rho).unwrap();
        assert!(fr.max_diff < 1e-9, "max diff {}", fr.max_diff);
        let fr0 = fiber_consistency(l, 0.4, 1.3, &nn(), 0.0, &rho).unwrap();
        assert!(fr0.max_diff < 1e-12, "t=0 max diff {}", fr0.max_diff);
    }

    #[test]
    fn walsh_equivalence_pins_conventions() {
        let err = walsh_equivalence_error(4, 0.8, 1.0, &nn(), 0.3).unwrap();
        assert!(err < 1e-12, "walsh equivalence error {err}");
        let err0 = walsh_equivalence_error(4, 1.0, 0.7, &nn(), 0.0).unwrap();
        assert!(err0 < 1e-12, "walsh equivalence error {err0}");
    }

    #[test]
    fn pillet_matches_monte_carlo() {
        // small-sample sanity version of the acceptance comparison
        let l = 4usize;
        let lambda = 0.5;
        let t = 1.0;
        let po = pillet_oracle(l, lambda, 1.0, &nn(), t, &delta_rho(l)).unwrap();
        let window = LatticeWindow::new(1, l).unwrap();
        let fp = FlipProcessConfig { rate: 1.0, window: window.clone() };
        let h = nn();
        let n_traj = 4000u64;
        let mut acc = vec![0.0f64; l];
        for i in 0..n_traj {
            let mut rng = trajectory_rng(99, i);
            let path = sample_path(&fp, t, &mut rng).unwrap();
            let psi0 = WaveFunction::delta_origin(window.clone());
            let out = evolve_checkpoints(
                &psi0,
                &path,
                &[t],
                &h,
                lambda,
                PropagatorTolerance::default(),
            )
            .unwrap();
            for (x, slot) in acc.iter_mut().enumerate() {
                *slot += out[0].amps[x].norm_sqr();
            }
        }
        for x in 0..l {
            let mc = acc[x] / n_traj as f64;
            assert!(
                (mc - po.density[x]).abs() < 0.025,
                "site {x}: mc {mc} vs dense {}",
                po.density[x]
            );
        }
    }

    #[test]
    fn oversized_ring_rejected() {
        assert!(pillet_oracle(9, 0.5, 1.0, &nn(), 1.0, &delta_rho(9)).is_err());
        assert!(master_equation_cf(7, 0.5, 1.0, &nn(), 1.0, &delta_rho(7)).is_err());
    }
}
