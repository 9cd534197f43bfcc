//! Sparse matrices of B, V̂, K̂_k and the fibered generator
//! L̂_k = iK̂_k + iλV̂ + B in the truncated character basis.
//!
//! Images that leave the truncation are clipped with a recorded count;
//! entries are stored column-oriented (target row, source column), matching
//! the action on basis vectors.

use crate::lattice::HoppingKernel;
use crate::sparse::{Csr, Triplets};
use crate::spectral::basis::{symdiff, translate, CharacterBasis};
use crate::C64;

#[derive(Debug, Clone)]
pub struct BuiltOperator {
    pub matrix: Csr,
    pub clipped: usize,
}

/// The flip generator: diagonal with entry 2r|A| at (x, A).
pub fn build_b(basis: &CharacterBasis, r: f64) -> BuiltOperator {
    let mut t = Triplets::new(basis.len());
    for (j, e) in basis.elements.iter().enumerate() {
        t.push(j, j, C64::new(2.0 * r * e.a.len() as f64, 0.0));
    }
    BuiltOperator { matrix: t.to_csr(), clipped: 0 }
}

/// Multiplication by v_x − v_0: (x, A) ↦ (x, AΔ{x}) − (x, AΔ{0}); zero at
/// x = 0. Entries are ±1 and the matrix is self-adjoint.
pub fn build_v(basis: &CharacterBasis) -> BuiltOperator {
    let mut t = Triplets::new(basis.len());
    let mut clipped = 0usize;
    let origin = vec![0i64; basis.dim_space];
    for (j, e) in basis.elements.iter().enumerate() {
        if e.x == origin {
            continue;
        }
        for (target, sign) in [
            (symdiff(&e.a, &e.x), 1.0),
            (symdiff(&e.a, &origin), -1.0),
        ] {
            match basis.index_of(&e.x, &target) {
                Some(i) => t.push(i, j, C64::new(sign, 0.0)),
                None => clipped += 1,
            }
        }
    }
    BuiltOperator { matrix: t.to_csr(), clipped }
}

/// The fibered hopping: (x, A) ↦ Σ_ζ h(ζ)[(x+ζ, A) − e^{−ik·ζ}(x+ζ, A+ζ)].
pub fn build_k(basis: &CharacterBasis, k: &[f64], h: &HoppingKernel) -> BuiltOperator {
    let mut t = Triplets::new(basis.len());
    let mut clipped = 0usize;
    for (j, e) in basis.elements.iter().enumerate() {
        for (zeta, hz) in h.entries() {
            let xz: Vec<i64> = e.x.iter().zip(zeta).map(|(a, b)| a + b).collect();
            let phase: f64 = zeta.iter().zip(k).map(|(&z, &ki)| z as f64 * ki).sum();
            for (target_a, coef) in [
                (e.a.clone(), *hz),
                (translate(&e.a, zeta), -hz * C64::from_polar(1.0, -phase)),
            ] {
                match basis.index_of(&xz, &target_a) {
                    Some(i) => t.push(i, j, coef),
                    None => clipped += 1,
                }
            }
        }
    }
    BuiltOperator { matrix: t.to_csr(), clipped }
}

/// L̂_k = iK̂_k + iλV̂ + B.
pub fn build_l(
    basis: &CharacterBasis,
    k: &[f64],
    lambda: f64,
    r: f64,
    h: &HoppingKernel,
) -> BuiltOperator {
    let kk = build_k(basis, k, h);
    let vv = build_v(basis);
    let bb = build_b(basis, r);
    let mut t = Triplets::new(basis.len());
    let i = C64::new(0.0, 1.0);
    for (m, scale) in [
        (&kk.matrix, i),
        (&vv.matrix, i * lambda),
        (&bb.matrix, C64::new(1.0, 0.0)),
    ] {
        for row in 0..m.n {
            for p in m.row_ptr[row]..m.row_ptr[row + 1] {
                t.push(row, m.cols[p], scale * m.vals[p]);
            }
        }
    }
    BuiltOperator { matrix: t.to_csr(), clipped: kk.clipped + vv.clipped }
}

/// Right-hand vectors of eq. for the diffusion matrix:
/// ∂jK̂_0 δ₀⊗1 = i Σ_ζ ζ_j h(ζ) (ζ, ∅), one vector per axis j.
pub fn dk_rhs(basis: &CharacterBasis, h: &HoppingKernel) -> Vec<Vec<C64>> {
    let d = basis.dim_space;
    let mut out = vec![vec![C64::new(0.0, 0.0); basis.len()]; d];
    for (zeta, hz) in h.entries() {
        if let Some(i) = basis.index_of(zeta, &[]) {
            for j in 0..d {
                out[j][i] += C64::new(0.0, 1.0) * zeta[j] as f64 * hz;
            }
        }
    }
    out
}
