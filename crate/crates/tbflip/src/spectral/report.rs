//! Aggregated spectral results: dispersion table, diffusion matrices, gap
//! diagnostics — plus CSV/COO emission helpers for external inspection.

use serde::{Deserialize, Serialize};

use crate::lattice::HoppingKernel;
use crate::sparse::Csr;
use crate::spectral::basis::{CharacterBasis, Truncation};
use crate::spectral::build::build_l;
use crate::spectral::solve::{
    diffusion_matrix, dispersion_eigenvalue, dispersion_gradient, dispersion_hessian_half,
    gap_delta_lambda, spectral_gap_check, weak_coupling_d0, GapCheck,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EkPoint {
    pub k: Vec<f64>,
    pub e_re: f64,
    pub e_im: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// wavevectors at which E(k) is computed
    pub k_points: Vec<Vec<f64>>,
    /// central-difference step for the Hessian/gradient of E
    pub hessian_step: f64,
    /// run the (expensive) low-spectrum Arnoldi sweep
    pub with_gap: bool,
    /// Arnoldi subspace size for the gap sweep
    pub arnoldi_m: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            k_points: Vec::new(),
            hessian_step: 1e-3,
            with_gap: false,
            arnoldi_m: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub dim_space: usize,
    pub truncation: Truncation,
    pub basis_len: usize,
    pub lambda: f64,
    pub rate: f64,
    pub clipped: usize,
    pub e_table: Vec<EkPoint>,
    /// |∇E(0)| per axis (central differences)
    pub gradient_at_zero: Vec<f64>,
    /// D from deflated linear solves
    pub d_matrix: Vec<Vec<f64>>,
    pub d_min_eigenvalue: f64,
    /// ½·Hessian of E at 0 — independent cross-check of `d_matrix`
    pub d_hessian: Vec<Vec<f64>>,
    /// max relative disagreement between the two D computations
    pub d_cross_check: f64,
    /// weak-coupling matrix D⁰ (λ²·D(λ) → D⁰ as λ↓0)
    pub d0_matrix: Vec<Vec<f64>>,
    /// closed-form lower bound on the spectral gap
    pub delta_lambda: f64,
    pub gap: Option<GapCheck>,
    pub warnings: Vec<String>,
}

/// Compute the full spectral report for one model at one truncation.
pub fn spectral_report(
    basis: &CharacterBasis,
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    let d = basis.dim_space;
    let mut warnings = Vec::new();

    let mut e_table = Vec::with_capacity(opts.k_points.len());
    for k in &opts.k_points {
        if k.len() != d {
            return Err(Error::invalid("k point dimension mismatch"));
        }
        let e = dispersion_eigenvalue(basis, k, lambda, rate, h)?;
        e_table.push(EkPoint {
            k: k.clone(),
            e_re: e.value.re,
            e_im: e.value.im,
            residual: e.residual,
        });
    }
    let gradient_at_zero = dispersion_gradient(basis, lambda, rate, h, opts.hessian_step)?;

    let solve = diffusion_matrix(basis, lambda, rate, h)?;
    if solve.min_eigenvalue <= 0.0 {
        warnings.push(format!(
            "diffusion matrix not positive definite: min eigenvalue {:.3e}",
            solve.min_eigenvalue
        ));
    }
    let d_hessian = dispersion_hessian_half(basis, lambda, rate, h, opts.hessian_step)?;
    let mut d_cross_check = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let denom = solve.d_matrix[i][j].abs().max(1.0);
            d_cross_check =
                d_cross_check.max((solve.d_matrix[i][j] - d_hessian[i][j]).abs() / denom);
        }
    }
    if d_cross_check > 1e-3 {
        warnings.push(format!(
            "diffusion-matrix cross-check disagreement {d_cross_check:.3e}"
        ));
    }

    let d0 = weak_coupling_d0(basis, rate, h)?;
    let (delta, _) = gap_delta_lambda(lambda, rate, h);
    let gap = if opts.with_gap {
        let gc = spectral_gap_check(basis, lambda, rate, h, opts.arnoldi_m)?;
        if !gc.wedge_ok {
            warnings.push("numerical-range wedge violated by a detected eigenvalue".into());
        }
        if gc.observed_gap < delta {
            warnings.push(format!(
                "observed gap {:.6} below the closed-form bound {:.6}",
                gc.observed_gap, delta
            ));
        }
        Some(gc)
    } else {
        None
    };

    Ok(SpectralReport {
        dim_space: d,
        truncation: basis.trunc.clone(),
        basis_len: basis.len(),
        lambda,
        rate,
        clipped: solve.clipped,
        e_table,
        gradient_at_zero,
        d_matrix: solve.d_matrix,
        d_min_eigenvalue: solve.min_eigenvalue,
        d_hessian,
        d_cross_check,
        d0_matrix: d0.d0_matrix,
        delta_lambda: delta,
        gap,
        warnings,
    })
}

/// CSV of the E(k) table. Columns: `k_1..k_d, e_re, e_im, residual`.
pub fn e_table_csv(report: &SpectralReport) -> String {
    let mut out = String::new();
    let heads: Vec<String> = (1..=report.dim_space).map(|i| format!("k_{i}")).collect();
    out.push_str(&format!("{},e_re,e_im,residual\n", heads.join(",")));
    for p in &report.e_table {
        let ks: Vec<String> = p.k.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.3e}\n",
            ks.join(","),
            p.e_re,
            p.e_im,
            p.residual
        ));
    }
    out
}

/// CSV of the detected low spectrum. Columns: `re, im`.
pub fn gap_scan_csv(gap: &GapCheck) -> String {
    let mut out = String::from("re,im\n");
    for &(re, im) in &gap.eigenvalues {
        out.push_str(&format!("{re:.17e},{im:.17e}\n"));
    }
    out
}

/// Coordinate-list text export of a sparse operator: one `row col re im`
/// line per stored entry, after a `# rows cols nnz` header.
pub fn coo_export(m: &Csr) -> String {
    let mut out = format!("# {} {} {}\n", m.n, m.n, m.nnz());
    for row in 0..m.n {
        for (col, v) in m.row_entries(row) {
            out.push_str(&format!("{row} {col} {:.17e} {:.17e}\n", v.re, v.im));
        }
    }
    out
}

/// Convenience: the assembled L̂_k matrix for export.
pub fn operator_for_export(
    basis: &CharacterBasis,
    k: &[f64],
    lambda: f64,
    rate: f64,
    h: &HoppingKernel,
) -> Result<Csr> {
    if k.len() != basis.dim_space {
        return Err(Error::invalid("k dimension mismatch"));
    }
    Ok(build_l(basis, k, lambda, rate, h).matrix)
}
