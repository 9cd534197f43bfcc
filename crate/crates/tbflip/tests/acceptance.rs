//! Acceptance gate: twelve checks covering conservation laws, the dense
//! oracles, the spectral solver, and Monte Carlo vs spectral agreement.
//!
//! Run `cargo test --test acceptance -- --nocapture` to see one PASS/FAIL
//! line per criterion; the test fails if any criterion fails.

use std::time::Instant;

use tbflip::ensemble::{fit_diffusion_m2, run_ensemble, EnsembleSpec};
use tbflip::evolve::{dyson_partial_sum, evolve_trajectory, PropagatorTolerance};
use tbflip::flip::{sample_path, FlipProcessConfig};
use tbflip::lattice::{HoppingKernel, LatticeWindow, WaveFunction};
use tbflip::rngstream::trajectory_rng;
use tbflip::spectral::dense::{fiber_consistency, pillet_oracle};
use tbflip::spectral::solve::{
    diffusion_matrix, dispersion_eigenvalue, dispersion_gradient, dispersion_hessian_half,
    gap_delta_lambda, spectral_gap_check, weak_coupling_d0,
};
use tbflip::spectral::{CharacterBasis, Truncation};
use tbflip::stats::fit_line;
use tbflip::C64;

fn nn(d: usize) -> HoppingKernel {
    HoppingKernel::nearest_neighbor(d)
}

fn basis1(pos_radius: i64) -> CharacterBasis {
    CharacterBasis::build(1, Truncation { pos_radius, set_size: 2, set_radius: 2 }).unwrap()
}

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:02} {name}: {verdict} ({detail})");
        if !pass {
            self.failures.push(format!("{id:02} {name}: {detail}"));
        }
    }
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    let h = nn(1);

    // ---- shared ensemble: λ=1, r=1, window 512, checkpoints up to t=50 ----
    let window = LatticeWindow::new(1, 512).unwrap();
    let checkpoints = vec![3.125, 6.25, 12.5, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];
    let big_t0 = Instant::now();
    let big = run_ensemble(&EnsembleSpec {
        n_traj: 10_000,
        master_seed: 0x5eed_0001,
        checkpoints: checkpoints.clone(),
        window: window.clone(),
        h: h.clone(),
        lambda: 1.0,
        rate: 1.0,
        cf_ks: vec![],
    })
    .unwrap();
    let big_elapsed = big_t0.elapsed().as_secs_f64();

    // 1. unitarity and mean-field mass conservation
    {
        let mut worst_sum = 0.0f64;
        for cp in 0..checkpoints.len() {
            let s: f64 = big.mean[cp].iter().sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
        let pass = big.max_norm_drift <= 1e-9 && worst_sum <= 1e-8;
        gate.check(
            1,
            "unitarity-and-mass",
            pass,
            format!(
                "max |‖ψ‖²−1| = {:.2e} ≤ 1e-9, max |Σ mean − 1| = {:.2e} ≤ 1e-8",
                big.max_norm_drift, worst_sum
            ),
        );
    }

    // 2. dense-semigroup oracle vs Monte Carlo on the 5-site ring
    {
        let t0 = Instant::now();
        let l = 5usize;
        let mut rho0 = vec![vec![C64::new(0.0, 0.0); l]; l];
        rho0[0][0] = C64::new(1.0, 0.0);
        let dense = pillet_oracle(l, 0.5, 1.0, &h, 2.0, &rho0).unwrap();
        let mc = run_ensemble(&EnsembleSpec {
            n_traj: 20_000,
            master_seed: 0x5eed_0002,
            checkpoints: vec![2.0],
            window: LatticeWindow::new(1, l).unwrap(),
            h: h.clone(),
            lambda: 0.5,
            rate: 1.0,
            cf_ks: vec![],
        })
        .unwrap();
        let mut max_z = 0.0f64;
        let mut max_se = 0.0f64;
        for x in 0..l {
            let se = mc.se[0][x];
            max_se = max_se.max(se);
            max_z = max_z.max((mc.mean[0][x] - dense.density[x]).abs() / se.max(1e-300));
        }
        let elapsed = t0.elapsed().as_secs_f64();
        let pass = max_z <= 3.0 && max_se <= 0.01 && elapsed <= 300.0;
        gate.check(
            2,
            "dense-oracle-vs-monte-carlo",
            pass,
            format!("max |Δ|/SE = {max_z:.2} ≤ 3, max SE = {max_se:.4} ≤ 0.01, {elapsed:.0}s ≤ 300s"),
        );
    }

    // 3. two-sided vs fibered dense computation
    {
        let l = 4usize;
        let mut rho0 = vec![vec![C64::new(0.0, 0.0); l]; l];
        rho0[0][0] = C64::new(1.0, 0.0);
        let rep = fiber_consistency(l, 0.7, 1.0, &h, 1.5, &rho0).unwrap();
        gate.check(
            3,
            "fiber-identity",
            rep.max_diff <= 1e-9,
            format!("max CF difference = {:.2e} ≤ 1e-9", rep.max_diff),
        );
    }

    let b12 = basis1(12);

    // 4. dispersion eigenvalue at k = 0: value, gradient, isolation
    {
        let e0 = dispersion_eigenvalue(&b12, &[0.0], 1.0, 1.0, &h).unwrap().value.norm();
        let grad = dispersion_gradient(&b12, 1.0, 1.0, &h, 1e-3).unwrap();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let sweep = spectral_gap_check(&b12, 1.0, 1.0, &h, 40).unwrap();
        let min_re = sweep.observed_gap;
        let (delta, _) = gap_delta_lambda(1.0, 1.0, &h);
        let pass = e0 <= 1e-10
            && gnorm <= 1e-6
            && !sweep.eigenvalues.is_empty()
            && min_re >= 0.9 * delta;
        gate.check(
            4,
            "dispersion-at-zero",
            pass,
            format!(
                "|E(0)| = {e0:.2e} ≤ 1e-10, |∇E(0)| = {gnorm:.2e} ≤ 1e-6, \
                 second eigenvalue Re = {min_re:.4} ≥ 0.9·δ = {:.4}",
                0.9 * delta
            ),
        );
    }

    // 5. Hessian-of-E(k) vs direct solve for D
    let d1 = {
        let t0 = Instant::now();
        let direct = diffusion_matrix(&b12, 1.0, 1.0, &h).unwrap();
        let hess = dispersion_hessian_half(&b12, 1.0, 1.0, &h, 1e-3).unwrap();
        let rel = (hess[0][0] - direct.d_matrix[0][0]).abs() / direct.d_matrix[0][0];
        let elapsed = t0.elapsed().as_secs_f64();
        let pass = rel <= 1e-4 && elapsed <= 120.0;
        gate.check(
            5,
            "hessian-vs-direct-d",
            pass,
            format!(
                "D = {:.7}, relative difference = {rel:.2e} ≤ 1e-4, {elapsed:.0}s ≤ 120s",
                direct.d_matrix[0][0]
            ),
        );
        direct
    };

    // 6. positivity; d=2 isotropy of D
    {
        let b2 = CharacterBasis::build(
            2,
            Truncation { pos_radius: 3, set_size: 2, set_radius: 2 },
        )
        .unwrap();
        let d2 = diffusion_matrix(&b2, 1.0, 1.0, &nn(2)).unwrap();
        let off = d2.d_matrix[0][1].abs();
        let aniso = (d2.d_matrix[0][0] - d2.d_matrix[1][1]).abs();
        let pass = d1.min_eigenvalue > 0.0
            && d2.min_eigenvalue > 0.0
            && off <= 1e-8
            && aniso <= 1e-8;
        gate.check(
            6,
            "positivity-and-isotropy",
            pass,
            format!(
                "min eig: d1 = {:.4} > 0, d2 = {:.4} > 0; |D_12| = {off:.2e} ≤ 1e-8, \
                 |D_11 − D_22| = {aniso:.2e} ≤ 1e-8 (d=2 dim {})",
                d1.min_eigenvalue,
                d2.min_eigenvalue,
                b2.len()
            ),
        );
    }

    // 7. weak-coupling shrinkage of λ²D(λ) toward D⁰
    {
        let d0 = weak_coupling_d0(&b12, 1.0, &h).unwrap().d0_matrix[0][0];
        let delta_of = |lambda: f64| -> f64 {
            let d = diffusion_matrix(&b12, lambda, 1.0, &h).unwrap().d_matrix[0][0];
            (lambda * lambda * d - d0).abs() / d0
        };
        let (g1, g2, g4) = (delta_of(0.1), delta_of(0.2), delta_of(0.4));
        let pass = g1 <= 0.6 * g2 && g2 <= 0.6 * g4;
        gate.check(
            7,
            "weak-coupling-asymptotics",
            pass,
            format!("Δ(0.1) = {g1:.4} ≤ 0.6·Δ(0.2) = {:.4}, Δ(0.2) = {g2:.4} ≤ 0.6·Δ(0.4) = {:.4}", 0.6 * g2, 0.6 * g4),
        );
    }

    // 8. Monte Carlo vs spectral diffusion constant
    let mc_fit = fit_diffusion_m2(&big).unwrap();
    {
        let d_spec = d1.d_matrix[0][0];
        let d_mc = mc_fit.d_matrix[0][0];
        let se = mc_fit.d_se[0][0];
        let rel = (d_mc - d_spec).abs() / d_spec;
        let z = (d_mc - d_spec).abs() / se.max(1e-300);
        let pass = rel <= 0.10 && z <= 3.0 && big_elapsed <= 900.0;
        gate.check(
            8,
            "mc-vs-spectral-d",
            pass,
            format!(
                "D_MC = {d_mc:.4} ± {se:.4}, D_spec = {d_spec:.4}, rel = {rel:.3} ≤ 0.10, \
                 z = {z:.2} ≤ 3, ensemble {big_elapsed:.0}s ≤ 900s"
            ),
        );
    }

    // 9. Gaussian limit shape of the characteristic function at τ = 400
    {
        let tau = 400.0;
        let side = 1024usize;
        let w9 = LatticeWindow::new(1, side).unwrap();
        let ks: Vec<Vec<f64>> = (1..=6)
            .map(|m| vec![2.0 * std::f64::consts::PI * m as f64 / side as f64])
            .collect();
        let field = run_ensemble(&EnsembleSpec {
            n_traj: 80,
            master_seed: 0x5eed_0009,
            checkpoints: vec![100.0, 200.0, 300.0, 400.0],
            window: w9,
            h: h.clone(),
            lambda: 1.0,
            rate: 1.0,
            cf_ks: ks.clone(),
        })
        .unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in &ks {
            let (cf, _) = field.characteristic_function(3, k).unwrap();
            assert!(cf.re > 0.0, "Re CF must stay positive at tracked k");
            xs.push(k[0] * k[0] * tau); // |κ|² with κ = k·√τ
            ys.push(-cf.re.ln());
        }
        let fit = fit_line(&xs, &ys);
        // regression standard error of the intercept
        let n = xs.len() as f64;
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - fit.intercept - fit.slope * x;
                r * r
            })
            .sum();
        let xbar = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        let s2 = ss_res / (n - 2.0);
        let se_int = (s2 * (1.0 / n + xbar * xbar / sxx)).sqrt();
        let pass = fit.r_squared >= 0.99 && fit.intercept.abs() <= 3.0 * se_int;
        gate.check(
            9,
            "gaussian-cf-shape",
            pass,
            format!(
                "R² = {:.5} ≥ 0.99, intercept = {:.4} within 3σ = {:.4}, slope (≈D) = {:.3}",
                fit.r_squared,
                fit.intercept,
                3.0 * se_int,
                fit.slope
            ),
        );
    }

    // 10. diffusive M2 exponent, with ballistic λ=0 control
    {
        let slope_over = |field: &tbflip::ensemble::MeanField| -> f64 {
            let mut ts = Vec::new();
            let mut ms = Vec::new();
            for (cp, &t) in field.checkpoints.iter().enumerate() {
                if t >= 20.0 - 1e-9 {
                    ts.push(t.ln());
                    ms.push(field.second_moment(cp).unwrap().0.ln());
                }
            }
            fit_line(&ts, &ms).slope
        };
        let diffusive = slope_over(&big);
        let control = run_ensemble(&EnsembleSpec {
            n_traj: 2,
            master_seed: 0x5eed_0010,
            checkpoints: checkpoints.clone(),
            window: window.clone(),
            h: h.clone(),
            lambda: 0.0,
            rate: 1.0,
            cf_ks: vec![],
        })
        .unwrap();
        let ballistic = slope_over(&control);
        let pass = (0.9..=1.1).contains(&diffusive) && (1.9..=2.1).contains(&ballistic);
        gate.check(
            10,
            "m2-exponent",
            pass,
            format!(
                "log-log slope over t ∈ [20,50]: λ=1 gives {diffusive:.3} ∈ [0.9,1.1], \
                 λ=0 gives {ballistic:.3} ∈ [1.9,2.1]"
            ),
        );
    }

    // 11. spectral gap bound, truncation stability, numerical-range wedge
    {
        let b6 = basis1(6);
        let mut pass = true;
        let mut parts = Vec::new();
        for &lambda in &[0.2f64, 0.4, 0.8] {
            let small = spectral_gap_check(&b6, lambda, 1.0, &h, 40).unwrap();
            let bigg = spectral_gap_check(&b12, lambda, 1.0, &h, 40).unwrap();
            let drift = (bigg.observed_gap - small.observed_gap).abs() / small.observed_gap;
            let ok = small.observed_gap >= small.delta_lambda
                && bigg.observed_gap >= bigg.delta_lambda
                && drift <= 0.05
                && small.wedge_ok
                && bigg.wedge_ok
                && small.zero_simple
                && bigg.zero_simple;
            pass &= ok;
            parts.push(format!(
                "λ={lambda}: gap {:.4} ≥ δ {:.4}, drift {:.2e}",
                bigg.observed_gap, bigg.delta_lambda, drift
            ));
        }
        gate.check(11, "spectral-gap-and-wedge", pass, parts.join("; "));
    }

    // 12. Dyson order-3 error shrinks ~16× when t halves
    {
        let w = LatticeWindow::new(1, 16).unwrap();
        let fp = FlipProcessConfig { rate: 1.0, window: w.clone() };
        let mut rng = trajectory_rng(0x5eed_0012, 0);
        let path = sample_path(&fp, 0.05, &mut rng).unwrap();
        let psi0 = WaveFunction::delta_origin(w);
        let tol = PropagatorTolerance::default();
        let err_at = |t: f64| -> f64 {
            let exact = evolve_trajectory(&psi0, &path, t, &h, 1.0, tol).unwrap();
            let approx = dyson_partial_sum(&psi0, &path, t, 3, &h, 1.0).unwrap();
            exact
                .amps
                .iter()
                .zip(&approx.amps)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err_at(0.05) / err_at(0.025);
        let pass = (12.0..=20.0).contains(&ratio);
        gate.check(
            12,
            "dyson-order-halving",
            pass,
            format!("error(t)/error(t/2) = {ratio:.2} ∈ [12,20] at t = 0.05"),
        );
    }

    assert!(
        gate.failures.is_empty(),
        "failed acceptance criteria:\n{}",
        gate.failures.join("\n")
    );
}
