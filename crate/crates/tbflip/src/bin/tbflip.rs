//! Command-line entry points: deterministic simulation, spectral solves,
//! cross-method comparison, dense oracles, and config validation.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure,
//! 3 acceptance-threshold failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tbflip::config::{Manifest, RunConfig, ARTIFACT_VERSION};
use tbflip::ensemble::{
    fit_diffusion_cf, fit_diffusion_m2, run_ensemble, DiffusionEstimate, MeanField,
};
use tbflip::spectral::dense::{fiber_consistency, pillet_oracle, FiberReport, PilletOracle};
use tbflip::spectral::report::{e_table_csv, gap_scan_csv, spectral_report};
use tbflip::{C64, Error};

#[derive(Parser)]
#[command(
    name = "tbflip",
    about = "Diffusion of tight-binding wave packets in a Markovian flip-process potential",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ensemble: mean field, CF/M2 tables, diffusion estimates
    Simulate(CommonArgs),
    /// Character-basis spectral solver: E(k), D, D⁰, gap diagnostics
    Spectral(CommonArgs),
    /// Cross-method comparison of the Monte Carlo and spectral D
    Compare(CommonArgs),
    /// Dense small-ring oracles: Pillet density, fiber consistency, MC check
    Oracle(CommonArgs),
    /// Validate a configuration without running anything
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// config file (`key = value` sections) or a previously written manifest
    #[arg(long)]
    config: Option<PathBuf>,
    /// `section.key=value` override, applied after the config file (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    /// shorthand for `output.dir=…`
    #[arg(long)]
    out_dir: Option<String>,
    /// shorthand for `ensemble.seed=…`
    #[arg(long)]
    seed: Option<u64>,
    /// shorthand for `ensemble.n_traj=…`
    #[arg(long)]
    n_traj: Option<usize>,
    /// shorthand for `model.lambda=…`
    #[arg(long)]
    lambda: Option<f64>,
}

fn resolve_config(args: &CommonArgs) -> tbflip::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for s in &args.sets {
        cfg.apply_override(s)?;
    }
    if let Some(dir) = &args.out_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(n) = args.n_traj {
        cfg.ensemble.n_traj = n;
    }
    if let Some(l) = args.lambda {
        cfg.model.lambda = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Emitter {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Emitter {
    fn new(dir: &str) -> tbflip::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Emitter { dir: PathBuf::from(dir), outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> tbflip::Result<()> {
        std::fs::write(self.dir.join(name), content)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// CSV with a versioned schema comment; every row is checked against the
    /// header's column count.
    fn write_csv(
        &mut self,
        name: &str,
        schema: &str,
        header: &str,
        rows: &[Vec<String>],
    ) -> tbflip::Result<()> {
        let ncols = header.split(',').count();
        let mut out = format!("# schema: tbflip/{schema} {ARTIFACT_VERSION}\n{header}\n");
        for row in rows {
            if row.len() != ncols {
                return Err(Error::invalid(format!(
                    "schema check failed for {name}: row has {} of {ncols} columns",
                    row.len()
                )));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.write(name, &out)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> tbflip::Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::invalid(format!("serialize {name}: {e}")))?;
        self.write(name, &text)
    }

    fn finish(mut self, command: &str, cfg: &RunConfig) -> tbflip::Result<()> {
        let manifest = Manifest {
            artifact_version: ARTIFACT_VERSION.into(),
            command: command.into(),
            config: cfg.clone(),
            outputs: self.outputs.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::invalid(format!("serialize manifest: {e}")))?;
        self.write("manifest.json", &text)?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Serialize)]
struct DiffusionPayload {
    m2: Option<DiffusionEstimate>,
    m2_error: Option<String>,
    cf: Option<DiffusionEstimate>,
    cf_error: Option<String>,
    max_norm_drift: f64,
}

fn emit_field(em: &mut Emitter, cfg: &RunConfig, field: &MeanField) -> tbflip::Result<()> {
    let tag = format!("seed{}_{}", cfg.ensemble.seed, cfg.param_hash());
    let d = field.window.dim;

    let mut rows = Vec::new();
    for (cp, &t) in field.checkpoints.iter().enumerate() {
        for s in 0..field.window.site_count() {
            let x = field.window.minimal_image(s);
            let mut row = vec![fmt(t)];
            row.extend(x.iter().map(|c| c.to_string()));
            row.push(fmt(field.mean[cp][s]));
            row.push(fmt(field.se[cp][s]));
            rows.push(row);
        }
    }
    let coords: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    em.write_csv(
        &format!("mean_field_{tag}.csv"),
        "mean_field",
        &format!("t,{},value,se", coords.join(",")),
        &rows,
    )?;

    let mut m2_rows = Vec::new();
    for (cp, &t) in field.checkpoints.iter().enumerate() {
        match field.second_moment(cp) {
            Ok((m2, se)) => m2_rows.push(vec![
                fmt(t),
                fmt(m2),
                fmt(se),
                fmt(field.boundary_mass[cp]),
            ]),
            Err(_) => m2_rows.push(vec![
                fmt(t),
                "nan".into(),
                "nan".into(),
                fmt(field.boundary_mass[cp]),
            ]),
        }
    }
    em.write_csv(
        &format!("m2_{tag}.csv"),
        "m2",
        "t,m2,se,boundary_mass",
        &m2_rows,
    )?;

    let mut cf_rows = Vec::new();
    for (cp, &t) in field.checkpoints.iter().enumerate() {
        for k in &field.cf_ks {
            let (cf, se) = field.characteristic_function(cp, k)?;
            let mut row = vec![fmt(t)];
            row.extend(k.iter().map(|&c| fmt(c)));
            row.push(fmt(cf.re));
            row.push(fmt(cf.im));
            row.push(fmt(se));
            cf_rows.push(row);
        }
    }
    let kcols: Vec<String> = (1..=d).map(|i| format!("k_{i}")).collect();
    em.write_csv(
        &format!("cf_{tag}.csv"),
        "cf",
        &format!("t,{},re,im,se_re", kcols.join(",")),
        &cf_rows,
    )?;

    let (m2_est, m2_err) = match fit_diffusion_m2(field) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let last = field.checkpoints.len() - 1;
    let (cf_est, cf_err) = match fit_diffusion_cf(field, last) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    em.write_json(
        &format!("diffusion_{tag}.json"),
        &DiffusionPayload {
            m2: m2_est,
            m2_error: m2_err,
            cf: cf_est,
            cf_error: cf_err,
            max_norm_drift: field.max_norm_drift,
        },
    )?;

    em.write(&format!("plot_{tag}.py"), &plot_script(&tag, d))?;
    Ok(())
}

fn plot_script(tag: &str, d: usize) -> String {
    format!(
        r##"#!/usr/bin/env python3
"""Plots for run {tag}: mean field, M2 growth, characteristic function."""
import csv

import matplotlib.pyplot as plt


def load(name):
    with open(name) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    head, data = rows[0], rows[1:]
    return head, [[float(c) if c != "nan" else float("nan") for c in r] for r in data]

fig, axes = plt.subplots(1, 3, figsize=(15, 4))

head, mf = load("mean_field_{tag}.csv")
ts = sorted(set(r[0] for r in mf))
for t in (ts[0], ts[len(ts) // 2], ts[-1]):
    pts = [(r[1], r[{vcol}]) for r in mf if r[0] == t]
    pts.sort()
    axes[0].plot([p[0] for p in pts], [p[1] for p in pts], label=f"t={{t:g}}")
axes[0].set(xlabel="x", ylabel="mean |psi|^2", yscale="log", title="mean field")
axes[0].legend()

head, m2 = load("m2_{tag}.csv")
axes[1].errorbar([r[0] for r in m2], [r[1] for r in m2], yerr=[r[2] for r in m2], fmt="o-")
axes[1].set(xlabel="t", ylabel="M2", title="second moment")

head, cf = load("cf_{tag}.csv")
t_last = max(r[0] for r in cf)
pts = sorted((sum(r[i] ** 2 for i in range(1, {d} + 1)), r[{recol}]) for r in cf if r[0] == t_last)
axes[2].plot([p[0] for p in pts], [p[1] for p in pts], "o-")
axes[2].set(xlabel="|k|^2", ylabel="Re CF", title=f"CF at t={{t_last:g}}")

fig.tight_layout()
fig.savefig("plots_{tag}.png", dpi=150)
print("wrote plots_{tag}.png")
"##,
        tag = tag,
        d = d,
        vcol = d + 1,
        recol = d + 1,
    )
}

fn cmd_simulate(cfg: &RunConfig) -> tbflip::Result<()> {
    let spec = cfg.ensemble_spec()?;
    let field = run_ensemble(&spec)?;
    let mut em = Emitter::new(&cfg.output.dir)?;
    emit_field(&mut em, cfg, &field)?;
    em.finish("simulate", cfg)
}

fn cmd_spectral(cfg: &RunConfig) -> tbflip::Result<()> {
    let basis = cfg.basis()?;
    let opts = cfg.spectral_options();
    let report = spectral_report(
        &basis,
        cfg.model.lambda,
        cfg.model.rate,
        &cfg.kernel(),
        &opts,
    )?;
    let tag = cfg.param_hash();
    let mut em = Emitter::new(&cfg.output.dir)?;
    em.write_json(&format!("spectral_{tag}.json"), &report)?;
    em.write(&format!("e_table_{tag}.csv"), &e_table_csv(&report))?;
    if let Some(gap) = &report.gap {
        em.write(&format!("gap_scan_{tag}.csv"), &gap_scan_csv(gap))?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    em.finish("spectral", cfg)
}

#[derive(Serialize)]
struct CompareReport {
    d_spectral: f64,
    d_mc_m2: f64,
    d_mc_m2_se: f64,
    d_mc_cf: f64,
    d_mc_cf_se: f64,
    rel_diff_m2: f64,
    z_m2: f64,
    rel_diff_cf: f64,
    z_cf: f64,
    internal_z: f64,
    gaussian_r_squared: f64,
    rel_tolerance: f64,
    sigma_tolerance: f64,
    pass: bool,
    messages: Vec<String>,
}

fn cmd_compare(cfg: &RunConfig) -> tbflip::Result<bool> {
    if cfg.model.lambda == 0.0 {
        return Err(Error::invalid(
            "compare declined: λ = 0 has ballistic (not diffusive) transport",
        ));
    }
    let basis = cfg.basis()?;
    let spectral = spectral_report(
        &basis,
        cfg.model.lambda,
        cfg.model.rate,
        &cfg.kernel(),
        &cfg.spectral_options(),
    )?;
    let d = cfg.model.dim;
    let d_spectral: f64 = (0..d).map(|i| spectral.d_matrix[i][i]).sum();

    let spec = cfg.ensemble_spec()?;
    let field = run_ensemble(&spec)?;
    let m2_est = fit_diffusion_m2(&field)?;
    let cf_est = fit_diffusion_cf(&field, field.checkpoints.len() - 1)?;
    let trace = |e: &DiffusionEstimate| -> (f64, f64) {
        let v: f64 = (0..d).map(|i| e.d_matrix[i][i]).sum();
        let s: f64 = (0..d)
            .map(|i| e.d_se[i][i] * e.d_se[i][i])
            .sum::<f64>()
            .sqrt();
        (v, s)
    };
    let (m2_v, m2_s) = trace(&m2_est);
    let (cf_v, cf_s) = trace(&cf_est);

    let mut messages = Vec::new();
    let rel_tolerance = 0.10;
    let sigma_tolerance = 3.0;
    let z_m2 = (m2_v - d_spectral).abs() / m2_s.max(1e-300);
    let z_cf = (cf_v - d_spectral).abs() / cf_s.max(1e-300);
    let rel_m2 = (m2_v - d_spectral).abs() / d_spectral;
    let rel_cf = (cf_v - d_spectral).abs() / d_spectral;
    let internal_z = (m2_v - cf_v).abs() / (m2_s * m2_s + cf_s * cf_s).sqrt().max(1e-300);
    let mut pass = true;
    if rel_m2 > rel_tolerance || z_m2 > sigma_tolerance {
        pass = false;
        messages.push(format!(
            "M2 estimate {m2_v:.5} ± {m2_s:.5} vs spectral {d_spectral:.5}: rel {rel_m2:.3}, z {z_m2:.2}"
        ));
    }
    if internal_z > sigma_tolerance {
        pass = false;
        messages.push(format!("M2 and CF fitters disagree: z = {internal_z:.2}"));
    }
    messages.extend(m2_est.flags.iter().cloned());
    messages.extend(cf_est.flags.iter().cloned());

    let report = CompareReport {
        d_spectral,
        d_mc_m2: m2_v,
        d_mc_m2_se: m2_s,
        d_mc_cf: cf_v,
        d_mc_cf_se: cf_s,
        rel_diff_m2: rel_m2,
        z_m2,
        rel_diff_cf: rel_cf,
        z_cf,
        internal_z,
        gaussian_r_squared: cf_est.r_squared,
        rel_tolerance,
        sigma_tolerance,
        pass,
        messages,
    };
    let mut em = Emitter::new(&cfg.output.dir)?;
    emit_field(&mut em, cfg, &field)?;
    em.write_json(&format!("compare_{}.json", cfg.param_hash()), &report)?;
    em.finish("compare", cfg)?;
    for m in &report.messages {
        eprintln!("compare: {m}");
    }
    println!(
        "D_spectral = {d_spectral:.6}; D_MC(m2) = {m2_v:.6} ± {m2_s:.6}; D_MC(cf) = {cf_v:.6} ± {cf_s:.6}; pass = {pass}"
    );
    Ok(report.pass)
}

#[derive(Serialize)]
struct OracleReport {
    ring: usize,
    lambda: f64,
    rate: f64,
    t: f64,
    pillet: PilletOracle,
    fiber: Option<FiberReport>,
    mc_density: Vec<f64>,
    mc_se: Vec<f64>,
    max_z: f64,
    max_abs_diff: f64,
}

fn cmd_oracle(cfg: &RunConfig) -> tbflip::Result<()> {
    use tbflip::ensemble::EnsembleSpec;
    use tbflip::lattice::LatticeWindow;

    let l = cfg.oracle.ring;
    let h = tbflip::lattice::HoppingKernel::nearest_neighbor(1);
    let mut rho0 = vec![vec![C64::new(0.0, 0.0); l]; l];
    rho0[0][0] = C64::new(1.0, 0.0);
    let pillet = pillet_oracle(l, cfg.model.lambda, cfg.model.rate, &h, cfg.oracle.t, &rho0)?;
    let fiber = if l <= 5 {
        Some(fiber_consistency(
            l,
            cfg.model.lambda,
            cfg.model.rate,
            &h,
            cfg.oracle.t,
            &rho0,
        )?)
    } else {
        None
    };

    let window = LatticeWindow::new(1, l)?;
    let spec = EnsembleSpec {
        n_traj: cfg.oracle.n_traj,
        master_seed: cfg.oracle.seed,
        checkpoints: vec![cfg.oracle.t.max(1e-12)],
        window,
        h: h.clone(),
        lambda: cfg.model.lambda,
        rate: cfg.model.rate,
        cf_ks: vec![],
    };
    let field = run_ensemble(&spec)?;
    let mc_density = field.mean[0].clone();
    let mc_se = field.se[0].clone();
    let mut max_z = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut rows = Vec::new();
    for x in 0..l {
        let diff = mc_density[x] - pillet.density[x];
        let z = diff.abs() / mc_se[x].max(1e-300);
        max_z = max_z.max(z);
        max_abs = max_abs.max(diff.abs());
        rows.push(vec![
            x.to_string(),
            fmt(pillet.density[x]),
            fmt(mc_density[x]),
            fmt(mc_se[x]),
            fmt(z),
        ]);
    }
    let report = OracleReport {
        ring: l,
        lambda: cfg.model.lambda,
        rate: cfg.model.rate,
        t: cfg.oracle.t,
        pillet,
        fiber,
        mc_density,
        mc_se,
        max_z,
        max_abs_diff: max_abs,
    };
    let tag = cfg.param_hash();
    let mut em = Emitter::new(&cfg.output.dir)?;
    em.write_json(&format!("oracle_{tag}.json"), &report)?;
    em.write_csv(
        &format!("density_compare_{tag}.csv"),
        "density_compare",
        "x,dense,mc,se,z",
        &rows,
    )?;
    em.finish("oracle", cfg)?;
    println!(
        "oracle: max |MC − dense| = {max_abs:.3e}, max z = {max_z:.2}{}",
        match &report.fiber {
            Some(f) => format!(", fiber consistency max diff = {:.3e}", f.max_diff),
            None => String::new(),
        }
    );
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> tbflip::Result<()> {
    // cfg.validate() already ran in resolve_config
    let kernel_report = cfg.kernel().validate(cfg.model.dim)?;
    if !kernel_report.pass {
        return Err(Error::invalid(format!(
            "hopping kernel invalid: {}",
            kernel_report.messages.join("; ")
        )));
    }
    let basis = cfg.basis()?;
    println!(
        "config valid; kernel self-adjoint with spanning support; spectral basis dimension {}",
        basis.len()
    );
    Ok(())
}

fn run() -> Result<bool, Error> {
    let cli = Cli::parse();
    let (args, name): (&CommonArgs, &str) = match &cli.command {
        Command::Simulate(a) => (a, "simulate"),
        Command::Spectral(a) => (a, "spectral"),
        Command::Compare(a) => (a, "compare"),
        Command::Oracle(a) => (a, "oracle"),
        Command::Validate(a) => (a, "validate"),
    };
    let cfg = resolve_config(args)?;
    match name {
        "simulate" => cmd_simulate(&cfg).map(|_| true),
        "spectral" => cmd_spectral(&cfg).map(|_| true),
        "compare" => cmd_compare(&cfg),
        "oracle" => cmd_oracle(&cfg).map(|_| true),
        _ => cmd_validate(&cfg).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: acceptance thresholds not met");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
