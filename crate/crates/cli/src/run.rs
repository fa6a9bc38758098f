//! Executes the requested analyses and writes CSV tables and `report.txt`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use msfde_core::kernels::{critical_rate, diffusion_kernel, renewal_rho, KernelTable};
use msfde_core::montecarlo::{compare_with, simulate, McComparison, McEstimate};
use msfde_core::perturb::{classify_with, sectional_average, validate_chirp_windows, ForcingKind, StabilityReport, TheoremVerdict};
use msfde_core::quadrature::{fit_log_slope, last_quarter_start};
use msfde_core::resolvent::{estimate_v0, solve_resolvent, ResolventTable};
use msfde_core::volterra_ms::{consistency_check, mean_square_with, ConsistencyReport, MeanSquareSolution};
use msfde_core::FunctionTable;

use crate::config::{Analysis, ConfigError, PsiShape, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numerical error during {stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: msfde_core::Error,
    },
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical { .. } | CliError::Output { .. } => 2,
        }
    }
}

fn numerical(stage: &'static str) -> impl FnOnce(msfde_core::Error) -> CliError {
    move |source| CliError::Numerical { stage, source }
}

/// Everything computed by one run, for callers that want more than the files.
#[derive(Debug, Default)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
    pub report: String,
    pub resolvent: Option<ResolventTable>,
    pub kernel: Option<KernelTable>,
    pub solution: Option<MeanSquareSolution>,
    pub consistency: Option<ConsistencyReport>,
    pub stability: Option<StabilityReport>,
    pub estimate: Option<McEstimate>,
    pub comparison: Option<McComparison>,
}

pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutputs, CliError> {
    let wants = |a: Analysis| cfg.analyses.contains(&a);
    let inst = &cfg.instance;
    let grid = cfg.grid;
    let mut out = RunOutputs::default();

    let need_kernel = [Analysis::Kernel, Analysis::MeanSquare, Analysis::Classify, Analysis::Compare].into_iter().any(wants);
    let need_solution = wants(Analysis::MeanSquare) || wants(Analysis::Compare);
    let need_resolvent = wants(Analysis::Resolvent) || need_kernel;

    if need_resolvent {
        out.resolvent = Some(solve_resolvent(&inst.nu, &grid).map_err(numerical("resolvent"))?);
    }
    if need_kernel {
        let r = out.resolvent.as_ref().expect("resolvent computed");
        out.kernel = Some(diffusion_kernel(&inst.mu, r).map_err(numerical("kernel"))?);
    }
    if need_solution {
        let (r, k) = (out.resolvent.as_ref().expect("resolvent"), out.kernel.as_ref().expect("kernel"));
        let sol = mean_square_with(inst, r, k).map_err(numerical("meansquare"))?;
        if wants(Analysis::MeanSquare) {
            let rho = renewal_rho(k, &grid).map_err(numerical("meansquare"))?;
            out.consistency = Some(consistency_check(&sol, r, &rho));
        }
        out.solution = Some(sol);
    }
    if wants(Analysis::Classify) {
        let (r, k) = (out.resolvent.as_ref().expect("resolvent"), out.kernel.as_ref().expect("kernel"));
        out.stability = Some(classify_with(inst, r, k, &cfg.classify));
    }
    if wants(Analysis::Simulate) || wants(Analysis::Compare) {
        let mc = cfg.mc.as_ref().expect("validated [mc] section");
        let est = simulate(inst, &mc.config).map_err(numerical("simulate"))?;
        if wants(Analysis::Compare) {
            let sol = out.solution.as_ref().expect("solution");
            out.comparison = Some(compare_with(&est, sol, &mc.checkpoints, mc.kappa).map_err(numerical("compare"))?);
        }
        out.estimate = Some(est);
    }

    fs::create_dir_all(out_dir).map_err(|e| output_error(out_dir, e))?;
    if wants(Analysis::Resolvent) {
        let r = out.resolvent.as_ref().expect("resolvent");
        out.files.push(write_csv(out_dir, "resolvent.csv", &["t", "r"], &[&r.r])?);
    }
    if wants(Analysis::Kernel) {
        let k = out.kernel.as_ref().expect("kernel");
        out.files.push(write_csv(out_dir, "kernel.csv", &["t", "G", "G_sq"], &[&k.g, &k.g_sq])?);
    }
    if wants(Analysis::MeanSquare) {
        let s = out.solution.as_ref().expect("solution");
        let x = s.x.slice(0, grid.steps() as isize).map_err(numerical("meansquare"))?;
        out.files.push(write_csv(
            out_dir,
            "meansquare.csv",
            &["t", "x", "EX2", "EY2", "Z", "gamma"],
            &[&x, &s.ex2, &s.ey2, &s.z, &s.gamma],
        )?);
    }
    if let Some(est) = &out.estimate {
        out.files.push(write_csv(out_dir, "mc.csv", &["t", "mc_mean_sq", "mc_std_err"], &[&est.mean_sq, &est.std_err])?);
    }
    out.report = render_report(cfg, &out);
    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, &out.report).map_err(|e| output_error(&report_path, e))?;
    out.files.push(report_path);
    Ok(out)
}

fn output_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output { path: path.display().to_string(), message: e.to_string() }
}

/// Writes columns sharing the first table's nodes; floats carry 17 significant digits.
fn write_csv(dir: &Path, name: &str, header: &[&str], columns: &[&FunctionTable]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let err = |e: std::io::Error| output_error(&path, e);
    let file = fs::File::create(&path).map_err(err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(",")).map_err(err)?;
    let first = columns[0];
    let mut line = String::new();
    for (i, t) in first.times().enumerate() {
        line.clear();
        write!(line, "{t:.16e}").expect("string write");
        for c in columns {
            write!(line, ",{:.16e}", c.values()[i]).expect("string write");
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(err)?;
    }
    w.flush().map_err(err)?;
    Ok(path)
}

fn forcing_label(k: &ForcingKind) -> String {
    match k {
        ForcingKind::Zero => "zero".into(),
        ForcingKind::Constant(c) => format!("constant {c}"),
        ForcingKind::Csv(p) => format!("csv {}", p.display()),
        ForcingKind::Chirp { alpha, beta } => format!("chirp alpha={alpha} beta={beta}"),
        ForcingKind::Spikes(s) => format!("spikes ({} intervals)", s.len()),
        ForcingKind::ExpDecay { scale, rate } => format!("exp_decay scale={scale} rate={rate}"),
    }
}

fn psi_label(p: &PsiShape) -> String {
    match p {
        PsiShape::Constant(c) => format!("constant {c}"),
        PsiShape::Samples(p) => format!("samples {}", p.display()),
        PsiShape::Exp(l) => format!("exp lambda={l}"),
        PsiShape::CosExp { re, im } => format!("cos_exp re={re} im={im}"),
    }
}

fn theorem_block(s: &mut String, title: &str, t: &TheoremVerdict) {
    let _ = writeln!(s, "{title}: {}", t.overall);
    for (label, c) in ["(i)", "(ii)", "(iii)", "(iv)"].iter().zip(t.conditions()) {
        let _ = writeln!(s, "  {label:<5} {:<12} {}", c.verdict.to_string(), c.evidence);
    }
}

pub fn render_report(cfg: &RunConfig, out: &RunOutputs) -> String {
    let mut s = String::new();
    let g = &cfg.grid;
    let _ = writeln!(s, "msfde report");
    let _ = writeln!(s, "grid: h = {:e}, T = {}, tau = {}, nodes = {}", g.h(), g.horizon(), g.tau(), g.len());
    let _ = writeln!(s, "f: {}", forcing_label(&cfg.f_kind));
    let _ = writeln!(s, "g: {}", forcing_label(&cfg.g_kind));
    let _ = writeln!(s, "psi: {}", psi_label(&cfg.psi));
    let names: Vec<_> = cfg.analyses.iter().map(|a| a.name()).collect();
    let _ = writeln!(s, "analyses: {}", names.join(", "));

    if let Some(r) = &out.resolvent {
        let c = estimate_v0(&cfg.instance.nu, r, cfg.classify.root_bracket);
        let _ = writeln!(s, "\n[resolvent]");
        let _ = writeln!(s, "r(T) = {:.6e}", r.values().last().copied().unwrap_or(0.0));
        match c.decay_fit.rate() {
            Some(rate) => {
                let _ = writeln!(s, "decay fit of ln|r| over the final quarter: {rate:.6}");
            }
            None => {
                let _ = writeln!(s, "decay fit of ln|r|: below numerical floor");
            }
        }
        let _ = match c.real_root {
            Some(root) => writeln!(s, "rightmost real characteristic root: {root:.6}"),
            None => writeln!(s, "rightmost real characteristic root: none in bracket"),
        };
        let _ = writeln!(s, "unperturbed equation: {} ({})", if c.verdict_stable { "stable" } else { "unstable" }, c.method.tag());
    }

    if let Some(k) = &out.kernel {
        let _ = writeln!(s, "\n[kernel]");
        let _ = writeln!(
            s,
            "||G||^2 = {:.6e} (truncated {:.6e}, tail {:.3e}){}",
            k.l2_norm_sq,
            k.l2_norm_sq_truncated,
            k.l2_tail_estimate,
            if k.divergent { "; G^2 does not decay, tail omitted" } else { "" }
        );
        if cfg.analyses.contains(&Analysis::Kernel) {
            let _ = match critical_rate(k) {
                Ok(rate) => writeln!(s, "critical rate: {rate:.6}"),
                Err(e) => writeln!(s, "critical rate: unavailable ({e})"),
            };
            if let Ok(rho) = renewal_rho(k, &cfg.grid) {
                let _ = writeln!(s, "renewal resolvent: integral over [0,T] {:.6e}, clamped nodes {}", rho.l1_norm_truncated, rho.clamped_nodes);
            }
        }
    }

    if let Some(sol) = &out.solution {
        if cfg.analyses.contains(&Analysis::MeanSquare) {
            let _ = writeln!(s, "\n[meansquare]");
            let ex2 = sol.ex2.values();
            let _ = writeln!(s, "EX2(T) = {:.6e}; max EX2 = {:.6e}", ex2.last().copied().unwrap_or(0.0), sol.ex2.max_abs());
            let fit = fit_log_slope(ex2, g.h(), 0.0, last_quarter_start(ex2.len()), 1e-28);
            let _ = match fit {
                Some(f) => writeln!(s, "fitted decay rate of EX2 over the final quarter: {:.6}", f.slope),
                None => writeln!(s, "fitted decay rate of EX2: below numerical floor"),
            };
            let _ = writeln!(s, "mu = 0 closed form used: {}", sol.used_mu_zero_path);
            if let Some(c) = &out.consistency {
                let _ = writeln!(
                    s,
                    "Z representations: renewal deviation {:.3e}, direct deviation {:.3e}, tolerance {:.3e}: {}",
                    c.renewal_deviation,
                    c.direct_deviation,
                    c.tolerance,
                    if c.pass { "PASS" } else { "FAIL" }
                );
            }
        }
    }

    if let Some(rep) = &out.stability {
        let _ = writeln!(s, "\n[classify]");
        theorem_block(&mut s, "Theorem 2 (mean square tends to zero)", &rep.theorem2);
        theorem_block(&mut s, "Theorem 3 (exponential mean-square decay)", &rep.theorem3);
        theorem_block(&mut s, "Theorem 4 (integrable mean square)", &rep.theorem4);
        if let Some(e) = &rep.thm2 {
            let _ = writeln!(s, "sectional averages of f, signed against absolute:");
            let _ = writeln!(s, "  {:<10} {:<12} {:>12} {:<12} {:>12}", "delta", "signed", "rate", "absolute", "rate");
            for (sw, aw) in e.f_windows.iter().zip(&e.abs_f_windows) {
                let rate = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.4}"));
                let _ = writeln!(
                    s,
                    "  {:<10} {:<12} {:>12} {:<12} {:>12}",
                    sw.delta,
                    sw.trend.verdict.to_string(),
                    rate(sw.envelope_rate),
                    aw.trend.verdict.to_string(),
                    rate(aw.envelope_rate)
                );
            }
            let _ = writeln!(
                s,
                "exponential filter u' = -u + f: {}; agrees with sectional averages: {}",
                e.filter_trend, e.filter_agrees
            );
        }
        if let Some(e) = &rep.thm3 {
            for b in &e.per_beta {
                let _ = writeln!(
                    s,
                    "  beta {:<8} f bound {:.4e} ({}), weighted g^2 integral {:.4e} ({})",
                    b.beta, b.f_bound, b.f_verdict, b.g_integral, b.g_verdict
                );
            }
        }
        if let Some(e) = &rep.thm4 {
            let _ = writeln!(s, "unit sectional average of f, squared integral (reported only): {}", e.unit_average_f);
        }
        if let ForcingKind::Chirp { alpha, beta } = cfg.f_kind {
            let _ = writeln!(s, "{}", chirp_validation(cfg, alpha, beta));
        }
    }

    if let Some(est) = &out.estimate {
        let mc = cfg.mc.as_ref().expect("mc settings");
        let _ = writeln!(s, "\n[simulate]");
        let _ = writeln!(s, "paths {}, seed {}, psi mode {:?}", mc.config.paths, mc.config.seed, mc.config.psi_mode);
        let _ = match est.explosion {
            Some(t) => writeln!(s, "explosion: some path exceeded 1e150 at t = {t}"),
            None => writeln!(s, "explosion: none"),
        };
    }

    if let Some(cmp) = &out.comparison {
        let _ = writeln!(s, "\n[compare]");
        let _ = writeln!(s, "allowance kappa = {}", cmp.kappa);
        let _ = writeln!(s, "  {:<8} {:>14} {:>12} {:>14} {:>8}", "t", "mc", "std_err", "EX2", "z");
        for c in &cmp.checkpoints {
            let _ = writeln!(s, "  {:<8} {:>14.6e} {:>12.3e} {:>14.6e} {:>8.3}", c.time, c.mc_mean_sq, c.std_err, c.volterra_ex2, c.z);
        }
        let _ = writeln!(
            s,
            "comparison: {}{}",
            if cmp.pass { "PASS" } else { "FAIL" },
            if cmp.low_power { " (low power: fewer than 100 paths)" } else { "" }
        );
    }
    s
}

fn chirp_validation(cfg: &RunConfig, alpha: f64, beta: f64) -> String {
    let delta = 0.25;
    let t_end = cfg.grid.horizon() - 1.0;
    let times: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .filter_map(|q| cfg.grid.index_of((q * t_end / cfg.grid.h()).floor() * cfg.grid.h()).ok())
        .map(|k| cfg.grid.time(k))
        .collect();
    let result = sectional_average(&cfg.instance.f, delta, &cfg.grid)
        .and_then(|avg| validate_chirp_windows(alpha, beta, &avg, delta, &times));
    match result {
        Ok(dev) => format!("chirp windows of length {delta} against the refined-quadrature oracle: max relative deviation {dev:.3e}"),
        Err(e) => format!("chirp oracle validation unavailable: {e}"),
    }
}
