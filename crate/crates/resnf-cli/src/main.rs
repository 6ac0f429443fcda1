//! `resnf`: normal forms, candidate classification, periodic-orbit
//! refinement and Floquet stability for dNLS lattices.
//!
//! Exit codes: 0 success, 2 configuration error, 3 mathematical-hypothesis
//! failure (Melnikov/twist/α/β), 4 numerical failure.

mod config;
mod expected;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resnf_core::normal_form::check_melnikov;
use resnf_core::CoreError;
use serde_json::json;

use config::RunConfig;
use pipeline::Ctx;

#[derive(Parser)]
#[command(name = "resnf", version, about = "Resonant normal forms for dNLS lattices")]
struct Cli {
    /// JSON run configuration (overrides --preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Shipped paper preset name.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Normalization order r.
    #[arg(long, global = true)]
    order: Option<u32>,
    /// Output directory (default: report to stdout only).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated ε values replacing the configured grid.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Worker threads for candidate fan-out.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize to order r and emit the Z₀/K summary tables.
    Normalize,
    /// Candidate classification with continuation and stability columns.
    Classify,
    /// Refine continued candidates to periodic orbits over the ε-grid.
    Refine,
    /// Trajectory CSVs for one candidate at orders r and r+1.
    Trace {
        /// Slow phase configuration, comma-separated angles (default: the
        /// first continued candidate).
        #[arg(long, value_delimiter = ',')]
        candidate: Option<Vec<f64>>,
        /// Number of periods to follow.
        #[arg(long, default_value_t = 40)]
        periods: usize,
    },
    /// Scaling fits: α, β, |Υ| and distance slopes per candidate.
    Scan,
    /// Diff classification output against the stored paper tables.
    Verify {
        /// Verify every shipped preset.
        #[arg(long)]
        all: bool,
    },
}

fn exit_code_for(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidModel(_)
        | CoreError::ResonanceMismatch(_)
        | CoreError::NonUnimodularChart(_)
        | CoreError::DimMismatch { .. } => 2,
        CoreError::MelnikovFailure { .. }
        | CoreError::TwistFailure { .. }
        | CoreError::SmallDivisor { .. }
        | CoreError::NonPerturbativeGenerator
        | CoreError::HypothesisFailure(_) => 3,
        CoreError::BlockLeakage(_)
        | CoreError::IntegrationFailure(_)
        | CoreError::NewtonDivergence { .. }
        | CoreError::InvalidSamples(_) => 4,
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure { code: exit_code_for(&e), message: e.to_string() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<CoreError>() {
            Ok(core) => core.into(),
            Err(e) => Failure { code: 2, message: e.to_string() },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let err = json!({ "error": f.message, "exit_code": f.code });
            eprintln!("{}", serde_json::to_string(&err).unwrap());
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = if let Some(path) = &cli.config {
        RunConfig::from_file(path)?
    } else {
        let name = cli.preset.as_deref().unwrap_or("three_site");
        RunConfig::from_preset(name)?
    };
    if let Some(r) = cli.order {
        cfg.normal_form.order = r;
    }
    if let Some(eps) = &cli.eps {
        let mut grid = eps.clone();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cfg.epsilon_grid = grid;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Verify { all } = &cli.command {
        return verify(cli, *all);
    }
    let cfg = load_config(cli)?;
    let ctx = Ctx::build(&cfg)?;
    match &cli.command {
        Command::Normalize => normalize_cmd(&cfg, &ctx),
        Command::Classify => classify_cmd(&cfg, &ctx),
        Command::Refine => refine_cmd(&cfg, &ctx),
        Command::Trace { candidate, periods } => trace_cmd(&cfg, &ctx, candidate, *periods),
        Command::Scan => scan_cmd(&cfg, &ctx),
        Command::Verify { .. } => unreachable!(),
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Option<PathBuf> {
    cfg.outputs.dir.as_ref().map(|d| d.join(name))
}

fn normalize_cmd(cfg: &RunConfig, ctx: &Ctx) -> Result<(), Failure> {
    let r = cfg.normal_form.order;
    let m1 = ctx.map.m - 1;
    let nf = ctx.normal_form(r, cfg.normal_form.grade_max, &vec![0.0; m1])?;
    let slow = ctx.slow_potential(r, cfg.normal_form.grade_max)?;

    let mut text = String::new();
    text.push_str(&format!(
        "Normal form to order {r}  (ω = {:.6}, twist det = {:.6e}, min divisor = {:.3e})\n\n",
        nf.omega, nf.diagnostics.twist, nf.diagnostics.smallest_divisor
    ));
    text.push_str("Slow potential Z0 (cosine table per ε-order):\n");
    let mut z0_json = Vec::new();
    for (idx, z) in slow.orders.iter().enumerate() {
        text.push_str(&format!("  order {}:", idx + 1));
        if z.is_zero() {
            text.push_str(" 0\n");
        } else {
            text.push('\n');
            for (k, c, s) in &z.terms {
                if c.abs() > 1e-12 {
                    text.push_str(&format!("    {c:+.9} cos({})\n", harmonic_label(k)));
                }
                if s.abs() > 1e-12 {
                    text.push_str(&format!("    {s:+.9} sin({})\n", harmonic_label(k)));
                }
                z0_json.push(json!({
                    "order": idx + 1,
                    "harmonic": k,
                    "cos": c,
                    "sin": s,
                }));
            }
        }
    }
    let sizes: Vec<usize> = (0..=r)
        .map(|s| nf.k.terms().filter(|(ts, _, _)| *ts == s).count())
        .collect();
    text.push_str(&format!("\nK term counts by ε-order 0..{r}: {sizes:?}\n"));
    print!("{text}");
    if let Some(path) = out_path(cfg, "normalize.json") {
        report::write_json(
            &path,
            &json!({
                "order": r,
                "omega": nf.omega,
                "twist": nf.diagnostics.twist,
                "smallest_divisor": nf.diagnostics.smallest_divisor,
                "melnikov_pass": nf.diagnostics.melnikov.pass,
                "z0": z0_json,
                "k_terms_by_order": sizes,
            }),
        )?;
    }
    if let Some(path) = out_path(cfg, "normalize.txt") {
        report::write_text(&path, &text)?;
    }
    Ok(())
}

fn harmonic_label(k: &[i32]) -> String {
    let mut out = String::new();
    for (i, &v) in k.iter().enumerate() {
        if v == 0 {
            continue;
        }
        if !out.is_empty() && v > 0 {
            out.push('+');
        }
        match v {
            1 => {}
            -1 => out.push('-'),
            _ => out.push_str(&v.to_string()),
        }
        out.push_str(&format!("q{}", i + 2));
    }
    if out.is_empty() { "0".to_string() } else { out }
}

fn classify_cmd(cfg: &RunConfig, ctx: &Ctx) -> Result<(), Failure> {
    let table = pipeline::classification(cfg, ctx, true)?;
    let text = report::classification_text(&table);
    print!("{text}");
    if cfg.wants("text") {
        if let Some(path) = out_path(cfg, "classification.txt") {
            report::write_text(&path, &text)?;
        }
    }
    if cfg.wants("json") {
        if let Some(path) = out_path(cfg, "classification.json") {
            report::write_json(&path, &report::classification_json(&table))?;
        }
    }
    Ok(())
}

fn refine_cmd(cfg: &RunConfig, ctx: &Ctx) -> Result<(), Failure> {
    let table = pipeline::classification(cfg, ctx, false)?;
    let refined = pipeline::refine_all(cfg, ctx, &table)?;
    if refined.is_empty() {
        return Err(Failure {
            code: 3,
            message: "no continued candidates to refine at this order".into(),
        });
    }
    let mut all = Vec::new();
    for rc in &refined {
        let c0 = &rc.certificates[0];
        println!(
            "{}: α = {:.3}, |Υ| slope = {:.3}, distance slope = {:.3}",
            rc.label, c0.alpha_fit, c0.slope_fit_r1, c0.dist_slope
        );
        for cert in &rc.certificates {
            println!(
                "  ε = {:.6e}: residual {:.3e} → {:.3e} in {} Newton steps, min|eig M| = {:.3e}",
                cert.eps,
                cert.ups_residual_initial,
                cert.ups_residual_final,
                cert.newton_iters,
                cert.min_eig
            );
        }
        all.push(json!({
            "candidate": rc.label,
            "qstar": rc.qstar,
            "certificates": rc.certificates.iter().map(report::certificate_json).collect::<Vec<_>>(),
        }));
    }
    if let Some(path) = out_path(cfg, "certificates.json") {
        report::write_json(&path, &json!({ "order": cfg.normal_form.order, "results": all }))?;
    }
    Ok(())
}

fn scan_cmd(cfg: &RunConfig, ctx: &Ctx) -> Result<(), Failure> {
    let table = pipeline::classification(cfg, ctx, false)?;
    let rows = pipeline::scan(cfg, ctx, &table)?;
    let mut out = Vec::new();
    println!("candidate | alpha | upsilon_slope | distance_slope | beta | verdict");
    for row in &rows {
        println!(
            "{} | {:.3} | {:.3} | {:.3} | {:.3} | {}",
            row.label, row.alpha, row.upsilon_slope, row.distance_slope, row.beta, row.verdict
        );
        out.push(json!({
            "candidate": row.label,
            "alpha": row.alpha,
            "upsilon_slope": row.upsilon_slope,
            "distance_slope": row.distance_slope,
            "beta": row.beta,
            "verdict": row.verdict,
            "floquet": row.floquet.as_ref().map(report::floquet_json),
        }));
    }
    if let Some(path) = out_path(cfg, "scan.json") {
        report::write_json(&path, &json!({ "order": cfg.normal_form.order, "rows": out }))?;
    }
    Ok(())
}

fn trace_cmd(
    cfg: &RunConfig,
    ctx: &Ctx,
    candidate: &Option<Vec<f64>>,
    periods: usize,
) -> Result<(), Failure> {
    let qstar = match candidate {
        Some(q) => q.clone(),
        None => {
            let table = pipeline::classification(cfg, ctx, false)?;
            let conts = pipeline::continued_candidates(&table, cfg.normal_form.order);
            conts
                .first()
                .map(|c| c.q.clone())
                .ok_or_else(|| Failure { code: 3, message: "no continued candidate to trace".into() })?
        }
    };
    if qstar.len() != ctx.map.m - 1 {
        return Err(Failure {
            code: 2,
            message: format!("candidate needs {} slow angles", ctx.map.m - 1),
        });
    }
    let tr = pipeline::trace(cfg, ctx, &qstar, periods, 16)?;
    let r = cfg.normal_form.order;
    let ratio = tr.max_residual[&(r + 1)] / tr.max_residual[&r];
    println!(
        "trace at ε = {:.3e}: max residual order {r} = {:.3e}, order {} = {:.3e} (ratio {:.3e})",
        tr.eps,
        tr.max_residual[&r],
        r + 1,
        tr.max_residual[&(r + 1)]
    , ratio);
    let n = ctx.spec.n_sites;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("y{i}")));
    header.push("residual".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    for (order, rows) in &tr.rows_by_order {
        if let Some(path) = out_path(cfg, &format!("trace_order{order}.csv")) {
            report::write_csv(&path, &header_refs, rows)?;
        }
    }
    if let Some(path) = out_path(cfg, "trace_summary.json") {
        report::write_json(
            &path,
            &json!({
                "qstar": qstar,
                "eps": tr.eps,
                "max_residual_by_order": tr.max_residual,
                "residual_ratio": ratio,
            }),
        )?;
    }
    Ok(())
}

fn verify(cli: &Cli, all: bool) -> Result<(), Failure> {
    let names: Vec<String> = if all {
        resnf_core::presets::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
    } else if let Some(name) = &cli.preset {
        vec![name.clone()]
    } else if cli.config.is_some() {
        // custom config: run the hypothesis checks only
        let cfg = load_config(cli)?;
        return verify_hypotheses(&cfg);
    } else {
        resnf_core::presets::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
    };
    let mut failures = Vec::new();
    for name in &names {
        let mut cfg = RunConfig::from_preset(name)?;
        if let Some(r) = cli.order {
            cfg.normal_form.order = r;
        }
        cfg.validate()?;
        match verify_preset(name, &cfg) {
            Ok(()) => println!("{name}: ok"),
            Err(f) => {
                println!("{name}: FAILED — {}", f.message);
                failures.push(f);
            }
        }
    }
    match failures.into_iter().next() {
        None => Ok(()),
        Some(f) => Err(f),
    }
}

fn verify_hypotheses(cfg: &RunConfig) -> Result<(), Failure> {
    let ctx = Ctx::build(cfg)?;
    let r = cfg.normal_form.order;
    let mel = check_melnikov(ctx.spec.omega(), r, None);
    if !mel.pass {
        return Err(CoreError::MelnikovFailure {
            min_divisor: mel.min_divisor,
            k1: mel.min_k1,
        }
        .into());
    }
    let m1 = ctx.map.m - 1;
    let nf = ctx.normal_form(r, cfg.normal_form.grade_max, &vec![0.0; m1])?;
    println!(
        "hypotheses ok: ω = {:.6}, twist det = {:.3e}, min divisor = {:.3e}",
        nf.omega, nf.diagnostics.twist, nf.diagnostics.smallest_divisor
    );
    Ok(())
}

fn verify_preset(name: &str, cfg: &RunConfig) -> Result<(), Failure> {
    verify_hypotheses(cfg)?;
    let ctx = Ctx::build(cfg)?;
    let table = pipeline::classification(cfg, &ctx, true)?;
    let got = report::classification_text(&table);
    let want = expected::table(name)
        .ok_or_else(|| Failure { code: 2, message: format!("no stored table for '{name}'") })?;
    if got != want {
        return Err(Failure {
            code: 3,
            message: format!(
                "classification table differs from the stored expectation\n--- expected\n{want}--- got\n{got}"
            ),
        });
    }
    Ok(())
}
