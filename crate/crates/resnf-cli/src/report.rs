//! Report emission: aligned text tables in the paper's layout, JSON with
//! deterministic key order, and CSV trajectory/scaling data.

use std::io::Write;
use std::path::Path;

use resnf_core::continuation::{ClassificationTable, Mark};
use resnf_core::stability::FloquetData;
use resnf_core::OrbitCertificate;
use serde_json::{json, Value};

/// Paper-layout table: one block per normalization order.
pub fn classification_text(table: &ClassificationTable) -> String {
    let header = ["Normalisation order", "Candidate", "Continuation", "Stability"];
    let mut rows: Vec<[String; 4]> = Vec::new();
    for row in &table.rows {
        rows.push([
            row.order.to_string(),
            row.label.clone(),
            row.continuation.symbol().to_string(),
            stability_symbol(row.stability).to_string(),
        ]);
    }
    let mut width = [0usize; 4];
    for c in 0..4 {
        width[c] = header[c]
            .chars()
            .count()
            .max(rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0));
    }
    let fmt_line = |cells: [&str; 4]| -> String {
        let mut line = String::new();
        for c in 0..4 {
            if c > 0 {
                line.push_str(" | ");
            }
            line.push_str(cells[c]);
            for _ in cells[c].chars().count()..width[c] {
                line.push(' ');
            }
        }
        line.trim_end().to_string() + "\n"
    };
    let mut out = fmt_line([header[0], header[1], header[2], header[3]]);
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 9));
    out.push('\n');
    let mut last_order = None;
    for r in &rows {
        let order = if last_order == Some(r[0].clone()) { "" } else { &r[0] };
        last_order = Some(r[0].clone());
        out.push_str(&fmt_line([order, &r[1], &r[2], &r[3]]));
    }
    out
}

fn stability_symbol(mark: Mark) -> &'static str {
    match mark {
        Mark::Yes => "stable",
        Mark::No => "unstable",
        Mark::Unknown => "?",
        Mark::Blank => "",
    }
}

pub fn classification_json(table: &ClassificationTable) -> Value {
    json!({
        "rows": table.rows.iter().map(|r| json!({
            "order": r.order,
            "candidate": r.label,
            "continuation": r.continuation.symbol(),
            "stability": stability_symbol(r.stability),
        })).collect::<Vec<_>>(),
        "candidates": table.candidates.iter().map(|c| json!({
            "label": c.label(),
            "q": c.q,
            "hessian_spectrum": c.hessian_spectrum,
            "degeneracy_dim": c.degeneracy_dim,
            "status": c.status.iter().map(|(r, s)| json!({
                "order": r,
                "status": format!("{s:?}"),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

pub fn certificate_json(cert: &OrbitCertificate) -> Value {
    json!({
        "qstar": cert.qstar,
        "eps": cert.eps,
        "x_po": cert.x_po,
        "ups_residual_initial": cert.ups_residual_initial,
        "ups_residual_final": cert.ups_residual_final,
        "min_eig": cert.min_eig,
        "alpha_fit": cert.alpha_fit,
        "alpha_r2": cert.alpha_r2,
        "upsilon_slope": cert.slope_fit_r1,
        "distance_slope": cert.dist_slope,
        "distance_to_torus": cert.distance_x_po_to_xstar,
        "newton_iters": cert.newton_iters,
    })
}

pub fn floquet_json(data: &FloquetData) -> Value {
    let cpair = |l: &resnf_core::C64| json!([l.re, l.im]);
    json!({
        "eps": data.eps,
        "internal_exponents": data.exponents.iter().map(cpair).collect::<Vec<_>>(),
        "multipliers": data.multipliers.iter().map(cpair).collect::<Vec<_>>(),
        "exponent_fits": data.exponent_fits.iter().map(|f| json!({
            "coeff": f.coeff,
            "power": f.power,
            "r2": f.r2,
            "imaginary": f.imaginary,
        })).collect::<Vec<_>>(),
        "beta_fit": data.gap_beta_fit,
        "beta_r2": data.beta_r2,
        "verdict": format!("{:?}", data.verdict),
    })
}

pub fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| anyhow::anyhow!("serialize {}: {e}", path.display()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| anyhow::anyhow!("create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("write {}: {e}", path.display()))
}

/// CSV with a header row; floats printed with enough digits to round-trip.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| anyhow::anyhow!("create {}: {e}", dir.display()))?;
    }
    let file = std::fs::File::create(path)
        .map_err(|e| anyhow::anyhow!("create {}: {e}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| anyhow::anyhow!("write {}: {e}", path.display()))
}
