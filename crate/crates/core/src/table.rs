//! Plot-ready output of sweeps and rate breakdowns.
//!
//! Floats are written with 12 significant digits in scientific notation,
//! independent of locale.

use serde::Serialize;
use std::io::Write;

use crate::error::Result;
use crate::keyrate::RateBreakdown;
use crate::optimize::SweepRow;

pub const SWEEP_COLUMNS: [&str; 10] = [
    "loss_db",
    "variant",
    "p_opt",
    "mu_opt",
    "delta_opt",
    "rate",
    "p_c",
    "p_t",
    "e_bit",
    "p_ph",
];

/// `x` with 12 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// One CSV line per row, in the order given.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{}", SWEEP_COLUMNS.join(","))?;
    for r in rows {
        let res = &r.result;
        let b = &res.breakdown;
        let fields = [
            fmt_float(r.loss_db),
            res.variant.tag().to_string(),
            fmt_float(res.best_params.p_send),
            fmt_float(res.best_params.mu),
            fmt_float(res.best_params.delta),
            fmt_float(res.best_rate),
            fmt_float(b.p_c),
            fmt_float(b.p_t),
            fmt_float(b.e_bit),
            fmt_float(b.p_ph),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    loss_db: f64,
    variant: &'a str,
    p_opt: f64,
    mu_opt: f64,
    delta_opt: f64,
    rate: f64,
    p_c: f64,
    p_t: f64,
    e_bit: f64,
    p_ph: f64,
    converged: bool,
}

/// The CSV columns as a JSON array of objects, plus the convergence flag.
pub fn write_sweep_json<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    let json: Vec<JsonRow> = rows
        .iter()
        .map(|r| {
            let res = &r.result;
            JsonRow {
                loss_db: r.loss_db,
                variant: res.variant.tag(),
                p_opt: res.best_params.p_send,
                mu_opt: res.best_params.mu,
                delta_opt: res.best_params.delta,
                rate: res.best_rate,
                p_c: res.breakdown.p_c,
                p_t: res.breakdown.p_t,
                e_bit: res.breakdown.e_bit,
                p_ph: res.breakdown.p_ph,
                converged: res.converged,
            }
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &json).map_err(std::io::Error::other)?;
    writeln!(out)?;
    Ok(())
}

/// `name = value` lines for every intermediate of a breakdown.
pub fn format_breakdown(b: &RateBreakdown) -> String {
    let mut lines = vec![
        format!("variant = {}", b.variant),
        format!("s = {}", fmt_float(b.s)),
        format!("P_c = {}", fmt_float(b.p_c)),
        format!("P_t = {}", fmt_float(b.p_t)),
        format!("e_bit = {}", fmt_float(b.e_bit)),
        format!("P_ph = {}", fmt_float(b.p_ph)),
        format!("e_ph = {}", fmt_float(b.e_ph)),
        format!("R_raw = {}", fmt_float(b.r_raw)),
        format!("R_detector = {}", fmt_float(b.r_per_detector)),
        format!("R = {}", fmt_float(b.r_total)),
    ];
    if b.no_correct_clicks {
        lines.push("note = no correct-bit clicks; rate is zero".into());
    }
    if let Some(a) = &b.aopp {
        lines.push(format!(
            "aopp.pairing_fraction = {}",
            fmt_float(a.pairing_fraction)
        ));
        lines.push(format!(
            "aopp.survival_fraction = {}",
            fmt_float(a.survival_fraction)
        ));
        lines.push(format!(
            "aopp.post_bit_error = {}",
            fmt_float(a.post_bit_error)
        ));
        if let Some(e) = a.post_phase_error {
            lines.push(format!("aopp.post_phase_error = {}", fmt_float(e)));
        }
    }
    let mut s = lines.join("\n");
    s.push('\n');
    s
}
