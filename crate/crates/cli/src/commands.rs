use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use snsqkd::config::{OutputFormat, RunConfig};
use snsqkd::decoy::{
    conservative_phase_error, solve_yield_bounds, synthetic_dataset, DecoyDataset, TrueYields,
};
use snsqkd::keyrate::{key_rate, Variant};
use snsqkd::mcsim::{fock_click_analytic, simulate, simulate_fock, validate_summary, Check};
use snsqkd::optimize::{optimize_point_with, sweep as run_sweep};
use snsqkd::phase_error::phase_error_bound_for;
use snsqkd::physics::{ChannelPoint, Detector, Phases, ProtocolParams};
use snsqkd::table::{fmt_float, format_breakdown, write_sweep_csv, write_sweep_json};
use snsqkd::Error;

use crate::Failure;

/// Everything goes through one writer, after the work is done.
fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), Failure> {
    match &cfg.output.path {
        Some(path) => std::fs::write(path, bytes).map_err(|e| {
            Error::Io(snsqkd::error::IoError {
                kind: e.kind(),
                message: format!("{}: {e}", path.display()),
            })
        })?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn protocol(variant: Variant, p: f64, mu: f64, delta: f64) -> snsqkd::Result<ProtocolParams> {
    let delta = if variant.uses_delta() { delta } else { PI };
    ProtocolParams::new(p, mu, delta, variant.phases())
}

pub fn rate(
    cfg: &RunConfig,
    loss: f64,
    variant: &str,
    p: f64,
    mu: f64,
    delta: f64,
) -> Result<(), Failure> {
    let variant: Variant = variant.parse()?;
    let proto = protocol(variant, p, mu, delta)?;
    let ch = ChannelPoint::from_loss_db(loss, &cfg.device)?;
    let b = key_rate(&cfg.device, &ch, &proto, variant)?;
    let mut s = String::new();
    writeln!(s, "loss_db = {}", fmt_float(loss)).unwrap();
    writeln!(s, "p = {}", fmt_float(proto.p_send)).unwrap();
    writeln!(s, "mu = {}", fmt_float(proto.mu)).unwrap();
    if variant.uses_delta() {
        writeln!(s, "delta = {}", fmt_float(proto.delta)).unwrap();
    }
    s.push_str(&format_breakdown(&b));
    emit(cfg, s.as_bytes())
}

pub fn optimize(cfg: &RunConfig, loss: f64, variant: &str, trace: bool) -> Result<(), Failure> {
    let variant: Variant = variant.parse()?;
    let ch = ChannelPoint::from_loss_db(loss, &cfg.device)?;
    let mut settings = cfg.optimizer.settings();
    settings.keep_trace = trace;
    let r = optimize_point_with(&cfg.device, &ch, variant, &settings, None)?;
    let mut s = String::new();
    if trace {
        writeln!(s, "# p, mu, delta, rate").unwrap();
        for e in &r.trace {
            let p = e.params;
            writeln!(
                s,
                "# {}, {}, {}, {}",
                fmt_float(p.p_send),
                fmt_float(p.mu),
                fmt_float(p.delta),
                fmt_float(e.rate)
            )
            .unwrap();
        }
    }
    writeln!(s, "loss_db = {}", fmt_float(loss)).unwrap();
    writeln!(s, "p_opt = {}", fmt_float(r.best_params.p_send)).unwrap();
    writeln!(s, "mu_opt = {}", fmt_float(r.best_params.mu)).unwrap();
    if variant.uses_delta() {
        writeln!(s, "delta_opt = {}", fmt_float(r.best_params.delta)).unwrap();
    }
    writeln!(s, "evaluations = {}", r.evaluations).unwrap();
    writeln!(s, "converged = {}", r.converged).unwrap();
    s.push_str(&format_breakdown(&r.breakdown));
    emit(cfg, s.as_bytes())
}

pub fn sweep(cfg: &RunConfig, variants: &[String], losses: &[f64]) -> Result<(), Failure> {
    let variants: Vec<Variant> = if variants.is_empty() {
        cfg.variants.clone()
    } else {
        variants
            .iter()
            .map(|v| v.parse())
            .collect::<snsqkd::Result<_>>()?
    };
    let losses = if losses.is_empty() {
        cfg.losses.points()?
    } else {
        losses.to_vec()
    };
    let rows = run_sweep(
        &cfg.device,
        &losses,
        &variants,
        &cfg.optimizer.settings(),
        cfg.optimizer.start,
    )?;
    let mut buf = Vec::new();
    match cfg.output.format {
        OutputFormat::Csv => write_sweep_csv(&rows, &mut buf)?,
        OutputFormat::Json => write_sweep_json(&rows, &mut buf)?,
    }
    emit(cfg, &buf)
}

fn check_line(s: &mut String, c: &Check) {
    writeln!(
        s,
        "  {:<20} analytic {} sampled {} z {:+.3} {}",
        c.quantity,
        fmt_float(c.analytic),
        fmt_float(c.sampled),
        c.z,
        if c.pass { "PASS" } else { "FAIL" }
    )
    .unwrap();
}

/// Point `k` uses seed `mc.seed + k`; the Fock checks use further offsets.
pub fn validate(cfg: &RunConfig, corrupt: Option<f64>) -> Result<(), Failure> {
    let n = cfg.mc.rounds;
    let mut s = String::new();
    let mut total = 0;
    let mut failed = 0;
    let mut worst = 0.0f64;
    writeln!(s, "rounds = {n}").unwrap();
    writeln!(s, "seed = {}", cfg.mc.seed).unwrap();
    for (k, pt) in cfg.mc.points.iter().enumerate() {
        let proto = pt.protocol()?;
        let ch = ChannelPoint::from_loss_db(pt.loss_db, &cfg.device)?;
        let seed = cfg.mc.seed.wrapping_add(k as u64);
        let mc = simulate(&cfg.device, &ch, &proto, n, seed)?;
        let mut checks = validate_summary(&cfg.device, &ch, &proto, &mc)?;
        for (j, phase) in [(1, 0.0), (2, 0.0)] {
            let fock_seed = seed.wrapping_add(1_000_003 * j as u64);
            let est = simulate_fock(&cfg.device, &ch, j, phase, n, fock_seed)?;
            let truth = fock_click_analytic(&cfg.device, &ch, j, phase)?;
            checks.push(Check::new(format!("Fock j={j}"), truth, &est));
        }
        if let Some(f) = corrupt {
            checks = checks
                .into_iter()
                .map(|c| {
                    if c.trials > 0 {
                        c.against(c.analytic * f)
                    } else {
                        c
                    }
                })
                .collect();
        }
        writeln!(
            s,
            "point {}: loss_db = {} variant = {} p = {} mu = {}{}",
            k + 1,
            pt.loss_db,
            pt.variant,
            pt.p,
            pt.mu,
            if pt.variant.uses_delta() {
                format!(" delta = {}", pt.delta)
            } else {
                String::new()
            }
        )
        .unwrap();
        for c in &checks {
            check_line(&mut s, c);
            total += 1;
            failed += usize::from(!c.pass);
            if c.z.is_finite() {
                worst = worst.max(c.z.abs());
            }
        }
    }
    writeln!(s, "checks = {total}").unwrap();
    writeln!(s, "failed = {failed}").unwrap();
    writeln!(s, "max_abs_z = {worst:.3}").unwrap();
    emit(cfg, s.as_bytes())?;
    if failed > 0 {
        return Err(Failure::Validation(failed));
    }
    Ok(())
}

pub struct DecoyRun {
    pub dataset: Option<PathBuf>,
    pub synthesize: bool,
    pub intensities: Vec<f64>,
    pub loss: Option<f64>,
    pub variant: String,
    pub p: f64,
    pub mu: f64,
    pub delta: f64,
    pub j_max: usize,
}

pub fn decoy(cfg: &RunConfig, run: &DecoyRun) -> Result<(), Failure> {
    let variant: Variant = run.variant.parse()?;
    if variant.is_aopp() || variant == Variant::Sns {
        return Err(Error::Config(format!(
            "decoy bounds need a postselection variant, got `{variant}`"
        ))
        .into());
    }
    let proto = protocol(variant, run.p, run.mu, run.delta)?;
    // discrete phases sift on the exact match
    let half = if variant.phases() == Phases::Continuous {
        run.delta
    } else {
        0.0
    };
    let ch = run
        .loss
        .map(|l| ChannelPoint::from_loss_db(l, &cfg.device))
        .transpose()?;

    let ds = if run.synthesize {
        let ch = ch.expect("clap requires --loss");
        let ds = synthetic_dataset(&cfg.device, &ch, half, &run.intensities);
        ds.validate()?;
        if cfg.output.path.is_some() {
            let mut buf = Vec::new();
            ds.write(&mut buf)?;
            emit(cfg, &buf)?;
        }
        ds
    } else {
        let path = run.dataset.as_ref().expect("clap requires a dataset");
        DecoyDataset::from_path(path).map_err(|e| match e {
            Error::Io(io) => Error::Io(snsqkd::error::IoError {
                kind: io.kind,
                message: format!("{}: {}", path.display(), io.message),
            }),
            other => other,
        })?
    };

    let mut s = String::new();
    writeln!(s, "intensities = {:?}", ds.intensities()).unwrap();
    writeln!(s, "j_max = {}", run.j_max).unwrap();
    for det in [Detector::Right, Detector::Left] {
        if ds.for_detector(det).next().is_none() {
            continue;
        }
        let b = solve_yield_bounds(&ds, det, run.j_max)?;
        let truth = match (run.synthesize, ch) {
            (true, Some(ch)) => Some(TrueYields::new(&cfg.device, &ch, det, half)),
            _ => None,
        };
        writeln!(s, "[{det}]").unwrap();
        if !ds.is_well_posed(det) {
            writeln!(
                s,
                "note = fewer than two non-zero intensities plus vacuum; bounds are trivial"
            )
            .unwrap();
        }
        for (t, iv) in b.entries() {
            write!(s, "{t} = [{}, {}]", fmt_float(iv.lo), fmt_float(iv.hi)).unwrap();
            if let Some(tr) = &truth {
                write!(s, " truth {}", fmt_float(tr.target(t))).unwrap();
            }
            s.push('\n');
        }
        let two = b.two_photon();
        write!(
            s,
            "superposition[2] = [{}, {}]",
            fmt_float(two.lo),
            fmt_float(two.hi)
        )
        .unwrap();
        if let Some(tr) = &truth {
            write!(s, " truth {}", fmt_float(tr.superposition(2))).unwrap();
        }
        s.push('\n');
        let finite = conservative_phase_error(&b, &proto)?.bound();
        writeln!(s, "P_ph finite decoy = {}", fmt_float(finite)).unwrap();
        if let Some(ch) = ch {
            let inf = phase_error_bound_for(det, &cfg.device, &ch, &proto)?.bound();
            writeln!(s, "P_ph infinite decoy = {}", fmt_float(inf)).unwrap();
            writeln!(s, "P_ph ratio = {}", fmt_float(finite / inf)).unwrap();
        }
    }
    if run.synthesize && cfg.output.path.is_some() {
        std::io::stdout().write_all(s.as_bytes())?;
        Ok(())
    } else {
        emit(cfg, s.as_bytes())
    }
}
