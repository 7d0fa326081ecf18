//! Maximisation of the key rate over `(p, mu, delta)` and loss sweeps.
//!
//! Each point starts from a coarse grid in log coordinates, then runs
//! coordinate descent with golden-section line searches. The objective is the
//! unclamped per-detector rate, so the search still has a slope to follow
//! where the clamped rate is zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::keyrate::{key_rate, RateBreakdown, Variant};
use crate::physics::{ChannelPoint, DeviceParams, ProtocolParams};

/// Smallest rate counted as positive when reading off distances.
pub const RATE_FLOOR: f64 = 1e-12;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Search box; all bounds must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub p: (f64, f64),
    pub mu: (f64, f64),
    pub delta: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox {
            p: (1e-3, 0.5),
            mu: (1e-3, 1.0),
            delta: (1e-3, PI / 2.0),
        }
    }
}

impl SearchBox {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), cap) in [
            ("p", self.p, 1.0),
            ("mu", self.mu, f64::INFINITY),
            ("delta", self.delta, PI),
        ] {
            if !(lo > 0.0 && lo <= hi && hi <= cap && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "search range for {name} must satisfy 0 < lo <= hi <= {cap}, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn contains(&self, proto: &ProtocolParams, uses_delta: bool) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        within(proto.p_send, self.p)
            && within(proto.mu, self.mu)
            && (!uses_delta || within(proto.delta, self.delta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub bounds: SearchBox,
    /// Coarse-grid points per axis.
    pub grid_points: usize,
    /// Stop once a full descent sweep improves the rate by less than this,
    /// relative.
    pub rel_tol: f64,
    pub max_sweeps: usize,
    /// Keep every evaluation in [`OptimizationResult::trace`].
    pub keep_trace: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            bounds: SearchBox::default(),
            grid_points: 13,
            rel_tol: 1e-7,
            max_sweeps: 60,
            keep_trace: false,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config("rel_tol must lie in (0, 1)".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: ProtocolParams,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub variant: Variant,
    pub best_params: ProtocolParams,
    /// Total rate (bits per round) at `best_params`.
    pub best_rate: f64,
    pub breakdown: RateBreakdown,
    /// Every evaluation, when requested.
    pub trace: Vec<Evaluation>,
    pub evaluations: usize,
    /// False when no positive rate was found or the sweep cap was hit.
    pub converged: bool,
}

/// Outcome of [`maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    /// Maximiser in the original (not logarithmic) coordinates.
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Tolerance reached within the sweep cap.
    pub converged: bool,
}

/// Maximises `f` over the box `bounds` in log coordinates: a coarse grid of
/// `grid_points` per axis (skipped when `start` is given), then coordinate
/// descent with golden-section searches over one grid step either side of
/// the current point.
pub fn maximize<F>(
    f: F,
    bounds: &[(f64, f64)],
    settings: &OptimizerSettings,
    start: Option<&[f64]>,
) -> Maximum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = bounds.len();
    let mut f = f;
    let mut evals = 0usize;
    let log_bounds: Vec<(f64, f64)> = bounds.iter().map(|&(lo, hi)| (lo.ln(), hi.ln())).collect();
    let step: Vec<f64> = log_bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) / (settings.grid_points - 1) as f64)
        .collect();
    let mut eval = |u: &[f64], evals: &mut usize| {
        *evals += 1;
        let x: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let v = f(&x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let (mut u, mut best) = match start {
        Some(s) => {
            let u: Vec<f64> = s
                .iter()
                .zip(&log_bounds)
                .map(|(&x, &(lo, hi))| x.ln().clamp(lo, hi))
                .collect();
            let v = eval(&u, &mut evals);
            (u, v)
        }
        None => {
            let mut best_u = log_bounds.iter().map(|b| b.0).collect::<Vec<_>>();
            let mut best_v = f64::NEG_INFINITY;
            let total = settings.grid_points.pow(dim as u32);
            let mut u = vec![0.0; dim];
            for idx in 0..total {
                let mut rest = idx;
                for (k, uk) in u.iter_mut().enumerate() {
                    let i = rest % settings.grid_points;
                    rest /= settings.grid_points;
                    *uk = if i + 1 == settings.grid_points {
                        log_bounds[k].1
                    } else {
                        log_bounds[k].0 + i as f64 * step[k]
                    };
                }
                let v = eval(&u, &mut evals);
                if v > best_v {
                    best_v = v;
                    best_u.clone_from(&u);
                }
            }
            (best_u, best_v)
        }
    };

    let mut converged = false;
    for _ in 0..settings.max_sweeps {
        let before = best;
        for k in 0..dim {
            let lo = (u[k] - step[k]).max(log_bounds[k].0);
            let hi = (u[k] + step[k]).min(log_bounds[k].1);
            if hi <= lo {
                continue;
            }
            let mut line = |t: f64, evals: &mut usize| {
                let mut w = u.clone();
                w[k] = t;
                eval(&w, evals)
            };
            let (mut a, mut b) = (lo, hi);
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut fc = line(c, &mut evals);
            let mut fd = line(d, &mut evals);
            while b - a > 1e-7 * (1.0 + u[k].abs()) {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = line(c, &mut evals);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = line(d, &mut evals);
                }
            }
            // the bracket ends are never sampled by the search itself
            let mut cands = vec![(fc, c), (fd, d)];
            if lo == log_bounds[k].0 {
                cands.push((line(lo, &mut evals), lo));
            }
            if hi == log_bounds[k].1 {
                cands.push((line(hi, &mut evals), hi));
            }
            for (v, t) in cands {
                if v > best {
                    best = v;
                    u[k] = t;
                }
            }
        }
        let gain = best - before;
        if gain <= settings.rel_tol * best.abs() || !best.is_finite() {
            converged = best.is_finite();
            break;
        }
    }
    Maximum {
        x: u.iter().map(|v| v.exp()).collect(),
        value: best,
        evaluations: evals,
        converged,
    }
}

fn params_from(variant: Variant, x: &[f64]) -> ProtocolParams {
    ProtocolParams {
        p_send: x[0],
        mu: x[1],
        delta: if variant.uses_delta() { x[2] } else { PI },
        phases: variant.phases(),
    }
}

/// Optimum of one variant at one channel point with default settings.
pub fn optimize_point(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    variant: Variant,
) -> Result<OptimizationResult> {
    optimize_point_with(dev, ch, variant, &OptimizerSettings::default(), None)
}

/// Optimum of one variant at one channel point. With `start`, the coarse
/// grid is skipped and the descent begins at `start`.
pub fn optimize_point_with(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    variant: Variant,
    settings: &OptimizerSettings,
    start: Option<&ProtocolParams>,
) -> Result<OptimizationResult> {
    dev.validate()?;
    settings.validate()?;
    let b = settings.bounds;
    let mut axes = vec![b.p, b.mu];
    if variant.uses_delta() {
        axes.push(b.delta);
    }
    let start_x = start.map(|s| {
        let mut v = vec![s.p_send, s.mu];
        if variant.uses_delta() {
            v.push(s.delta);
        }
        v
    });
    let mut trace = Vec::new();
    let mut first_err = None;
    let m = maximize(
        |x| {
            let proto = params_from(variant, x);
            match key_rate(dev, ch, &proto, variant) {
                Ok(r) => {
                    if settings.keep_trace {
                        trace.push(Evaluation {
                            params: proto,
                            rate: r.r_total,
                        });
                    }
                    r.r_raw
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            }
        },
        &axes,
        settings,
        start_x.as_deref(),
    );
    if !m.value.is_finite() {
        return Err(first_err.unwrap_or(Error::DegenerateClicks));
    }
    let best_params = params_from(variant, &m.x);
    let breakdown = key_rate(dev, ch, &best_params, variant)?;
    debug_assert!(b.contains(&best_params, variant.uses_delta()));
    Ok(OptimizationResult {
        variant,
        best_params,
        best_rate: breakdown.r_total,
        converged: m.converged && breakdown.r_total > 0.0,
        breakdown,
        trace,
        evaluations: m.evaluations,
    })
}

/// How a sweep seeds each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// From the previous point's optimum, with a cold restart when that
    /// finds no positive rate.
    Warm,
    /// Every point from the coarse grid.
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub loss_db: f64,
    pub result: OptimizationResult,
}

/// Curves for every variant over `losses`, which must be strictly
/// increasing. Variants run in parallel; rows come back ordered by loss,
/// then by the given variant order.
///
/// Once two consecutive points of a variant have zero rate, the remaining
/// points of that variant are evaluated at the last parameters only: the
/// optimised rate does not increase with loss.
pub fn sweep(
    dev: &DeviceParams,
    losses: &[f64],
    variants: &[Variant],
    settings: &OptimizerSettings,
    mode: StartMode,
) -> Result<Vec<SweepRow>> {
    if !losses.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Config(
            "loss grid must be strictly increasing".into(),
        ));
    }
    let per_variant: Vec<Vec<SweepRow>> = variants
        .par_iter()
        .map(|&v| sweep_variant(dev, losses, v, settings, mode))
        .collect::<Result<_>>()?;
    let mut columns: Vec<_> = per_variant.into_iter().map(Vec::into_iter).collect();
    let mut rows = Vec::with_capacity(losses.len() * variants.len());
    for _ in losses {
        rows.extend(
            columns
                .iter_mut()
                .map(|c| c.next().expect("one row per loss")),
        );
    }
    Ok(rows)
}

fn sweep_variant(
    dev: &DeviceParams,
    losses: &[f64],
    variant: Variant,
    settings: &OptimizerSettings,
    mode: StartMode,
) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = Vec::with_capacity(losses.len());
    let mut zeros = 0;
    for &loss in losses {
        let ch = ChannelPoint::from_loss_db(loss, dev)?;
        let prev = rows.last().map(|r| r.result.best_params);
        let result = if zeros >= 2 {
            let params = prev.expect("zero rows imply a previous row");
            let breakdown = key_rate(dev, &ch, &params, variant)?;
            OptimizationResult {
                variant,
                best_params: params,
                best_rate: breakdown.r_total,
                breakdown,
                trace: Vec::new(),
                evaluations: 1,
                converged: false,
            }
        } else {
            match (mode, prev) {
                (StartMode::Warm, Some(p)) => {
                    let warm = optimize_point_with(dev, &ch, variant, settings, Some(&p))?;
                    if warm.best_rate > 0.0 {
                        warm
                    } else {
                        optimize_point_with(dev, &ch, variant, settings, None)?
                    }
                }
                _ => optimize_point_with(dev, &ch, variant, settings, None)?,
            }
        };
        zeros = if result.best_rate > 0.0 { 0 } else { zeros + 1 };
        rows.push(SweepRow {
            loss_db: loss,
            result,
        });
    }
    Ok(rows)
}

/// Largest loss in `rows` at which `variant` has rate above [`RATE_FLOOR`].
pub fn max_distance(rows: &[SweepRow], variant: Variant) -> Option<f64> {
    rows.iter()
        .filter(|r| r.result.variant == variant && r.result.best_rate > RATE_FLOOR)
        .map(|r| r.loss_db)
        .max_by(f64::total_cmp)
}

/// Evenly spaced grid `start, start + step, ..` up to `stop` inclusive.
pub fn loss_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start >= 0.0 && stop >= start && stop.is_finite()) {
        return Err(Error::Config(format!(
            "loss grid needs 0 <= start <= stop and step > 0, got {start}..{stop} by {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}
