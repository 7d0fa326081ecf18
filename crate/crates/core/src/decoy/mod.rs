//! Finite-decoy bounds on the superposition yields used by the phase-error
//! bounds.
//!
//! Matched and opposite phase classes give the two-photon supermode yields
//! `P(+)` and `P(-)`, the independent class gives product-state yields
//! `Y_jk`, and the superposition yields follow from
//! `P(+) + P(-) = Y_11 + P(02/20)` and `P(0j/j0) <= Y_0j + Y_j0`.

mod dataset;
mod lp;

pub use dataset::{DecoyDataset, Observation, SiftClass};
pub use lp::{
    bound_target, build_constraints, ConstraintSystem, Interval, Target, DEFAULT_DECOY_J_MAX,
    GAIN_REL_SLACK, MAX_DUALITY_GAP,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::Result;
use crate::numeric::average;
use crate::phase_error::{
    phase_error_with_yields, FockYieldSet, PhaseErrorBound, YieldSource, DEFAULT_J_MAX, MAX_J_MAX,
};
use crate::physics::clicks::{send_send_click, send_send_click_left};
use crate::physics::{ChannelPoint, Detector, DeviceParams, FockModel, ProtocolParams};

/// `P(+) + P(-) - Y_11` on intervals, clamped to `[0, 1]`.
pub fn combine_two_photon(plus: Interval, minus: Interval, y11: Interval) -> Interval {
    Interval::new(plus.lo + minus.lo - y11.hi, plus.hi + minus.hi - y11.lo)
}

/// `Y_0j + Y_j0`, clamped to 1.
pub fn high_order_upper(y_0j: f64, y_j0: f64) -> f64 {
    (y_0j + y_j0).min(1.0)
}

/// Certified bounds on everything one detector's phase-error bound needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldBounds {
    pub detector: Detector,
    pub j_max: usize,
    pub vacuum: Interval,
    /// One photon in the supermode sifted for this detector.
    pub single: Interval,
    /// Two photons in the sifted supermode.
    pub plus_two: Interval,
    /// Two photons in the orthogonal supermode.
    pub minus_two: Interval,
    pub pair11: Interval,
    /// `Y_0j` at index `j`; entries below 3 are unused and left at `[0, 1]`.
    pub zero_j: Vec<Interval>,
    /// `Y_j0` at index `j`.
    pub j_zero: Vec<Interval>,
}

impl YieldBounds {
    /// Bound on the averaged `(e^{2i delta}|02> + |20>)/sqrt2` yield.
    pub fn two_photon(&self) -> Interval {
        combine_two_photon(self.plus_two, self.minus_two, self.pair11)
    }

    /// Upper bound on the `j`-photon superposition yield, `3 <= j <= j_max`.
    pub fn high_order(&self, j: usize) -> f64 {
        high_order_upper(self.zero_j[j].hi, self.j_zero[j].hi)
    }

    /// Every bounded unknown with its interval, for reporting.
    pub fn entries(&self) -> Vec<(Target, Interval)> {
        let (single, plus, minus) = self.targets();
        let mut v = vec![
            (Target::Vacuum, self.vacuum),
            (single, self.single),
            (plus, self.plus_two),
            (minus, self.minus_two),
            (Target::Pair(1, 1), self.pair11),
        ];
        for j in 3..=self.j_max {
            v.push((Target::Pair(0, j), self.zero_j[j]));
            v.push((Target::Pair(j, 0), self.j_zero[j]));
        }
        v
    }

    fn targets(&self) -> (Target, Target, Target) {
        sifted_targets(self.detector)
    }

    /// Upper yields for the phase-error bound, up to `j_total`; photon
    /// numbers beyond the program's truncation get the trivial bound 1.
    pub fn to_yield_set(&self, j_total: usize) -> FockYieldSet {
        let mut y = Vec::with_capacity(j_total + 1);
        for j in 0..=j_total {
            y.push(match j {
                0 => (2.0 * self.vacuum.hi).min(2.0),
                1 => self.single.hi,
                2 => self.two_photon().hi,
                j if j <= self.j_max => self.high_order(j),
                _ => 1.0,
            });
        }
        FockYieldSet {
            y_sup: y,
            source: YieldSource::DecoyLp,
        }
    }
}

fn sifted_targets(det: Detector) -> (Target, Target, Target) {
    match det {
        Detector::Right => (Target::Matched(1), Target::Matched(2), Target::Opposite(2)),
        Detector::Left => (Target::Opposite(1), Target::Opposite(2), Target::Matched(2)),
    }
}

/// Solve every bound `det` needs from `ds`.
pub fn solve_yield_bounds(ds: &DecoyDataset, det: Detector, j_max: usize) -> Result<YieldBounds> {
    let sys = build_constraints(ds, det, j_max)?;
    let (single, plus, minus) = sifted_targets(det);
    let mut targets = vec![Target::Vacuum, single, plus, minus, Target::Pair(1, 1)];
    for j in 3..=j_max {
        targets.push(Target::Pair(0, j));
        targets.push(Target::Pair(j, 0));
    }
    let solved: Vec<Interval> = targets
        .par_iter()
        .map(|&t| bound_target(&sys, t))
        .collect::<Result<_>>()?;
    let mut zero_j = vec![Interval::UNIT; j_max + 1];
    let mut j_zero = vec![Interval::UNIT; j_max + 1];
    for (i, j) in (3..=j_max).enumerate() {
        zero_j[j] = solved[5 + 2 * i];
        j_zero[j] = solved[6 + 2 * i];
    }
    Ok(YieldBounds {
        detector: det,
        j_max,
        vacuum: solved[0],
        single: solved[1],
        plus_two: solved[2],
        minus_two: solved[3],
        pair11: solved[4],
        zero_j,
        j_zero,
    })
}

/// Phase-error bound from decoy yields, doubling the total truncation as
/// needed.
pub fn conservative_phase_error(
    bounds: &YieldBounds,
    proto: &ProtocolParams,
) -> Result<PhaseErrorBound> {
    let mut j_total = DEFAULT_J_MAX.max(bounds.j_max);
    loop {
        match phase_error_with_yields(proto, &bounds.to_yield_set(j_total)) {
            Err(crate::Error::TruncationTooShallow { .. }) if j_total < MAX_J_MAX => j_total *= 2,
            other => return other,
        }
    }
}

/// Noise-free gains of the click model: for every intensity, the matched,
/// opposite and independent classes on both detectors. `half` is the
/// sifting half-width; 0 means exact phase matching.
pub fn synthetic_dataset(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    half: f64,
    intensities: &[f64],
) -> DecoyDataset {
    let mut entries = Vec::new();
    for &nu in intensities {
        for det in [Detector::Right, Detector::Left] {
            if nu == 0.0 {
                entries.push(Observation {
                    intensity: 0.0,
                    class: SiftClass::Independent,
                    detector: det,
                    gain: dev.dark,
                });
                continue;
            }
            let click = |x: f64| match det {
                Detector::Right => send_send_click(dev, ch, nu, x),
                Detector::Left => send_send_click_left(dev, ch, nu, x),
            };
            for (class, gain) in [
                (SiftClass::Matched, average(click, -half, half)),
                (SiftClass::Opposite, average(click, PI - half, PI + half)),
                (SiftClass::Independent, average(click, 0.0, 2.0 * PI)),
            ] {
                entries.push(Observation {
                    intensity: nu,
                    class,
                    detector: det,
                    gain,
                });
            }
        }
    }
    DecoyDataset { entries }
}

/// Exact yields behind [`synthetic_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct TrueYields {
    model: FockModel,
    det: Detector,
    half: f64,
}

impl TrueYields {
    pub fn new(dev: &DeviceParams, ch: &ChannelPoint, det: Detector, half: f64) -> Self {
        TrueYields {
            model: FockModel::new(dev, ch),
            det,
            half,
        }
    }

    fn center(&self) -> f64 {
        match self.det {
            Detector::Right => 0.0,
            Detector::Left => PI,
        }
    }

    pub fn target(&self, t: Target) -> f64 {
        match t {
            Target::Vacuum => self.model.pair_yield(0, 0),
            Target::Matched(n) => self.model.supermode_yield_avg(self.det, n, 0.0, self.half),
            Target::Opposite(n) => self.model.supermode_yield_avg(self.det, n, PI, self.half),
            Target::Pair(j, k) => self.model.pair_yield(j, k),
        }
    }

    /// Averaged `(e^{ij delta}|0j> + |j0>)/sqrt2` yield over the window this
    /// detector sifts.
    pub fn superposition(&self, j: usize) -> f64 {
        self.model
            .superposition_yield_avg(self.det, j, 1.0, self.center(), self.half)
    }
}
