//! Upper bounds on the phase-error probability `P_ph` of sifted right (or
//! left) clicks, for continuous and discrete phase randomisation.
//!
//! All bounds are `p(1-p)` times a Poisson-weighted functional of the
//! superposition yields `Y_j`, the click rates of
//! `(e^{ij delta}|0j> + |j0>)/sqrt2`. Discrete phases add Cauchy–Schwarz
//! cross terms between photon numbers in the same residue class mod `M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{poisson_tail_bound, poisson_weights, sqrt_poisson_tail_bound};
use crate::physics::{
    click_multi_photon_upper, click_two_photon, ChannelPoint, Detector, DeviceParams, Phases,
    ProtocolParams,
};

/// Default truncation depth of the photon-number sums.
pub const DEFAULT_J_MAX: usize = 20;
/// Largest truncation the auto-doubling search will try.
pub const MAX_J_MAX: usize = 640;
/// The tail may be at most this fraction of the truncated value.
pub const TAIL_REL_LIMIT: f64 = 1e-9;

/// Square roots of yields below this are treated as 0.
const SQRT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YieldSource {
    Analytic,
    DecoyLp,
}

/// Superposition yields `y_sup[j]`, `j = 0..=j_max`, already averaged over
/// the sifting window. `y_sup[0]` is the click rate of the unnormalised
/// `|00> + |00>`, i.e. `2d` for dark counts `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockYieldSet {
    pub y_sup: Vec<f64>,
    pub source: YieldSource,
}

impl FockYieldSet {
    pub fn new(y_sup: Vec<f64>, source: YieldSource) -> Result<Self> {
        if y_sup.is_empty() {
            return Err(Error::InvalidParameter {
                name: "y_sup",
                value: 0.0,
                reason: "need at least the vacuum yield",
            });
        }
        for (j, &y) in y_sup.iter().enumerate() {
            // the vacuum entry is a doubled state and may reach 2
            let cap = if j == 0 { 2.0 } else { 1.0 };
            if !(0.0..=cap).contains(&y) {
                return Err(Error::InvalidParameter {
                    name: "y_sup",
                    value: y,
                    reason: "yields must lie in [0, 1]",
                });
            }
        }
        Ok(FockYieldSet { y_sup, source })
    }

    /// Every yield set to 1; the all-clicks worst case.
    pub fn saturated(j_max: usize) -> Self {
        FockYieldSet {
            y_sup: vec![1.0; j_max + 1],
            source: YieldSource::Analytic,
        }
    }

    /// Right-detector yields from the click model.
    pub fn analytic(
        dev: &DeviceParams,
        ch: &ChannelPoint,
        proto: &ProtocolParams,
        j_max: usize,
    ) -> Self {
        Self::analytic_for(Detector::Right, dev, ch, proto, j_max)
    }

    /// Model yields for either detector. Continuous phases average the
    /// single-photon term over the window around 0 (right) or `pi` (left);
    /// discrete phases evaluate it at the exact match.
    pub fn analytic_for(
        det: Detector,
        dev: &DeviceParams,
        ch: &ChannelPoint,
        proto: &ProtocolParams,
        j_max: usize,
    ) -> Self {
        let mut y = Vec::with_capacity(j_max + 1);
        y.push(2.0 * dev.dark);
        if j_max >= 1 {
            let half = match proto.phases {
                Phases::Continuous => proto.delta,
                Phases::Two | Phases::Four => 0.0,
            };
            y.push(match det {
                Detector::Right => avg_yield_single(dev, ch, half),
                Detector::Left => avg_yield_single_left(dev, ch, half),
            });
        }
        if j_max >= 2 {
            y.push(click_two_photon(dev, ch));
        }
        for j in 3..=j_max {
            y.push(click_multi_photon_upper(dev, ch, j).expect("j >= 3"));
        }
        FockYieldSet {
            y_sup: y,
            source: YieldSource::Analytic,
        }
    }

    pub fn j_max(&self) -> usize {
        self.y_sup.len() - 1
    }
}

/// A truncated sum and a rigorous bound on what was cut off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorBound {
    pub value: f64,
    pub tail_bound: f64,
    pub j_max: usize,
}

impl PhaseErrorBound {
    /// `value + tail_bound`, the reported upper bound.
    pub fn bound(&self) -> f64 {
        self.value + self.tail_bound
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Right-click rate of `(e^{i delta}|01> + |10>)/sqrt2` averaged over
/// `delta` in `[-half, half]`; `half = 0` is the exact phase match.
pub fn avg_yield_single(dev: &DeviceParams, ch: &ChannelPoint, half: f64) -> f64 {
    let c = sinc(half);
    let e = dev.misalign;
    let wrong = 0.5 * (1.0 - c) * (1.0 - e) + 0.5 * (1.0 + c) * e;
    (dev.dark + ch.arm_eta * (1.0 - dev.dark) * wrong).clamp(0.0, 1.0)
}

/// Left-click rate of `(e^{i phi}|01> + |10>)/sqrt2` averaged over `phi` in
/// `[pi - half, pi + half]`.
fn avg_yield_single_left(dev: &DeviceParams, ch: &ChannelPoint, half: f64) -> f64 {
    // mean of cos(phi) over the window is cos(pi) sinc(half)
    let mean_cos = -sinc(half);
    let e = dev.misalign;
    let to_left = (1.0 - e) * 0.5 * (1.0 + mean_cos) + e * 0.5 * (1.0 - mean_cos);
    let t = ch.arm_eta;
    (t * (1.0 - (1.0 - to_left) * (1.0 - dev.dark)) + (1.0 - t) * dev.dark).clamp(0.0, 1.0)
}

fn guard(value: f64, tail: f64, j_max: usize) -> Result<PhaseErrorBound> {
    if tail > TAIL_REL_LIMIT * value {
        return Err(Error::TruncationTooShallow { j_max, tail, value });
    }
    Ok(PhaseErrorBound {
        value,
        tail_bound: tail,
        j_max,
    })
}

fn pair_factor(proto: &ProtocolParams) -> f64 {
    proto.p_send * (1.0 - proto.p_send)
}

/// `p(1-p) sum_j e^{-mu} mu^j / j! * Y_j`, the diagonal part shared by all
/// variants; with window-averaged yields it is the continuous bound.
pub fn phase_error_continuous(
    proto: &ProtocolParams,
    yields: &FockYieldSet,
) -> Result<PhaseErrorBound> {
    let j_max = yields.j_max();
    let pf = pair_factor(proto);
    let w = poisson_weights(proto.mu, j_max);
    let value = pf * w.iter().zip(&yields.y_sup).map(|(w, y)| w * y).sum::<f64>();
    let tail = pf * 2.0 * poisson_tail_bound(proto.mu, j_max);
    if pf == 0.0 {
        return Ok(PhaseErrorBound {
            value: 0.0,
            tail_bound: 0.0,
            j_max,
        });
    }
    guard(value, tail, j_max)
}

/// Sum over residue classes `r mod m` of `(sum_{j = r mod m} sqrt(w_j Y_j))^2`,
/// split as diagonal plus cross terms. Returns `(diagonal, cross, class_sums)`.
pub(crate) fn residue_class_sums(w: &[f64], y: &[f64], m: usize) -> (f64, f64, Vec<f64>) {
    let mut sums = vec![0.0; m];
    let mut squares = vec![0.0; m];
    let mut diagonal = 0.0;
    for (j, (&wj, &yj)) in w.iter().zip(y).enumerate() {
        let root_y = if yj < SQRT_FLOOR { 0.0 } else { yj.sqrt() };
        let ab = wj.sqrt() * root_y;
        sums[j % m] += ab;
        squares[j % m] += ab * ab;
        diagonal += wj * yj;
    }
    let cross = sums
        .iter()
        .zip(&squares)
        .map(|(s, q)| (s * s - q).max(0.0))
        .sum();
    (diagonal, cross, sums)
}

fn phase_error_discrete(
    proto: &ProtocolParams,
    yields: &FockYieldSet,
    m: usize,
) -> Result<PhaseErrorBound> {
    let j_max = yields.j_max();
    let pf = pair_factor(proto);
    if pf == 0.0 {
        return Ok(PhaseErrorBound {
            value: 0.0,
            tail_bound: 0.0,
            j_max,
        });
    }
    let w = poisson_weights(proto.mu, j_max);
    let (diagonal, cross, sums) = residue_class_sums(&w, &yields.y_sup, m);
    // per-class share of the cut-off sqrt(w_j Y_j) with Y_j <= 2
    let t = std::f64::consts::SQRT_2 * sqrt_poisson_tail_bound(proto.mu, j_max);
    let tail: f64 = sums.iter().map(|s| (s + t).powi(2) - s * s).sum();
    guard(pf * (diagonal + cross), pf * tail, j_max)
}

/// Two-phase bound: cross terms between photon numbers of equal parity.
pub fn phase_error_m2(proto: &ProtocolParams, yields: &FockYieldSet) -> Result<PhaseErrorBound> {
    phase_error_discrete(proto, yields, 2)
}

/// Four-phase bound: cross terms within residue classes mod 4.
pub fn phase_error_m4(proto: &ProtocolParams, yields: &FockYieldSet) -> Result<PhaseErrorBound> {
    phase_error_discrete(proto, yields, 4)
}

/// Bound matching `proto.phases`, from yields the caller supplies.
pub fn phase_error_with_yields(
    proto: &ProtocolParams,
    yields: &FockYieldSet,
) -> Result<PhaseErrorBound> {
    match proto.phases {
        Phases::Continuous => phase_error_continuous(proto, yields),
        Phases::Two => phase_error_m2(proto, yields),
        Phases::Four => phase_error_m4(proto, yields),
    }
}

/// Model-yield bound for one detector, starting at [`DEFAULT_J_MAX`] and
/// doubling the truncation until the tail is negligible.
pub fn phase_error_bound_for(
    det: Detector,
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<PhaseErrorBound> {
    let mut j_max = DEFAULT_J_MAX;
    loop {
        let yields = FockYieldSet::analytic_for(det, dev, ch, proto, j_max);
        match phase_error_with_yields(proto, &yields) {
            Err(Error::TruncationTooShallow { .. }) if j_max < MAX_J_MAX => j_max *= 2,
            other => return other,
        }
    }
}

/// Right-click bound with model yields.
pub fn phase_error_bound(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<PhaseErrorBound> {
    phase_error_bound_for(Detector::Right, dev, ch, proto)
}

/// Left-click bound with model yields; coincides with the right-click bound
/// for the symmetric channel.
pub fn left_click_phase_error(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<PhaseErrorBound> {
    phase_error_bound_for(Detector::Left, dev, ch, proto)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::average;
    use crate::physics::click_single_photon;
    use std::f64::consts::PI;

    fn table(loss: f64) -> (DeviceParams, ChannelPoint) {
        let dev = DeviceParams::REFERENCE;
        (dev, ChannelPoint::from_loss_db(loss, &dev).unwrap())
    }

    #[test]
    fn single_yield_limits_and_quadrature() {
        let (dev, ch) = table(20.0);
        let at_zero = click_single_photon(&dev, &ch, 0.0);
        assert!((avg_yield_single(&dev, &ch, 1e-9) - at_zero).abs() < 1e-18);
        let flat = dev.dark + ch.arm_eta * (1.0 - dev.dark) * 0.5;
        assert!((avg_yield_single(&dev, &ch, PI) - flat).abs() < 1e-16);
        let quad = average(|x| click_single_photon(&dev, &ch, x), -0.2, 0.2);
        assert!((avg_yield_single(&dev, &ch, 0.2) - quad).abs() <= 1e-10 * quad);
    }

    #[test]
    fn vacuum_only_limit() {
        let (dev, ch) = table(20.0);
        let expect = 2.0 * 0.3 * 0.7 * dev.dark;
        let proto = ProtocolParams::continuous(0.3, 0.0, 0.2).unwrap();
        assert_eq!(phase_error_bound(&dev, &ch, &proto).unwrap().value, expect);
        let proto = ProtocolParams::continuous(0.3, 1e-15, 0.2).unwrap();
        let b = phase_error_bound(&dev, &ch, &proto).unwrap();
        assert!((b.value - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn zero_prefactor() {
        let (dev, ch) = table(20.0);
        for phases in [Phases::Continuous, Phases::Two, Phases::Four] {
            let proto = ProtocolParams::new(0.0, 0.3, 0.2, phases).unwrap();
            assert_eq!(phase_error_bound(&dev, &ch, &proto).unwrap().bound(), 0.0);
        }
    }

    #[test]
    fn saturated_m2_reduction() {
        let mu: f64 = 0.37;
        let proto = ProtocolParams::discrete(0.2, mu, Phases::Two).unwrap();
        let b = phase_error_m2(&proto, &FockYieldSet::saturated(60)).unwrap();
        let w = poisson_weights(mu, 60);
        let s_e: f64 = w.iter().step_by(2).map(|x| x.sqrt()).sum();
        let s_o: f64 = w.iter().skip(1).step_by(2).map(|x| x.sqrt()).sum();
        let closed = 0.2
            * 0.8
            * (1.0 + (s_e * s_e - (-mu).exp() * mu.cosh()) + (s_o * s_o - (-mu).exp() * mu.sinh()));
        assert!((b.value - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn dark_only_cross_terms_vanish() {
        let mut y = vec![0.0; 21];
        y[0] = 1e-11;
        let ys = FockYieldSet::new(y, YieldSource::Analytic).unwrap();
        let (diag, cross, _) = residue_class_sums(&poisson_weights(0.5, 20), &ys.y_sup, 2);
        assert_eq!(cross, 0.0);
        assert!((diag - (-0.5f64).exp() * 1e-11).abs() < 1e-25);
    }

    #[test]
    fn cross_term_identity_matches_double_sum() {
        let w = poisson_weights(0.8, 20);
        let y: Vec<f64> = (0..=20).map(|j| 1.0 / (1.0 + j as f64)).collect();
        for m in [2usize, 4] {
            let (_, cross, _) = residue_class_sums(&w, &y, m);
            let mut explicit = 0.0;
            for j in 0..=20 {
                for k in 0..=20 {
                    if j != k && j % m == k % m {
                        explicit += (w[j] * y[j] * w[k] * y[k]).sqrt();
                    }
                }
            }
            assert!((cross - explicit).abs() < 1e-12 * explicit);
        }
    }

    #[test]
    fn m4_close_to_diagonal_at_small_mu() {
        // leading cross term pairs j = 1 with j = 5: relative gap ~ mu^2
        let (dev, ch) = table(20.0);
        let gap = |mu: f64| {
            let proto = ProtocolParams::discrete(0.3, mu, Phases::Four).unwrap();
            let ys = FockYieldSet::analytic(&dev, &ch, &proto, 20);
            let m4 = phase_error_m4(&proto, &ys).unwrap().value;
            let diag = phase_error_continuous(&proto, &ys).unwrap().value;
            assert!(m4 >= diag);
            (m4 - diag) / diag
        };
        let (g1, g2) = (gap(0.01), gap(0.005));
        assert!(g1 < 5e-4 && g2 < 1e-4);
        assert!((3.0..5.0).contains(&(g1 / g2)), "{}", g1 / g2);
    }

    #[test]
    fn truncation_refused_when_shallow() {
        let (dev, ch) = table(150.0);
        let proto = ProtocolParams::discrete(0.4, 0.8, Phases::Two).unwrap();
        let ys = FockYieldSet::analytic(&dev, &ch, &proto, 4);
        assert!(matches!(
            phase_error_m2(&proto, &ys),
            Err(Error::TruncationTooShallow { j_max: 4, .. })
        ));
        let auto = phase_error_bound(&dev, &ch, &proto).unwrap();
        assert!(auto.j_max >= DEFAULT_J_MAX);
    }

    #[test]
    fn left_mirrors_right() {
        let (dev, ch) = table(30.0);
        for phases in [Phases::Continuous, Phases::Two, Phases::Four] {
            let proto = ProtocolParams::new(0.3, 0.2, 0.4, phases).unwrap();
            let r = phase_error_bound(&dev, &ch, &proto).unwrap().bound();
            let l = left_click_phase_error(&dev, &ch, &proto).unwrap().bound();
            assert!((r - l).abs() <= 1e-14 * r);
        }
    }

    #[test]
    fn rejects_out_of_range_yields() {
        assert!(FockYieldSet::new(vec![0.0, 1.5], YieldSource::DecoyLp).is_err());
        assert!(FockYieldSet::new(vec![], YieldSource::DecoyLp).is_err());
    }
}
