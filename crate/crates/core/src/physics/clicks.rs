//! Click probabilities of the middle station's interferometric measurement.
//!
//! The right detector sits on the destructive port for equal input phases, the
//! left detector on the constructive port. All routines return probabilities
//! clamped to `[0, 1]`.

use std::f64::consts::PI;

use super::params::{ChannelPoint, DeviceParams, Phases, ProtocolParams};
use crate::error::{Error, Result};
use crate::numeric::{average, clamp_prob, threshold_click};

/// Right-click probability for the vacuum pair `|00>`: a dark count.
pub fn click_vacuum(dev: &DeviceParams) -> f64 {
    dev.dark
}

/// Probability that a single photon in `(e^{i delta}|01> + |10>)/sqrt2` exits
/// the right port, before loss.
fn right_port_single(misalign: f64, delta_phase: f64) -> f64 {
    let s2 = (0.5 * delta_phase).sin().powi(2);
    let c2 = (0.5 * delta_phase).cos().powi(2);
    (1.0 - misalign) * s2 + misalign * c2
}

/// Right-click probability of `(e^{i delta}|01> + |10>)/sqrt2`.
pub fn click_single_photon(dev: &DeviceParams, ch: &ChannelPoint, delta_phase: f64) -> f64 {
    let t = ch.arm_eta;
    let wrong = right_port_single(dev.misalign, delta_phase);
    // t * (1 - (1 - wrong)(1 - d)) + (1 - t) d
    clamp_prob(dev.dark + t * (1.0 - dev.dark) * wrong)
}

/// Left-click probability of `(e^{i phase}|01> + |10>)/sqrt2`.
pub fn click_single_photon_left(dev: &DeviceParams, ch: &ChannelPoint, phase: f64) -> f64 {
    let t = ch.arm_eta;
    let c2 = (0.5 * phase).cos().powi(2);
    let s2 = (0.5 * phase).sin().powi(2);
    let to_left = (1.0 - dev.misalign) * c2 + dev.misalign * s2;
    clamp_prob(t * (1.0 - (1.0 - to_left) * (1.0 - dev.dark)) + (1.0 - t) * dev.dark)
}

/// `1 - (1 - d)(1 - t/2)^j`: photons treated as independently reaching the detector.
fn independent_photons_click(dev: &DeviceParams, ch: &ChannelPoint, j: usize) -> f64 {
    let log_miss = (-0.5 * ch.arm_eta).ln_1p() * j as f64;
    let miss = log_miss.exp();
    clamp_prob(-log_miss.exp_m1() + dev.dark * miss)
}

/// Right-click probability of `(e^{2i delta}|02> + |20>)/sqrt2`, using the
/// worst case of independent transmission. Independent of `delta` and `e_mis`.
pub fn click_two_photon(dev: &DeviceParams, ch: &ChannelPoint) -> f64 {
    independent_photons_click(dev, ch, 2)
}

/// Upper bound `2((1 - t/2)^j d + 1 - (1 - t/2)^j)` on the right-click
/// probability of `(e^{ij delta}|0j> + |j0>)/sqrt2` for `j >= 3`, clamped to 1.
pub fn click_multi_photon_upper(dev: &DeviceParams, ch: &ChannelPoint, j: usize) -> Result<f64> {
    if j < 3 {
        return Err(Error::PhotonCountTooLow(j));
    }
    Ok((2.0 * independent_photons_click(dev, ch, j)).min(1.0))
}

/// Right-detector click when both send `mu` with phase difference `delta_phase`.
pub fn send_send_click(dev: &DeviceParams, ch: &ChannelPoint, mu: f64, delta_phase: f64) -> f64 {
    let e = dev.misalign;
    // 1 - (1 - 2e) cos(delta) written to stay accurate near delta = 0
    let shape = 2.0 * (0.5 * delta_phase).sin().powi(2) + 2.0 * e * delta_phase.cos();
    threshold_click(ch.arm_eta * mu * shape, dev.dark)
}

/// Left-detector click when both send `mu` with phase difference `phase`.
pub fn send_send_click_left(dev: &DeviceParams, ch: &ChannelPoint, mu: f64, phase: f64) -> f64 {
    let e = dev.misalign;
    // 1 + (1 - 2e) cos(phase)
    let shape = 2.0 * (0.5 * phase).cos().powi(2) - 2.0 * e * phase.cos();
    threshold_click(ch.arm_eta * mu * shape, dev.dark)
}

/// Click probability of either detector when exactly one party sends `mu`.
pub fn single_sender_click(dev: &DeviceParams, ch: &ChannelPoint, mu: f64) -> f64 {
    threshold_click(0.5 * ch.arm_eta * mu, dev.dark)
}

/// `P_c^R = 2p(1-p)(1 - e^{-sqrt(eta) mu / 2}(1 - d))`.
pub fn c_round_click(dev: &DeviceParams, ch: &ChannelPoint, proto: &ProtocolParams) -> f64 {
    let p = proto.p_send;
    clamp_prob(2.0 * p * (1.0 - p) * single_sender_click(dev, ch, proto.mu))
}

/// Left-detector counterpart of [`c_round_click`].
pub fn c_round_click_left(dev: &DeviceParams, ch: &ChannelPoint, proto: &ProtocolParams) -> f64 {
    let p = proto.p_send;
    let mean = ch.arm_eta * proto.mu / 2.0;
    clamp_prob(p * (1.0 - p) * 2.0 * ((1.0 - dev.dark) * -(-mean).exp_m1() + dev.dark))
}

/// Mean right-click probability of a sifted send-send round.
pub fn sifted_send_send_click(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> f64 {
    match proto.phases {
        Phases::Continuous => {
            // even integrand: average over [0, delta]
            average(|x| send_send_click(dev, ch, proto.mu, x), 0.0, proto.delta)
        }
        Phases::Two | Phases::Four => send_send_click(dev, ch, proto.mu, 0.0),
    }
}

/// Mean left-click probability of a send-send round sifted around phase `pi`.
pub fn sifted_send_send_click_left(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> f64 {
    match proto.phases {
        Phases::Continuous => average(
            |phi| send_send_click_left(dev, ch, proto.mu, phi),
            PI - proto.delta,
            PI + proto.delta,
        ),
        Phases::Two | Phases::Four => send_send_click_left(dev, ch, proto.mu, PI),
    }
}

/// Send-send right-click probability averaged over a uniformly random phase
/// difference (no sifting).
pub fn random_phase_send_send_click(dev: &DeviceParams, ch: &ChannelPoint, mu: f64) -> f64 {
    average(|x| send_send_click(dev, ch, mu, x), 0.0, PI)
}

/// `P_E^R = (1-p)^2 d + p^2 <send-send right click>` over the sifting window.
pub fn e_round_click(dev: &DeviceParams, ch: &ChannelPoint, proto: &ProtocolParams) -> f64 {
    let p = proto.p_send;
    clamp_prob((1.0 - p).powi(2) * dev.dark + p * p * sifted_send_send_click(dev, ch, proto))
}

/// Left-detector counterpart of [`e_round_click`].
pub fn e_round_click_left(dev: &DeviceParams, ch: &ChannelPoint, proto: &ProtocolParams) -> f64 {
    let p = proto.p_send;
    clamp_prob((1.0 - p).powi(2) * dev.dark + p * p * sifted_send_send_click_left(dev, ch, proto))
}

fn click_and_qber(p_c: f64, p_e: f64) -> Result<(f64, f64)> {
    let p_t = p_c + p_e;
    if p_t <= 0.0 {
        return Err(Error::DegenerateClicks);
    }
    Ok((clamp_prob(p_t), clamp_prob(p_e / p_t)))
}

/// `(P_t^R, e_bit^R)` with `P_t = P_c + P_E` and `e_bit = P_E / P_t`.
pub fn total_click_and_qber(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<(f64, f64)> {
    click_and_qber(c_round_click(dev, ch, proto), e_round_click(dev, ch, proto))
}

/// Left-detector counterpart of [`total_click_and_qber`].
pub fn total_click_and_qber_left(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<(f64, f64)> {
    click_and_qber(
        c_round_click_left(dev, ch, proto),
        e_round_click_left(dev, ch, proto),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(loss_db: f64) -> (DeviceParams, ChannelPoint) {
        let dev = DeviceParams::new(1.0, 0.0, 1.1, 0.0).unwrap();
        let ch = ChannelPoint::from_loss_db(loss_db, &dev).unwrap();
        (dev, ch)
    }

    fn table(loss_db: f64) -> (DeviceParams, ChannelPoint) {
        let dev = DeviceParams::REFERENCE;
        (dev, ChannelPoint::from_loss_db(loss_db, &dev).unwrap())
    }

    #[test]
    fn vacuum_is_dark_count() {
        assert_eq!(click_vacuum(&DeviceParams::REFERENCE), 1e-11);
        let mut dev = DeviceParams::REFERENCE;
        dev.dark = 0.0;
        assert_eq!(click_vacuum(&dev), 0.0);
        dev.dark = 0.5;
        assert_eq!(click_vacuum(&dev), 0.5);
    }

    #[test]
    fn single_photon_interference_extremes() {
        let (dev, ch) = ideal(0.0);
        assert!(click_single_photon(&dev, &ch, 0.0).abs() < 1e-16);
        assert!((click_single_photon(&dev, &ch, PI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_photon_matches_printed_formula() {
        let (dev, ch) = table(20.0);
        for &delta in &[0.0, 0.3, 1.0, 2.5, PI] {
            let t = ch.arm_eta;
            let (e, d) = (dev.misalign, dev.dark);
            let c = f64::cos(delta);
            let printed = t
                * (1.0 - (0.5 * (1.0 + c) * (1.0 - e) + 0.5 * (1.0 - c) * e) * (1.0 - d))
                + (1.0 - t) * d;
            let v = click_single_photon(&dev, &ch, delta);
            assert!((v - printed).abs() <= 1e-15 * printed.max(1e-300) + 1e-17);
        }
    }

    #[test]
    fn left_single_photon_is_right_shifted_by_pi() {
        let (dev, ch) = table(13.0);
        for &phi in &[0.0, 0.2, 1.3, 2.9] {
            let l = click_single_photon_left(&dev, &ch, phi);
            let r = click_single_photon(&dev, &ch, phi + PI);
            assert!((l - r).abs() < 1e-15);
        }
    }

    #[test]
    fn two_photon_closed_form() {
        let (dev, ch) = ideal(0.0);
        assert!((click_two_photon(&dev, &ch) - 0.75).abs() < 1e-15);
        let (dev, ch) = ideal(400.0);
        assert!(click_two_photon(&dev, &ch) < 1e-19);
    }

    /// Enumerate each photon as lost, left or right.
    fn enumerate_photons(t: f64, d: f64, j: usize) -> f64 {
        let outcomes = [(1.0 - t, false), (t / 2.0, false), (t / 2.0, true)];
        let mut no_right = 0.0;
        let mut stack = vec![(0usize, 1.0f64, false)];
        while let Some((k, prob, hit)) = stack.pop() {
            if k == j {
                if !hit {
                    no_right += prob;
                }
                continue;
            }
            for &(q, right) in &outcomes {
                stack.push((k + 1, prob * q, hit || right));
            }
        }
        1.0 - no_right * (1.0 - d)
    }

    #[test]
    fn two_photon_matches_enumeration() {
        let (dev, ch) = table(20.0);
        let brute = enumerate_photons(ch.arm_eta, dev.dark, 2);
        assert!((click_two_photon(&dev, &ch) - brute).abs() < 1e-15);
    }

    #[test]
    fn multi_photon_bound() {
        let (dev, ch) = ideal(0.0);
        assert_eq!(click_multi_photon_upper(&dev, &ch, 3).unwrap(), 1.0);
        let (dev, ch) = ideal(500.0);
        assert!(click_multi_photon_upper(&dev, &ch, 7).unwrap() < 1e-20);
        assert_eq!(
            click_multi_photon_upper(&dev, &ch, 2),
            Err(Error::PhotonCountTooLow(2))
        );
        let (dev, ch) = table(10.0);
        let truth = enumerate_photons(ch.arm_eta, dev.dark, 5);
        let bound = click_multi_photon_upper(&dev, &ch, 5).unwrap();
        assert!(bound >= truth);
        let (dev, ch) = table(40.0);
        let truth = enumerate_photons(ch.arm_eta, dev.dark, 5);
        let bound = click_multi_photon_upper(&dev, &ch, 5).unwrap();
        assert!((bound - 2.0 * truth).abs() < 1e-15);
    }

    #[test]
    fn c_round_examples() {
        let mut dev = DeviceParams::REFERENCE;
        dev.dark = 0.0;
        let ch = ChannelPoint::from_loss_db(0.0, &dev).unwrap();
        let tiny = ProtocolParams::continuous(0.5, 1e-300, 0.5).unwrap();
        assert!(c_round_click(&dev, &ch, &tiny) < 1e-299);
        let proto = ProtocolParams::continuous(0.05, 0.1, 0.5).unwrap();
        let expected = 2.0 * 0.05 * 0.95 * (1.0 - f64::exp(-0.05));
        assert!((c_round_click(&dev, &ch, &proto) - expected).abs() < 1e-17);
    }

    #[test]
    fn e_round_limits() {
        let (dev, ch) = table(20.0);
        let proto = ProtocolParams::continuous(1e-9, 0.3, 0.4).unwrap();
        assert!((e_round_click(&dev, &ch, &proto) - dev.dark).abs() < 1e-17 + 1e-9 * dev.dark);

        let mut half = dev;
        half.misalign = 0.5;
        let p = 0.3;
        for &delta in &[0.01, 0.7, PI] {
            let proto = ProtocolParams::continuous(p, 0.4, delta).unwrap();
            let expected = (1.0 - p) * (1.0 - p) * half.dark
                + p * p * (1.0 - (1.0 - half.dark) * f64::exp(-ch.arm_eta * 0.4));
            let v = e_round_click(&half, &ch, &proto);
            assert!((v - expected).abs() < 1e-15 * expected);
        }
    }

    #[test]
    fn e_round_quadrature_against_riemann_sum() {
        let (dev, ch) = table(20.0);
        let proto = ProtocolParams::continuous(0.25, 0.22, 0.1).unwrap();
        let n = 1_000_000;
        let h = 2.0 * proto.delta / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let x = -proto.delta + (i as f64 + 0.5) * h;
                send_send_click(&dev, &ch, proto.mu, x)
            })
            .sum::<f64>()
            / n as f64;
        let expected = (1.0 - proto.p_send).powi(2) * dev.dark + proto.p_send.powi(2) * riemann;
        let v = e_round_click(&dev, &ch, &proto);
        assert!(((v - expected) / expected).abs() < 1e-10);
    }

    #[test]
    fn discrete_uses_matched_phase() {
        let (dev, ch) = table(20.0);
        let proto = ProtocolParams::discrete(0.3, 0.2, Phases::Two).unwrap();
        let expected = 0.49 * dev.dark
            + 0.09 * (1.0 - (1.0 - dev.dark) * f64::exp(-2.0 * ch.arm_eta * 0.2 * dev.misalign));
        assert!((e_round_click(&dev, &ch, &proto) - expected).abs() < 1e-16);
    }

    #[test]
    fn qber_limits_and_degeneracy() {
        let (dev, ch) = table(30.0);
        let proto = ProtocolParams::continuous(1e-12, 0.3, 0.4).unwrap();
        let (_, e_bit) = total_click_and_qber(&dev, &ch, &proto).unwrap();
        assert!(e_bit > 0.99);

        let (ideal_dev, ideal_ch) = ideal(0.0);
        let proto = ProtocolParams::continuous(0.01, 0.1, 1e-7).unwrap();
        let (p_t, e_bit) = total_click_and_qber(&ideal_dev, &ideal_ch, &proto).unwrap();
        assert!(p_t > 0.0);
        assert!(e_bit < 1e-12);

        let zero = ProtocolParams::continuous(0.3, 0.0, 0.4).unwrap();
        assert_eq!(
            total_click_and_qber(&ideal_dev, &ideal_ch, &zero),
            Err(Error::DegenerateClicks)
        );
    }

    #[test]
    fn left_detector_mirrors_right() {
        let (dev, ch) = table(25.0);
        for phases in [Phases::Continuous, Phases::Two, Phases::Four] {
            let proto = ProtocolParams::new(0.27, 0.31, 0.6, phases).unwrap();
            let r = total_click_and_qber(&dev, &ch, &proto).unwrap();
            let l = total_click_and_qber_left(&dev, &ch, &proto).unwrap();
            assert!((r.0 - l.0).abs() < 1e-14 * r.0);
            assert!((r.1 - l.1).abs() < 1e-12 * r.1);
        }
    }
}
