//! Key rates for the postselection protocol, its discrete-phase variants,
//! the sending-or-not-sending baseline, and AOPP post-processing of each.
//!
//! Every rate is in bits per emitted round and counts both detectors.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::aopp::{aopp_asymptotic_split, AoppStats};
use crate::error::{Error, Result};
use crate::numeric::average;
use crate::phase_error::{left_click_phase_error, phase_error_bound, PhaseErrorBound};
use crate::physics::clicks::{
    random_phase_send_send_click, sifted_send_send_click, single_sender_click,
};
use crate::physics::{
    c_round_click, c_round_click_left, e_round_click, e_round_click_left, ChannelPoint,
    DeviceParams, Phases, ProtocolParams,
};

/// `-x log2 x - (1-x) log2(1-x)`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            reason: "entropy argument must lie in [0, 1]",
        });
    }
    Ok(h2(x))
}

pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Protocol family and post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Sns,
    SnsAopp,
    Postselection(PhaseKind),
    PostselectionAopp(PhaseKind),
}

/// Ordered copy of [`Phases`] so that variants sort deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseKind {
    Continuous,
    Two,
    Four,
}

impl From<PhaseKind> for Phases {
    fn from(k: PhaseKind) -> Phases {
        match k {
            PhaseKind::Continuous => Phases::Continuous,
            PhaseKind::Two => Phases::Two,
            PhaseKind::Four => Phases::Four,
        }
    }
}

impl From<Phases> for PhaseKind {
    fn from(p: Phases) -> PhaseKind {
        match p {
            Phases::Continuous => PhaseKind::Continuous,
            Phases::Two => PhaseKind::Two,
            Phases::Four => PhaseKind::Four,
        }
    }
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Sns,
        Variant::SnsAopp,
        Variant::Postselection(PhaseKind::Continuous),
        Variant::Postselection(PhaseKind::Two),
        Variant::Postselection(PhaseKind::Four),
        Variant::PostselectionAopp(PhaseKind::Continuous),
        Variant::PostselectionAopp(PhaseKind::Two),
        Variant::PostselectionAopp(PhaseKind::Four),
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Sns => "sns",
            Variant::SnsAopp => "sns-aopp",
            Variant::Postselection(PhaseKind::Continuous) => "ps",
            Variant::Postselection(PhaseKind::Two) => "ps-m2",
            Variant::Postselection(PhaseKind::Four) => "ps-m4",
            Variant::PostselectionAopp(PhaseKind::Continuous) => "ps-aopp",
            Variant::PostselectionAopp(PhaseKind::Two) => "ps-m2-aopp",
            Variant::PostselectionAopp(PhaseKind::Four) => "ps-m4-aopp",
        }
    }

    /// Phase randomisation the variant expects in [`ProtocolParams`]. The
    /// baseline ignores the sifting fields and reports continuous.
    pub fn phases(self) -> Phases {
        match self {
            Variant::Sns | Variant::SnsAopp => Phases::Continuous,
            Variant::Postselection(k) | Variant::PostselectionAopp(k) => k.into(),
        }
    }

    /// Whether the sifting half-width is a free parameter.
    pub fn uses_delta(self) -> bool {
        matches!(
            self,
            Variant::Postselection(PhaseKind::Continuous)
                | Variant::PostselectionAopp(PhaseKind::Continuous)
        )
    }

    pub fn is_aopp(self) -> bool {
        matches!(self, Variant::SnsAopp | Variant::PostselectionAopp(_))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(|v| v.tag()).collect();
                Error::Config(format!(
                    "unknown variant `{s}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Variant> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.tag().to_string()
    }
}

/// Every intermediate of a rate evaluation. Click quantities are per
/// detector; for the baseline `p_c` is the single-photon count and `p_ph`
/// its phase-error count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub variant: Variant,
    pub s: f64,
    pub p_c: f64,
    pub p_t: f64,
    pub e_bit: f64,
    pub p_ph: f64,
    /// Phase-error rate fed to the entropy, after the 1/2 ceiling.
    pub e_ph: f64,
    /// Per-detector rate before clamping.
    pub r_raw: f64,
    pub r_per_detector: f64,
    pub r_total: f64,
    /// Set when `p_c = 0`; all rates are then 0.
    pub no_correct_clicks: bool,
    pub aopp: Option<AoppStats>,
}

impl RateBreakdown {
    fn finish(mut self) -> Self {
        self.r_per_detector = self.r_raw.max(0.0);
        self.r_total = 2.0 * self.r_per_detector;
        self
    }
}

/// `s (P_c (1 - H(min(P_ph / P_c, 1/2))) - f P_t H(e_bit))` for one detector.
fn detector_rate(
    variant: Variant,
    s: f64,
    ec_eff: f64,
    p_c: f64,
    p_e: f64,
    p_ph: f64,
) -> RateBreakdown {
    let p_t = p_c + p_e;
    let e_bit = if p_t > 0.0 { p_e / p_t } else { 0.0 };
    let (e_ph, r_raw, empty) = if p_c > 0.0 {
        let e_ph = (p_ph / p_c).min(0.5);
        (
            e_ph,
            s * (p_c * (1.0 - h2(e_ph)) - ec_eff * p_t * h2(e_bit)),
            false,
        )
    } else {
        (0.5, 0.0, true)
    };
    RateBreakdown {
        variant,
        s,
        p_c,
        p_t,
        e_bit,
        p_ph,
        e_ph,
        r_raw,
        r_per_detector: 0.0,
        r_total: 0.0,
        no_correct_clicks: empty,
        aopp: None,
    }
    .finish()
}

fn ensure_phases(proto: &ProtocolParams, variant: Variant) -> Result<()> {
    if proto.phases != variant.phases() {
        return Err(Error::VariantMismatch {
            given: variant.tag(),
            expected: phases_tag(proto.phases),
        });
    }
    Ok(())
}

fn phases_tag(p: Phases) -> &'static str {
    match p {
        Phases::Continuous => "continuous phases",
        Phases::Two => "two phases",
        Phases::Four => "four phases",
    }
}

/// Right-click rate of the postselection protocol, doubled for the mirror
/// detector. Continuous phases sift with `s = Delta / pi`, discrete ones with `1/M`.
pub fn keyrate_postselection(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<RateBreakdown> {
    dev.validate()?;
    proto.validate()?;
    let variant = Variant::Postselection(proto.phases.into());
    let p_c = c_round_click(dev, ch, proto);
    let p_e = e_round_click(dev, ch, proto);
    let p_ph = pph_or_zero(p_c, || phase_error_bound(dev, ch, proto))?;
    Ok(detector_rate(
        variant,
        proto.sifting_efficiency(),
        dev.ec_eff,
        p_c,
        p_e,
        p_ph,
    ))
}

fn pph_or_zero(p_c: f64, f: impl FnOnce() -> Result<PhaseErrorBound>) -> Result<f64> {
    if p_c > 0.0 {
        Ok(f()?.bound())
    } else {
        Ok(0.0)
    }
}

/// `R^R + R^L` with both detectors evaluated from their own formulas.
pub fn keyrate_postselection_dual(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<f64> {
    let s = proto.sifting_efficiency();
    let variant = Variant::Postselection(proto.phases.into());
    let right = keyrate_postselection(dev, ch, proto)?;
    let p_c = c_round_click_left(dev, ch, proto);
    let p_e = e_round_click_left(dev, ch, proto);
    let p_ph = pph_or_zero(p_c, || left_click_phase_error(dev, ch, proto))?;
    let left = detector_rate(variant, s, dev.ec_eff, p_c, p_e, p_ph);
    Ok(right.r_per_detector + left.r_per_detector)
}

/// Quantities of the baseline protocol for one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SnsObservables {
    q: f64,
    e_count: f64,
    c: f64,
    send_send: f64,
    /// Untagged single-photon count on this detector.
    n1: f64,
    e1_ph: f64,
}

fn sns_observables(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> SnsObservables {
    let p = proto.p_send;
    let mu = proto.mu;
    let t = ch.arm_eta;
    let d = dev.dark;
    let c = single_sender_click(dev, ch, mu);
    let send_send = random_phase_send_send_click(dev, ch, mu);
    let e_count = (1.0 - p).powi(2) * d + p * p * send_send;
    let q = e_count + 2.0 * p * (1.0 - p) * c;
    // total single-photon click probability, both detectors
    let y1 = t * (1.0 + d) + 2.0 * (1.0 - t) * d;
    let e1_ph = ((1.0 - t) * d + t * (1.0 - d) * dev.misalign) / y1;
    let n1 = p * (1.0 - p) * (-mu).exp() * mu * y1;
    SnsObservables {
        q,
        e_count,
        c,
        send_send,
        n1,
        e1_ph,
    }
}

/// Asymptotic rate of the original sending-or-not-sending protocol with
/// infinite decoys: `2p(1-p) e^{-mu} mu Y_1 (1 - H(e_1)) - f Q H(E)`, where
/// `Q` and `E` are the total gain and error over both detectors.
pub fn keyrate_sns_baseline(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> Result<RateBreakdown> {
    dev.validate()?;
    proto.validate()?;
    let o = sns_observables(dev, ch, proto);
    let e_bit = if o.q > 0.0 { o.e_count / o.q } else { 0.0 };
    let e_ph = o.e1_ph.min(0.5);
    // per detector: half of the single-photon count and of the leak
    let r_raw = o.n1 * (1.0 - h2(e_ph)) - dev.ec_eff * o.q * h2(e_bit);
    Ok(RateBreakdown {
        variant: Variant::Sns,
        s: 1.0,
        p_c: o.n1,
        p_t: o.q,
        e_bit,
        p_ph: o.n1 * e_ph,
        e_ph,
        r_raw,
        r_per_detector: 0.0,
        r_total: 0.0,
        no_correct_clicks: o.n1 == 0.0,
        aopp: None,
    }
    .finish())
}

/// Baseline total gain `Q_t` and error rate `E_t` over both detectors,
/// without any phase sifting; the quantities the Monte Carlo checks.
pub fn sns_gain_and_qber(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
) -> (f64, f64) {
    let o = sns_observables(dev, ch, proto);
    let q_t = 2.0 * o.q;
    (q_t, if o.q > 0.0 { o.e_count / o.q } else { 0.0 })
}

/// Pre-pairing statistics of one detector split by Bob's bit
/// (bit 0 = Bob sent).
struct PairingInput {
    n0: f64,
    n1: f64,
    err0: f64,
    err1: f64,
    /// untagged counts behind each class
    k0: f64,
    k1: f64,
    e_ph: f64,
    s: f64,
}

fn aopp_rate(variant: Variant, ec_eff: f64, inp: PairingInput) -> Result<RateBreakdown> {
    let total = inp.n0 + inp.n1;
    if total <= 0.0 || inp.n0 <= 0.0 || inp.n1 <= 0.0 {
        return Ok(RateBreakdown {
            variant,
            s: inp.s,
            p_c: 0.0,
            p_t: total,
            e_bit: 0.0,
            p_ph: 0.0,
            e_ph: 0.5,
            r_raw: 0.0,
            r_per_detector: 0.0,
            r_total: 0.0,
            no_correct_clicks: true,
            aopp: None,
        });
    }
    let e0 = inp.err0 / inp.n0;
    let e1 = inp.err1 / inp.n1;
    let stats = aopp_asymptotic_split(inp.n0 / total, e0, e1, inp.e_ph)?;
    let pairs = stats.pairing_fraction * total;
    let kept = stats.survival_fraction * total;
    // both members untagged
    let untagged = pairs * (inp.k0 / inp.n0) * (inp.k1 / inp.n1);
    let e_ph = stats.post_phase_error.unwrap_or(0.5);
    let r_raw = inp.s * (untagged * (1.0 - h2(e_ph)) - ec_eff * kept * h2(stats.post_bit_error));
    Ok(RateBreakdown {
        variant,
        s: inp.s,
        p_c: untagged,
        p_t: kept,
        e_bit: stats.post_bit_error,
        p_ph: untagged * e_ph,
        e_ph,
        r_raw,
        r_per_detector: 0.0,
        r_total: 0.0,
        no_correct_clicks: untagged == 0.0,
        aopp: Some(stats),
    }
    .finish())
}

/// Rate after odd-parity pairing. For postselection, C rounds carry no bit
/// errors and play the untagged role; for the baseline the single-photon
/// counts do.
pub fn keyrate_with_aopp(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
    variant: Variant,
) -> Result<RateBreakdown> {
    dev.validate()?;
    proto.validate()?;
    let p = proto.p_send;
    let d = dev.dark;
    match variant {
        Variant::SnsAopp => {
            let o = sns_observables(dev, ch, proto);
            let single = p * (1.0 - p) * o.c;
            aopp_rate(
                variant,
                dev.ec_eff,
                PairingInput {
                    n0: single + p * p * o.send_send,
                    n1: single + (1.0 - p).powi(2) * d,
                    err0: p * p * o.send_send,
                    err1: (1.0 - p).powi(2) * d,
                    k0: 0.5 * o.n1,
                    k1: 0.5 * o.n1,
                    e_ph: o.e1_ph.min(0.5),
                    s: 1.0,
                },
            )
        }
        Variant::PostselectionAopp(_) => {
            ensure_phases(proto, variant)?;
            let p_c = c_round_click(dev, ch, proto);
            let single = 0.5 * p_c;
            let matched = sifted_send_send_click(dev, ch, proto);
            let p_ph = pph_or_zero(p_c, || phase_error_bound(dev, ch, proto))?;
            let e_ph = if p_c > 0.0 {
                (p_ph / p_c).min(0.5)
            } else {
                0.5
            };
            aopp_rate(
                variant,
                dev.ec_eff,
                PairingInput {
                    n0: single + p * p * matched,
                    n1: single + (1.0 - p).powi(2) * d,
                    err0: p * p * matched,
                    err1: (1.0 - p).powi(2) * d,
                    k0: single,
                    k1: single,
                    e_ph,
                    s: proto.sifting_efficiency(),
                },
            )
        }
        Variant::Sns | Variant::Postselection(_) => Err(Error::VariantMismatch {
            given: variant.tag(),
            expected: "an AOPP variant",
        }),
    }
}

/// Dispatch on the variant.
pub fn key_rate(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
    variant: Variant,
) -> Result<RateBreakdown> {
    match variant {
        Variant::Sns => keyrate_sns_baseline(dev, ch, proto),
        Variant::Postselection(_) => {
            ensure_phases(proto, variant)?;
            keyrate_postselection(dev, ch, proto)
        }
        Variant::SnsAopp | Variant::PostselectionAopp(_) => {
            keyrate_with_aopp(dev, ch, proto, variant)
        }
    }
}

/// Single-photon click of the baseline averaged over the full circle,
/// evaluated by quadrature; used to check the closed form of `Y_1`.
pub fn sns_single_photon_yield_numeric(dev: &DeviceParams, ch: &ChannelPoint) -> f64 {
    let right = average(
        |x| crate::physics::click_single_photon(dev, ch, x),
        0.0,
        2.0 * PI,
    );
    let left = average(
        |x| crate::physics::click_single_photon_left(dev, ch, x),
        0.0,
        2.0 * PI,
    );
    right + left
}
