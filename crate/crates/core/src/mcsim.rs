//! Round-by-round Monte Carlo of the protocol, used as an oracle for the
//! analytic click, sifting and error formulas.
//!
//! Rounds are split into blocks of [`BLOCK_ROUNDS`]; block `i` draws from the
//! ChaCha8 stream `i` of the master seed, so a summary depends only on
//! `(seed, n_rounds)` and not on the number of worker threads.
//!
//! Rates that are compared with the analytic model are detector marginals: a
//! right click counts whether or not the left detector also fired, exactly as
//! in the closed-form click probabilities. The protocol itself discards double
//! clicks; those exclusive rates are reported separately.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::keyrate::sns_gain_and_qber;
use crate::numeric::threshold_click;
use crate::physics::clicks::{click_single_photon, click_two_photon};
use crate::physics::{
    c_round_click, c_round_click_left, total_click_and_qber, total_click_and_qber_left,
    ChannelPoint, DeviceParams, Phases, ProtocolParams,
};

/// Rounds per RNG stream.
pub const BLOCK_ROUNDS: u64 = 1 << 16;
/// Largest accepted `|z|` in a validation check.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    None,
    Left,
    Right,
    Both,
}

/// `C`: exactly one party sent. `E`: both or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoundClass {
    C,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub alice_send: bool,
    pub bob_send: bool,
    pub theta_a: f64,
    pub theta_b: f64,
    pub outcome: Outcome,
    /// Phases pass the right detector's sifting condition.
    pub right_window: bool,
    /// Phases pass the left detector's sifting condition.
    pub left_window: bool,
    /// Exclusive click on a detector whose sifting condition holds.
    pub sifted: bool,
    pub round_class: RoundClass,
}

impl RoundRecord {
    /// Alice's bit is "sent", Bob's is "not sent".
    pub fn bit_error(&self) -> bool {
        self.alice_send == self.bob_send
    }

    fn right_click(&self) -> bool {
        matches!(self.outcome, Outcome::Right | Outcome::Both)
    }

    fn left_click(&self) -> bool {
        matches!(self.outcome, Outcome::Left | Outcome::Both)
    }
}

/// A frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    /// Number of trials behind the frequency.
    pub trials: u64,
}

impl Estimate {
    pub fn binomial(hits: u64, trials: u64) -> Self {
        if trials == 0 {
            return Estimate {
                value: 0.0,
                std_err: 0.0,
                trials,
            };
        }
        let p = hits as f64 / trials as f64;
        Estimate {
            value: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// `(value - reference) / se`, with the standard error taken at the
    /// reference so that a zero observed count still gives a finite score.
    pub fn z_score(&self, reference: f64) -> f64 {
        let se = (reference * (1.0 - reference) / self.trials.max(1) as f64).sqrt();
        let diff = self.value - reference;
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Per-detector sifted statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    /// Rounds whose phases pass this detector's sifting condition.
    pub window_rounds: u64,
    /// `P_t`: clicks per sifted round.
    pub click_rate: Estimate,
    /// `P_c`: clicks in C rounds per sifted round.
    pub c_round_rate: Estimate,
    /// Bit errors among sifted clicks.
    pub qber: Estimate,
    /// Clicks with the other detector silent, per sifted round.
    pub exclusive_rate: Estimate,
    /// Bit errors among sifted C-round clicks; zero by construction.
    pub c_subset_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_rounds: u64,
    pub seed: u64,
    pub right: DetectorSummary,
    pub left: DetectorSummary,
    /// Clicks of both detectors per round, no sifting.
    pub baseline_gain: Estimate,
    /// Share of those clicks that carry a bit error.
    pub baseline_qber: Estimate,
    pub double_clicks: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DetectorTally {
    window: u64,
    clicks: u64,
    c_clicks: u64,
    errors: u64,
    exclusive: u64,
    c_errors: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    rounds: u64,
    right: DetectorTally,
    left: DetectorTally,
    clicks: u64,
    click_errors: u64,
    doubles: u64,
}

impl Tally {
    fn add(&mut self, r: &RoundRecord) {
        self.rounds += 1;
        let rc = r.right_click();
        let lc = r.left_click();
        let err = r.bit_error();
        let n = rc as u64 + lc as u64;
        self.clicks += n;
        if err {
            self.click_errors += n;
        }
        self.doubles += (rc && lc) as u64;
        for (t, win, me, other) in [
            (&mut self.right, r.right_window, rc, lc),
            (&mut self.left, r.left_window, lc, rc),
        ] {
            if !win {
                continue;
            }
            t.window += 1;
            if me {
                t.clicks += 1;
                t.errors += err as u64;
                t.exclusive += (!other) as u64;
                if r.round_class == RoundClass::C {
                    t.c_clicks += 1;
                    t.c_errors += err as u64;
                }
            }
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        self.rounds += o.rounds;
        for (a, b) in [(&mut self.right, o.right), (&mut self.left, o.left)] {
            a.window += b.window;
            a.clicks += b.clicks;
            a.c_clicks += b.c_clicks;
            a.errors += b.errors;
            a.exclusive += b.exclusive;
            a.c_errors += b.c_errors;
        }
        self.clicks += o.clicks;
        self.click_errors += o.click_errors;
        self.doubles += o.doubles;
        self
    }

    fn summary(&self, seed: u64) -> McSummary {
        let det = |t: &DetectorTally| DetectorSummary {
            window_rounds: t.window,
            click_rate: Estimate::binomial(t.clicks, t.window),
            c_round_rate: Estimate::binomial(t.c_clicks, t.window),
            qber: Estimate::binomial(t.errors, t.clicks),
            exclusive_rate: Estimate::binomial(t.exclusive, t.window),
            c_subset_errors: t.c_errors,
        };
        // the per-round click count lies in {0, 1, 2}
        let n = self.rounds.max(1) as f64;
        let mean = self.clicks as f64 / n;
        let second = (self.clicks + 2 * self.doubles) as f64 / n;
        McSummary {
            n_rounds: self.rounds,
            seed,
            right: det(&self.right),
            left: det(&self.left),
            baseline_gain: Estimate {
                value: mean,
                std_err: ((second - mean * mean).max(0.0) / n).sqrt(),
                trials: self.rounds,
            },
            baseline_qber: Estimate::binomial(self.click_errors, self.clicks),
            double_clicks: self.doubles,
        }
    }
}

/// Everything a round needs that does not change between rounds.
#[derive(Debug, Clone, Copy)]
struct RoundModel {
    p: f64,
    field: f64,
    misalign: f64,
    dark: f64,
    phases: Phases,
    delta: f64,
}

impl RoundModel {
    fn new(dev: &DeviceParams, ch: &ChannelPoint, proto: &ProtocolParams) -> Self {
        RoundModel {
            p: proto.p_send,
            // amplitude reaching the beamsplitter from one arm
            field: (ch.arm_eta * proto.mu).sqrt(),
            misalign: dev.misalign,
            dark: dev.dark,
            phases: proto.phases,
            delta: proto.delta,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> RoundRecord {
        let alice_send = rng.random::<f64>() < self.p;
        let bob_send = rng.random::<f64>() < self.p;
        let (theta_a, theta_b, right_window, left_window) = match self.phases {
            Phases::Continuous => {
                let a = 2.0 * PI * rng.random::<f64>();
                let b = 2.0 * PI * rng.random::<f64>();
                let mut diff = (a - b).abs();
                if diff > PI {
                    diff = 2.0 * PI - diff;
                }
                (a, b, diff <= self.delta, PI - diff <= self.delta)
            }
            Phases::Two | Phases::Four => {
                let m = self.phases.count();
                let ka = rng.random_range(0..m);
                let kb = rng.random_range(0..m);
                let step = 2.0 * PI / m as f64;
                let rel = (ka + m - kb) % m;
                (ka as f64 * step, kb as f64 * step, rel == 0, 2 * rel == m)
            }
        };
        let amp = |send: bool, theta: f64| {
            if send {
                Complex64::from_polar(self.field, theta)
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        let (aa, ab) = (amp(alice_send, theta_a), amp(bob_send, theta_b));
        // destructive port for equal phases on the right; a fraction e_mis of
        // each port's intensity leaks to the other
        let dest = (aa - ab).norm_sqr() / 2.0;
        let cons = (aa + ab).norm_sqr() / 2.0;
        let e = self.misalign;
        let mean_right = (1.0 - e) * dest + e * cons;
        let mean_left = (1.0 - e) * cons + e * dest;
        let rc = rng.random::<f64>() < threshold_click(mean_right, self.dark);
        let lc = rng.random::<f64>() < threshold_click(mean_left, self.dark);
        let outcome = match (rc, lc) {
            (false, false) => Outcome::None,
            (true, false) => Outcome::Right,
            (false, true) => Outcome::Left,
            (true, true) => Outcome::Both,
        };
        RoundRecord {
            alice_send,
            bob_send,
            theta_a,
            theta_b,
            outcome,
            right_window,
            left_window,
            sifted: (outcome == Outcome::Right && right_window)
                || (outcome == Outcome::Left && left_window),
            round_class: if alice_send != bob_send {
                RoundClass::C
            } else {
                RoundClass::E
            },
        }
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn block_len(n_rounds: u64, block: u64) -> u64 {
    (n_rounds - block * BLOCK_ROUNDS).min(BLOCK_ROUNDS)
}

fn check_setup(dev: &DeviceParams, proto: &ProtocolParams, n_rounds: u64) -> Result<()> {
    dev.validate()?;
    proto.validate()?;
    if n_rounds == 0 {
        return Err(Error::InvalidParameter {
            name: "n_rounds",
            value: 0.0,
            reason: "at least one round is required",
        });
    }
    Ok(())
}

/// Simulates `n_rounds` rounds; bit-for-bit reproducible for a given seed.
pub fn simulate(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
    n_rounds: u64,
    seed: u64,
) -> Result<McSummary> {
    check_setup(dev, proto, n_rounds)?;
    let model = RoundModel::new(dev, ch, proto);
    let blocks = n_rounds.div_ceil(BLOCK_ROUNDS);
    let tally = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let mut t = Tally::default();
            for _ in 0..block_len(n_rounds, b) {
                t.add(&model.sample(&mut rng));
            }
            t
        })
        .reduce(Tally::default, Tally::merge);
    Ok(tally.summary(seed))
}

/// The individual rounds behind [`simulate`] with the same arguments.
pub fn simulate_records(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
    n_rounds: u64,
    seed: u64,
) -> Result<Vec<RoundRecord>> {
    check_setup(dev, proto, n_rounds)?;
    let model = RoundModel::new(dev, ch, proto);
    let blocks = n_rounds.div_ceil(BLOCK_ROUNDS);
    let mut out = Vec::with_capacity(n_rounds as usize);
    for b in 0..blocks {
        let mut rng = block_rng(seed, b);
        out.extend((0..block_len(n_rounds, b)).map(|_| model.sample(&mut rng)));
    }
    Ok(out)
}

/// CSV dump of round records, for debugging.
pub fn write_records<W: Write>(records: &[RoundRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::from(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Right-click frequency of `(e^{ij delta}|0j> + |j0>)/sqrt2` for `j` in
/// `{1, 2}`, sampling each photon's survival and exit port.
///
/// A single photon exits the right port with the interference weight
/// `(1 - e) sin^2(delta/2) + e cos^2(delta/2)`. For two photons each photon
/// is assigned a port independently with probability 1/2, the
/// independent-transmission model of [`click_two_photon`].
pub fn simulate_fock(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    j: usize,
    delta_phase: f64,
    n_rounds: u64,
    seed: u64,
) -> Result<Estimate> {
    dev.validate()?;
    if !(1..=2).contains(&j) {
        return Err(Error::UnsupportedPhotonCount(j));
    }
    let t = ch.arm_eta;
    let right = if j == 1 {
        let s2 = (0.5 * delta_phase).sin().powi(2);
        (1.0 - dev.misalign) * s2 + dev.misalign * (1.0 - s2)
    } else {
        0.5
    };
    let dark = dev.dark;
    let blocks = n_rounds.div_ceil(BLOCK_ROUNDS);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let mut hits = 0u64;
            for _ in 0..block_len(n_rounds, b) {
                let mut click = rng.random::<f64>() < dark;
                for _ in 0..j {
                    let arrives = rng.random::<f64>() < t;
                    let to_right = rng.random::<f64>() < right;
                    click |= arrives && to_right;
                }
                hits += click as u64;
            }
            hits
        })
        .sum();
    Ok(Estimate::binomial(hits, n_rounds))
}

/// Analytic counterpart of [`simulate_fock`].
pub fn fock_click_analytic(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    j: usize,
    delta_phase: f64,
) -> Result<f64> {
    match j {
        1 => Ok(click_single_photon(dev, ch, delta_phase)),
        2 => Ok(click_two_photon(dev, ch)),
        _ => Err(Error::UnsupportedPhotonCount(j)),
    }
}

/// One analytic-versus-sampled comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub analytic: f64,
    pub sampled: f64,
    pub std_err: f64,
    pub trials: u64,
    pub z: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(quantity: impl Into<String>, analytic: f64, est: &Estimate) -> Self {
        let z = est.z_score(analytic);
        Check {
            quantity: quantity.into(),
            analytic,
            sampled: est.value,
            std_err: est.std_err,
            trials: est.trials,
            z,
            pass: z.abs() <= Z_LIMIT,
        }
    }

    /// The same sample scored against a different reference value.
    pub fn against(&self, analytic: f64) -> Self {
        let est = Estimate {
            value: self.sampled,
            std_err: self.std_err,
            trials: self.trials,
        };
        Check::new(self.quantity.clone(), analytic, &est)
    }

    /// A count that must be exactly zero.
    fn zero(quantity: impl Into<String>, count: u64) -> Self {
        Check {
            quantity: quantity.into(),
            analytic: 0.0,
            sampled: count as f64,
            std_err: 0.0,
            trials: 0,
            z: if count == 0 { 0.0 } else { f64::INFINITY },
            pass: count == 0,
        }
    }
}

/// Compares a summary with the analytic click, error and baseline formulas.
pub fn validate_summary(
    dev: &DeviceParams,
    ch: &ChannelPoint,
    proto: &ProtocolParams,
    mc: &McSummary,
) -> Result<Vec<Check>> {
    let (pt_r, eb_r) = total_click_and_qber(dev, ch, proto)?;
    let (pt_l, eb_l) = total_click_and_qber_left(dev, ch, proto)?;
    let mut checks = vec![
        Check::new(
            "P_c^R",
            c_round_click(dev, ch, proto),
            &mc.right.c_round_rate,
        ),
        Check::new("P_t^R", pt_r, &mc.right.click_rate),
        Check::new("e_bit^R", eb_r, &mc.right.qber),
        Check::new(
            "P_c^L",
            c_round_click_left(dev, ch, proto),
            &mc.left.c_round_rate,
        ),
        Check::new("P_t^L", pt_l, &mc.left.click_rate),
        Check::new("e_bit^L", eb_l, &mc.left.qber),
    ];
    // the unsifted baseline is defined for random continuous phases only
    if proto.phases == Phases::Continuous {
        let (q_t, e_t) = sns_gain_and_qber(dev, ch, proto);
        let se = mc.baseline_gain.std_err.max(f64::MIN_POSITIVE);
        let z = (mc.baseline_gain.value - q_t) / se;
        checks.push(Check {
            quantity: "Q_t".into(),
            analytic: q_t,
            sampled: mc.baseline_gain.value,
            std_err: mc.baseline_gain.std_err,
            trials: mc.baseline_gain.trials,
            z,
            pass: z.abs() <= Z_LIMIT,
        });
        checks.push(Check::new("E_t", e_t, &mc.baseline_qber));
    }
    checks.push(Check::zero("C-round errors (R)", mc.right.c_subset_errors));
    checks.push(Check::zero("C-round errors (L)", mc.left.c_subset_errors));
    Ok(checks)
}
