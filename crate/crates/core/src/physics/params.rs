use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{check_probability, Error, Result};

/// Detector and post-processing characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    /// Detection efficiency `P_d`.
    pub det_eff: f64,
    /// Dark-count probability per detector per round.
    pub dark: f64,
    /// Error-correction inefficiency `f >= 1`.
    pub ec_eff: f64,
    /// Misalignment error probability, at most 1/2.
    pub misalign: f64,
}

impl DeviceParams {
    /// The reference device: `P_d = 1`, `d = 1e-11`, `f = 1.1`, `e_mis = 0.01`.
    pub const REFERENCE: DeviceParams = DeviceParams {
        det_eff: 1.0,
        dark: 1e-11,
        ec_eff: 1.1,
        misalign: 0.01,
    };

    pub fn new(det_eff: f64, dark: f64, ec_eff: f64, misalign: f64) -> Result<Self> {
        let dev = DeviceParams {
            det_eff,
            dark,
            ec_eff,
            misalign,
        };
        dev.validate()?;
        Ok(dev)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("det_eff", self.det_eff)?;
        check_probability("dark", self.dark)?;
        if !(self.ec_eff >= 1.0 && self.ec_eff.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ec_eff",
                value: self.ec_eff,
                reason: "error-correction efficiency must be >= 1",
            });
        }
        if !(0.0..=0.5).contains(&self.misalign) {
            return Err(Error::InvalidParameter {
                name: "misalign",
                value: self.misalign,
                reason: "misalignment must lie in [0, 1/2]",
            });
        }
        Ok(())
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// A point on the loss axis. Both arms see `sqrt(eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPoint {
    pub loss_db: f64,
    pub eta: f64,
    /// Per-arm transmittance including detector efficiency: `sqrt(eta) * P_d`.
    pub arm_eta: f64,
}

impl ChannelPoint {
    pub fn from_loss_db(loss_db: f64, dev: &DeviceParams) -> Result<Self> {
        if !(loss_db >= 0.0 && loss_db.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "loss_db",
                value: loss_db,
                reason: "loss must be a finite number of dB >= 0",
            });
        }
        let eta = 10f64.powf(-loss_db / 10.0);
        Ok(ChannelPoint {
            loss_db,
            eta,
            arm_eta: 10f64.powf(-loss_db / 20.0) * dev.det_eff,
        })
    }

    pub fn from_eta(eta: f64, dev: &DeviceParams) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: eta,
                reason: "transmittance must lie in (0, 1]",
            });
        }
        Ok(ChannelPoint {
            loss_db: -10.0 * eta.log10(),
            eta,
            arm_eta: eta.sqrt() * dev.det_eff,
        })
    }
}

/// Phase randomisation used when sending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phases {
    /// Uniform on `[0, 2 pi)`, sifted with half-width `delta`.
    Continuous,
    /// `{0, pi}`.
    Two,
    /// `{0, pi/2, pi, 3pi/2}`.
    Four,
}

impl Phases {
    /// Number of discrete phases, 0 for continuous.
    pub fn count(self) -> u32 {
        match self {
            Phases::Continuous => 0,
            Phases::Two => 2,
            Phases::Four => 4,
        }
    }

    pub fn from_count(m: u32) -> Result<Self> {
        match m {
            0 => Ok(Phases::Continuous),
            2 => Ok(Phases::Two),
            4 => Ok(Phases::Four),
            _ => Err(Error::InvalidParameter {
                name: "m_phases",
                value: m as f64,
                reason: "supported phase counts are 0 (continuous), 2 and 4",
            }),
        }
    }

    pub fn is_discrete(self) -> bool {
        self != Phases::Continuous
    }
}

impl fmt::Display for Phases {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phases::Continuous => write!(f, "continuous"),
            Phases::Two => write!(f, "M=2"),
            Phases::Four => write!(f, "M=4"),
        }
    }
}

/// Sender-side protocol choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Probability of sending a coherent pulse.
    pub p_send: f64,
    /// Mean photon number of the signal pulse.
    pub mu: f64,
    /// Half-width of the phase-sifting window, radians.
    pub delta: f64,
    pub phases: Phases,
}

impl ProtocolParams {
    pub fn new(p_send: f64, mu: f64, delta: f64, phases: Phases) -> Result<Self> {
        let proto = ProtocolParams {
            p_send,
            mu,
            delta,
            phases,
        };
        proto.validate()?;
        Ok(proto)
    }

    pub fn continuous(p_send: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::new(p_send, mu, delta, Phases::Continuous)
    }

    /// Discrete phases; the sifting window is unused and stored as `pi`.
    pub fn discrete(p_send: f64, mu: f64, phases: Phases) -> Result<Self> {
        Self::new(p_send, mu, PI, phases)
    }

    /// The sending probability may sit on either end of `[0, 1]` so that
    /// degenerate "never send" points can still be tabulated; the optimiser
    /// only searches the interior.
    pub fn validate(&self) -> Result<()> {
        check_probability("p_send", self.p_send)?;
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "intensity must be finite and >= 0",
            });
        }
        if !(self.delta > 0.0 && self.delta <= PI) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                reason: "sifting half-width must lie in (0, pi]",
            });
        }
        Ok(())
    }

    /// Probability that a round passes one detector's phase sifting.
    pub fn sifting_efficiency(&self) -> f64 {
        match self.phases {
            Phases::Continuous => self.delta / PI,
            Phases::Two => 0.5,
            Phases::Four => 0.25,
        }
    }
}
