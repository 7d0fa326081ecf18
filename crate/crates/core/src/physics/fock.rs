//! Exact click probabilities of two-mode Fock states.
//!
//! The measurement is the one implied by the coherent-state click formulas:
//! a threshold detector whose no-click element is
//! `(1 - d) :exp(-tau (n_a + n_b) + sigma kappa (a^dag b + b^dag a)):` with
//! `tau = t/2`, `kappa = (1 - 2 e_mis) t/2`, `sigma = +1` on the right
//! (destructive) detector and `-1` on the left one. In the modes
//! `c_pm = (a +- b)/sqrt2` this is plain loss detection, so any Fock
//! superposition can be evaluated in closed form. This is the "truth" that
//! synthetic decoy data is generated from, and the printed worst-case
//! formulas for two or more photons are upper bounds on it.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::params::{ChannelPoint, DeviceParams};
use crate::numeric::{average, binomial, clamp_prob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Left,
    Right,
}

impl Detector {
    fn sigma(self) -> f64 {
        match self {
            Detector::Right => 1.0,
            Detector::Left => -1.0,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Left => "left",
            Detector::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockModel {
    tau: f64,
    kappa: f64,
    dark: f64,
}

impl FockModel {
    pub fn new(dev: &DeviceParams, ch: &ChannelPoint) -> Self {
        let tau = 0.5 * ch.arm_eta;
        FockModel {
            tau,
            kappa: tau * (1.0 - 2.0 * dev.misalign),
            dark: dev.dark,
        }
    }

    fn click(&self, no_click_light: f64) -> f64 {
        // exact for no light
        clamp_prob(self.dark + (1.0 - self.dark) * (1.0 - no_click_light))
    }

    /// `n` photons in the single mode `(a + e^{i phase} b)/sqrt2`: each photon
    /// reaches the detector independently.
    pub fn supermode_yield(&self, det: Detector, n: usize, phase: f64) -> f64 {
        let per_photon = self.tau - det.sigma() * self.kappa * phase.cos();
        let miss = (n as f64 * (-per_photon).ln_1p()).exp();
        self.click(miss)
    }

    /// [`Self::supermode_yield`] averaged over `phase` in `[center - half, center + half]`.
    pub fn supermode_yield_avg(&self, det: Detector, n: usize, center: f64, half: f64) -> f64 {
        average(
            |x| self.supermode_yield(det, n, x),
            center - half,
            center + half,
        )
    }

    /// The product state `|j>_a |k>_b`; the same for both detectors.
    pub fn pair_yield(&self, j: usize, k: usize) -> f64 {
        let miss1 = 1.0 - self.tau;
        let k2 = self.kappa * self.kappa;
        let no_click: f64 = (0..=j.min(k))
            .map(|m| {
                binomial(j, m)
                    * binomial(k, m)
                    * k2.powi(m as i32)
                    * miss1.powi((j + k - 2 * m) as i32)
            })
            .sum();
        self.click(no_click)
    }

    /// `(e^{ij phase}|0j> + sign |j0>)/sqrt2`.
    pub fn superposition_yield(&self, det: Detector, j: usize, sign: f64, phase: f64) -> f64 {
        let cross = (det.sigma() * self.kappa).powi(j as i32) * sign * (j as f64 * phase).cos();
        self.click((1.0 - self.tau).powi(j as i32) + cross)
    }

    /// [`Self::superposition_yield`] averaged over `[center - half, center + half]`.
    pub fn superposition_yield_avg(
        &self,
        det: Detector,
        j: usize,
        sign: f64,
        center: f64,
        half: f64,
    ) -> f64 {
        if j == 0 {
            return self.click(1.0) * (1.0 + sign);
        }
        // mean of cos(j x) over the window, in closed form
        let jf = j as f64;
        let mean_cos = (jf * center).cos() * sinc(jf * half);
        let cross = (det.sigma() * self.kappa).powi(j as i32) * sign * mean_cos;
        self.click((1.0 - self.tau).powi(j as i32) + cross)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
