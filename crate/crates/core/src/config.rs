//! Run configuration, read from TOML.
//!
//! Every section is optional and defaults to the reference device, a 0 to
//! 200 dB grid at 1 dB, the baseline and continuous-postselection variants,
//! and three validation points. Unknown keys are rejected.
//!
//! ```toml
//! variants = ["sns", "ps", "ps-m2"]
//!
//! [device]
//! dark = 1e-10
//!
//! [losses]
//! start = 0.0
//! stop = 80.0
//! step = 2.0
//!
//! [optimizer]
//! start = "cold"
//! bounds = { p = [0.001, 0.5], mu = [0.001, 1.0], delta = [0.001, 1.5707963] }
//!
//! [mc]
//! rounds = 1000000
//! seed = 7
//! points = [{ loss_db = 20.0, p = 0.3, mu = 0.2, delta = 0.5, variant = "ps" }]
//!
//! [output]
//! path = "curves.csv"
//! format = "csv"
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::keyrate::{PhaseKind, Variant};
use crate::optimize::{loss_grid, OptimizerSettings, SearchBox, StartMode};
use crate::physics::{DeviceParams, ProtocolParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variants: Vec<Variant>,
    pub device: DeviceParams,
    pub losses: LossGrid,
    pub optimizer: OptimizerConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variants: vec![Variant::Sns, Variant::Postselection(PhaseKind::Continuous)],
            device: DeviceParams::REFERENCE,
            losses: LossGrid::default(),
            optimizer: OptimizerConfig::default(),
            mc: McConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for LossGrid {
    fn default() -> Self {
        LossGrid {
            start: 0.0,
            stop: 200.0,
            step: 1.0,
        }
    }
}

impl LossGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        loss_grid(self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub start: StartMode,
    pub bounds: SearchBox,
    pub grid_points: usize,
    pub rel_tol: f64,
    pub max_sweeps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = OptimizerSettings::default();
        OptimizerConfig {
            start: StartMode::Warm,
            bounds: s.bounds,
            grid_points: s.grid_points,
            rel_tol: s.rel_tol,
            max_sweeps: s.max_sweeps,
        }
    }
}

impl OptimizerConfig {
    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            bounds: self.bounds,
            grid_points: self.grid_points,
            rel_tol: self.rel_tol,
            max_sweeps: self.max_sweeps,
            keep_trace: false,
        }
    }
}

/// One analytic-versus-sampled comparison point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationPoint {
    pub loss_db: f64,
    pub p: f64,
    pub mu: f64,
    /// Sifting half-width; ignored for discrete variants.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_delta() -> f64 {
    0.5
}

fn default_variant() -> Variant {
    Variant::Postselection(PhaseKind::Continuous)
}

impl ValidationPoint {
    pub fn protocol(&self) -> Result<ProtocolParams> {
        let delta = if self.variant.uses_delta() {
            self.delta
        } else {
            std::f64::consts::PI
        };
        ProtocolParams::new(self.p, self.mu, delta, self.variant.phases())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub rounds: u64,
    pub seed: u64,
    pub points: Vec<ValidationPoint>,
}

impl Default for McConfig {
    fn default() -> Self {
        let point = |loss_db, p, mu, variant| ValidationPoint {
            loss_db,
            p,
            mu,
            delta: 0.5,
            variant,
        };
        McConfig {
            rounds: 100_000_000,
            seed: 1,
            points: vec![
                point(
                    0.0,
                    0.25,
                    0.3,
                    Variant::Postselection(PhaseKind::Continuous),
                ),
                point(
                    20.0,
                    0.25,
                    0.22,
                    Variant::Postselection(PhaseKind::Continuous),
                ),
                point(40.0, 0.38, 0.17, Variant::Postselection(PhaseKind::Two)),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Standard output when absent.
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.losses.points()?;
        self.optimizer.settings().validate()?;
        for p in &self.mc.points {
            p.protocol()?;
            if !(p.loss_db >= 0.0 && p.loss_db.is_finite()) {
                return Err(Error::Config(format!(
                    "validation loss {} must be >= 0",
                    p.loss_db
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }
}
