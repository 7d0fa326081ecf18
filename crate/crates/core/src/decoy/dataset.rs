//! Observed decoy gains and their text format.
//!
//! A dataset file is CSV with the header `intensity,class,detector,gain` and
//! one observation per line. `class` is `matched`, `opposite` or
//! `independent`; `detector` is `left` or `right`. Lines starting with `#`
//! are comments.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::Detector;

/// How the two parties' phases relate in the sifted rounds of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiftClass {
    /// Phase difference within the sifting window around 0.
    Matched,
    /// Phase difference within the sifting window around `pi`.
    Opposite,
    /// Independent uniformly random phases.
    Independent,
}

impl fmt::Display for SiftClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SiftClass::Matched => "matched",
            SiftClass::Opposite => "opposite",
            SiftClass::Independent => "independent",
        })
    }
}

/// Both parties send intensity `intensity`; `gain` is the click probability
/// of `detector` in rounds of `class`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub intensity: f64,
    pub class: SiftClass,
    pub detector: Detector,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecoyDataset {
    pub entries: Vec<Observation>,
}

#[derive(Deserialize)]
struct Row {
    intensity: f64,
    class: SiftClass,
    detector: Detector,
    gain: f64,
}

impl DecoyDataset {
    pub fn new(entries: Vec<Observation>) -> Result<Self> {
        let ds = DecoyDataset { entries };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::IllPosedDataset("no observations".into()));
        }
        for (i, o) in self.entries.iter().enumerate() {
            if !(o.intensity >= 0.0 && o.intensity.is_finite()) {
                return Err(Error::IllPosedDataset(format!(
                    "observation {}: intensity {} must be finite and >= 0",
                    i + 1,
                    o.intensity
                )));
            }
            if !(0.0..=1.0).contains(&o.gain) {
                return Err(Error::IllPosedDataset(format!(
                    "observation {}: gain {} outside [0, 1]",
                    i + 1,
                    o.gain
                )));
            }
        }
        Ok(())
    }

    /// Observations of one detector.
    pub fn for_detector(&self, det: Detector) -> impl Iterator<Item = &Observation> {
        self.entries.iter().filter(move |o| o.detector == det)
    }

    /// Whether `det` has a vacuum observation and two distinct non-zero
    /// intensities, the minimum for informative bounds.
    pub fn is_well_posed(&self, det: Detector) -> bool {
        let mut nonzero: Vec<f64> = self
            .for_detector(det)
            .map(|o| o.intensity)
            .filter(|&v| v > 0.0)
            .collect();
        nonzero.sort_by(f64::total_cmp);
        nonzero.dedup();
        self.for_detector(det).any(|o| o.intensity == 0.0) && nonzero.len() >= 2
    }

    /// Distinct intensities present, ascending.
    pub fn intensities(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().map(|o| o.intensity).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Keep only observations at the given intensities.
    pub fn restricted_to(&self, intensities: &[f64]) -> DecoyDataset {
        DecoyDataset {
            entries: self
                .entries
                .iter()
                .filter(|o| intensities.contains(&o.intensity))
                .copied()
                .collect(),
        }
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(i + 2, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            entries.push(Observation {
                intensity: row.intensity,
                class: row.class,
                detector: row.detector,
                gain: row.gain,
            });
        }
        Self::new(entries)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file))
    }

    /// Writes the CSV form; gains use the shortest round-trip representation.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "intensity,class,detector,gain")?;
        for o in &self.entries {
            writeln!(
                out,
                "{:e},{},{},{:e}",
                o.intensity, o.class, o.detector, o.gain
            )?;
        }
        Ok(())
    }
}
