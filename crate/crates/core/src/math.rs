//! Numeric primitives shared by the channel model, the rate engines and the
//! simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when two closed forms of the same quantity are
/// compared.
pub const FORMULA_TOL: f64 = 1e-12;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        check_unit("probability", value)?;
        Ok(Probability(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "[0, 1]",
        })
    }
}

/// Binary Shannon entropy `h(x) = -x log2 x - (1-x) log2 (1-x)`, with
/// `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_unit("entropy argument", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Optical parameters of the fiber segment and detector owned by one
/// participant, measured from the network provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub distance_km: f64,
    /// η_d
    pub detector_efficiency: Probability,
    /// Dark-count rate, used directly as the background yield Y₀.
    pub dark_count: Probability,
    pub misalignment_x: Probability,
    pub misalignment_z: Probability,
    /// α in dB/km.
    pub attenuation_db_per_km: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km.is_finite() && self.distance_km >= 0.0) {
            return Err(Error::invalid(
                "distance_km",
                format!("{} must be finite and non-negative", self.distance_km),
            ));
        }
        if !(self.attenuation_db_per_km.is_finite() && self.attenuation_db_per_km >= 0.0) {
            return Err(Error::invalid(
                "attenuation_db_per_km",
                format!(
                    "{} must be finite and non-negative",
                    self.attenuation_db_per_km
                ),
            ));
        }
        Ok(())
    }

    pub fn at_distance(mut self, distance_km: f64) -> Self {
        self.distance_km = distance_km;
        self
    }

    /// Background yield Y₀.
    #[inline]
    pub fn background(&self) -> f64 {
        self.dark_count.value()
    }

    pub fn efficiency(&self) -> f64 {
        link_efficiency(self).value()
    }
}

/// Total transmittance η = η_d · 10^(−αL/10) of a participant's channel.
pub fn link_efficiency(link: &LinkParams) -> Probability {
    let fiber = 10f64.powf(-link.attenuation_db_per_km * link.distance_km / 10.0);
    // Both factors are in [0, 1]; the product cannot leave it.
    Probability((link.detector_efficiency.value() * fiber).clamp(0.0, 1.0))
}
