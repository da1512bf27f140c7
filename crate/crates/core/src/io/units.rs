//! Conversion between SI-flavoured quantities and internal units.
//!
//! Internally `hbar = m = 1` and lengths are measured in `L0 = 1 um`, so the
//! time unit is `T0 = m L0^2 / hbar`.

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054571817e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.66053906660e-27;
pub const LENGTH_UNIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    pub mass_u: f64,
    pub mass_kg: f64,
    /// Internal time unit in seconds.
    pub time_unit: f64,
}

/// Physical dimension of a scenario value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Velocity,
    /// Rates and energies divided by hbar (`V0` in `hbar/s`).
    Rate,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Time => "time",
            Dimension::Velocity => "velocity",
            Dimension::Rate => "rate",
        }
    }
}

/// SI value of one unit of `suffix` in the given dimension.
fn si_factor(dim: Dimension, suffix: &str) -> Option<f64> {
    Some(match (dim, suffix) {
        (Dimension::Length, "m") => 1.0,
        (Dimension::Length, "mm") => 1e-3,
        (Dimension::Length, "um") => 1e-6,
        (Dimension::Length, "nm") => 1e-9,
        (Dimension::Time, "s") => 1.0,
        (Dimension::Time, "ms") => 1e-3,
        (Dimension::Time, "us") => 1e-6,
        (Dimension::Time, "ns") => 1e-9,
        (Dimension::Velocity, "m/s") => 1.0,
        (Dimension::Velocity, "cm/s") => 1e-2,
        (Dimension::Velocity, "mm/s") => 1e-3,
        (Dimension::Velocity, "um/ms") => 1e-3,
        (Dimension::Rate, "hbar/s") => 1.0,
        (Dimension::Rate, "hbar/ms") => 1e3,
        (Dimension::Rate, "hbar/us") => 1e6,
        (Dimension::Rate, "hbar/ns") => 1e9,
        _ => return None,
    })
}

impl Units {
    pub fn for_mass(mass_u: f64) -> Result<Self> {
        if !(mass_u > 0.0) || !mass_u.is_finite() {
            return Err(Error::Scenario(format!("mass {mass_u} u must be positive")));
        }
        let mass_kg = mass_u * ATOMIC_MASS_UNIT;
        Ok(Self {
            mass_u,
            mass_kg,
            time_unit: mass_kg * LENGTH_UNIT * LENGTH_UNIT / HBAR,
        })
    }

    /// Internal value of one SI unit of `dim`.
    pub fn internal_per_si(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Length => 1.0 / LENGTH_UNIT,
            Dimension::Time => 1.0 / self.time_unit,
            Dimension::Velocity => self.time_unit / LENGTH_UNIT,
            Dimension::Rate => self.time_unit,
        }
    }

    pub fn to_internal(&self, dim: Dimension, si: f64) -> f64 {
        si * self.internal_per_si(dim)
    }

    pub fn to_si(&self, dim: Dimension, internal: f64) -> f64 {
        internal / self.internal_per_si(dim)
    }

    /// Parses `"<number> <unit>"` into internal units.
    pub fn parse(&self, dim: Dimension, text: &str) -> Result<f64> {
        let (value, suffix) = split_quantity(text)?;
        let factor = si_factor(dim, suffix).ok_or_else(|| {
            Error::Scenario(format!("'{text}': unknown {} unit '{suffix}'", dim.name()))
        })?;
        Ok(self.to_internal(dim, value * factor))
    }
}

/// Splits `"23.5 um"` into `(23.5, "um")`.
pub fn split_quantity(text: &str) -> Result<(f64, &str)> {
    let text = text.trim();
    let mut parts = text.splitn(2, char::is_whitespace);
    let number = parts.next().unwrap_or("");
    let suffix = parts.next().map(str::trim).unwrap_or("");
    if suffix.is_empty() {
        return Err(Error::Scenario(format!("'{text}': a unit is required")));
    }
    let value: f64 = number
        .parse()
        .map_err(|_| Error::Scenario(format!("'{text}': '{number}' is not a number")))?;
    if !value.is_finite() {
        return Err(Error::Scenario(format!("'{text}': value must be finite")));
    }
    Ok((value, suffix))
}
