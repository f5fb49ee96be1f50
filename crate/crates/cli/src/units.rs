//! Quantities with units as written in config files.
//!
//! A quantity keeps the number and unit exactly as given so a config can
//! be written back out unchanged; [`Quantity::si`] gives the SI value
//! (angular frequencies in rad/s).

use std::f64::consts::PI;
use std::fmt;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Rate,
    Voltage,
    Length,
    Time,
    Temperature,
    HeatingRate,
    MagneticField,
    Force,
    Curvature,
    Mass,
    Dimensionless,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Frequency => "frequency",
            Self::Rate => "rate",
            Self::Voltage => "voltage",
            Self::Length => "length",
            Self::Time => "time",
            Self::Temperature => "temperature",
            Self::HeatingRate => "heating rate",
            Self::MagneticField => "magnetic field",
            Self::Force => "force",
            Self::Curvature => "field curvature",
            Self::Mass => "mass",
            Self::Dimensionless => "dimensionless",
        }
    }
}

/// (spelling, dimension, factor to SI). The first spelling per dimension is
/// the canonical one used in error messages.
const UNITS: &[(&str, Dimension, f64)] = &[
    ("Hz", Dimension::Frequency, 2.0 * PI),
    ("kHz", Dimension::Frequency, 2.0 * PI * 1e3),
    ("MHz", Dimension::Frequency, 2.0 * PI * 1e6),
    ("GHz", Dimension::Frequency, 2.0 * PI * 1e9),
    ("rad/s", Dimension::Frequency, 1.0),
    ("1/s", Dimension::Rate, 1.0),
    ("/s", Dimension::Rate, 1.0),
    ("s^-1", Dimension::Rate, 1.0),
    ("V", Dimension::Voltage, 1.0),
    ("mV", Dimension::Voltage, 1e-3),
    ("kV", Dimension::Voltage, 1e3),
    ("m", Dimension::Length, 1.0),
    ("mm", Dimension::Length, 1e-3),
    ("um", Dimension::Length, 1e-6),
    ("µm", Dimension::Length, 1e-6),
    ("nm", Dimension::Length, 1e-9),
    ("s", Dimension::Time, 1.0),
    ("ms", Dimension::Time, 1e-3),
    ("us", Dimension::Time, 1e-6),
    ("µs", Dimension::Time, 1e-6),
    ("ns", Dimension::Time, 1e-9),
    ("K", Dimension::Temperature, 1.0),
    ("mK", Dimension::Temperature, 1e-3),
    ("uK", Dimension::Temperature, 1e-6),
    ("µK", Dimension::Temperature, 1e-6),
    ("K/s", Dimension::HeatingRate, 1.0),
    ("mK/s", Dimension::HeatingRate, 1e-3),
    ("T", Dimension::MagneticField, 1.0),
    ("mT", Dimension::MagneticField, 1e-3),
    ("N", Dimension::Force, 1.0),
    ("V/m^2", Dimension::Curvature, 1.0),
    ("V/mm^2", Dimension::Curvature, 1e6),
    ("u", Dimension::Mass, 1.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    /// Index into the unit table; `None` for a bare number.
    unit: Option<usize>,
}

impl Quantity {
    pub fn bare(value: f64) -> Self {
        Self { value, unit: None }
    }

    /// `value` in the named unit. Panics on an unknown spelling, which is
    /// a programming error.
    pub fn new(value: f64, unit: &str) -> Self {
        let idx = UNITS.iter().position(|(u, _, _)| *u == unit).expect("known unit");
        Self { value, unit: Some(idx) }
    }

    pub fn dimension(&self) -> Dimension {
        self.unit.map_or(Dimension::Dimensionless, |i| UNITS[i].1)
    }

    pub fn unit(&self) -> &'static str {
        self.unit.map_or("", |i| UNITS[i].0)
    }

    pub fn si(&self) -> f64 {
        self.value * self.unit.map_or(1.0, |i| UNITS[i].2)
    }

    /// Parses `"500 kHz"`, `"500kHz"` or a bare number.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text.is_empty() {
            return Err("empty value".into());
        }
        let split = (1..=text.len())
            .rev()
            .filter(|&i| text.is_char_boundary(i))
            .find(|&i| text[..i].trim_end().parse::<f64>().is_ok())
            .ok_or_else(|| format!("`{text}` does not start with a number"))?;
        let value: f64 = text[..split].trim_end().parse().expect("checked above");
        if !value.is_finite() {
            return Err(format!("`{text}` is not finite"));
        }
        let unit = text[split..].trim();
        if unit.is_empty() {
            return Ok(Self::bare(value));
        }
        UNITS
            .iter()
            .position(|(u, _, _)| *u == unit)
            .map(|idx| Self { value, unit: Some(idx) })
            .ok_or_else(|| format!("unknown unit `{unit}`"))
    }

    /// Parses and checks the dimension. Dimensional quantities need an
    /// explicit unit.
    pub fn parse_as(text: &str, dimension: Dimension) -> Result<Self, String> {
        let q = Self::parse(text)?;
        if q.dimension() != dimension {
            return Err(if q.unit.is_none() {
                format!("`{}` needs a {} unit such as {}", text.trim(), dimension.as_str(), example_unit(dimension))
            } else {
                format!("unit `{}` is a {}, expected a {}", q.unit(), q.dimension().as_str(), dimension.as_str())
            });
        }
        Ok(q)
    }
}

fn example_unit(dimension: Dimension) -> &'static str {
    UNITS.iter().find(|(_, d, _)| *d == dimension).map_or("", |(u, _, _)| u)
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{}` on f64 is the shortest string that parses back exactly.
        match self.unit {
            None => write!(f, "{}", self.value),
            Some(i) => write!(f, "{} {}", self.value, UNITS[i].0),
        }
    }
}

/// Error wrapper used by the config parser.
pub(crate) fn quantity(text: &str, dimension: Dimension, key: &str, line: usize) -> Result<Quantity, ConfigError> {
    Quantity::parse_as(text, dimension).map_err(|reason| ConfigError::at(line, key, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kilohertz_becomes_angular() {
        let q = Quantity::parse_as("500 kHz", Dimension::Frequency).unwrap();
        assert_eq!(q.si(), 2.0 * PI * 5e5);
        assert_eq!(q.to_string(), "500 kHz");
        assert_eq!(Quantity::parse("500kHz").unwrap(), q);
    }

    #[test]
    fn unit_mismatch_and_missing_unit() {
        let e = Quantity::parse_as("1 mm", Dimension::Frequency).unwrap_err();
        assert!(e.contains("length"), "{e}");
        let e = Quantity::parse_as("1.5", Dimension::Voltage).unwrap_err();
        assert!(e.contains("voltage"), "{e}");
        assert!(Quantity::parse("3 furlongs").is_err());
        assert!(Quantity::parse("kHz").is_err());
    }

    #[test]
    fn exponents_and_micro() {
        let q = Quantity::parse_as("2e5 /s", Dimension::Rate).unwrap();
        assert_eq!(q.si(), 2e5);
        let q = Quantity::parse_as("1e-3 mm", Dimension::Length).unwrap();
        assert!((q.si() - 1e-6).abs() < 1e-20);
        let q = Quantity::parse_as("3 µm", Dimension::Length).unwrap();
        assert!((q.si() - 3e-6).abs() < 1e-20);
    }

    #[test]
    fn display_round_trips() {
        for text in ["0.1 mK", "1.2345678901234567 MHz", "4.5 T", "17", "-0.25 V"] {
            let q = Quantity::parse(text).unwrap();
            assert_eq!(Quantity::parse(&q.to_string()).unwrap(), q);
        }
    }
}
