//! Physical constants and ion species.
//!
//! Everything is SI. Isotope masses are neutral-atom masses from the
//! AME2020 atomic mass evaluation (Wang et al., Chin. Phys. C 45, 030003),
//! rounded to nine decimals in u.

use crate::error::{Error, Result};

/// Elementary charge (C), exact in the 2019 SI.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity (F/m), CODATA 2022.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_818_8e-12;
/// Boltzmann constant (J/K), exact in the 2019 SI.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Atomic mass constant (kg), CODATA 2022.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_068_92e-27;

/// Coulomb constant 1/(4 pi eps0).
pub const COULOMB_CONSTANT: f64 = 1.0 / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY);

/// The constant set as a value, for code that wants to carry it around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub elementary_charge: f64,
    pub vacuum_permittivity: f64,
    pub boltzmann: f64,
    pub atomic_mass_unit: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        elementary_charge: ELEMENTARY_CHARGE,
        vacuum_permittivity: VACUUM_PERMITTIVITY,
        boltzmann: BOLTZMANN,
        atomic_mass_unit: ATOMIC_MASS_UNIT,
    };

    pub fn coulomb_constant(&self) -> f64 {
        1.0 / (4.0 * std::f64::consts::PI * self.vacuum_permittivity)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

pub fn amu_to_kg(mass_u: f64) -> f64 {
    mass_u * ATOMIC_MASS_UNIT
}

pub fn kg_to_amu(mass_kg: f64) -> f64 {
    mass_kg / ATOMIC_MASS_UNIT
}

/// One particle type: mass, charge, and whether it scatters cooling light.
#[derive(Debug, Clone, PartialEq)]
pub struct IonSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    /// Scatters light, so it shows up in images.
    pub fluorescent: bool,
    /// Subject to laser-cooling friction and recoil noise.
    pub cooled: bool,
}

impl IonSpecies {
    /// Species with mass in u and charge in units of e. Both must be positive.
    pub fn new(name: impl Into<String>, mass_u: f64, charge_state: u32) -> Result<Self> {
        if !(mass_u.is_finite() && mass_u > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mass",
                reason: format!("must be positive, got {mass_u} u"),
            });
        }
        if charge_state == 0 {
            return Err(Error::InvalidParameter {
                name: "charge",
                reason: "charge state must be a positive multiple of e".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            mass: amu_to_kg(mass_u),
            charge: charge_state as f64 * ELEMENTARY_CHARGE,
            fluorescent: true,
            cooled: true,
        })
    }

    /// A non-fluorescent, uncooled copy (sympathetically cooled ion).
    pub fn dark(mut self) -> Self {
        self.fluorescent = false;
        self.cooled = false;
        self
    }

    pub fn mass_u(&self) -> f64 {
        kg_to_amu(self.mass)
    }

    pub fn charge_state(&self) -> f64 {
        self.charge / ELEMENTARY_CHARGE
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }
}

/// (name, neutral isotope mass in u)
const CATALOG: &[(&str, f64)] = &[
    ("Be9", 9.012_183_062),
    ("Mg24", 23.985_041_689),
    ("Mg25", 24.985_836_965),
    ("Mg26", 25.982_592_971),
    ("Al27", 26.981_538_408),
    ("Ca40", 39.962_590_850),
    ("Ca43", 42.958_766_380),
    ("Ca44", 43.955_481_560),
    ("Sr88", 87.905_612_500),
    ("Ba137", 136.905_827_210),
    ("Ba138", 137.905_247_000),
    ("Yb171", 170.936_331_500),
    ("Yb172", 171.936_386_700),
    ("Yb174", 173.938_867_500),
];

/// Names accepted by [`species_from_catalog`].
pub fn catalog_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|(name, _)| *name)
}

/// Singly charged, fluorescent, cooled species from the built-in isotope table.
pub fn species_from_catalog(name: &str) -> Result<IonSpecies> {
    CATALOG
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(n, mass_u)| IonSpecies::new(n, mass_u, 1).expect("catalog entries are valid"))
        .ok_or_else(|| Error::UnknownSpecies {
            name: name.to_string(),
            available: catalog_names().collect::<Vec<_>>().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_calcium_and_beryllium() {
        let ca = species_from_catalog("Ca40").unwrap();
        assert!((ca.mass_u() - 39.9626).abs() < 1e-4);
        assert!((ca.mass - 39.962_590_85 * 1.660_539_068_92e-27).abs() < 1e-36);
        assert_eq!(ca.charge, ELEMENTARY_CHARGE);
        assert!(ca.fluorescent && ca.cooled);

        let be = species_from_catalog("Be9").unwrap();
        assert!((be.mass_u() - 9.0122).abs() < 1e-4);
        assert_eq!(be.charge_state(), 1.0);
    }

    #[test]
    fn unknown_species_lists_catalog() {
        let err = species_from_catalog("unobtainium").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unobtainium"));
        assert!(msg.contains("Ca40") && msg.contains("Yb174"));
    }

    #[test]
    fn mass_round_trip() {
        for name in catalog_names() {
            let s = species_from_catalog(name).unwrap();
            let (_, m) = CATALOG.iter().find(|(n, _)| *n == name).unwrap();
            assert!((s.mass_u() - m).abs() / m < 1e-12);
            assert_eq!(s, species_from_catalog(name).unwrap());
        }
    }

    #[test]
    fn constants_positive() {
        let c = PhysicalConstants::default();
        for v in [c.elementary_charge, c.vacuum_permittivity, c.boltzmann, c.atomic_mass_unit] {
            assert!(v > 0.0);
        }
        assert!((c.coulomb_constant() - 8.987_551_786e9).abs() < 1.0);
    }

    #[test]
    fn rejects_bad_species() {
        assert!(IonSpecies::new("x", -1.0, 1).is_err());
        assert!(IonSpecies::new("x", 40.0, 0).is_err());
        let d = IonSpecies::new("x", 40.0, 2).unwrap().dark();
        assert!(!d.fluorescent && !d.cooled);
        assert_eq!(d.charge_state(), 2.0);
    }
}
