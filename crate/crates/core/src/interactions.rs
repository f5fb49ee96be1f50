//! Coulomb interaction and total potential energy.
//!
//! Direct O(N²) summation without softening. The serial kernel visits
//! pairs in ascending (i, j) order so results are bit-reproducible; the
//! parallel kernel agrees with it to rounding (≲1e-12 relative).

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::constants::{IonSpecies, COULOMB_CONSTANT};
use crate::error::{Error, Result};
use crate::state::{SystemState, MIN_SEPARATION};
use crate::trap::{trap_energy, trap_force, TrapConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// J
    pub trap_energy: f64,
    /// J
    pub coulomb_energy: f64,
    /// J
    pub total: f64,
}

/// Coulomb force on every ion. Errors if any pair is closer than 1 nm.
pub fn coulomb_forces(positions: &[Vector3<f64>], charges: &[f64]) -> Result<Vec<Vector3<f64>>> {
    let n = positions.len();
    let mut forces = vec![Vector3::zeros(); n];
    for i in 0..n {
        let ri = positions[i];
        let kqi = COULOMB_CONSTANT * charges[i];
        for j in (i + 1)..n {
            let d = ri - positions[j];
            let r2 = d.norm_squared();
            let r = r2.sqrt();
            if r < MIN_SEPARATION {
                return Err(Error::CoincidentIons { i, j, distance: r });
            }
            let f = d * (kqi * charges[j] / (r2 * r));
            forces[i] += f;
            forces[j] -= f;
        }
    }
    Ok(forces)
}

/// Data-parallel variant of [`coulomb_forces`]; each ion sums over all
/// partners independently.
pub fn coulomb_forces_parallel(positions: &[Vector3<f64>], charges: &[f64]) -> Result<Vec<Vector3<f64>>> {
    positions
        .par_iter()
        .enumerate()
        .map(|(i, ri)| {
            let mut f = Vector3::zeros();
            let kqi = COULOMB_CONSTANT * charges[i];
            for (j, rj) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = ri - rj;
                let r2 = d.norm_squared();
                let r = r2.sqrt();
                if r < MIN_SEPARATION {
                    return Err(Error::CoincidentIons { i: i.min(j), j: i.max(j), distance: r });
                }
                f += d * (kqi * charges[j] / (r2 * r));
            }
            Ok(f)
        })
        .collect()
}

pub fn coulomb_energy(positions: &[Vector3<f64>], charges: &[f64]) -> Result<f64> {
    let n = positions.len();
    let mut energy = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (positions[i] - positions[j]).norm();
            if r < MIN_SEPARATION {
                return Err(Error::CoincidentIons { i, j, distance: r });
            }
            energy += charges[i] * charges[j] / r;
        }
    }
    Ok(COULOMB_CONSTANT * energy)
}

/// Trap plus Coulomb potential energy. Only defined for conservative
/// modelling (pseudopotential or Penning rotating frame).
pub fn total_potential_energy(state: &SystemState, species: &[IonSpecies], trap: &TrapConfig) -> Result<EnergyBreakdown> {
    potential_energy_at(&state.positions, &state.species_index, species, trap)
}

pub fn potential_energy_at(
    positions: &[Vector3<f64>],
    species_index: &[usize],
    species: &[IonSpecies],
    trap: &TrapConfig,
) -> Result<EnergyBreakdown> {
    let mut trap_e = 0.0;
    for (p, &s) in positions.iter().zip(species_index) {
        trap_e += trap_energy(trap, &species[s], p)?;
    }
    let charges: Vec<f64> = species_index.iter().map(|&s| species[s].charge).collect();
    let coulomb = coulomb_energy(positions, &charges)?;
    Ok(EnergyBreakdown {
        trap_energy: trap_e,
        coulomb_energy: coulomb,
        total: trap_e + coulomb,
    })
}

/// Position-dependent force (trap + Coulomb) on every ion at `time`.
pub fn total_forces(
    positions: &[Vector3<f64>],
    species_index: &[usize],
    species: &[IonSpecies],
    trap: &TrapConfig,
    time: f64,
) -> Result<Vec<Vector3<f64>>> {
    let charges: Vec<f64> = species_index.iter().map(|&s| species[s].charge).collect();
    let mut forces = coulomb_forces(positions, &charges)?;
    for ((f, p), &s) in forces.iter_mut().zip(positions).zip(species_index) {
        *f += trap_force(trap, &species[s], p, time);
    }
    Ok(forces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{species_from_catalog, ELEMENTARY_CHARGE};
    use crate::trap::LinearRfTrap;
    use std::f64::consts::PI;

    const E: f64 = ELEMENTARY_CHARGE;

    #[test]
    fn two_charges_ten_microns() {
        // k e² / (10 µm)² = 8.98755e9 * (1.602177e-19)² / 1e-10 = 2.30708e-18 N
        let pos = [Vector3::zeros(), Vector3::new(0.0, 0.0, 10e-6)];
        let f = coulomb_forces(&pos, &[E, E]).unwrap();
        assert!((f[1].z - 2.307_077_5e-18).abs() < 1e-24);
        assert_eq!(f[0], -f[1]);
        assert_eq!(f[1].x, 0.0);
    }

    #[test]
    fn single_ion_feels_nothing() {
        let f = coulomb_forces(&[Vector3::new(1e-6, 2e-6, 3e-6)], &[E]).unwrap();
        assert_eq!(f[0], Vector3::zeros());
    }

    #[test]
    fn coincident_ions_error() {
        let pos = [Vector3::zeros(), Vector3::new(1e-10, 0.0, 0.0)];
        assert!(matches!(coulomb_forces(&pos, &[E, E]), Err(Error::CoincidentIons { i: 0, j: 1, .. })));
        assert!(coulomb_energy(&pos, &[E, E]).is_err());
        assert!(coulomb_forces_parallel(&pos, &[E, E]).is_err());
    }

    #[test]
    fn one_ion_at_origin_has_zero_energy() {
        let ca = species_from_catalog("Ca40").unwrap();
        let trap = LinearRfTrap::from_secular(&ca, 1e-3, 2.0 * PI * 20e6, 2.0 * PI * 2e6, 2.0 * PI * 5e5, 0.0).unwrap();
        let state = SystemState::at_rest(vec![Vector3::zeros()]);
        let e = total_potential_energy(&state, &[ca], &TrapConfig::pseudopotential(trap)).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn full_drive_energy_is_an_error() {
        let ca = species_from_catalog("Ca40").unwrap();
        let trap = LinearRfTrap::from_secular(&ca, 1e-3, 2.0 * PI * 20e6, 2.0 * PI * 2e6, 2.0 * PI * 5e5, 0.0).unwrap();
        let state = SystemState::at_rest(vec![Vector3::zeros()]);
        assert!(total_potential_energy(&state, &[ca], &TrapConfig::full_drive(trap)).is_err());
    }
}
