use nalgebra::Vector3;

use crate::constants::IonSpecies;
use crate::error::{Error, Result};

/// Minimum allowed separation between two ions (m).
pub const MIN_SEPARATION: f64 = 1e-9;

/// Positions, velocities and species of N ions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Index into the run's species table, one per ion.
    pub species_index: Vec<usize>,
    /// s
    pub time: f64,
}

impl SystemState {
    /// Ions at rest, all of species 0.
    pub fn at_rest(positions: Vec<Vector3<f64>>) -> Self {
        let n = positions.len();
        Self {
            positions,
            velocities: vec![Vector3::zeros(); n],
            species_index: vec![0; n],
            time: 0.0,
        }
    }

    pub fn with_species(mut self, species_index: Vec<usize>) -> Self {
        assert_eq!(species_index.len(), self.positions.len());
        self.species_index = species_index;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks finiteness, species indices and the minimum separation.
    pub fn validate(&self, species: &[IonSpecies]) -> Result<()> {
        let n = self.len();
        if self.velocities.len() != n || self.species_index.len() != n {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: "positions, velocities and species_index differ in length".into(),
            });
        }
        if let Some(&bad) = self.species_index.iter().find(|&&s| s >= species.len()) {
            return Err(Error::InvalidParameter {
                name: "species_index",
                reason: format!("index {bad} outside species table of {}", species.len()),
            });
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !self.positions.iter().all(finite) || !self.velocities.iter().all(finite) {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: "non-finite coordinate".into(),
            });
        }
        check_separation(&self.positions)
    }

    pub fn charges(&self, species: &[IonSpecies]) -> Vec<f64> {
        self.species_index.iter().map(|&s| species[s].charge).collect()
    }

    pub fn masses(&self, species: &[IonSpecies]) -> Vec<f64> {
        self.species_index.iter().map(|&s| species[s].mass).collect()
    }
}

/// Errors on the first pair closer than [`MIN_SEPARATION`].
pub fn check_separation(positions: &[Vector3<f64>]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            if d < MIN_SEPARATION || !d.is_finite() {
                return Err(Error::CoincidentIons { i, j, distance: d });
            }
        }
    }
    Ok(())
}
