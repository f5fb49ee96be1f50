//! Ion Coulomb crystals in linear RF and Penning traps: trap fields,
//! equilibrium structures, normal modes, laser-cooled molecular dynamics,
//! plasma and structure diagnostics, and synthetic fluorescence images.

pub mod constants;
pub mod diagnostics;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod imaging;
pub mod interactions;
pub mod linalg;
pub mod modes;
pub mod rng;
pub mod state;
pub mod trap;

pub use constants::{species_from_catalog, IonSpecies, PhysicalConstants};
pub use error::{Error, Result};
pub use interactions::EnergyBreakdown;
pub use state::SystemState;
pub use trap::{LinearRfTrap, PenningFrame, PenningTrap, RfMode, TrapConfig};
