use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown species `{name}`; available: {available}")]
    UnknownSpecies { name: String, available: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("RF trap unstable: Mathieu q = {q:.4} exceeds the hard limit {limit}")]
    UnstableRf { q: f64, limit: f64 },

    #[error("Penning trap unstable: omega_z^2 = {omega_z_sq:.6e} exceeds omega_c^2/2 = {half_omega_c_sq:.6e}")]
    UnstablePenning { omega_z_sq: f64, half_omega_c_sq: f64 },

    #[error("rotation frequency {omega_r:.6e} rad/s outside the confining band [{lower:.6e}, {upper:.6e}]")]
    RotationOutOfBand { omega_r: f64, lower: f64, upper: f64 },

    #[error("ions {i} and {j} are {distance:.3e} m apart (minimum 1 nm); reduce dt or start from an annealed configuration")]
    CoincidentIons { i: usize, j: usize, distance: f64 },

    #[error("the full RF drive has no conserved potential; use the dynamics module for full-drive runs")]
    FullDriveHasNoPotential,

    #[error("configuration is not an equilibrium: max per-ion force {gradient_norm:.3e} N exceeds {tolerance:.3e} N")]
    NotAtEquilibrium { gradient_norm: f64, tolerance: f64 },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} relative")]
    AsymmetricMatrix { asymmetry: f64 },

    #[error("time step {dt:.3e} s exceeds the limit {dt_max:.3e} s")]
    TimeStepTooLarge { dt: f64, dt_max: f64 },

    #[error("empty selection: {0}")]
    EmptySelection(&'static str),

    #[error("chain is not in the zigzag regime: max transverse displacement {max_amplitude:.3e} m below noise floor {noise_floor:.3e} m")]
    NotZigzag { max_amplitude: f64, noise_floor: f64 },

    #[error("quench schedule does not cross the linear-zigzag transition (critical ratio {critical:.4}, start {start:.4}, end {end:.4})")]
    QuenchDoesNotCross { critical: f64, start: f64, end: f64 },

    #[error("no trajectory samples accepted by the camera gate")]
    NoAcceptedSamples,

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
