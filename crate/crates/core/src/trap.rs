//! Trap potentials, forces and characteristic frequencies.
//!
//! Two trap families are modelled:
//!
//! * the linear RF (Paul) trap, either through its time-averaged
//!   pseudopotential or with the full oscillating quadrupole drive;
//! * the Penning trap, in the frame co-rotating with the crystal (the
//!   default, where equilibria are stationary) or in the lab frame.
//!
//! Rotation convention: a positive ion in a field `B ẑ` performs its
//! magnetron and cyclotron orbits clockwise about `+z`, so a crystal at
//! rotation frequency `ω_r` has angular velocity `-ω_r ẑ`. Lab coordinates
//! are obtained from rotating-frame coordinates by a rotation through
//! `-ω_r t`. In the rotating frame a species with cyclotron frequency
//! `ω_c` feels an isotropic radial stiffness
//! `β² = ω_r (ω_c - ω_r) - ω_z²/2` and a gyroscopic force
//! `m (ω_c - 2 ω_r) v × ẑ` (a magnetic-like term at half-rate
//! `(ω_c - 2 ω_r)/2` in Larmor language).

use nalgebra::Vector3;

use crate::constants::IonSpecies;
use crate::error::{Error, Result};

/// Hard upper limit on the Mathieu parameter.
pub const Q_HARD_LIMIT: f64 = 0.9;
/// Above this the lowest-order secular frequency loses accuracy.
pub const Q_WARN_LIMIT: f64 = 0.3;

/// How the linear trap's radial confinement is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RfMode {
    #[default]
    Pseudopotential,
    FullDrive,
}

/// Which frame Penning dynamics are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenningFrame {
    #[default]
    Rotating,
    Lab,
}

/// Angular secular frequencies (rad/s) of one species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Secular {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Secular {
    pub fn squared(&self) -> Vector3<f64> {
        Vector3::new(self.x * self.x, self.y * self.y, self.z * self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRfTrap {
    /// Centre-to-electrode distance (m).
    pub r0: f64,
    /// RF amplitude (V).
    pub rf_amplitude: f64,
    /// RF drive angular frequency (rad/s).
    pub rf_angular_frequency: f64,
    /// Axial angular frequency (rad/s) of the reference species.
    pub axial_angular_frequency: f64,
    /// Fractional splitting of the radial curvatures: ω_x,y² = ω̄²(1 ± a).
    pub radial_asymmetry: f64,
    /// Charge-to-mass ratio (C/kg) at which `axial_angular_frequency` holds.
    /// The endcap well is static, so other species scale as √(q/m).
    pub axial_reference_charge_to_mass: f64,
}

impl LinearRfTrap {
    pub fn new(
        r0: f64,
        rf_amplitude: f64,
        rf_angular_frequency: f64,
        axial_angular_frequency: f64,
        reference: &IonSpecies,
    ) -> Result<Self> {
        let trap = Self {
            r0,
            rf_amplitude,
            rf_angular_frequency,
            axial_angular_frequency,
            radial_asymmetry: 0.0,
            axial_reference_charge_to_mass: reference.charge_to_mass(),
        };
        trap.validate(reference)?;
        Ok(trap)
    }

    /// Builds a trap whose mean radial secular frequency for `reference`
    /// equals `radial_angular_frequency`, solving q = 2√2 ω̄/Ω for V.
    pub fn from_secular(
        reference: &IonSpecies,
        r0: f64,
        rf_angular_frequency: f64,
        radial_angular_frequency: f64,
        axial_angular_frequency: f64,
        radial_asymmetry: f64,
    ) -> Result<Self> {
        let q = 2.0 * std::f64::consts::SQRT_2 * radial_angular_frequency / rf_angular_frequency;
        let v = q * reference.mass * rf_angular_frequency.powi(2) * r0 * r0 / (4.0 * reference.charge);
        let trap = Self {
            r0,
            rf_amplitude: v,
            rf_angular_frequency,
            axial_angular_frequency,
            radial_asymmetry,
            axial_reference_charge_to_mass: reference.charge_to_mass(),
        };
        trap.validate(reference)?;
        Ok(trap)
    }

    /// Copy with the RF amplitude chosen so that the weaker radial axis of
    /// `species` has ω_⊥² = `ratio`·ω_z².
    pub fn with_anisotropy(&self, species: &IonSpecies, ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidParameter {
                name: "anisotropy",
                reason: format!("must be positive, got {ratio}"),
            });
        }
        let wz = self.axial_frequency(species);
        let mean = (ratio / (1.0 - self.radial_asymmetry.abs())).sqrt() * wz;
        let q = 2.0 * std::f64::consts::SQRT_2 * mean / self.rf_angular_frequency;
        let mut out = self.clone();
        out.rf_amplitude = q * species.mass * self.rf_angular_frequency.powi(2) * self.r0 * self.r0 / (4.0 * species.charge);
        check_q(q)?;
        Ok(out)
    }

    pub fn with_asymmetry(mut self, radial_asymmetry: f64) -> Self {
        self.radial_asymmetry = radial_asymmetry;
        self
    }

    pub fn validate(&self, reference: &IonSpecies) -> Result<()> {
        for (name, v) in [
            ("r0", self.r0),
            ("rf_angular_frequency", self.rf_angular_frequency),
            ("axial_angular_frequency", self.axial_angular_frequency),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.rf_amplitude.is_finite() && self.rf_amplitude >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "rf_amplitude",
                reason: format!("must be non-negative, got {}", self.rf_amplitude),
            });
        }
        if !(0.0..1.0).contains(&self.radial_asymmetry.abs()) {
            return Err(Error::InvalidParameter {
                name: "radial_asymmetry",
                reason: format!("must lie in (-1, 1), got {}", self.radial_asymmetry),
            });
        }
        check_q(mathieu_q(self, reference))
    }

    /// Mean radial secular frequency ω̄ for one species (no stability check).
    pub fn mean_radial_frequency(&self, species: &IonSpecies) -> f64 {
        mathieu_q(self, species) * self.rf_angular_frequency / (2.0 * std::f64::consts::SQRT_2)
    }

    pub fn axial_frequency(&self, species: &IonSpecies) -> f64 {
        self.axial_angular_frequency
            * (species.charge_to_mass() / self.axial_reference_charge_to_mass).sqrt()
    }

    /// Lowest transverse ω² over ω_z² for the reference-like species.
    pub fn anisotropy(&self, species: &IonSpecies) -> f64 {
        let s = rf_secular_frequencies(self, species).expect("validated trap");
        s.x.min(s.y).powi(2) / s.z.powi(2)
    }
}

fn check_q(q: f64) -> Result<()> {
    if q >= Q_HARD_LIMIT {
        return Err(Error::UnstableRf { q, limit: Q_HARD_LIMIT });
    }
    if q > Q_WARN_LIMIT {
        log::warn!("Mathieu q = {q:.3} > {Q_WARN_LIMIT}: lowest-order secular frequencies lose accuracy");
    }
    Ok(())
}

/// Mathieu parameter q = 4 q_ion V / (m Ω² r0²).
pub fn mathieu_q(trap: &LinearRfTrap, species: &IonSpecies) -> f64 {
    4.0 * species.charge * trap.rf_amplitude
        / (species.mass * trap.rf_angular_frequency.powi(2) * trap.r0.powi(2))
}

/// Pseudopotential secular frequencies of one species; errors when q ≥ 0.9.
pub fn rf_secular_frequencies(trap: &LinearRfTrap, species: &IonSpecies) -> Result<Secular> {
    let q = mathieu_q(trap, species);
    check_q(q)?;
    let mean_sq = (q * trap.rf_angular_frequency / (2.0 * std::f64::consts::SQRT_2)).powi(2);
    let a = trap.radial_asymmetry;
    Ok(Secular {
        x: (mean_sq * (1.0 + a)).sqrt(),
        y: (mean_sq * (1.0 - a)).sqrt(),
        z: trap.axial_frequency(species),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenningTrap {
    /// Endcap-to-ring voltage (V).
    pub u0: f64,
    /// Half the endcap separation (m).
    pub z0: f64,
    /// Ring inner radius (m).
    pub r0: f64,
    /// Axial magnetic field (T).
    pub magnetic_field: f64,
    /// Crystal (and rotating-wall) rotation frequency (rad/s).
    pub rotation_angular_frequency: f64,
    /// Rotating-wall quadrupole strength (V/m²); zero disables the wall.
    pub wall_strength: f64,
}

/// The four Penning angular frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenningFrequencies {
    pub axial: f64,
    pub cyclotron: f64,
    pub modified_cyclotron: f64,
    pub magnetron: f64,
}

impl PenningTrap {
    fn geometry_factor(&self) -> f64 {
        2.0 * self.z0 * self.z0 + self.r0 * self.r0
    }

    /// Builds a trap with the electrode voltage chosen so `reference` has
    /// axial frequency `axial_angular_frequency`.
    pub fn from_frequencies(
        reference: &IonSpecies,
        z0: f64,
        r0: f64,
        magnetic_field: f64,
        axial_angular_frequency: f64,
        rotation_angular_frequency: f64,
    ) -> Result<Self> {
        let d2 = 2.0 * z0 * z0 + r0 * r0;
        let u0 = reference.mass * axial_angular_frequency.powi(2) * d2 / (4.0 * reference.charge);
        let trap = Self {
            u0,
            z0,
            r0,
            magnetic_field,
            rotation_angular_frequency,
            wall_strength: 0.0,
        };
        penning_frequencies(&trap, reference)?;
        Ok(trap)
    }

    /// The electrostatic saddle potential φ(r, z) = U0 (2z² − r²)/(2z0² + r0²).
    pub fn potential(&self, position: &Vector3<f64>) -> f64 {
        let r2 = position.x * position.x + position.y * position.y;
        self.u0 * (2.0 * position.z * position.z - r2) / self.geometry_factor()
    }
}

/// Axial, cyclotron, modified-cyclotron and magnetron frequencies.
///
/// The magnetron root is computed as (ω_z²/2)/ω_c′, which is the stable
/// form of ω_c/2 − √(ω_c²/4 − ω_z²/2) when ω_m ≪ ω_c.
pub fn penning_frequencies(trap: &PenningTrap, species: &IonSpecies) -> Result<PenningFrequencies> {
    if !(trap.z0 > 0.0 && trap.r0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "penning geometry",
            reason: format!("z0 and r0 must be positive, got {} and {}", trap.z0, trap.r0),
        });
    }
    if trap.u0 < 0.0 {
        return Err(Error::InvalidParameter {
            name: "u0",
            reason: format!("must be non-negative for axial confinement, got {}", trap.u0),
        });
    }
    let wz2 = 4.0 * species.charge * trap.u0 / (species.mass * trap.geometry_factor());
    let wc = species.charge * trap.magnetic_field / species.mass;
    let disc = wc * wc / 4.0 - wz2 / 2.0;
    if disc < 0.0 {
        return Err(Error::UnstablePenning {
            omega_z_sq: wz2,
            half_omega_c_sq: wc * wc / 2.0,
        });
    }
    let wcp = wc / 2.0 + disc.sqrt();
    let wm = if wcp > 0.0 { (wz2 / 2.0) / wcp } else { 0.0 };
    Ok(PenningFrequencies {
        axial: wz2.sqrt(),
        cyclotron: wc,
        modified_cyclotron: wcp,
        magnetron: wm,
    })
}

/// Radial stiffness β² = ω_r(ω_c − ω_r) − ω_z²/2 seen in the co-rotating frame.
pub fn penning_rotating_frame_radial_stiffness(trap: &PenningTrap, species: &IonSpecies) -> Result<f64> {
    let f = penning_frequencies(trap, species)?;
    let wr = trap.rotation_angular_frequency;
    let slack = 1e-12 * f.cyclotron;
    if wr < f.magnetron - slack || wr > f.modified_cyclotron + slack {
        return Err(Error::RotationOutOfBand {
            omega_r: wr,
            lower: f.magnetron,
            upper: f.modified_cyclotron,
        });
    }
    Ok(wr * (f.cyclotron - wr) - f.axial * f.axial / 2.0)
}

/// Lab-frame force of the rotating quadrupole wall on a charge.
///
/// The wall potential is `(s/2)(x'² − y'²)` in axes rotated by `−ω_r t`,
/// so at `t = 0` it is a static quadrupole along x.
pub fn rotating_wall_force(
    trap: &PenningTrap,
    charge: f64,
    strength: f64,
    position: &Vector3<f64>,
    time: f64,
) -> Vector3<f64> {
    if strength == 0.0 {
        return Vector3::zeros();
    }
    let theta = -trap.rotation_angular_frequency * time;
    let (s, c) = theta.sin_cos();
    let xr = c * position.x + s * position.y;
    let yr = -s * position.x + c * position.y;
    let fxr = -charge * strength * xr;
    let fyr = charge * strength * yr;
    Vector3::new(c * fxr - s * fyr, s * fxr + c * fyr, 0.0)
}

/// A trap together with how it is modelled.
#[derive(Debug, Clone, PartialEq)]
pub enum TrapConfig {
    LinearRf { trap: LinearRfTrap, mode: RfMode },
    Penning { trap: PenningTrap, frame: PenningFrame },
}

impl TrapConfig {
    pub fn pseudopotential(trap: LinearRfTrap) -> Self {
        TrapConfig::LinearRf { trap, mode: RfMode::Pseudopotential }
    }

    pub fn full_drive(trap: LinearRfTrap) -> Self {
        TrapConfig::LinearRf { trap, mode: RfMode::FullDrive }
    }

    pub fn rotating_frame(trap: PenningTrap) -> Self {
        TrapConfig::Penning { trap, frame: PenningFrame::Rotating }
    }

    /// Switches the RF modelling mode; a Penning trap has no RF drive, so
    /// only `Pseudopotential` (meaning "static fields") is accepted there.
    pub fn with_rf_mode(self, rf_mode: RfMode) -> Result<Self> {
        match self {
            TrapConfig::LinearRf { trap, .. } => Ok(TrapConfig::LinearRf { trap, mode: rf_mode }),
            TrapConfig::Penning { .. } if rf_mode == RfMode::FullDrive => Err(Error::Unsupported(
                "full RF drive requested for a Penning trap, which has no RF field".into(),
            )),
            other => Ok(other),
        }
    }

    pub fn is_full_drive(&self) -> bool {
        matches!(self, TrapConfig::LinearRf { mode: RfMode::FullDrive, .. })
    }

    /// Per-axis stiffness ω² (rad²/s²) of the static or time-averaged
    /// confinement. Lab-frame Penning traps report their electrostatic
    /// curvature, which is radially negative.
    pub fn stiffness(&self, species: &IonSpecies) -> Result<Vector3<f64>> {
        match self {
            TrapConfig::LinearRf { trap, .. } => Ok(rf_secular_frequencies(trap, species)?.squared()),
            TrapConfig::Penning { trap, frame: PenningFrame::Rotating } => {
                let beta2 = penning_rotating_frame_radial_stiffness(trap, species)?;
                let f = penning_frequencies(trap, species)?;
                let wall = species.charge * trap.wall_strength / species.mass;
                Ok(Vector3::new(beta2 + wall, beta2 - wall, f.axial * f.axial))
            }
            TrapConfig::Penning { trap, frame: PenningFrame::Lab } => {
                let f = penning_frequencies(trap, species)?;
                let wz2 = f.axial * f.axial;
                Ok(Vector3::new(-wz2 / 2.0, -wz2 / 2.0, wz2))
            }
        }
    }

    /// Rate of the velocity-dependent force `m ω_g v × ẑ`: the cyclotron
    /// frequency in the lab frame, `ω_c − 2ω_r` in the rotating frame,
    /// zero for RF traps.
    pub fn gyro_frequency(&self, species: &IonSpecies) -> f64 {
        match self {
            TrapConfig::LinearRf { .. } => 0.0,
            TrapConfig::Penning { trap, frame } => {
                let wc = species.charge * trap.magnetic_field / species.mass;
                match frame {
                    PenningFrame::Lab => wc,
                    PenningFrame::Rotating => wc - 2.0 * trap.rotation_angular_frequency,
                }
            }
        }
    }

    /// Upper estimate of the fastest motion in the system (rad/s), used to
    /// bound the integration time step.
    pub fn max_frequency<'a>(&self, species: impl IntoIterator<Item = &'a IonSpecies>) -> Result<f64> {
        let mut wmax: f64 = 0.0;
        for s in species {
            let k = self.stiffness(s)?;
            wmax = wmax.max(k.abs().sum().sqrt());
            wmax = wmax.max(self.gyro_frequency(s).abs());
            if let TrapConfig::LinearRf { trap, mode: RfMode::FullDrive } = self {
                wmax = wmax.max(trap.rf_angular_frequency);
            }
        }
        Ok(wmax)
    }

    /// Position- and time-dependent force on one ion (electric part only;
    /// see [`trap_force_with_velocity`] for the magnetic/Coriolis term).
    pub fn force(&self, species: &IonSpecies, position: &Vector3<f64>, time: f64) -> Vector3<f64> {
        trap_force(self, species, position, time)
    }
}

/// Position-dependent trap force on one ion.
///
/// Pseudopotential and rotating-frame modes return `−m ω²·r` per axis. Full
/// drive returns the instantaneous quadrupole force
/// `∓ 2 q V cos(Ωt) (x, −y)/r0²` plus the static axial well and the static
/// asymmetry term. The lab-frame Penning mode returns the saddle-potential
/// force plus the rotating wall.
pub fn trap_force(trap: &TrapConfig, species: &IonSpecies, position: &Vector3<f64>, time: f64) -> Vector3<f64> {
    let m = species.mass;
    match trap {
        TrapConfig::LinearRf { trap: rf, mode: RfMode::FullDrive } => {
            let wz = rf.axial_frequency(species);
            let mean_sq = rf.mean_radial_frequency(species).powi(2);
            let a = rf.radial_asymmetry;
            let drive = 2.0 * species.charge * rf.rf_amplitude * (rf.rf_angular_frequency * time).cos()
                / (rf.r0 * rf.r0);
            Vector3::new(
                -drive * position.x - m * mean_sq * a * position.x,
                drive * position.y + m * mean_sq * a * position.y,
                -m * wz * wz * position.z,
            )
        }
        TrapConfig::Penning { trap: p, frame: PenningFrame::Lab } => {
            let k = species.charge * p.u0 / (p.z0 * p.z0 * 2.0 + p.r0 * p.r0);
            let electric = Vector3::new(2.0 * k * position.x, 2.0 * k * position.y, -4.0 * k * position.z);
            electric + rotating_wall_force(p, species.charge, p.wall_strength, position, time)
        }
        _ => {
            // Static or time-averaged harmonic confinement. A trap that
            // failed validation yields a NaN force rather than panicking.
            let k = trap.stiffness(species).unwrap_or_else(|_| Vector3::repeat(f64::NAN));
            -m * k.component_mul(position)
        }
    }
}

/// Trap force including the velocity-dependent magnetic (lab) or
/// Lorentz-plus-Coriolis (rotating frame) term.
pub fn trap_force_with_velocity(
    trap: &TrapConfig,
    species: &IonSpecies,
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    time: f64,
) -> Vector3<f64> {
    let wg = trap.gyro_frequency(species);
    trap_force(trap, species, position, time)
        + species.mass * wg * Vector3::new(velocity.y, -velocity.x, 0.0)
}

/// Trap potential energy of one ion for conservative modes.
pub fn trap_energy(trap: &TrapConfig, species: &IonSpecies, position: &Vector3<f64>) -> Result<f64> {
    match trap {
        TrapConfig::LinearRf { mode: RfMode::FullDrive, .. } => Err(Error::FullDriveHasNoPotential),
        TrapConfig::Penning { frame: PenningFrame::Lab, .. } => Err(Error::Unsupported(
            "potential energy is defined in the rotating frame for Penning traps".into(),
        )),
        _ => {
            let k = trap.stiffness(species)?;
            Ok(0.5 * species.mass * k.dot(&position.component_mul(position)))
        }
    }
}
