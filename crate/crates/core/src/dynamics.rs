//! Time integration with laser cooling.
//!
//! One step is the symmetric splitting
//!
//! ```text
//! B(h/2) R(h/2) A(h/2) O(h) A(h/2) R(h/2) B(h/2)
//! ```
//!
//! with B a kick from position-dependent forces, R the exact rotation of
//! (v_x, v_y) under the gyroscopic force `m ω_g v × ẑ`, A a drift and O the
//! exact Ornstein–Uhlenbeck update `v ← c v + √((1 − c²) kT/m) ξ`,
//! `c = exp(−γ h)`, applied only to cooled species. With γ = 0 and no
//! gyroscopic term this is velocity Verlet. Doppler cooling is reduced to
//! friction plus recoil noise that satisfy fluctuation–dissipation at the
//! target temperature.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constants::{IonSpecies, BOLTZMANN};
use crate::diagnostics::{detect_defects, DefectReport};
use crate::equilibrium::zigzag_critical_anisotropy;
use crate::error::{Error, Result};
use crate::interactions::{total_forces, total_potential_energy, EnergyBreakdown};
use crate::rng::SimRng;
use crate::trap::{LinearRfTrap, RfMode, TrapConfig};

pub use crate::state::SystemState;

/// Steps per period of the fastest motion required by the integrator.
pub const STEPS_PER_PERIOD: f64 = 50.0;
/// 1/e² intensity radius of the radially offset cooling beam (m).
pub const BEAM_WAIST: f64 = 100e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BeamGeometry {
    /// Uniform cooling of every cooled ion.
    #[default]
    Axial,
    /// Beam along y displaced by `offset` along x; friction is weighted by
    /// `exp(−2ρ²/w²)` with ρ the distance from the beam axis.
    RadialOffset { offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingModel {
    /// γ (1/s), applied to cooled species only.
    pub friction_rate: f64,
    /// Equilibrium temperature of the cooled motion (K).
    pub target_temperature: f64,
    pub beam: BeamGeometry,
    /// Extra white-noise heating of every ion (K/s per ion); a surrogate
    /// for background-gas collisions.
    pub extra_heating_rate: f64,
}

impl CoolingModel {
    pub fn doppler(friction_rate: f64, target_temperature: f64) -> Self {
        Self {
            friction_rate,
            target_temperature,
            beam: BeamGeometry::Axial,
            extra_heating_rate: 0.0,
        }
    }

    /// Conservative dynamics: no friction, no noise.
    pub fn off() -> Self {
        Self {
            friction_rate: 0.0,
            target_temperature: 1e-3,
            beam: BeamGeometry::Axial,
            extra_heating_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.friction_rate >= 0.0 && self.friction_rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "friction_rate",
                reason: format!("must be non-negative, got {}", self.friction_rate),
            });
        }
        if !(self.target_temperature > 0.0) {
            return Err(Error::InvalidParameter {
                name: "target_temperature",
                reason: format!("must be positive, got {}", self.target_temperature),
            });
        }
        if !(self.extra_heating_rate >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "extra_heating_rate",
                reason: format!("must be non-negative, got {}", self.extra_heating_rate),
            });
        }
        Ok(())
    }

    /// Recoil-kick variance rate 2γkT/m per velocity component (m²/s³).
    pub fn recoil_kick_rms_squared(&self, mass: f64) -> f64 {
        2.0 * self.friction_rate * BOLTZMANN * self.target_temperature / mass
    }

    pub fn beam_weight(&self, position: &Vector3<f64>) -> f64 {
        match self.beam {
            BeamGeometry::Axial => 1.0,
            BeamGeometry::RadialOffset { offset } => {
                let dx = position.x - offset;
                (-2.0 * (dx * dx + position.z * position.z) / (BEAM_WAIST * BEAM_WAIST)).exp()
            }
        }
    }
}

/// Largest admissible step for `trap` and the species present.
pub fn dt_max<'a>(trap: &TrapConfig, species: impl IntoIterator<Item = &'a IonSpecies>) -> Result<f64> {
    let w = trap.max_frequency(species)?;
    Ok(if w > 0.0 { 2.0 * std::f64::consts::PI / (STEPS_PER_PERIOD * w) } else { f64::INFINITY })
}

/// Integrator bound to one trap, species table and cooling model. Forces
/// at the end of a step are reused at the start of the next.
pub struct Integrator<'a> {
    pub trap: TrapConfig,
    pub species: &'a [IonSpecies],
    pub cooling: CoolingModel,
    pub dt: f64,
    cached: Option<(f64, Vec<Vector3<f64>>)>,
}

impl<'a> Integrator<'a> {
    pub fn new(trap: TrapConfig, species: &'a [IonSpecies], cooling: CoolingModel, dt: f64) -> Result<Self> {
        cooling.validate()?;
        let limit = dt_max(&trap, species)?;
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::TimeStepTooLarge { dt, dt_max: limit });
        }
        Ok(Self { trap, species, cooling, dt, cached: None })
    }

    /// Replaces the trap (e.g. during a ramp) and drops cached forces.
    pub fn set_trap(&mut self, trap: TrapConfig) -> Result<()> {
        let limit = dt_max(&trap, self.species)?;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::TimeStepTooLarge { dt: self.dt, dt_max: limit });
        }
        self.trap = trap;
        self.cached = None;
        Ok(())
    }

    fn forces(&self, state: &SystemState) -> Result<Vec<Vector3<f64>>> {
        total_forces(&state.positions, &state.species_index, self.species, &self.trap, state.time)
    }

    /// Advances `state` by one step of length `self.dt`.
    pub fn step(&mut self, state: &mut SystemState, rng: &mut SimRng) -> Result<()> {
        let dt = self.dt;
        self.step_by(state, dt, rng)
    }

    fn step_by(&mut self, state: &mut SystemState, h: f64, rng: &mut SimRng) -> Result<()> {
        let forces = match self.cached.take() {
            Some((t, f)) if t == state.time && f.len() == state.len() => f,
            _ => self.forces(state)?,
        };
        let n = state.len();
        let half = 0.5 * h;
        for i in 0..n {
            let sp = &self.species[state.species_index[i]];
            state.velocities[i] += forces[i] * (half / sp.mass);
            let wg = self.trap.gyro_frequency(sp);
            rotate_xy(&mut state.velocities[i], -wg * half);
            state.positions[i] += state.velocities[i] * half;
        }
        self.thermostat(state, h, rng);
        for i in 0..n {
            state.positions[i] += state.velocities[i] * half;
            let sp = &self.species[state.species_index[i]];
            rotate_xy(&mut state.velocities[i], -self.trap.gyro_frequency(sp) * half);
        }
        state.time += h;
        let forces = self.forces(state)?;
        for i in 0..n {
            let sp = &self.species[state.species_index[i]];
            state.velocities[i] += forces[i] * (half / sp.mass);
        }
        self.cached = Some((state.time, forces));
        Ok(())
    }

    fn thermostat(&self, state: &mut SystemState, h: f64, rng: &mut SimRng) {
        let c = &self.cooling;
        if c.friction_rate == 0.0 && c.extra_heating_rate == 0.0 {
            return;
        }
        for i in 0..state.len() {
            let sp = &self.species[state.species_index[i]];
            if sp.cooled && c.friction_rate > 0.0 {
                let gamma = c.friction_rate * c.beam_weight(&state.positions[i]);
                let decay = (-gamma * h).exp();
                let sigma = ((1.0 - decay * decay) * BOLTZMANN * c.target_temperature / sp.mass).sqrt();
                let v = &mut state.velocities[i];
                for a in 0..3 {
                    v[a] = decay * v[a] + sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            if c.extra_heating_rate > 0.0 {
                let sigma = (BOLTZMANN * c.extra_heating_rate * h / sp.mass).sqrt();
                let v = &mut state.velocities[i];
                for a in 0..3 {
                    v[a] += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// Rotates the transverse velocity by `angle` (counter-clockwise positive).
fn rotate_xy(v: &mut Vector3<f64>, angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    let (x, y) = (v.x, v.y);
    v.x = c * x - s * y;
    v.y = s * x + c * y;
}

/// One integration step; see [`Integrator`] for repeated stepping.
pub fn step(
    state: &SystemState,
    species: &[IonSpecies],
    trap: &TrapConfig,
    cooling: &CoolingModel,
    dt: f64,
    rng: &mut SimRng,
) -> Result<SystemState> {
    let mut integ = Integrator::new(trap.clone(), species, cooling.clone(), dt)?;
    let mut next = state.clone();
    integ.step(&mut next, rng)?;
    Ok(next)
}

/// What to record during [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    /// Record every this many steps (the initial and final states are always recorded).
    pub every: usize,
    pub positions: bool,
    pub velocities: bool,
    /// Potential energies (conservative trap modes only).
    pub energies: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self { every: 100, positions: false, velocities: false, energies: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    /// Kinetic temperature of all ions (K).
    pub temperature: f64,
    pub kinetic_energy: f64,
    pub potential: Option<EnergyBreakdown>,
    pub positions: Option<Vec<Vector3<f64>>>,
    pub velocities: Option<Vec<Vector3<f64>>>,
}

fn observe(state: &SystemState, integ: &Integrator, cfg: &ObserverConfig) -> Result<Observation> {
    let potential = if cfg.energies && !integ.trap.is_full_drive() {
        Some(total_potential_energy(state, integ.species, &integ.trap)?)
    } else {
        None
    };
    Ok(Observation {
        time: state.time,
        temperature: kinetic_temperature(state, integ.species, None)?,
        kinetic_energy: kinetic_energy(state, integ.species),
        potential,
        positions: cfg.positions.then(|| state.positions.clone()),
        velocities: cfg.velocities.then(|| state.velocities.clone()),
    })
}

/// Integrates for `duration`, using the smallest number of equal steps no
/// longer than `integ.dt`. Returns the final state and the observations.
pub fn evolve(
    state: &SystemState,
    integ: &mut Integrator,
    duration: f64,
    rng: &mut SimRng,
    observers: &ObserverConfig,
) -> Result<(SystemState, Vec<Observation>)> {
    evolve_with(state, integ, duration, rng, observers, |_, _| Ok(()))
}

/// [`evolve`] with a hook called before every step with the state and the
/// step index, which may retune the integrator's trap.
pub fn evolve_with(
    state: &SystemState,
    integ: &mut Integrator,
    duration: f64,
    rng: &mut SimRng,
    observers: &ObserverConfig,
    mut before_step: impl FnMut(&SystemState, &mut Integrator) -> Result<()>,
) -> Result<(SystemState, Vec<Observation>)> {
    state.validate(integ.species)?;
    let mut current = state.clone();
    let mut records = vec![observe(&current, integ, observers)?];
    if duration <= 0.0 {
        return Ok((current, records));
    }
    let steps = (duration / integ.dt - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let every = observers.every.max(1);
    for k in 1..=steps {
        before_step(&current, integ)?;
        integ.step_by(&mut current, h, rng)?;
        if k % every == 0 || k == steps {
            records.push(observe(&current, integ, observers)?);
        }
    }
    Ok((current, records))
}

pub fn kinetic_energy(state: &SystemState, species: &[IonSpecies]) -> f64 {
    state
        .velocities
        .iter()
        .zip(&state.species_index)
        .map(|(v, &s)| 0.5 * species[s].mass * v.norm_squared())
        .sum()
}

/// T = Σ m v² / (3 N k) over ions of species `filter` (all if `None`).
pub fn kinetic_temperature(state: &SystemState, species: &[IonSpecies], filter: Option<usize>) -> Result<f64> {
    temperature_of(&state.velocities, &state.species_index, species, filter)
}

fn temperature_of(
    velocities: &[Vector3<f64>],
    species_index: &[usize],
    species: &[IonSpecies],
    filter: Option<usize>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (v, &s) in velocities.iter().zip(species_index) {
        if filter.is_none_or(|f| f == s) {
            sum += species[s].mass * v.norm_squared();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySelection("no ions match the species filter"));
    }
    Ok(sum / (3.0 * count as f64 * BOLTZMANN))
}

/// Kinetic temperature of the secular motion in a full-drive trap. The
/// secular velocity is the mean velocity over whole RF periods,
/// `(x(t₁) − x(t₀)) / (t₁ − t₀)`, which removes the micromotion.
pub fn secular_temperature(
    before: &SystemState,
    after: &SystemState,
    species: &[IonSpecies],
    filter: Option<usize>,
) -> Result<f64> {
    let span = after.time - before.time;
    if !(span > 0.0) {
        return Err(Error::InvalidParameter {
            name: "span",
            reason: "secular averaging needs after.time > before.time".into(),
        });
    }
    let v: Vec<Vector3<f64>> = before
        .positions
        .iter()
        .zip(&after.positions)
        .map(|(a, b)| (b - a) / span)
        .collect();
    temperature_of(&v, &before.species_index, species, filter)
}

/// Which trap parameter a quench ramps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuenchControl {
    AxialFrequency,
    /// The weaker radial secular frequency of the reference species.
    RadialFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampShape {
    Linear,
    Smoothstep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchSchedule {
    pub control: QuenchControl,
    /// rad/s
    pub start_value: f64,
    /// rad/s
    pub end_value: f64,
    /// τ_Q (s)
    pub duration: f64,
    pub shape: RampShape,
}

impl QuenchSchedule {
    pub fn value_at(&self, t: f64) -> f64 {
        let s = (t / self.duration).clamp(0.0, 1.0);
        let s = match self.shape {
            RampShape::Linear => s,
            RampShape::Smoothstep => s * s * (3.0 - 2.0 * s),
        };
        self.start_value + (self.end_value - self.start_value) * s
    }

    /// The trap with the controlled parameter set to `value`.
    pub fn apply(&self, base: &LinearRfTrap, reference: &IonSpecies, value: f64) -> Result<LinearRfTrap> {
        match self.control {
            QuenchControl::RadialFrequency => {
                let wz = base.axial_frequency(reference);
                base.with_anisotropy(reference, (value / wz).powi(2))
            }
            QuenchControl::AxialFrequency => {
                let radial = crate::trap::rf_secular_frequencies(base, reference)?;
                let weak = radial.x.min(radial.y);
                let mut t = base.clone();
                t.axial_angular_frequency =
                    value * (base.axial_reference_charge_to_mass / reference.charge_to_mass()).sqrt();
                t.with_anisotropy(reference, (weak / value).powi(2))
            }
        }
    }

    /// ω_⊥²/ω_z² at the start and end of the ramp.
    pub fn anisotropy_range(&self, base: &LinearRfTrap, reference: &IonSpecies) -> Result<(f64, f64)> {
        let a = self.apply(base, reference, self.start_value)?.anisotropy(reference);
        let b = self.apply(base, reference, self.end_value)?.anisotropy(reference);
        Ok((a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchOptions {
    pub dt: f64,
    /// Hold after the ramp, in units of 1/γ.
    pub hold_friction_times: f64,
    /// Fraction of the hold over which positions are averaged before
    /// defect detection.
    pub averaging_fraction: f64,
}

impl Default for QuenchOptions {
    fn default() -> Self {
        Self { dt: 0.0, hold_friction_times: 100.0, averaging_fraction: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct QuenchOutcome {
    pub final_state: SystemState,
    /// Time-averaged positions the defect detector saw.
    pub averaged_positions: Vec<Vector3<f64>>,
    pub defects: DefectReport,
}

/// Ramps a linear string through the linear→zigzag transition, holds for
/// `hold_friction_times / γ`, averages positions over the tail of the
/// hold, and counts zigzag defects.
pub fn run_quench(
    initial: &SystemState,
    species: &[IonSpecies],
    base: &LinearRfTrap,
    schedule: &QuenchSchedule,
    cooling: &CoolingModel,
    rng: &mut SimRng,
    options: &QuenchOptions,
) -> Result<QuenchOutcome> {
    if !(schedule.duration > 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration",
            reason: format!("quench time must be positive, got {}", schedule.duration),
        });
    }
    if !(cooling.friction_rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "friction_rate",
            reason: "a quench needs cooling to stabilize the final chain".into(),
        });
    }
    let reference = &species[initial.species_index[0]];
    let n = initial.len();
    let critical = zigzag_critical_anisotropy(n)?;
    let (start, end) = schedule.anisotropy_range(base, reference)?;
    if !(start > critical && end < critical) {
        return Err(Error::QuenchDoesNotCross { critical, start, end });
    }

    let first = schedule.apply(base, reference, schedule.start_value)?;
    let last = schedule.apply(base, reference, schedule.end_value)?;
    let dt = if options.dt > 0.0 {
        options.dt
    } else {
        dt_max(&TrapConfig::pseudopotential(first.clone()), species)?
            .min(dt_max(&TrapConfig::pseudopotential(last.clone()), species)?)
    };
    let mut integ = Integrator::new(TrapConfig::pseudopotential(first), species, cooling.clone(), dt)?;
    let t0 = initial.time;
    let quiet = ObserverConfig { every: usize::MAX, ..Default::default() };
    let (ramped, _) = evolve_with(initial, &mut integ, schedule.duration, rng, &quiet, |s, integ| {
        let value = schedule.value_at(s.time - t0 + 0.5 * integ.dt);
        integ.set_trap(TrapConfig::pseudopotential(schedule.apply(base, reference, value)?))
    })?;

    integ.set_trap(TrapConfig::pseudopotential(last.clone()))?;
    let hold = options.hold_friction_times / cooling.friction_rate;
    let settle = hold * (1.0 - options.averaging_fraction);
    let (settled, _) = evolve(&ramped, &mut integ, settle, rng, &quiet)?;
    let tail = hold - settle;
    let steps = (tail / dt).ceil().max(1.0) as usize;
    let mut sum = vec![Vector3::zeros(); n];
    let mut current = settled;
    for _ in 0..steps {
        integ.step(&mut current, rng)?;
        for (acc, p) in sum.iter_mut().zip(&current.positions) {
            *acc += p;
        }
    }
    let averaged: Vec<Vector3<f64>> = sum.into_iter().map(|p| p / steps as f64).collect();

    // Thermal RMS of the transverse motion at the axial frequency scale,
    // reduced by the number of averaged samples that are roughly
    // independent (one per axial period).
    let wz = last.axial_frequency(reference);
    let thermal = (BOLTZMANN * cooling.target_temperature / (reference.mass * wz * wz)).sqrt();
    let independent = (tail * wz / (2.0 * std::f64::consts::PI)).max(1.0);
    let floor = 5.0 * thermal / independent.sqrt();
    let defects = detect_defects(&averaged, floor)?;
    Ok(QuenchOutcome { final_state: current, averaged_positions: averaged, defects })
}

/// Largest per-ion RF micromotion amplitude proxy: the deviation of a
/// full-drive trajectory from its running average over one RF period.
pub fn micromotion_amplitude(samples: &[Vector3<f64>], samples_per_period: usize) -> f64 {
    let p = samples_per_period.max(1);
    if samples.len() < p + 1 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for start in 0..samples.len() - p {
        let window = &samples[start..start + p];
        let mean: Vector3<f64> = window.iter().sum::<Vector3<f64>>() / p as f64;
        let mid = samples[start + p / 2];
        worst = worst.max((mid - mean).norm());
    }
    worst
}

/// The modelling mode the integrator should use for diagnostics of `trap`.
pub fn is_conservative(trap: &TrapConfig) -> bool {
    !matches!(trap, TrapConfig::LinearRf { mode: RfMode::FullDrive, .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::species_from_catalog;
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    fn ca() -> IonSpecies {
        species_from_catalog("Ca40").unwrap()
    }

    fn trap() -> LinearRfTrap {
        LinearRfTrap::from_secular(&ca(), 1e-3, 2.0 * PI * 30e6, 2.0 * PI * 2e6, 2.0 * PI * 500e3, 0.0).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let sp = [ca()];
        let mut integ = Integrator::new(TrapConfig::pseudopotential(trap()), &sp, CoolingModel::doppler(1e5, 1e-3), 1e-9).unwrap();
        let mut s = SystemState::at_rest(vec![Vector3::new(1e-6, 0.0, 0.0)]);
        s.velocities[0] = Vector3::new(0.1, 0.2, 0.3);
        let (out, rec) = evolve(&s, &mut integ, 0.0, &mut stream_rng(1, 0), &ObserverConfig::default()).unwrap();
        assert_eq!(out, s);
        assert_eq!(rec.len(), 1);
    }

    #[test]
    fn dt_limit_enforced() {
        let sp = [ca()];
        let t = TrapConfig::pseudopotential(trap());
        let limit = dt_max(&t, &sp).unwrap();
        assert!(Integrator::new(t.clone(), &sp, CoolingModel::off(), limit * 1.01).is_err());
        assert!(Integrator::new(t.clone(), &sp, CoolingModel::off(), limit).is_ok());
        let full = TrapConfig::full_drive(trap());
        let lf = dt_max(&full, &sp).unwrap();
        assert!((lf - 2.0 * PI / (50.0 * 2.0 * PI * 30e6)).abs() < 1e-20);
    }

    #[test]
    fn temperature_of_resting_ions_is_zero() {
        let s = SystemState::at_rest(vec![Vector3::zeros(), Vector3::new(0.0, 0.0, 1e-5)]);
        assert_eq!(kinetic_temperature(&s, &[ca()], None).unwrap(), 0.0);
        assert!(kinetic_temperature(&s, &[ca()], Some(1)).is_err());
    }

    #[test]
    fn deterministic_trajectories() {
        let sp = [ca()];
        let run = || {
            let mut integ =
                Integrator::new(TrapConfig::pseudopotential(trap()), &sp, CoolingModel::doppler(2e5, 1e-3), 5e-9).unwrap();
            let s = SystemState::at_rest(vec![Vector3::new(0.0, 0.0, -4e-6), Vector3::new(1e-7, 0.0, 4e-6)]);
            evolve(&s, &mut integ, 2e-5, &mut stream_rng(11, 3), &ObserverConfig::default()).unwrap().0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn momentum_conserved_without_trap_or_cooling() {
        // A very weak trap stands in for "no trap"; the impulse it delivers
        // over the run is far below the tolerance.
        let weak = LinearRfTrap::from_secular(&ca(), 1e-3, 2.0 * PI * 1e6, 2.0 * PI * 1e-3, 2.0 * PI * 1e-3, 0.0).unwrap();
        let sp = [ca()];
        let mut integ = Integrator::new(TrapConfig::pseudopotential(weak), &sp, CoolingModel::off(), 1e-8).unwrap();
        let mut s = SystemState::at_rest(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(5e-6, 1e-6, 0.0),
            Vector3::new(-3e-6, 4e-6, 2e-6),
        ]);
        s.velocities = vec![Vector3::new(1.0, 0.0, 0.5), Vector3::new(-2.0, 1.0, 0.0), Vector3::new(0.3, -0.7, 0.2)];
        let p0: Vector3<f64> = s.velocities.iter().sum::<Vector3<f64>>() * ca().mass;
        let (out, _) = evolve(&s, &mut integ, 2e-6, &mut stream_rng(0, 0), &ObserverConfig::default()).unwrap();
        let p1: Vector3<f64> = out.velocities.iter().sum::<Vector3<f64>>() * ca().mass;
        let scale = s.velocities.iter().map(|v| v.norm()).sum::<f64>() * ca().mass;
        assert!((p1 - p0).norm() < 1e-12 * scale, "{}", (p1 - p0).norm() / scale);
    }

    #[test]
    fn quench_must_cross() {
        let sp = [ca()];
        let base = trap();
        let init = SystemState::at_rest(
            crate::equilibrium::string_positions(5, &ca(), 2.0 * PI * 500e3)
                .unwrap()
                .into_iter()
                .map(|z| Vector3::new(0.0, 0.0, z))
                .collect(),
        );
        let wz = 2.0 * PI * 500e3;
        let sched = QuenchSchedule {
            control: QuenchControl::RadialFrequency,
            start_value: 4.0 * wz,
            end_value: 3.5 * wz,
            duration: 1e-5,
            shape: RampShape::Linear,
        };
        let err = run_quench(&init, &sp, &base, &sched, &CoolingModel::doppler(1e5, 1e-3), &mut stream_rng(0, 0), &QuenchOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::QuenchDoesNotCross { .. }));
    }

    #[test]
    fn schedule_shapes() {
        let s = QuenchSchedule {
            control: QuenchControl::RadialFrequency,
            start_value: 10.0,
            end_value: 0.0,
            duration: 2.0,
            shape: RampShape::Smoothstep,
        };
        assert_eq!(s.value_at(0.0), 10.0);
        assert_eq!(s.value_at(1.0), 5.0);
        assert_eq!(s.value_at(3.0), 0.0);
    }
}
