//! Minimum-energy crystal configurations.
//!
//! Relaxation runs in dimensionless units: lengths in
//! `ℓ = (k q_ref² / (m_ref κ))^(1/3)` with κ the stiffest trap axis of the
//! reference species, energies in `k q_ref² / ℓ`. An optional Metropolis
//! annealing prelude (geometric ladder from 10 mK down to 10 µK) precedes
//! a Barzilai–Borwein gradient descent with a non-monotone line search.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constants::{IonSpecies, BOLTZMANN, COULOMB_CONSTANT};
use crate::error::{Error, Result};
use crate::interactions::{potential_energy_at, total_forces, EnergyBreakdown};
use crate::linalg::jacobi_eigen;
use crate::rng::{stream_rng, SimRng};
use crate::state::{SystemState, MIN_SEPARATION};
use crate::trap::{PenningFrame, RfMode, TrapConfig};

/// Default convergence criterion: largest per-ion residual force (N).
pub const DEFAULT_FORCE_TOLERANCE: f64 = 1e-19;

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerOptions {
    /// Largest per-ion force (N) for the result to count as converged.
    pub force_tolerance: f64,
    /// Descent stops once the largest per-ion force drops below this, in
    /// units of `k q_ref² / ℓ²`.
    pub scaled_tolerance: f64,
    pub max_iterations: usize,
    /// Run a simulated-annealing prelude before each descent.
    pub anneal: bool,
    /// Number of annealed starts; the lowest-energy result is kept.
    pub restarts: usize,
    /// Metropolis sweeps per ladder temperature.
    pub anneal_sweeps: usize,
    /// Rungs of the temperature ladder.
    pub anneal_temperatures: usize,
    pub seed: u64,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            force_tolerance: DEFAULT_FORCE_TOLERANCE,
            scaled_tolerance: 1e-10,
            max_iterations: 200_000,
            anneal: false,
            restarts: 1,
            anneal_sweeps: 100,
            anneal_temperatures: 16,
            seed: 0,
        }
    }
}

impl MinimizerOptions {
    pub fn annealed(seed: u64, restarts: usize) -> Self {
        Self {
            anneal: true,
            restarts: restarts.max(1),
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Canonically ordered: by z, then x, then y.
    pub positions: Vec<Vector3<f64>>,
    pub species_index: Vec<usize>,
    pub energy: EnergyBreakdown,
    /// Largest per-ion residual force (N).
    pub gradient_norm: f64,
    pub converged: bool,
    pub restarts_used: usize,
    pub iterations: usize,
    /// Length unit used internally (m).
    pub length_scale: f64,
}

impl EquilibriumResult {
    pub fn to_state(&self) -> SystemState {
        SystemState::at_rest(self.positions.clone()).with_species(self.species_index.clone())
    }
}

/// Equilibrium separation of two identical ions: (2 k q² / (m ω_z²))^(1/3).
pub fn two_ion_spacing(species: &IonSpecies, axial_angular_frequency: f64) -> f64 {
    (2.0 * COULOMB_CONSTANT * species.charge * species.charge
        / (species.mass * axial_angular_frequency * axial_angular_frequency))
        .cbrt()
}

/// Natural length (k q² / (m ω²))^(1/3) of a harmonic well.
pub fn length_scale(species: &IonSpecies, angular_frequency: f64) -> f64 {
    (COULOMB_CONSTANT * species.charge * species.charge / (species.mass * angular_frequency * angular_frequency))
        .cbrt()
}

/// Equilibrium axial positions of an N-ion string in units of
/// `length_scale`, ascending and antisymmetric about zero.
pub fn scaled_string_positions(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0.0];
    }
    // Uniform start spanning roughly the right length; Newton with a step
    // cap that preserves ordering. The energy is convex on the ordered cone.
    let half = 1.0 * (n as f64).powf(0.44) + 0.5;
    let mut u: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    for _ in 0..200 {
        let mut g = DVector::<f64>::zeros(n);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            g[i] += u[i];
            h[(i, i)] += 1.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = u[i] - u[j];
                let ad = d.abs();
                g[i] -= d.signum() / (ad * ad);
                let c = 2.0 / (ad * ad * ad);
                h[(i, i)] += c;
                h[(i, j)] -= c;
            }
        }
        if g.amax() < 1e-15 {
            break;
        }
        let step = h.cholesky().expect("string Hessian is positive definite").solve(&g);
        let min_gap = u.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let cap = 0.25 * min_gap / step.amax().max(f64::MIN_POSITIVE);
        let t = cap.min(1.0);
        for i in 0..n {
            u[i] -= t * step[i];
        }
    }
    // exact antisymmetry
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    sym
}

/// Axial positions (m) of an N-ion string of one species.
pub fn string_positions(n: usize, species: &IonSpecies, axial_angular_frequency: f64) -> Result<Vec<f64>> {
    if !(1..=100).contains(&n) {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("string size must be in 1..=100, got {n}"),
        });
    }
    let l = length_scale(species, axial_angular_frequency);
    Ok(scaled_string_positions(n).into_iter().map(|u| u * l).collect())
}

/// Coulomb coupling matrix of the transverse block for a string, in
/// units of ω_z²: the transverse Hessian is `r·I − C` for anisotropy `r`.
pub(crate) fn transverse_coupling(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = 1.0 / (u[i] - u[j]).abs().powi(3);
                c[(i, i)] += k;
                c[(i, j)] -= k;
            }
        }
    }
    c
}

/// Critical ω_⊥²/ω_z² below which a linear string of N identical ions
/// buckles into a zigzag, found by bisection on the sign of the lowest
/// transverse eigenvalue.
pub fn zigzag_critical_anisotropy(n: usize) -> Result<f64> {
    if !(3..=50).contains(&n) {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("critical anisotropy is computed for 3..=50 ions, got {n}"),
        });
    }
    let u = scaled_string_positions(n);
    let c = transverse_coupling(&u);
    let lowest = |ratio: f64| -> f64 {
        let k = DMatrix::identity(n, n) * ratio - &c;
        jacobi_eigen(&k).expect("symmetric").values[0]
    };
    let mut lo = 0.0;
    let mut hi = 2.0 * c.diagonal().max() + 1.0;
    debug_assert!(lowest(lo) < 0.0 && lowest(hi) > 0.0);
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if lowest(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ions on an axial lattice with `spacing`, jittered by 0.1 µm Gaussian
/// noise from stream 0 of `seed`.
pub fn default_initial_state(species_index: Vec<usize>, spacing: f64, seed: u64) -> SystemState {
    let n = species_index.len();
    let mut rng = stream_rng(seed, 0);
    let positions = (0..n)
        .map(|i| {
            let z = (i as f64 - (n as f64 - 1.0) / 2.0) * spacing;
            Vector3::new(0.0, 0.0, z) + gaussian_vector(&mut rng) * 0.1e-6
        })
        .collect();
    SystemState::at_rest(positions).with_species(species_index)
}

pub(crate) fn gaussian_vector(rng: &mut SimRng) -> Vector3<f64> {
    Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// Dimensionless energy landscape for one relaxation.
struct Landscape {
    /// Per-ion, per-axis `m k ℓ² / E0`.
    stiffness: Vec<[f64; 3]>,
    /// Per-ion charge over the reference charge.
    charge: Vec<f64>,
    min_separation: f64,
}

impl Landscape {
    fn energy(&self, x: &[f64]) -> Option<f64> {
        let n = self.charge.len();
        let mut e = 0.0;
        for i in 0..n {
            for a in 0..3 {
                e += 0.5 * self.stiffness[i][a] * x[3 * i + a] * x[3 * i + a];
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let r = dist(x, i, j);
                if r < self.min_separation {
                    return None;
                }
                e += self.charge[i] * self.charge[j] / r;
            }
        }
        Some(e)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) -> bool {
        let n = self.charge.len();
        for i in 0..n {
            for a in 0..3 {
                g[3 * i + a] = self.stiffness[i][a] * x[3 * i + a];
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let r = dist(x, i, j);
                if r < self.min_separation {
                    return false;
                }
                let c = self.charge[i] * self.charge[j] / (r * r * r);
                for a in 0..3 {
                    let d = c * (x[3 * i + a] - x[3 * j + a]);
                    g[3 * i + a] -= d;
                    g[3 * j + a] += d;
                }
            }
        }
        true
    }

    /// Energy change when ion `i` moves to `p`.
    fn move_delta(&self, x: &[f64], i: usize, p: [f64; 3]) -> Option<f64> {
        let n = self.charge.len();
        let mut de = 0.0;
        for a in 0..3 {
            let old = x[3 * i + a];
            de += 0.5 * self.stiffness[i][a] * (p[a] * p[a] - old * old);
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut r2n = 0.0;
            for a in 0..3 {
                let d = p[a] - x[3 * j + a];
                r2n += d * d;
            }
            let rn = r2n.sqrt();
            if rn < self.min_separation {
                return None;
            }
            de += self.charge[i] * self.charge[j] * (1.0 / rn - 1.0 / dist(x, i, j));
        }
        Some(de)
    }
}

fn dist(x: &[f64], i: usize, j: usize) -> f64 {
    let dx = x[3 * i] - x[3 * j];
    let dy = x[3 * i + 1] - x[3 * j + 1];
    let dz = x[3 * i + 2] - x[3 * j + 2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn max_per_ion(g: &[f64]) -> f64 {
    g.chunks(3)
        .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
        .fold(0.0, f64::max)
}

struct DescentOutcome {
    x: Vec<f64>,
    energy: f64,
    iterations: usize,
}

/// Barzilai–Borwein descent with a Grippo–Lampariello–Lucidi
/// non-monotone Armijo line search.
fn descend(land: &Landscape, mut x: Vec<f64>, tol: f64, max_iter: usize) -> Result<DescentOutcome> {
    const MEMORY: usize = 10;
    let n = x.len();
    let mut e = land.energy(&x).ok_or_else(coincident)?;
    let mut g = vec![0.0; n];
    land.gradient(&x, &mut g);
    let mut history = std::collections::VecDeque::with_capacity(MEMORY);
    history.push_back(e);
    let mut alpha = 0.1 / max_per_ion(&g).max(1.0);
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut iter = 0;
    while iter < max_iter {
        if max_per_ion(&g) < tol {
            break;
        }
        iter += 1;
        let e_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let slack = 1e-13 * e_ref.abs();
        let mut t = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            for k in 0..n {
                xn[k] = x[k] - t * g[k];
            }
            if let Some(en) = land.energy(&xn) {
                if en <= e_ref - 1e-4 * t * gg + slack {
                    accepted = Some(en);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(en) = accepted else {
            break; // stalled at rounding level
        };
        land.gradient(&xn, &mut gn);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..n {
            let s = xn[k] - x[k];
            sy += s * (gn[k] - g[k]);
            ss += s * s;
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e6) } else { (t * 4.0).min(1e6) };
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        e = en;
        if history.len() == MEMORY {
            history.pop_front();
        }
        history.push_back(e);
    }
    Ok(DescentOutcome { x, energy: e, iterations: iter })
}

fn coincident() -> Error {
    Error::CoincidentIons { i: 0, j: 0, distance: 0.0 }
}

/// Metropolis annealing down a geometric temperature ladder.
fn anneal(land: &Landscape, x: &mut [f64], ladder: &[f64], sweeps: usize, rng: &mut SimRng) {
    let n = land.charge.len();
    for &temp in ladder {
        // step ~ thermal displacement in a unit well, adapted toward ~40% acceptance
        let mut step = temp.sqrt().max(1e-4);
        for _ in 0..sweeps {
            let mut accepted = 0usize;
            for i in 0..n {
                let p = [
                    x[3 * i] + step * rng.sample::<f64, _>(StandardNormal),
                    x[3 * i + 1] + step * rng.sample::<f64, _>(StandardNormal),
                    x[3 * i + 2] + step * rng.sample::<f64, _>(StandardNormal),
                ];
                let Some(de) = land.move_delta(x, i, p) else { continue };
                if de <= 0.0 || rng.random::<f64>() < (-de / temp).exp() {
                    x[3 * i..3 * i + 3].copy_from_slice(&p);
                    accepted += 1;
                }
            }
            let rate = accepted as f64 / n as f64;
            step *= if rate > 0.4 { 1.1 } else { 0.9 };
        }
    }
}

struct Scale {
    length: f64,
    energy: f64,
}

fn scale_for(trap: &TrapConfig, species: &[IonSpecies], reference: usize) -> Result<Scale> {
    let s = &species[reference];
    let k = trap.stiffness(s)?;
    let kmax = k.max();
    if kmax <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "trap",
            reason: "no confining axis for the reference species".into(),
        });
    }
    let length = (COULOMB_CONSTANT * s.charge * s.charge / (s.mass * kmax)).cbrt();
    Ok(Scale {
        length,
        energy: COULOMB_CONSTANT * s.charge * s.charge / length,
    })
}

/// Sorts by (z, x, y), quantized at 1e-6 of `length` so that ions in a
/// common plane order by their in-plane coordinates, and rotates by π about
/// z if needed so the central ion's dominant transverse coordinate is ≥ 0.
pub fn canonicalize(positions: &mut Vec<Vector3<f64>>, species_index: &mut Vec<usize>, length: f64) {
    let sort = |positions: &mut Vec<Vector3<f64>>, species_index: &mut Vec<usize>| {
        let q = 1e-6 * length;
        let key = |p: &Vector3<f64>| ((p.z / q).round() as i64, (p.x / q).round() as i64, (p.y / q).round() as i64);
        let mut order: Vec<usize> = (0..positions.len()).collect();
        order.sort_by_key(|&i| key(&positions[i]));
        *positions = order.iter().map(|&i| positions[i]).collect();
        *species_index = order.iter().map(|&i| species_index[i]).collect();
    };
    sort(positions, species_index);
    if positions.is_empty() {
        return;
    }
    let c = positions[positions.len() / 2];
    let dominant = if c.x.abs() >= c.y.abs() { c.x } else { c.y };
    if dominant < -1e-9 * length {
        for p in positions.iter_mut() {
            p.x = -p.x;
            p.y = -p.y;
        }
        sort(positions, species_index);
    }
}

/// Relaxes `initial` to a local minimum of the trap + Coulomb energy.
///
/// Non-convergence is reported through `converged = false`, never as an
/// error; only coincident ions or an unsupported trap mode error.
pub fn relax(
    initial: &SystemState,
    species: &[IonSpecies],
    trap: &TrapConfig,
    options: &MinimizerOptions,
) -> Result<EquilibriumResult> {
    match trap {
        TrapConfig::LinearRf { mode: RfMode::FullDrive, .. } => return Err(Error::FullDriveHasNoPotential),
        TrapConfig::Penning { frame: PenningFrame::Lab, .. } => {
            return Err(Error::Unsupported("relax Penning crystals in the rotating frame".into()))
        }
        _ => {}
    }
    initial.validate(species)?;
    let n = initial.len();
    if n == 0 {
        return Err(Error::EmptySelection("no ions to relax"));
    }
    let reference = initial.species_index[0];
    let scale = scale_for(trap, species, reference)?;
    let q_ref = species[reference].charge;

    let mut stiffness = Vec::with_capacity(n);
    for &s in &initial.species_index {
        let k = trap.stiffness(&species[s])?;
        let w = species[s].mass * scale.length * scale.length / scale.energy;
        stiffness.push([w * k.x, w * k.y, w * k.z]);
    }
    let land = Landscape {
        stiffness,
        charge: initial.species_index.iter().map(|&s| species[s].charge / q_ref).collect(),
        min_separation: MIN_SEPARATION / scale.length,
    };
    let x0: Vec<f64> = initial.positions.iter().flat_map(|p| [p.x, p.y, p.z]).map(|c| c / scale.length).collect();

    let ladder: Vec<f64> = {
        let (hot, cold) = (10e-3, 10e-6);
        let m = options.anneal_temperatures.max(2);
        (0..m)
            .map(|k| hot * (cold / hot as f64).powf(k as f64 / (m - 1) as f64))
            .map(|t| BOLTZMANN * t / scale.energy)
            .collect()
    };

    let starts = if options.anneal { options.restarts.max(1) } else { 1 };
    let mut best: Option<DescentOutcome> = None;
    for r in 0..starts {
        let mut x = x0.clone();
        if options.anneal {
            let mut rng = stream_rng(options.seed, 1 + r as u64);
            if r > 0 {
                for c in x.iter_mut() {
                    *c += 0.3 * rng.sample::<f64, _>(StandardNormal);
                }
                if land.energy(&x).is_none() {
                    x = x0.clone();
                }
            }
            anneal(&land, &mut x, &ladder, options.anneal_sweeps, &mut rng);
        }
        let out = descend(&land, x, options.scaled_tolerance, options.max_iterations)?;
        if best.as_ref().is_none_or(|b| out.energy < b.energy) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");

    let mut positions: Vec<Vector3<f64>> = best
        .x
        .chunks(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]) * scale.length)
        .collect();
    let mut species_index = initial.species_index.clone();
    canonicalize(&mut positions, &mut species_index, scale.length);

    let energy = potential_energy_at(&positions, &species_index, species, trap)?;
    let forces = total_forces(&positions, &species_index, species, trap, 0.0)?;
    let gradient_norm = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
    Ok(EquilibriumResult {
        positions,
        species_index,
        energy,
        gradient_norm,
        converged: gradient_norm < options.force_tolerance,
        restarts_used: starts,
        iterations: best.iterations,
        length_scale: scale.length,
    })
}
