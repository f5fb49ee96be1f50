//! Plasma and crystal-structure observables.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::Rng;
use rayon::prelude::*;

use crate::constants::{IonSpecies, BOLTZMANN, COULOMB_CONSTANT, ELEMENTARY_CHARGE, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::state::SystemState;
use crate::trap::{penning_frequencies, PenningTrap};

/// Γ above which a one-component plasma is expected to crystallize.
pub const CRYSTAL_GAMMA: f64 = 178.0;
/// Γ below which the plasma is treated as a gas.
pub const GAS_GAMMA: f64 = 1.0;

/// Γ = e² / (4π ε₀ a₀ k T).
pub fn coupling_parameter(temperature: f64, a0: f64) -> f64 {
    COULOMB_CONSTANT * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (a0 * BOLTZMANN * temperature)
}

/// a₀ = (3 / (4π n))^(1/3).
pub fn wigner_seitz(density: f64) -> f64 {
    (3.0 / (4.0 * PI * density)).cbrt()
}

/// Inverse of [`wigner_seitz`].
pub fn density_from_wigner_seitz(a0: f64) -> f64 {
    3.0 / (4.0 * PI * a0 * a0 * a0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlasmaRegime {
    Gas,
    Liquid,
    CrystalCandidate,
}

impl PlasmaRegime {
    /// Gas below Γ = 1, crystal candidate from Γ = 178, liquid between.
    pub fn from_gamma(gamma: f64) -> Self {
        if gamma < GAS_GAMMA {
            Self::Gas
        } else if gamma < CRYSTAL_GAMMA {
            Self::Liquid
        } else {
            Self::CrystalCandidate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gas => "gas",
            Self::Liquid => "liquid",
            Self::CrystalCandidate => "crystal-candidate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasmaReport {
    pub gamma: f64,
    pub wigner_seitz_radius: f64,
    pub number_density: f64,
    pub regime: PlasmaRegime,
}

impl PlasmaReport {
    pub fn new(temperature: f64, number_density: f64) -> Self {
        let a0 = wigner_seitz(number_density);
        let gamma = coupling_parameter(temperature, a0);
        Self { gamma, wigner_seitz_radius: a0, number_density, regime: PlasmaRegime::from_gamma(gamma) }
    }
}

/// Cloud density from the second-moment ellipsoid: a uniform ellipsoid
/// with semi-axes `a_k` has variances `a_k²/5` along its principal axes.
pub fn cloud_density(positions: &[Vector3<f64>]) -> Result<f64> {
    if positions.len() < 4 {
        return Err(Error::InvalidParameter {
            name: "positions",
            reason: "a cloud density needs at least four ions".into(),
        });
    }
    let n = positions.len() as f64;
    let mean: Vector3<f64> = positions.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in positions {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let det = cov.determinant().max(0.0);
    let volume = 4.0 / 3.0 * PI * (125.0 * det).sqrt();
    if volume <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "positions",
            reason: "cloud is degenerate (zero volume)".into(),
        });
    }
    Ok(n / volume)
}

/// Plasma report of a cloud from its kinetic temperature and ellipsoid density.
pub fn plasma_report(state: &SystemState, species: &[IonSpecies], temperature: f64) -> Result<PlasmaReport> {
    state.validate(species)?;
    Ok(PlasmaReport::new(temperature, cloud_density(&state.positions)?))
}

/// n = 2 ε₀ m ω_r (ω_c − ω_r) / q².
pub fn rotation_density(trap: &PenningTrap, species: &IonSpecies, rotation: f64) -> Result<f64> {
    let wc = penning_frequencies(trap, species)?.cyclotron;
    if !(0.0..=wc).contains(&rotation) {
        return Err(Error::RotationOutOfBand { omega_r: rotation, lower: 0.0, upper: wc });
    }
    Ok(2.0 * VACUUM_PERMITTIVITY * species.mass * rotation * (wc - rotation) / (species.charge * species.charge))
}

/// Rotation frequency that maximizes [`rotation_density`], by golden-section
/// search on [0, ω_c].
pub fn brillouin_rotation(trap: &PenningTrap, species: &IonSpecies) -> Result<f64> {
    let wc = penning_frequencies(trap, species)?.cyclotron;
    let f = |w: f64| rotation_density(trap, species, w);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, wc);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > 1e-12 * wc {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Ion indices whose normalized second-moment radius is below `fraction`
/// of the outermost ion's, i.e. the bulk without the outer shell.
pub fn interior_ions(positions: &[Vector3<f64>], fraction: f64) -> Vec<usize> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let mean: Vector3<f64> = positions.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in positions {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let radius = |p: &Vector3<f64>| {
        let d = p - mean;
        (0..3)
            .map(|k| {
                let c = eig.eigenvectors.column(k).dot(&d);
                let s = eig.eigenvalues[k].max(f64::MIN_POSITIVE);
                c * c / s
            })
            .sum::<f64>()
            .sqrt()
    };
    let radii: Vec<f64> = positions.iter().map(radius).collect();
    let outer = radii.iter().copied().fold(0.0, f64::max);
    (0..n).filter(|&i| radii[i] < fraction * outer).collect()
}

/// Monte Carlo Voronoi density: the mean inverse cell volume of the
/// selected ions. Cell volumes are estimated by sampling `samples` points
/// in a ball of twice the nearest-neighbour distance around each ion.
pub fn voronoi_density(positions: &[Vector3<f64>], ions: &[usize], samples: usize, seed: u64) -> Result<f64> {
    if ions.is_empty() {
        return Err(Error::EmptySelection("no ions selected for the density estimate"));
    }
    let volumes: Vec<f64> = ions
        .par_iter()
        .map(|&i| {
            let mut rng = stream_rng(seed, i as u64);
            let center = positions[i];
            let nn = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| (p - center).norm())
                .fold(f64::INFINITY, f64::min);
            let radius = 2.0 * nn;
            let near: Vec<Vector3<f64>> = positions
                .iter()
                .enumerate()
                .filter(|&(j, p)| j != i && (p - center).norm() < 2.0 * radius)
                .map(|(_, p)| p - center)
                .collect();
            let mut inside = 0usize;
            for _ in 0..samples {
                let u = loop {
                    let v = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    if v.norm_squared() <= 1.0 {
                        break v * radius;
                    }
                };
                let own = u.norm_squared();
                if near.iter().all(|q| (u - q).norm_squared() > own) {
                    inside += 1;
                }
            }
            inside as f64 / samples as f64 * 4.0 / 3.0 * PI * radius.powi(3)
        })
        .collect();
    let mean_volume = volumes.iter().sum::<f64>() / volumes.len() as f64;
    Ok(1.0 / mean_volume)
}

/// Density from the nearest-neighbour sphere, n = 1 / ((4/3) π d³), averaged
/// over the selected ions.
pub fn nearest_neighbor_density(positions: &[Vector3<f64>], ions: &[usize]) -> Result<f64> {
    if ions.is_empty() {
        return Err(Error::EmptySelection("no ions selected for the density estimate"));
    }
    let mut sum = 0.0;
    for &i in ions {
        let d = positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, p)| (p - positions[i]).norm())
            .fold(f64::INFINITY, f64::min);
        sum += 1.0 / (4.0 / 3.0 * PI * d * d * d);
    }
    Ok(sum / ions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureLabel {
    Linear,
    Zigzag,
    Helix,
    Shell3d,
    Planar,
}

impl StructureLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Zigzag => "zigzag",
            Self::Helix => "helix",
            Self::Shell3d => "shell3d",
            Self::Planar => "planar",
        }
    }
}

impl std::fmt::Display for StructureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relative flatness threshold of the classifier, in units of the mean
/// nearest-neighbour distance.
pub const FLATNESS: f64 = 1e-3;

/// Smallest axial gap between consecutive zigzag ions, in units of the
/// mean nearest-neighbour distance; rules out multi-row planar crystals.
pub const SINGLE_FILE_GAP: f64 = 0.25;

/// Principal axes of the centred positions, largest spread first.
fn principal_axes(positions: &[Vector3<f64>]) -> (Vector3<f64>, [Vector3<f64>; 3]) {
    let n = positions.len() as f64;
    let mean: Vector3<f64> = positions.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in positions {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = idx.map(|k| eig.eigenvectors.column(k).into_owned());
    (mean, axes)
}

fn mean_nearest_neighbor(positions: &[Vector3<f64>]) -> f64 {
    let n = positions.len();
    let mut sum = 0.0;
    for i in 0..n {
        sum += (0..n)
            .filter(|&j| j != i)
            .map(|j| (positions[j] - positions[i]).norm())
            .fold(f64::INFINITY, f64::min);
    }
    sum / n as f64
}

/// Rule-based structural label, scale-invariant by construction: lengths
/// are compared with `FLATNESS` times the mean nearest-neighbour distance.
///
/// * linear: every ion within tolerance of the long principal axis;
/// * zigzag: all ions in one plane and in single file along the long axis,
///   and the ions off that axis form a contiguous run whose in-plane
///   transverse coordinate alternates in sign;
/// * planar: all ions in one plane otherwise;
/// * helix: every ion off axis, transverse phase advancing in one sense by
///   less than a half turn per ion;
/// * shell3d: everything else.
pub fn classify_structure(positions: &[Vector3<f64>]) -> StructureLabel {
    if positions.len() < 3 {
        return StructureLabel::Linear;
    }
    let (mean, axes) = principal_axes(positions);
    let nn = mean_nearest_neighbor(positions);
    let tol = FLATNESS * nn;
    let local: Vec<Vector3<f64>> = positions
        .iter()
        .map(|p| {
            let d = p - mean;
            Vector3::new(axes[0].dot(&d), axes[1].dot(&d), axes[2].dot(&d))
        })
        .collect();
    let max_abs = |k: usize| local.iter().map(|p| p[k].abs()).fold(0.0, f64::max);
    if local.iter().all(|p| (p.y * p.y + p.z * p.z).sqrt() < tol) {
        return StructureLabel::Linear;
    }
    let flat = max_abs(2) < tol;
    let mut order: Vec<usize> = (0..local.len()).collect();
    order.sort_by(|&a, &b| local[a].x.total_cmp(&local[b].x));
    if flat {
        let u: Vec<f64> = order.iter().map(|&i| local[i].y).collect();
        let single_file = order
            .windows(2)
            .all(|w| local[w[1]].x - local[w[0]].x > SINGLE_FILE_GAP * nn);
        if single_file && is_alternating_run(&u, tol) {
            return StructureLabel::Zigzag;
        }
        return StructureLabel::Planar;
    }
    if is_helix(&order, &local, tol) {
        return StructureLabel::Helix;
    }
    StructureLabel::Shell3d
}

fn is_alternating_run(u: &[f64], tol: f64) -> bool {
    let off: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() >= tol).collect();
    if off.len() < 2 {
        return false;
    }
    if off.last().unwrap() - off[0] + 1 != off.len() {
        return false;
    }
    off.windows(2).all(|w| u[w[0]].signum() != u[w[1]].signum())
}

fn is_helix(order: &[usize], local: &[Vector3<f64>], tol: f64) -> bool {
    let mut phases = Vec::with_capacity(order.len());
    for &i in order {
        let p = local[i];
        if (p.y * p.y + p.z * p.z).sqrt() < tol {
            return false;
        }
        phases.push(p.z.atan2(p.y));
    }
    let mut sense = 0.0;
    for w in phases.windows(2) {
        let mut d = w[1] - w[0];
        while d > PI {
            d -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
        }
        if d.abs() < 0.05 || d.abs() > PI - 0.05 {
            return false;
        }
        if sense == 0.0 {
            sense = d.signum();
        } else if d.signum() != sense {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    Odd,
    Extended,
}

impl DefectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Odd => "odd",
            Self::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub defect_count: usize,
    pub kinds: Vec<DefectKind>,
    /// Per defect, the z-ordered indices of the last ion of one domain and
    /// the first ion of the next.
    pub boundary_positions: Vec<(usize, usize)>,
}

/// Window half-width (ions) for the local zigzag amplitude.
const AMPLITUDE_WINDOW: usize = 4;
/// Ions below this fraction of the local amplitude have no defined parity.
const WEAK_FRACTION: f64 = 0.5;
/// Weak ions between two domains at which a boundary counts as extended.
const EXTENDED_GAP: usize = 3;

/// Counts zigzag domain boundaries along a chain.
///
/// Ions are ordered by z and projected on the principal transverse axis,
/// giving u_i. The parity `s_i = sign(u_i)·(−1)^i` is defined for ions whose
/// |u_i| exceeds both `noise_floor` and half the largest |u| within four
/// sites; maximal runs of equal parity are domains. A boundary is odd when
/// at most two parity-less ions separate the domains and extended when
/// three or more do.
pub fn detect_defects(positions: &[Vector3<f64>], noise_floor: f64) -> Result<DefectReport> {
    let n = positions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| positions[a].z.total_cmp(&positions[b].z));
    let mut cov = Matrix2::zeros();
    for p in positions {
        let t = Vector2::new(p.x, p.y);
        cov += t * t.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let axis = eig.eigenvectors.column(k).into_owned();
    let u: Vec<f64> = order.iter().map(|&i| axis.dot(&Vector2::new(positions[i].x, positions[i].y))).collect();
    let max_amp = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if !(max_amp > noise_floor) {
        return Err(Error::NotZigzag { max_amplitude: max_amp, noise_floor });
    }
    let parity: Vec<Option<i8>> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(AMPLITUDE_WINDOW);
            let hi = (i + AMPLITUDE_WINDOW).min(n - 1);
            let local = u[lo..=hi].iter().map(|x| x.abs()).fold(0.0, f64::max);
            let a = u[i].abs();
            if a <= noise_floor || a < WEAK_FRACTION * local {
                None
            } else {
                let alt = if i % 2 == 0 { 1 } else { -1 };
                Some(if u[i] > 0.0 { alt } else { -alt })
            }
        })
        .collect();
    let mut kinds = Vec::new();
    let mut bounds = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, p) in parity.iter().enumerate() {
        if let Some(s) = *p {
            if let Some((j, t)) = last {
                if t != s {
                    let gap = i - j - 1;
                    kinds.push(if gap >= EXTENDED_GAP { DefectKind::Extended } else { DefectKind::Odd });
                    bounds.push((j, i));
                }
            }
            last = Some((i, s));
        }
    }
    Ok(DefectReport { defect_count: kinds.len(), kinds, boundary_positions: bounds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesRadius {
    pub species: usize,
    pub count: usize,
    pub mean_radius: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    /// One entry per species present, ordered by mass-to-charge ratio.
    pub per_species: Vec<SpeciesRadius>,
    /// Mean radii strictly increase with m/q and interquartile ranges do
    /// not overlap.
    pub separated: bool,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean cylindrical radius (about the z axis) per species.
pub fn species_separation(state: &SystemState, species: &[IonSpecies]) -> Result<SeparationReport> {
    state.validate(species)?;
    let mut present: Vec<usize> = state.species_index.clone();
    present.sort_unstable();
    present.dedup();
    present.sort_by(|&a, &b| {
        let ra = species[a].mass / species[a].charge;
        let rb = species[b].mass / species[b].charge;
        ra.total_cmp(&rb)
    });
    let per_species: Vec<SpeciesRadius> = present
        .iter()
        .map(|&s| {
            let mut r: Vec<f64> = state
                .positions
                .iter()
                .zip(&state.species_index)
                .filter(|&(_, &k)| k == s)
                .map(|(p, _)| p.x.hypot(p.y))
                .collect();
            r.sort_by(f64::total_cmp);
            SpeciesRadius {
                species: s,
                count: r.len(),
                mean_radius: r.iter().sum::<f64>() / r.len() as f64,
                lower_quartile: quantile(&r, 0.25),
                upper_quartile: quantile(&r, 0.75),
            }
        })
        .collect();
    let separated = per_species.len() >= 2
        && per_species
            .windows(2)
            .all(|w| w[0].mean_radius < w[1].mean_radius && w[0].upper_quartile < w[1].lower_quartile);
    Ok(SeparationReport { per_species, separated })
}

/// S(k) = |Σ_j exp(i k·r_j)|² / N at each scattering vector.
pub fn structure_factor(positions: &[Vector3<f64>], ks: &[Vector3<f64>]) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "positions",
            reason: "the structure factor needs at least two ions".into(),
        });
    }
    let n = positions.len() as f64;
    Ok(ks
        .par_iter()
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for r in positions {
                let (s, c) = k.dot(r).sin_cos();
                re += c;
                im += s;
            }
            (re * re + im * im) / n
        })
        .collect())
}

/// Azimuthally averaged S(|k|) in the plane perpendicular to `axis`,
/// using `azimuths` equally spaced directions per magnitude.
pub fn ring_profile(
    positions: &[Vector3<f64>],
    magnitudes: &[f64],
    axis: Vector3<f64>,
    azimuths: usize,
) -> Result<Vec<f64>> {
    let a = axis.normalize();
    let seed = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (seed - a * a.dot(&seed)).normalize();
    let e2 = a.cross(&e1);
    let m = azimuths.max(1);
    let mut out = Vec::with_capacity(magnitudes.len());
    for &k in magnitudes {
        let ks: Vec<Vector3<f64>> = (0..m)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / m as f64;
                (e1 * phi.cos() + e2 * phi.sin()) * k
            })
            .collect();
        let s = structure_factor(positions, &ks)?;
        out.push(s.iter().sum::<f64>() / m as f64);
    }
    Ok(out)
}

/// Hann-windowed amplitude of a uniformly sampled signal at angular
/// frequency `omega`.
pub fn spectral_amplitude(signal: &[f64], dt: f64, omega: f64) -> f64 {
    let n = signal.len();
    if n < 2 {
        return 0.0;
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (k, x) in signal.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
        let (s, c) = (omega * k as f64 * dt).sin_cos();
        re += w * x * c;
        im += w * x * s;
    }
    (re * re + im * im).sqrt()
}

/// Angular frequency of the strongest spectral peak in `[lo, hi]`: a grid
/// scan at a quarter of the Fourier resolution, then golden-section
/// refinement around the best grid point.
pub fn dominant_frequency(signal: &[f64], dt: f64, lo: f64, hi: f64) -> Result<f64> {
    let span = signal.len() as f64 * dt;
    if !(span > 0.0 && hi > lo && lo >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "frequency band",
            reason: format!("need a non-empty signal and 0 <= lo < hi, got [{lo}, {hi}]"),
        });
    }
    let step = 0.25 * 2.0 * PI / span;
    let points = ((hi - lo) / step).ceil() as usize + 1;
    let f = |w: f64| spectral_amplitude(signal, dt, w);
    let best = (0..points)
        .map(|k| (lo + k as f64 * step).min(hi))
        .max_by(|&a, &b| f(a).total_cmp(&f(b)))
        .unwrap_or(lo);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 * best.max(step) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::species_from_catalog;

    #[test]
    fn coupling_examples() {
        let g = coupling_parameter(1e-3, 10e-6);
        assert!((g - 1.671e3).abs() / 1.671e3 < 1e-3, "{g}");
        assert!((coupling_parameter(1e-3, 5e-6) / g - 2.0).abs() < 1e-14);
        assert!(coupling_parameter(1e12, 1e-6) < 1e-6);
    }

    #[test]
    fn wigner_seitz_examples() {
        let a = wigner_seitz(2.5e14);
        assert!((a - 9.85e-6).abs() < 0.01e-6, "{a}");
        assert!((wigner_seitz(8.0 * 2.5e14) / a - 0.5).abs() < 1e-14);
        assert!((density_from_wigner_seitz(a) / 2.5e14 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regimes() {
        assert_eq!(PlasmaRegime::from_gamma(0.5), PlasmaRegime::Gas);
        assert_eq!(PlasmaRegime::from_gamma(1.0), PlasmaRegime::Liquid);
        assert_eq!(PlasmaRegime::from_gamma(177.9), PlasmaRegime::Liquid);
        assert_eq!(PlasmaRegime::from_gamma(178.0), PlasmaRegime::CrystalCandidate);
    }

    fn penning() -> (PenningTrap, IonSpecies) {
        let be = species_from_catalog("Be9").unwrap();
        let t = PenningTrap::from_frequencies(&be, 1e-3, 1e-3, 4.5, 2.0 * PI * 500e3, 2.0 * PI * 1e6).unwrap();
        (t, be)
    }

    #[test]
    fn rotation_density_limits() {
        let (t, be) = penning();
        assert_eq!(rotation_density(&t, &be, 0.0).unwrap(), 0.0);
        let wc = penning_frequencies(&t, &be).unwrap().cyclotron;
        assert!(rotation_density(&t, &be, 1.1 * wc).is_err());
        let w = brillouin_rotation(&t, &be).unwrap();
        assert!((w / (0.5 * wc) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn classifier_basics() {
        let line: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::new(0.0, 0.0, i as f64)).collect();
        assert_eq!(classify_structure(&line), StructureLabel::Linear);
        assert_eq!(classify_structure(&line[..2]), StructureLabel::Linear);
        let zig: Vec<Vector3<f64>> = (0..6)
            .map(|i| Vector3::new(if i % 2 == 0 { 0.3 } else { -0.3 }, 0.0, i as f64))
            .collect();
        assert_eq!(classify_structure(&zig), StructureLabel::Zigzag);
        let disc: Vec<Vector3<f64>> = (0..7)
            .map(|i| {
                if i == 0 {
                    Vector3::zeros()
                } else {
                    let a = i as f64 * PI / 3.0;
                    Vector3::new(a.cos(), a.sin(), 0.0)
                }
            })
            .collect();
        assert_eq!(classify_structure(&disc), StructureLabel::Planar);
        let helix: Vec<Vector3<f64>> = (0..12)
            .map(|i| {
                let a = i as f64 * 2.0 * PI / 3.3;
                Vector3::new(0.5 * a.cos(), 0.5 * a.sin(), i as f64)
            })
            .collect();
        assert_eq!(classify_structure(&helix), StructureLabel::Helix);
        let mut ball = disc.clone();
        ball.push(Vector3::new(0.0, 0.0, 1.0));
        ball.push(Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(classify_structure(&ball), StructureLabel::Shell3d);
    }

    fn chain(amplitudes: impl Fn(usize) -> f64, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Vector3::new(s * amplitudes(i), 0.0, i as f64 * 1e-5)
            })
            .collect()
    }

    #[test]
    fn defect_examples() {
        let a = 3e-6;
        let perfect = chain(|_| a, 20);
        assert_eq!(detect_defects(&perfect, 1e-7).unwrap().defect_count, 0);
        let odd = chain(|i| if i < 10 { a } else { -a }, 20);
        let r = detect_defects(&odd, 1e-7).unwrap();
        assert_eq!(r.kinds, vec![DefectKind::Odd]);
        let ext = chain(|i| a * ((i as f64 - 10.0) / 3.0).clamp(-1.0, 1.0), 21);
        let r = detect_defects(&ext, 1e-7).unwrap();
        assert_eq!(r.kinds, vec![DefectKind::Extended]);
        let flat = chain(|_| 1e-9, 10);
        assert!(matches!(detect_defects(&flat, 1e-7), Err(Error::NotZigzag { .. })));
    }

    #[test]
    fn finds_sine_frequency() {
        let dt = 1e-3;
        let w = 2.0 * PI * 12.34;
        let sig: Vec<f64> = (0..4000).map(|k| (w * k as f64 * dt + 0.3).sin() + 0.2 * (3.1 * w * k as f64 * dt).cos()).collect();
        let got = dominant_frequency(&sig, dt, 2.0 * PI * 5.0, 2.0 * PI * 20.0).unwrap();
        assert!((got / w - 1.0).abs() < 1e-5, "{}", got / w);
    }

    #[test]
    fn structure_factor_lattice() {
        let d = 5e-6;
        let pos: Vec<Vector3<f64>> = (0..20).map(|i| Vector3::new(0.0, 0.0, i as f64 * d)).collect();
        let s = structure_factor(&pos, &[Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0 * PI / d), Vector3::new(0.0, 0.0, PI / d)]).unwrap();
        assert!((s[0] - 20.0).abs() < 1e-12);
        assert!((s[1] - 20.0).abs() < 1e-9);
        assert!(s[2] < 1e-9);
    }
}
