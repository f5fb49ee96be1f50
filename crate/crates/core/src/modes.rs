//! Normal modes of equilibrium crystals.
//!
//! The mass-weighted Hessian `H_ij = ∂²E/∂x_i∂x_j / √(m_i m_j)` is
//! diagonalized with the Jacobi solver. Penning crystals in the rotating
//! frame also carry the gyroscopic term `ω_g v × ẑ`, giving the quadratic
//! eigenproblem `(−ω² + iω G + K) u = 0`. It is solved in first-order form
//!
//! ```text
//! d/dt [u, u̇] = [[0, I], [−K, G]] [u, u̇]
//! ```
//!
//! whose eigenvalues come in pairs ±iω; the 3N with the largest imaginary
//! part are the mode frequencies. Here `G` is block diagonal with
//! `[[0, ω_g], [−ω_g, 0]]` acting on each ion's (x, y) velocity; mass
//! weighting commutes with it because it is per-ion.

use nalgebra::{Complex, DMatrix, DVector};

use crate::constants::{IonSpecies, COULOMB_CONSTANT};
use crate::equilibrium::{scaled_string_positions, length_scale, DEFAULT_FORCE_TOLERANCE};
use crate::error::{Error, Result};
use crate::interactions::total_forces;
use crate::linalg::{jacobi_eigen, relative_asymmetry, SYMMETRY_TOLERANCE};
use crate::state::SystemState;
use crate::trap::{LinearRfTrap, PenningFrame, TrapConfig};

/// Fraction of an eigenvector's norm² along an axis needed for a pure label.
pub const LABEL_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLabel {
    Axial,
    Transverse,
    Mixed,
}

/// Mass-weighted second-derivative matrix plus the per-ion gyroscopic rate.
#[derive(Debug, Clone)]
pub struct Hessian {
    /// 3N×3N, coordinates ordered (x0, y0, z0, x1, ...), units rad²/s².
    pub matrix: DMatrix<f64>,
    /// ω_g per ion (rad/s); all zero outside Penning traps.
    pub gyro: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    /// Ascending. Unstable directions (negative ω²) appear as negative
    /// numbers −√|ω²| so they sort first and are never hidden.
    pub frequencies: Vec<f64>,
    /// ω² per mode (rad²/s²); gyroscopic spectra report ω².
    pub eigenvalues: Vec<f64>,
    /// Unit displacement patterns as columns (mass-weighted coordinates).
    pub eigenvectors: DMatrix<f64>,
    pub labels: Vec<ModeLabel>,
}

impl ModeSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Modes whose ω² is negative beyond rounding: the configuration is a saddle.
    pub fn unstable_modes(&self) -> Vec<usize> {
        let scale = self.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        (0..self.len()).filter(|&k| self.eigenvalues[k] < -1e-9 * scale).collect()
    }

    pub fn with_label(&self, label: ModeLabel) -> Vec<f64> {
        self.frequencies
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(f, _)| *f)
            .collect()
    }
}

/// Analytic mass-weighted Hessian at an equilibrium. Errors if the largest
/// per-ion force exceeds [`DEFAULT_FORCE_TOLERANCE`].
pub fn hessian(state: &SystemState, species: &[IonSpecies], trap: &TrapConfig) -> Result<Hessian> {
    hessian_with_tolerance(state, species, trap, DEFAULT_FORCE_TOLERANCE)
}

pub fn hessian_with_tolerance(
    state: &SystemState,
    species: &[IonSpecies],
    trap: &TrapConfig,
    force_tolerance: f64,
) -> Result<Hessian> {
    if let TrapConfig::Penning { frame: PenningFrame::Lab, .. } = trap {
        return Err(Error::Unsupported("normal modes of Penning crystals are computed in the rotating frame".into()));
    }
    // Full-drive traps are analysed through their time-averaged secular
    // confinement, which is what `stiffness` reports.
    let secular = match trap {
        TrapConfig::LinearRf { trap, .. } => TrapConfig::pseudopotential(trap.clone()),
        other => other.clone(),
    };
    let forces = total_forces(&state.positions, &state.species_index, species, &secular, 0.0)?;
    let gradient_norm = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
    if gradient_norm > force_tolerance {
        return Err(Error::NotAtEquilibrium { gradient_norm, tolerance: force_tolerance });
    }
    let mut hessian = assemble(state, species, &secular)?;
    if let TrapConfig::Penning { trap, .. } = &secular {
        if trap.wall_strength == 0.0 {
            remove_rotation(&mut hessian, state, species);
        }
    }
    Ok(hessian)
}

/// Projects the rigid rotation about z out of an axially symmetric
/// Hessian. That direction is an exact null vector, but its rounding
/// residue would otherwise be amplified by the gyroscopic coupling, where
/// the zero mode and its angular-momentum partner form a defective pair.
fn remove_rotation(hessian: &mut Hessian, state: &SystemState, species: &[IonSpecies]) {
    let masses = state.masses(species);
    let dim = hessian.matrix.nrows();
    let mut t = nalgebra::DVector::<f64>::zeros(dim);
    for (i, p) in state.positions.iter().enumerate() {
        let w = masses[i].sqrt();
        t[3 * i] = -w * p.y;
        t[3 * i + 1] = w * p.x;
    }
    let norm = t.norm();
    if norm == 0.0 {
        return;
    }
    t /= norm;
    let proj = DMatrix::<f64>::identity(dim, dim) - &t * t.transpose();
    let k = &proj * &hessian.matrix * &proj;
    hessian.matrix = (&k + k.transpose()) * 0.5;
}

/// Hessian assembly without the equilibrium check.
pub(crate) fn assemble(state: &SystemState, species: &[IonSpecies], trap: &TrapConfig) -> Result<Hessian> {
    let n = state.len();
    let mut h = DMatrix::<f64>::zeros(3 * n, 3 * n);
    let masses = state.masses(species);
    let charges = state.charges(species);
    for (i, &s) in state.species_index.iter().enumerate() {
        let k = trap.stiffness(&species[s])?;
        for a in 0..3 {
            h[(3 * i + a, 3 * i + a)] += masses[i] * k[a];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = state.positions[i] - state.positions[j];
            let r2 = d.norm_squared();
            let r = r2.sqrt();
            let c = COULOMB_CONSTANT * charges[i] * charges[j];
            let inv3 = c / (r2 * r);
            let inv5 = 3.0 * inv3 / r2;
            for a in 0..3 {
                for b in 0..3 {
                    let t = inv5 * d[a] * d[b] - if a == b { inv3 } else { 0.0 };
                    h[(3 * i + a, 3 * i + b)] += t;
                    h[(3 * j + a, 3 * j + b)] += t;
                    h[(3 * i + a, 3 * j + b)] -= t;
                    h[(3 * j + a, 3 * i + b)] -= t;
                }
            }
        }
    }
    for r in 0..3 * n {
        for c in 0..3 * n {
            h[(r, c)] /= (masses[r / 3] * masses[c / 3]).sqrt();
        }
    }
    let gyro = state.species_index.iter().map(|&s| trap.gyro_frequency(&species[s])).collect();
    Ok(Hessian { matrix: h, gyro })
}

fn label_for(vector: &[f64]) -> ModeLabel {
    let total: f64 = vector.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return ModeLabel::Mixed;
    }
    let axial: f64 = vector.iter().skip(2).step_by(3).map(|v| v * v).sum::<f64>() / total;
    if axial >= LABEL_THRESHOLD {
        ModeLabel::Axial
    } else if 1.0 - axial >= LABEL_THRESHOLD {
        ModeLabel::Transverse
    } else {
        ModeLabel::Mixed
    }
}

fn signed_sqrt(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Spectrum of a symmetric Hessian, ignoring any gyroscopic term.
pub fn mode_spectrum(hessian: &Hessian) -> Result<ModeSpectrum> {
    symmetric_spectrum(&hessian.matrix, 3)
}

/// `stride` is the number of coordinates per ion (3), used for labelling.
fn symmetric_spectrum(matrix: &DMatrix<f64>, stride: usize) -> Result<ModeSpectrum> {
    let eig = jacobi_eigen(matrix)?;
    let labels = (0..eig.values.len())
        .map(|k| {
            let col: Vec<f64> = eig.vectors.column(k).iter().copied().collect();
            if stride == 3 {
                label_for(&col)
            } else {
                ModeLabel::Transverse
            }
        })
        .collect();
    Ok(ModeSpectrum {
        frequencies: eig.values.iter().map(|&l| signed_sqrt(l)).collect(),
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        labels,
    })
}

/// Spectrum including the gyroscopic term. With all `gyro` rates zero it
/// reproduces [`mode_spectrum`]'s frequencies.
pub fn gyroscopic_spectrum(hessian: &Hessian) -> Result<ModeSpectrum> {
    let k = &hessian.matrix;
    let asym = relative_asymmetry(k);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::AsymmetricMatrix { asymmetry: asym });
    }
    let dim = k.nrows();
    let n = dim / 3;
    // State (u, v/s) with s = √‖K‖ keeps both off-diagonal blocks of
    // order s; the similarity leaves eigenvalues and displacements alone.
    let s = k.amax().sqrt().max(f64::MIN_POSITIVE);
    let mut a = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        a[(i, dim + i)] = s;
        for j in 0..dim {
            a[(dim + i, j)] = -k[(i, j)] / s;
        }
    }
    for ion in 0..n {
        let w = hessian.gyro[ion];
        a[(dim + 3 * ion, dim + 3 * ion + 1)] = w;
        a[(dim + 3 * ion + 1, dim + 3 * ion)] = -w;
    }
    let mut eig: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|p, q| q.im.total_cmp(&p.im));
    eig.truncate(dim);
    eig.reverse();

    let ac = a.map(|v| Complex::new(v, 0.0));
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let mut frequencies = Vec::with_capacity(dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    let mut labels = Vec::with_capacity(dim);
    for (col, lambda) in eig.iter().enumerate() {
        // A real eigenvalue λ = ±√|ω²| marks an unstable direction.
        let (freq, w2) = if lambda.im.abs() > lambda.re.abs() {
            (lambda.im, lambda.im * lambda.im)
        } else {
            (-lambda.re.abs(), -lambda.re * lambda.re)
        };
        frequencies.push(freq);
        eigenvalues.push(w2);
        let u = inverse_iteration(&ac, *lambda, scale.sqrt());
        let disp: Vec<Complex<f64>> = u.iter().take(dim).copied().collect();
        // align phase so the largest component is real, keep the real part
        let big = disp.iter().copied().max_by(|p, q| p.norm().total_cmp(&q.norm())).unwrap_or(Complex::new(1.0, 0.0));
        let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex::new(1.0, 0.0) };
        let re: Vec<f64> = disp.iter().map(|c| (c * phase).re).collect();
        let norm = re.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for (r, v) in re.iter().enumerate() {
            vectors[(r, col)] = v / norm;
        }
        let mags: Vec<f64> = disp.iter().map(|c| c.norm()).collect();
        labels.push(label_for(&mags));
    }
    Ok(ModeSpectrum { frequencies, eigenvalues, eigenvectors: vectors, labels })
}

/// Null vector of `a − λI` by two steps of shifted inverse iteration.
fn inverse_iteration(a: &DMatrix<Complex<f64>>, lambda: Complex<f64>, scale: f64) -> DVector<Complex<f64>> {
    let dim = a.nrows();
    let shift = lambda + Complex::new(1e-10 * scale, 1e-10 * scale);
    let m = a - DMatrix::<Complex<f64>>::identity(dim, dim) * shift;
    let lu = m.lu();
    let mut v = DVector::from_fn(dim, |i, _| Complex::new(1.0 + 0.1 * (i % 7) as f64, 0.3 * (i % 3) as f64));
    for _ in 0..3 {
        if let Some(next) = lu.solve(&v) {
            let norm = next.norm();
            if norm > 0.0 && norm.is_finite() {
                v = next / Complex::new(norm, 0.0);
            }
        }
    }
    v
}

/// Spectrum appropriate to the trap: gyroscopic for Penning rotating
/// frames, symmetric otherwise.
pub fn spectrum_for(hessian: &Hessian) -> Result<ModeSpectrum> {
    if hessian.gyro.iter().any(|&w| w != 0.0) {
        gyroscopic_spectrum(hessian)
    } else {
        mode_spectrum(hessian)
    }
}

/// Transverse (x and y) block of a linear string's Hessian. The string's
/// axial and transverse blocks decouple exactly.
pub fn transverse_spectrum(state: &SystemState, species: &[IonSpecies], trap: &LinearRfTrap) -> Result<ModeSpectrum> {
    let full = hessian(state, species, &TrapConfig::pseudopotential(trap.clone()))?;
    let n = state.len();
    let idx: Vec<usize> = (0..n).flat_map(|i| [3 * i, 3 * i + 1]).collect();
    let block = DMatrix::from_fn(2 * n, 2 * n, |r, c| full.matrix[(idx[r], idx[c])]);
    symmetric_spectrum(&block, 2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftModePoint {
    pub ratio: f64,
    /// Lowest transverse frequency of the string (rad/s); negative when
    /// the string is unstable there.
    pub lowest_frequency: f64,
    /// True once the linear string is no longer a minimum.
    pub past_transition: bool,
}

/// Lowest transverse frequency of an N-ion string across anisotropies
/// ω_⊥²/ω_z² (weaker radial axis). `template` fixes every trap parameter
/// except the RF amplitude.
pub fn soft_mode_scan(
    n: usize,
    species: &IonSpecies,
    template: &LinearRfTrap,
    ratios: &[f64],
) -> Result<Vec<SoftModePoint>> {
    let wz = template.axial_frequency(species);
    let l = length_scale(species, wz);
    let positions: Vec<_> = scaled_string_positions(n)
        .into_iter()
        .map(|u| nalgebra::Vector3::new(0.0, 0.0, u * l))
        .collect();
    let state = SystemState::at_rest(positions);
    let table = std::slice::from_ref(species);
    ratios
        .iter()
        .map(|&ratio| {
            let trap = template.with_anisotropy(species, ratio)?;
            let spec = transverse_spectrum(&state, table, &trap)?;
            let lowest = spec.frequencies[0];
            Ok(SoftModePoint {
                ratio,
                lowest_frequency: lowest,
                past_transition: spec.eigenvalues[0] < -1e-12 * spec.eigenvalues[spec.len() - 1].abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::species_from_catalog;
    use std::f64::consts::PI;

    fn ca() -> IonSpecies {
        species_from_catalog("Ca40").unwrap()
    }

    fn string_state(n: usize, wz: f64) -> SystemState {
        let l = length_scale(&ca(), wz);
        SystemState::at_rest(
            scaled_string_positions(n).into_iter().map(|u| nalgebra::Vector3::new(0.0, 0.0, u * l)).collect(),
        )
    }

    fn trap(wz: f64, wr: f64) -> LinearRfTrap {
        LinearRfTrap::from_secular(&ca(), 1e-3, 2.0 * PI * 30e6, wr, wz, 0.0).unwrap()
    }

    #[test]
    fn single_ion_is_diagonal() {
        let wz = 2.0 * PI * 500e3;
        let t = trap(wz, 2.0 * PI * 2e6).with_asymmetry(0.01);
        let h = hessian(&SystemState::at_rest(vec![nalgebra::Vector3::zeros()]), &[ca()], &TrapConfig::pseudopotential(t.clone())).unwrap();
        let s = crate::trap::rf_secular_frequencies(&t, &ca()).unwrap();
        assert!((h.matrix[(0, 0)] - s.x * s.x).abs() < 1e-12 * s.x * s.x);
        assert!((h.matrix[(1, 1)] - s.y * s.y).abs() < 1e-12 * s.x * s.x);
        assert!((h.matrix[(2, 2)] - wz * wz).abs() < 1e-12 * wz * wz);
        assert_eq!(h.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn two_ion_axial_modes() {
        let wz = 2.0 * PI * 500e3;
        let st = string_state(2, wz);
        let h = hessian(&st, &[ca()], &TrapConfig::pseudopotential(trap(wz, 2.0 * PI * 2e6))).unwrap();
        let spec = mode_spectrum(&h).unwrap();
        let axial = spec.with_label(ModeLabel::Axial);
        assert_eq!(axial.len(), 2);
        assert!((axial[0] / wz - 1.0).abs() < 1e-9);
        assert!((axial[1] / wz - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn off_equilibrium_rejected() {
        let wz = 2.0 * PI * 500e3;
        let mut st = string_state(3, wz);
        st.positions[0].z *= 1.1;
        let err = hessian(&st, &[ca()], &TrapConfig::pseudopotential(trap(wz, 2.0 * PI * 2e6))).unwrap_err();
        assert!(matches!(err, Error::NotAtEquilibrium { .. }));
    }

    #[test]
    fn zigzag_mode_alternates() {
        let wz = 2.0 * PI * 500e3;
        let st = string_state(6, wz);
        let spec = transverse_spectrum(&st, &[ca()], &trap(wz, 2.0 * PI * 3e6)).unwrap();
        let v = spec.eigenvectors.column(0);
        // ion i's x and y entries sit at 2i, 2i+1; pick the plane carrying the mode
        let plane = if v[0].abs() > v[1].abs() { 0 } else { 1 };
        for i in 0..5 {
            assert!(v[2 * i + plane] * v[2 * (i + 1) + plane] < 0.0);
        }
    }

    #[test]
    fn soft_mode_vanishes_at_critical_ratio() {
        let wz = 2.0 * PI * 500e3;
        let t = trap(wz, 2.0 * PI * 3e6);
        let pts = soft_mode_scan(3, &ca(), &t, &[4.0, 3.0, 2.4, 2.3]).unwrap();
        assert!(pts[0].lowest_frequency > pts[1].lowest_frequency);
        assert!(pts[2].lowest_frequency.abs() < 1e-4 * wz);
        assert!(!pts[1].past_transition);
        assert!(pts[3].past_transition);
    }
}
