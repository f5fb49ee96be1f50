//! Synthetic fluorescence images.
//!
//! Each fluorescent ion deposits a pixel-integrated Gaussian for every
//! accepted trajectory sample. Accumulators are kept in `f64`; conversion to
//! 16-bit scales by the image maximum.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use nalgebra::Vector3;

use crate::constants::IonSpecies;
use crate::dynamics::CoolingModel;
use crate::error::{Error, Result};
use crate::state::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewAxis {
    X,
    Y,
    #[default]
    Z,
}

impl ViewAxis {
    /// Image-plane coordinates (u right, v up) of a point.
    ///
    /// Viewing along z shows (x, y); along y shows (z, x); along x shows (z, y).
    pub fn project(self, p: &Vector3<f64>) -> (f64, f64) {
        match self {
            ViewAxis::Z => (p.x, p.y),
            ViewAxis::Y => (p.z, p.x),
            ViewAxis::X => (p.z, p.y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    None,
    /// Accept samples whose phase `ω·t mod 2π` is within `window/2` of `phase`.
    PhaseLocked { window: f64, angular_frequency: f64, phase: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    /// Object-plane size of one pixel (m).
    pub pixel_pitch: f64,
    pub width: usize,
    pub height: usize,
    /// Gaussian PSF standard deviation (m).
    pub psf_sigma: f64,
    /// Samples later than `first.time + exposure` are ignored (s).
    pub exposure: f64,
    pub gate: Gate,
    pub view_axis: ViewAxis,
    /// Object-plane coordinates of the image centre.
    pub center: (f64, f64),
    /// Optional brightness weighting by the cooling beam profile.
    pub illumination: Option<CoolingModel>,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            pixel_pitch: 2.65e-6,
            width: 128,
            height: 128,
            psf_sigma: 2e-6,
            exposure: f64::INFINITY,
            gate: Gate::None,
            view_axis: ViewAxis::Z,
            center: (0.0, 0.0),
            illumination: None,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") })
            }
        };
        positive("pixel_pitch", self.pixel_pitch)?;
        positive("psf_sigma", self.psf_sigma)?;
        positive("exposure", self.exposure)?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter { name: "image_size", reason: "must be at least 1x1".into() });
        }
        if let Gate::PhaseLocked { window, .. } = self.gate {
            if !(window > 0.0 && window <= 2.0 * PI) {
                return Err(Error::InvalidParameter {
                    name: "phase_window",
                    reason: format!("must be in (0, 2π], got {window}"),
                });
            }
        }
        Ok(())
    }

    fn accepts(&self, time: f64) -> bool {
        match self.gate {
            Gate::None => true,
            Gate::PhaseLocked { window, angular_frequency, phase } => {
                let d = (angular_frequency * time - phase).rem_euclid(2.0 * PI);
                let d = d.min(2.0 * PI - d);
                d <= 0.5 * window
            }
        }
    }

    /// Object-plane coordinate of the left (u) or lower (v) edge of a pixel.
    fn u_edge(&self, col: usize) -> f64 {
        self.center.0 + (col as f64 - 0.5 * self.width as f64) * self.pixel_pitch
    }

    fn v_edge(&self, row: usize) -> f64 {
        self.center.1 + (0.5 * self.height as f64 - row as f64 - 1.0) * self.pixel_pitch
    }

    /// Fractional pixel coordinates (column, row) of an object-plane point,
    /// measured to the pixel centres.
    pub fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let col = (u - self.center.0) / self.pixel_pitch + 0.5 * self.width as f64 - 0.5;
        let row = 0.5 * self.height as f64 - (v - self.center.1) / self.pixel_pitch - 0.5;
        (col, row)
    }
}

/// Pre-normalization accumulator image, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub accepted_samples: usize,
}

impl Image {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-image max scaling to 0..=65535.
    pub fn to_u16(&self) -> Vec<u16> {
        let max = self.data.iter().copied().fold(0.0, f64::max);
        self.data
            .iter()
            .map(|&x| if max > 0.0 { (x / max * 65535.0).round() as u16 } else { 0 })
            .collect()
    }
}

/// ∫ over [a, b] of the unit-normalized Gaussian centred at `x`.
fn gaussian_mass(a: f64, b: f64, x: f64, sigma: f64) -> f64 {
    let s = SQRT_2 * sigma;
    0.5 * (libm::erf((b - x) / s) - libm::erf((a - x) / s))
}

fn deposit(image: &mut Image, camera: &CameraModel, u: f64, v: f64, weight: f64) {
    let reach = 6.0 * camera.psf_sigma;
    let (c0, r0) = camera.to_pixel(u - reach, v + reach);
    let (c1, r1) = camera.to_pixel(u + reach, v - reach);
    let clamp = |x: f64, n: usize| (x.floor().max(0.0) as usize).min(n);
    let (c0, c1) = (clamp(c0, camera.width), clamp(c1 + 1.0, camera.width));
    let (r0, r1) = (clamp(r0, camera.height), clamp(r1 + 1.0, camera.height));
    if c0 >= c1 || r0 >= r1 {
        return;
    }
    let cols: Vec<f64> = (c0..c1)
        .map(|c| {
            let a = camera.u_edge(c);
            gaussian_mass(a, a + camera.pixel_pitch, u, camera.psf_sigma)
        })
        .collect();
    for r in r0..r1 {
        let a = camera.v_edge(r);
        let wr = weight * gaussian_mass(a, a + camera.pixel_pitch, v, camera.psf_sigma);
        if wr == 0.0 {
            continue;
        }
        let row = &mut image.data[r * camera.width..(r + 1) * camera.width];
        for (k, c) in (c0..c1).enumerate() {
            row[c] += wr * cols[k];
        }
    }
}

/// Time-integrated fluorescence image of a trajectory.
pub fn render(samples: &[SystemState], species: &[IonSpecies], camera: &CameraModel) -> Result<Image> {
    camera.validate()?;
    let mut image = Image {
        width: camera.width,
        height: camera.height,
        data: vec![0.0; camera.width * camera.height],
        accepted_samples: 0,
    };
    let Some(first) = samples.first() else {
        return Err(Error::NoAcceptedSamples);
    };
    for s in samples {
        if s.time - first.time > camera.exposure || !camera.accepts(s.time) {
            continue;
        }
        image.accepted_samples += 1;
        for (p, &k) in s.positions.iter().zip(&s.species_index) {
            let sp = species.get(k).ok_or_else(|| Error::InvalidParameter {
                name: "species_index",
                reason: format!("index {k} outside the species table"),
            })?;
            if !sp.fluorescent {
                continue;
            }
            let weight = camera.illumination.as_ref().map_or(1.0, |c| c.beam_weight(p));
            let (u, v) = camera.view_axis.project(p);
            deposit(&mut image, camera, u, v, weight);
        }
    }
    if image.accepted_samples == 0 {
        return Err(Error::NoAcceptedSamples);
    }
    Ok(image)
}

/// Ungated image of a full-drive trajectory; micromotion spreads each
/// off-axis ion into a line along its RF excursion.
pub fn rf_image_streaks(samples: &[SystemState], species: &[IonSpecies], camera: &CameraModel) -> Result<Image> {
    let ungated = CameraModel { gate: Gate::None, ..camera.clone() };
    render(samples, species, &ungated)
}

/// Samples of a rigidly rotating crystal in the lab frame: rotating-frame
/// positions turned by `−ω_r t` about z (the crystal rotates clockwise
/// seen from +z).
pub fn rotating_crystal_samples(
    positions: &[Vector3<f64>],
    species_index: &[usize],
    rotation: f64,
    times: impl IntoIterator<Item = f64>,
) -> Vec<SystemState> {
    times
        .into_iter()
        .map(|t| {
            let (s, c) = (-rotation * t).sin_cos();
            let p = positions.iter().map(|r| Vector3::new(c * r.x - s * r.y, s * r.x + c * r.y, r.z)).collect();
            let mut st = SystemState::at_rest(p).with_species(species_index.to_vec());
            st.time = t;
            st
        })
        .collect()
}

/// A bright connected region of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Spot {
    /// Intensity-weighted centroid (column, row), fractional pixels.
    pub centroid: (f64, f64),
    /// Central second moments (pixel²): (cc, rr, cr).
    pub moments: (f64, f64, f64),
    pub total: f64,
    pub pixels: usize,
}

impl Spot {
    /// RMS extent along the principal axis of the spot (pixels).
    pub fn major_rms(&self) -> f64 {
        let (a, b, c) = self.moments;
        let tr = 0.5 * (a + b);
        let det = a * b - c * c;
        (tr + (tr * tr - det).max(0.0).sqrt()).sqrt()
    }
}

/// Connected regions (4-neighbour) above `threshold × max`.
pub fn find_spots(image: &Image, threshold: f64) -> Vec<Spot> {
    let max = image.data.iter().copied().fold(0.0, f64::max);
    let cut = threshold * max;
    let (w, h) = (image.width, image.height);
    let mut seen = vec![false; w * h];
    let mut spots = Vec::new();
    for start in 0..w * h {
        if seen[start] || image.data[start] <= cut {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (c, r) = (i % w, i / w);
            let mut push = |j: usize| {
                if !seen[j] && image.data[j] > cut {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                push(i - 1);
            }
            if c + 1 < w {
                push(i + 1);
            }
            if r > 0 {
                push(i - w);
            }
            if r + 1 < h {
                push(i + w);
            }
        }
        let total: f64 = members.iter().map(|&i| image.data[i]).sum();
        let mc = members.iter().map(|&i| (i % w) as f64 * image.data[i]).sum::<f64>() / total;
        let mr = members.iter().map(|&i| (i / w) as f64 * image.data[i]).sum::<f64>() / total;
        let (mut cc, mut rr, mut cr) = (0.0, 0.0, 0.0);
        for &i in &members {
            let dc = (i % w) as f64 - mc;
            let dr = (i / w) as f64 - mr;
            cc += dc * dc * image.data[i];
            rr += dr * dr * image.data[i];
            cr += dc * dr * image.data[i];
        }
        spots.push(Spot {
            centroid: (mc, mr),
            moments: (cc / total, rr / total, cr / total),
            total,
            pixels: members.len(),
        });
    }
    spots
}

/// Mean intensity in `bins` radial bins out to `max_radius` (pixels) for
/// each of `sectors` equal azimuthal sectors around `center` (pixels).
pub fn sector_profiles(image: &Image, center: (f64, f64), sectors: usize, bins: usize, max_radius: f64) -> Vec<Vec<f64>> {
    let mut sum = vec![vec![0.0; bins]; sectors];
    let mut count = vec![vec![0usize; bins]; sectors];
    for r in 0..image.height {
        for c in 0..image.width {
            let dc = c as f64 - center.0;
            let dr = r as f64 - center.1;
            let rad = dc.hypot(dr);
            if rad >= max_radius {
                continue;
            }
            let phi = dr.atan2(dc).rem_euclid(2.0 * PI);
            let s = ((phi / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
            let b = ((rad / max_radius * bins as f64) as usize).min(bins - 1);
            sum[s][b] += image.at(c, r);
            count[s][b] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, n)| s.iter().zip(n).map(|(x, &k)| if k > 0 { x / k as f64 } else { 0.0 }).collect())
        .collect()
}

/// Writes a 16-bit portable graymap: `P2` (ASCII) or `P5` (binary,
/// big-endian samples), header `P? W H 65535`, rows top to bottom.
pub fn write_pgm(image: &Image, binary: bool, out: &mut impl Write) -> std::io::Result<()> {
    let px = image.to_u16();
    let magic = if binary { "P5" } else { "P2" };
    write!(out, "{magic}\n{} {}\n65535\n", image.width, image.height)?;
    if binary {
        let bytes: Vec<u8> = px.iter().flat_map(|v| v.to_be_bytes()).collect();
        out.write_all(&bytes)?;
    } else {
        for row in px.chunks(image.width) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn pgm_bytes(image: &Image, binary: bool) -> Vec<u8> {
    let mut buf = Vec::new();
    write_pgm(image, binary, &mut buf).expect("writing to a Vec cannot fail");
    buf
}
