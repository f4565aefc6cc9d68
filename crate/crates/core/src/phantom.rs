//! Synthetic sound-speed maps and analytic receive data.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::focusing::{array_plane_field, FocusTarget};
use crate::gridio::{ArrayGeometry, Grid, Lattice, RfRecording};
use crate::medium::MediumMap;
use crate::propagator::MarchConfig;

/// Largest admissible |contrast|.
pub const MAX_CONTRAST: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomKind {
    Uniform,
    /// One flat slab covering `[z_start, z_start + thickness)`.
    Layered { z_start: f64, thickness: f64 },
    GaussianBump {
        center_z: f64,
        center_x: f64,
        #[serde(default)]
        center_y: f64,
        sigma: f64,
    },
    /// `count` slabs with sinusoidal boundaries inside `[z_min, z_max]`; each
    /// slab draws a contrast of magnitude in `[|contrast|/2, |contrast|]` and
    /// random sign. Overlaps add and are clipped to `|contrast|`.
    RandomSlabs {
        count: usize,
        z_min: f64,
        z_max: f64,
        min_thickness: f64,
        max_thickness: f64,
        /// Peak boundary displacement.
        waviness: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(flatten)]
    pub kind: PhantomKind,
    pub base_speed: f64,
    /// Fractional speed change of the inclusion, within +-0.3.
    pub contrast: f64,
    #[serde(default)]
    pub seed: u64,
    /// Reference speed; the mean speed when absent.
    #[serde(default)]
    pub reference_speed: Option<f64>,
}

impl PhantomSpec {
    pub fn uniform(base_speed: f64) -> Self {
        Self {
            kind: PhantomKind::Uniform,
            base_speed,
            contrast: 0.0,
            seed: 0,
            reference_speed: None,
        }
    }

    pub fn layered(base_speed: f64, contrast: f64, z_start: f64, thickness: f64) -> Self {
        Self {
            kind: PhantomKind::Layered { z_start, thickness },
            base_speed,
            contrast,
            seed: 0,
            reference_speed: None,
        }
    }

    pub fn gaussian_bump(base_speed: f64, contrast: f64, center_z: f64, center_x: f64, sigma: f64) -> Self {
        Self {
            kind: PhantomKind::GaussianBump {
                center_z,
                center_x,
                center_y: 0.0,
                sigma,
            },
            base_speed,
            contrast,
            seed: 0,
            reference_speed: None,
        }
    }

    pub fn random_slabs(base_speed: f64, contrast: f64, z_min: f64, z_max: f64, count: usize, seed: u64) -> Self {
        Self {
            kind: PhantomKind::RandomSlabs {
                count,
                z_min,
                z_max,
                min_thickness: 2e-3,
                max_thickness: 8e-3,
                waviness: 2e-3,
            },
            base_speed,
            contrast,
            seed,
            reference_speed: None,
        }
    }

    pub fn with_reference_speed(mut self, c0: f64) -> Self {
        self.reference_speed = Some(c0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AsaError::InvalidInput(msg));
        if !(self.base_speed > 0.0) || !self.base_speed.is_finite() {
            return bad(format!("base speed must be > 0, got {}", self.base_speed));
        }
        if !(self.contrast.abs() <= MAX_CONTRAST) {
            return bad(format!("contrast {} outside +-{MAX_CONTRAST}", self.contrast));
        }
        match self.kind {
            PhantomKind::Uniform => {}
            PhantomKind::Layered { z_start, thickness } => {
                if !z_start.is_finite() || !(thickness > 0.0) {
                    return bad("layer needs finite start and thickness > 0".into());
                }
            }
            PhantomKind::GaussianBump { sigma, .. } => {
                if !(sigma > 0.0) {
                    return bad("bump sigma must be > 0".into());
                }
            }
            PhantomKind::RandomSlabs {
                count,
                z_min,
                z_max,
                min_thickness,
                max_thickness,
                waviness,
            } => {
                if count == 0 || !(z_max > z_min) || !(min_thickness > 0.0) || max_thickness < min_thickness || !(waviness >= 0.0) {
                    return bad("random slabs need count >= 1, z_max > z_min, 0 < min <= max thickness, waviness >= 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| AsaError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AsaError::Format(e.to_string()))
    }
}

/// Grid origin used by [`make_phantom`]: z from 0, transverse axes with x = 0
/// (and y = 0) on the node at index n/2.
pub fn phantom_origin(dims: &[usize], spacing: &[f64]) -> Vec<f64> {
    let mut origin = vec![0.0];
    for (n, d) in dims[1..].iter().zip(&spacing[1..]) {
        origin.push(-((n / 2) as f64) * d);
    }
    origin
}

struct Slab {
    z0: f64,
    thickness: f64,
    contrast: f64,
    amplitude: f64,
    wavelength: f64,
    phase: f64,
    heading: f64,
}

impl Slab {
    fn contains(&self, z: f64, x: f64, y: f64) -> bool {
        let along = x * self.heading.cos() + y * self.heading.sin();
        let shift = self.amplitude * (2.0 * PI * along / self.wavelength + self.phase).sin();
        let top = self.z0 + shift;
        z >= top && z < top + self.thickness
    }
}

fn draw_slabs(spec: &PhantomSpec, three_d: bool) -> Vec<Slab> {
    let PhantomKind::RandomSlabs {
        count,
        z_min,
        z_max,
        min_thickness,
        max_thickness,
        waviness,
    } = spec.kind
    else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bound = spec.contrast.abs();
    (0..count)
        .map(|_| {
            let thickness = rng.gen_range(min_thickness..=max_thickness).min(z_max - z_min);
            let z0 = rng.gen_range(z_min..=(z_max - thickness).max(z_min));
            let magnitude = if bound > 0.0 { rng.gen_range(0.5 * bound..=bound) } else { 0.0 };
            let contrast = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            let amplitude = if waviness > 0.0 { rng.gen_range(0.0..=waviness) } else { 0.0 };
            let wavelength = rng.gen_range(10e-3..=40e-3);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let heading = if three_d { rng.gen_range(0.0..PI) } else { 0.0 };
            Slab {
                z0,
                thickness,
                contrast,
                amplitude,
                wavelength,
                phase,
                heading,
            }
        })
        .collect()
}

/// Sound-speed map `[z, x]` or `[z, x, y]` for `spec`, laid out per
/// [`phantom_origin`].
pub fn make_phantom(spec: &PhantomSpec, dims: &[usize], spacing: &[f64]) -> Result<MediumMap> {
    spec.validate()?;
    if !(2..=3).contains(&dims.len()) || spacing.len() != dims.len() {
        return Err(AsaError::Shape("phantom needs 2 or 3 axes with matching spacing".into()));
    }
    let origin = phantom_origin(dims, spacing);
    let ny = dims.get(2).copied().unwrap_or(1);
    let coord = |axis: usize, i: usize| origin[axis] + i as f64 * spacing[axis];
    let slabs = draw_slabs(spec, dims.len() == 3);
    let c = spec.base_speed;
    let bound = spec.contrast.abs();
    let eps = 1e-9 * spacing[0];

    let mut speeds = Vec::with_capacity(dims.iter().product());
    for iz in 0..dims[0] {
        let z = coord(0, iz);
        for ix in 0..dims[1] {
            let x = coord(1, ix);
            for iy in 0..ny {
                let y = if dims.len() == 3 { coord(2, iy) } else { 0.0 };
                let delta = match spec.kind {
                    PhantomKind::Uniform => 0.0,
                    PhantomKind::Layered { z_start, thickness } => {
                        if z >= z_start - eps && z < z_start + thickness - eps {
                            spec.contrast
                        } else {
                            0.0
                        }
                    }
                    PhantomKind::GaussianBump {
                        center_z,
                        center_x,
                        center_y,
                        sigma,
                    } => {
                        let r2 = (z - center_z).powi(2) + (x - center_x).powi(2) + (y - center_y).powi(2);
                        spec.contrast * (-r2 / (2.0 * sigma * sigma)).exp()
                    }
                    PhantomKind::RandomSlabs { .. } => slabs
                        .iter()
                        .filter(|s| s.contains(z, x, y))
                        .map(|s| s.contrast)
                        .sum::<f64>()
                        .clamp(-bound, bound),
                };
                speeds.push(c * (1.0 + delta));
            }
        }
    }
    let grid = Grid::real(dims.to_vec(), spacing.to_vec(), origin, speeds)?;
    let m = MediumMap::new(grid)?;
    match spec.reference_speed {
        Some(c0) => m.with_reference_speed(c0),
        None => Ok(m),
    }
}

/// 2D free-space field `(i/4) H0(k r)` of a unit line source.
pub fn line_source_field(k0: f64, r: f64) -> Complex64 {
    let kr = k0 * r;
    Complex64::new(-libm::y0(kr), libm::j0(kr)) * 0.25
}

/// 3D free-space field `exp(i k r) / (4 pi r)` of a unit point source.
pub fn point_source_field(k0: f64, r: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (4.0 * PI * r), k0 * r)
}

/// Raised-cosine onset lasting this many periods.
const ONSET_PERIODS: f64 = 2.0;

fn check_timing(frequency: f64, c0: f64, t_len: f64, dt: f64) -> Result<usize> {
    if !(frequency > 0.0) || !(c0 > 0.0) || !(dt > 0.0) || !(t_len > 0.0) {
        return Err(AsaError::InvalidInput("frequency, c0, dt and t_len must be > 0".into()));
    }
    if dt >= 0.5 / frequency {
        return Err(AsaError::Sampling(format!(
            "dt = {dt} s does not resolve {frequency} Hz"
        )));
    }
    Ok((t_len / dt).round() as usize)
}

/// Real time series `Re(p exp(-i w t))` with a raised-cosine onset.
pub fn phasor_to_series(p: Complex64, frequency: f64, samples: usize, dt: f64) -> Vec<f64> {
    let omega = 2.0 * PI * frequency;
    let ramp = ONSET_PERIODS / frequency;
    (0..samples)
        .map(|n| {
            let t = n as f64 * dt;
            let w = if t < ramp { 0.5 * (1.0 - (PI * t / ramp).cos()) } else { 1.0 };
            w * (p * Complex64::from_polar(1.0, -omega * t)).re
        })
        .collect()
}

fn recording_from_phasors(
    phasors: &[Complex64],
    frequency: f64,
    samples: usize,
    dt: f64,
    geometry: &ArrayGeometry,
) -> Result<RfRecording> {
    let data = phasors
        .iter()
        .flat_map(|&p| phasor_to_series(p, frequency, samples, dt))
        .collect();
    RfRecording::new(
        phasors.len(),
        samples,
        dt,
        geometry.pitch,
        geometry.element_positions[0],
        data,
    )
}

/// RF of a steady line source at `source = [x, z]` seen by a linear array on z = 0.
pub fn analytic_source_plane(
    source: [f64; 2],
    frequency: f64,
    c0: f64,
    geometry: &ArrayGeometry,
    t_len: f64,
    dt: f64,
) -> Result<RfRecording> {
    let samples = check_timing(frequency, c0, t_len, dt)?;
    geometry.validate()?;
    let k0 = 2.0 * PI * frequency / c0;
    if source[1].abs() < 2.0 * (2.0 * PI / k0) {
        return Err(AsaError::InvalidInput(
            "source must sit at least two wavelengths from the array".into(),
        ));
    }
    let phasors: Vec<Complex64> = geometry
        .element_positions
        .iter()
        .map(|&x| line_source_field(k0, ((x - source[0]).powi(2) + source[1].powi(2)).sqrt()))
        .collect();
    recording_from_phasors(&phasors, frequency, samples, dt, geometry)
}

/// RF of a steady point source at `source = [x, y, z]` on an `nx x ny`
/// lattice array on z = 0, stored x-major as `[nx * ny, samples]`.
#[allow(clippy::too_many_arguments)]
pub fn analytic_source_lattice(
    source: [f64; 3],
    frequency: f64,
    c0: f64,
    geometry_x: &ArrayGeometry,
    lattice: Lattice,
    t_len: f64,
    dt: f64,
) -> Result<RfRecording> {
    let samples = check_timing(frequency, c0, t_len, dt)?;
    geometry_x.validate()?;
    if geometry_x.len() != lattice.nx {
        return Err(AsaError::Shape("x geometry differs from lattice nx".into()));
    }
    let k0 = 2.0 * PI * frequency / c0;
    let mut phasors = Vec::with_capacity(lattice.nx * lattice.ny);
    for &x in &geometry_x.element_positions {
        for iy in 0..lattice.ny {
            let y = lattice.origin_y + iy as f64 * lattice.pitch_y;
            let r = ((x - source[0]).powi(2) + (y - source[1]).powi(2) + source[2].powi(2)).sqrt();
            phasors.push(point_source_field(k0, r));
        }
    }
    let data = phasors
        .iter()
        .flat_map(|&p| phasor_to_series(p, frequency, samples, dt))
        .collect();
    RfRecording::new(
        phasors.len(),
        samples,
        dt,
        geometry_x.pitch,
        geometry_x.element_positions[0],
        data,
    )?
    .with_lattice(lattice)
}

/// Far-field phase of the line-source field, `k r + pi/4`.
pub fn line_source_far_phase(k0: f64, r: f64) -> f64 {
    k0 * r + FRAC_PI_4
}

/// Receive data for a round-trip test: a narrow Gaussian source of width
/// `fwhm` at `source = [x, z]` is marched through `m` to the array plane and
/// sampled at the elements.
#[allow(clippy::too_many_arguments)]
pub fn round_trip_rf(
    source: [f64; 2],
    fwhm: f64,
    frequency: f64,
    m: &MediumMap,
    geometry: &ArrayGeometry,
    cfg: &MarchConfig,
    t_len: f64,
    dt: f64,
) -> Result<RfRecording> {
    let samples = check_timing(frequency, m.c0(), t_len, dt)?;
    geometry.validate()?;
    let omega = 2.0 * PI * frequency;
    let target = FocusTarget::new(source[0], source[1], fwhm)?;
    let field = array_plane_field(&target, m, omega, cfg)?;
    let g = m.grid();
    let (x0, pitch) = (g.origin()[1], g.spacing()[1]);
    let last = (field.len() - 1) as f64;
    let phasors = geometry
        .element_positions
        .iter()
        .map(|&x| {
            let u = (x - x0) / pitch;
            if u < -1e-9 || u > last + 1e-9 {
                return Err(AsaError::Domain(format!("element at x = {x} outside medium")));
            }
            let u = u.clamp(0.0, last);
            let i = (u.floor() as usize).min(field.len() - 2);
            let f = u - i as f64;
            Ok(field[i] * (1.0 - f) + field[i + 1] * f)
        })
        .collect::<Result<Vec<_>>>()?;
    recording_from_phasors(&phasors, frequency, samples, dt, geometry)
}
