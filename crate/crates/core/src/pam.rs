//! Frequency-selective passive acoustic mapping.
//!
//! Received RF is reduced to one complex amplitude per channel at the DFT bin
//! nearest each requested frequency, back-propagated into the medium, and
//! mapped to intensity `|p|^2`. Sources are taken at the intensity maxima.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::gridio::{Grid, RfRecording};
use crate::medium::MediumMap;
use crate::propagator::{pad_spectrum, Direction, MarchConfig, Marcher};
use crate::spectral::{forward_spectrum, tukey, PlaneShape, SpectrumPlane, WindowSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamConfig {
    pub frequencies: Vec<f64>,
    pub corrected: bool,
    /// Step, padding, k-space taper and clamp; the axial range is taken from
    /// `z_range` and the direction is always backward.
    pub march: MarchConfig,
    pub z_range: [f64; 2],
    /// Taper across channels before the spatial transform.
    pub taper: WindowSpec,
}

impl PamConfig {
    pub fn new(frequencies: Vec<f64>, corrected: bool, dz: f64, z_max: f64) -> Self {
        Self {
            frequencies,
            corrected,
            march: MarchConfig::new(dz, 0.0, z_max, Direction::Backward),
            z_range: [0.0, z_max],
            taper: WindowSpec {
                kind: crate::spectral::WindowKind::Tukey,
                r: 0.25,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [z_min, z_max] = self.z_range;
        if !(z_min >= 0.0) || !(z_max > z_min) {
            return Err(AsaError::InvalidConfig(format!(
                "z range must satisfy 0 <= z_min < z_max, got {:?}",
                self.z_range
            )));
        }
        if self.frequencies.is_empty() || self.frequencies.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(AsaError::InvalidConfig("frequencies must be positive".into()));
        }
        self.taper.validate()?;
        self.march_config(0.0).validate()
    }

    /// The spectrum handed to the march is already padded by
    /// [`rf_to_spectrum`], so the march itself does not pad again.
    fn march_config(&self, z_start: f64) -> MarchConfig {
        MarchConfig {
            z_start,
            z_end: self.z_range[1],
            direction: Direction::Backward,
            pad_factor: 1,
            ..self.march.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m", skip_serializing_if = "Option::is_none", default)]
    pub y: Option<f64>,
    #[serde(rename = "z_m")]
    pub z: f64,
    #[serde(rename = "intensity_norm")]
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// `I = |p|^2` on `[z, x]` or `[z, x, y]`, z ascending.
    pub intensity: Grid,
    /// Requested frequency.
    pub frequency: f64,
    /// Frequency of the DFT bin actually used.
    pub bin_frequency: f64,
    pub corrected: bool,
    pub peaks: Vec<Peak>,
}

#[derive(Serialize)]
struct PeaksDoc<'a> {
    frequency_hz: f64,
    bin_frequency_hz: f64,
    corrected: bool,
    peaks: &'a [Peak],
}

impl PamResult {
    pub fn peaks_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&PeaksDoc {
            frequency_hz: self.frequency,
            bin_frequency_hz: self.bin_frequency,
            corrected: self.corrected,
            peaks: &self.peaks,
        })
        .map_err(|e| AsaError::Format(e.to_string()))
    }
}

/// Index of the DFT bin nearest `frequency`; exact ties go to the lower bin.
pub fn nearest_bin(frequency: f64, samples: usize, dt: f64) -> usize {
    let x = frequency * samples as f64 * dt;
    let lo = x.floor();
    if x - lo > 0.5 {
        lo as usize + 1
    } else {
        lo as usize
    }
}

/// Complex amplitude of every channel at DFT bin `bin`, using the
/// `exp(+i w t)` kernel so that `cos(w t - phi)` yields `exp(i phi)`.
pub fn channel_amplitudes(rf: &RfRecording, bin: usize) -> Vec<Complex64> {
    let n = rf.samples;
    let twiddle: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(2.0 / n as f64, 2.0 * PI * ((bin * k) % n) as f64 / n as f64))
        .collect();
    (0..rf.channels)
        .map(|j| rf.channel(j).iter().zip(&twiddle).map(|(&v, &w)| w * v).sum())
        .collect()
}

/// Validate `frequency` against the record and return its bin.
pub fn select_bin(rf: &RfRecording, frequency: f64) -> Result<usize> {
    rf.validate()?;
    let nyquist = 0.5 / rf.dt;
    if !(frequency > 0.0) || frequency >= nyquist {
        return Err(AsaError::Frequency(format!(
            "{frequency} Hz is not below the Nyquist frequency {nyquist} Hz"
        )));
    }
    let duration = rf.samples as f64 * rf.dt;
    if duration * frequency < 2.0 {
        return Err(AsaError::Resolution(format!(
            "{duration} s record holds fewer than two periods of {frequency} Hz"
        )));
    }
    Ok(nearest_bin(frequency, rf.samples, rf.dt))
}

/// Angular spectrum at z = 0 of the RF component nearest `frequency`.
///
/// Channels are tapered, zero-padded to `pad_factor` times the aperture and
/// transformed. The returned spectrum carries the bin's angular frequency.
pub fn rf_to_spectrum(
    rf: &RfRecording,
    frequency: f64,
    c0: f64,
    taper: WindowSpec,
    pad_factor: usize,
) -> Result<SpectrumPlane> {
    let bin = select_bin(rf, frequency)?;
    if pad_factor < 1 {
        return Err(AsaError::InvalidConfig("pad_factor must be >= 1".into()));
    }
    let mut amplitudes = channel_amplitudes(rf, bin);
    let (shape, pitch, origin) = match rf.lattice {
        None => (
            PlaneShape::line(rf.channels),
            [rf.pitch, 0.0],
            [rf.aperture_origin, 0.0],
        ),
        Some(l) => (
            PlaneShape { nx: l.nx, ny: l.ny },
            [rf.pitch, l.pitch_y],
            [rf.aperture_origin, l.origin_y],
        ),
    };
    let wx = tukey(shape.nx, taper)?;
    let wy = tukey(shape.ny, taper)?;
    for ix in 0..shape.nx {
        for iy in 0..shape.ny {
            amplitudes[ix * shape.ny + iy] *= wx[ix] * if shape.is_line() { 1.0 } else { wy[iy] };
        }
    }
    let omega = 2.0 * PI * bin as f64 / (rf.samples as f64 * rf.dt);
    let s = forward_spectrum(&amplitudes, shape, pitch, origin, omega, 0.0, c0)?;
    pad_spectrum(&s, pad_factor)
}

/// Back-propagate one spectrum over `cfg.z_range` and form `|p|^2`.
/// `p0` is expected to be padded already, as [`rf_to_spectrum`] returns it.
///
/// The reference speed is the medium's when one is given, so corrected and
/// uncorrected maps share kz. The `frequency` recorded in the result is the
/// spectrum's own.
pub fn reconstruct_pam(p0: &SpectrumPlane, m: Option<&MediumMap>, cfg: &PamConfig) -> Result<PamResult> {
    cfg.validate()?;
    if cfg.corrected && m.is_none() {
        return Err(AsaError::InvalidConfig("corrected reconstruction needs a medium".into()));
    }
    let mut p = p0.clone();
    if let Some(m) = m {
        p.c0 = m.c0();
    }
    let march = cfg.march_config(p.z);
    let medium = if cfg.corrected { m } else { None };
    let marcher = Marcher::new(&p, medium, &march)?;
    let w = marcher.window();
    let z_min = cfg.z_range[0] - 1e-9 * march.dz;
    let mut first_z = None;
    let mut values = Vec::new();
    marcher.run(|_, z, plane| {
        if z >= z_min {
            first_z.get_or_insert(z);
            values.extend(plane.iter().map(|v| v.norm_sqr()));
        }
    })?;
    let Some(z0) = first_z else {
        return Err(AsaError::InvalidConfig("no stations inside the z range".into()));
    };
    let stations = values.len() / (w.nx * w.ny);
    let x0 = p.origin[0] + w.x_offset as f64 * p.pitch[0];
    let (dims, spacing, origin) = if p.shape.is_line() {
        (vec![stations, w.nx], vec![march.dz, p.pitch[0]], vec![z0, x0])
    } else {
        let y0 = p.origin[1] + w.y_offset as f64 * p.pitch[1];
        (
            vec![stations, w.nx, w.ny],
            vec![march.dz, p.pitch[0], p.pitch[1]],
            vec![z0, x0, y0],
        )
    };
    let frequency = p.omega / (2.0 * PI);
    Ok(PamResult {
        intensity: Grid::real(dims, spacing, origin, values)?,
        frequency,
        bin_frequency: frequency,
        corrected: cfg.corrected,
        peaks: Vec::new(),
    })
}

/// Full pipeline from RF: one map per configured frequency, in configuration
/// order, each with its `peak_count` strongest peaks.
pub fn reconstruct_rf(
    rf: &RfRecording,
    m: Option<&MediumMap>,
    c0: f64,
    cfg: &PamConfig,
    peak_count: usize,
) -> Result<Vec<PamResult>> {
    cfg.validate()?;
    cfg.frequencies
        .par_iter()
        .map(|&f| {
            let p0 = rf_to_spectrum(rf, f, c0, cfg.taper, cfg.march.pad_factor)?;
            let mut result = reconstruct_pam(&p0, m, cfg)?;
            result.frequency = f;
            result.peaks = localize_peaks(&result, peak_count)?;
            Ok(result)
        })
        .collect()
}

/// The `count` strongest local maxima (8- or 26-connected), intensities
/// normalised to the global maximum. Equal intensities are ordered by grid
/// index, i.e. lexicographically in (z, x[, y]).
pub fn localize_peaks(result: &PamResult, count: usize) -> Result<Vec<Peak>> {
    if count < 1 {
        return Err(AsaError::InvalidInput("peak count must be >= 1".into()));
    }
    let g = &result.intensity;
    let values = g.as_real64().ok_or_else(|| AsaError::InvalidInput("intensity must be real".into()))?;
    let global = values.iter().copied().fold(0.0, f64::max);
    if !(global > 0.0) || !global.is_finite() {
        return Err(AsaError::NoPeaks);
    }
    let dims = g.dims();
    let ndim = dims.len();
    let strides: Vec<isize> = (0..ndim).map(|a| dims[a + 1..].iter().product::<usize>() as isize).collect();
    let deltas = neighbour_deltas(ndim);
    let mut idx = vec![0usize; ndim];
    let mut found: Vec<(usize, f64)> = Vec::new();
    for (flat, &v) in values.iter().enumerate() {
        if v > 0.0 {
            let is_max = deltas.iter().all(|d| {
                let mut off = flat as isize;
                for a in 0..ndim {
                    let j = idx[a] as isize + d[a];
                    if j < 0 || j >= dims[a] as isize {
                        return true;
                    }
                    off += d[a] * strides[a];
                }
                values[off as usize] <= v
            });
            if is_max {
                found.push((flat, v));
            }
        }
        for a in (0..ndim).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(found
        .into_iter()
        .take(count)
        .map(|(flat, v)| {
            let idx = g.unravel(flat);
            Peak {
                z: g.coordinate(0, idx[0]),
                x: g.coordinate(1, idx[1]),
                y: (ndim == 3).then(|| g.coordinate(2, idx[2])),
                intensity: v / global,
            }
        })
        .collect())
}

/// Per-axis steps to every neighbour in the 3^n - 1 cube around a cell.
fn neighbour_deltas(ndim: usize) -> Vec<Vec<isize>> {
    (0..3usize.pow(ndim as u32))
        .map(|code| (0..ndim).map(|a| (code / 3usize.pow(a as u32) % 3) as isize - 1).collect::<Vec<_>>())
        .filter(|d| d.iter().any(|&x| x != 0))
        .collect()
}
