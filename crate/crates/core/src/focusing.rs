//! Transmit focusing through an aberrating layer.
//!
//! A corrected plan time-reverses the field of a virtual point source: a
//! narrow Gaussian on the focal plane is marched back to the array, and the
//! unwrapped phase at each element becomes its arrival time. A geometric plan
//! uses straight-ray travel times at c0. Both store arrival times and turn them
//! into firing delays `max(tau) - tau`, so the latest arrival fires first.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::gridio::{ArrayGeometry, Grid};
use crate::medium::MediumMap;
use crate::propagator::{Direction, FieldVolume, MarchConfig, Marcher};
use crate::spectral::{forward_spectrum, tukey, unwrap_phase, PlaneShape, WindowSpec};

/// Peak corrected amplitude relative to the unit geometric amplitude.
pub const CORRECTED_PEAK_AMPLITUDE: f64 = 1.2;
/// Pressure-magnitude threshold defining the focal spot (-3 dB).
pub const SPOT_THRESHOLD_DB: f64 = -3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusTarget {
    pub x0: f64,
    pub d: f64,
    pub fwhm: f64,
}

impl FocusTarget {
    pub fn new(x0: f64, d: f64, fwhm: f64) -> Result<Self> {
        let t = Self { x0, d, fwhm };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() || !(self.d > 0.0) || !(self.fwhm > 0.0) || !self.d.is_finite() {
            return Err(AsaError::InvalidInput(format!(
                "focus target needs finite x0, d > 0, fwhm > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FocusMethod {
    Corrected,
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusPlan {
    pub geometry: ArrayGeometry,
    /// Firing delays, min = 0.
    pub delays: Vec<f64>,
    /// Arrival times before time reversal.
    pub raw_delays: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub omega: f64,
    pub method: FocusMethod,
}

#[derive(Serialize, Deserialize)]
struct ElementDoc {
    x: f64,
    delay_s: f64,
    raw_delay_s: f64,
    amplitude: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanDoc {
    method: FocusMethod,
    omega: f64,
    frequency_hz: f64,
    geometry: ArrayGeometry,
    elements: Vec<ElementDoc>,
}

impl FocusPlan {
    fn from_arrivals(
        geometry: ArrayGeometry,
        raw_delays: Vec<f64>,
        amplitudes: Vec<f64>,
        omega: f64,
        method: FocusMethod,
    ) -> Result<Self> {
        if raw_delays.iter().any(|t| !t.is_finite()) {
            return Err(AsaError::NonFinite("focus delays"));
        }
        let latest = raw_delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let delays = raw_delays.iter().map(|t| latest - t).collect();
        Ok(Self {
            geometry,
            delays,
            raw_delays,
            amplitudes,
            omega,
            method,
        })
    }

    /// Element phasors `A exp(i omega t)` for the firing schedule.
    pub fn phasors(&self) -> Vec<Complex64> {
        self.delays
            .iter()
            .zip(&self.amplitudes)
            .map(|(&t, &a)| Complex64::from_polar(a, self.omega * t))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PlanDoc {
            method: self.method,
            omega: self.omega,
            frequency_hz: self.omega / (2.0 * PI),
            geometry: self.geometry.clone(),
            elements: self
                .geometry
                .element_positions
                .iter()
                .enumerate()
                .map(|(j, &x)| ElementDoc {
                    x,
                    delay_s: self.delays[j],
                    raw_delay_s: self.raw_delays[j],
                    amplitude: self.amplitudes[j],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| AsaError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlanDoc = serde_json::from_str(text).map_err(|e| AsaError::Format(e.to_string()))?;
        if doc.elements.len() != doc.geometry.len() {
            return Err(AsaError::Format("element count differs from geometry".into()));
        }
        Ok(Self {
            geometry: doc.geometry,
            delays: doc.elements.iter().map(|e| e.delay_s).collect(),
            raw_delays: doc.elements.iter().map(|e| e.raw_delay_s).collect(),
            amplitudes: doc.elements.iter().map(|e| e.amplitude).collect(),
            omega: doc.omega,
            method: doc.method,
        })
    }
}

/// Straight-ray plan at speed `c0` with unit amplitudes.
pub fn geometric_delays(target: &FocusTarget, geometry: &ArrayGeometry, c0: f64) -> Result<FocusPlan> {
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(AsaError::InvalidInput(format!("c0 must be > 0, got {c0}")));
    }
    geometry.validate()?;
    let raw = geometry
        .element_positions
        .iter()
        .map(|&x| ((x - target.x0).powi(2) + target.d * target.d).sqrt() / c0)
        .collect();
    FocusPlan::from_arrivals(
        geometry.clone(),
        raw,
        vec![1.0; geometry.len()],
        0.0,
        FocusMethod::Geometric,
    )
}

/// Same as [`geometric_delays`] with the plan tagged at angular frequency `omega`.
pub fn geometric_plan(target: &FocusTarget, geometry: &ArrayGeometry, c0: f64, omega: f64) -> Result<FocusPlan> {
    let mut plan = geometric_delays(target, geometry, c0)?;
    plan.omega = omega;
    Ok(plan)
}

/// Cosine-windowed Gaussian with the target's FWHM, truncated at 2 FWHM from x0.
pub fn virtual_source(target: &FocusTarget, xs: &[f64]) -> Vec<f64> {
    let sigma = target.fwhm / (2.0 * (2.0 * LN_2).sqrt());
    let half_span = 2.0 * target.fwhm;
    xs.iter()
        .map(|&x| {
            let u = x - target.x0;
            if u.abs() > half_span {
                0.0
            } else {
                let w = 0.5 * (1.0 + (PI * u / half_span).cos());
                w * (-u * u / (2.0 * sigma * sigma)).exp()
            }
        })
        .collect()
}

fn transverse_axis(m: &MediumMap) -> Result<Vec<f64>> {
    let g = m.grid();
    if g.ndim() != 2 {
        return Err(AsaError::Shape(format!(
            "focusing works on [z, x] media, got {} axes",
            g.ndim()
        )));
    }
    Ok((0..g.dims()[1]).map(|i| g.coordinate(1, i)).collect())
}

fn interpolate(xs: &[f64], values: &[Complex64], x: f64) -> Result<Complex64> {
    let pitch = xs[1] - xs[0];
    let u = (x - xs[0]) / pitch;
    let last = (xs.len() - 1) as f64;
    if u < -1e-9 || u > last + 1e-9 {
        return Err(AsaError::Domain(format!("element at x = {x} lies outside the medium")));
    }
    let u = u.clamp(0.0, last);
    let i = (u.floor() as usize).min(xs.len() - 2);
    let f = u - i as f64;
    Ok(values[i] * (1.0 - f) + values[i + 1] * f)
}

/// Steps and exact step size to cover `len` metres with steps close to `dz`.
fn fitted_steps(len: f64, dz: f64) -> (usize, f64) {
    let n = (len / dz).round().max(1.0) as usize;
    (n, len / n as f64)
}

/// Field of the virtual source marched from the focal plane to the array
/// plane (z = 0), sampled on the medium's transverse grid.
///
/// The axial range and direction of `cfg` are replaced; the
/// step is shrunk slightly if needed so the march ends exactly on z = 0.
pub fn array_plane_field(target: &FocusTarget, m: &MediumMap, omega: f64, cfg: &MarchConfig) -> Result<Vec<Complex64>> {
    target.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(AsaError::InvalidInput(format!("omega must be > 0, got {omega}")));
    }
    let xs = transverse_axis(m)?;
    let (x_lo, x_hi) = (xs[0], xs[xs.len() - 1]);
    if !m.covers_z(target.d) || !m.covers_z(0.0) || target.x0 < x_lo || target.x0 > x_hi {
        return Err(AsaError::Domain(format!(
            "target ({}, {}) outside medium",
            target.x0, target.d
        )));
    }
    let (_, dz) = fitted_steps(target.d, cfg.dz);
    let march = MarchConfig {
        dz,
        z_start: target.d,
        z_end: 0.0,
        direction: Direction::Forward,
        ..cfg.clone()
    };

    let source: Vec<Complex64> = virtual_source(target, &xs).into_iter().map(Complex64::from).collect();
    let pitch = m.grid().spacing()[1];
    let p0 = forward_spectrum(
        &source,
        PlaneShape::line(xs.len()),
        [pitch, 0.0],
        [x_lo, 0.0],
        omega,
        target.d,
        m.c0(),
    )?;
    let mut last = Vec::new();
    Marcher::new(&p0, Some(m), &march)?.run(|_, _, plane| {
        last.clear();
        last.extend_from_slice(plane);
    })?;
    Ok(last)
}

/// Phase-corrected plan from the virtual-source field at the array.
pub fn corrected_delays(
    target: &FocusTarget,
    m: &MediumMap,
    omega: f64,
    geometry: &ArrayGeometry,
    cfg: &MarchConfig,
) -> Result<FocusPlan> {
    geometry.validate()?;
    let field = array_plane_field(target, m, omega, cfg)?;
    let xs = transverse_axis(m)?;
    let samples = geometry
        .element_positions
        .iter()
        .map(|&x| interpolate(&xs, &field, x))
        .collect::<Result<Vec<_>>>()?;
    let peak = samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(AsaError::CorrectionFailure(
            "virtual-source field vanishes across the array".into(),
        ));
    }
    let phases: Vec<f64> = samples.iter().map(|v| v.arg()).collect();
    let raw = unwrap_phase(&phases).into_iter().map(|p| p / omega).collect();
    let amplitudes = samples
        .iter()
        .map(|v| CORRECTED_PEAK_AMPLITUDE * v.norm() / peak)
        .collect();
    FocusPlan::from_arrivals(geometry.clone(), raw, amplitudes, omega, FocusMethod::Corrected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSet {
    pub series: Vec<Vec<f64>>,
    /// Start sample of each element's pulse.
    pub onsets: Vec<usize>,
    pub dt: f64,
    pub frequency: f64,
    pub cycles: u32,
    pub amplitude: f64,
    pub window: WindowSpec,
}

impl ExcitationSet {
    pub fn samples(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    /// Samples per pulse, excluding the delay padding.
    pub fn active_samples(&self) -> usize {
        (self.cycles as f64 / (self.frequency * self.dt)).round() as usize
    }

    /// `[elements, samples]` grid with spacing `[pitch, dt]`.
    pub fn to_grid(&self, geometry: &ArrayGeometry) -> Result<Grid> {
        let data = self.series.iter().flatten().copied().collect();
        Grid::real(
            vec![self.series.len(), self.samples()],
            vec![geometry.pitch, self.dt],
            vec![geometry.element_positions[0], 0.0],
            data,
        )
    }
}

/// Tukey-windowed tone bursts, each shifted by its plan delay to the nearest
/// sample and scaled by its plan amplitude.
pub fn synthesize_excitation(
    plan: &FocusPlan,
    frequency: f64,
    cycles: u32,
    amplitude: f64,
    dt: f64,
    taper: WindowSpec,
) -> Result<ExcitationSet> {
    if !(frequency > 0.0) || !(dt > 0.0) {
        return Err(AsaError::InvalidInput("frequency and dt must be > 0".into()));
    }
    if dt >= 0.5 / frequency {
        return Err(AsaError::Sampling(format!(
            "dt = {dt} s does not resolve {frequency} Hz (need dt < {})",
            0.5 / frequency
        )));
    }
    if cycles < 1 {
        return Err(AsaError::InvalidInput("need at least one cycle".into()));
    }
    let active = (cycles as f64 / (frequency * dt)).round() as usize;
    let window = tukey(active, taper)?;
    let pulse: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(k, w)| amplitude * w * (2.0 * PI * frequency * k as f64 * dt).sin())
        .collect();
    let onsets: Vec<usize> = plan.delays.iter().map(|t| (t / dt).round() as usize).collect();
    let len = onsets.iter().max().copied().unwrap_or(0) + active;
    let series = onsets
        .iter()
        .zip(&plan.amplitudes)
        .map(|(&s, &a)| {
            let mut v = vec![0.0; len];
            for (dst, p) in v[s..s + active].iter_mut().zip(&pulse) {
                *dst = a * p;
            }
            v
        })
        .collect();
    Ok(ExcitationSet {
        series,
        onsets,
        dt,
        frequency,
        cycles,
        amplitude,
        window: taper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalMetrics {
    pub error_mm: f64,
    pub peak_pressure: f64,
    pub spot_area_mm2: f64,
    /// `[z, x]` of the maximum, metres.
    pub peak_position: [f64; 2],
}

/// Focal error, peak and -3 dB spot area of a `[z, x]` field (complex or |p|).
pub fn focal_metrics(field: &Grid, target: &FocusTarget) -> Result<FocalMetrics> {
    if field.ndim() != 2 {
        return Err(AsaError::Shape(format!("expected a [z, x] field, got {} axes", field.ndim())));
    }
    let mags: Vec<f64> = match field.as_real64() {
        Some(v) => v.iter().map(|x| x.abs()).collect(),
        None => field.to_complex128().iter().map(|v| v.norm()).collect(),
    };
    if mags.is_empty() || mags.iter().any(|v| !v.is_finite()) {
        return Err(AsaError::NonFinite("focal field"));
    }
    let (imax, peak) = mags
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if !(peak > 0.0) {
        return Err(AsaError::MetricUndefined("field is identically zero".into()));
    }
    let idx = field.unravel(imax);
    let z = field.coordinate(0, idx[0]);
    let x = field.coordinate(1, idx[1]);
    let threshold = peak * 10f64.powf(SPOT_THRESHOLD_DB / 20.0);
    let count = mags.iter().filter(|&&v| v >= threshold).count();
    let cell_mm2 = field.spacing()[0] * field.spacing()[1] * 1e6;
    Ok(FocalMetrics {
        error_mm: ((z - target.d).powi(2) + (x - target.x0).powi(2)).sqrt() * 1e3,
        peak_pressure: peak,
        spot_area_mm2: cell_mm2 * count as f64,
        peak_position: [z, x],
    })
}

/// CW field of a plan fired from z = 0 and marched through `m` to `z_max`.
///
/// Elements deposit their phasors on the nearest transverse grid node.
pub fn simulate_focus(plan: &FocusPlan, m: &MediumMap, cfg: &MarchConfig, z_max: f64) -> Result<FieldVolume> {
    if !(plan.omega > 0.0) {
        return Err(AsaError::InvalidInput("plan has no frequency".into()));
    }
    let xs = transverse_axis(m)?;
    let pitch = xs[1] - xs[0];
    let mut plane = vec![Complex64::default(); xs.len()];
    for (&x, ph) in plan.geometry.element_positions.iter().zip(plan.phasors()) {
        let u = ((x - xs[0]) / pitch).round();
        if u < 0.0 || u as usize >= xs.len() {
            return Err(AsaError::Domain(format!("element at x = {x} lies outside the medium")));
        }
        plane[u as usize] += ph;
    }
    let (_, dz) = fitted_steps(z_max, cfg.dz);
    let march = MarchConfig {
        dz,
        z_start: 0.0,
        z_end: z_max,
        direction: Direction::Forward,
        ..cfg.clone()
    };
    let p0 = forward_spectrum(
        &plane,
        PlaneShape::line(xs.len()),
        [pitch, 0.0],
        [xs[0], 0.0],
        plan.omega,
        0.0,
        m.c0(),
    )?;
    crate::propagator::march_heterogeneous(&p0, m, &march)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> ArrayGeometry {
        ArrayGeometry::centered(3, 30e-3, 0.0).unwrap()
    }

    #[test]
    fn geometric_examples() {
        let t = FocusTarget::new(0.0, 60e-3, 1.5e-3).unwrap();
        let plan = geometric_delays(&t, &geometry(), 1500.0).unwrap();
        assert!((plan.raw_delays[1] - 40e-6).abs() < 1e-12);
        assert!((plan.raw_delays[2] - 44.7214e-6).abs() < 1e-10);
        assert_eq!(plan.delays.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert!(plan.delays[1] > plan.delays[0]);
        assert!(plan.amplitudes.iter().all(|&a| a == 1.0));
        let near = FocusTarget::new(0.0, 1e-15, 1.5e-3).unwrap();
        let plan = geometric_delays(&near, &geometry(), 1500.0).unwrap();
        assert!(plan.raw_delays[1] < 1e-17);
        assert!(geometric_delays(&t, &geometry(), 0.0).is_err());
    }

    #[test]
    fn target_validation() {
        assert!(FocusTarget::new(0.0, 0.0, 1e-3).is_err());
        assert!(FocusTarget::new(0.0, 1e-2, -1e-3).is_err());
    }

    #[test]
    fn virtual_source_shape() {
        let t = FocusTarget::new(1e-3, 10e-3, 1.5e-3).unwrap();
        let xs: Vec<f64> = (0..201).map(|i| -10e-3 + i as f64 * 1e-4).collect();
        let v = virtual_source(&t, &xs);
        let imax = v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
        assert!((xs[imax] - 1e-3).abs() < 1e-12);
        assert!(xs.iter().zip(&v).all(|(x, &y)| (x - 1e-3).abs() <= 3e-3 + 1e-12 || y == 0.0));
    }

    #[test]
    fn excitation_examples() {
        let t = FocusTarget::new(0.0, 60e-3, 1.5e-3).unwrap();
        let mut plan = geometric_plan(&t, &geometry(), 1500.0, 2.0 * PI * 1e6).unwrap();
        plan.delays = vec![0.0; 3];
        let ex = synthesize_excitation(&plan, 1e6, 40, 1e5, 40e-9, WindowSpec::tukey(0.1).unwrap()).unwrap();
        assert_eq!(ex.active_samples(), 1000);
        assert_eq!(ex.samples(), 1000);
        assert_eq!(ex.series[0], ex.series[2]);
        plan.delays = vec![0.0, 3.7 * 40e-9, 0.0];
        let ex = synthesize_excitation(&plan, 1e6, 40, 1e5, 40e-9, WindowSpec::tukey(0.1).unwrap()).unwrap();
        assert_eq!(ex.onsets[1], 4);
        assert!(matches!(
            synthesize_excitation(&plan, 1e6, 40, 1e5, 0.6e-6, WindowSpec::tukey(0.1).unwrap()),
            Err(AsaError::Sampling(_))
        ));
    }

    #[test]
    fn metrics_examples() {
        let t = FocusTarget::new(0.0, 1e-3, 1.5e-3).unwrap();
        let mut data = vec![0.0; 11 * 11];
        data[5 * 11 + 5] = 2.0;
        let g = Grid::real(vec![11, 11], vec![2e-4, 2e-4], vec![0.0, -1e-3], data.clone()).unwrap();
        let m = focal_metrics(&g, &t).unwrap();
        assert!(m.error_mm.abs() < 1e-12);
        assert!((m.spot_area_mm2 - 0.04).abs() < 1e-12);
        assert_eq!(m.peak_pressure, 2.0);
        data.swap(5 * 11 + 5, 6 * 11 + 5);
        let g = Grid::real(vec![11, 11], vec![2e-4, 2e-4], vec![0.0, -1e-3], data).unwrap();
        assert!((focal_metrics(&g, &t).unwrap().error_mm - 0.2).abs() < 1e-12);
        let zero = Grid::real(vec![3, 3], vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0; 9]).unwrap();
        assert!(matches!(focal_metrics(&zero, &t), Err(AsaError::MetricUndefined(_))));
    }

    #[test]
    fn plan_json_round_trip() {
        let t = FocusTarget::new(0.0, 60e-3, 1.5e-3).unwrap();
        let plan = geometric_plan(&t, &geometry(), 1500.0, 1e6).unwrap();
        let back = FocusPlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(back, plan);
    }
}
