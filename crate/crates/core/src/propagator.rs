//! Angular spectrum propagation through homogeneous and weakly heterogeneous
//! media.
//!
//! In a uniform medium each bin evolves as `P(z) = P0 exp(i kz z)`. With a
//! varying sound speed the heterogeneity acts as a source term
//! `Lambda * P = F[lambda p]`, and the spectrum is advanced by the first-order
//! step
//!
//! ```text
//! P[n+1] = exp(i kz dz) * (P[n] + dz / (2 i kz) * F[lambda[n] p[n]])
//! ```
//!
//! The convolution over wavenumbers is always evaluated as a product in the
//! space domain. [`integrate_implicit`] solves the same problem by Picard
//! iteration of the integral form and serves as a reference for the marcher.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::gridio::Grid;
use crate::medium::MediumMap;
use crate::spectral::{
    fft_friendly_len, forward_spectrum, taper_spectrum, PlaneShape, SpectrumPlane, TransformPlan,
    Window2, WindowSpec,
};

pub const DEFAULT_EVANESCENT_CLAMP: f64 = 1e3;
pub const DEFAULT_PAD_FACTOR: usize = 4;
/// Lower bound on |kz| in the source-term prefactor, relative to k0.
pub const KZ_FLOOR: f64 = 1e-6;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sense of the transfer function relative to the marching direction.
///
/// `Forward` advances waves travelling along the marching direction
/// (`exp(+i kz s)` after a distance `s`); `Backward` undoes such travel
/// (`exp(-i kz s)`), which is how received data are back-propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchConfig {
    pub dz: f64,
    pub z_start: f64,
    pub z_end: f64,
    pub direction: Direction,
    /// Tukey taper over the propagating disc, applied to the initial spectrum.
    /// `None` keeps every bin, including evanescent ones.
    pub taper: Option<WindowSpec>,
    pub pad_factor: usize,
    /// Cap on the cumulative gain of any growing (evanescent) bin.
    pub evanescent_clamp: f64,
    /// `[lo, hi]` bounds on Re(kz)/k0 for the heterogeneity coupling: bins
    /// below `lo` (near-grazing and evanescent) propagate without coupling,
    /// bins above `hi` couple fully, with a raised-cosine ramp in between.
    /// `[0, 0]` couples every bin.
    #[serde(default = "default_coupling_band")]
    pub coupling_band: [f64; 2],
    /// Drop propagating bins whose rays would cross more than half the padded
    /// window over the whole march; they would otherwise wrap around.
    #[serde(default = "default_band_limit")]
    pub band_limit: bool,
}

fn default_band_limit() -> bool {
    true
}

pub const DEFAULT_COUPLING_BAND: [f64; 2] = [0.3, 0.5];

fn default_coupling_band() -> [f64; 2] {
    DEFAULT_COUPLING_BAND
}

/// Coupling weight of a bin with axial wavenumber `kz`.
pub fn coupling_weight(kz: Complex64, k0: f64, band: [f64; 2]) -> f64 {
    let [lo, hi] = band;
    if hi <= 0.0 {
        return 1.0;
    }
    let u = kz.re / k0;
    if u >= hi {
        1.0
    } else if u <= lo {
        0.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (u - lo) / (hi - lo)).cos())
    }
}

impl MarchConfig {
    pub fn new(dz: f64, z_start: f64, z_end: f64, direction: Direction) -> Self {
        Self {
            dz,
            z_start,
            z_end,
            direction,
            taper: match direction {
                Direction::Forward => None,
                Direction::Backward => Some(WindowSpec {
                    kind: crate::spectral::WindowKind::Tukey,
                    r: 0.25,
                }),
            },
            pad_factor: DEFAULT_PAD_FACTOR,
            evanescent_clamp: DEFAULT_EVANESCENT_CLAMP,
            coupling_band: DEFAULT_COUPLING_BAND,
            band_limit: true,
        }
    }

    pub fn with_pad_factor(mut self, pad_factor: usize) -> Self {
        self.pad_factor = pad_factor;
        self
    }

    pub fn with_taper(mut self, taper: Option<WindowSpec>) -> Self {
        self.taper = taper;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dz > 0.0) || !self.dz.is_finite() {
            return Err(AsaError::InvalidConfig(format!("dz must be > 0, got {}", self.dz)));
        }
        if !self.z_start.is_finite() || !self.z_end.is_finite() {
            return Err(AsaError::InvalidConfig("z range must be finite".into()));
        }
        if self.pad_factor < 1 {
            return Err(AsaError::InvalidConfig("pad_factor must be >= 1".into()));
        }
        if !(self.evanescent_clamp >= 1.0) {
            return Err(AsaError::InvalidConfig("evanescent_clamp must be >= 1".into()));
        }
        let [lo, hi] = self.coupling_band;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(AsaError::InvalidConfig(format!(
                "coupling band must satisfy 0 <= lo <= hi <= 1, got {:?}",
                self.coupling_band
            )));
        }
        if let Some(t) = self.taper {
            t.validate()?;
        }
        if self.steps() == 0 {
            return Err(AsaError::InvalidConfig(format!(
                "z range [{}, {}] shorter than one step of {}",
                self.z_start, self.z_end, self.dz
            )));
        }
        Ok(())
    }

    /// Number of marching steps (= number of stored stations).
    pub fn steps(&self) -> usize {
        ((self.z_end - self.z_start).abs() / self.dz).round() as usize
    }

    /// +1 when stepping towards larger z, -1 otherwise.
    pub fn axial_sign(&self) -> f64 {
        if self.z_end >= self.z_start {
            1.0
        } else {
            -1.0
        }
    }

    /// Axial coordinate of station `n` (station 0 is the start plane).
    pub fn station_z(&self, n: usize) -> f64 {
        self.z_start + self.axial_sign() * n as f64 * self.dz
    }
}

/// Complex pressure on `[z, x]` or `[z, x, y]` stations, z ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVolume {
    pub grid: Grid,
    pub omega: f64,
}

impl FieldVolume {
    pub fn values(&self) -> &[Complex64] {
        self.grid.as_complex128().expect("field volumes are complex128")
    }

    pub fn stations(&self) -> usize {
        self.grid.dims()[0]
    }

    pub fn plane(&self, station: usize) -> &[Complex64] {
        let n: usize = self.grid.dims()[1..].iter().product();
        &self.values()[station * n..(station + 1) * n]
    }

    /// |p| on the same lattice.
    pub fn magnitude(&self) -> Grid {
        Grid::real(
            self.grid.dims().to_vec(),
            self.grid.spacing().to_vec(),
            self.grid.origin().to_vec(),
            self.values().iter().map(|v| v.norm()).collect(),
        )
        .expect("same lattice")
    }
}

/// Transfer factor `exp(i kz dist)` with growth capped at `clamp`.
fn transfer(kz: Complex64, dist: f64, clamp: f64) -> Complex64 {
    let t = (I * kz * dist).exp();
    let mag = t.norm();
    if mag > clamp {
        t * (clamp / mag)
    } else {
        t
    }
}

fn floored_kz(kz: Complex64, k0: f64) -> Complex64 {
    let floor = KZ_FLOOR * k0;
    if kz.norm() >= floor {
        kz
    } else if kz.im > 0.0 {
        Complex64::new(0.0, floor)
    } else {
        Complex64::new(floor, 0.0)
    }
}

/// Homogeneous propagation by a signed distance `z`; negative distances
/// back-propagate, with evanescent growth capped at the default clamp.
pub fn propagate_homogeneous(p0: &SpectrumPlane, z: f64) -> Result<SpectrumPlane> {
    propagate_homogeneous_clamped(p0, z, DEFAULT_EVANESCENT_CLAMP)
}

pub fn propagate_homogeneous_clamped(p0: &SpectrumPlane, z: f64, clamp: f64) -> Result<SpectrumPlane> {
    p0.ensure_finite()?;
    if !z.is_finite() {
        return Err(AsaError::NonFinite("propagation distance"));
    }
    let mut out = p0.clone();
    if z == 0.0 {
        return Ok(out);
    }
    for (v, kz) in out.values.iter_mut().zip(p0.kz()) {
        *v *= transfer(kz, z, clamp);
    }
    out.z = p0.z + z;
    Ok(out)
}

/// Zero-pad a spectrum so each transverse axis spans at least `pad_factor`
/// times its physical window, rounded up to an FFT-friendly length, keeping
/// the physical samples centred.
pub fn pad_spectrum(p0: &SpectrumPlane, pad_factor: usize) -> Result<SpectrumPlane> {
    let w = p0.window;
    let target_nx = fft_friendly_len(w.nx * pad_factor).max(p0.shape.nx);
    let target_ny = if p0.shape.is_line() {
        1
    } else {
        fft_friendly_len(w.ny * pad_factor).max(p0.shape.ny)
    };
    if target_nx == p0.shape.nx && target_ny == p0.shape.ny {
        return Ok(p0.clone());
    }
    let mut pressure = p0.values.clone();
    TransformPlan::new(p0.shape).inverse(&mut pressure);
    let bx = (target_nx - p0.shape.nx) / 2;
    let by = (target_ny - p0.shape.ny) / 2;
    let shape = PlaneShape {
        nx: target_nx,
        ny: target_ny,
    };
    let mut padded = vec![Complex64::default(); shape.len()];
    for ix in 0..p0.shape.nx {
        for iy in 0..p0.shape.ny {
            padded[(ix + bx) * target_ny + iy + by] = pressure[ix * p0.shape.ny + iy];
        }
    }
    let origin = [
        p0.origin[0] - bx as f64 * p0.pitch[0],
        p0.origin[1] - by as f64 * p0.pitch[1],
    ];
    let mut out = forward_spectrum(&padded, shape, p0.pitch, origin, p0.omega, p0.z, p0.c0)?;
    out.window = Window2 {
        x_offset: w.x_offset + bx,
        nx: w.nx,
        y_offset: w.y_offset + by,
        ny: w.ny,
    };
    Ok(out)
}

/// Copy the physical window out of a full plane.
pub fn crop_window(plane: &[Complex64], shape: PlaneShape, w: Window2, out: &mut Vec<Complex64>) {
    out.clear();
    for ix in w.x_offset..w.x_offset + w.nx {
        let row = ix * shape.ny;
        out.extend_from_slice(&plane[row + w.y_offset..row + w.y_offset + w.ny]);
    }
}

/// `F[lambda * F^-1[P]]`, the wavenumber convolution `Lambda * P`, evaluated
/// through the convolution theorem.
pub fn heterogeneity_source(
    plan: &mut TransformPlan,
    spectrum: &[Complex64],
    lambda: &[f64],
) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    plan.inverse(&mut buf);
    for (v, &l) in buf.iter_mut().zip(lambda) {
        *v *= l;
    }
    plan.forward(&mut buf);
    buf
}

type LambdaSlot = Option<Option<Arc<Vec<f64>>>>;

/// Step-by-step evaluation of the marching scheme on a padded grid.
/// Zero the propagating bins of `s` whose lateral ray travel over `distance`
/// exceeds half the (padded) window along either transverse axis.
pub fn limit_band(s: &mut SpectrumPlane, distance: f64) {
    let half_x = 0.5 * s.shape.nx as f64 * s.pitch[0];
    let half_y = 0.5 * s.shape.ny as f64 * s.pitch[1];
    let kz = s.kz();
    let ny = s.shape.ny;
    for (ix, &kx) in s.kx_axis.iter().enumerate() {
        for (iy, &ky) in s.ky_axis.iter().enumerate() {
            let i = ix * ny + iy;
            let k = kz[i];
            if k.re <= 0.0 {
                continue;
            }
            let out_x = kx.abs() * distance > half_x * k.re;
            let out_y = !s.shape.is_line() && ky.abs() * distance > half_y * k.re;
            if out_x || out_y {
                s.values[i] = Complex64::default();
            }
        }
    }
}

pub struct Marcher<'a> {
    medium: Option<&'a MediumMap>,
    cfg: MarchConfig,
    plan: TransformPlan,
    shape: PlaneShape,
    window: Window2,
    omega: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    spectrum: Vec<Complex64>,
    pressure: Vec<Complex64>,
    pressure_valid: bool,
    work: Vec<Complex64>,
    step_transfer: Vec<Complex64>,
    coupling: Vec<Complex64>,
    growing: Vec<(usize, f64)>,
    gain: Vec<f64>,
    lambda_cache: Vec<LambdaSlot>,
    station: usize,
    template: SpectrumPlane,
}

impl<'a> std::fmt::Debug for Marcher<'a> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Marcher")
            .field("cfg", &self.cfg)
            .field("shape", &self.shape)
            .field("station", &self.station)
            .finish()
    }
}

impl<'a> Marcher<'a> {
    /// Prepare a march of `p0` (taken to sit at `cfg.z_start`). With no
    /// medium, or a medium whose slices are all at c0, this is homogeneous
    /// propagation.
    pub fn new(p0: &SpectrumPlane, medium: Option<&'a MediumMap>, cfg: &MarchConfig) -> Result<Self> {
        cfg.validate()?;
        p0.ensure_finite()?;
        if !(p0.omega > 0.0) || !(p0.c0 > 0.0) {
            return Err(AsaError::InvalidInput("spectrum needs omega > 0 and c0 > 0".into()));
        }
        if let Some(m) = medium {
            let rel = (m.c0() - p0.c0).abs() / m.c0();
            if rel > 1e-9 {
                return Err(AsaError::InvalidConfig(format!(
                    "spectrum c0 {} differs from medium c0 {}",
                    p0.c0,
                    m.c0()
                )));
            }
            let transverse_axes = if p0.shape.is_line() { 1 } else { 2 };
            if m.transverse_dims().len() != transverse_axes {
                return Err(AsaError::Shape(format!(
                    "medium has {} transverse axes, spectrum has {}",
                    m.transverse_dims().len(),
                    transverse_axes
                )));
            }
            for n in 0..cfg.steps() {
                let z = cfg.station_z(n);
                if !m.covers_z(z) {
                    return Err(AsaError::Domain(format!(
                        "march station z = {z} lies outside the medium"
                    )));
                }
            }
        }

        let mut padded = pad_spectrum(p0, cfg.pad_factor)?;
        if let Some(t) = cfg.taper {
            taper_spectrum(&mut padded, t)?;
        }
        if cfg.band_limit {
            limit_band(&mut padded, (cfg.z_end - cfg.z_start).abs());
        }
        padded.z = cfg.z_start;

        let k0 = padded.k0();
        let s = cfg.direction.sign();
        let kz = padded.kz();
        let mut step_transfer = Vec::with_capacity(kz.len());
        let mut coupling = Vec::with_capacity(kz.len());
        let mut growing = Vec::new();
        for (i, &k) in kz.iter().enumerate() {
            let ks = k * s;
            let t = (I * ks * cfg.dz).exp();
            if t.norm() > 1.0 {
                growing.push((i, t.norm()));
            }
            step_transfer.push(t);
            let w = coupling_weight(k, k0, cfg.coupling_band);
            coupling.push(w * cfg.dz / (2.0 * I * floored_kz(k, k0) * s));
        }
        let gain = vec![1.0; growing.len()];
        let lambda_cache = vec![None; medium.map_or(0, |m| m.axial_len())];

        Ok(Self {
            medium,
            plan: TransformPlan::new(padded.shape),
            shape: padded.shape,
            window: padded.window,
            omega: padded.omega,
            xs: padded.x_coords(),
            ys: padded.y_coords(),
            spectrum: padded.values.clone(),
            pressure: vec![Complex64::default(); padded.shape.len()],
            pressure_valid: false,
            work: Vec::new(),
            step_transfer,
            coupling,
            growing,
            gain,
            lambda_cache,
            station: 0,
            cfg: cfg.clone(),
            template: padded,
        })
    }

    pub fn steps(&self) -> usize {
        self.cfg.steps()
    }

    pub fn station(&self) -> usize {
        self.station
    }

    pub fn z(&self) -> f64 {
        self.cfg.station_z(self.station)
    }

    pub fn window(&self) -> Window2 {
        self.window
    }

    pub fn config(&self) -> &MarchConfig {
        &self.cfg
    }

    fn lambda_for(&mut self, z: f64) -> Result<Option<Arc<Vec<f64>>>> {
        let Some(m) = self.medium else {
            return Ok(None);
        };
        let iz = m.nearest_axial_index(z);
        if let Some(slot) = &self.lambda_cache[iz] {
            return Ok(slot.clone());
        }
        let plane = m.lambda_at(iz, &self.xs, &self.ys, self.omega)?;
        let slot = (!plane.is_zero()).then(|| Arc::new(plane.values));
        self.lambda_cache[iz] = Some(slot.clone());
        Ok(slot)
    }

    fn refresh_pressure(&mut self) {
        if !self.pressure_valid {
            self.pressure.copy_from_slice(&self.spectrum);
            self.plan.inverse(&mut self.pressure);
            self.pressure_valid = true;
        }
    }

    fn update_growth(&mut self) {
        let clamp = self.cfg.evanescent_clamp;
        for ((i, g), gain) in self.growing.iter().zip(self.gain.iter_mut()) {
            let f = g.min(clamp / *gain).max(1.0);
            *gain *= f;
            self.step_transfer[*i] = Complex64::new(f, 0.0);
        }
    }

    /// Advance one axial step.
    pub fn step(&mut self) -> Result<()> {
        if self.station >= self.steps() {
            return Err(AsaError::InvalidConfig("march already complete".into()));
        }
        let z = self.z();
        self.update_growth();
        if let Some(lambda) = self.lambda_for(z)? {
            self.refresh_pressure();
            self.work.clear();
            self.work
                .extend(self.pressure.iter().zip(lambda.iter()).map(|(p, &l)| p * l));
            self.plan.forward(&mut self.work);
            for (((p, c), t), k) in self
                .spectrum
                .iter_mut()
                .zip(&self.work)
                .zip(&self.step_transfer)
                .zip(&self.coupling)
            {
                *p = t * (*p + k * c);
            }
        } else {
            for (p, t) in self.spectrum.iter_mut().zip(&self.step_transfer) {
                *p *= t;
            }
        }
        self.station += 1;
        self.pressure_valid = false;
        Ok(())
    }

    /// Pressure on the physical window at the current station.
    pub fn pressure_window(&mut self, out: &mut Vec<Complex64>) {
        self.refresh_pressure();
        crop_window(&self.pressure, self.shape, self.window, out);
    }

    /// Current (padded) spectrum.
    pub fn spectrum(&self) -> SpectrumPlane {
        let mut s = self.template.clone();
        s.values.clone_from(&self.spectrum);
        s.z = self.z();
        s
    }

    /// March to the end, handing each station's windowed pressure to `visit`
    /// as `(station, z, plane)`, with stations numbered from 1. Returns the
    /// final padded spectrum.
    pub fn run<F>(mut self, mut visit: F) -> Result<SpectrumPlane>
    where
        F: FnMut(usize, f64, &[Complex64]),
    {
        let mut plane = Vec::with_capacity(self.window.nx * self.window.ny);
        while self.station < self.steps() {
            self.step()?;
            self.pressure_window(&mut plane);
            visit(self.station, self.z(), &plane);
        }
        let out = self.spectrum();
        out.ensure_finite()?;
        Ok(out)
    }
}

/// Collect stations into a volume with ascending z.
fn collect_volume(p0: &SpectrumPlane, medium: Option<&MediumMap>, cfg: &MarchConfig) -> Result<FieldVolume> {
    let marcher = Marcher::new(p0, medium, cfg)?;
    let w = marcher.window();
    let omega = p0.omega;
    let mut planes: Vec<Complex64> = Vec::with_capacity(cfg.steps() * w.nx * w.ny);
    let x0 = p0.origin[0] + p0.window.x_offset as f64 * p0.pitch[0];
    let y0 = p0.origin[1] + p0.window.y_offset as f64 * p0.pitch[1];
    marcher.run(|_, _, plane| planes.extend_from_slice(plane))?;

    let n = cfg.steps();
    let plane_len = w.nx * w.ny;
    let descending = cfg.axial_sign() < 0.0;
    if descending {
        let mut reordered = Vec::with_capacity(planes.len());
        for station in (0..n).rev() {
            reordered.extend_from_slice(&planes[station * plane_len..(station + 1) * plane_len]);
        }
        planes = reordered;
    }
    let z_first = if descending {
        cfg.station_z(n)
    } else {
        cfg.station_z(1)
    };
    let (dims, spacing, origin) = if p0.shape.is_line() {
        (vec![n, w.nx], vec![cfg.dz, p0.pitch[0]], vec![z_first, x0])
    } else {
        (
            vec![n, w.nx, w.ny],
            vec![cfg.dz, p0.pitch[0], p0.pitch[1]],
            vec![z_first, x0, y0],
        )
    };
    Ok(FieldVolume {
        grid: Grid::complex(dims, spacing, origin, planes)?,
        omega,
    })
}

/// March `p0` through `m` with the first-order scheme, storing the pressure
/// on the physical window at every station.
pub fn march_heterogeneous(p0: &SpectrumPlane, m: &MediumMap, cfg: &MarchConfig) -> Result<FieldVolume> {
    collect_volume(p0, Some(m), cfg)
}

/// The same pipeline as [`march_heterogeneous`] (padding, taper, clamp,
/// cropping) with the heterogeneity term switched off.
pub fn propagate_homogeneous_volume(p0: &SpectrumPlane, cfg: &MarchConfig) -> Result<FieldVolume> {
    collect_volume(p0, None, cfg)
}

/// Reference solution of the integral form by Picard iteration over a
/// trapezoid rule with node spacing close to `quad_step`.
///
/// Works on the sample grid of `p0` as given (no padding or taper) and
/// propagates forward over `z` metres from `p0.z`.
pub fn integrate_implicit(p0: &SpectrumPlane, m: &MediumMap, z: f64, quad_step: f64) -> Result<SpectrumPlane> {
    const MAX_ITERATIONS: usize = 50;
    const TOLERANCE: f64 = 1e-10;

    p0.ensure_finite()?;
    if !(quad_step > 0.0) || !(z >= 0.0) {
        return Err(AsaError::InvalidInput("need quad_step > 0 and z >= 0".into()));
    }
    if z == 0.0 {
        return Ok(p0.clone());
    }
    let nodes = (z / quad_step).round().max(1.0) as usize;
    let h = z / nodes as f64;
    let k0 = p0.k0();
    let kz = p0.kz();
    let len = p0.shape.len();
    let xs = p0.x_coords();
    let ys = p0.y_coords();

    let mut lambdas: Vec<Option<Arc<Vec<f64>>>> = Vec::with_capacity(nodes + 1);
    let mut cache: Vec<LambdaSlot> = vec![None; m.axial_len()];
    for j in 0..=nodes {
        let zj = p0.z + j as f64 * h;
        if !m.covers_z(zj) {
            return Err(AsaError::Domain(format!("quadrature node z = {zj} outside medium")));
        }
        let iz = m.nearest_axial_index(zj);
        if cache[iz].is_none() {
            let plane = m.lambda_at(iz, &xs, &ys, p0.omega)?;
            cache[iz] = Some((!plane.is_zero()).then(|| Arc::new(plane.values)));
        }
        lambdas.push(cache[iz].clone().unwrap());
    }

    let step: Vec<Complex64> = kz.iter().map(|&k| (I * k * h).exp()).collect();
    let prefactor: Vec<Complex64> = kz.iter().map(|&k| 1.0 / (2.0 * I * floored_kz(k, k0))).collect();
    // free propagation P0 exp(i kz z_j) at every node
    let mut free = vec![Complex64::default(); (nodes + 1) * len];
    for (j, chunk) in free.chunks_mut(len).enumerate() {
        let zj = j as f64 * h;
        for ((out, &p), &k) in chunk.iter_mut().zip(&p0.values).zip(&kz) {
            *out = p * (I * k * zj).exp();
        }
    }

    let mut plan = TransformPlan::new(p0.shape);
    let mut current = free.clone();
    let mut source = vec![Complex64::default(); (nodes + 1) * len];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        for (j, lambda) in lambdas.iter().enumerate() {
            let dst = &mut source[j * len..(j + 1) * len];
            match lambda {
                Some(l) => dst.copy_from_slice(&heterogeneity_source(
                    &mut plan,
                    &current[j * len..(j + 1) * len],
                    l,
                )),
                None => dst.fill(Complex64::default()),
            }
        }
        let mut next = free.clone();
        let mut running = vec![Complex64::default(); len];
        for j in 1..=nodes {
            let (prev_s, cur_s) = (&source[(j - 1) * len..j * len], &source[j * len..(j + 1) * len]);
            for b in 0..len {
                running[b] = step[b] * running[b] + 0.5 * h * (step[b] * prev_s[b] + cur_s[b]);
                next[j * len + b] += prefactor[b] * running[b];
            }
        }
        let diff: f64 = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let norm: f64 = next.iter().map(|a| a.norm_sqr()).sum();
        residual = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
        if !residual.is_finite() {
            break;
        }
        current = next;
        if residual < TOLERANCE {
            let mut out = p0.clone();
            out.values = current[nodes * len..].to_vec();
            out.z = p0.z + z;
            return Ok(out);
        }
    }
    Err(AsaError::Convergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian_plane(n: usize, pitch: f64, omega: f64, c0: f64) -> SpectrumPlane {
        let p: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = (i as f64 - n as f64 / 2.0) * pitch;
                Complex64::new((-x * x / (2.0 * (3e-3f64).powi(2))).exp(), 0.0)
            })
            .collect();
        forward_spectrum(&p, PlaneShape::line(n), [pitch, 0.0], [-(n as f64) / 2.0 * pitch, 0.0], omega, 0.0, c0)
            .unwrap()
    }

    #[test]
    fn zero_distance_is_identity() {
        let s = gaussian_plane(64, 2e-4, 2.0 * PI * 1e6, 1500.0);
        assert_eq!(propagate_homogeneous(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn dc_bin_full_wavelength() {
        let s = gaussian_plane(64, 2e-4, 2.0 * PI * 1e6, 1500.0);
        let lambda = 2.0 * PI / s.k0();
        let out = propagate_homogeneous(&s, lambda).unwrap();
        assert!((out.values[0] - s.values[0]).norm() < 1e-12 * s.values[0].norm());
    }

    #[test]
    fn config_validation() {
        assert!(MarchConfig::new(0.0, 0.0, 1e-3, Direction::Forward).validate().is_err());
        assert!(MarchConfig::new(-1e-4, 0.0, 1e-3, Direction::Forward).validate().is_err());
        assert!(MarchConfig::new(1e-4, 0.0, 1e-3, Direction::Forward)
            .with_pad_factor(0)
            .validate()
            .is_err());
        let c = MarchConfig::new(50e-6, 0.0, 90e-3, Direction::Backward);
        assert_eq!(c.steps(), 1800);
        let down = MarchConfig::new(1e-4, 5e-3, 0.0, Direction::Forward);
        assert_eq!(down.steps(), 50);
        assert!((down.station_z(50)).abs() < 1e-15);
    }

    #[test]
    fn pad_keeps_physical_samples() {
        let s = gaussian_plane(16, 2e-4, 1e6, 1500.0);
        let padded = pad_spectrum(&s, 4).unwrap();
        assert_eq!(padded.shape.nx, 64);
        assert_eq!(padded.window.x_offset, 24);
        let full = crate::spectral::inverse_spectrum(&padded).unwrap();
        let mut cropped = Vec::new();
        crop_window(&full, padded.shape, padded.window, &mut cropped);
        let orig = crate::spectral::inverse_spectrum(&s).unwrap();
        for (a, b) in cropped.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((padded.origin[0] - (s.origin[0] - 24.0 * 2e-4)).abs() < 1e-15);
    }

    #[test]
    fn uniform_medium_oracle_is_free_propagation() {
        let c0 = 1500.0;
        let s = gaussian_plane(32, 2e-4, 2.0 * PI * 5e5, c0);
        let m = MediumMap::uniform(vec![40, 32], vec![1e-4, 2e-4], vec![0.0, s.origin[0]], c0).unwrap();
        let oracle = integrate_implicit(&s, &m, 3e-3, 2.5e-5).unwrap();
        let free = propagate_homogeneous(&s, 3e-3).unwrap();
        for (a, b) in oracle.values.iter().zip(&free.values) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn marcher_rejects_mismatched_c0_and_short_medium() {
        let s = gaussian_plane(32, 2e-4, 2.0 * PI * 5e5, 1500.0);
        let m = MediumMap::uniform(vec![10, 32], vec![1e-4, 2e-4], vec![0.0, 0.0], 1540.0).unwrap();
        let cfg = MarchConfig::new(1e-4, 0.0, 5e-4, Direction::Forward);
        assert!(matches!(Marcher::new(&s, Some(&m), &cfg), Err(AsaError::InvalidConfig(_))));
        let m = MediumMap::uniform(vec![10, 32], vec![1e-4, 2e-4], vec![0.0, 0.0], 1500.0).unwrap();
        let cfg = MarchConfig::new(1e-4, 0.0, 5e-3, Direction::Forward);
        assert!(matches!(Marcher::new(&s, Some(&m), &cfg), Err(AsaError::Domain(_))));
    }
}
