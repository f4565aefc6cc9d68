//! Transverse transforms, wavenumber axes, the axial wavenumber, windows and
//! phase unwrapping.
//!
//! The forward transform is the unnormalised DFT with kernel
//! `exp(-i (kx x + ky y))`; the inverse carries the `1/N` factor. Planes are
//! stored x-major: sample `(ix, iy)` lives at `ix * ny + iy`. Line planes use
//! `ny == 1` and have no y axis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneShape {
    pub nx: usize,
    pub ny: usize,
}

impl PlaneShape {
    pub fn line(nx: usize) -> Self {
        Self { nx, ny: 1 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_line(&self) -> bool {
        self.ny == 1
    }
}

/// Sub-rectangle of a (possibly padded) plane holding the physical samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window2 {
    pub x_offset: usize,
    pub nx: usize,
    pub y_offset: usize,
    pub ny: usize,
}

impl Window2 {
    pub fn full(shape: PlaneShape) -> Self {
        Self {
            x_offset: 0,
            nx: shape.nx,
            y_offset: 0,
            ny: shape.ny,
        }
    }

    pub fn shape(&self) -> PlaneShape {
        PlaneShape {
            nx: self.nx,
            ny: self.ny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Tukey,
}

/// Tapered-cosine window; `r` is the cosine fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub r: f64,
}

impl WindowSpec {
    pub fn tukey(r: f64) -> Result<Self> {
        let w = Self {
            kind: WindowKind::Tukey,
            r,
        };
        w.validate()?;
        Ok(w)
    }

    pub const fn rectangular() -> Self {
        Self {
            kind: WindowKind::Tukey,
            r: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(AsaError::InvalidInput(format!(
                "Tukey fraction must be in [0, 1], got {}",
                self.r
            )));
        }
        Ok(())
    }

    /// Window value at normalised position `u` in [0, 1].
    pub fn profile(&self, u: f64) -> f64 {
        tukey_profile(u, self.r)
    }
}

fn tukey_profile(u: f64, r: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    if r <= 0.0 {
        return 1.0;
    }
    let half = 0.5 * r;
    if u < half {
        0.5 * (1.0 + (2.0 * PI / r * (u - half)).cos())
    } else if u > 1.0 - half {
        0.5 * (1.0 + (2.0 * PI / r * (u - 1.0 + half)).cos())
    } else {
        1.0
    }
}

/// `n`-point Tukey window.
pub fn tukey(n: usize, spec: WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(AsaError::InvalidInput("window length must be >= 1".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    Ok((0..n)
        .map(|i| tukey_profile(i as f64 / (n - 1) as f64, spec.r))
        .collect())
}

/// Smallest `m >= n` whose only prime factors are 2, 3, 5 and 7.
pub fn fft_friendly_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Wavenumbers of an `n`-point transform at `pitch`, in FFT order.
pub fn wavenumber_axis(n: usize, pitch: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * pitch);
    (0..n)
        .map(|i| {
            if i <= n / 2 {
                i as f64 * dk
            } else {
                (i as f64 - n as f64) * dk
            }
        })
        .collect()
}

/// Axial wavenumber on the decaying branch.
///
/// Propagating bins give the non-negative real root; evanescent bins give
/// `+i sqrt(kx^2 + ky^2 - k0^2)` so that `exp(i kz z)` decays for z > 0.
pub fn axial_wavenumber(k0: f64, kx: f64, ky: f64) -> Complex64 {
    let kz2 = k0 * k0 - kx * kx - ky * ky;
    if kz2 >= 0.0 {
        Complex64::new(kz2.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-kz2).sqrt())
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plan_pair(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut p = planner().lock().expect("planner poisoned");
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        })
        .clone()
}

/// Reusable 1D/2D transverse transform for one plane shape.
pub struct TransformPlan {
    shape: PlaneShape,
    x: PlanPair,
    y: Option<PlanPair>,
    column: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan").field("shape", &self.shape).finish()
    }
}

impl Clone for TransformPlan {
    fn clone(&self) -> Self {
        Self::new(self.shape)
    }
}

impl TransformPlan {
    pub fn new(shape: PlaneShape) -> Self {
        let x = plan_pair(shape.nx);
        let y = (shape.ny > 1).then(|| plan_pair(shape.ny));
        let mut scratch_len = x.0.get_inplace_scratch_len().max(x.1.get_inplace_scratch_len());
        if let Some(y) = &y {
            scratch_len = scratch_len
                .max(y.0.get_inplace_scratch_len())
                .max(y.1.get_inplace_scratch_len());
        }
        Self {
            shape,
            x,
            y,
            column: vec![Complex64::default(); if shape.ny > 1 { shape.nx } else { 0 }],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn shape(&self) -> PlaneShape {
        self.shape
    }

    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.shape.len(), "plane length does not match plan");
        let (nx, ny) = (self.shape.nx, self.shape.ny);
        let pick = |p: &PlanPair| if inverse { p.1.clone() } else { p.0.clone() };
        let fx = pick(&self.x);
        match &self.y {
            None => fx.process_with_scratch(data, &mut self.scratch),
            Some(yp) => {
                let fy = pick(yp);
                // rows are contiguous along y
                fy.process_with_scratch(data, &mut self.scratch);
                for iy in 0..ny {
                    for ix in 0..nx {
                        self.column[ix] = data[ix * ny + iy];
                    }
                    fx.process_with_scratch(&mut self.column, &mut self.scratch);
                    for ix in 0..nx {
                        data[ix * ny + iy] = self.column[ix];
                    }
                }
            }
        }
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Inverse transform in place, including the `1/N` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
        let scale = 1.0 / self.shape.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Angular spectrum of a monochromatic field on one transverse plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPlane {
    pub values: Vec<Complex64>,
    pub shape: PlaneShape,
    /// Transverse sample pitch `[dx, dy]` (dy unused for line planes).
    pub pitch: [f64; 2],
    /// Physical coordinate of sample `(0, 0)`.
    pub origin: [f64; 2],
    pub kx_axis: Vec<f64>,
    pub ky_axis: Vec<f64>,
    pub omega: f64,
    pub z: f64,
    pub c0: f64,
    /// Physical (unpadded) region of the sample grid.
    pub window: Window2,
}

impl SpectrumPlane {
    pub fn k0(&self) -> f64 {
        self.omega / self.c0
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.shape.nx)
            .map(|i| self.origin[0] + i as f64 * self.pitch[0])
            .collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        if self.shape.is_line() {
            return Vec::new();
        }
        (0..self.shape.ny)
            .map(|i| self.origin[1] + i as f64 * self.pitch[1])
            .collect()
    }

    /// Axial wavenumber for every bin, in storage order.
    pub fn kz(&self) -> Vec<Complex64> {
        let k0 = self.k0();
        let mut out = Vec::with_capacity(self.shape.len());
        for &kx in &self.kx_axis {
            for &ky in &self.ky_axis {
                out.push(axial_wavenumber(k0, kx, ky));
            }
        }
        out
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(AsaError::NonFinite("spectrum"));
        }
        Ok(())
    }
}

/// Transform a pressure plane to its angular spectrum.
pub fn forward_spectrum(
    plane: &[Complex64],
    shape: PlaneShape,
    pitch: [f64; 2],
    origin: [f64; 2],
    omega: f64,
    z: f64,
    c0: f64,
) -> Result<SpectrumPlane> {
    if shape.nx < 2 || shape.ny == 0 {
        return Err(AsaError::InvalidInput(
            "need at least 2 samples per transverse axis".into(),
        ));
    }
    if plane.len() != shape.len() {
        return Err(AsaError::Shape(format!(
            "plane has {} samples, shape implies {}",
            plane.len(),
            shape.len()
        )));
    }
    if !(pitch[0] > 0.0) || (!shape.is_line() && !(pitch[1] > 0.0)) {
        return Err(AsaError::InvalidInput("pitch must be > 0".into()));
    }
    if plane.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(AsaError::NonFinite("pressure plane"));
    }
    let mut values = plane.to_vec();
    TransformPlan::new(shape).forward(&mut values);
    Ok(SpectrumPlane {
        values,
        shape,
        pitch,
        origin,
        kx_axis: wavenumber_axis(shape.nx, pitch[0]),
        ky_axis: if shape.is_line() {
            vec![0.0]
        } else {
            wavenumber_axis(shape.ny, pitch[1])
        },
        omega,
        z,
        c0,
        window: Window2::full(shape),
    })
}

/// Pressure samples of a spectrum plane.
pub fn inverse_spectrum(s: &SpectrumPlane) -> Result<Vec<Complex64>> {
    s.ensure_finite()?;
    let mut values = s.values.clone();
    TransformPlan::new(s.shape).inverse(&mut values);
    Ok(values)
}

/// Multiply an FFT-ordered spectrum by a radial Tukey profile spanning the
/// propagating disc |k_perp| <= k0. Evanescent bins are zeroed, so backward
/// propagation cannot amplify them; `r = 0` is a sharp disc cut.
pub fn taper_spectrum(s: &mut SpectrumPlane, spec: WindowSpec) -> Result<()> {
    spec.validate()?;
    let k0 = s.k0();
    if !(k0 > 0.0) || !k0.is_finite() {
        return Err(AsaError::InvalidInput("taper needs a positive wavenumber".into()));
    }
    let ny = s.shape.ny;
    for (ix, &kx) in s.kx_axis.iter().enumerate() {
        for (iy, &ky) in s.ky_axis.iter().enumerate() {
            let kr = (kx * kx + ky * ky).sqrt();
            let w = if kr > k0 { 0.0 } else { spec.profile(0.5 + 0.5 * kr / k0) };
            s.values[ix * ny + iy] *= w;
        }
    }
    Ok(())
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    y
}

/// First-difference unwrap: each successive difference is mapped into (-pi, pi].
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let Some(&first) = phases.first() else {
        return out;
    };
    out.push(first);
    let mut prev_in = first;
    let mut prev_out = first;
    for &p in &phases[1..] {
        let next = prev_out + wrap_phase(p - prev_in);
        out.push(next);
        prev_in = p;
        prev_out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_friendly_lengths() {
        assert_eq!(fft_friendly_len(1004), 1008);
        assert_eq!(fft_friendly_len(2048), 2048);
        assert_eq!(fft_friendly_len(11), 12);
        assert_eq!(fft_friendly_len(1), 1);
    }

    #[test]
    fn axial_wavenumber_examples() {
        assert_eq!(axial_wavenumber(1000.0, 0.0, 0.0), Complex64::new(1000.0, 0.0));
        assert_eq!(axial_wavenumber(1000.0, 600.0, 800.0), Complex64::new(0.0, 0.0));
        let kz = axial_wavenumber(1000.0, 1500.0, 0.0);
        assert_eq!(kz.re, 0.0);
        assert!((kz.im - 1118.0339887).abs() < 1e-6);
    }

    #[test]
    fn tukey_limits() {
        assert_eq!(tukey(5, WindowSpec::tukey(0.0).unwrap()).unwrap(), vec![1.0; 5]);
        let hann = tukey(9, WindowSpec::tukey(1.0).unwrap()).unwrap();
        for (i, w) in hann.iter().enumerate() {
            let expect = 0.5 * (1.0 - (2.0 * PI * i as f64 / 8.0).cos());
            assert!((w - expect).abs() < 1e-15);
        }
        let w = tukey(101, WindowSpec::tukey(0.25).unwrap()).unwrap();
        assert!(w[0].abs() < 1e-15 && w[100].abs() < 1e-15);
        assert_eq!(w[50], 1.0);
        for i in 0..101 {
            assert!((w[i] - w[100 - i]).abs() < 1e-15);
        }
        assert!(WindowSpec::tukey(1.5).is_err());
        assert!(tukey(3, WindowSpec { kind: WindowKind::Tukey, r: -0.1 }).is_err());
    }

    #[test]
    fn unwrap_examples() {
        let out = unwrap_phase(&[0.0, 3.0, -3.0]);
        assert_eq!(out[..2], [0.0, 3.0]);
        assert!((out[2] - 3.283_185_3).abs() < 1e-7);
        let ramp: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        assert_eq!(unwrap_phase(&ramp), ramp);
        assert!(unwrap_phase(&[]).is_empty());
    }

    #[test]
    fn wavenumber_spacing() {
        let k = wavenumber_axis(8, 2e-4);
        let dk = 2.0 * PI / (8.0 * 2e-4);
        assert!((k[1] - dk).abs() < 1e-9);
        assert!((k[4] - 4.0 * dk).abs() < 1e-9);
        assert!((k[7] + dk).abs() < 1e-9);
    }

    #[test]
    fn constant_field_is_dc() {
        let plane = vec![Complex64::new(2.0, -1.0); 16];
        let s = forward_spectrum(&plane, PlaneShape::line(16), [1e-3, 0.0], [0.0; 2], 1.0, 0.0, 1500.0)
            .unwrap();
        assert!((s.values[0] - Complex64::new(32.0, -16.0)).norm() < 1e-12);
        assert!(s.values[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn single_bin_is_complex_exponential() {
        let n = 16;
        let shape = PlaneShape::line(n);
        let plane = vec![Complex64::default(); n];
        let mut s = forward_spectrum(&plane, shape, [1.0, 0.0], [0.0; 2], 1.0, 0.0, 1.0).unwrap();
        s.values[3] = Complex64::new(n as f64, 0.0);
        let p = inverse_spectrum(&s).unwrap();
        for (j, v) in p.iter().enumerate() {
            let expect = Complex64::from_polar(1.0, 2.0 * PI * 3.0 * j as f64 / n as f64);
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonfinite_and_tiny() {
        let shape = PlaneShape::line(4);
        let mut plane = vec![Complex64::new(1.0, 0.0); 4];
        plane[2].re = f64::NAN;
        assert!(matches!(
            forward_spectrum(&plane, shape, [1.0, 0.0], [0.0; 2], 1.0, 0.0, 1.0),
            Err(AsaError::NonFinite(_))
        ));
        assert!(forward_spectrum(&[Complex64::default()], PlaneShape::line(1), [1.0, 0.0], [0.0; 2], 1.0, 0.0, 1.0)
            .is_err());
    }

    #[test]
    fn spectral_taper_keeps_low_angles_and_kills_evanescent() {
        let plane: Vec<Complex64> = (0..32).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        // dx = 0.2 mm, 3 MHz in water: k0 sits at 60% of the Nyquist wavenumber.
        let omega = 2.0 * PI * 3e6;
        let mut s =
            forward_spectrum(&plane, PlaneShape::line(32), [2e-4, 0.0], [0.0; 2], omega, 0.0, 1500.0).unwrap();
        let k0 = s.k0();
        let before = s.values.clone();
        taper_spectrum(&mut s, WindowSpec::tukey(0.25).unwrap()).unwrap();
        for (i, &k) in s.kx_axis.iter().enumerate() {
            if k.abs() > k0 {
                assert_eq!(s.values[i].norm(), 0.0);
            } else if k.abs() <= 0.7 * k0 {
                assert_eq!(s.values[i], before[i]);
            }
        }
    }
}
