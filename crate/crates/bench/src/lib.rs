//! Shared fixtures for the marching benchmarks.

use asa_core::pam::{rf_to_spectrum, PamConfig};
use asa_core::phantom::{analytic_source_plane, make_phantom};
use asa_core::{ArrayGeometry, MediumMap, PhantomSpec, Result, SpectrumPlane};

pub const PITCH: f64 = 2e-4;
pub const FREQUENCY: f64 = 1e6;
pub const Z_MAX: f64 = 90e-3;
pub const DZ: f64 = 50e-6;

/// A reconstruction workload: padded array spectrum, slab medium and both configs.
pub struct Workload {
    pub spectrum: SpectrumPlane,
    pub medium: MediumMap,
    pub uncorrected: PamConfig,
    pub corrected: PamConfig,
}

/// Line source at mid-depth seen through a seeded four-slab phantom.
pub fn workload(aperture: f64) -> Result<Workload> {
    let geometry = ArrayGeometry::with_aperture(aperture, PITCH, 0.0)?;
    let nz = (Z_MAX / PITCH).round() as usize + 1;
    let nx = geometry.len() + 2 * (geometry.len() / 4) + 1;
    let spec = PhantomSpec::random_slabs(1500.0, 0.05, 3e-3, 18e-3, 4, 7);
    let medium = make_phantom(&spec, &[nz, nx], &[PITCH, PITCH])?;
    let rf = analytic_source_plane([0.0, 0.5 * Z_MAX], FREQUENCY, medium.c0(), &geometry, 80e-6, 40e-9)?;
    let uncorrected = PamConfig::new(vec![FREQUENCY], false, DZ, Z_MAX);
    let corrected = PamConfig { corrected: true, ..uncorrected.clone() };
    let spectrum = rf_to_spectrum(&rf, FREQUENCY, medium.c0(), uncorrected.taper, uncorrected.march.pad_factor)?;
    Ok(Workload { spectrum, medium, uncorrected, corrected })
}
