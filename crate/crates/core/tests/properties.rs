use std::f64::consts::PI;

use asa_core::focusing::geometric_delays;
use asa_core::gridio::{decode_grid, encode_grid, grid_to_csv, parse_csv};
use asa_core::medium::{lambda_value, pad_medium};
use asa_core::pam::{localize_peaks, reconstruct_pam};
use asa_core::phantom::{line_source_field, make_phantom};
use asa_core::propagator::{pad_spectrum, propagate_homogeneous};
use asa_core::spectral::{axial_wavenumber, forward_spectrum, unwrap_phase, wrap_phase};
use asa_core::{
    ArrayGeometry, Complex64, FocusTarget, Grid, GridData, MediumMap, PamConfig, PhantomSpec, PlaneShape, SpectrumPlane,
};
use proptest::prelude::*;

const DX: f64 = 2e-4;
const C0: f64 = 1500.0;

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len).prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn sized_plane() -> impl Strategy<Value = (PlaneShape, Vec<Complex64>)> {
    prop_oneof![
        (2usize..300).prop_map(PlaneShape::line),
        (2usize..24, 2usize..24).prop_map(|(nx, ny)| PlaneShape { nx, ny }),
    ]
    .prop_flat_map(|shape| (Just(shape), complex_vec(shape.len())))
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (prop::collection::vec(1usize..6, 1..4), 0u8..4, any::<u64>()).prop_map(|(dims, code, seed)| {
        let len: usize = dims.iter().product();
        let mut x = seed;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let data = match code {
            0 => GridData::Real32((0..len).map(|_| next() as f32).collect()),
            1 => GridData::Real64((0..len).map(|_| next()).collect()),
            2 => GridData::Complex64((0..len).map(|_| num_complex::Complex32::new(next() as f32, next() as f32)).collect()),
            _ => GridData::Complex128((0..len).map(|_| Complex64::new(next(), next())).collect()),
        };
        let n = dims.len();
        Grid::new(dims, vec![1e-4; n], vec![-1e-3; n], data).unwrap()
    })
}

fn line_source_spectrum(source: [f64; 2], center: f64) -> SpectrumPlane {
    let k0 = 2.0 * PI * 1e6 / C0;
    let g = ArrayGeometry::with_aperture(20e-3, DX, center).unwrap();
    let xs = &g.element_positions;
    let plane: Vec<Complex64> =
        xs.iter().map(|&x| line_source_field(k0, ((x - source[0]).powi(2) + source[1].powi(2)).sqrt())).collect();
    let s = forward_spectrum(&plane, PlaneShape::line(xs.len()), [DX, 0.0], [xs[0], 0.0], 2.0 * PI * 1e6, 0.0, C0)
        .unwrap();
    pad_spectrum(&s, 4).unwrap()
}

fn small_pam() -> PamConfig {
    PamConfig::new(vec![1e6], false, 2e-4, 30e-3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn binary_grids_round_trip_bitwise(g in grid_strategy()) {
        prop_assert_eq!(decode_grid(&encode_grid(&g)).unwrap(), g);
    }

    #[test]
    fn csv_grids_round_trip(rows in 1usize..6, cols in 1usize..6, vals in prop::collection::vec(-1e3f64..1e3, 36)) {
        let data: Vec<f64> = vals[..rows * cols].to_vec();
        let g = Grid::real(vec![rows, cols], vec![2e-4, 2e-4], vec![0.0, 0.0], data.clone()).unwrap();
        let back = parse_csv(&grid_to_csv(&g).unwrap()).unwrap();
        for (a, b) in back.to_real64().unwrap().iter().zip(&data) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn parseval((shape, plane) in sized_plane(), px in 1e-5f64..1e-3, py in 1e-5f64..1e-3) {
        let pitch = [px, if shape.is_line() { 0.0 } else { py }];
        let s = forward_spectrum(&plane, shape, pitch, [0.0; 2], 2.0 * PI * 1e6, 0.0, C0).unwrap();
        let cell = px * if shape.is_line() { 1.0 } else { py };
        let space: f64 = plane.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
        // Sum |P|^2 dk / (2 pi) per axis, with dk = 2 pi / (n pitch).
        let wave: f64 = s.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell / shape.len() as f64;
        prop_assert!((space - wave).abs() <= 1e-10 * space);
    }

    #[test]
    fn axial_wavenumber_dispersion(k0 in 1.0f64..1e4, ux in -2.0f64..2.0, uy in -2.0f64..2.0) {
        let (kx, ky) = (ux * k0, uy * k0);
        let kz = axial_wavenumber(k0, kx, ky);
        let lhs = kz * kz + kx * kx + ky * ky;
        prop_assert!((lhs.re - k0 * k0).abs() <= 1e-9 * k0 * k0 && lhs.im.abs() <= 1e-9 * k0 * k0);
        let z = 1e-3;
        let gain = (Complex64::i() * kz * z).exp().norm();
        if kx * kx + ky * ky < k0 * k0 {
            prop_assert!((gain - 1.0).abs() <= 1e-12);
        } else if kx * kx + ky * ky > k0 * k0 * (1.0 + 1e-6) {
            prop_assert!(gain < 1.0);
        }
    }

    #[test]
    fn unwrap_is_idempotent_and_modular(phases in prop::collection::vec(-20.0f64..20.0, 1..200)) {
        let wrapped: Vec<f64> = phases.iter().map(|&p| wrap_phase(p)).collect();
        let u = unwrap_phase(&wrapped);
        let again = unwrap_phase(&u);
        for ((a, b), w) in u.iter().zip(&again).zip(&wrapped) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(wrap_phase(a - w).abs() <= 1e-9);
        }
    }

    #[test]
    fn lambda_increases_with_speed(k0 in 1.0f64..1e4, c0 in 1000.0f64..2000.0, c in 500.0f64..3000.0, dc in 1.0f64..500.0) {
        prop_assert!(lambda_value(k0, c0, c + dc) > lambda_value(k0, c0, c));
        prop_assert_eq!(lambda_value(k0, c0, c0), 0.0);
    }

    #[test]
    fn padding_keeps_speed_extremes(nz in 2usize..8, nx in 2usize..8, extra in 0usize..6, seed in any::<u64>()) {
        let spec = PhantomSpec::random_slabs(C0, 0.05, 0.0, (nz as f64) * DX, 3, seed);
        let m = make_phantom(&spec, &[nz, nx], &[DX, DX]).unwrap();
        let padded = pad_medium(&m, &[nz, nx + extra]).unwrap();
        prop_assert_eq!(padded.min_speed(), m.min_speed());
        prop_assert_eq!(padded.max_speed(), m.max_speed());
    }

    #[test]
    fn semigroup(plane in complex_vec(96), a in 0.0f64..20e-3, b in 0.0f64..20e-3, f in 2e5f64..2e6) {
        let s = forward_spectrum(&plane, PlaneShape::line(96), [DX, 0.0], [0.0; 2], 2.0 * PI * f, 0.0, C0).unwrap();
        let two = propagate_homogeneous(&propagate_homogeneous(&s, a).unwrap(), b).unwrap();
        let one = propagate_homogeneous(&s, a + b).unwrap();
        let num: f64 = two.values.iter().zip(&one.values).map(|(x, y)| (x - y).norm_sqr()).sum();
        prop_assert!(num.sqrt() <= 1e-12 * one.norm_sqr().sqrt());
    }

    #[test]
    fn geometric_delays_are_translation_invariant(x0 in -10e-3f64..10e-3, d in 5e-3f64..80e-3, shift in -0.1f64..0.1) {
        let g = ArrayGeometry::with_aperture(30e-3, DX, 0.0).unwrap();
        let moved = ArrayGeometry::with_aperture(30e-3, DX, shift).unwrap();
        let a = geometric_delays(&FocusTarget::new(x0, d, 1.5e-3).unwrap(), &g, C0).unwrap();
        let b = geometric_delays(&FocusTarget::new(x0 + shift, d, 1.5e-3).unwrap(), &moved, C0).unwrap();
        for (p, q) in a.delays.iter().zip(&b.delays) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn intensity_scales_quadratically(x in -4e-3f64..4e-3, z in 10e-3f64..25e-3, scale in 0.1f64..10.0) {
        let s0 = line_source_spectrum([x, z], 0.0);
        let mut s1 = s0.clone();
        s1.values.iter_mut().for_each(|v| *v *= scale);
        let cfg = small_pam();
        let (a, b) = (reconstruct_pam(&s0, None, &cfg).unwrap(), reconstruct_pam(&s1, None, &cfg).unwrap());
        let (ia, ib) = (a.intensity.as_real64().unwrap(), b.intensity.as_real64().unwrap());
        let max = ia.iter().copied().fold(0.0, f64::max);
        for (p, q) in ia.iter().zip(ib) {
            prop_assert!(*p >= 0.0);
            prop_assert!((q - scale * scale * p).abs() <= 1e-12 * scale * scale * max);
        }
        prop_assert_eq!(localize_peaks(&a, 1).unwrap()[0].x, localize_peaks(&b, 1).unwrap()[0].x);
        prop_assert_eq!(localize_peaks(&a, 1).unwrap()[0].z, localize_peaks(&b, 1).unwrap()[0].z);
    }

    #[test]
    fn reconstruction_is_translation_equivariant(x in -4e-3f64..4e-3, z in 10e-3f64..25e-3, shift in -3e-3f64..3e-3) {
        let cfg = small_pam();
        let peak = |d: f64| {
            let r = reconstruct_pam(&line_source_spectrum([x + d, z], d), None, &cfg).unwrap();
            localize_peaks(&r, 1).unwrap()[0]
        };
        let (a, b) = (peak(0.0), peak(shift));
        prop_assert!(((b.x - a.x) - shift).abs() <= DX * (1.0 + 1e-9));
        prop_assert!((b.z - a.z).abs() <= DX * (1.0 + 1e-9));
    }

    #[test]
    fn uniform_medium_makes_correction_a_no_op(x in -4e-3f64..4e-3, z in 10e-3f64..25e-3) {
        let s = line_source_spectrum([x, z], 0.0);
        let dims = [151, s.shape.nx];
        let origin = vec![0.0, s.origin[0]];
        let m = MediumMap::uniform(dims.to_vec(), vec![DX, DX], origin, C0).unwrap();
        let mut cfg = small_pam();
        let plain = reconstruct_pam(&s, Some(&m), &cfg).unwrap();
        cfg.corrected = true;
        let corrected = reconstruct_pam(&s, Some(&m), &cfg).unwrap();
        let (ia, ib) = (plain.intensity.as_real64().unwrap(), corrected.intensity.as_real64().unwrap());
        let max = ia.iter().copied().fold(0.0, f64::max);
        for (p, q) in ia.iter().zip(ib) {
            prop_assert!((p - q).abs() <= 1e-10 * max);
        }
    }

    #[test]
    fn phantoms_are_reproducible(seed in any::<u64>(), count in 1usize..6) {
        let spec = PhantomSpec::random_slabs(C0, 0.05, 2e-3, 12e-3, count, seed);
        let a = make_phantom(&spec, &[80, 40], &[DX, DX]).unwrap();
        let b = make_phantom(&spec, &[80, 40], &[DX, DX]).unwrap();
        prop_assert_eq!(a.speeds(), b.speeds());
    }
}
