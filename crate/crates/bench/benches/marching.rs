use asa_bench::workload;
use asa_core::pam::reconstruct_pam;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn reconstruction(c: &mut Criterion) {
    let mut group = c.benchmark_group("pam_reconstruction");
    group.sample_size(10);
    for aperture in [50e-3, 75e-3, 100e-3] {
        let w = workload(aperture).expect("workload");
        let label = format!("{:.0}mm", aperture * 1e3);
        group.bench_with_input(BenchmarkId::new("uncorrected", &label), &w, |b, w| {
            b.iter(|| reconstruct_pam(&w.spectrum, Some(&w.medium), &w.uncorrected).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("corrected", &label), &w, |b, w| {
            b.iter(|| reconstruct_pam(&w.spectrum, Some(&w.medium), &w.corrected).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, reconstruction);
criterion_main!(benches);
