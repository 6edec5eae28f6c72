use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use eulerci::laminate::decompose_vr;
use eulerci::rigidity::hull_strictness_experiment;
use eulerci::spectral::{forward, inverse, Grid};
use eulerci::staircase::{catalog_flow, init_subsolution, stage, EnergyProfile, StageConfig};
use eulerci::wave::{laminate_field, LaminateFieldOptions, Sampling};
use eulerci::{hull_gap, lift_to_k, wave_cone_witness, SlicePoint, StateVector};

fn pointwise(c: &mut Criterion) {
    let v = [0.6, -0.8, 0.0];
    let w3 = lift_to_k(&v, 1.0).unwrap().scaled(0.7);
    let w2 = StateVector::from_coords(2, vec![0.3, 0.4, 0.1, -0.2]).unwrap();
    c.bench_function("hull_gap d=3", |b| b.iter(|| hull_gap(black_box(&w3), 1.0)));
    c.bench_function("wave_cone_witness d=2", |b| b.iter(|| wave_cone_witness(black_box(&w2)).unwrap()));
    c.bench_function("decompose_vr", |b| b.iter(|| decompose_vr(black_box(SlicePoint::new(0.2, -0.1, 0.05)), 1.0).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let grid = Grid::new(2, 128);
    let data: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    c.bench_function("fft round trip 128^2", |b| b.iter(|| inverse(grid, forward(grid, black_box(&data)))));
}

fn fields(c: &mut Criterion) {
    let mut g = c.benchmark_group("fields");
    g.sample_size(10);
    let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
    let opts = LaminateFieldOptions { n: 64, sampling: Sampling { random: 20_000, lattice: 64, seed: 1 }, ..Default::default() };
    g.bench_function("centre laminate field 64^2", |b| b.iter(|| laminate_field(&lam, 0.1, lam.root(), &opts).unwrap()));

    let flow = catalog_flow("zero", &[("d".into(), 2.0)]).unwrap();
    let it = init_subsolution(&flow, &EnergyProfile::Const(1.0), 64, 1e-3, 1).unwrap();
    let cfg = StageConfig { level: 0.9, ..Default::default() };
    g.bench_function("staircase stage 64^2", |b| b.iter(|| stage(&it, &cfg).unwrap()));

    g.bench_function("hull experiment 21^3", |b| b.iter(|| hull_strictness_experiment(1.0, 21, 200, 0).unwrap()));
    g.finish();
}

criterion_group!(benches, pointwise, spectral, fields);
criterion_main!(benches);
