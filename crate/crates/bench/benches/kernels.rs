use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use histlab::bohm::{advance_ensemble, sample_initial, AdvanceOptions, VelocityKernel};
use histlab::histories::{decoherence_matrix, make_partition, TreeOptions};
use histlab::{HistorySpec, PartitionSpec};
use histlab_bench::two_packets;

fn evolve(c: &mut Criterion) {
    let mut g = c.benchmark_group("evolve_step");
    for n in [128, 256, 512] {
        let f = two_packets(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| f.prop.evolve(&f.psi, 0.01, 1).unwrap())
        });
    }
    g.finish();
}

fn velocity(c: &mut Criterion) {
    let mut g = c.benchmark_group("velocity_field");
    for n in [128, 256, 512] {
        let f = two_packets(n);
        let kernel = VelocityKernel::new(f.psi.grid(), &f.sys, AdvanceOptions::default().eps_node_rel).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| b.iter(|| kernel.field(&f.psi).unwrap()));
    }
    g.finish();
}

fn trajectories(c: &mut Criterion) {
    let f = two_packets(128);
    let ens = sample_initial(&f.psi, 10_000, 1).unwrap();
    let (dt, steps) = (0.005, 20);
    let mut g = c.benchmark_group("trajectories");
    g.sample_size(10);
    g.bench_function("advance_10k_20_steps", |b| {
        b.iter(|| {
            let stream = f.prop.stream(&f.psi, dt, steps).unwrap();
            advance_ensemble(&ens, stream, &f.sys, dt, &[dt * steps as f64], &AdvanceOptions::default()).unwrap()
        })
    });
    g.finish();
}

fn decoherence(c: &mut Criterion) {
    let f = two_packets(128);
    let part = make_partition(f.psi.grid(), &PartitionSpec::SquareTiling { side: 2.0, origin: None }).unwrap();
    let hist = HistorySpec::repeated(vec![0.1, 0.2, 0.3], part).unwrap();
    let mut g = c.benchmark_group("decoherence");
    g.sample_size(10);
    g.bench_function("three_times_side_2", |b| {
        b.iter(|| decoherence_matrix(&f.psi, &f.prop, &hist, &TreeOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, evolve, velocity, trajectories, decoherence);
criterion_main!(benches);
