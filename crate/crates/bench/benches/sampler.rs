use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use spdmix::rng;
use spdmix::sampler::{initialize, update_atoms, update_labels, AtomDof, ClusterStats, Prepared};
use spdmix::synth::MixtureScenario;
use spdmix::variogram::{empirical_variogram, EmpiricalOptions};
use spdmix::{Dataset, FitConfig, SweepOrder};

fn desk_data() -> Dataset {
    Dataset::new(MixtureScenario::desk().generate(0).unwrap().fields).unwrap()
}

fn sampler(c: &mut Criterion) {
    let data = desk_data();
    let prep = Prepared::new(&data).unwrap();
    let config = FitConfig::default();
    let mut r = rng::seeded(1);
    let mut state = initialize(&data, &prep, &config, &mut r).unwrap();

    c.bench_function("label sweep, 20x20, 3+3 subjects, K=10", |b| {
        b.iter(|| update_labels(&mut state, &prep, data.lattice(), SweepOrder::Checkerboard, false, &mut r).unwrap())
    });
    let stats = ClusterStats::compute(&prep, &state.labels);
    c.bench_function("cluster statistics", |b| b.iter(|| black_box(ClusterStats::compute(&prep, &state.labels))));
    c.bench_function("atom update, K=10", |b| {
        b.iter(|| update_atoms(&mut state, &prep, &stats, AtomDof::default(), &mut r).unwrap())
    });
}

fn variogram(c: &mut Criterion) {
    let data = desk_data();
    let fields = data.fields();
    let opts = EmpiricalOptions::new(8.0);
    c.bench_function("empirical variogram, 20x20, d <= 8", |b| {
        b.iter(|| black_box(empirical_variogram(&fields[0], &fields[3], &opts).unwrap()))
    });
}

criterion_group!(benches, sampler, variogram);
criterion_main!(benches);
