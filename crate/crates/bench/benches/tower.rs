use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pgc_core::channel::BimoduleChannel;
use pgc_core::harness::generate::random_cpb_channel;
use pgc_core::qfa::TwoBoxSpaces;
use pgc_core::spectral::{self, Tolerances};
use pgc_core::tower::{Inclusion, JonesTower, TowerOptions};
use std::sync::Arc;

fn spaces(incl: Inclusion) -> Arc<TwoBoxSpaces> {
    Arc::new(TwoBoxSpaces::new(JonesTower::build(incl, TowerOptions::default()).unwrap()).unwrap())
}

fn tower(c: &mut Criterion) {
    let mut g = c.benchmark_group("tower");
    for n in [3, 4] {
        g.bench_with_input(BenchmarkId::new("diagonal_in_full", n), &n, |b, &n| {
            b.iter(|| JonesTower::build(Inclusion::diagonal_in_full(n), TowerOptions::default()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("scalars_in_full", n), &n, |b, &n| {
            b.iter(|| JonesTower::build(Inclusion::scalars_in_full(n), TowerOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn fourier(c: &mut Criterion) {
    let s = spaces(Inclusion::scalars_in_full(3));
    let y = s.e1();
    c.bench_function("fourier/C<M3", |b| b.iter(|| s.fourier(&y).unwrap()));
    c.bench_function("multiplier/id C<M3", |b| b.iter(|| BimoduleChannel::identity(&s).unwrap()));
}

fn phase_group(c: &mut Criterion) {
    let s = spaces(Inclusion::diagonal_in_full(3));
    let ch = random_cpb_channel(&s, 7).unwrap();
    let tol = Tolerances::default();
    c.bench_function("certify_phase_group/random_cpb D3", |b| {
        b.iter(|| spectral::certify_phase_group(&ch, 7, &tol).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = tower, fourier, phase_group
}
criterion_main!(benches);
