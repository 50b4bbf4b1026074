use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use torus_elliptic::evolution::semigroup_apply;
use torus_elliptic::operators::{two_plus_cos, OperatorSpec};
use torus_elliptic::resolvent::estimates::TestDictionary;
use torus_elliptic::resolvent::galerkin_resolvent;
use torus_elliptic::resolvent::localization::{build_partition, left_inverse};
use torus_elliptic::spaces::holder_seminorm;
use torus_elliptic::trig::resolving_grid;
use torus_elliptic::{TrigPoly, C64};

fn variable() -> OperatorSpec {
    OperatorSpec::principal(1, two_plus_cos(), "(2+cos x) D^2").unwrap()
}

fn galerkin(c: &mut Criterion) {
    let a = variable();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("galerkin_resolvent");
    for k in [32usize, 64, 128] {
        let f = TrigPoly::random(&mut rng, k, 1, 1, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| galerkin_resolvent(&a, C64::new(1e3, 0.0), k, black_box(&f)).unwrap())
        });
    }
    g.finish();
}

fn localization(c: &mut Criterion) {
    let a = variable();
    let part = build_partition(0.2).unwrap();
    let f = TrigPoly::mode(1);
    c.bench_function("left_inverse_eps0.2_k64", |b| {
        b.iter(|| left_inverse(&part, &a, C64::new(1e4, 0.0), 64, 0.5, black_box(&f)).unwrap())
    });
}

fn semigroup(c: &mut Criterion) {
    let a = variable();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u0 = TrigPoly::random(&mut rng, 16, 1, 1, 1.0);
    c.bench_function("semigroup_apply_k16", |b| b.iter(|| semigroup_apply(&a, 0.1, black_box(&u0), 16).unwrap()));
}

fn holder(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = TrigPoly::random(&mut rng, 32, 1, 1, 1.0);
    c.bench_function("holder_seminorm_grid", |b| b.iter(|| holder_seminorm(black_box(&f), 0.5, resolving_grid(32))));
}

fn dictionary(c: &mut Criterion) {
    c.bench_function("dictionary_build_k64", |b| b.iter(|| TestDictionary::new(black_box(64), 1, 0)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = galerkin, localization, semigroup, holder, dictionary
}
criterion_main!(benches);
