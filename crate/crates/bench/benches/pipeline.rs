use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use mhsl_bench::{Plate, LEVELS};
use mhsl_core::datagen::{make_benchmark, simulate, uniform_times, ScenarioParams};
use mhsl_core::eval::singular_spectrum;
use mhsl_core::mesh::{build_graph, estimate_lambda_max, normalized_laplacian};
use mhsl_core::nn::{ChebConvLayer, ParamStore, Tape};
use mhsl_core::sampling::{Hierarchy, HierarchyOptions};
use mhsl_core::surrogate::{batch_loss, predict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn data(c: &mut Criterion) {
    let (mesh, _) = make_benchmark(1, 1).unwrap();
    let times = uniform_times(51);
    let mu = ScenarioParams::new(20.0, 0.3, 400.0).unwrap();
    c.bench_function("simulate/plate600x51", |b| b.iter(|| simulate(&mesh, mu, black_box(&times)).unwrap()));
    c.bench_function("lambda_max/plate600", |b| {
        let lap = normalized_laplacian(&build_graph(&mesh));
        b.iter(|| estimate_lambda_max(black_box(&lap)).unwrap())
    });
    c.bench_function("hierarchy/plate600", |b| {
        b.iter(|| Hierarchy::build(&mesh, &LEVELS, HierarchyOptions::default()).unwrap())
    });
}

fn cheb(c: &mut Criterion) {
    let plate = Plate::new();
    let mut group = c.benchmark_group("cheb_conv_fwd_bwd");
    for level in 0..=LEVELS.len() {
        let lap = Arc::clone(&plate.hierarchy.level(level).unwrap().scaled_laplacian);
        let n = lap.rows();
        let layer = ChebConvLayer::new("c", 3, 6, 12, true, lap).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        layer.init(&mut store, &mut rng).unwrap();
        let x: Vec<f64> = (0..32 * n * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = vec![0.0; 32 * n * 12];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.constant(32 * n, 6, x.clone()).unwrap();
                let y = layer.forward(&mut t, &store, xv).unwrap();
                let l = t.mse(y, &target).unwrap();
                t.backward(l, &store).unwrap()
            })
        });
    }
    group.finish();
}

fn surrogate(c: &mut Criterion) {
    let plate = Plate::new();
    let mut group = c.benchmark_group("train_batch");
    group.sample_size(20);
    for level in (1..=LEVELS.len()).rev() {
        let (model, store) = plate.chain(level);
        let set = plate.training_set(level);
        let u: Vec<f64> = (0..32).flat_map(|i| set.input(i).to_vec()).collect();
        let x: Vec<f64> = (0..32).flat_map(|i| set.state(i).to_vec()).collect();
        group.bench_function(BenchmarkId::from_parameter(level), |b| {
            b.iter(|| {
                let mut t = Tape::new();
                let (l, _, _) = batch_loss(&mut t, &model, &store, &u, &x, 1.0, 1.0).unwrap();
                t.backward(l, &store).unwrap()
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("predict_trajectory");
    let times = uniform_times(51);
    for level in (1..=LEVELS.len()).rev() {
        let (model, store) = plate.chain(level);
        group.bench_function(BenchmarkId::from_parameter(level), |b| {
            b.iter(|| predict(&model, &store, &plate.norm, black_box(&[20.0, 0.1, 400.0]), &times).unwrap())
        });
    }
    group.finish();

    let snapshots: Vec<f64> = plate.data.states(0).data().to_vec();
    c.bench_function("singular_spectrum/51x1800", |b| {
        b.iter_batched(|| snapshots.clone(), |s| singular_spectrum(&s, 1800).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group!(benches, data, cheb, surrogate);
criterion_main!(benches);
