use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsf_mia::augment::{zoo_generate, Perturbation, ZooConfig};
use tsf_mia::data::{DataPoint, Mask, Mat};
use tsf_mia::metrics::sample_losses;
use tsf_mia::model::{train_step, ForecasterParams, TrainConfig};

fn points(cfg: &TrainConfig, n_vars: usize, count: usize) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|_| {
            let e = Mat::from_vec(
                cfg.input_len,
                cfg.embed_dim,
                (0..cfg.input_len * cfg.embed_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let y = Mat::from_vec(
                cfg.horizon,
                n_vars,
                (0..cfg.horizon * n_vars).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let bits = (0..cfg.horizon * n_vars).map(|_| rng.random_bool(0.2)).collect();
            DataPoint::original(e, y, Mask::from_bits(cfg.horizon, n_vars, bits).unwrap())
        })
        .collect()
}

// `None` is the default rayon pool; with the `parallel` feature off both
// variants run sequentially.
fn pools() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("sequential", Some(single)), ("parallel", None)]
}

fn in_pool<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn bench(c: &mut Criterion) {
    let cfg = TrainConfig::default();
    let n_vars = 16;
    let params = ForecasterParams::init(cfg.dims(n_vars).unwrap(), 1).unwrap();
    let batch = points(&cfg, n_vars, 64);
    let eval = points(&cfg, n_vars, 512);
    let zoo = ZooConfig { steps: 2, ..ZooConfig::default() };

    let mut g = c.benchmark_group("throughput");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("train_step_64", name), |b| {
            let refs: Vec<&DataPoint> = batch.iter().collect();
            b.iter(|| {
                let mut p = params.clone();
                in_pool(&pool, || train_step(&refs, &mut p, &cfg).unwrap())
            })
        });
        g.bench_function(BenchmarkId::new("sample_losses_512", name), |b| {
            b.iter(|| in_pool(&pool, || sample_losses(&eval, &params).unwrap()))
        });
        g.bench_function(BenchmarkId::new("zoo_generate_64", name), |b| {
            b.iter(|| in_pool(&pool, || zoo_generate(&batch, 0.5, &params, &zoo, Perturbation::Gaussian, 1, 3).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
