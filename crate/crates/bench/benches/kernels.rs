//! Hot paths of one outer iteration: GP posterior construction and
//! prediction, reward conditioning, truncated-normal draws, MLP passes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hotgp::gaussian::{gaussian_condition, truncated_normal_sample};
use hotgp::model::{GpHyper, LmcPosterior};
use hotgp::nn::{Activation, Mlp};
use hotgp::strategy::hotgp_given_reward;
use hotgp::{JointPrediction, Matrix, MvNormal, Rng};

fn random_spd(d: usize, rng: &mut Rng) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| rng.normal());
    let mut s = a.matmul_t(&a);
    for i in 0..d {
        s.set(i, i, s.get(i, i) + 0.5);
    }
    s
}

fn conditioning(c: &mut Criterion) {
    let mut rng = Rng::seed_from(1);
    let joint = MvNormal::new(rng.normals(5), random_spd(5, &mut rng)).unwrap();
    c.bench_function("gaussian_condition d=5 on reward", |b| {
        b.iter(|| gaussian_condition(black_box(&joint), &[4], &[0.7]).unwrap())
    });
    let pred = JointPrediction::new(joint.mean().to_vec(), joint.cov().clone()).unwrap();
    c.bench_function("hot_gp step given reward", |b| b.iter(|| hotgp_given_reward(black_box(&pred), 0.7).unwrap()));
    c.bench_function("truncated_normal_sample q=0.5", |b| {
        b.iter(|| truncated_normal_sample(black_box(0.3), 1.7, 0.5, &mut rng))
    });
}

fn gp(c: &mut Criterion) {
    let mut group = c.benchmark_group("lmc_gp");
    group.sample_size(20);
    let (input, outputs) = (6, 3);
    for n in [100usize, 300] {
        let mut rng = Rng::seed_from(n as u64);
        let x = Matrix::from_fn(n, input, |_, _| rng.normal());
        let r = Matrix::from_fn(n, outputs, |_, _| rng.normal());
        let hyper = GpHyper::initial(input, outputs, 1e-6);
        group.bench_with_input(BenchmarkId::new("posterior", n), &n, |b, _| {
            b.iter(|| LmcPosterior::new(x.clone(), r.clone(), hyper.clone()).unwrap())
        });
        let post = LmcPosterior::new(x.clone(), r.clone(), hyper.clone()).unwrap();
        let q = rng.normals(input);
        group.bench_with_input(BenchmarkId::new("predict", n), &n, |b, _| b.iter(|| post.predict(black_box(&q))));
        group.bench_with_input(BenchmarkId::new("lml_gradient", n), &n, |b, _| b.iter(|| post.gradient()));
    }
    group.finish();
}

fn mlp(c: &mut Criterion) {
    let mut rng = Rng::seed_from(3);
    let net = Mlp::with_hidden(8, 256, 2, 4, Activation::Silu, &mut rng).unwrap();
    let x = Matrix::from_fn(256, 8, |_, _| rng.normal());
    c.bench_function("mlp 8-256-256-4 forward batch 256", |b| b.iter(|| net.forward_batch(black_box(&x)).unwrap()));
    let up = Matrix::from_fn(256, 4, |_, _| rng.normal());
    let mut grads = vec![0.0; net.n_params()];
    c.bench_function("mlp 8-256-256-4 forward+backward batch 256", |b| {
        b.iter(|| {
            let (_, cache) = net.forward_cached(&x).unwrap();
            net.backward_batch(&cache, black_box(&up), &mut grads).unwrap()
        })
    });
}

criterion_group!(benches, conditioning, gp, mlp);
criterion_main!(benches);
