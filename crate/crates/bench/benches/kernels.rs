use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fiddle_core::ate::aipw;
use fiddle_core::dgp::{generate, DgpSpec};
use fiddle_core::fastnn::{FastNnConfig, FastNnModel, Features, Regularization};
use fiddle_core::numerics::{gram_topk, Matrix, SeededRng};

fn eigen(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let x = Matrix::from_fn(50, 1000, |_, _| rng.normal(0.0, 1.0).unwrap());
    c.bench_function("gram_topk 50x1000 top10", |b| b.iter(|| gram_topk(black_box(&x), 10).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut rng = SeededRng::new(2);
    let cfg = FastNnConfig {
        width: 128,
        ..FastNnConfig::default()
    };
    let model = FastNnModel::init(10, Some(500), &cfg, 20.0, &mut rng).unwrap();
    let dense = Matrix::from_fn(64, 10, |_, _| rng.normal(0.0, 1.0).unwrap());
    let sparse = Matrix::from_fn(64, 500, |_, _| rng.normal(0.0, 1.0).unwrap());
    let features = Features::factor_augmented(dense, sparse).unwrap();
    let targets: Vec<f64> = (0..64).map(|i| i as f64 / 8.0).collect();
    let reg = Regularization {
        lambda: 0.004,
        tau: 0.005,
        weight_decay: 0.0,
    };
    c.bench_function("predict batch 64, p=500, N=128", |b| {
        b.iter(|| model.predict(black_box(&features)).unwrap())
    });
    c.bench_function("grad batch 64, p=500, N=128", |b| {
        b.iter(|| model.grad(black_box(&features), &targets, &reg).unwrap())
    });
}

fn combiner(c: &mut Criterion) {
    let d = generate(&DgpSpec::new(5000, 10, 3)).unwrap();
    c.bench_function("aipw n=5000", |b| {
        b.iter(|| aipw(black_box(&d.y), &d.treatment, &d.mu0_star, &d.mu1_star, &d.pi_star).unwrap())
    });
}

criterion_group!(benches, eigen, network, combiner);
criterion_main!(benches);
