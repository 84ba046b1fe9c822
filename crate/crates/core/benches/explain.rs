use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maskx::explain::{objective_and_grad, ExplainerConfig, Method, NoiseModel, Representation};
use maskx::model::{generate_dataset, ConvNetShape, TinyConvNet};
use maskx::{parallel, Rng};

fn objective(c: &mut Criterion) {
    let net = TinyConvNet::new(ConvNetShape::toy(), &mut Rng::new(1));
    let x = generate_dataset(&Rng::new(2), 1).remove(0).image;
    let mut group = c.benchmark_group("objective_and_grad");
    group.sample_size(10);
    for method in [Method::Shearletx, Method::Waveletx, Method::Pixel] {
        let cfg = ExplainerConfig::defaults(method);
        let repr = Representation::for_config(&cfg, x.height(), x.width()).unwrap();
        let rep = repr.as_rep();
        let coeffs = rep.analyze(&x).unwrap();
        let noise = NoiseModel::fit(&coeffs, &rep.groups())
            .unwrap()
            .batch_for_step(0, 0, cfg.mc_samples);
        let mask = vec![0.5; rep.coeff_len()];
        let run = || objective_and_grad(rep, &net, &x, &mask, &noise, &cfg, 0).unwrap();
        group.bench_function(BenchmarkId::new("parallel", method), |b| b.iter(run));
        group.bench_function(BenchmarkId::new("sequential", method), |b| {
            b.iter(|| parallel::sequential(run))
        });
    }
    group.finish();
}

fn dataset(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_dataset");
    group.sample_size(10);
    let rng = Rng::new(3);
    group.bench_function("parallel", |b| b.iter(|| generate_dataset(&rng, 64)));
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::sequential(|| generate_dataset(&rng, 64)))
    });
    group.finish();
}

criterion_group!(benches, objective, dataset);
criterion_main!(benches);
