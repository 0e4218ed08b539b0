use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use facecsr::features::shape_features;
use facecsr::geometry::align_mean_shape;
use facecsr::regression::{apply_cascade, train_cascade, train_weak};
use facecsr_bench::{desk_features, shape_samples};

fn regression(c: &mut Criterion) {
    let cfg = desk_features();
    let samples = shape_samples(120, 2);
    let mean = &samples[0].shape;

    // One stage worth of data: features at the mean shape, residuals to the truth.
    let (features, targets): (Vec<_>, Vec<_>) = samples
        .iter()
        .map(|s| {
            let start = align_mean_shape(mean, &s.init_box).unwrap();
            let f = shape_features(&s.image, &start, &cfg).unwrap();
            (f, start.residual_to(&s.shape).unwrap())
        })
        .unzip();

    let mut g = c.benchmark_group("train_weak");
    g.sample_size(10);
    for n in [60, 120] {
        g.bench_function(format!("n{n}_d{}", features[0].len()), |b| {
            b.iter_batched(
                || (features[..n].to_vec(), targets[..n].to_vec()),
                |(x, y)| train_weak(&x, &y, black_box(1.0)).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();

    let model = train_cascade(&samples, 4, None, &cfg).unwrap();
    let probe = &samples[0];
    c.bench_function("apply_cascade_4_stages", |b| {
        b.iter(|| apply_cascade(&model, &probe.image, black_box(&probe.init_box)).unwrap())
    });
}

criterion_group!(benches, regression);
criterion_main!(benches);
