use criterion::{criterion_group, criterion_main, Criterion};

use c19_bench::binary_dataset;
use c19_core::models::{fit_logistic, train_boosted_trees, LogisticConfig};
use c19_core::TrainConfig;

fn boosting(c: &mut Criterion) {
    let data = binary_dataset(20_000, 60, 3);
    let config = TrainConfig {
        rounds: 20,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("boosting");
    group.sample_size(10);
    group.bench_function("20k_rows_60_features_20_rounds", |b| {
        b.iter(|| train_boosted_trees(&data, &config).unwrap())
    });
    group.finish();
}

fn logistic(c: &mut Criterion) {
    let data = binary_dataset(50_000, 38, 4);
    let mut group = c.benchmark_group("logistic");
    group.sample_size(10);
    group.bench_function("50k_rows_38_features", |b| {
        b.iter(|| fit_logistic(&data, &LogisticConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, boosting, logistic);
criterion_main!(benches);
