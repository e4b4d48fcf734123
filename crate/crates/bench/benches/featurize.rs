use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use c19_bench::timelines;
use c19_core::features::{CcsrFeaturizer, CharlsonTable, SurveyFeatureGroups, SurveyFeaturizer};
use c19_core::CcsrCatalog;

fn featurize(c: &mut Criterion) {
    let (people, pd) = timelines(2_000, 5);
    let catalog = CcsrCatalog::bundled();
    let survey = SurveyFeaturizer::new(&catalog, &SurveyFeatureGroups::default());
    let ccsr = CcsrFeaturizer::new(&catalog);
    let charlson = CharlsonTable::bundled();

    let mut group = c.benchmark_group("featurize_2000_persons");
    group.throughput(Throughput::Elements(people.len() as u64));
    group.bench_function("survey", |b| b.iter(|| people.iter().map(|t| survey.extract(t, pd)).count()));
    group.bench_function("ccsr", |b| b.iter(|| people.iter().map(|t| ccsr.extract(t, pd)).count()));
    group.bench_function("charlson", |b| b.iter(|| people.iter().map(|t| charlson.extract(t, pd)).count()));
    group.finish();
}

criterion_group!(benches, featurize);
criterion_main!(benches);
