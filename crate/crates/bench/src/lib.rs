//! Seeded fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use c19_core::models::Dataset;
use c19_core::synth::{generate_population, SynthConfig};
use c19_core::{FeatureSchema, FeatureVector, PersonTimeline};

/// Labels and scores with about 5% positives and a weak signal.
/// Scores are rounded to three decimals so ties are common.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<bool>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let y = rng.gen_bool(0.05);
            let s: f64 = rng.gen::<f64>() + if y { 0.3 } else { 0.0 };
            (y, (s * 1000.0).round() / 1000.0)
        })
        .unzip()
}

/// Binary design matrix, `features` columns, labels from a sparse logistic rule.
pub fn binary_dataset(rows: usize, features: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..features).map(|j| format!("f{j}")).collect();
    let schema = FeatureSchema::new("bench", names).expect("distinct names");
    let mut data = Dataset::new(schema.clone());
    for _ in 0..rows {
        let values: Vec<f64> = (0..features).map(|_| f64::from(u8::from(rng.gen_bool(0.1)))).collect();
        let z = -2.5 + values.iter().take(8).enumerate().map(|(j, v)| v * (j as f64 * 0.25)).sum::<f64>();
        let y = rng.gen_bool(1.0 / (1.0 + (-z).exp()));
        let vector = FeatureVector::new(schema.clone(), values).expect("width matches");
        data.push(&vector, y).expect("schema matches");
    }
    data
}

/// Timelines of a default synthetic population, plus its prediction date.
pub fn timelines(persons: usize, seed: u64) -> (Vec<PersonTimeline>, chrono::NaiveDate) {
    let config = SynthConfig {
        n_persons: persons,
        seed,
        ..SynthConfig::default()
    };
    let population = generate_population(&config).expect("default config is valid");
    let pd = population.prediction_date;
    let timelines = population
        .persons
        .into_iter()
        .map(|p| PersonTimeline::new(p.demographics, p.eligibility, p.claims))
        .collect();
    (timelines, pd)
}
