//! The shipped survey model must carry the published coefficients verbatim.

use c19_core::features::{answers_to_features, survey_schema};
use c19_core::models::{load_model, save_model, LogisticModel, PercentileMap, RiskModel};
use c19_core::synth::{generate_population, SynthConfig};

const COEFFICIENTS: &str = include_str!("../data/survey_coefficients.csv");
const MODEL_JSON: &str = include_str!("../data/survey_model.json");

fn published() -> Vec<(String, String)> {
    COEFFICIENTS
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

/// Formats `value` with as many decimals as the published string has.
fn as_published(value: f64, published: &str) -> String {
    let decimals = published.split_once('.').map_or(0, |(_, d)| d.len());
    format!("{value:.decimals$}")
}

#[test]
fn coefficients_match_published_table() {
    let model = LogisticModel::frozen_survey();
    let table = published();
    assert_eq!(table.len(), 39);
    assert_eq!(table[0].0, "intercept");
    assert_eq!(as_published(model.intercept, &table[0].1), table[0].1);
    assert_eq!(model.intercept, table[0].1.parse::<f64>().unwrap());

    assert_eq!(model.features, survey_schema().names);
    for ((name, text), (feature, &value)) in table[1..].iter().zip(model.features.iter().zip(&model.coefficients)) {
        assert_eq!(name, feature);
        assert_eq!(&as_published(value, text), text, "{name}");
        assert_eq!(value, text.parse::<f64>().unwrap(), "{name}");
    }
}

#[test]
fn artifact_bytes_are_canonical() {
    let model = load_model(MODEL_JSON.as_bytes()).unwrap();
    let mut out = Vec::new();
    save_model(&model, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), MODEL_JSON);
}

#[test]
fn percentile_map_is_reproducible() {
    let frozen = LogisticModel::frozen_survey();
    let base = LogisticModel::survey_from_coefficients();
    let population = generate_population(&SynthConfig {
        n_persons: 10_000,
        outcome_model: Some(base.clone()),
        ..SynthConfig::default()
    })
    .unwrap();
    let scores: Vec<f64> = population
        .persons
        .iter()
        .map(|p| base.score(&answers_to_features(&p.answers)).unwrap())
        .collect();
    let rebuilt = base.with_percentiles(PercentileMap::fit(scores).unwrap());
    assert_eq!(RiskModel::from(rebuilt), RiskModel::from(frozen));
}
