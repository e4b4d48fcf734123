//! Regenerates `data/survey_model.json`: the published survey coefficients
//! plus a percentile map over a default synthetic population.
//!
//! cargo run -p c19-core --example freeze_survey_model

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use c19_core::features::answers_to_features;
use c19_core::models::{save_model, LogisticModel, PercentileMap, RiskModel};
use c19_core::synth::{generate_population, SynthConfig};

const PERCENTILE_POPULATION: usize = 10_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LogisticModel::survey_from_coefficients();
    let config = SynthConfig {
        n_persons: PERCENTILE_POPULATION,
        outcome_model: Some(model.clone()),
        ..SynthConfig::default()
    };
    let population = generate_population(&config)?;
    let scores = population
        .persons
        .iter()
        .map(|p| model.score(&answers_to_features(&p.answers)))
        .collect::<Result<Vec<_>, _>>()?;
    let frozen = model.with_percentiles(PercentileMap::fit(scores)?);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/survey_model.json");
    save_model(&RiskModel::Logistic(frozen), BufWriter::new(File::create(&path)?))?;
    println!("wrote {}", path.display());
    Ok(())
}
