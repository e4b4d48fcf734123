//! Command-line pipeline and scoring service for the respiratory vulnerability index.

pub mod config;
pub mod error;
pub mod manifest;
pub mod service;
pub mod stages;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use c19_core::models::load_model;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::service::ScoringService;
use crate::stages::{FeatureSet, ModelKind, ScoreSource};

#[derive(Debug, Parser)]
#[command(name = "c19", version, about = "Claims-based respiratory vulnerability index")]
pub struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic claims, eligibility, demographics and truth files.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of persons to generate.
        #[arg(long)]
        persons: Option<usize>,
    },
    /// Label prediction instances, split by person and resample the training set.
    Cohort {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Keep the whole training union instead of resampling it to the age and prevalence targets.
        #[arg(long)]
        no_sampling: bool,
    },
    /// Write survey, CCSR-indicator and Charlson feature files for both splits.
    Featurize {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Feature sets to write (default: all).
        #[arg(long, value_enum, value_delimiter = ',')]
        features: Vec<FeatureSet>,
    },
    /// Fit a model on one training feature file.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "ccsr")]
        features: FeatureSet,
        /// Model family (default: boosted for ccsr, logistic otherwise).
        #[arg(long, value_enum)]
        kind: Option<ModelKind>,
        /// Suffix for the model file name, e.g. `model_<tag>.json`.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Score the test feature file and write AUC, SLA and lift reports.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "ccsr")]
        features: FeatureSet,
        /// Model file (default: the train stage's output in --out).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use a raw feature column as the score instead of a model.
        #[arg(long, conflicts_with = "model")]
        score_column: Option<String>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Serve `/v1/score` and `/v1/health` over HTTP.
    Serve {
        /// Survey model with a percentile map (default: the shipped model).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Bind address.
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Origin allowed to call the service from a browser; repeatable.
        #[arg(long)]
        allow_origin: Vec<String>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory for artifacts and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed-date cohort prediction date (YYYY-MM-DD).
    #[arg(long)]
    pub prediction_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub eligibility: Option<PathBuf>,
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// Largest tolerated fraction of rejected rows per input file.
    #[arg(long)]
    pub bad_row_threshold: Option<f64>,
}

fn apply_common(config: &mut RunConfig, common: CommonArgs) {
    if common.out.is_some() {
        config.out = common.out;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(pd) = common.prediction_date {
        config.prediction_date = pd;
    }
}

fn apply_inputs(config: &mut RunConfig, inputs: InputArgs) {
    let InputArgs {
        catalog,
        claims,
        eligibility,
        demographics,
        bad_row_threshold,
    } = inputs;
    for (slot, flag) in [
        (&mut config.catalog, catalog),
        (&mut config.claims, claims),
        (&mut config.eligibility, eligibility),
        (&mut config.demographics, demographics),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if let Some(t) = bad_row_threshold {
        config.bad_row_threshold = t;
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth { common, persons } => {
            apply_common(&mut config, common);
            if let Some(n) = persons {
                config.synth.n_persons = n;
            }
            config.validate()?;
            stages::synth(&config)
        }
        Command::Cohort {
            common,
            inputs,
            no_sampling,
        } => {
            apply_common(&mut config, common);
            apply_inputs(&mut config, inputs);
            if no_sampling {
                config.sampling = None;
            }
            config.validate()?;
            stages::cohort(&config)
        }
        Command::Featurize {
            common,
            inputs,
            features,
        } => {
            apply_common(&mut config, common);
            apply_inputs(&mut config, inputs);
            config.validate()?;
            let sets = if features.is_empty() { FeatureSet::ALL.to_vec() } else { features };
            stages::featurize(&config, &sets)
        }
        Command::Train {
            common,
            features,
            kind,
            tag,
        } => {
            apply_common(&mut config, common);
            config.validate()?;
            stages::train(&config, features, kind, tag.as_deref()).map(drop)
        }
        Command::Evaluate {
            common,
            features,
            model,
            score_column,
            tag,
        } => {
            apply_common(&mut config, common);
            if model.is_some() {
                config.model = model;
            }
            config.validate()?;
            let source = match &score_column {
                Some(c) => ScoreSource::Column(c),
                None => ScoreSource::Model,
            };
            stages::evaluate(&config, features, source, tag.as_deref()).map(drop)
        }
        Command::Serve {
            model,
            port,
            host,
            allow_origin,
        } => {
            if model.is_some() {
                config.model = model;
            }
            let service = match &config.model {
                Some(_) => {
                    let path = config.input("model")?;
                    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                    ScoringService::new(load_model(file).map_err(|e| CliError::data(path.display(), e))?)?
                }
                None => ScoringService::frozen(),
            };
            log::info!("serving model version {}", service.model_version());
            let app = service::router(Arc::new(service), &allow_origin)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(format!("runtime: {e}")))?;
            runtime.block_on(service::serve(app, SocketAddr::new(host, port)))
        }
    }
}
