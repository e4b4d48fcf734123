//! The pipeline stages behind each subcommand. Every stage reads its inputs
//! from flags or from earlier artifacts in the output directory, and records
//! what it wrote in `manifest.json`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use log::{info, warn};

use c19_core::cohort::{
    build_combined_training, build_fixed_date_cohort, build_monthly_cohort, read_instances, split_by_person,
    write_instances, write_report, BandCounts,
};
use c19_core::features::{CcsrFeaturizer, CharlsonTable, FeatureMatrix, SurveyFeatureGroups, SurveyFeaturizer};
use c19_core::ingest::{
    assemble_timelines, parse_claims, parse_demographics, parse_eligibility, IngestError, Parsed, PersonTimeline,
};
use c19_core::models::{
    fit_logistic, load_model, save_model, train_boosted_trees, Dataset, PercentileMap, RiskModel,
};
use c19_core::synth::{generate_population_with, SynthFiles, CLAIMS_FILE, DEMOGRAPHICS_FILE, ELIGIBILITY_FILE, TRUTH_FILE};
use c19_core::{CcsrCatalog, EvaluationReport, PredictionInstance};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, StageRecord};

pub const FIXED_REPORT_FILE: &str = "fixed_cohort_report.csv";
pub const MONTHLY_REPORT_FILE: &str = "monthly_cohort_report.csv";
pub const TRAIN_INSTANCES_FILE: &str = "train_instances.csv";
pub const TEST_INSTANCES_FILE: &str = "test_instances.csv";

/// Rejected rows logged individually before the rest are summarized.
const LOGGED_ROW_ERRORS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum FeatureSet {
    Survey,
    Ccsr,
    Charlson,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Survey, FeatureSet::Ccsr, FeatureSet::Charlson];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Survey => "survey",
            FeatureSet::Ccsr => "ccsr",
            FeatureSet::Charlson => "charlson",
        }
    }

    pub fn file(self, split: Split) -> String {
        format!("features_{}_{}.csv", self.name(), split.name())
    }

    /// Boosting only pays off on the wide indicator set.
    pub fn default_model(self) -> ModelKind {
        match self {
            FeatureSet::Ccsr => ModelKind::Boosted,
            FeatureSet::Survey | FeatureSet::Charlson => ModelKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn instances_file(self) -> &'static str {
        match self {
            Split::Train => TRAIN_INSTANCES_FILE,
            Split::Test => TEST_INSTANCES_FILE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Logistic,
    Boosted,
}

/// `stem`, or `stem_tag` when a tag is given.
pub fn tagged(stem: &str, tag: Option<&str>) -> String {
    match tag {
        Some(t) => format!("{stem}_{t}"),
        None => stem.to_string(),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Opens an artifact an earlier stage should have written.
fn open_artifact(out: &Path, name: &str, producer: &str) -> CliResult<BufReader<File>> {
    let path = out.join(name);
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "{} not found; run `c19 {producer}` first",
            path.display()
        )));
    }
    open(&path)
}

fn flush(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn make_out_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let out = config.out_dir()?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}

fn load_catalog(config: &RunConfig, record: &mut StageRecord) -> CliResult<CcsrCatalog> {
    let path = config.input("catalog")?;
    record.input("catalog", path)?;
    CcsrCatalog::from_path(path).map_err(|e| CliError::data(path.display(), e))
}

/// Parses one input file, failing when too many rows are rejected.
fn read_rows<T>(
    config: &RunConfig,
    flag: &str,
    record: &mut StageRecord,
    parse: fn(BufReader<File>) -> Result<Parsed<T>, IngestError>,
) -> CliResult<Vec<T>> {
    let path = config.input(flag)?;
    record.input(flag, path)?;
    let parsed = parse(open(path)?).map_err(|e| CliError::data(path.display(), e))?;
    let rate = parsed.error_rate();
    if rate > config.bad_row_threshold {
        let first = parsed.errors.first().map(|e| format!("; first: {e}")).unwrap_or_default();
        return Err(CliError::Data(format!(
            "{}: {} of {} rows rejected ({:.2}%), above the {:.2}% threshold{first}",
            path.display(),
            parsed.errors.len(),
            parsed.rows(),
            100.0 * rate,
            100.0 * config.bad_row_threshold,
        )));
    }
    for e in parsed.errors.iter().take(LOGGED_ROW_ERRORS) {
        warn!("{}: skipped {e}", path.display());
    }
    if parsed.errors.len() > LOGGED_ROW_ERRORS {
        warn!("{}: {} more rows skipped", path.display(), parsed.errors.len() - LOGGED_ROW_ERRORS);
    }
    Ok(parsed.records)
}

fn load_timelines(config: &RunConfig, record: &mut StageRecord) -> CliResult<Vec<PersonTimeline>> {
    let claims = read_rows(config, "claims", record, parse_claims)?;
    let eligibility = read_rows(config, "eligibility", record, parse_eligibility)?;
    let demographics = read_rows(config, "demographics", record, parse_demographics)?;
    let assembly = assemble_timelines(claims, eligibility, demographics).map_err(|e| CliError::data("demographics", e))?;
    if !assembly.warnings.is_empty() {
        warn!("{} assembly warnings; first: {:?}", assembly.warnings.len(), assembly.warnings[0]);
    }
    info!("assembled {} person timelines", assembly.timelines.len());
    Ok(assembly.timelines)
}

pub fn synth(config: &RunConfig) -> CliResult<()> {
    let out = make_out_dir(config)?;
    let mut synth = config.synth.clone();
    synth.seed = config.seed;
    synth.prediction_date = config.prediction_date;
    synth.validate().map_err(|e| CliError::Validation(e.to_string()))?;

    let mut record = StageRecord::new(config.seed);
    let catalog = match &config.catalog {
        Some(_) => load_catalog(config, &mut record)?,
        None => CcsrCatalog::bundled(),
    };
    let population = generate_population_with(&synth, &catalog).map_err(|e| CliError::Validation(e.to_string()))?;
    let files: SynthFiles = population.write_files(&out).map_err(|e| CliError::data(out.display(), e))?;
    for name in [CLAIMS_FILE, ELIGIBILITY_FILE, DEMOGRAPHICS_FILE, TRUTH_FILE] {
        record.artifact(&out, name)?;
    }
    info!("wrote {} synthetic persons to {}", synth.n_persons, files.claims.parent().unwrap_or(&out).display());
    Manifest::record(&out, "synth", record)
}

pub fn cohort(config: &RunConfig) -> CliResult<()> {
    let mut record = StageRecord::new(config.seed);
    let catalog = load_catalog(config, &mut record)?;
    let timelines = load_timelines(config, &mut record)?;
    let out = make_out_dir(config)?;

    let pd = config.prediction_date;
    let (fixed, fixed_report) = build_fixed_date_cohort(&timelines, pd, &config.fixed_rules, &catalog, &config.proxy);
    let (start, end) = config.monthly_range();
    let (mut monthly, monthly_report) =
        build_monthly_cohort(&timelines, start, end, &config.monthly_rules, &catalog, &config.proxy);
    // a person-date already in the fixed-date cohort is not counted twice
    let fixed_keys: BTreeSet<_> = fixed.iter().map(|i| (i.person_id.as_str(), i.prediction_date)).collect();
    let before = monthly.len();
    monthly.retain(|i| !fixed_keys.contains(&(i.person_id.as_str(), i.prediction_date)));
    info!(
        "fixed-date cohort: {} instances; monthly cohort: {} instances ({} shared with fixed-date dropped)",
        fixed.len(),
        monthly.len(),
        before - monthly.len()
    );

    let (fixed_train, fixed_test) = split_by_person(fixed, config.test_fraction, config.seed);
    let (monthly_train, monthly_test) = split_by_person(monthly, config.test_fraction, config.seed);
    let train = match config.sampling {
        Some(params) => build_combined_training(fixed_train, monthly_train, params, config.seed)
            .map_err(|e| CliError::data("training sample", e))?,
        None => {
            let mut all: Vec<_> = fixed_train.into_iter().chain(monthly_train).collect();
            all.sort();
            all
        }
    };
    let mut test: Vec<_> = fixed_test.into_iter().chain(monthly_test).collect();
    test.sort();
    let counts = BandCounts::of(&train);
    info!(
        "training set: {} instances, {} positive; elder share {:.4}",
        train.len(),
        counts.pos_under + counts.pos_over,
        counts.elder_share()
    );

    for (name, report) in [(FIXED_REPORT_FILE, &fixed_report), (MONTHLY_REPORT_FILE, &monthly_report)] {
        let path = out.join(name);
        let mut w = create(&path)?;
        write_report(&mut w, report).map_err(|e| CliError::data(path.display(), e))?;
        flush(w, &path)?;
    }
    for (name, instances) in [(TRAIN_INSTANCES_FILE, &train), (TEST_INSTANCES_FILE, &test)] {
        let path = out.join(name);
        let mut w = create(&path)?;
        write_instances(&mut w, instances).map_err(|e| CliError::data(path.display(), e))?;
        flush(w, &path)?;
    }
    for name in [FIXED_REPORT_FILE, MONTHLY_REPORT_FILE, TRAIN_INSTANCES_FILE, TEST_INSTANCES_FILE] {
        record.artifact(&out, name)?;
    }
    Manifest::record(&out, "cohort", record)
}

enum Featurizer {
    Survey(SurveyFeaturizer),
    Ccsr(CcsrFeaturizer),
    Charlson(CharlsonTable),
}

impl Featurizer {
    fn matrix(&self, timelines: &HashMap<&str, &PersonTimeline>, instances: &[PredictionInstance]) -> CliResult<FeatureMatrix> {
        let schema = match self {
            Featurizer::Survey(f) => f.schema(),
            Featurizer::Ccsr(f) => f.schema(),
            Featurizer::Charlson(_) => CharlsonTable::schema(),
        };
        let mut matrix = FeatureMatrix::new(schema);
        for inst in instances {
            let t = timelines.get(inst.person_id.as_str()).ok_or_else(|| {
                CliError::Data(format!("instance for {} has no matching person in the input files", inst.person_id))
            })?;
            let v = match self {
                Featurizer::Survey(f) => f.extract(t, inst.prediction_date),
                Featurizer::Ccsr(f) => f.extract(t, inst.prediction_date),
                Featurizer::Charlson(f) => f.extract(t, inst.prediction_date),
            };
            matrix.push(inst, &v);
        }
        Ok(matrix)
    }
}

pub fn featurize(config: &RunConfig, sets: &[FeatureSet]) -> CliResult<()> {
    let mut record = StageRecord::new(config.seed);
    let catalog = load_catalog(config, &mut record)?;
    let out = config.out_dir()?.to_path_buf();
    let mut splits = Vec::new();
    for split in [Split::Train, Split::Test] {
        let reader = open_artifact(&out, split.instances_file(), "cohort")?;
        let instances = read_instances(reader).map_err(|e| CliError::data(split.instances_file(), e))?;
        record.input(split.instances_file(), &out.join(split.instances_file()))?;
        splits.push((split, instances));
    }
    let charlson = match &config.charlson_weights {
        Some(path) => {
            record.input("charlson_weights", path)?;
            CharlsonTable::from_reader(open(path)?).map_err(|e| CliError::data(path.display(), e))?
        }
        None => CharlsonTable::bundled(),
    };
    let timelines = load_timelines(config, &mut record)?;
    let by_id: HashMap<&str, &PersonTimeline> = timelines.iter().map(|t| (t.person_id.as_str(), t)).collect();

    let mut sets = sets.to_vec();
    sets.sort();
    sets.dedup();
    for set in sets {
        let featurizer = match set {
            FeatureSet::Survey => Featurizer::Survey(SurveyFeaturizer::new(&catalog, &SurveyFeatureGroups::default())),
            FeatureSet::Ccsr => Featurizer::Ccsr(CcsrFeaturizer::new(&catalog)),
            FeatureSet::Charlson => Featurizer::Charlson(charlson.clone()),
        };
        for (split, instances) in &splits {
            let matrix = featurizer.matrix(&by_id, instances)?;
            let name = set.file(*split);
            let path = out.join(&name);
            let mut w = create(&path)?;
            matrix.write_csv(&mut w).map_err(|e| CliError::data(path.display(), e))?;
            flush(w, &path)?;
            record.artifact(&out, &name)?;
            info!("{name}: {} rows x {} features", matrix.len(), matrix.schema.len());
        }
    }
    Manifest::record(&out, "featurize", record)
}

fn read_features(out: &Path, set: FeatureSet, split: Split) -> CliResult<FeatureMatrix> {
    let name = set.file(split);
    let reader = open_artifact(out, &name, "featurize")?;
    FeatureMatrix::read_csv(reader, set.name()).map_err(|e| CliError::data(name, e))
}

pub fn train(config: &RunConfig, set: FeatureSet, kind: Option<ModelKind>, tag: Option<&str>) -> CliResult<PathBuf> {
    let out = config.out_dir()?.to_path_buf();
    let matrix = read_features(&out, set, Split::Train)?;
    let data = Dataset::from_matrix(&matrix);
    let mut record = StageRecord::new(config.seed);
    record.input(&set.file(Split::Train), &out.join(set.file(Split::Train)))?;

    let kind = kind.unwrap_or(set.default_model());
    let model: RiskModel = match kind {
        ModelKind::Logistic => {
            let m = fit_logistic(&data, &config.logistic).map_err(|e| CliError::data("logistic fit", e))?;
            let scores = m.score_dataset(&data).map_err(|e| CliError::data("logistic fit", e))?;
            let map = PercentileMap::fit(scores).map_err(|e| CliError::data("percentile map", e))?;
            m.with_percentiles(map).into()
        }
        ModelKind::Boosted => {
            let mut boosting = config.boosting.clone();
            boosting.seed = config.seed;
            train_boosted_trees(&data, &boosting)
                .map_err(|e| CliError::data("boosted trees", e))?
                .into()
        }
    };
    let name = format!("{}.json", tagged("model", tag));
    let path = out.join(&name);
    let mut w = create(&path)?;
    save_model(&model, &mut w).map_err(|e| CliError::data(path.display(), e))?;
    flush(w, &path)?;
    record.artifact(&out, &name)?;
    info!("trained {} model on {} rows; wrote {}", model.kind(), data.len(), path.display());
    Manifest::record(&out, &tagged("train", tag), record)?;
    Ok(path)
}

/// Where scores come from during evaluation.
pub enum ScoreSource<'a> {
    /// `--model`, or the model the train stage wrote.
    Model,
    /// A raw feature column, e.g. the Charlson index baseline.
    Column(&'a str),
}

pub fn evaluate(config: &RunConfig, set: FeatureSet, source: ScoreSource<'_>, tag: Option<&str>) -> CliResult<EvaluationReport> {
    let out = config.out_dir()?.to_path_buf();
    let matrix = read_features(&out, set, Split::Test)?;
    let mut record = StageRecord::new(config.seed);
    record.input(&set.file(Split::Test), &out.join(set.file(Split::Test)))?;

    let scores = match source {
        ScoreSource::Column(name) => {
            let col = matrix.schema.index_of(name).ok_or_else(|| {
                CliError::Validation(format!("--score-column {name}: not a column of {}", set.file(Split::Test)))
            })?;
            matrix.rows.iter().map(|r| r.values[col]).collect()
        }
        ScoreSource::Model => {
            let path = match &config.model {
                Some(_) => config.input("model")?.to_path_buf(),
                None => out.join(format!("{}.json", tagged("model", tag))),
            };
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "{} not found; pass --model or run `c19 train` first",
                    path.display()
                )));
            }
            record.input("model", &path)?;
            let model = load_model(open(&path)?).map_err(|e| CliError::data(path.display(), e))?;
            model
                .score_dataset(&Dataset::from_matrix(&matrix))
                .map_err(|e| CliError::data(path.display(), e))?
        }
    };
    let ids: Vec<String> = matrix.rows.iter().map(|r| format!("{}|{}", r.person_id, r.prediction_date)).collect();
    let report = EvaluationReport::evaluate(&ids, &matrix.labels(), &scores)
        .map_err(|e| CliError::data(set.file(Split::Test), e))?;

    let stem = tagged("report", tag);
    let files = [
        format!("{stem}.json"),
        format!("{stem}_sla.csv"),
        format!("{stem}_lift.csv"),
        format!("{stem}.gp"),
    ];
    for (i, name) in files.iter().enumerate() {
        let path = out.join(name);
        let mut w = create(&path)?;
        match i {
            0 => report.write_json(&mut w),
            1 => report.write_sla_csv(&mut w),
            2 => report.write_lift_csv(&mut w),
            _ => report.write_gnuplot(&mut w, &stem),
        }
        .map_err(|e| CliError::data(path.display(), e))?;
        flush(w, &path)?;
        record.artifact(&out, name)?;
    }
    info!("{stem}: n={} positives={} auc={:.4}", report.n, report.positives, report.auc);
    Manifest::record(&out, &tagged("evaluate", tag), record)?;
    Ok(report)
}
