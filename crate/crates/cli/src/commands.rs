use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use predsens_core::audit::{audit_report, AuditOptions};
use predsens_core::data::{
    augment_raw, generate_biased_synthetic, generate_fair_synthetic, read_raw, read_schema,
    split_indices, write_dataset, write_raw, CausalModelSpec, Encoder, LabelBias, Provenance,
    RawTable, Schema, TabularDataset,
};
use predsens_core::digest::{dataset_digest, json_digest};
use predsens_core::experiment::{
    derive_seed, run_experiment, stream, train_seeded, write_experiment, DataSource,
    ExperimentRecipe, ModelRecipe,
};
use predsens_core::monitor::{
    baseline_from_scores, Baseline, Monitor, MonitorConfig, DEFAULT_K_SIGMA, DEFAULT_TOP_K,
};
use predsens_core::nn::{
    accuracy, ModelFile, NetworkParams, Target, TrainConfig, TrainingMetadata,
};
use predsens_core::sensitivity::prediction_sensitivity;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::input::{csv_rows, ndjson_rows};
use crate::record::Run;
use crate::{
    AuditArgs, AugmentArgs, BaselineArgs, ExperimentArgs, Global, InputFormat, ModelArgs,
    MonitorArgs, SynthArgs, TargetArg, TrainArgs,
};

const ALARM_EXIT: u8 = 2;

fn load_config<T: DeserializeOwned + Default>(g: &Global) -> Result<T> {
    let Some(path) = &g.config else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        anyhow!(
            "config {}: field `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        )
    })
}

fn require_out(g: &Global) -> Result<&Path> {
    g.out.as_deref().context("--out is required for this command")
}

fn schema_path_for(data: &Path) -> PathBuf {
    data.with_extension("schema.json")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn summarize(g: &Global, value: &impl Serialize) -> Result<()> {
    if !g.quiet {
        println!("{}", serde_json::to_string_pretty(value)?);
    }
    Ok(())
}

fn resolve_schema(data: &Path, schema: &Option<PathBuf>) -> PathBuf {
    schema.clone().unwrap_or_else(|| schema_path_for(data))
}

// ------------------------------------------------------------------ synth

pub fn synth(g: &Global, args: &SynthArgs) -> Result<u8> {
    let mut spec: CausalModelSpec = load_config(g)?;
    if let Some(n) = args.n {
        spec.n_samples = n;
    }
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    if args.biased && spec.bias.is_none() {
        spec.bias = Some(LabelBias::default());
    }
    spec.validate()?;
    let out = require_out(g)?;

    let mut run = Run::start("synth", &spec)?;
    let data = match spec.bias {
        Some(_) => generate_biased_synthetic(&spec)?,
        None => generate_fair_synthetic(&spec)?,
    };
    let schema_path = schema_path_for(out);
    let spec_path = out.with_extension("spec.json");
    write_dataset(&data, out, &schema_path)?;
    write_json(&spec_path, &spec)?;
    for p in [out, &schema_path, &spec_path] {
        run.output(p);
    }
    run.finish_beside(out)?;

    let rate = |label: u8| {
        let rows: Vec<u8> = data
            .labels()
            .iter()
            .zip(data.protected_values())
            .filter(|(&y, _)| y == label)
            .map(|(_, z)| z)
            .collect();
        rows.iter().map(|&z| z as f64).sum::<f64>() / rows.len().max(1) as f64
    };
    summarize(
        g,
        &json!({
            "rows": data.len(),
            "provenance": data.provenance(),
            "positive_rate": data.labels().iter().map(|&y| y as f64).sum::<f64>() / data.len() as f64,
            "protected_rate_given_positive": rate(1),
            "protected_rate_given_negative": rate(0),
        }),
    )?;
    Ok(0)
}

// ---------------------------------------------------------------- augment

pub fn augment(g: &Global, args: &AugmentArgs) -> Result<u8> {
    let data_path = &args.input.data;
    let schema_path = resolve_schema(data_path, &args.input.schema);
    let schema = read_schema(&schema_path)?;
    let table = read_raw(data_path)?;
    let out = require_out(g)?;

    let mut run = Run::start("augment", &json!({ "schema": schema }))?;
    run.input("data", data_path)?;
    run.input("schema", &schema_path)?;
    let augmented = augment_raw(&table, &schema)?;
    let out_schema = Schema {
        provenance: Some(Provenance::Augmented),
        ..schema
    };
    let out_schema_path = schema_path_for(out);
    write_raw(&augmented, out)?;
    write_json(&out_schema_path, &out_schema)?;
    run.output(out);
    run.output(&out_schema_path);
    run.finish_beside(out)?;
    summarize(
        g,
        &json!({ "input_rows": table.rows.len(), "output_rows": augmented.rows.len() }),
    )?;
    Ok(0)
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub target: Target,
    pub hidden_widths: Vec<usize>,
    pub test_fraction: f64,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            target: Target::Label,
            hidden_widths: vec![32],
            test_fraction: 0.2,
            train: TrainConfig::default(),
        }
    }
}

pub fn train(g: &Global, args: &TrainArgs) -> Result<u8> {
    let mut s: TrainSettings = load_config(g)?;
    if let Some(t) = args.target {
        s.target = match t {
            TargetArg::Label => Target::Label,
            TargetArg::Protected => Target::Protected,
        };
    }
    if let Some(h) = &args.hidden {
        s.hidden_widths = h.clone();
    }
    if let Some(e) = args.epochs {
        s.train.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        s.train.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        s.train.batch_size = b;
    }
    if let Some(f) = args.test_fraction {
        s.test_fraction = f;
    }
    s.train.validate()?;
    let seed = g.seed.unwrap_or(0);
    let out = require_out(g)?;

    let data_path = &args.input.data;
    let table = read_raw(data_path)?;
    let mut run = Run::start("train", &json!({ "settings": s, "seed": seed }))?;
    run.input("data", data_path)?;

    let (train_idx, test_idx) = if s.test_fraction == 0.0 {
        ((0..table.rows.len()).collect(), Vec::new())
    } else {
        split_indices(table.rows.len(), s.test_fraction, derive_seed(seed, stream::SPLIT))?
    };
    let (train_raw, test_raw) = (table.subset(&train_idx), table.subset(&test_idx));

    let encoder = match &args.encoder_from {
        Some(model_path) => {
            run.input("encoder", model_path)?;
            ModelFile::load(model_path)?
                .encoder
                .with_context(|| format!("{} carries no encoder", model_path.display()))?
        }
        None => {
            let schema_path = resolve_schema(data_path, &args.input.schema);
            run.input("schema", &schema_path)?;
            Encoder::fit(&train_raw, &read_schema(&schema_path)?)?
        }
    };
    let (train_set, _) = encoder.encode(&train_raw)?;
    let d = train_set.n_features();
    let targets = train_set.targets(s.target)?;
    let model_stream = match s.target {
        Target::Label => stream::CLASSIFIER,
        Target::Protected => stream::PROTECTED,
    };
    let recipe = ModelRecipe {
        hidden_widths: s.hidden_widths.clone(),
        train: s.train.clone(),
    };
    let report = train_seeded(&recipe, train_set.features(), d, &targets, seed, model_stream)?;
    let params = report.params;
    let train_accuracy = accuracy(&params, train_set.features(), d, &targets);

    let (test_accuracy, unseen) = if test_raw.rows.is_empty() {
        (None, 0)
    } else {
        let (test_set, enc_report) = encoder.encode(&test_raw)?;
        let t = test_set.targets(s.target)?;
        (
            Some(accuracy(&params, test_set.features(), d, &t)),
            enc_report.total_unseen(),
        )
    };

    let metadata = TrainingMetadata {
        target: s.target,
        config: TrainConfig {
            shuffle_seed: derive_seed(seed, model_stream + 1),
            ..s.train.clone()
        },
        train_rows: train_set.len(),
        final_loss: report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        train_accuracy,
        test_accuracy,
        data_digest: dataset_digest(&train_set),
    };
    let schema = encoder.schema().clone();
    ModelFile::new(&params)
        .with_training(metadata)
        .with_encoder(encoder)
        .save(out)?;
    run.output(out);

    if let Some(dir) = &args.split_out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, part) in [("train.csv", &train_raw), ("test.csv", &test_raw)] {
            let path = dir.join(name);
            write_raw(part, &path)?;
            write_json(&path.with_extension("schema.json"), &schema)?;
            run.output(&path);
        }
    }
    run.finish_beside(out)?;

    summarize(
        g,
        &json!({
            "target": s.target,
            "features": d,
            "train_rows": train_set.len(),
            "test_rows": test_raw.rows.len(),
            "epoch_losses": report.epoch_losses,
            "train_accuracy": train_accuracy,
            "test_accuracy": test_accuracy,
            "unseen_test_levels": unseen,
        }),
    )?;
    Ok(0)
}

// ---------------------------------------------------------------- helpers

struct LoadedModel {
    params: NetworkParams,
    encoder: Encoder,
}

fn load_model(role: &str, path: &Path, run: &mut Run) -> Result<LoadedModel> {
    run.input(role, path)?;
    let file = ModelFile::load(path)?;
    let encoder = file.encoder.clone().with_context(|| {
        format!("{role} model {} carries no encoder; train it with `predsens train`", path.display())
    })?;
    Ok(LoadedModel {
        params: file.params()?,
        encoder,
    })
}

/// The models must encode raw rows identically for their gradients to be
/// comparable.
fn shared_encoder(models: &[(&str, &LoadedModel)]) -> Result<Encoder> {
    let (first_role, first) = models[0];
    let digest = json_digest(&first.encoder);
    for (role, m) in &models[1..] {
        if json_digest(&m.encoder) != digest {
            bail!(
                "the {role} model was trained with a different encoder than the {first_role}; \
                 train it with --encoder-from"
            );
        }
    }
    Ok(first.encoder.clone())
}

fn load_pair(models: &ModelArgs, run: &mut Run) -> Result<(LoadedModel, LoadedModel, Encoder)> {
    let f = load_model("classifier", &models.classifier, run)?;
    let a = load_model("protected-model", &models.protected_model, run)?;
    let encoder = shared_encoder(&[("classifier", &f), ("protected-status", &a)])?;
    Ok((f, a, encoder))
}

/// Encodes every row without needing a label column; the protected slot is
/// imputed when the schema marks it deploy-absent.
fn encode_unlabelled(encoder: &Encoder, table: &RawTable) -> Result<Vec<Vec<f64>>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            encoder
                .encode_record(
                    |name| {
                        table
                            .headers
                            .iter()
                            .position(|h| h == name)
                            .and_then(|c| row.get(c))
                            .map(String::as_str)
                    },
                    false,
                )
                .with_context(|| format!("row {}", i + 1))
        })
        .collect()
}

// ------------------------------------------------------------------ audit

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub augment_test: bool,
    pub include_rows: bool,
    pub top_k: usize,
    pub exclude_protected: bool,
}

impl Default for AuditSettings {
    fn default() -> Self {
        let o = AuditOptions::default();
        AuditSettings {
            augment_test: false,
            include_rows: o.include_rows,
            top_k: o.top_k,
            exclude_protected: o.exclude_protected,
        }
    }
}

pub fn audit(g: &Global, args: &AuditArgs) -> Result<u8> {
    let mut s: AuditSettings = load_config(g)?;
    s.augment_test |= args.augment_test;
    s.include_rows |= args.include_rows;
    s.exclude_protected |= args.exclude_protected;
    if let Some(k) = args.top_k {
        s.top_k = k;
    }
    let out = require_out(g)?;

    let mut run = Run::start("audit", &s)?;
    let f = load_model("classifier", &args.models.classifier, &mut run)?;
    let f_hat = load_model("reference", &args.reference, &mut run)?;
    let a = load_model("protected-model", &args.models.protected_model, &mut run)?;
    let encoder = shared_encoder(&[
        ("classifier", &f),
        ("reference", &f_hat),
        ("protected-status", &a),
    ])?;

    run.input("data", &args.data)?;
    let mut table = read_raw(&args.data)?;
    if s.augment_test {
        table = augment_raw(&table, encoder.schema())?;
    }
    let (test, enc_report): (TabularDataset, _) = encoder.encode(&table)?;
    let options = AuditOptions {
        include_rows: s.include_rows,
        top_k: s.top_k,
        exclude_protected: s.exclude_protected,
    };
    let report = audit_report(&f.params, &f_hat.params, &a.params, &test, &options)?;
    write_json(out, &report)?;
    run.output(out);
    if let Some(curve) = report.roc_curve() {
        let roc_path = out.with_extension("roc.csv");
        fs::write(&roc_path, curve.to_csv())
            .with_context(|| format!("writing {}", roc_path.display()))?;
        run.output(&roc_path);
    }
    run.finish_beside(out)?;

    summarize(
        g,
        &json!({
            "rows": report.n_rows,
            "members": report.match_counts.members,
            "non_members": report.match_counts.non_members,
            "auc": report.auc,
            "auc_note": report.auc_note,
            "unseen_levels": enc_report.total_unseen(),
            "config_digest": report.config_digest,
        }),
    )?;
    Ok(0)
}

// --------------------------------------------------------------- baseline

pub fn baseline(g: &Global, args: &BaselineArgs) -> Result<u8> {
    let out = require_out(g)?;
    let mut run = Run::start("baseline", &json!({}))?;
    let (f, a, encoder) = load_pair(&args.models, &mut run)?;
    run.input("data", &args.data)?;
    let table = read_raw(&args.data)?;
    let rows = encode_unlabelled(&encoder, &table)?;
    let ps = rows
        .iter()
        .map(|x| Ok(prediction_sensitivity(&a.params, &f.params, x)?.ps))
        .collect::<Result<Vec<f64>>>()?;
    let baseline = baseline_from_scores(&ps, &f.params, &a.params)?;
    write_json(out, &baseline)?;
    run.output(out);
    run.finish_beside(out)?;
    summarize(g, &baseline)?;
    Ok(0)
}

// ---------------------------------------------------------------- monitor

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSettings {
    pub k_sigma: f64,
    pub top_k: usize,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        MonitorSettings {
            k_sigma: DEFAULT_K_SIGMA,
            top_k: DEFAULT_TOP_K,
        }
    }
}

pub fn monitor(g: &Global, args: &MonitorArgs) -> Result<u8> {
    let mut s: MonitorSettings = load_config(g)?;
    if let Some(k) = args.k_sigma {
        s.k_sigma = k;
    }
    if let Some(k) = args.top_k {
        s.top_k = k;
    }
    let mut run = Run::start("monitor", &s)?;
    let (f, a, encoder) = load_pair(&args.models, &mut run)?;
    run.input("baseline", &args.baseline)?;
    let baseline: Baseline = serde_json::from_str(
        &fs::read_to_string(&args.baseline)
            .with_context(|| format!("reading {}", args.baseline.display()))?,
    )
    .with_context(|| format!("parsing {}", args.baseline.display()))?;

    let config = MonitorConfig {
        k_sigma: s.k_sigma,
        top_k: s.top_k,
        impute_protected: encoder
            .schema()
            .protected_deploy_absent
            .then(|| encoder.protected_index()),
    };
    let names = encoder.feature_columns().into_iter().map(|c| c.name).collect();
    let monitor = Monitor::new(&f.params, &a.params, &baseline, config, names)?;

    let stdin_input = args.input.as_os_str() == "-";
    let format = args.format.unwrap_or_else(|| {
        match args.input.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Ndjson,
        }
    });
    let reader: Box<dyn io::BufRead> = if stdin_input {
        Box::new(io::stdin().lock())
    } else {
        run.input("stream", &args.input)?;
        Box::new(BufReader::new(
            File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
        ))
    };
    let rows: Box<dyn Iterator<Item = _>> = match format {
        InputFormat::Ndjson => Box::new(ndjson_rows(reader, &encoder)),
        InputFormat::Csv => csv_rows(reader, &encoder).context("reading CSV header")?,
    };

    let mut sink: Box<dyn Write> = match &g.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let (mut n, mut alarms, mut errors) = (0usize, 0usize, 0usize);
    for event in monitor.stream(rows) {
        n += 1;
        alarms += usize::from(event.is_alarm());
        errors += usize::from(event.error.is_some());
        serde_json::to_writer(&mut sink, &event)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    drop(sink);

    if let Some(path) = &g.out {
        run.output(path);
        run.finish_beside(path)?;
    }
    if !g.quiet {
        eprintln!("{n} rows, {alarms} alarms, {errors} errors");
    }
    Ok(if alarms > 0 { ALARM_EXIT } else { 0 })
}

// ------------------------------------------------------------- experiment

pub fn experiment(g: &Global, args: &ExperimentArgs) -> Result<u8> {
    let path = g
        .config
        .as_deref()
        .context("experiment needs --config <recipe.json>")?;
    let mut recipe = ExperimentRecipe::load(path)?;
    if let Some(seed) = g.seed {
        recipe.first_seed = seed;
    }
    if let Some(t) = args.trials {
        recipe.trials = t;
    }
    let base = path.parent().unwrap_or(Path::new(""));
    if let DataSource::Csv { data, schema } = &mut recipe.source {
        for p in [data, schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    recipe.validate()?;
    let out = require_out(g)?;

    let mut run = Run::start("experiment", &recipe)?;
    run.input("recipe", path)?;
    if let DataSource::Csv { data, schema } = &recipe.source {
        run.input("data", data)?;
        run.input("schema", schema)?;
    }
    let report = run_experiment(&recipe)?;
    write_experiment(&report, out)?;
    run.output(out);
    run.finish(&out.join("run.json"), &out.join("run.log"))?;
    summarize(g, &report.summary)?;
    Ok(0)
}
