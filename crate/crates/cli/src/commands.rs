use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dartnet::dataio::{load_dataset, write_snapshots, DataError, DatasetSplit, Metadata, NormStats, Snapshot};
use dartnet::eval::{evaluate, ReportMeta};
use dartnet::inference::{forecast, ForecastConfig, InferenceError};
use dartnet::model::{file_sha256, load_checkpoint, CheckpointMeta, ModelError, ModelParams, VariantKind};
use dartnet::synth::{generate, SynthConfig, SynthError};
use dartnet::training::{portion_mse, train, TrainConfig, TrainError};
use serde::Serialize;

use crate::{AblateArgs, Command, DataArgs, EvalArgs, Failure, ForecastArgs, GenerateArgs, ModelFlags, TrainArgs};

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate(a) => run_generate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Forecast(a) => run_forecast(a),
        Command::Ablate(a) => run_ablate(a),
    }
}

fn data_failure(e: DataError) -> Failure {
    match e {
        DataError::BadFractions(_) => Failure::usage(e),
        e => Failure::data(e),
    }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::InvalidConfig(_) => Failure::usage(e),
        TrainError::Io { .. } | TrainError::ShortWindow(_) | TrainError::EmptyPortion(_) => Failure::data(e),
        e => Failure::runtime(e),
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::Io { .. } | ModelError::Checkpoint(_) => Failure::data(e),
        e => Failure::runtime(e),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

fn load(data: &DataArgs) -> Result<(DatasetSplit, Metadata), Failure> {
    let fractions: [f64; 3] = data
        .split
        .as_slice()
        .try_into()
        .map_err(|_| Failure::usage("--split takes three comma-separated fractions"))?;
    load_dataset(&data.data, fractions).map_err(data_failure)
}

/// Canonical form of `path`, resolving through its nearest existing ancestor.
fn resolve(path: &Path) -> Option<std::path::PathBuf> {
    let abs = std::path::absolute(path).ok()?;
    let mut rest = Vec::new();
    for anc in abs.ancestors() {
        if let Ok(c) = std::fs::canonicalize(anc) {
            return Some(rest.iter().rev().fold(c, |acc, part| acc.join(part)));
        }
        rest.push(anc.file_name()?.to_owned());
    }
    None
}

/// Refuses output paths inside the dataset directory so inputs are never touched.
fn check_out(out: &Path, data: &Path) -> Result<(), Failure> {
    if let (Some(d), Some(o)) = (resolve(data), resolve(out)) {
        if o.starts_with(&d) {
            return Err(Failure::usage(format!("--out {} lies inside the dataset directory", out.display())));
        }
    }
    if out.exists() && !out.is_dir() {
        return Err(Failure::usage(format!("--out {} is not a directory", out.display())));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn run_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($flag:ident, $field:ident) => {
            if let Some(v) = a.$flag {
                cfg.$field = v;
            }
        };
    }
    set!(seed, seed);
    set!(entities, num_entities);
    set!(relations, num_relations);
    set!(ticks, num_ticks);
    set!(coupling, coupling);
    set!(noise, noise_std);
    set!(density, density);
    cfg.validate().map_err(Failure::usage)?;
    if a.out.exists() && !a.out.is_dir() {
        return Err(Failure::usage(format!("--out {} is not a directory", a.out.display())));
    }
    let out = generate(&cfg).map_err(|e| match e {
        SynthError::InvalidConfig(_) => Failure::usage(e),
        e => Failure::runtime(e),
    })?;
    out.write(&a.out).map_err(Failure::data)?;
    let sidecar = out.sidecar();
    println!("{}", serde_json::to_string(&sidecar).expect("sidecar serializes"));
    Ok(())
}

fn train_config(flags: &ModelFlags) -> Result<TrainConfig, Failure> {
    let mut cfg: TrainConfig = match &flags.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = flags.$field {
                cfg.$field = v;
            }
        };
    }
    set!(lambda);
    set!(hidden_dim);
    set!(embed_dim);
    set!(seq_len);
    set!(epochs);
    set!(lr);
    set!(batch_size);
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    checkpoint: Option<&'a Path>,
    sha256: Option<&'a str>,
    best_epoch: usize,
    best_val_mse: f64,
    epochs_run: usize,
    stopped_early: bool,
}

fn run_train(a: TrainArgs) -> Result<(), Failure> {
    let mut cfg = train_config(&a.model)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &a.variant {
        cfg.variant = v.parse::<VariantKind>().map_err(Failure::usage)?;
    }
    cfg.checkpoint_dir = Some(a.out.clone());
    cfg.validate().map_err(train_failure)?;
    check_out(&a.out, &a.data.data)?;
    let (split, _) = load(&a.data)?;
    let outcome = train(&split, &cfg).map_err(train_failure)?;
    let summary = TrainSummary {
        checkpoint: outcome.checkpoint.as_deref(),
        sha256: outcome.checkpoint_hash.as_deref(),
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_val_mse,
        epochs_run: outcome.records.len().saturating_sub(1),
        stopped_early: outcome.stopped_early,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    if let Some(reason) = outcome.aborted {
        return Err(Failure::runtime(format!("training aborted: {reason}")));
    }
    Ok(())
}

fn checked_checkpoint(path: &Path, split: &DatasetSplit) -> Result<(ModelParams, CheckpointMeta), Failure> {
    let (params, meta) = load_checkpoint(path).map_err(model_failure)?;
    let d = params.dims();
    if d.num_entities != split.num_entities || d.num_relations != split.num_relations || d.attr_arity != split.attr_arity {
        return Err(Failure::data(format!(
            "checkpoint expects {} entities, {} relations, arity {}; dataset has {}, {}, {}",
            d.num_entities, d.num_relations, d.attr_arity, split.num_entities, split.num_relations, split.attr_arity
        )));
    }
    Ok((params, meta))
}

/// Dataset with the checkpoint's normalization statistics in place of its own.
fn with_stats(split: &DatasetSplit, stats: &NormStats) -> DatasetSplit {
    let mut s = split.clone();
    s.stats = stats.clone();
    s
}

fn run_eval(a: EvalArgs) -> Result<(), Failure> {
    let portion = match a.portion.as_str() {
        "valid" => 1,
        "test" => 2,
        other => return Err(Failure::usage(format!("--portion must be valid or test, got '{other}'"))),
    };
    if let Some(out) = &a.out {
        check_out(out, &a.data.data)?;
    }
    let (split, _) = load(&a.data)?;
    let (params, meta) = checked_checkpoint(&a.checkpoint, &split)?;
    let hash = file_sha256(&a.checkpoint).map_err(model_failure)?;
    let report_meta = ReportMeta {
        checkpoint_hash: Some(hash),
        dataset: a.data.data.display().to_string(),
        portion: a.portion.clone(),
        horizon: 1,
        variant: Some(params.variant().to_string()),
    };
    let report = evaluate(&params, &with_stats(&split, &meta.stats), portion, meta.seq_len, report_meta)
        .map_err(|e| Failure::runtime(e))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        report.write(out).map_err(Failure::data)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AttributeStep {
    tick: u64,
    value: Vec<f64>,
}

fn run_forecast(a: ForecastArgs) -> Result<(), Failure> {
    if a.horizon == 0 || a.top_k == 0 {
        return Err(Failure::usage("--horizon and --top-k must be at least 1"));
    }
    check_out(&a.out, &a.data.data)?;
    let (split, meta) = load(&a.data)?;
    let (params, ck) = checked_checkpoint(&a.checkpoint, &split)?;
    let stats = &ck.stats;
    let snapshots: Vec<Snapshot> = split.all_snapshots().into_iter().map(|s| s.map_attributes(|x| stats.normalize(x))).collect();
    let cut = a.cut.unwrap_or(split.train.len() + split.valid.len());
    let config = ForecastConfig {
        horizon: a.horizon,
        top_k: a.top_k,
        queries: None,
    };
    let result = forecast(&snapshots, cut, &params, ck.seq_len, &config).map_err(|e| match e {
        InferenceError::BadCut { .. } | InferenceError::EmptyQueries => Failure::usage(e),
        InferenceError::Data(e) => Failure::data(e),
        e => Failure::runtime(e),
    })?;
    let steps: Vec<Snapshot> = result.steps.iter().map(|s| s.snapshot.map_attributes(|x| stats.denormalize(x))).collect();
    // entity name -> predicted vector at each forecast step
    let mut attrs: BTreeMap<String, Vec<AttributeStep>> = BTreeMap::new();
    for step in &result.steps {
        for (&e, v) in &step.attributes {
            let name = meta.entities.name(e).map_or_else(|| e.to_string(), str::to_string);
            attrs.entry(name).or_default().push(AttributeStep {
                tick: meta.raw_tick(step.tick),
                value: stats.denormalize(v),
            });
        }
    }
    create_dir(&a.out)?;
    let header = format!("predicted=true horizon={} top_k={} cut={cut}", a.horizon, a.top_k);
    write_snapshots(a.out.join("forecast.tsv"), &steps, &meta, &[&header]).map_err(Failure::data)?;
    write_file(
        &a.out.join("forecast_attributes.json"),
        &(serde_json::to_string_pretty(&attrs).expect("attributes serialize") + "\n"),
    )?;
    println!(
        "{}",
        serde_json::json!({"forecast": a.out.join("forecast.tsv"), "steps": steps.len(), "events": steps.iter().map(|s| s.events().len()).sum::<usize>()})
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    test_mse: Vec<f64>,
    median: f64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn run_ablate(a: AblateArgs) -> Result<(), Failure> {
    if a.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    let mut base = train_config(&a.model)?;
    base.checkpoint_dir = None;
    base.validate().map_err(train_failure)?;
    if let Some(out) = &a.out {
        check_out(out, &a.data.data)?;
    }
    let (split, _) = load(&a.data)?;
    let norm = split.normalize();
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let rows: Vec<Result<AblationRow, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = VariantKind::ALL
            .into_iter()
            .map(|variant| {
                let (split, norm, base, seeds) = (&split, &norm, &base, &seeds);
                scope.spawn(move || {
                    let mut test_mse = Vec::new();
                    for &seed in seeds {
                        let cfg = TrainConfig {
                            seed,
                            variant,
                            ..base.clone()
                        };
                        let outcome = train(split, &cfg).map_err(train_failure)?;
                        if let Some(reason) = outcome.aborted {
                            return Err(Failure::runtime(format!("{variant} seed {seed} aborted: {reason}")));
                        }
                        let (raw, _) = portion_mse(&outcome.best, norm, 2, cfg.seq_len).map_err(model_failure)?;
                        log::info!("{variant} seed {seed}: test mse {raw}");
                        test_mse.push(raw);
                    }
                    Ok(AblationRow {
                        variant: variant.to_string(),
                        median: median(&test_mse),
                        test_mse,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut table = String::from("variant");
    for s in &seeds {
        let _ = write!(table, "\tmse_seed{s}");
    }
    table.push_str("\tmse_median\n");
    for r in &rows {
        table.push_str(&r.variant);
        for m in &r.test_mse {
            let _ = write!(table, "\t{m:.6e}");
        }
        let _ = writeln!(table, "\t{:.6e}", r.median);
    }
    print!("{table}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("ablation.tsv"), &table)?;
        write_file(&out.join("ablation.json"), &(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"))?;
    }
    Ok(())
}
