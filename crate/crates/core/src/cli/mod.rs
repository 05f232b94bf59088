//! The `spt` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::numcore::Scalar;
use crate::seqdata::{
    generate_synthetic, load_dataset, read_manifest, split_per_class, write_jsonl, write_manifest, Dataset,
    DatasetFormat, SyntheticSpec,
};
use crate::seqscore::{sequence_score, Target};
use crate::sptmodel::{load_checkpoint, save_checkpoint, ModelConfig, Preset, SptModel};
use crate::trainer::{derive_seed, evaluate, save_metrics_csv, train_with, EpochMetrics, TrainConfig};
use crate::xaieval::{
    deletion_curve, mutation_curve, predicted_class_scores, single_substitution_pairs, stability_report,
    timing_scaling, Amount,
};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "spt", version, about = "Sequence transformer classifier with per-residue explanations")]
pub struct Cli {
    /// Worker threads for record-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from scratch and write a run directory.
    Train(TrainArgs),
    /// Error rate and per-class accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Per-residue importance scores, one file per record.
    Explain(ExplainArgs),
    /// Accuracy after perturbing top, bottom and random scored residues.
    Faithfulness(FaithArgs),
    /// Rank correlation of scores under single-residue substitutions.
    Stability(StabilityArgs),
    /// Scaling of the scoring stage with sequence length.
    Timing(TimingArgs),
    /// Write the planted-motif benchmark.
    GenSynthetic(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Fasta,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults from the file extension.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Class names, one per line, fixing label indices.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Truncate sequences longer than the model limit instead of failing.
    #[arg(long)]
    pub truncate: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// JSON file with `preset`, `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub mlp_size: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub no_positional: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub layer_decay: Option<f64>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    #[arg(long)]
    pub drop_path: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Save a checkpoint every N epochs (0 = final only).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreFormat {
    Csv,
    Json,
    Both,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Class to explain; defaults to each record's prediction.
    #[arg(long = "class")]
    pub class: Option<usize>,
    /// 1-based block whose input is the feature map; defaults to the last.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub output_format: ScoreFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("amounts").required(true).args(["ratios", "counts"])))]
pub struct FaithArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub mode: FaithMode,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub ratios: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub counts: Vec<usize>,
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaithMode {
    Delete,
    Mutate,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TimingArgs {
    /// Hidden size of the synthetic feature maps.
    #[arg(long, default_value_t = 192)]
    pub hidden: usize,
    /// Take the hidden size from a checkpoint instead.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "256,512,1024")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 5)]
    pub motif_length: usize,
    #[arg(long, default_value_t = 80)]
    pub min_len: usize,
    #[arg(long, default_value_t = 120)]
    pub max_len: usize,
    #[arg(long, default_value_t = 500)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything a training run used, as written to `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub truncate: bool,
    pub out_dir: PathBuf,
    pub rng_seed: u64,
    pub precision: Precision,
    pub checkpoint_every: usize,
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set<T: Serialize>(obj: &mut Value, section: &str, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        obj[section][key] = serde_json::to_value(v)?;
    }
    Ok(())
}

/// Resolves flags over the config file over preset defaults.
pub fn resolve_run_config(args: &TrainArgs, num_classes: usize) -> Result<RunConfig> {
    let file: Value = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Value::Object(Default::default()),
    };
    let preset: Preset = match args.preset.as_deref().or(file.get("preset").and_then(Value::as_str)) {
        Some(p) => p.parse()?,
        None => Preset::Tiny,
    };
    let mut doc = serde_json::json!({
        "model": ModelConfig::preset(preset, num_classes),
        "train": TrainConfig::default(),
        "precision": Precision::F32,
        "checkpoint_every": 0,
    });
    for key in ["model", "train", "precision", "checkpoint_every"] {
        if let Some(v) = file.get(key) {
            merge(&mut doc[key], v);
        }
    }
    doc["model"]["num_classes"] = num_classes.into();
    set(&mut doc, "model", "layers", args.layers)?;
    set(&mut doc, "model", "hidden", args.hidden)?;
    set(&mut doc, "model", "heads", args.heads)?;
    set(&mut doc, "model", "mlp_size", args.mlp_size)?;
    set(&mut doc, "model", "max_len", args.max_len)?;
    if args.no_positional {
        doc["model"]["use_positional"] = false.into();
    }
    set(&mut doc, "train", "epochs", args.epochs)?;
    set(&mut doc, "train", "warmup_epochs", args.warmup)?;
    set(&mut doc, "train", "base_lr", args.lr)?;
    set(&mut doc, "train", "batch_size", args.batch_size)?;
    set(&mut doc, "train", "weight_decay", args.weight_decay)?;
    set(&mut doc, "train", "layer_decay", args.layer_decay)?;
    set(&mut doc, "train", "label_smoothing", args.label_smoothing)?;
    set(&mut doc, "train", "drop_path", args.drop_path)?;
    set(&mut doc, "train", "rng_seed", args.seed)?;
    if let Some(p) = args.precision {
        doc["precision"] = serde_json::to_value(p)?;
    }
    if let Some(n) = args.checkpoint_every {
        doc["checkpoint_every"] = n.into();
    }
    let mut model: ModelConfig = serde_json::from_value(doc["model"].clone())?;
    let train: TrainConfig = serde_json::from_value(doc["train"].clone())?;
    model.drop_path_rate = train.drop_path;
    model.validate()?;
    train.validate()?;
    Ok(RunConfig {
        rng_seed: train.rng_seed,
        model,
        train,
        data: args.data.data.clone(),
        val: args.val.clone(),
        manifest: args.data.manifest.clone(),
        truncate: args.data.truncate,
        out_dir: args.out.clone(),
        precision: serde_json::from_value(doc["precision"].clone())?,
        checkpoint_every: serde_json::from_value(doc["checkpoint_every"].clone())?,
    })
}

fn format_of(path: &Path, arg: Option<FormatArg>) -> DatasetFormat {
    match arg {
        Some(FormatArg::Jsonl) => DatasetFormat::Jsonl,
        Some(FormatArg::Fasta) => DatasetFormat::Fasta,
        None => DatasetFormat::from_path(path),
    }
}

fn load(path: &Path, args: &DataArgs, manifest: Option<&[String]>) -> Result<Dataset> {
    load_dataset(path, format_of(path, args.format), manifest)
}

/// Enforces the length limit, truncating when allowed.
fn fit_length(mut ds: Dataset, max_len: usize, truncate: bool) -> Result<Dataset> {
    for r in &mut ds.records {
        if r.len() > max_len {
            if !truncate {
                return Err(Error::TooLong { len: r.len(), max_len });
            }
            r.sequence.truncate(max_len);
        }
    }
    Ok(ds)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let manifest = args.data.manifest.as_deref().map(read_manifest).transpose()?;
    let train_ds = load(&args.data.data, &args.data, manifest.as_deref())?;
    // validation labels must share the training index space
    let names = train_ds.class_names.clone();
    let val_ds = args
        .val
        .as_deref()
        .map(|p| load(p, &args.data, Some(manifest.as_deref().unwrap_or(&names))))
        .transpose()?;
    let run = resolve_run_config(args, train_ds.num_classes())?;
    let train_ds = fit_length(train_ds, run.model.max_len, run.truncate)?;
    let val_ds = val_ds.map(|d| fit_length(d, run.model.max_len, run.truncate)).transpose()?;

    fs::create_dir_all(run.out_dir.join("checkpoints")).map_err(|e| Error::io(&run.out_dir, e))?;
    let cfg_path = run.out_dir.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&run)?).map_err(|e| Error::io(&cfg_path, e))?;
    write_manifest(&train_ds.class_names, &run.out_dir.join("classes.txt"))?;
    match run.precision {
        Precision::F32 => train_run::<f32>(&run, &train_ds, val_ds.as_ref()),
        Precision::F64 => train_run::<f64>(&run, &train_ds, val_ds.as_ref()),
    }
}

fn train_run<T: Scalar>(run: &RunConfig, train_ds: &Dataset, val_ds: Option<&Dataset>) -> Result<()> {
    let model = SptModel::<T>::build(run.model.clone(), derive_seed(run.rng_seed, &[0]))?;
    eprintln!(
        "training {} parameters on {} records for {} epochs",
        model.param_count(),
        train_ds.len(),
        run.train.epochs
    );
    let metrics_path = run.out_dir.join("metrics.csv");
    let mut history: Vec<EpochMetrics> = Vec::new();
    let outcome = train_with(model, train_ds, val_ds, &run.train, |m, model| {
        history.push(m.clone());
        save_metrics_csv(&history, &metrics_path)?;
        eprintln!(
            "epoch {:>4}  loss {:.4}  train_err {:.4}  val_err {}  lr {:.3e}",
            m.epoch,
            m.train_loss,
            m.train_err,
            m.val_err.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            m.lr
        );
        if run.checkpoint_every > 0 && m.epoch % run.checkpoint_every == 0 {
            save_checkpoint(model, &run.out_dir.join(format!("checkpoints/epoch-{:04}.ckpt", m.epoch)))?;
        }
        Ok(())
    })?;
    save_checkpoint(&outcome.model, &run.out_dir.join("model.ckpt"))
}

fn with_model<R>(
    args: &ModelArgs,
    f32_fn: impl FnOnce(SptModel<f32>) -> Result<R>,
    f64_fn: impl FnOnce(SptModel<f64>) -> Result<R>,
) -> Result<R> {
    match args.precision {
        Precision::F32 => f32_fn(load_checkpoint(&args.checkpoint)?),
        Precision::F64 => f64_fn(load_checkpoint(&args.checkpoint)?),
    }
}

fn eval_data<T: Scalar>(model: &SptModel<T>, args: &DataArgs) -> Result<Dataset> {
    let manifest = args.manifest.as_deref().map(read_manifest).transpose()?;
    let ds = load(&args.data, args, manifest.as_deref())?;
    if ds.num_classes() > model.config().num_classes {
        return Err(Error::Config(format!(
            "data has {} classes, model {}; pass --manifest to fix label order",
            ds.num_classes(),
            model.config().num_classes
        )));
    }
    // evaluation is per record, so class counts only need to fit
    let ds = Dataset {
        class_names: (0..model.config().num_classes)
            .map(|i| ds.class_names.get(i).cloned().unwrap_or_else(|| format!("class{i}")))
            .collect(),
        ..ds
    };
    fit_length(ds, model.config().max_len, args.truncate)
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    fn go<T: Scalar>(m: SptModel<T>, args: &EvalArgs) -> Result<()> {
        let ds = eval_data(&m, &args.data)?;
        let report = evaluate(&m, &ds)?;
        let json = serde_json::to_string_pretty(&serde_json::json!({
            "n": ds.len(),
            "error_rate": report.error_rate,
            "accuracy": report.accuracy(),
            "per_class_accuracy": ds.class_names.iter().zip(&report.per_class_accuracy)
                .map(|(n, a)| (n.clone(), serde_json::json!(a))).collect::<serde_json::Map<_, _>>(),
        }))?;
        println!("{json}");
        if let Some(p) = &args.out {
            write_out(p, &json)?;
        }
        Ok(())
    }
    with_model(&args.model, |m| go(m, args), |m| go(m, args))
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    fn go<T: Scalar>(m: SptModel<T>, args: &ExplainArgs) -> Result<()> {
        let manifest = args.data.manifest.as_deref().map(read_manifest).transpose()?;
        let ds = load(&args.data.data, &args.data, manifest.as_deref())?;
        let target = args.class.map_or(Target::Predicted, Target::Class);
        fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        let max_len = m.config().max_len;
        let mut failures = Vec::new();
        for r in &ds.records {
            let mut r = r.clone();
            if r.len() > max_len && args.data.truncate {
                r.sequence.truncate(max_len);
            }
            match sequence_score(&m, &r, target, args.block) {
                Ok(s) => {
                    let stem = args.out.join(file_stem(&r.id));
                    if matches!(args.output_format, ScoreFormat::Csv | ScoreFormat::Both) {
                        s.save_csv(&stem.with_extension("csv"))?;
                    }
                    if matches!(args.output_format, ScoreFormat::Json | ScoreFormat::Both) {
                        s.save_json(&stem.with_extension("json"))?;
                    }
                }
                Err(e) => {
                    eprintln!("{}: {e}", r.id);
                    failures.push(serde_json::json!({"id": r.id, "error": e.to_string()}));
                }
            }
        }
        if !failures.is_empty() {
            write_out(&args.out.join("errors.json"), &serde_json::to_string_pretty(&failures)?)?;
        }
        if failures.len() == ds.len() {
            return Err(Error::Invalid("no record could be explained".into()));
        }
        eprintln!("explained {} of {} records", ds.len() - failures.len(), ds.len());
        Ok(())
    }
    with_model(&args.model, |m| go(m, args), |m| go(m, args))
}

fn cmd_faithfulness(args: &FaithArgs) -> Result<()> {
    let amounts: Vec<Amount> = if args.ratios.is_empty() {
        args.counts.iter().map(|&k| Amount::Count(k)).collect()
    } else {
        if let Some(r) = args.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Invalid(format!("ratio {r} outside [0, 1]")));
        }
        args.ratios.iter().map(|&r| Amount::Ratio(r)).collect()
    };
    fn go<T: Scalar>(m: SptModel<T>, args: &FaithArgs, amounts: &[Amount]) -> Result<()> {
        let ds = eval_data(&m, &args.data)?;
        let scores = predicted_class_scores(&m, &ds, args.block)?;
        let curve = match args.mode {
            FaithMode::Delete => deletion_curve(&m, &ds, &scores, amounts, args.seed)?,
            FaithMode::Mutate => mutation_curve(&m, &ds, &scores, amounts, args.seed)?,
        };
        if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        curve.save_csv(&args.out)?;
        let last = curve.amounts.len() - 1;
        println!(
            "baseline {:.4}; at {} top {:.4} bottom {:.4} random {:.4}; gap {:.2} points",
            curve.baseline,
            curve.amounts[last].value(),
            curve.accuracy_top[last],
            curve.accuracy_bottom[last],
            curve.accuracy_random[last],
            100.0 * curve.gaps()[last]
        );
        Ok(())
    }
    with_model(&args.model, |m| go(m, args, &amounts), |m| go(m, args, &amounts))
}

fn cmd_stability(args: &StabilityArgs) -> Result<()> {
    fn go<T: Scalar>(m: SptModel<T>, args: &StabilityArgs) -> Result<()> {
        let ds = eval_data(&m, &args.data)?;
        let pairs = single_substitution_pairs(&ds, args.pairs, args.seed)?;
        let report = stability_report(&m, &pairs, args.block)?;
        let json = serde_json::to_string_pretty(&report)?;
        write_out(&args.out, &json)?;
        println!(
            "n {}  undefined {}  median {}",
            report.n,
            report.n_undefined,
            report.median.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into())
        );
        Ok(())
    }
    with_model(&args.model, |m| go(m, args), |m| go(m, args))
}

fn cmd_timing(args: &TimingArgs) -> Result<()> {
    let hidden = match &args.checkpoint {
        Some(p) => load_checkpoint::<f32>(p)?.config().hidden,
        None => args.hidden,
    };
    let entries = timing_scaling(hidden, &args.lengths, args.repeats, args.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["length", "repeats", "median_seconds"])?;
    for e in &entries {
        w.write_record([e.length.to_string(), e.repeats.to_string(), e.median_seconds.to_string()])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)
        .expect("csv output is utf-8");
    print!("{text}");
    if let Some(p) = &args.out {
        write_out(p, &text)?;
    }
    Ok(())
}

fn cmd_gen_synthetic(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_classes: args.classes,
        motif_length: args.motif_length,
        min_len: args.min_len,
        max_len: args.max_len,
        n_per_class: args.train_per_class + args.test_per_class,
        rng_seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    let (train, test) = split_per_class(&data.dataset, args.train_per_class)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_jsonl(&train, &args.out.join("train.jsonl"))?;
    write_jsonl(&test, &args.out.join("test.jsonl"))?;
    write_manifest(&data.dataset.class_names, &args.out.join("classes.txt"))?;
    let motifs: Vec<String> = data.motifs.iter().map(|m| crate::seqdata::sequence_to_string(m)).collect();
    write_out(&args.out.join("motifs.json"), &serde_json::to_string_pretty(&motifs)?)?;
    eprintln!("wrote {} train and {} test records", train.len(), test.len());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.workers > 0 {
        // fails only if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Faithfulness(a) => cmd_faithfulness(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Timing(a) => cmd_timing(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("spt").chain(args.iter().copied()))
    }

    #[test]
    fn empty_amounts_are_usage_errors() {
        assert!(parse(&["faithfulness", "--checkpoint", "m", "--data", "d", "--mode", "delete", "--out", "o"]).is_err());
        assert!(parse(&["faithfulness", "--checkpoint", "m", "--data", "d", "--mode", "delete", "--out", "o", "--ratios"]).is_err());
        assert!(parse(&["faithfulness", "--checkpoint", "m", "--data", "d", "--mode", "delete", "--out", "o", "--ratios", ""]).is_err());
        let ok = parse(&[
            "faithfulness", "--checkpoint", "m", "--data", "d", "--mode", "mutate", "--out", "o", "--counts", "5,10,15",
        ])
        .unwrap();
        match ok.command {
            Command::Faithfulness(f) => assert_eq!(f.counts, [5, 10, 15]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn precedence_flag_over_file_over_preset() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"preset":"small","model":{"layers":3},"train":{"epochs":7,"warmup_epochs":2}}"#).unwrap();
        let cli = parse(&[
            "train", "--data", "x.jsonl", "--out", "r", "--config", cfg.to_str().unwrap(), "--epochs", "9",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { unreachable!() };
        let run = resolve_run_config(&a, 4).unwrap();
        assert_eq!(run.model.hidden, 384);
        assert_eq!(run.model.layers, 3);
        assert_eq!(run.model.num_classes, 4);
        assert_eq!(run.train.epochs, 9);
        assert_eq!(run.train.warmup_epochs, 2);
        assert_eq!(run.train.base_lr, 1e-3);
    }
}
