//! Command-line entry point wiring the modules into reproducible batch
//! experiments. Every command writes its artifacts plus a manifest
//! (resolved config, seed, input content hashes) so any report can be
//! traced to exact inputs. Outputs are a pure function of config, input
//! files and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    feature_family_contrast, length_and_repetition_profile, misclassified_by_all, PredictionRun,
};
use crate::config::RunConfig;
use crate::corpus::{self, Corpus, LoadOptions};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate_split, Metrics, PredictionRecord};
use crate::features::{fnv1a64, load_embeddings, EmbeddingTable};
use crate::models::{
    grid_search, train_model, FeatureKind, GridSpec, ModelArch, ModelSpec, TrainedModel,
};
use crate::preprocess::Pipeline;
use crate::synth::generate_synthetic;

#[derive(Parser)]
#[command(
    name = "salamnet",
    about = "Arabic offensive-language detection experiments: preprocessing, training, evaluation, cross-validation and error analysis",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Config file (`key = value` with [sections]); flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<timestamp>-<confighash>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lexicon directory (default: $SALAMNET_DATA_DIR, else bundled)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Word-embedding file in word2vec text format
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct HyperOpts {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Hash buckets for the TF-IDF sequence bridge
    #[arg(long)]
    buckets: Option<usize>,
    /// TF-IDF sequence bridge: hashed | docvec
    #[arg(long)]
    tfidf_mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a tweet TSV through the six-step pipeline
    Preprocess {
        /// Input TSV (id<TAB>text<TAB>label)
        #[arg(long, visible_alias = "in")]
        input: PathBuf,
        /// Output TSV path
        #[arg(long, visible_alias = "out")]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.19)]
        ratio: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output TSV path
        #[arg(long, visible_alias = "out")]
        output: PathBuf,
    },
    /// Train one model and write a checkpoint
    Train {
        /// Architecture: lr | rnn | gru | bigru | lstm | bilstm
        #[arg(long)]
        arch: String,
        /// Features: tfidf | aravec
        #[arg(long)]
        features: String,
        /// Training TSV
        #[arg(long)]
        train: PathBuf,
        /// Development TSV for best-epoch selection
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Balance classes by upsampling the training minority class
        #[arg(long)]
        upsample: bool,
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        hyper: HyperOpts,
    },
    /// Evaluate a checkpoint on a labeled TSV
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Run id recorded in the report (default: checkpoint stem)
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Predict labels for a TSV with a trained checkpoint
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// k-fold cross-validation (per-fold feature fitting)
    Cv {
        /// Architecture, or `all` for the five recurrent ones
        #[arg(long)]
        arch: String,
        #[arg(long)]
        features: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        upsample: bool,
        /// Concurrent architecture jobs for --arch all
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        hyper: HyperOpts,
    },
    /// Hyperparameter grid search selected by dev accuracy
    Gridsearch {
        /// Architecture, or `all` for the five recurrent ones
        #[arg(long)]
        arch: String,
        #[arg(long)]
        features: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        hyper: HyperOpts,
    },
    /// Cross-model error analysis over prediction reports
    Analyze {
        /// Prediction report JSONs produced by evaluate/predict
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Raw corpus TSV for attaching tweet text and profiles
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Majority fraction for the feature-family contrast
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

/// Prediction report written by `evaluate`/`predict` and read by `analyze`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub run_id: String,
    pub arch: ModelArch,
    pub feature: FeatureKind,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    seed: u64,
    /// content fingerprints (fnv1a64) of every input file
    inputs: BTreeMap<String, String>,
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    dispatch(cli.command)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Preprocess {
            input,
            output,
            config,
            data_dir,
        } => cmd_preprocess(&input, &output, config.as_deref(), data_dir),
        Command::Synth {
            n,
            ratio,
            seed,
            output,
        } => cmd_synth(n, ratio, seed, &output),
        Command::Train {
            arch,
            features,
            train,
            dev,
            upsample,
            common,
            hyper,
        } => cmd_train(&arch, &features, &train, dev.as_deref(), upsample, common, hyper),
        Command::Evaluate {
            model,
            data,
            run_id,
            common,
        } => cmd_evaluate(&model, &data, run_id, common),
        Command::Predict {
            model,
            data,
            common,
        } => cmd_predict(&model, &data, common),
        Command::Cv {
            arch,
            features,
            data,
            k,
            upsample,
            jobs,
            common,
            hyper,
        } => cmd_cv(&arch, &features, &data, k, upsample, jobs, common, hyper),
        Command::Gridsearch {
            arch,
            features,
            train,
            dev,
            jobs,
            common,
            hyper,
        } => cmd_gridsearch(&arch, &features, &train, &dev, jobs, common, hyper),
        Command::Analyze {
            runs,
            corpus,
            threshold,
            common,
        } => cmd_analyze(&runs, corpus.as_deref(), threshold, common),
    }
}

// --- shared helpers -----------------------------------------------------------

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => {
            require_file(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    Ok(cfg.with_env_defaults())
}

fn merge_common(cfg: &mut RunConfig, common: &CommonOpts) {
    if let Some(v) = &common.out {
        cfg.out_dir = Some(v.clone());
    }
    if let Some(v) = &common.data_dir {
        cfg.data_dir = Some(v.clone());
    }
    if let Some(v) = &common.embeddings {
        cfg.embeddings = Some(v.clone());
    }
    if let Some(v) = common.seed {
        cfg.seed = Some(v);
    }
}

fn merge_hyper(cfg: &mut RunConfig, hyper: &HyperOpts) -> Result<()> {
    if let Some(v) = hyper.epochs {
        cfg.epochs = Some(v);
    }
    if let Some(v) = hyper.dropout {
        cfg.dropout = Some(v);
    }
    if let Some(v) = hyper.hidden {
        cfg.hidden = Some(v);
    }
    if let Some(v) = hyper.layers {
        cfg.layers = Some(v);
    }
    if let Some(v) = hyper.lr {
        cfg.lr = Some(v);
    }
    if let Some(v) = hyper.batch {
        cfg.batch = Some(v);
    }
    if let Some(v) = hyper.max_len {
        cfg.max_len = Some(v);
    }
    if let Some(v) = hyper.buckets {
        cfg.buckets = Some(v);
    }
    if let Some(v) = &hyper.tfidf_mode {
        cfg.set("features", "tfidf_mode", v)?;
    }
    Ok(())
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "input file {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn parse_arch(s: &str) -> Result<ModelArch> {
    ModelArch::parse(s).ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
}

fn parse_feature(s: &str) -> Result<FeatureKind> {
    FeatureKind::parse(s).ok_or_else(|| Error::Config(format!("unknown feature kind {s:?}")))
}

/// `all` fans out to the five recurrent architectures.
fn parse_arch_list(s: &str) -> Result<Vec<ModelArch>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(ModelArch::RECURRENT.to_vec())
    } else {
        Ok(vec![parse_arch(s)?])
    }
}

fn config_hash(cfg: &RunConfig, command: &str) -> u64 {
    let payload = format!(
        "{command}\n{}",
        serde_json::to_string(cfg).unwrap_or_default()
    );
    fnv1a64(payload.as_bytes())
}

fn resolve_out_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = match &cfg.out_dir {
        Some(d) => d.clone(),
        None => {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from(format!("runs/{ts}-{:016x}", config_hash(cfg, command)))
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(format!("fnv1a64:{:016x}", fnv1a64(&bytes)))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    seed: u64,
    inputs: &[&Path],
) -> Result<()> {
    let mut hashed = BTreeMap::new();
    for path in inputs {
        hashed.insert(path.display().to_string(), file_fingerprint(path)?);
    }
    let manifest = Manifest {
        command,
        config: cfg,
        seed,
        inputs: hashed,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Evaluation(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_corpus_lenient(path: &Path) -> Result<Corpus> {
    require_file(path)?;
    // preprocessed corpora may contain texts that normalize to empty
    let (corpus, warnings) = corpus::load_tsv_with(
        path,
        LoadOptions {
            allow_empty_text: true,
        },
    )?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(corpus)
}

fn load_embedding_table(cfg: &RunConfig, needed: bool) -> Result<Option<Arc<EmbeddingTable>>> {
    match (&cfg.embeddings, needed) {
        (Some(path), _) => {
            require_file(path)?;
            Ok(Some(Arc::new(load_embeddings(path)?)))
        }
        (None, true) => Err(Error::Config(
            "ARAVEC features need --embeddings (or [paths] embeddings)".into(),
        )),
        (None, false) => Ok(None),
    }
}

fn preprocessed(corpus: &Corpus, pipeline: &Pipeline) -> Corpus {
    corpus.map_texts(|t| pipeline.apply(t))
}

// --- commands -------------------------------------------------------------------

fn cmd_preprocess(
    input: &Path,
    output: &Path,
    config: Option<&Path>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(d) = data_dir {
        cfg.data_dir = Some(d);
    }
    require_file(input)?;
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let corpus = load_corpus_lenient(input)?;
    let processed = preprocessed(&corpus, &pipeline);
    corpus::save_tsv(&processed, output)?;

    let manifest_path = output.with_extension("manifest.json");
    let mut hashed = BTreeMap::new();
    hashed.insert(input.display().to_string(), file_fingerprint(input)?);
    write_json(
        &manifest_path,
        &Manifest {
            command: "preprocess",
            config: &cfg,
            seed: 0,
            inputs: hashed,
        },
    )?;
    eprintln!("preprocessed {} tweets -> {}", processed.len(), output.display());
    Ok(())
}

fn cmd_synth(n: usize, ratio: f64, seed: u64, output: &Path) -> Result<()> {
    let corpus = generate_synthetic(n, seed, ratio)?;
    corpus::save_tsv(&corpus, output)?;
    let (off, not) = corpus.class_counts();
    eprintln!(
        "wrote {} synthetic tweets ({off} OFF / {not} NOT) -> {}",
        corpus.len(),
        output.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    arch: &str,
    features: &str,
    train_path: &Path,
    dev_path: Option<&Path>,
    upsample: bool,
    common: CommonOpts,
    hyper: HyperOpts,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    merge_hyper(&mut cfg, &hyper)?;
    if upsample {
        cfg.upsample = Some(true);
    }
    let arch = parse_arch(arch)?;
    let feature = parse_feature(features)?;
    cfg.arch = Some(arch);
    cfg.features = Some(feature);

    require_file(train_path)?;
    if let Some(p) = dev_path {
        require_file(p)?;
    }
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let embeddings = load_embedding_table(&cfg, feature == FeatureKind::Aravec)?;
    let spec = cfg.spec(arch, feature);

    let mut train = preprocessed(&load_corpus_lenient(train_path)?, &pipeline);
    if cfg.upsample.unwrap_or(false) {
        train = corpus::upsample_minority(&train, spec.hyper.seed)?;
    }
    let dev = dev_path
        .map(|p| Ok::<_, Error>(preprocessed(&load_corpus_lenient(p)?, &pipeline)))
        .transpose()?;

    let out_dir = resolve_out_dir(&cfg, "train")?;
    let model = train_model(&spec, &train, dev.as_ref(), embeddings.as_ref())?;
    model.save(out_dir.join("model.ckpt"))?;
    write_json(&out_dir.join("history.json"), &model.history)?;

    let mut inputs: Vec<&Path> = vec![train_path];
    if let Some(p) = dev_path {
        inputs.push(p);
    }
    if let Some(p) = &cfg.embeddings {
        inputs.push(p);
    }
    let input_refs: Vec<&Path> = inputs.clone();
    write_manifest(&out_dir, "train", &cfg, spec.hyper.seed, &input_refs)?;
    eprintln!(
        "trained {} + {} -> {}",
        arch.name(),
        feature.name(),
        out_dir.display()
    );
    Ok(())
}

fn load_model(cfg: &RunConfig, model_path: &Path) -> Result<(TrainedModel, Vec<PathBuf>)> {
    require_file(model_path)?;
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| Error::io(model_path.display().to_string(), e))?;
    let ckpt = crate::neural::Checkpoint::parse(&text)?;
    let needs_embeddings = ckpt.field("feature")? == "ARAVEC";
    let embeddings = load_embedding_table(cfg, needs_embeddings)?;
    let model = TrainedModel::from_checkpoint(&ckpt, embeddings.as_ref())?;
    let mut inputs = vec![model_path.to_path_buf()];
    if let Some(p) = &cfg.embeddings {
        inputs.push(p.clone());
    }
    Ok((model, inputs))
}

fn cmd_evaluate(
    model_path: &Path,
    data_path: &Path,
    run_id: Option<String>,
    common: CommonOpts,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    require_file(data_path)?;
    let (model, mut inputs) = load_model(&cfg, model_path)?;
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let test = load_corpus_lenient(data_path)?;
    inputs.push(data_path.to_path_buf());

    let out_dir = resolve_out_dir(&cfg, "evaluate")?;
    let (metrics, predictions) = evaluate_split(&model, &test, &pipeline)?;
    let run_id = run_id.unwrap_or_else(|| {
        model_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let report = RunReport {
        kind: "evaluate".into(),
        run_id,
        arch: model.spec.arch,
        feature: model.spec.feature,
        seed: model.spec.hyper.seed,
        metrics: Some(metrics),
        predictions,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&out_dir, "evaluate", &cfg, model.spec.hyper.seed, &input_refs)?;
    eprintln!(
        "macro-F1 {:.4} weighted-F1 {:.4} -> {}",
        metrics.macro_f1,
        metrics.weighted_f1,
        out_dir.display()
    );
    Ok(())
}

fn cmd_predict(model_path: &Path, data_path: &Path, common: CommonOpts) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    require_file(data_path)?;
    let (model, mut inputs) = load_model(&cfg, model_path)?;
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let data = load_corpus_lenient(data_path)?;
    inputs.push(data_path.to_path_buf());

    let texts: Vec<String> = data.iter().map(|t| pipeline.apply(&t.text)).collect();
    let preds = model.predict_texts(&texts)?;
    let predictions: Vec<PredictionRecord> = data
        .iter()
        .zip(preds)
        .map(|(tweet, (probability, pred))| PredictionRecord {
            id: tweet.id.clone(),
            gold: tweet.label,
            pred,
            probability,
        })
        .collect();

    let out_dir = resolve_out_dir(&cfg, "predict")?;
    let report = RunReport {
        kind: "predict".into(),
        run_id: model_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into()),
        arch: model.spec.arch,
        feature: model.spec.feature,
        seed: model.spec.hyper.seed,
        metrics: None,
        predictions,
    };
    write_json(&out_dir.join("predictions.json"), &report)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&out_dir, "predict", &cfg, model.spec.hyper.seed, &input_refs)?;
    eprintln!("predictions -> {}", out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cv(
    arch: &str,
    features: &str,
    data_path: &Path,
    k: Option<usize>,
    upsample: bool,
    jobs: Option<usize>,
    common: CommonOpts,
    hyper: HyperOpts,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    merge_hyper(&mut cfg, &hyper)?;
    if let Some(v) = k {
        cfg.k = Some(v);
    }
    if upsample {
        cfg.upsample = Some(true);
    }
    if let Some(v) = jobs {
        cfg.jobs = Some(v);
    }
    let archs = parse_arch_list(arch)?;
    let feature = parse_feature(features)?;
    cfg.features = Some(feature);

    require_file(data_path)?;
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let embeddings = load_embedding_table(&cfg, feature == FeatureKind::Aravec)?;
    let corpus = preprocessed(&load_corpus_lenient(data_path)?, &pipeline);
    let k = cfg.k.unwrap_or(10);
    let seed = cfg.seed.unwrap_or(42);
    let do_upsample = cfg.upsample.unwrap_or(false);
    let out_dir = resolve_out_dir(&cfg, "cv")?;

    let jobs = cfg.jobs.unwrap_or(1).max(1);
    let specs: Vec<ModelSpec> = archs.iter().map(|&a| cfg.spec(a, feature)).collect();
    run_jobs(jobs, &specs, |spec| {
        let report = cross_validate(spec, &corpus, k, seed, embeddings.as_ref(), do_upsample)?;
        write_json(
            &out_dir.join(format!("cv_{}.json", spec.arch.name())),
            &report,
        )?;
        eprintln!(
            "cv {}: macro-F1 {:.4} +/- {:.4}",
            spec.arch.name(),
            report.mean.macro_f1,
            report.std.macro_f1
        );
        Ok(())
    })?;

    write_manifest(&out_dir, "cv", &cfg, seed, &[data_path])?;
    eprintln!("cv reports -> {}", out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gridsearch(
    arch: &str,
    features: &str,
    train_path: &Path,
    dev_path: &Path,
    jobs: Option<usize>,
    common: CommonOpts,
    hyper: HyperOpts,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    merge_hyper(&mut cfg, &hyper)?;
    if let Some(v) = jobs {
        cfg.jobs = Some(v);
    }
    let archs = parse_arch_list(arch)?;
    let feature = parse_feature(features)?;
    cfg.features = Some(feature);

    require_file(train_path)?;
    require_file(dev_path)?;
    let pipeline = Pipeline::new(&cfg.pipeline_config()?)?;
    let embeddings = load_embedding_table(&cfg, feature == FeatureKind::Aravec)?;
    let train = preprocessed(&load_corpus_lenient(train_path)?, &pipeline);
    let dev = preprocessed(&load_corpus_lenient(dev_path)?, &pipeline);
    let out_dir = resolve_out_dir(&cfg, "gridsearch")?;

    let grid = GridSpec::default();
    let jobs = cfg.jobs.unwrap_or(1).max(1);
    let specs: Vec<ModelSpec> = archs.iter().map(|&a| cfg.spec(a, feature)).collect();
    run_jobs(jobs, &specs, |base| {
        use crate::models::{encode_sequences, FeatureArtifact};
        let texts: Vec<&str> = train.iter().map(|t| t.text.as_str()).collect();
        let artifact =
            FeatureArtifact::fit(feature, &base.feature_cfg, &texts, embeddings.as_ref())?;
        let train_enc = encode_sequences(&train, &artifact, base.hyper.max_len);
        let dev_enc = encode_sequences(&dev, &artifact, base.hyper.max_len);
        let result = grid_search(base.arch, &grid, base, &train_enc, &dev_enc)?;
        write_text(
            &out_dir.join(format!("grid_{}.tsv", base.arch.name())),
            &result.table_tsv(),
        )?;
        write_json(
            &out_dir.join(format!("grid_{}_best.json", base.arch.name())),
            &result.best,
        )?;
        eprintln!(
            "grid {}: best dropout {} layers {} hidden {}",
            base.arch.name(),
            result.best.hyper.dropout,
            result.best.hyper.layers,
            result.best.hyper.hidden
        );
        Ok(())
    })?;

    let seed = cfg.seed.unwrap_or(42);
    write_manifest(&out_dir, "gridsearch", &cfg, seed, &[train_path, dev_path])?;
    eprintln!("grid tables -> {}", out_dir.display());
    Ok(())
}

fn cmd_analyze(
    run_paths: &[PathBuf],
    corpus_path: Option<&Path>,
    threshold: Option<f64>,
    common: CommonOpts,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    merge_common(&mut cfg, &common);
    if let Some(t) = threshold {
        cfg.threshold = Some(t);
    }
    for p in run_paths {
        require_file(p)?;
    }
    if let Some(p) = corpus_path {
        require_file(p)?;
    }

    let mut runs = Vec::new();
    for path in run_paths {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let report: RunReport = serde_json::from_str(&text).map_err(|e| {
            Error::Analysis(format!("cannot parse run report {}: {e}", path.display()))
        })?;
        runs.push(PredictionRun::new(
            report.run_id,
            report.arch,
            report.feature,
            report.predictions,
        )?);
    }

    let raw_corpus = corpus_path.map(load_corpus_lenient).transpose()?;
    let mut report = misclassified_by_all(&runs)?;
    if let Some(corpus) = &raw_corpus {
        report.attach_texts(corpus)?;
    }

    let out_dir = resolve_out_dir(&cfg, "analyze")?;
    write_json(&out_dir.join("error_report.json"), &report)?;
    write_text(&out_dir.join("error_report.tsv"), &report.to_tsv())?;

    let threshold = cfg.threshold.unwrap_or(0.5);
    let tfidf: Vec<PredictionRun> = runs
        .iter()
        .filter(|r| r.feature == FeatureKind::Tfidf)
        .cloned()
        .collect();
    let aravec: Vec<PredictionRun> = runs
        .iter()
        .filter(|r| r.feature == FeatureKind::Aravec)
        .cloned()
        .collect();
    if !tfidf.is_empty() && !aravec.is_empty() {
        let (wrong_tfidf_right_aravec, wrong_aravec_right_tfidf) =
            feature_family_contrast(&tfidf, &aravec, threshold)?;
        let contrast = serde_json::json!({
            "threshold": threshold,
            "wrong_in_all_tfidf_right_in_most_aravec": wrong_tfidf_right_aravec,
            "wrong_in_all_aravec_right_in_most_tfidf": wrong_aravec_right_tfidf,
        });
        write_json(&out_dir.join("family_contrast.json"), &contrast)?;
    }
    if let Some(corpus) = &raw_corpus {
        let profile = length_and_repetition_profile(&report, corpus)?;
        write_json(&out_dir.join("error_profile.json"), &profile)?;
    }

    let mut inputs: Vec<&Path> = run_paths.iter().map(PathBuf::as_path).collect();
    if let Some(p) = corpus_path {
        inputs.push(p);
    }
    write_manifest(&out_dir, "analyze", &cfg, 0, &inputs)?;
    eprintln!(
        "shared errors: {} OFF->NOT, {} NOT->OFF -> {}",
        report.off_as_not_count,
        report.not_as_off_count,
        out_dir.display()
    );
    Ok(())
}

/// Run one closure per model spec, at most `jobs` at a time. Jobs share read-only
/// inputs; each writes its own uniquely named artifacts.
fn run_jobs<F>(jobs: usize, specs: &[ModelSpec], f: F) -> Result<()>
where
    F: Fn(&ModelSpec) -> Result<()> + Sync,
{
    if jobs <= 1 || specs.len() <= 1 {
        for spec in specs {
            f(spec)?;
        }
        return Ok(());
    }
    for wave in specs.chunks(jobs) {
        let results: Vec<Result<()>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave.iter().map(|spec| scope.spawn(|| f(spec))).collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        for r in results {
            r?;
        }
    }
    Ok(())
}
