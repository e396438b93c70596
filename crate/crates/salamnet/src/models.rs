//! Model assembly and training: the logistic-regression baseline and the
//! five recurrent classifiers, with feature wiring, checkpointing and grid
//! search.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::eval;
use crate::features::{
    doc_vector_sequence, encode_sequence, fit_char_tfidf, hash_ngram_sequence, mean_pool,
    transform_tfidf, EmbeddingTable, SequenceTensor, SparseVector, TfidfModel,
};
use crate::neural::checkpoint::{Checkpoint, NamedTensor};
use crate::neural::classifier::backward_into;
use crate::neural::{
    adam_step, dropout_mask, forward, AdamConfig, AdamState, CellKind, ClassifierParams,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelArch {
    Lr,
    Rnn,
    Gru,
    BiGru,
    Lstm,
    BiLstm,
}

impl ModelArch {
    pub const RECURRENT: [ModelArch; 5] = [
        ModelArch::Rnn,
        ModelArch::Gru,
        ModelArch::BiGru,
        ModelArch::Lstm,
        ModelArch::BiLstm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelArch::Lr => "LR",
            ModelArch::Rnn => "RNN",
            ModelArch::Gru => "GRU",
            ModelArch::BiGru => "BIGRU",
            ModelArch::Lstm => "LSTM",
            ModelArch::BiLstm => "BILSTM",
        }
    }

    pub fn parse(s: &str) -> Option<ModelArch> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Some(ModelArch::Lr),
            "RNN" => Some(ModelArch::Rnn),
            "GRU" => Some(ModelArch::Gru),
            "BIGRU" | "BI-GRU" => Some(ModelArch::BiGru),
            "LSTM" => Some(ModelArch::Lstm),
            "BILSTM" | "BI-LSTM" => Some(ModelArch::BiLstm),
            _ => None,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        *self != ModelArch::Lr
    }

    pub fn cell_kind(&self) -> Option<CellKind> {
        match self {
            ModelArch::Lr => None,
            ModelArch::Rnn => Some(CellKind::Rnn),
            ModelArch::Gru | ModelArch::BiGru => Some(CellKind::Gru),
            ModelArch::Lstm | ModelArch::BiLstm => Some(CellKind::Lstm),
        }
    }

    pub fn bidirectional(&self) -> bool {
        matches!(self, ModelArch::BiGru | ModelArch::BiLstm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureKind {
    Tfidf,
    Aravec,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Tfidf => "TFIDF",
            FeatureKind::Aravec => "ARAVEC",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKind> {
        match s.to_ascii_uppercase().as_str() {
            "TFIDF" | "TF-IDF" => Some(FeatureKind::Tfidf),
            "ARAVEC" | "EMBEDDING" | "EMBEDDINGS" => Some(FeatureKind::Aravec),
            _ => None,
        }
    }
}

/// How a TF-IDF model becomes a token sequence for the recurrent models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfidfMode {
    /// Per-token hashed n-gram vectors (the default bridge).
    #[default]
    Hashed,
    /// Whole document vector as a length-1 sequence.
    DocVec,
}

impl TfidfMode {
    pub fn name(&self) -> &'static str {
        match self {
            TfidfMode::Hashed => "hashed",
            TfidfMode::DocVec => "docvec",
        }
    }

    pub fn parse(s: &str) -> Option<TfidfMode> {
        match s.to_ascii_lowercase().as_str() {
            "hashed" => Some(TfidfMode::Hashed),
            "docvec" => Some(TfidfMode::DocVec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub batch: usize,
    pub max_len: usize,
    pub seed: u64,
}

const LR_L2_LAMBDA: f64 = 1e-4;
const LR_PATIENCE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub buckets: usize,
    pub tfidf_mode: TfidfMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            buckets: 256,
            tfidf_mode: TfidfMode::Hashed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: ModelArch,
    pub feature: FeatureKind,
    pub hyper: Hyper,
    pub feature_cfg: FeatureConfig,
}

impl ModelSpec {
    /// Final settings per architecture: epochs 50 and dropout 0.5 for every
    /// recurrent model, hidden 300 with 2 layers for the RNN, hidden 100
    /// with 1 layer for GRU/Bi-GRU/LSTM/Bi-LSTM. The LR baseline runs plain
    /// mini-batch gradient descent for up to 500 epochs.
    pub fn defaults(arch: ModelArch, feature: FeatureKind) -> ModelSpec {
        let hyper = match arch {
            ModelArch::Lr => Hyper {
                epochs: 500,
                dropout: 0.0,
                hidden: 0,
                layers: 0,
                lr: 0.1,
                batch: 32,
                max_len: 50,
                seed: 42,
            },
            ModelArch::Rnn => Hyper {
                epochs: 50,
                dropout: 0.5,
                hidden: 300,
                layers: 2,
                lr: 1e-3,
                batch: 32,
                max_len: 50,
                seed: 42,
            },
            _ => Hyper {
                epochs: 50,
                dropout: 0.5,
                hidden: 100,
                layers: 1,
                lr: 1e-3,
                batch: 32,
                max_len: 50,
                seed: 42,
            },
        };
        ModelSpec {
            arch,
            feature,
            hyper,
            feature_cfg: FeatureConfig::default(),
        }
    }
}

/// Fitted feature state owned by a trained model.
#[derive(Debug, Clone)]
pub enum FeatureArtifact {
    TfidfHashed { model: TfidfModel, buckets: usize },
    TfidfDocVec { model: TfidfModel },
    Embeddings { table: Arc<EmbeddingTable> },
}

impl FeatureArtifact {
    /// Fit from training texts (TF-IDF) or wrap the shared table (AraVec).
    pub fn fit<S: AsRef<str>>(
        feature: FeatureKind,
        cfg: &FeatureConfig,
        train_texts: &[S],
        embeddings: Option<&Arc<EmbeddingTable>>,
    ) -> Result<FeatureArtifact> {
        match feature {
            FeatureKind::Tfidf => {
                let model = fit_char_tfidf(train_texts)?;
                Ok(match cfg.tfidf_mode {
                    TfidfMode::Hashed => FeatureArtifact::TfidfHashed {
                        model,
                        buckets: cfg.buckets,
                    },
                    TfidfMode::DocVec => FeatureArtifact::TfidfDocVec { model },
                })
            }
            FeatureKind::Aravec => {
                let table = embeddings.ok_or_else(|| {
                    Error::Config("ARAVEC features need an embedding file".into())
                })?;
                Ok(FeatureArtifact::Embeddings {
                    table: Arc::clone(table),
                })
            }
        }
    }

    /// Width of the per-timestep input vector.
    pub fn sequence_dim(&self) -> usize {
        match self {
            FeatureArtifact::TfidfHashed { buckets, .. } => *buckets,
            FeatureArtifact::TfidfDocVec { model } => model.dim(),
            FeatureArtifact::Embeddings { table } => table.dim,
        }
    }

    /// Width of the document vector used by the LR baseline.
    pub fn vector_dim(&self) -> usize {
        match self {
            FeatureArtifact::TfidfHashed { model, .. }
            | FeatureArtifact::TfidfDocVec { model } => model.dim(),
            FeatureArtifact::Embeddings { table } => table.dim,
        }
    }

    pub fn encode_sequence(&self, text: &str, max_len: usize) -> SequenceTensor {
        match self {
            FeatureArtifact::TfidfHashed { model, buckets } => {
                let truncated = truncate_tokens(text, max_len);
                hash_ngram_sequence(&truncated, model, *buckets)
            }
            FeatureArtifact::TfidfDocVec { model } => doc_vector_sequence(text, model),
            FeatureArtifact::Embeddings { table } => encode_sequence(text, table, max_len),
        }
    }

    pub fn encode_vector(&self, text: &str) -> SparseVector {
        match self {
            FeatureArtifact::TfidfHashed { model, .. }
            | FeatureArtifact::TfidfDocVec { model } => transform_tfidf(model, text),
            FeatureArtifact::Embeddings { table } => {
                SparseVector::from_dense(&mean_pool(table, text))
            }
        }
    }

    fn tfidf_model(&self) -> Option<&TfidfModel> {
        match self {
            FeatureArtifact::TfidfHashed { model, .. }
            | FeatureArtifact::TfidfDocVec { model } => Some(model),
            FeatureArtifact::Embeddings { .. } => None,
        }
    }
}

fn truncate_tokens(text: &str, max_len: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().take(max_len).collect();
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrParams {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub enum ModelParams {
    Logistic(LrParams),
    Recurrent(ClassifierParams),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub dev_macro_f1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub artifact: FeatureArtifact,
    pub history: TrainingHistory,
}

/// OFF wins the tie at exactly 0.5.
pub fn label_for(probability: f64) -> Label {
    if probability >= 0.5 {
        Label::Off
    } else {
        Label::Not
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::neural::linalg::sigmoid(x)
}

/// Logistic regression trained by seeded mini-batch gradient descent on
/// binary cross-entropy with an L2 penalty (1e-4, bias excluded). With a
/// dev set, keeps the best-dev-macro-F1 parameters and stops early after
/// 25 epochs without improvement.
pub fn train_logistic(
    x: &[SparseVector],
    y: &[Label],
    hyper: &Hyper,
    dev: Option<(&[SparseVector], &[Label])>,
) -> Result<(LrParams, TrainingHistory)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training(format!(
            "need matching non-empty inputs, got {} examples and {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].dim;
    if x.iter().any(|v| v.dim != dim) {
        return Err(Error::Training("inconsistent feature dimensions".into()));
    }

    let mut rng = Rng::seed_from_u64(hyper.seed);
    let mut params = LrParams {
        w: vec![0.0; dim],
        b: 0.0,
    };
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, LrParams)> = None;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..x.len()).collect();
    for _epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch.max(1)) {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            for &i in chunk {
                let p = sigmoid(x[i].dot_dense(&params.w) + params.b);
                let d = p - y[i].target();
                for &(j, v) in x[i].entries() {
                    grad_w[j] += d * v;
                }
                grad_b += d;
                epoch_loss += crate::neural::bce_loss(p, y[i].target());
            }
            let scale = 1.0 / chunk.len() as f64;
            for (wj, gj) in params.w.iter_mut().zip(&grad_w) {
                *wj -= hyper.lr * (gj * scale + LR_L2_LAMBDA * *wj);
            }
            params.b -= hyper.lr * grad_b * scale;
        }
        history.train_loss.push(epoch_loss / x.len() as f64);

        if let Some((dev_x, dev_y)) = dev {
            let preds: Vec<Label> = dev_x
                .iter()
                .map(|v| label_for(sigmoid(v.dot_dense(&params.w) + params.b)))
                .collect();
            let cm = eval::confusion(&preds, dev_y)?;
            let f1 = eval::compute_metrics(&cm).macro_f1;
            history.dev_macro_f1.push(f1);
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= LR_PATIENCE {
                    break;
                }
            }
        }
    }
    let final_params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((final_params, history))
}

pub fn predict_logistic(params: &LrParams, inputs: &[SparseVector]) -> Result<Vec<(f64, Label)>> {
    for v in inputs {
        if v.dim != params.w.len() {
            return Err(Error::Prediction(format!(
                "input dimension {} != model dimension {}",
                v.dim,
                params.w.len()
            )));
        }
    }
    Ok(inputs
        .iter()
        .map(|v| {
            let p = sigmoid(v.dot_dense(&params.w) + params.b);
            (p, label_for(p))
        })
        .collect())
}

/// Train a recurrent classifier: seeded shuffled mini-batches, Adam
/// updates, per-epoch train loss. With a non-empty dev set the parameters
/// from the best dev-macro-F1 epoch are returned; otherwise the final
/// epoch's.
pub fn train_recurrent(
    spec: &ModelSpec,
    train: &[(SequenceTensor, Label)],
    dev: &[(SequenceTensor, Label)],
) -> Result<(ClassifierParams, TrainingHistory)> {
    let kind = spec
        .arch
        .cell_kind()
        .ok_or_else(|| Error::Training("train_recurrent needs a recurrent arch".into()))?;
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let input_dim = train[0].0.dim;
    let mut rng = Rng::seed_from_u64(spec.hyper.seed);
    let mut params = ClassifierParams::init(
        kind,
        input_dim,
        spec.hyper.hidden,
        spec.hyper.layers,
        spec.arch.bidirectional(),
        spec.hyper.dropout,
        &mut rng,
    )?;
    let mut state = AdamState::for_params(&params);
    let cfg = AdamConfig::with_lr(spec.hyper.lr);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, ClassifierParams)> = None;

    let width = params.head_width();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = params.zeros_like();
    for epoch in 0..spec.hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(spec.hyper.batch.max(1)) {
            grads.zero_out();
            for &i in chunk {
                let (seq, label) = &train[i];
                let mask = dropout_mask(width, spec.hyper.dropout, &mut rng)?;
                let (loss, _) = backward_into(&params, seq, label.target(), &mask, &mut grads)
                    .map_err(|e| match e {
                        Error::Numeric { msg, .. } => Error::Numeric { epoch, msg },
                        other => other,
                    })?;
                epoch_loss += loss;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(&mut params, &grads, &mut state, &cfg)?;
        }
        let mean_loss = epoch_loss / train.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric {
                epoch,
                msg: "non-finite epoch loss".into(),
            });
        }
        history.train_loss.push(mean_loss);

        if !dev.is_empty() {
            let preds: Vec<Label> = dev
                .iter()
                .map(|(seq, _)| Ok(label_for(forward(&params, seq)?)))
                .collect::<Result<_>>()?;
            let golds: Vec<Label> = dev.iter().map(|(_, l)| *l).collect();
            let cm = eval::confusion(&preds, &golds)?;
            let f1 = eval::compute_metrics(&cm).macro_f1;
            history.dev_macro_f1.push(f1);
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, params.clone()));
            }
        }
    }
    let final_params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((final_params, history))
}

pub fn predict_recurrent(
    params: &ClassifierParams,
    inputs: &[SequenceTensor],
) -> Result<Vec<(f64, Label)>> {
    inputs
        .iter()
        .map(|seq| {
            let p = forward(params, seq).map_err(|e| match e {
                Error::Dimension(msg) => Error::Prediction(msg),
                other => other,
            })?;
            Ok((p, label_for(p)))
        })
        .collect()
}

pub fn encode_sequences(
    corpus: &Corpus,
    artifact: &FeatureArtifact,
    max_len: usize,
) -> Vec<(SequenceTensor, Label)> {
    corpus
        .iter()
        .map(|t| (artifact.encode_sequence(&t.text, max_len), t.label))
        .collect()
}

pub fn encode_vectors(corpus: &Corpus, artifact: &FeatureArtifact) -> Vec<(SparseVector, Label)> {
    corpus
        .iter()
        .map(|t| (artifact.encode_vector(&t.text), t.label))
        .collect()
}

/// Fit features on `train`, then train per the model spec. `dev` drives
/// best-epoch selection (and early stopping for LR) when given. Texts are
/// assumed preprocessed.
pub fn train_model(
    spec: &ModelSpec,
    train: &Corpus,
    dev: Option<&Corpus>,
    embeddings: Option<&Arc<EmbeddingTable>>,
) -> Result<TrainedModel> {
    let texts: Vec<&str> = train.iter().map(|t| t.text.as_str()).collect();
    let artifact = FeatureArtifact::fit(spec.feature, &spec.feature_cfg, &texts, embeddings)?;

    if spec.arch.is_recurrent() {
        let train_enc = encode_sequences(train, &artifact, spec.hyper.max_len);
        let dev_enc = dev
            .map(|d| encode_sequences(d, &artifact, spec.hyper.max_len))
            .unwrap_or_default();
        let (params, history) = train_recurrent(spec, &train_enc, &dev_enc)?;
        Ok(TrainedModel {
            spec: spec.clone(),
            params: ModelParams::Recurrent(params),
            artifact,
            history,
        })
    } else {
        let (x, y): (Vec<SparseVector>, Vec<Label>) =
            encode_vectors(train, &artifact).into_iter().unzip();
        let dev_enc: Option<(Vec<SparseVector>, Vec<Label>)> =
            dev.map(|d| encode_vectors(d, &artifact).into_iter().unzip());
        let dev_ref = dev_enc
            .as_ref()
            .map(|(dx, dy)| (dx.as_slice(), dy.as_slice()));
        let (params, history) = train_logistic(&x, &y, &spec.hyper, dev_ref)?;
        Ok(TrainedModel {
            spec: spec.clone(),
            params: ModelParams::Logistic(params),
            artifact,
            history,
        })
    }
}

impl TrainedModel {
    /// Featurize with the model's own artifacts and predict; batch order is
    /// preserved.
    pub fn predict_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<(f64, Label)>> {
        match &self.params {
            ModelParams::Logistic(lr) => {
                let inputs: Vec<SparseVector> = texts
                    .iter()
                    .map(|t| self.artifact.encode_vector(t.as_ref()))
                    .collect();
                predict_logistic(lr, &inputs)
            }
            ModelParams::Recurrent(params) => {
                let inputs: Vec<SequenceTensor> = texts
                    .iter()
                    .map(|t| self.artifact.encode_sequence(t.as_ref(), self.spec.hyper.max_len))
                    .collect();
                predict_recurrent(params, &inputs)
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        let f = &mut ckpt.fields;
        f.insert("arch".into(), self.spec.arch.name().into());
        f.insert("feature".into(), self.spec.feature.name().into());
        f.insert("epochs".into(), self.spec.hyper.epochs.to_string());
        f.insert("dropout".into(), format!("{:.16e}", self.spec.hyper.dropout));
        f.insert("hidden".into(), self.spec.hyper.hidden.to_string());
        f.insert("layers".into(), self.spec.hyper.layers.to_string());
        f.insert("lr".into(), format!("{:.16e}", self.spec.hyper.lr));
        f.insert("batch".into(), self.spec.hyper.batch.to_string());
        f.insert("max_len".into(), self.spec.hyper.max_len.to_string());
        f.insert("seed".into(), self.spec.hyper.seed.to_string());
        f.insert("buckets".into(), self.spec.feature_cfg.buckets.to_string());
        f.insert(
            "tfidf_mode".into(),
            self.spec.feature_cfg.tfidf_mode.name().into(),
        );
        f.insert(
            "bidirectional".into(),
            self.spec.arch.bidirectional().to_string(),
        );

        match &self.params {
            ModelParams::Logistic(lr) => {
                ckpt.fields
                    .insert("input_dim".into(), lr.w.len().to_string());
                ckpt.tensors.push(NamedTensor {
                    name: "head.w".into(),
                    rows: 1,
                    cols: lr.w.len(),
                    data: lr.w.clone(),
                });
                ckpt.tensors.push(NamedTensor {
                    name: "head.b".into(),
                    rows: 1,
                    cols: 1,
                    data: vec![lr.b],
                });
            }
            ModelParams::Recurrent(params) => {
                ckpt.fields
                    .insert("input_dim".into(), params.input_dim.to_string());
                let meta = params.tensor_meta();
                for ((name, rows, cols), data) in meta.into_iter().zip(params.tensors()) {
                    ckpt.tensors.push(NamedTensor {
                        name,
                        rows,
                        cols,
                        data: data.to_vec(),
                    });
                }
            }
        }
        if let Some(model) = self.artifact.tfidf_model() {
            ckpt.blobs.push(("tfidf".into(), model.to_tsv()));
        }
        if let FeatureArtifact::Embeddings { table } = &self.artifact {
            ckpt.fields
                .insert("embedding_dim".into(), table.dim.to_string());
        }
        ckpt
    }

    /// Rebuild a model from a checkpoint. ARAVEC models need the embedding
    /// table supplied by the caller.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        embeddings: Option<&Arc<EmbeddingTable>>,
    ) -> Result<TrainedModel> {
        let arch = ModelArch::parse(ckpt.field("arch")?)
            .ok_or_else(|| Error::Checkpoint("unknown arch".into()))?;
        let feature = FeatureKind::parse(ckpt.field("feature")?)
            .ok_or_else(|| Error::Checkpoint("unknown feature kind".into()))?;
        let hyper = Hyper {
            epochs: ckpt.parse_field("epochs")?,
            dropout: ckpt.parse_field("dropout")?,
            hidden: ckpt.parse_field("hidden")?,
            layers: ckpt.parse_field("layers")?,
            lr: ckpt.parse_field("lr")?,
            batch: ckpt.parse_field("batch")?,
            max_len: ckpt.parse_field("max_len")?,
            seed: ckpt.parse_field("seed")?,
        };
        let feature_cfg = FeatureConfig {
            buckets: ckpt.parse_field("buckets")?,
            tfidf_mode: TfidfMode::parse(ckpt.field("tfidf_mode")?)
                .ok_or_else(|| Error::Checkpoint("unknown tfidf_mode".into()))?,
        };
        let spec = ModelSpec {
            arch,
            feature,
            hyper,
            feature_cfg,
        };

        let artifact = match feature {
            FeatureKind::Tfidf => {
                let blob = ckpt
                    .blob("tfidf")
                    .ok_or_else(|| Error::Checkpoint("missing tfidf section".into()))?;
                let model = TfidfModel::parse_tsv(blob)?;
                match feature_cfg.tfidf_mode {
                    TfidfMode::Hashed => FeatureArtifact::TfidfHashed {
                        model,
                        buckets: feature_cfg.buckets,
                    },
                    TfidfMode::DocVec => FeatureArtifact::TfidfDocVec { model },
                }
            }
            FeatureKind::Aravec => {
                let table = embeddings.ok_or_else(|| {
                    Error::Checkpoint("this checkpoint needs an embedding file".into())
                })?;
                let expect: usize = ckpt.parse_field("embedding_dim")?;
                if table.dim != expect {
                    return Err(Error::Checkpoint(format!(
                        "embedding dim {} != checkpoint dim {expect}",
                        table.dim
                    )));
                }
                FeatureArtifact::Embeddings {
                    table: Arc::clone(table),
                }
            }
        };

        let params = if arch.is_recurrent() {
            let input_dim: usize = ckpt.parse_field("input_dim")?;
            let mut rng = Rng::seed_from_u64(0);
            let mut params = ClassifierParams::init(
                arch.cell_kind().unwrap(),
                input_dim,
                spec.hyper.hidden,
                spec.hyper.layers,
                arch.bidirectional(),
                spec.hyper.dropout,
                &mut rng,
            )?;
            let meta = params.tensor_meta();
            for ((name, rows, cols), slot) in meta.into_iter().zip(params.tensors_mut()) {
                let tensor = ckpt.tensor(&name)?;
                if tensor.rows != rows || tensor.cols != cols {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name} has shape {}x{}, expected {rows}x{cols}",
                        tensor.rows, tensor.cols
                    )));
                }
                slot.copy_from_slice(&tensor.data);
            }
            ModelParams::Recurrent(params)
        } else {
            let w = ckpt.tensor("head.w")?.data.clone();
            let b = ckpt.tensor("head.b")?.data[0];
            ModelParams::Logistic(LrParams { w, b })
        };

        Ok(TrainedModel {
            spec,
            params,
            artifact,
            history: TrainingHistory::default(),
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint().render())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(
        path: impl AsRef<std::path::Path>,
        embeddings: Option<&Arc<EmbeddingTable>>,
    ) -> Result<TrainedModel> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let ckpt = Checkpoint::parse(&content)?;
        TrainedModel::from_checkpoint(&ckpt, embeddings)
    }
}

// --- grid search ------------------------------------------------------------

/// Search space: dropout in steps of 0.25 over [0.25, 0.99] (endpoint
/// included), 1-2 layers, hidden sizes 50-300.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dropouts: Vec<f64>,
    pub layers: Vec<usize>,
    pub hiddens: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dropouts: vec![0.25, 0.5, 0.75, 0.99],
            layers: vec![1, 2],
            hiddens: vec![50, 100, 200, 300],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub dropout: f64,
    pub layers: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEntry {
    pub point: GridPoint,
    /// Dev accuracy; absent when training failed at this point.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: ModelSpec,
    pub table: Vec<GridEntry>,
}

impl GridSearchResult {
    /// `dropout<TAB>layers<TAB>hidden<TAB>accuracy` rows; failed points get
    /// `nan`.
    pub fn table_tsv(&self) -> String {
        let mut out = String::from("dropout\tlayers\thidden\taccuracy\n");
        for e in &self.table {
            let acc = match e.accuracy {
                Some(a) => format!("{a:.6}"),
                None => "nan".to_string(),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.point.dropout, e.point.layers, e.point.hidden, acc
            ));
        }
        out
    }
}

/// Train one model per grid point and select by dev accuracy; ties go to
/// lower dropout, then fewer layers, then smaller hidden size (the points
/// are visited in that order, and only a strictly better accuracy
/// replaces the incumbent). Per-point training failures are recorded and
/// the search continues.
pub fn grid_search(
    arch: ModelArch,
    grid: &GridSpec,
    base: &ModelSpec,
    train: &[(SequenceTensor, Label)],
    dev: &[(SequenceTensor, Label)],
) -> Result<GridSearchResult> {
    if !arch.is_recurrent() {
        return Err(Error::Config(
            "grid search applies to the recurrent architectures".into(),
        ));
    }
    if grid.dropouts.is_empty() || grid.layers.is_empty() || grid.hiddens.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    if dev.is_empty() {
        return Err(Error::Config("grid search needs a dev set".into()));
    }

    let mut dropouts = grid.dropouts.clone();
    dropouts.sort_by(f64::total_cmp);
    let mut layer_opts = grid.layers.clone();
    layer_opts.sort_unstable();
    let mut hiddens = grid.hiddens.clone();
    hiddens.sort_unstable();

    let golds: Vec<Label> = dev.iter().map(|(_, l)| *l).collect();
    let mut table = Vec::new();
    let mut best: Option<(f64, ModelSpec)> = None;

    for &dropout in &dropouts {
        for &layers in &layer_opts {
            for &hidden in &hiddens {
                let mut spec = base.clone();
                spec.arch = arch;
                spec.hyper.dropout = dropout;
                spec.hyper.layers = layers;
                spec.hyper.hidden = hidden;
                let point = GridPoint {
                    dropout,
                    layers,
                    hidden,
                };
                match train_recurrent(&spec, train, &[]) {
                    Ok((params, _)) => {
                        let preds: Vec<Label> = dev
                            .iter()
                            .map(|(seq, _)| Ok(label_for(forward(&params, seq)?)))
                            .collect::<Result<_>>()?;
                        let cm = eval::confusion(&preds, &golds)?;
                        let accuracy = eval::compute_metrics(&cm).accuracy;
                        if best.as_ref().is_none_or(|(b, _)| accuracy > *b) {
                            best = Some((accuracy, spec.clone()));
                        }
                        table.push(GridEntry {
                            point,
                            accuracy: Some(accuracy),
                            error: None,
                        });
                    }
                    Err(e) => table.push(GridEntry {
                        point,
                        accuracy: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
        }
    }

    let best = best
        .map(|(_, spec)| spec)
        .ok_or_else(|| Error::Training("every grid point failed to train".into()))?;
    Ok(GridSearchResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SplitTag, Tweet};

    fn sv(values: &[f64]) -> SparseVector {
        SparseVector::from_dense(values)
    }

    #[test]
    fn spec_defaults_match_final_settings() {
        let rnn = ModelSpec::defaults(ModelArch::Rnn, FeatureKind::Tfidf);
        assert_eq!(rnn.hyper.hidden, 300);
        assert_eq!(rnn.hyper.layers, 2);
        assert_eq!(rnn.hyper.epochs, 50);
        assert_eq!(rnn.hyper.dropout, 0.5);
        for arch in [
            ModelArch::Gru,
            ModelArch::BiGru,
            ModelArch::Lstm,
            ModelArch::BiLstm,
        ] {
            let spec = ModelSpec::defaults(arch, FeatureKind::Aravec);
            assert_eq!(spec.hyper.hidden, 100);
            assert_eq!(spec.hyper.layers, 1);
            assert_eq!(spec.hyper.epochs, 50);
            assert_eq!(spec.hyper.dropout, 0.5);
        }
    }

    #[test]
    fn logistic_separates_two_points() {
        let x = vec![sv(&[1.0]), sv(&[-1.0])];
        let y = vec![Label::Off, Label::Not];
        let mut hyper = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf).hyper;
        hyper.epochs = 100;
        let (params, _) = train_logistic(&x, &y, &hyper, None).unwrap();
        let preds = predict_logistic(&params, &x).unwrap();
        assert_eq!(preds[0].1, Label::Off);
        assert_eq!(preds[1].1, Label::Not);
    }

    #[test]
    fn logistic_single_class_predicts_it_everywhere() {
        let x = vec![sv(&[0.5, 1.0]), sv(&[-0.3, 0.2]), sv(&[0.1, -0.9])];
        let y = vec![Label::Not; 3];
        let mut hyper = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf).hyper;
        hyper.epochs = 200;
        let (params, _) = train_logistic(&x, &y, &hyper, None).unwrap();
        for (_, label) in predict_logistic(&params, &x).unwrap() {
            assert_eq!(label, Label::Not);
        }
    }

    #[test]
    fn logistic_matches_weight_grid_oracle_on_blobs() {
        let mut rng = Rng::seed_from_u64(20);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let off = i % 2 == 0;
            let (cx, cy) = if off { (1.0, 1.0) } else { (-1.0, -1.0) };
            x.push(sv(&[cx + rng.uniform(-0.8, 0.8), cy + rng.uniform(-0.8, 0.8)]));
            y.push(if off { Label::Off } else { Label::Not });
        }
        let mut hyper = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf).hyper;
        hyper.epochs = 300;
        let (params, _) = train_logistic(&x, &y, &hyper, None).unwrap();
        let preds = predict_logistic(&params, &x).unwrap();
        let lr_acc = preds
            .iter()
            .zip(&y)
            .filter(|((_, p), g)| p == *g)
            .count() as f64
            / 20.0;

        // brute-force grid over (w0, w1, b)
        let mut oracle_acc = 0.0f64;
        let grid: Vec<f64> = (-8..=8).map(|v| v as f64 * 0.25).collect();
        for &w0 in &grid {
            for &w1 in &grid {
                for &b in &grid {
                    let acc = x
                        .iter()
                        .zip(&y)
                        .filter(|(v, g)| {
                            let d = v.to_dense();
                            let p = w0 * d[0] + w1 * d[1] + b >= 0.0;
                            p == (**g == Label::Off)
                        })
                        .count() as f64
                        / 20.0;
                    oracle_acc = oracle_acc.max(acc);
                }
            }
        }
        assert!(
            lr_acc >= oracle_acc - 0.05,
            "lr {lr_acc} vs oracle {oracle_acc}"
        );
    }

    #[test]
    fn logistic_deterministic_under_seed() {
        let x = vec![sv(&[1.0, 0.2]), sv(&[-1.0, 0.4]), sv(&[0.3, -0.8])];
        let y = vec![Label::Off, Label::Not, Label::Not];
        let hyper = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf).hyper;
        let (a, _) = train_logistic(&x, &y, &hyper, None).unwrap();
        let (b, _) = train_logistic(&x, &y, &hyper, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logistic_dimension_mismatch_errors() {
        let x = vec![sv(&[1.0]), sv(&[1.0, 2.0])];
        let y = vec![Label::Off, Label::Not];
        let hyper = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf).hyper;
        assert!(train_logistic(&x, &y, &hyper, None).is_err());
    }

    fn marker_task(
        n: usize,
        seed: u64,
    ) -> (Vec<(SequenceTensor, Label)>, Vec<(SequenceTensor, Label)>) {
        // label = presence of a marker token; tiny synthetic embedding table
        let table = Arc::new(
            EmbeddingTable::from_rows(
                4,
                vec![
                    ("m", vec![1.0, 0.0, 0.0, 0.0]),
                    ("a", vec![0.0, 1.0, 0.0, 0.0]),
                    ("b", vec![0.0, 0.0, 1.0, 0.0]),
                    ("c", vec![0.0, 0.0, 0.0, 1.0]),
                ],
            )
            .unwrap(),
        );
        let mut rng = Rng::seed_from_u64(seed);
        let noise = ["a", "b", "c"];
        let mut items = Vec::new();
        for i in 0..n {
            let len = 3 + rng.below(3);
            let mut toks: Vec<&str> = (0..len).map(|_| noise[rng.below(3)]).collect();
            let off = i % 3 == 0;
            if off {
                let pos = rng.below(toks.len());
                toks[pos] = "m";
            }
            let text = toks.join(" ");
            items.push((
                encode_sequence(&text, &table, 10),
                if off { Label::Off } else { Label::Not },
            ));
        }
        let split = n * 4 / 5;
        let dev = items.split_off(split);
        (items, dev)
    }

    #[test]
    fn recurrent_learns_marker_task() {
        let (train, dev) = marker_task(120, 7);
        for arch in [ModelArch::Gru, ModelArch::BiLstm] {
            let mut spec = ModelSpec::defaults(arch, FeatureKind::Aravec);
            spec.hyper.hidden = 8;
            spec.hyper.layers = 1;
            spec.hyper.epochs = 60;
            spec.hyper.lr = 0.01;
            spec.hyper.dropout = 0.1;
            let (params, history) = train_recurrent(&spec, &train, &dev).unwrap();
            // loss trends down over the first epochs
            assert!(
                history.train_loss[4] < history.train_loss[0],
                "{arch:?}: {:?}",
                &history.train_loss[..5]
            );
            let preds = predict_recurrent(&params, &dev.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>())
                .unwrap();
            let golds: Vec<Label> = dev.iter().map(|(_, l)| *l).collect();
            let cm = eval::confusion(
                &preds.iter().map(|(_, l)| *l).collect::<Vec<_>>(),
                &golds,
            )
            .unwrap();
            let f1 = eval::compute_metrics(&cm).macro_f1;
            assert!(f1 >= 0.95, "{arch:?} reached only {f1}");
        }
    }

    #[test]
    fn recurrent_zero_epochs_returns_init() {
        let (train, _) = marker_task(30, 9);
        let mut spec = ModelSpec::defaults(ModelArch::Gru, FeatureKind::Aravec);
        spec.hyper.hidden = 4;
        spec.hyper.epochs = 0;
        let (params, history) = train_recurrent(&spec, &train, &[]).unwrap();
        assert!(history.train_loss.is_empty());
        let mut rng = Rng::seed_from_u64(spec.hyper.seed);
        let expect = ClassifierParams::init(
            CellKind::Gru,
            train[0].0.dim,
            4,
            1,
            false,
            spec.hyper.dropout,
            &mut rng,
        )
        .unwrap();
        assert_eq!(params, expect);
    }

    #[test]
    fn recurrent_training_is_deterministic() {
        let (train, dev) = marker_task(40, 11);
        let mut spec = ModelSpec::defaults(ModelArch::Lstm, FeatureKind::Aravec);
        spec.hyper.hidden = 5;
        spec.hyper.epochs = 3;
        let (a, ha) = train_recurrent(&spec, &train, &dev).unwrap();
        let (b, hb) = train_recurrent(&spec, &train, &dev).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.train_loss, hb.train_loss);
        assert_eq!(ha.dev_macro_f1, hb.dev_macro_f1);
    }

    #[test]
    fn predict_ties_go_to_off() {
        assert_eq!(label_for(0.5), Label::Off);
        assert_eq!(label_for(0.499_999), Label::Not);
    }

    #[test]
    fn zero_model_predicts_half() {
        let params = LrParams {
            w: vec![0.0; 3],
            b: 0.0,
        };
        let preds = predict_logistic(&params, &[sv(&[1.0, -2.0, 0.3])]).unwrap();
        assert_eq!(preds[0].0, 0.5);
        assert_eq!(preds[0].1, Label::Off);
    }

    #[test]
    fn lowering_head_bias_flips_everything_to_not() {
        let (train, dev) = marker_task(40, 13);
        let mut spec = ModelSpec::defaults(ModelArch::Gru, FeatureKind::Aravec);
        spec.hyper.hidden = 4;
        spec.hyper.epochs = 2;
        let (mut params, _) = train_recurrent(&spec, &train, &[]).unwrap();
        params.head_b -= 1000.0;
        let inputs: Vec<SequenceTensor> = dev.iter().map(|(s, _)| s.clone()).collect();
        for (_, label) in predict_recurrent(&params, &inputs).unwrap() {
            assert_eq!(label, Label::Not);
        }
    }

    #[test]
    fn grid_search_single_point_and_ties() {
        let (train, dev) = marker_task(40, 15);
        let base = {
            let mut s = ModelSpec::defaults(ModelArch::Gru, FeatureKind::Aravec);
            s.hyper.epochs = 2;
            s
        };
        let one = GridSpec {
            dropouts: vec![0.5],
            layers: vec![1],
            hiddens: vec![4],
        };
        let res = grid_search(ModelArch::Gru, &one, &base, &train, &dev).unwrap();
        assert_eq!(res.table.len(), 1);
        assert_eq!(res.best.hyper.hidden, 4);
        assert_eq!(res.best.hyper.dropout, 0.5);

        // selection never returns a point absent from the table
        let two = GridSpec {
            dropouts: vec![0.25, 0.5],
            layers: vec![1],
            hiddens: vec![4],
        };
        let res = grid_search(ModelArch::Gru, &two, &base, &train, &dev).unwrap();
        assert_eq!(res.table.len(), 2);
        assert!(res
            .table
            .iter()
            .any(|e| e.point.dropout == res.best.hyper.dropout
                && e.point.layers == res.best.hyper.layers
                && e.point.hidden == res.best.hyper.hidden));
        // with equal accuracies the lower dropout wins
        if res.table[0].accuracy == res.table[1].accuracy {
            assert_eq!(res.best.hyper.dropout, 0.25);
        }
    }

    #[test]
    fn grid_search_rejects_lr() {
        let (train, dev) = marker_task(30, 17);
        let base = ModelSpec::defaults(ModelArch::Gru, FeatureKind::Aravec);
        assert!(grid_search(ModelArch::Lr, &GridSpec::default(), &base, &train, &dev).is_err());
    }

    #[test]
    fn checkpoint_round_trip_recurrent_tfidf() {
        let tweets = vec![
            Tweet {
                id: "1".into(),
                text: "يا حيوان ضحك".into(),
                label: Label::Off,
            },
            Tweet {
                id: "2".into(),
                text: "كلام كثير".into(),
                label: Label::Not,
            },
            Tweet {
                id: "3".into(),
                text: "نص عادي".into(),
                label: Label::Not,
            },
        ];
        let corpus = Corpus::from_tweets(tweets, SplitTag::Train).unwrap();
        let mut spec = ModelSpec::defaults(ModelArch::BiGru, FeatureKind::Tfidf);
        spec.hyper.hidden = 3;
        spec.hyper.epochs = 2;
        spec.feature_cfg.buckets = 16;
        let model = train_model(&spec, &corpus, None, None).unwrap();

        let rendered = model.to_checkpoint().render();
        let reloaded =
            TrainedModel::from_checkpoint(&Checkpoint::parse(&rendered).unwrap(), None).unwrap();
        assert_eq!(reloaded.to_checkpoint().render(), rendered);

        let texts = ["يا حيوان", "نص عادي"];
        let a = model.predict_texts(&texts).unwrap();
        let b = reloaded.predict_texts(&texts).unwrap();
        for ((pa, la), (pb, lb)) in a.iter().zip(&b) {
            assert_eq!(pa.to_bits(), pb.to_bits());
            assert_eq!(la, lb);
        }
    }
}
