//! Evaluation: confusion matrix, precision/recall/F1 (macro and
//! support-weighted), k-fold cross-validation with per-fold feature
//! fitting, and held-out split evaluation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{make_folds, Corpus, Label};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::models::{train_model, ModelSpec, TrainedModel};
use crate::preprocess::Pipeline;

/// 2x2 counts indexed by (gold, predicted) over {OFF, NOT}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[usize; 2]; 2],
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Off => 0,
        Label::Not => 1,
    }
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: Label, pred: Label) {
        self.counts[class_index(gold)][class_index(pred)] += 1;
    }

    pub fn get(&self, gold: Label, pred: Label) -> usize {
        self.counts[class_index(gold)][class_index(pred)]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, label: Label) -> usize {
        self.counts[class_index(label)].iter().sum()
    }

    /// Swap the roles of OFF and NOT everywhere.
    pub fn flipped(&self) -> ConfusionMatrix {
        let c = &self.counts;
        ConfusionMatrix {
            counts: [[c[1][1], c[1][0]], [c[0][1], c[0][0]]],
        }
    }
}

/// Exact counts from aligned prediction and gold label slices.
pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<ConfusionMatrix> {
    if preds.is_empty() || preds.len() != golds.len() {
        return Err(Error::Evaluation(format!(
            "need equal non-empty label lists, got {} predictions and {} golds",
            preds.len(),
            golds.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in preds.iter().zip(golds) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Headline precision and recall are macro-averaged; weighted F1 is the
/// support-weighted mean of the per-class F1 scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub off: ClassMetrics,
    pub not: ClassMetrics,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    // 0/0 convention: zero
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(cm: &ConfusionMatrix, class: Label) -> ClassMetrics {
    let tp = cm.get(class, class);
    let fp = cm.get(class.flipped(), class);
    let fn_ = cm.get(class, class.flipped());
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: cm.support(class),
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Metrics {
    let off = class_metrics(cm, Label::Off);
    let not = class_metrics(cm, Label::Not);
    let total = cm.total() as f64;
    let weighted_f1 = (off.f1 * off.support as f64 + not.f1 * not.support as f64) / total;
    let correct = cm.get(Label::Off, Label::Off) + cm.get(Label::Not, Label::Not);
    Metrics {
        off,
        not,
        precision_macro: (off.precision + not.precision) / 2.0,
        recall_macro: (off.recall + not.recall) / 2.0,
        macro_f1: (off.f1 + not.f1) / 2.0,
        weighted_f1,
        accuracy: correct as f64 / total,
    }
}

/// One evaluated tweet, as emitted in JSON reports and consumed by the
/// error-analysis tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: Label,
    pub pred: Label,
    pub probability: f64,
}

/// Mean and population standard deviation of the headline metrics over
/// folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CVReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Metrics>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

fn summarize(folds: &[Metrics]) -> (MetricSummary, MetricSummary) {
    let n = folds.len() as f64;
    let pick = |f: &dyn Fn(&Metrics) -> f64| {
        let mean = folds.iter().map(|m| f(m)).sum::<f64>() / n;
        let var = folds.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (pm, ps) = pick(&|m: &Metrics| m.precision_macro);
    let (rm, rs) = pick(&|m: &Metrics| m.recall_macro);
    let (fm, fs) = pick(&|m: &Metrics| m.macro_f1);
    let (wm, ws) = pick(&|m: &Metrics| m.weighted_f1);
    let (am, as_) = pick(&|m: &Metrics| m.accuracy);
    (
        MetricSummary {
            precision_macro: pm,
            recall_macro: rm,
            macro_f1: fm,
            weighted_f1: wm,
            accuracy: am,
        },
        MetricSummary {
            precision_macro: ps,
            recall_macro: rs,
            macro_f1: fs,
            weighted_f1: ws,
            accuracy: as_,
        },
    )
}

/// k-fold cross-validation. For every fold the feature model is fitted on
/// the other k-1 folds only, the classifier is trained per the model spec (with
/// a fold-derived seed) and evaluated on the held-out fold. Degenerate
/// single-class folds are scored with the 0/0 = 0 convention rather than
/// aborted. With `upsample` the fold's training split is class-balanced
/// first (never the held-out fold). Texts are assumed preprocessed.
pub fn cross_validate(
    spec: &ModelSpec,
    corpus: &Corpus,
    k: usize,
    seed: u64,
    embeddings: Option<&Arc<EmbeddingTable>>,
    upsample: bool,
) -> Result<CVReport> {
    let (off, not) = corpus.class_counts();
    if off == 0 || not == 0 {
        return Err(Error::Evaluation(
            "cross-validation needs both classes present".into(),
        ));
    }
    let plan = make_folds(corpus, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut train, test) = plan.split(corpus, fold)?;
        let mut fold_spec = spec.clone();
        fold_spec.hyper.seed = spec
            .hyper
            .seed
            .wrapping_add((fold as u64).wrapping_mul(0x9E3779B97F4A7C15));
        if upsample {
            train = crate::corpus::upsample_minority(&train, fold_spec.hyper.seed)?;
        }
        let model = train_model(&fold_spec, &train, None, embeddings)?;
        let texts: Vec<&str> = test.iter().map(|t| t.text.as_str()).collect();
        let preds = model.predict_texts(&texts)?;
        let pred_labels: Vec<Label> = preds.iter().map(|(_, l)| *l).collect();
        let golds: Vec<Label> = test.iter().map(|t| t.label).collect();
        folds.push(compute_metrics(&confusion(&pred_labels, &golds)?));
    }
    let (mean, std) = summarize(&folds);
    Ok(CVReport {
        k,
        seed,
        folds,
        mean,
        std,
    })
}

/// Preprocess and featurize `test` with the model's own artifacts, predict,
/// and compute metrics plus per-tweet records for error analysis.
pub fn evaluate_split(
    model: &TrainedModel,
    test: &Corpus,
    pipeline: &Pipeline,
) -> Result<(Metrics, Vec<PredictionRecord>)> {
    if test.is_empty() {
        return Err(Error::Evaluation("empty test corpus".into()));
    }
    let texts: Vec<String> = test.iter().map(|t| pipeline.apply(&t.text)).collect();
    let preds = model.predict_texts(&texts)?;
    let mut records = Vec::with_capacity(test.len());
    let mut pred_labels = Vec::with_capacity(test.len());
    let mut golds = Vec::with_capacity(test.len());
    for (tweet, (probability, pred)) in test.iter().zip(preds) {
        records.push(PredictionRecord {
            id: tweet.id.clone(),
            gold: tweet.label,
            pred,
            probability,
        });
        pred_labels.push(pred);
        golds.push(tweet.label);
    }
    let metrics = compute_metrics(&confusion(&pred_labels, &golds)?);
    Ok((metrics, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SplitTag, Tweet};
    use crate::features::fit_char_tfidf;
    use crate::models::{FeatureKind, ModelArch};
    use crate::rng::Rng;

    use Label::{Not, Off};

    #[test]
    fn confusion_exact_counts() {
        let cm = confusion(&[Off, Not, Not, Not], &[Off, Off, Not, Not]).unwrap();
        assert_eq!(cm.get(Off, Off), 1);
        assert_eq!(cm.get(Off, Not), 1);
        assert_eq!(cm.get(Not, Not), 2);
        assert_eq!(cm.get(Not, Off), 0);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn confusion_perfect_has_zero_off_diagonal() {
        let labels = [Off, Not, Off, Not];
        let cm = confusion(&labels, &labels).unwrap();
        assert_eq!(cm.get(Off, Not), 0);
        assert_eq!(cm.get(Not, Off), 0);
    }

    #[test]
    fn confusion_rejects_empty_and_mismatched() {
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[Off], &[Off, Not]).is_err());
    }

    #[test]
    fn metrics_hand_derived_example() {
        // golds [OFF,OFF,NOT,NOT], preds [OFF,NOT,NOT,NOT]:
        // F1_OFF = 2/3, F1_NOT = 0.8, macro = weighted = 0.73333...
        let cm = confusion(&[Off, Not, Not, Not], &[Off, Off, Not, Not]).unwrap();
        let m = compute_metrics(&cm);
        assert!((m.off.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.not.f1 - 0.8).abs() < 1e-12);
        assert!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
        assert!((m.weighted_f1 - 11.0 / 15.0).abs() < 1e-12);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn metrics_perfect_predictions() {
        let labels = [Off, Off, Not];
        let m = compute_metrics(&confusion(&labels, &labels).unwrap());
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
        assert_eq!(m.precision_macro, 1.0);
        assert_eq!(m.recall_macro, 1.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn metrics_all_not_on_imbalanced_golds() {
        // golds {OFF:1, NOT:3}, all-NOT predictions: macro F1 = 3/7
        let cm = confusion(&[Not, Not, Not, Not], &[Off, Not, Not, Not]).unwrap();
        let m = compute_metrics(&cm);
        assert_eq!(m.off.f1, 0.0);
        assert!((m.not.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert!((m.macro_f1 - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_label_symmetry_and_equal_support_invariants() {
        let mut rng = Rng::seed_from_u64(31);
        for _ in 0..200 {
            let mut cm = ConfusionMatrix::default();
            for gold in [Off, Not] {
                for pred in [Off, Not] {
                    for _ in 0..rng.below(12) {
                        cm.add(gold, pred);
                    }
                }
            }
            if cm.total() == 0 {
                continue;
            }
            let m = compute_metrics(&cm);
            let f = compute_metrics(&cm.flipped());
            assert!((m.off.precision - f.not.precision).abs() < 1e-12);
            assert!((m.off.recall - f.not.recall).abs() < 1e-12);
            assert!((m.off.f1 - f.not.f1).abs() < 1e-12);
            assert!((m.macro_f1 - f.macro_f1).abs() < 1e-12);
            if m.off.support == m.not.support {
                assert!((m.weighted_f1 - m.macro_f1).abs() < 1e-12);
            }
        }
    }

    fn separable_corpus(n: usize, seed: u64) -> Corpus {
        let mut rng = Rng::seed_from_u64(seed);
        let noise = ["شمس", "قمر", "بحر", "جبل", "كتاب"];
        let tweets = (0..n)
            .map(|i| {
                let len = 2 + rng.below(2);
                let mut toks: Vec<&str> = (0..len).map(|_| noise[rng.below(5)]).collect();
                let off = i % 2 == 0;
                if off {
                    toks[0] = "حقير";
                    toks.push("سافل");
                }
                Tweet {
                    id: format!("t{i}"),
                    text: toks.join(" "),
                    label: if off { Off } else { Not },
                }
            })
            .collect();
        Corpus::from_tweets(tweets, SplitTag::Unsplit).unwrap()
    }

    #[test]
    fn cross_validate_separable_lr() {
        let corpus = separable_corpus(20, 5);
        let mut spec = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf);
        spec.hyper.epochs = 400;
        spec.hyper.lr = 0.5;
        let report = cross_validate(&spec, &corpus, 2, 3, None, false).unwrap();
        assert_eq!(report.folds.len(), 2);
        for fold in &report.folds {
            assert!(fold.macro_f1 >= 0.9, "fold macro f1 {}", fold.macro_f1);
        }
    }

    #[test]
    fn cross_validate_is_deterministic() {
        let corpus = separable_corpus(16, 6);
        let mut spec = ModelSpec::defaults(ModelArch::Gru, FeatureKind::Tfidf);
        spec.hyper.hidden = 4;
        spec.hyper.epochs = 2;
        spec.feature_cfg.buckets = 16;
        let a = cross_validate(&spec, &corpus, 2, 9, None, false).unwrap();
        let b = cross_validate(&spec, &corpus, 2, 9, None, false).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn per_fold_vocabulary_has_no_leakage() {
        let corpus = separable_corpus(12, 7);
        let plan = make_folds(&corpus, 3, 1).unwrap();
        for fold in 0..3 {
            let (train, test) = plan.split(&corpus, fold).unwrap();
            let train_texts: Vec<&str> = train.iter().map(|t| t.text.as_str()).collect();
            let model = fit_char_tfidf(&train_texts).unwrap();
            // any ngram unique to the test fold must be absent
            let train_model = fit_char_tfidf(&train_texts).unwrap();
            let test_texts: Vec<&str> = test.iter().map(|t| t.text.as_str()).collect();
            let test_model = fit_char_tfidf(&test_texts).unwrap();
            for gram in test_model.ngrams() {
                if !train_model.contains(gram) {
                    assert!(!model.contains(gram), "leaked ngram {gram:?}");
                }
            }
        }
    }

    #[test]
    fn cross_validate_single_class_rejected() {
        let corpus = separable_corpus(10, 8);
        let only_not: Vec<Tweet> = corpus
            .iter()
            .filter(|t| t.label == Not)
            .cloned()
            .collect();
        let corpus = Corpus::from_tweets(only_not, SplitTag::Unsplit).unwrap();
        let spec = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf);
        assert!(cross_validate(&spec, &corpus, 2, 1, None, false).is_err());
    }

    #[test]
    fn evaluate_split_on_training_data_is_near_perfect() {
        let corpus = separable_corpus(24, 9);
        let mut spec = ModelSpec::defaults(ModelArch::Lr, FeatureKind::Tfidf);
        spec.hyper.epochs = 150;
        let pipeline = Pipeline::bundled().unwrap();
        let pre = corpus.map_texts(|t| pipeline.apply(t));
        let model = train_model(&spec, &pre, None, None).unwrap();
        let (metrics, records) = evaluate_split(&model, &corpus, &pipeline).unwrap();
        assert!(metrics.macro_f1 >= 0.95, "macro f1 {}", metrics.macro_f1);
        assert_eq!(records.len(), corpus.len());
        assert_eq!(records[0].id, "t0");
    }

    #[test]
    fn all_not_closed_form_macro_f1() {
        // a model predicting all NOT against 19% OFF golds:
        // macro F1 = (0 + F1_NOT)/2 with F1_NOT = 2*0.81/(1 + 0.81)
        let mut cm = ConfusionMatrix::default();
        for _ in 0..19 {
            cm.add(Off, Not);
        }
        for _ in 0..81 {
            cm.add(Not, Not);
        }
        let m = compute_metrics(&cm);
        let f1_not = 2.0 * 0.81 / 1.81;
        assert!((m.macro_f1 - f1_not / 2.0).abs() < 1e-12);
    }
}
