//! Cross-model error analysis: misclassification intersections across runs
//! and contrasts between feature families, plus length/repetition profiles
//! of the shared errors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::models::{FeatureKind, ModelArch};
use crate::preprocess::{is_arabic_letter, is_latin_letter};

/// One model's predictions over a shared tweet set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRun {
    pub run_id: String,
    pub arch: ModelArch,
    pub feature: FeatureKind,
    pub records: Vec<PredictionRecord>,
}

impl PredictionRun {
    pub fn new(
        run_id: impl Into<String>,
        arch: ModelArch,
        feature: FeatureKind,
        records: Vec<PredictionRecord>,
    ) -> Result<PredictionRun> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Analysis(format!(
                    "duplicate id {:?} within a prediction run",
                    r.id
                )));
            }
        }
        Ok(PredictionRun {
            run_id: run_id.into(),
            arch,
            feature,
            records,
        })
    }

    fn id_set(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    fn error_ids(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .filter(|r| r.pred != r.gold)
            .map(|r| r.id.as_str())
            .collect()
    }

    fn correct_ids(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .filter(|r| r.pred == r.gold)
            .map(|r| r.id.as_str())
            .collect()
    }
}

fn check_same_coverage(runs: &[&PredictionRun]) -> Result<()> {
    let first = runs[0].id_set();
    for run in &runs[1..] {
        if run.id_set() != first {
            return Err(Error::Analysis(format!(
                "run {:?} covers a different id set than {:?}",
                run.run_id, runs[0].run_id
            )));
        }
    }
    Ok(())
}

fn gold_of(runs: &[&PredictionRun], id: &str) -> Result<Label> {
    let mut gold = None;
    for run in runs {
        let record = run.records.iter().find(|r| r.id == id).unwrap();
        match gold {
            None => gold = Some(record.gold),
            Some(g) if g != record.gold => {
                return Err(Error::Analysis(format!(
                    "runs disagree on the gold label of id {id:?}"
                )))
            }
            _ => {}
        }
    }
    Ok(gold.unwrap())
}

/// Tweets every run got wrong, partitioned by gold class. Raw texts can be
/// attached afterwards with [`ErrorReport::attach_texts`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    /// gold OFF predicted NOT by every run
    pub off_as_not: Vec<String>,
    /// gold NOT predicted OFF by every run
    pub not_as_off: Vec<String>,
    pub off_as_not_count: usize,
    pub not_as_off_count: usize,
    /// raw (pre-normalization) text per listed id
    pub texts: BTreeMap<String, String>,
}

impl ErrorReport {
    pub fn attach_texts(&mut self, corpus: &Corpus) -> Result<()> {
        for id in self.off_as_not.iter().chain(&self.not_as_off) {
            let tweet = corpus
                .get(id)
                .ok_or_else(|| Error::Analysis(format!("id {id:?} missing from corpus")))?;
            self.texts.insert(id.clone(), tweet.text.clone());
        }
        Ok(())
    }

    /// Human-readable TSV companion to the JSON report.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tgold\tpredicted_by_all\ttext\n");
        for (ids, gold, pred) in [
            (&self.off_as_not, "OFF", "NOT"),
            (&self.not_as_off, "NOT", "OFF"),
        ] {
            for id in ids {
                let text = self.texts.get(id).map(String::as_str).unwrap_or("");
                out.push_str(&format!("{id}\t{gold}\t{pred}\t{text}\n"));
            }
        }
        out
    }
}

/// Intersection of the per-run error sets, split by gold class.
pub fn misclassified_by_all(runs: &[PredictionRun]) -> Result<ErrorReport> {
    if runs.is_empty() {
        return Err(Error::Analysis("need at least one run".into()));
    }
    let refs: Vec<&PredictionRun> = runs.iter().collect();
    check_same_coverage(&refs)?;

    let mut shared = refs[0].error_ids();
    for run in &refs[1..] {
        let errs = run.error_ids();
        shared.retain(|id| errs.contains(id));
    }

    let mut report = ErrorReport::default();
    for id in shared {
        match gold_of(&refs, id)? {
            Label::Off => report.off_as_not.push(id.to_string()),
            Label::Not => report.not_as_off.push(id.to_string()),
        }
    }
    report.off_as_not_count = report.off_as_not.len();
    report.not_as_off_count = report.not_as_off.len();
    Ok(report)
}

/// Ids wrong in every run of one family but right in more than
/// `majority_threshold` of the other family's runs, both ways. The two
/// returned sets are disjoint by construction.
pub fn feature_family_contrast(
    family_a: &[PredictionRun],
    family_b: &[PredictionRun],
    majority_threshold: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    if family_a.is_empty() || family_b.is_empty() {
        return Err(Error::Analysis("both families need at least one run".into()));
    }
    let all: Vec<&PredictionRun> = family_a.iter().chain(family_b.iter()).collect();
    check_same_coverage(&all)?;

    let contrast = |wrong_in: &[PredictionRun], right_in: &[PredictionRun]| -> Vec<String> {
        let mut wrong_all = wrong_in[0].error_ids();
        for run in &wrong_in[1..] {
            let errs = run.error_ids();
            wrong_all.retain(|id| errs.contains(id));
        }
        let corrects: Vec<BTreeSet<&str>> = right_in.iter().map(|r| r.correct_ids()).collect();
        wrong_all
            .into_iter()
            .filter(|id| {
                let right = corrects.iter().filter(|c| c.contains(id)).count();
                (right as f64) > majority_threshold * right_in.len() as f64
            })
            .map(str::to_string)
            .collect()
    };

    Ok((
        contrast(family_a, family_b),
        contrast(family_b, family_a),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileStats {
    pub count: usize,
    pub mean_tokens: f64,
    pub median_tokens: f64,
    /// fraction of tweets containing a letter repeated more than twice in a
    /// row, measured on the raw text
    pub repeat_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LengthRepetitionProfile {
    pub off_as_not: Option<ProfileStats>,
    pub not_as_off: Option<ProfileStats>,
}

fn has_repeat_run(text: &str) -> bool {
    let mut prev = None;
    let mut run = 0usize;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run > 2 && (is_arabic_letter(c) || is_latin_letter(c)) {
            return true;
        }
    }
    false
}

fn profile_of(ids: &[String], corpus: &Corpus) -> Result<Option<ProfileStats>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let mut token_counts = Vec::with_capacity(ids.len());
    let mut repeats = 0usize;
    for id in ids {
        let tweet = corpus
            .get(id)
            .ok_or_else(|| Error::Analysis(format!("id {id:?} missing from corpus")))?;
        token_counts.push(tweet.text.split_whitespace().count());
        if has_repeat_run(&tweet.text) {
            repeats += 1;
        }
    }
    token_counts.sort_unstable();
    let n = token_counts.len();
    let mean = token_counts.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        token_counts[n / 2] as f64
    } else {
        (token_counts[n / 2 - 1] + token_counts[n / 2]) as f64 / 2.0
    };
    Ok(Some(ProfileStats {
        count: n,
        mean_tokens: mean,
        median_tokens: median,
        repeat_fraction: repeats as f64 / n as f64,
    }))
}

/// Mean/median token counts and repeated-letter fraction for each error
/// set, computed on raw corpus text. Empty sets report as absent.
pub fn length_and_repetition_profile(
    report: &ErrorReport,
    corpus: &Corpus,
) -> Result<LengthRepetitionProfile> {
    Ok(LengthRepetitionProfile {
        off_as_not: profile_of(&report.off_as_not, corpus)?,
        not_as_off: profile_of(&report.not_as_off, corpus)?,
    })
}
