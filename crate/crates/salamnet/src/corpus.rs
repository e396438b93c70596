//! Labeled tweet corpus: TSV ingestion, official splits, fold plans and
//! optional minority-class upsampling.
//!
//! File format: UTF-8 TSV, one record per line, `id<TAB>text<TAB>label` with
//! labels `OFF`/`NOT`. Tabs, newlines and backslashes inside tweet text are
//! escaped as `\t`, `\n`, `\\`. A single header line is recognized when the
//! third field is literally `label`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "OFF")]
    Off,
    #[serde(rename = "NOT")]
    Not,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Off => "OFF",
            Label::Not => "NOT",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "OFF" => Some(Label::Off),
            "NOT" => Some(Label::Not),
            _ => None,
        }
    }

    /// Target value fed to the binary cross-entropy loss: OFF is the
    /// positive class.
    pub fn target(&self) -> f64 {
        match self {
            Label::Off => 1.0,
            Label::Not => 0.0,
        }
    }

    pub fn flipped(&self) -> Label {
        match self {
            Label::Off => Label::Not,
            Label::Not => Label::Off,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Dev,
    Test,
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    pub split_tag: SplitTag,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept records whose text trims to empty. Preprocessed corpora can
    /// legitimately contain them; raw ingestion should not.
    pub allow_empty_text: bool,
}

impl Corpus {
    /// Build a corpus from tweets, enforcing id uniqueness.
    pub fn from_tweets(tweets: Vec<Tweet>, split_tag: SplitTag) -> Result<Corpus> {
        let mut seen = HashSet::new();
        for (i, t) in tweets.iter().enumerate() {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::DuplicateId {
                    line: i + 1,
                    id: t.id.clone(),
                });
            }
        }
        Ok(Corpus { tweets, split_tag })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tweet> {
        self.tweets.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Tweet> {
        self.tweets.iter().find(|t| t.id == id)
    }

    /// (OFF count, NOT count).
    pub fn class_counts(&self) -> (usize, usize) {
        let off = self.tweets.iter().filter(|t| t.label == Label::Off).count();
        (off, self.tweets.len() - off)
    }

    /// Map a function over tweet texts, keeping ids and labels.
    pub fn map_texts(&self, mut f: impl FnMut(&str) -> String) -> Corpus {
        Corpus {
            tweets: self
                .tweets
                .iter()
                .map(|t| Tweet {
                    id: t.id.clone(),
                    text: f(&t.text),
                    label: t.label,
                })
                .collect(),
            split_tag: self.split_tag,
        }
    }
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

/// Load a corpus from TSV; rejects empty text fields.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<Corpus> {
    let (corpus, warnings) = load_tsv_with(path, LoadOptions::default())?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(corpus)
}

/// Load a corpus from TSV, returning non-fatal warnings (extra columns)
/// instead of printing them.
pub fn load_tsv_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<(Corpus, Vec<String>)> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let (corpus, warnings) = parse_tsv(&content, opts)?;
    Ok((corpus, warnings))
}

/// Parse TSV content. Exposed so tests and in-memory pipelines can avoid
/// temp files.
pub fn parse_tsv(content: &str, opts: LoadOptions) -> Result<(Corpus, Vec<String>)> {
    let mut tweets = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut warnings = Vec::new();

    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        // Header row: third field named `label`.
        if idx == 0 && fields[2].trim().eq_ignore_ascii_case("label") {
            continue;
        }
        if fields.len() > 3 {
            warnings.push(format!(
                "line {lineno}: ignoring {} extra trailing column(s)",
                fields.len() - 3
            ));
        }
        let id = fields[0].to_string();
        let text = unescape(fields[1]);
        if !opts.allow_empty_text && text.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty tweet text".to_string(),
            });
        }
        let label = Label::parse(fields[2].trim()).ok_or_else(|| Error::Label {
            line: lineno,
            label: fields[2].trim().to_string(),
        })?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { line: lineno, id });
        }
        tweets.push(Tweet { id, text, label });
    }

    Ok((
        Corpus {
            tweets,
            split_tag: SplitTag::Unsplit,
        },
        warnings,
    ))
}

/// Serialize a corpus back to the TSV format accepted by the loader.
pub fn to_tsv(corpus: &Corpus) -> String {
    let mut out = String::new();
    for t in corpus.iter() {
        out.push_str(&t.id);
        out.push('\t');
        out.push_str(&escape(&t.text));
        out.push('\t');
        out.push_str(t.label.as_str());
        out.push('\n');
    }
    out
}

pub fn save_tsv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_tsv(corpus)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Positional split into TRAIN / DEV / TEST. The corpus order is assumed to
/// be the official distribution order; no shuffling happens here.
pub fn official_split(
    corpus: &Corpus,
    sizes: (usize, usize, usize),
) -> Result<(Corpus, Corpus, Corpus)> {
    let (train, dev, test) = sizes;
    let total = train + dev + test;
    if total != corpus.len() {
        return Err(Error::Split {
            requested: total,
            actual: corpus.len(),
        });
    }
    let mk = |range: std::ops::Range<usize>, tag| Corpus {
        tweets: corpus.tweets[range].to_vec(),
        split_tag: tag,
    };
    Ok((
        mk(0..train, SplitTag::Train),
        mk(train..train + dev, SplitTag::Dev),
        mk(train + dev..total, SplitTag::Test),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Partition a corpus into (train = all other folds, test = fold `i`),
    /// both preserving corpus order.
    pub fn split(&self, corpus: &Corpus, fold: usize) -> Result<(Corpus, Corpus)> {
        if fold >= self.k {
            return Err(Error::Config(format!(
                "fold index {fold} out of range for k={}",
                self.k
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for t in corpus.iter() {
            match self.fold_of(&t.id) {
                Some(f) if f == fold => test.push(t.clone()),
                Some(_) => train.push(t.clone()),
                None => {
                    return Err(Error::Evaluation(format!(
                        "tweet id {:?} is not covered by the fold plan",
                        t.id
                    )))
                }
            }
        }
        Ok((
            Corpus {
                tweets: train,
                split_tag: SplitTag::Train,
            },
            Corpus {
                tweets: test,
                split_tag: SplitTag::Test,
            },
        ))
    }
}

/// Deterministic k-fold plan: seeded shuffle, then round-robin assignment.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if corpus.len() < k {
        return Err(Error::Config(format!(
            "corpus of {} tweets cannot be split into {k} folds",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = Rng::seed_from_u64(seed);
    rng.shuffle(&mut order);
    let mut assignments = BTreeMap::new();
    for (pos, &idx) in order.iter().enumerate() {
        assignments.insert(corpus.tweets[idx].id.clone(), pos % k);
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

/// Duplicate minority-class tweets (uniform with replacement, seeded) until
/// the class counts are equal. Duplicates are appended with ids
/// `origid#dupN`; the original tweets are untouched.
pub fn upsample_minority(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let (off, not) = corpus.class_counts();
    if off == 0 || not == 0 {
        return Err(Error::Rebalance(
            "corpus must contain both classes".to_string(),
        ));
    }
    let minority = if off < not { Label::Off } else { Label::Not };
    let deficit = off.abs_diff(not);

    let pool: Vec<&Tweet> = corpus.iter().filter(|t| t.label == minority).collect();
    let mut rng = Rng::seed_from_u64(seed);
    let mut dup_counters: BTreeMap<String, usize> = BTreeMap::new();

    let mut tweets = corpus.tweets.clone();
    for _ in 0..deficit {
        let src = pool[rng.below(pool.len())];
        let n = dup_counters.entry(src.id.clone()).or_insert(0);
        *n += 1;
        tweets.push(Tweet {
            id: format!("{}#dup{}", src.id, n),
            text: src.text.clone(),
            label: src.label,
        });
    }
    Ok(Corpus {
        tweets,
        split_tag: corpus.split_tag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, text: &str, label: Label) -> Tweet {
        Tweet {
            id: id.to_string(),
            text: text.to_string(),
            label,
        }
    }

    fn small_corpus(n_off: usize, n_not: usize) -> Corpus {
        let mut tweets = Vec::new();
        for i in 0..n_off {
            tweets.push(tweet(&format!("o{i}"), &format!("نص {i}"), Label::Off));
        }
        for i in 0..n_not {
            tweets.push(tweet(&format!("n{i}"), &format!("كلام {i}"), Label::Not));
        }
        Corpus::from_tweets(tweets, SplitTag::Unsplit).unwrap()
    }

    #[test]
    fn load_two_line_file() {
        let content = "1\tنص\tOFF\n2\tنص آخر\tNOT\n";
        let (corpus, warnings) = parse_tsv(content, LoadOptions::default()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(warnings.is_empty());
        assert_eq!(corpus.class_counts(), (1, 1));
        assert_eq!(corpus.tweets()[0].text, "نص");
    }

    #[test]
    fn header_only_file_is_empty() {
        let (corpus, _) = parse_tsv("id\ttext\tlabel\n", LoadOptions::default()).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn bad_label_names_line() {
        let err = parse_tsv("1\tنص\tOFF\n2\tكلام\tNOT\n3\tنص\tBAD\n", LoadOptions::default())
            .unwrap_err();
        match err {
            Error::Label { line, label } => {
                assert_eq!(line, 3);
                assert_eq!(label, "BAD");
            }
            other => panic!("expected label error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line() {
        let err = parse_tsv("1\tنص\tOFF\nbroken line\n", LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_tsv("1\tنص\tOFF\n1\tكلام\tNOT\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn extra_columns_warn_but_load() {
        let (corpus, warnings) =
            parse_tsv("1\tنص\tOFF\textra\tmore\n", LoadOptions::default()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("line 1"));
    }

    #[test]
    fn empty_text_rejected_unless_allowed() {
        let content = "1\t \tOFF\n";
        assert!(parse_tsv(content, LoadOptions::default()).is_err());
        let (corpus, _) = parse_tsv(
            content,
            LoadOptions {
                allow_empty_text: true,
            },
        )
        .unwrap();
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn escaped_tab_round_trip() {
        let content = "1\tقبل\\tبعد\tOFF\n";
        let (corpus, _) = parse_tsv(content, LoadOptions::default()).unwrap();
        assert_eq!(corpus.tweets()[0].text, "قبل\tبعد");
        assert_eq!(to_tsv(&corpus), content);
    }

    #[test]
    fn tsv_round_trip_equal_corpus() {
        let corpus = small_corpus(3, 5);
        let serialized = to_tsv(&corpus);
        let (reloaded, _) = parse_tsv(&serialized, LoadOptions::default()).unwrap();
        assert_eq!(reloaded, corpus);
    }

    #[test]
    fn official_split_is_positional() {
        let corpus = small_corpus(4, 6);
        let (train, dev, test) = official_split(&corpus, (7, 1, 2)).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(dev.len(), 1);
        assert_eq!(test.len(), 2);
        assert_eq!(train.split_tag, SplitTag::Train);
        // concatenation in order equals the input corpus
        let mut ids: Vec<&str> = Vec::new();
        for c in [&train, &dev, &test] {
            ids.extend(c.iter().map(|t| t.id.as_str()));
        }
        let orig: Vec<&str> = corpus.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, orig);
    }

    #[test]
    fn official_split_size_mismatch() {
        let corpus = small_corpus(4, 5);
        assert!(matches!(
            official_split(&corpus, (7, 1, 2)),
            Err(Error::Split { .. })
        ));
    }

    #[test]
    fn folds_partition_with_balanced_sizes() {
        let corpus = small_corpus(4, 6);
        let plan = make_folds(&corpus, 3, 1).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(plan.assignments().len(), corpus.len());

        let plan10 = make_folds(&corpus, 10, 1).unwrap();
        assert!(plan10.fold_sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn folds_deterministic_per_seed() {
        let corpus = small_corpus(10, 10);
        let a = make_folds(&corpus, 5, 1).unwrap();
        let b = make_folds(&corpus, 5, 1).unwrap();
        let c = make_folds(&corpus, 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.assignments(), c.assignments());
    }

    #[test]
    fn folds_reject_bad_config() {
        let corpus = small_corpus(2, 2);
        assert!(make_folds(&corpus, 1, 0).is_err());
        assert!(make_folds(&corpus, 5, 0).is_err());
    }

    #[test]
    fn fold_split_covers_everything() {
        let corpus = small_corpus(7, 8);
        let plan = make_folds(&corpus, 4, 9).unwrap();
        let mut seen = 0;
        for fold in 0..4 {
            let (train, test) = plan.split(&corpus, fold).unwrap();
            assert_eq!(train.len() + test.len(), corpus.len());
            seen += test.len();
        }
        assert_eq!(seen, corpus.len());
    }

    #[test]
    fn upsample_equalizes_counts() {
        let corpus = small_corpus(19, 81);
        let balanced = upsample_minority(&corpus, 7).unwrap();
        assert_eq!(balanced.class_counts(), (81, 81));
        assert_eq!(balanced.len(), 162);
        // originals untouched, in order
        assert_eq!(&balanced.tweets()[..corpus.len()], corpus.tweets());
        // duplicates are exact text copies of minority tweets with derived ids
        for dup in &balanced.tweets()[corpus.len()..] {
            assert_eq!(dup.label, Label::Off);
            let orig_id = dup.id.split("#dup").next().unwrap();
            let orig = corpus.get(orig_id).unwrap();
            assert_eq!(orig.text, dup.text);
        }
    }

    #[test]
    fn upsample_balanced_is_identity() {
        let corpus = small_corpus(5, 5);
        assert_eq!(upsample_minority(&corpus, 1).unwrap(), corpus);
    }

    #[test]
    fn upsample_single_class_errors() {
        let corpus = small_corpus(0, 3);
        assert!(matches!(
            upsample_minority(&corpus, 1),
            Err(Error::Rebalance(_))
        ));
    }

    #[test]
    fn upsample_deterministic() {
        let corpus = small_corpus(3, 9);
        assert_eq!(
            upsample_minority(&corpus, 5).unwrap(),
            upsample_minority(&corpus, 5).unwrap()
        );
    }
}
