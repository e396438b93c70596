//! Arabic tweet normalization pipeline.
//!
//! Six ordered steps: emoji conversion, letter normalization, dialect
//! normalization, hyponym-to-hypernym mapping, hashtag segmentation and
//! miscellaneous cleaning. Each step is a pure function and idempotent;
//! the composed pipeline is idempotent as well (given fixed-point
//! lexicons) and its output contains only Arabic letters, Latin letters
//! and single spaces.
//!
//! Minority-class upsampling (the seventh step of the original recipe) is
//! off by default and lives in [`crate::corpus::upsample_minority`].

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const BUNDLED_EMOJI: &str = include_str!("../data/emoji.tsv");
const BUNDLED_DIALECT: &str = include_str!("../data/dialect.tsv");
const BUNDLED_HYPERNYMS: &str = include_str!("../data/hypernyms.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconKind {
    Emoji,
    Dialect,
    Hypernym,
    Stopword,
}

/// Surface-form to replacement lookup backing one pipeline step.
#[derive(Debug, Clone)]
pub struct LexiconMap {
    pub kind: LexiconKind,
    entries: BTreeMap<String, String>,
}

impl LexiconMap {
    /// Build and validate a lexicon. Keys and values of DIALECT/HYPERNYM
    /// maps and stopword entries are letter-normalized so they match text
    /// that already passed the letters step.
    pub fn new<I, K, V>(kind: LexiconKind, pairs: I) -> Result<LexiconMap>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (k, v) in pairs {
            let (mut k, mut v) = (k.into(), v.into());
            if matches!(kind, LexiconKind::Dialect | LexiconKind::Hypernym | LexiconKind::Stopword)
            {
                k = normalize_letters(&k);
                v = normalize_letters(&v);
            }
            if k.is_empty() {
                return Err(Error::Lexicon {
                    path: "<memory>".into(),
                    msg: "empty key".into(),
                });
            }
            entries.insert(k, v);
        }
        let map = LexiconMap { kind, entries };
        map.validate()?;
        Ok(map)
    }

    pub fn empty(kind: LexiconKind) -> LexiconMap {
        LexiconMap {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Load a `key<TAB>value` TSV; `#`-prefixed lines are comments.
    pub fn load(path: impl AsRef<Path>, kind: LexiconKind) -> Result<LexiconMap> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&content, kind).map_err(|e| match e {
            Error::Lexicon { msg, .. } => Error::Lexicon {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })
    }

    pub fn parse(content: &str, kind: LexiconKind) -> Result<LexiconMap> {
        if kind == LexiconKind::Stopword {
            return Self::parse_stopwords(content);
        }
        let mut pairs = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.splitn(2, '\t');
            let key = fields.next().unwrap_or("").trim();
            let value = fields.next().map(str::trim).ok_or_else(|| Error::Lexicon {
                path: "<memory>".into(),
                msg: format!("line {}: expected key<TAB>value", idx + 1),
            })?;
            pairs.push((key.to_string(), value.to_string()));
        }
        Self::new(kind, pairs)
    }

    /// Stopword file: one token per line, `#` comments allowed.
    pub fn load_stopwords(path: impl AsRef<Path>) -> Result<LexiconMap> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_stopwords(&content)
    }

    fn parse_stopwords(content: &str) -> Result<LexiconMap> {
        let pairs = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| (l.to_string(), String::new()));
        Self::new(LexiconKind::Stopword, pairs)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Lexicon {
                path: "<memory>".into(),
                msg,
            })
        };
        match self.kind {
            LexiconKind::Emoji | LexiconKind::Dialect | LexiconKind::Hypernym => {
                for (k, v) in &self.entries {
                    if k == v {
                        return fail(format!("key {k:?} maps to itself"));
                    }
                }
            }
            LexiconKind::Stopword => {}
        }
        if self.kind == LexiconKind::Hypernym {
            // hypernym values must be fixed points
            for v in self.entries.values() {
                if self.entries.contains_key(v) {
                    return fail(format!("hypernym value {v:?} also appears as a key"));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn entries_longest_first(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<(&str, &str)> = self
            .entries
            .iter()
            .map(|(k, val)| (k.as_str(), val.as_str()))
            .collect();
        v.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        v
    }
}

// --- character classes -----------------------------------------------------

pub fn is_arabic_letter(c: char) -> bool {
    if c == '\u{0640}' {
        return false; // tatweel is filler, not a letter
    }
    matches!(c,
        '\u{0620}'..='\u{064A}'
        | '\u{066E}'..='\u{066F}'
        | '\u{0671}'..='\u{06D3}'
        | '\u{06D5}'
        | '\u{06EE}'..='\u{06EF}'
        | '\u{06FA}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}')
}

pub fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

fn is_emoji_char(c: char) -> bool {
    matches!(c,
        '\u{1F000}'..='\u{1FAFF}'
        | '\u{2600}'..='\u{27BF}'
        | '\u{2B50}'
        | '\u{2B55}'
        | '\u{FE0F}'
        | '\u{200D}')
}

/// True when `text` contains only Arabic letters, Latin letters and single
/// spaces with no leading/trailing space -- the pipeline's output alphabet.
pub fn is_clean_alphabet(text: &str) -> bool {
    if text.starts_with(' ') || text.ends_with(' ') || text.contains("  ") {
        return false;
    }
    text.chars()
        .all(|c| c == ' ' || is_arabic_letter(c) || is_latin_letter(c))
}

// --- step 1: emoji ----------------------------------------------------------

/// Replace mapped emoji/emoticon sequences by their textual label (padded
/// with spaces as needed to keep it a separate token) and remove unmapped
/// emoji codepoints, leaving a space so the characters around them never
/// fuse. Non-emoji text is untouched.
pub fn convert_emoji(text: &str, emoji_map: &LexiconMap) -> String {
    debug_assert_eq!(emoji_map.kind, LexiconKind::Emoji);
    let keys = emoji_map.entries_longest_first();
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while !rest.is_empty() {
        for (key, label) in &keys {
            if let Some(stripped) = rest.strip_prefix(key) {
                if !out.is_empty() && !out.ends_with(char::is_whitespace) {
                    out.push(' ');
                }
                out.push_str(label);
                rest = stripped;
                if rest.chars().next().is_some_and(|c| !c.is_whitespace()) {
                    out.push(' ');
                }
                continue 'outer;
            }
        }
        let c = rest.chars().next().unwrap();
        if is_emoji_char(c) {
            out.push(' ');
        } else {
            out.push(c);
        }
        rest = &rest[c.len_utf8()..];
    }
    out
}

// --- step 2: letters ---------------------------------------------------------

/// Reduce any letter repeated more than twice in a row to exactly two.
fn collapse_letter_runs(text: impl Iterator<Item = char>, out: &mut String) {
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in text {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        let is_letter = is_arabic_letter(c) || is_latin_letter(c);
        if is_letter && run > 2 {
            continue;
        }
        out.push(c);
    }
}

/// Collapse Alif variants to bare Alif, Alif Maqsura to Ya, Ta Marbuta to
/// Ha, and reduce any letter repeated more than twice in a row to two.
pub fn normalize_letters(text: &str) -> String {
    let mapped = text.chars().map(|c| match c {
        '\u{0623}' | '\u{0625}' | '\u{0622}' | '\u{0671}' => '\u{0627}', // أ إ آ ٱ -> ا
        '\u{0649}' => '\u{064A}',                                        // ى -> ي
        '\u{0629}' => '\u{0647}',                                        // ة -> ه
        other => other,
    });
    let mut out = String::with_capacity(text.len());
    collapse_letter_runs(mapped, &mut out);
    out
}

// --- steps 3 and 4: token replacement ----------------------------------------

/// Lookup form of a token: diacritics dropped, letter variants and long
/// runs normalized -- exactly the shape the cleaning step will leave it in,
/// and the shape lexicon keys are stored in.
fn lookup_key(token: &str) -> String {
    let stripped: String = token.chars().filter(|c| !is_diacritic(*c)).collect();
    normalize_letters(&stripped)
}

/// Whole-token replacement. Tokens are maximal runs of letters and
/// diacritics; every other character is a boundary (and is preserved).
/// That matches the tokenization the cleaning step ends up with, so words
/// inside unsegmented hashtags are matched and cleaning can never conjure
/// an unmapped dictionary key out of symbol removal. Lookups ignore
/// diacritics, so a vowelled dialect noun still matches.
fn replace_tokens(text: &str, map: &LexiconMap) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |out: &mut String, token: &mut String| {
        if !token.is_empty() {
            let key = lookup_key(token);
            match (!key.is_empty()).then(|| map.get(&key)).flatten() {
                Some(replacement) => out.push_str(replacement),
                None => out.push_str(token),
            }
            token.clear();
        }
    };
    for c in text.chars() {
        if is_arabic_letter(c) || is_latin_letter(c) || is_diacritic(c) {
            token.push(c);
        } else {
            flush(&mut out, &mut token);
            out.push(c);
        }
    }
    flush(&mut out, &mut token);
    out
}

/// Map dialect noun variants to their Modern Standard Arabic forms.
pub fn normalize_dialect(text: &str, dialect_map: &LexiconMap) -> String {
    debug_assert_eq!(dialect_map.kind, LexiconKind::Dialect);
    replace_tokens(text, dialect_map)
}

/// Map hyponyms (e.g. individual animal names) to their hypernym.
pub fn map_hyponyms(text: &str, hypernym_map: &LexiconMap) -> String {
    debug_assert_eq!(hypernym_map.kind, LexiconKind::Hypernym);
    replace_tokens(text, hypernym_map)
}

// --- step 5: hashtags ---------------------------------------------------------

/// Delete `#` and turn `_` into a space.
pub fn segment_hashtags(text: &str) -> String {
    text.chars()
        .filter_map(|c| match c {
            '#' => None,
            '_' => Some(' '),
            other => Some(other),
        })
        .collect()
}

// --- step 6: cleaning ----------------------------------------------------------

fn strip_html_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        out.push_str(&rest[..start]);
        // a removed tag acts as a separator so surrounding words never merge
        out.push(' ');
        let after = &rest[start + 1..];
        match after.find('>') {
            Some(end) => rest = &after[end + 1..],
            None => {
                out.pop();
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Remove digits, HTML tags, diacritics, special symbols and stopword
/// tokens; collapse whitespace runs and trim. Removed digits, tags and
/// symbols act as token separators (only diacritics vanish in place, with
/// any letter run they expose reduced back to two), so a removal never
/// fuses two fragments into a new token; this keeps the whole pipeline
/// idempotent on arbitrary input. Symbols are stripped before stopwords
/// are matched.
pub fn clean_misc(text: &str, stopwords: &LexiconMap) -> String {
    debug_assert_eq!(stopwords.kind, LexiconKind::Stopword);
    let untagged = strip_html_tags(text);

    let mut filtered = String::with_capacity(untagged.len());
    for c in untagged.chars() {
        if is_diacritic(c) {
            continue;
        }
        if is_arabic_letter(c) || is_latin_letter(c) {
            filtered.push(c);
        } else {
            // digits, whitespace and special symbols all become separators
            filtered.push(' ');
        }
    }

    let mut collapsed = String::with_capacity(filtered.len());
    collapse_letter_runs(filtered.chars(), &mut collapsed);

    let mut out = String::with_capacity(collapsed.len());
    for token in collapsed.split_whitespace() {
        if stopwords.get(token).is_some() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

// --- pipeline -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Emoji,
    Letters,
    Dialect,
    Hypernym,
    Hashtag,
    Clean,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::Emoji,
        Step::Letters,
        Step::Dialect,
        Step::Hypernym,
        Step::Hashtag,
        Step::Clean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Step::Emoji => "emoji",
            Step::Letters => "letters",
            Step::Dialect => "dialect",
            Step::Hypernym => "hypernym",
            Step::Hashtag => "hashtag",
            Step::Clean => "clean",
        }
    }

    pub fn parse(s: &str) -> Option<Step> {
        Step::ALL.iter().find(|step| step.name() == s).copied()
    }
}

/// Where a lexicon comes from: the copy compiled into the binary or a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum LexiconSource {
    #[default]
    Bundled,
    Path(PathBuf),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub steps: Vec<Step>,
    pub emoji: LexiconSource,
    pub dialect: LexiconSource,
    pub hypernyms: LexiconSource,
    pub stopwords: LexiconSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            steps: Step::ALL.to_vec(),
            emoji: LexiconSource::Bundled,
            dialect: LexiconSource::Bundled,
            hypernyms: LexiconSource::Bundled,
            stopwords: LexiconSource::Bundled,
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for step in &self.steps {
            if !seen.insert(*step) {
                return Err(Error::Config(format!(
                    "pipeline step {:?} listed more than once",
                    step.name()
                )));
            }
        }
        Ok(())
    }
}

/// The compiled pipeline: lexicons loaded and validated once, then applied
/// to any number of tweets. Immutable and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    steps: Vec<Step>,
    emoji: LexiconMap,
    dialect: LexiconMap,
    hypernyms: LexiconMap,
    stopwords: LexiconMap,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        let load = |source: &LexiconSource, bundled: &str, kind: LexiconKind| match source {
            LexiconSource::Bundled => LexiconMap::parse(bundled, kind),
            LexiconSource::Path(p) => LexiconMap::load(p, kind),
        };
        Ok(Pipeline {
            steps: config.steps.clone(),
            emoji: load(&config.emoji, BUNDLED_EMOJI, LexiconKind::Emoji)?,
            dialect: load(&config.dialect, BUNDLED_DIALECT, LexiconKind::Dialect)?,
            hypernyms: load(&config.hypernyms, BUNDLED_HYPERNYMS, LexiconKind::Hypernym)?,
            stopwords: match &config.stopwords {
                LexiconSource::Bundled => LexiconMap::parse_stopwords(BUNDLED_STOPWORDS),
                LexiconSource::Path(p) => LexiconMap::load_stopwords(p),
            }?,
        })
    }

    /// All six steps with the bundled lexicons.
    pub fn bundled() -> Result<Pipeline> {
        Pipeline::new(&PipelineConfig::default())
    }

    /// Build from explicit lexicons, for tests and callers with custom maps.
    pub fn from_lexicons(
        steps: Vec<Step>,
        emoji: LexiconMap,
        dialect: LexiconMap,
        hypernyms: LexiconMap,
        stopwords: LexiconMap,
    ) -> Result<Pipeline> {
        let config = PipelineConfig {
            steps: steps.clone(),
            ..PipelineConfig::default()
        };
        config.validate()?;
        Ok(Pipeline {
            steps,
            emoji,
            dialect,
            hypernyms,
            stopwords,
        })
    }

    pub fn apply(&self, text: &str) -> String {
        let mut current = text.to_string();
        for step in &self.steps {
            current = match step {
                Step::Emoji => convert_emoji(&current, &self.emoji),
                Step::Letters => normalize_letters(&current),
                Step::Dialect => normalize_dialect(&current, &self.dialect),
                Step::Hypernym => map_hyponyms(&current, &self.hypernyms),
                Step::Hashtag => segment_hashtags(&current),
                Step::Clean => clean_misc(&current, &self.stopwords),
            };
        }
        current
    }
}
