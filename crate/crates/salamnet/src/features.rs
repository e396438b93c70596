//! Feature extraction: character n-gram TF-IDF vectors for the linear
//! baseline, and per-token dense sequences (pretrained embeddings or hashed
//! n-gram vectors) for the recurrent classifiers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Character n-gram range used throughout: 2 to 5 characters.
pub const NGRAM_MIN: usize = 2;
pub const NGRAM_MAX: usize = 5;

/// FNV-1a 64-bit over UTF-8 bytes. Fixed and portable; used for feature
/// hashing and for input-content fingerprints in run manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn char_ngrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut grams = Vec::new();
    for n in NGRAM_MIN..=NGRAM_MAX {
        if chars.len() < n {
            break;
        }
        for window in chars.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    grams
}

// --- TF-IDF -----------------------------------------------------------------

/// Fitted character n-gram TF-IDF vocabulary with smoothed idf weights:
/// `idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1`. Column indices follow
/// lexicographic n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    pub n_docs: usize,
    vocab: BTreeMap<String, (usize, f64)>,
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn lookup(&self, ngram: &str) -> Option<(usize, f64)> {
        self.vocab.get(ngram).copied()
    }

    pub fn contains(&self, ngram: &str) -> bool {
        self.vocab.contains_key(ngram)
    }

    pub fn ngrams(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    /// Persist as TSV: one header line with the corpus size and n-gram
    /// range, then `ngram<TAB>index<TAB>idf` rows with 17 significant
    /// digits so a reload is value-exact.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "#tfidf\tn_docs={}\tn_min={}\tn_max={}\n",
            self.n_docs, NGRAM_MIN, NGRAM_MAX
        );
        for (ngram, (index, idf)) in &self.vocab {
            out.push_str(&format!(
                "{}\t{}\t{:.16e}\n",
                escape_field(ngram),
                index,
                idf
            ));
        }
        out
    }

    pub fn parse_tsv(content: &str) -> Result<TfidfModel> {
        let mut lines = content.lines();
        let header = lines.next().ok_or_else(|| Error::Fit("empty tfidf file".into()))?;
        let mut n_docs = None;
        for field in header.split('\t').skip(1) {
            if let Some(v) = field.strip_prefix("n_docs=") {
                n_docs = v.parse::<usize>().ok();
            }
        }
        let n_docs =
            n_docs.ok_or_else(|| Error::Fit("tfidf header missing n_docs".into()))?;
        let mut vocab = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (ngram, index, idf) = (parts.next(), parts.next(), parts.next());
            match (ngram, index, idf) {
                (Some(ngram), Some(index), Some(idf)) => {
                    let index = index.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 2,
                        msg: "bad column index".into(),
                    })?;
                    let idf = idf.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        msg: "bad idf value".into(),
                    })?;
                    vocab.insert(unescape_field(ngram), (index, idf));
                }
                _ => {
                    return Err(Error::Parse {
                        line: i + 2,
                        msg: "expected ngram<TAB>index<TAB>idf".into(),
                    })
                }
            }
        }
        Ok(TfidfModel { n_docs, vocab })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TfidfModel> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_tsv(&content)
    }
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
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

/// Fit the TF-IDF vocabulary over a corpus of (preprocessed) texts. Every
/// n-gram appearing in at least one document enters the vocabulary.
pub fn fit_char_tfidf<S: AsRef<str>>(corpus: &[S]) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::Fit("cannot fit TF-IDF on an empty corpus".into()));
    }
    let n_docs = corpus.len();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: HashSet<String> = char_ngrams(doc.as_ref()).into_iter().collect();
        for gram in unique {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    let vocab = df
        .into_iter()
        .enumerate()
        .map(|(index, (gram, df))| {
            let idf = ((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0;
            (gram, (index, idf))
        })
        .collect();
    Ok(TfidfModel { n_docs, vocab })
}

/// Sparse document vector: strictly increasing indices, nonzero values,
/// L2 norm 1 when nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> SparseVector {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        debug_assert!(entries.iter().all(|&(i, _)| i < dim));
        SparseVector { dim, entries }
    }

    pub fn zero(dim: usize) -> SparseVector {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Dense vector to sparse, dropping exact zeros.
    pub fn from_dense(values: &[f64]) -> SparseVector {
        let entries = values
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        SparseVector {
            dim: values.len(),
            entries,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        debug_assert_eq!(dense.len(), self.dim);
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    fn normalized(mut self) -> SparseVector {
        let norm = self.l2_norm();
        if norm > 0.0 {
            for (_, v) in &mut self.entries {
                *v /= norm;
            }
        }
        self
    }
}

/// Raw n-gram counts times idf, L2-normalized. Out-of-vocabulary n-grams
/// are ignored; a document with no in-vocabulary n-gram maps to the zero
/// vector.
pub fn transform_tfidf(model: &TfidfModel, text: &str) -> SparseVector {
    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    for gram in char_ngrams(text) {
        if let Some((index, idf)) = model.lookup(&gram) {
            *weights.entry(index).or_insert(0.0) += idf;
        }
    }
    SparseVector::new(model.dim(), weights.into_iter().collect()).normalized()
}

// --- embeddings ---------------------------------------------------------------

/// Token-to-dense-vector table loaded from word2vec text format.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    vocab: HashMap<String, usize>,
    matrix: Vec<f64>,
}

impl EmbeddingTable {
    pub fn rows(&self) -> usize {
        self.vocab.len()
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.vocab
            .get(token)
            .map(|&row| &self.matrix[row * self.dim..(row + 1) * self.dim])
    }

    /// Build a table in memory; handy for tests and synthetic runs.
    pub fn from_rows<S: Into<String>>(dim: usize, rows: Vec<(S, Vec<f64>)>) -> Result<EmbeddingTable> {
        let mut vocab = HashMap::new();
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for (i, (token, values)) in rows.into_iter().enumerate() {
            let token = token.into();
            if values.len() != dim {
                return Err(Error::EmbeddingFormat {
                    line: i + 1,
                    msg: format!("row has {} values, expected {dim}", values.len()),
                });
            }
            if vocab.insert(token.clone(), i).is_some() {
                return Err(Error::EmbeddingFormat {
                    line: i + 1,
                    msg: format!("duplicate token {token:?}"),
                });
            }
            matrix.extend(values);
        }
        Ok(EmbeddingTable { dim, vocab, matrix })
    }
}

/// Load a word2vec text file: header `count dim`, then `token v1 .. vdim`
/// per line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_embeddings(&content)
}

pub fn parse_embeddings(content: &str) -> Result<EmbeddingTable> {
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmbeddingFormat {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::EmbeddingFormat {
            line: 1,
            msg: "header must be `count dim`".into(),
        })?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::EmbeddingFormat {
            line: 1,
            msg: "header must be `count dim`".into(),
        })?;

    let mut vocab = HashMap::with_capacity(count);
    let mut matrix = Vec::with_capacity(count * dim);
    let mut rows = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap().to_string();
        let values: std::result::Result<Vec<f64>, _> =
            fields.map(str::parse::<f64>).collect();
        let values = values.map_err(|_| Error::EmbeddingFormat {
            line: lineno,
            msg: "non-numeric embedding value".into(),
        })?;
        if values.len() != dim {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                msg: format!("row has {} values, expected {dim}", values.len()),
            });
        }
        if vocab.insert(token.clone(), rows).is_some() {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                msg: format!("duplicate token {token:?}"),
            });
        }
        matrix.extend(values);
        rows += 1;
    }
    if rows != count {
        return Err(Error::EmbeddingFormat {
            line: rows + 1,
            msg: format!("header promised {count} rows, found {rows}"),
        });
    }
    Ok(EmbeddingTable { dim, vocab, matrix })
}

// --- sequences -----------------------------------------------------------------

/// Per-token dense matrix fed to the recurrent cells. Padded positions
/// (only introduced for empty input) hold zero vectors and a false mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTensor {
    pub dim: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl SequenceTensor {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked(&self, t: usize) -> bool {
        !self.mask[t]
    }

    fn padding(dim: usize) -> SequenceTensor {
        SequenceTensor {
            dim,
            data: vec![0.0; dim],
            mask: vec![false],
        }
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> SequenceTensor {
        if rows.is_empty() {
            return SequenceTensor::padding(dim);
        }
        let len = rows.len();
        Self::from_rows_with_mask(dim, rows, vec![true; len])
    }

    /// Rows with an explicit mask, used when stacking recurrent layers.
    pub fn from_rows_with_mask(dim: usize, rows: Vec<Vec<f64>>, mask: Vec<bool>) -> SequenceTensor {
        debug_assert_eq!(rows.len(), mask.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            debug_assert_eq!(row.len(), dim);
            data.extend(row);
        }
        SequenceTensor { dim, data, mask }
    }

    /// Reverse the timestep order (mask included).
    pub fn reversed(&self) -> SequenceTensor {
        let mut data = Vec::with_capacity(self.data.len());
        let mut mask = Vec::with_capacity(self.mask.len());
        for t in (0..self.len()).rev() {
            data.extend_from_slice(self.row(t));
            mask.push(self.mask[t]);
        }
        SequenceTensor {
            dim: self.dim,
            data,
            mask,
        }
    }
}

/// Map whitespace tokens to embedding rows. Out-of-vocabulary tokens map
/// to a zero vector with a true mask; sequences are truncated to `max_len`
/// and empty input becomes a single padded position.
pub fn encode_sequence(text: &str, table: &EmbeddingTable, max_len: usize) -> SequenceTensor {
    debug_assert!(max_len >= 1);
    let tokens: Vec<&str> = text.split_whitespace().take(max_len).collect();
    if tokens.is_empty() {
        return SequenceTensor::padding(table.dim);
    }
    let mut data = Vec::with_capacity(tokens.len() * table.dim);
    for token in &tokens {
        match table.lookup(token) {
            Some(row) => data.extend_from_slice(row),
            None => data.resize(data.len() + table.dim, 0.0),
        }
    }
    SequenceTensor {
        dim: table.dim,
        data,
        mask: vec![true; tokens.len()],
    }
}

fn hash_token_weights(
    token: &str,
    doc_tf: &HashMap<String, usize>,
    model: &TfidfModel,
    buckets: usize,
) -> Vec<f64> {
    let mut vec = vec![0.0; buckets];
    for gram in char_ngrams(token) {
        if let Some((_, idf)) = model.lookup(&gram) {
            let tf = *doc_tf.get(&gram).unwrap_or(&0) as f64;
            let bucket = (fnv1a64(gram.as_bytes()) % buckets as u64) as usize;
            vec[bucket] += tf * idf;
        }
    }
    vec
}

/// Bridge TF-IDF features into sequence models: each token becomes a
/// `buckets`-wide vector where every in-vocabulary n-gram of the token adds
/// its document tf x idf weight to bucket `fnv1a64(ngram) mod buckets`.
/// Each nonzero token vector is L2-normalized.
pub fn hash_ngram_sequence(text: &str, model: &TfidfModel, buckets: usize) -> SequenceTensor {
    debug_assert!(buckets >= 16);
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return SequenceTensor::padding(buckets);
    }
    let mut doc_tf: HashMap<String, usize> = HashMap::new();
    for gram in char_ngrams(text) {
        if model.contains(&gram) {
            *doc_tf.entry(gram).or_insert(0) += 1;
        }
    }
    let rows = tokens
        .iter()
        .map(|token| {
            let mut vec = hash_token_weights(token, &doc_tf, model, buckets);
            let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut vec {
                    *v /= norm;
                }
            }
            vec
        })
        .collect();
    SequenceTensor::from_rows(buckets, rows)
}

/// Alternative TF-IDF bridge: the whole document vector as a length-1
/// sequence (dense, width = vocabulary size).
pub fn doc_vector_sequence(text: &str, model: &TfidfModel) -> SequenceTensor {
    let sv = transform_tfidf(model, text);
    if sv.nnz() == 0 {
        return SequenceTensor::padding(model.dim());
    }
    SequenceTensor::from_rows(model.dim(), vec![sv.to_dense()])
}

/// Mean over in-vocabulary token embeddings; zero vector when no token is
/// in the vocabulary.
pub fn mean_pool(table: &EmbeddingTable, text: &str) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim];
    let mut count = 0usize;
    for token in text.split_whitespace() {
        if let Some(row) = table.lookup(token) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
    }
    if count > 0 {
        for s in &mut sum {
            *s /= count as f64;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    /// Independent brute-force TF-IDF oracle: explicit count tables and the
    /// smoothed-idf formula applied directly.
    fn oracle_fit_transform(corpus: &[&str], doc: &str) -> Vec<f64> {
        // document frequency per ngram
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in corpus {
            let mut seen: HashSet<String> = HashSet::new();
            let chars: Vec<char> = d.chars().collect();
            for n in 2..=5usize {
                for start in 0..chars.len().saturating_sub(n - 1) {
                    if start + n <= chars.len() {
                        seen.insert(chars[start..start + n].iter().collect());
                    }
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let mut grams: Vec<&String> = df.keys().collect();
        grams.sort();
        let index_of: HashMap<&String, usize> =
            grams.iter().enumerate().map(|(i, &g)| (g, i)).collect();

        // raw counts of the query doc
        let mut counts: HashMap<String, usize> = HashMap::new();
        let chars: Vec<char> = doc.chars().collect();
        for n in 2..=5usize {
            for start in 0..chars.len().saturating_sub(n - 1) {
                if start + n <= chars.len() {
                    let g: String = chars[start..start + n].iter().collect();
                    counts.insert(g.clone(), counts.get(&g).copied().unwrap_or(0) + 1);
                }
            }
        }

        let n_docs = corpus.len() as f64;
        let mut dense = vec![0.0; grams.len()];
        for (g, c) in &counts {
            if let Some(&i) = index_of.get(g) {
                let idf = ((1.0 + n_docs) / (1.0 + df[g] as f64)).ln() + 1.0;
                dense[i] = *c as f64 * idf;
            }
        }
        let norm = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut dense {
                *v /= norm;
            }
        }
        dense
    }

    #[test]
    fn worked_example_vocab_and_idf() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        assert_eq!(model.dim(), 3);
        let (i_ab, idf_ab) = model.lookup("ab").unwrap();
        let (i_abc, idf_abc) = model.lookup("abc").unwrap();
        let (i_bc, idf_bc) = model.lookup("bc").unwrap();
        assert_eq!((i_ab, i_abc, i_bc), (0, 1, 2)); // lexicographic columns
        assert!((idf_ab - 1.0).abs() < TOL);
        let expected = (3.0f64 / 2.0).ln() + 1.0; // 1.4054651081081644
        assert!((idf_bc - expected).abs() < TOL);
        assert!((idf_abc - expected).abs() < TOL);
        assert!((expected - 1.405_465_108_108_164_4).abs() < TOL);
    }

    #[test]
    fn single_doc_all_idf_one() {
        let model = fit_char_tfidf(&["مرحبا"]).unwrap();
        for gram in model.ngrams() {
            let (_, idf) = model.lookup(gram).unwrap();
            assert!((idf - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn duplicate_docs_match_counting_oracle() {
        let corpus = ["نص نص", "نص نص"];
        let model = fit_char_tfidf(&corpus).unwrap();
        let got = transform_tfidf(&model, "نص نص").to_dense();
        let want = oracle_fit_transform(&corpus, "نص نص");
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < TOL);
        }
    }

    #[test]
    fn transform_matches_oracle_on_small_corpora() {
        let corpora: [&[&str]; 3] = [
            &["ab", "abc"],
            &["يا حيوان", "كلام كثير", "يا حيوان ضحك"],
            &["aa bb", "aa", "cc dd ee", "bb cc", "aa bb cc"],
        ];
        for corpus in corpora {
            let model = fit_char_tfidf(corpus).unwrap();
            for doc in corpus {
                let got = transform_tfidf(&model, doc).to_dense();
                let want = oracle_fit_transform(corpus, doc);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < TOL, "doc {doc:?}");
                }
            }
        }
    }

    #[test]
    fn transform_single_ngram_doc() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        let sv = transform_tfidf(&model, "ab");
        assert_eq!(sv.nnz(), 1);
        assert_eq!(sv.entries()[0].0, 0);
        assert!((sv.entries()[0].1 - 1.0).abs() < TOL);
    }

    #[test]
    fn transform_empty_and_oov_are_zero() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        assert_eq!(transform_tfidf(&model, "").nnz(), 0);
        assert_eq!(transform_tfidf(&model, "zz").nnz(), 0);
        assert_eq!(transform_tfidf(&model, "").dim, 3);
    }

    #[test]
    fn nonzero_vectors_are_unit_norm() {
        let corpus = ["كلام كثير جدا", "يا حيوان", "نص عادي تماما", "ab abc"];
        let model = fit_char_tfidf(&corpus).unwrap();
        for doc in corpus {
            let norm = transform_tfidf(&model, doc).l2_norm();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn idf_decreases_with_document_frequency() {
        let model = fit_char_tfidf(&["aab", "aac", "aad"]).unwrap();
        let (_, idf_aa) = model.lookup("aa").unwrap(); // df = 3
        let (_, idf_ab) = model.lookup("ab").unwrap(); // df = 1
        assert!(idf_aa < idf_ab);
    }

    #[test]
    fn ngram_multiset_permutation_preserves_vector() {
        // 'a' and 'b' swap positions but keep identical 4-char q contexts,
        // so every n-gram multiset (n = 2..=5) is unchanged.
        let s1 = "qqqqaqqqqbqqqq";
        let s2 = "qqqqbqqqqaqqqq";
        let model = fit_char_tfidf(&[s1, "qa qb"]).unwrap();
        assert_eq!(transform_tfidf(&model, s1), transform_tfidf(&model, s2));
    }

    #[test]
    fn tfidf_tsv_round_trip_value_exact() {
        let model = fit_char_tfidf(&["كلام كثير", "نص\tبتاب"]).unwrap();
        let reloaded = TfidfModel::parse_tsv(&model.to_tsv()).unwrap();
        assert_eq!(model, reloaded);
    }

    fn fixture_table() -> EmbeddingTable {
        parse_embeddings("2 3\na 1 0 0\nb 0 1 0\n").unwrap()
    }

    #[test]
    fn embeddings_fixture_loads() {
        let table = fixture_table();
        assert_eq!(table.rows(), 2);
        assert_eq!(table.dim, 3);
        assert_eq!(table.lookup("a").unwrap(), &[1.0, 0.0, 0.0]);
        assert!(table.lookup("zz").is_none());
    }

    #[test]
    fn embeddings_bad_width_names_line() {
        let err = parse_embeddings("2 3\na 1 0 0\nb 0 1\n").unwrap_err();
        match err {
            Error::EmbeddingFormat { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embeddings_duplicate_token_rejected() {
        assert!(parse_embeddings("2 2\na 1 0\na 0 1\n").is_err());
    }

    #[test]
    fn embeddings_row_count_must_match_header() {
        assert!(parse_embeddings("3 2\na 1 0\nb 0 1\n").is_err());
    }

    #[test]
    fn encode_sequence_basic() {
        let table = fixture_table();
        let seq = encode_sequence("a b", &table, 5);
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(seq.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(seq.mask(), &[true, true]);
    }

    #[test]
    fn encode_sequence_empty_is_single_padding() {
        let table = fixture_table();
        let seq = encode_sequence("", &table, 5);
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(seq.mask(), &[false]);
    }

    #[test]
    fn encode_sequence_truncates() {
        let table = fixture_table();
        let seq = encode_sequence("a b a b a b", &table, 4);
        assert_eq!(seq.len(), 4);
    }

    #[test]
    fn encode_sequence_oov_is_zero_with_true_mask() {
        let table = fixture_table();
        let seq = encode_sequence("zz", &table, 5);
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(seq.mask(), &[true]);
    }

    #[test]
    fn hash_sequence_single_ngram_token() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        let buckets = 16;
        let seq = hash_ngram_sequence("ab", &model, buckets);
        assert_eq!(seq.len(), 1);
        let bucket = (fnv1a64("ab".as_bytes()) % buckets as u64) as usize;
        for (i, &v) in seq.row(0).iter().enumerate() {
            if i == bucket {
                assert!((v - 1.0).abs() < TOL);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn hash_sequence_oov_token_is_zero() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        let seq = hash_ngram_sequence("zz", &model, 16);
        assert!(seq.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(seq.mask(), &[true]);
    }

    #[test]
    fn hash_sequence_mass_invariant_across_bucket_counts() {
        let model = fit_char_tfidf(&["كلام كثير", "كلام اخر"]).unwrap();
        let text = "كلام كثير";
        let mut doc_tf: HashMap<String, usize> = HashMap::new();
        for gram in char_ngrams(text) {
            if model.contains(&gram) {
                *doc_tf.entry(gram).or_insert(0) += 1;
            }
        }
        // sum-of-weights oracle: total mass is independent of bucket count
        let expected_mass: f64 = text
            .split_whitespace()
            .flat_map(char_ngrams)
            .filter_map(|g| {
                model
                    .lookup(&g)
                    .map(|(_, idf)| *doc_tf.get(&g).unwrap_or(&0) as f64 * idf)
            })
            .sum();
        for buckets in [16usize, 64] {
            let mass: f64 = text
                .split_whitespace()
                .map(|tok| {
                    hash_token_weights(tok, &doc_tf, &model, buckets)
                        .iter()
                        .sum::<f64>()
                })
                .sum();
            assert!((mass - expected_mass).abs() < 1e-9, "buckets={buckets}");
        }
    }

    #[test]
    fn doc_vector_sequence_is_length_one() {
        let model = fit_char_tfidf(&["ab", "abc"]).unwrap();
        let seq = doc_vector_sequence("ab", &model);
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.dim, 3);
        assert_eq!(seq.row(0), transform_tfidf(&model, "ab").to_dense().as_slice());
    }

    #[test]
    fn mean_pool_examples() {
        let table = fixture_table();
        assert_eq!(mean_pool(&table, "a b"), vec![0.5, 0.5, 0.0]);
        assert_eq!(mean_pool(&table, "a"), vec![1.0, 0.0, 0.0]);
        assert_eq!(mean_pool(&table, "zz yy"), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sequence_reversal_round_trip() {
        let table = fixture_table();
        let seq = encode_sequence("a b a", &table, 5);
        assert_eq!(seq.reversed().reversed(), seq);
        assert_eq!(seq.reversed().row(0), seq.row(2));
    }
}
