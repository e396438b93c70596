//! Synthetic labeled corpus: a desk-scale stand-in for the real dataset.
//! The offensive class is defined by planted insult-like marker tokens
//! among neutral noise tokens; every token is a fixed point of the
//! preprocessing pipeline so the planted signal survives normalization.

use crate::corpus::{Corpus, Label, SplitTag, Tweet};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MARKER_TOKENS: [&str; 6] = ["خسيس", "حقير", "وضيع", "سافل", "تافه", "لئيم"];

pub const NOISE_TOKENS: [&str; 40] = [
    "شمس", "قمر", "بحر", "جبل", "كتاب", "مدرسه", "بيت", "شجره", "ورده", "قهوه",
    "صباح", "مساء", "طريق", "مدينه", "قريه", "سماء", "نجمه", "غيمه", "مطر", "ثلج",
    "نهر", "حديقه", "زهره", "قلم", "ورق", "باب", "نافذه", "جدار", "ملعب", "شارع",
    "سوق", "مطبخ", "غرفه", "سرير", "كرسي", "طاوله", "مصباح", "هاتف", "ساعه", "قميص",
];

/// Generate `n` tweets with `offensive_ratio` of them OFF (rounded). OFF
/// tweets carry one or two marker tokens; label order is shuffled under the
/// seed so positional splits keep roughly the requested ratio.
pub fn generate_synthetic(n: usize, seed: u64, offensive_ratio: f64) -> Result<Corpus> {
    if n < 20 {
        return Err(Error::Config(format!(
            "synthetic corpus needs at least 20 tweets, got {n}"
        )));
    }
    if !(offensive_ratio > 0.0 && offensive_ratio < 1.0) {
        return Err(Error::Config(format!(
            "offensive ratio must be strictly between 0 and 1, got {offensive_ratio}"
        )));
    }
    let n_off = ((n as f64) * offensive_ratio).round() as usize;
    if n_off == 0 || n_off == n {
        return Err(Error::Config(
            "requested ratio leaves one class empty".into(),
        ));
    }

    let mut rng = Rng::seed_from_u64(seed);
    let mut labels = vec![Label::Off; n_off];
    labels.resize(n, Label::Not);
    rng.shuffle(&mut labels);

    let width = n.to_string().len().max(5);
    let tweets = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let len = 4 + rng.below(4);
            let mut toks: Vec<&str> = (0..len)
                .map(|_| NOISE_TOKENS[rng.below(NOISE_TOKENS.len())])
                .collect();
            if label == Label::Off {
                for _ in 0..1 + rng.below(2) {
                    let pos = rng.below(toks.len() + 1);
                    toks.insert(pos, MARKER_TOKENS[rng.below(MARKER_TOKENS.len())]);
                }
            }
            Tweet {
                id: format!("syn{i:0width$}"),
                text: toks.join(" "),
                label,
            }
        })
        .collect();
    Corpus::from_tweets(tweets, SplitTag::Unsplit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Pipeline;

    #[test]
    fn ratio_is_exact_after_rounding() {
        let corpus = generate_synthetic(100, 1, 0.19).unwrap();
        assert_eq!(corpus.class_counts(), (19, 81));
        assert_eq!(corpus.len(), 100);
    }

    #[test]
    fn same_seed_identical_corpus() {
        let a = generate_synthetic(50, 9, 0.3).unwrap();
        let b = generate_synthetic(50, 9, 0.3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(50, 10, 0.3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_ratios_rejected() {
        assert!(generate_synthetic(100, 1, 0.0).is_err());
        assert!(generate_synthetic(100, 1, 1.0).is_err());
        assert!(generate_synthetic(100, 1, 0.001).is_err());
        assert!(generate_synthetic(10, 1, 0.5).is_err());
    }

    #[test]
    fn off_tweets_contain_markers_and_not_tweets_do_not() {
        let corpus = generate_synthetic(200, 3, 0.25).unwrap();
        for tweet in corpus.iter() {
            let has_marker = tweet
                .text
                .split_whitespace()
                .any(|t| MARKER_TOKENS.contains(&t));
            assert_eq!(has_marker, tweet.label == Label::Off, "{}", tweet.text);
        }
    }

    #[test]
    fn tokens_survive_the_bundled_pipeline() {
        let pipeline = Pipeline::bundled().unwrap();
        for tok in MARKER_TOKENS.iter().chain(NOISE_TOKENS.iter()) {
            assert_eq!(pipeline.apply(tok), *tok, "token {tok} is not a fixed point");
        }
        let corpus = generate_synthetic(40, 5, 0.25).unwrap();
        for tweet in corpus.iter() {
            assert_eq!(pipeline.apply(&tweet.text), tweet.text);
        }
    }

    #[test]
    fn marker_and_noise_vocabularies_are_disjoint() {
        for m in MARKER_TOKENS {
            assert!(!NOISE_TOKENS.contains(&m));
        }
    }
}
