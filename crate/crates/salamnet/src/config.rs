//! Run configuration: a line-oriented `key = value` file with `[section]`
//! headers, overridable flag by flag on the command line. Unknown sections
//! or keys are rejected. `SALAMNET_DATA_DIR` supplies the default lexicon
//! directory when `[paths] data_dir` is not set.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{FeatureKind, Hyper, ModelArch, ModelSpec, TfidfMode};
use crate::preprocess::{LexiconSource, PipelineConfig};

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    // [paths]
    pub data_dir: Option<PathBuf>,
    pub emoji: Option<PathBuf>,
    pub dialect: Option<PathBuf>,
    pub hypernyms: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    // [model]
    pub arch: Option<ModelArch>,
    pub features: Option<FeatureKind>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub max_len: Option<usize>,
    pub seed: Option<u64>,
    // [features]
    pub buckets: Option<usize>,
    pub tfidf_mode: Option<TfidfMode>,
    // [run]
    pub out_dir: Option<PathBuf>,
    pub k: Option<usize>,
    pub jobs: Option<usize>,
    pub threshold: Option<f64>,
    pub upsample: Option<bool>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&content)
    }

    pub fn parse(content: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "paths" | "model" | "features" | "run") {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{section}]",
                        idx + 1
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", idx + 1))
            })?;
            cfg.set(&section, key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("line {}: {e}", idx + 1))
            })?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let bad_key = || Error::Config(format!("unknown key {key:?} in section [{section}]"));
        let bad_value = || Error::Config(format!("invalid value {value:?} for key {key:?}"));
        match (section, key) {
            ("paths", "data_dir") => self.data_dir = Some(value.into()),
            ("paths", "emoji") => self.emoji = Some(value.into()),
            ("paths", "dialect") => self.dialect = Some(value.into()),
            ("paths", "hypernyms") => self.hypernyms = Some(value.into()),
            ("paths", "stopwords") => self.stopwords = Some(value.into()),
            ("paths", "embeddings") => self.embeddings = Some(value.into()),
            ("model", "arch") => self.arch = Some(ModelArch::parse(value).ok_or_else(bad_value)?),
            ("model", "features") => {
                self.features = Some(FeatureKind::parse(value).ok_or_else(bad_value)?)
            }
            ("model", "epochs") => self.epochs = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "dropout") => self.dropout = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "hidden") => self.hidden = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "layers") => self.layers = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "lr") => self.lr = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "batch") => self.batch = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "max_len") => self.max_len = Some(value.parse().map_err(|_| bad_value())?),
            ("model", "seed") => self.seed = Some(value.parse().map_err(|_| bad_value())?),
            ("features", "buckets") => self.buckets = Some(value.parse().map_err(|_| bad_value())?),
            ("features", "tfidf_mode") => {
                self.tfidf_mode = Some(TfidfMode::parse(value).ok_or_else(bad_value)?)
            }
            ("run", "out_dir") => self.out_dir = Some(value.into()),
            ("run", "k") => self.k = Some(value.parse().map_err(|_| bad_value())?),
            ("run", "jobs") => self.jobs = Some(value.parse().map_err(|_| bad_value())?),
            ("run", "threshold") => self.threshold = Some(value.parse().map_err(|_| bad_value())?),
            ("run", "upsample") => self.upsample = Some(value.parse().map_err(|_| bad_value())?),
            _ => return Err(bad_key()),
        }
        Ok(())
    }

    /// Fill `data_dir` from `SALAMNET_DATA_DIR` when unset.
    pub fn with_env_defaults(mut self) -> RunConfig {
        if self.data_dir.is_none() {
            if let Some(dir) = std::env::var_os("SALAMNET_DATA_DIR") {
                self.data_dir = Some(PathBuf::from(dir));
            }
        }
        self
    }

    /// Model spec for `arch`/`feature`: architecture defaults, then any
    /// configured overrides.
    pub fn spec(&self, arch: ModelArch, feature: FeatureKind) -> ModelSpec {
        let mut spec = ModelSpec::defaults(arch, feature);
        let h = &mut spec.hyper;
        let apply = |target: &mut Hyper| {
            if let Some(v) = self.epochs {
                target.epochs = v;
            }
            if let Some(v) = self.dropout {
                target.dropout = v;
            }
            if let Some(v) = self.hidden {
                target.hidden = v;
            }
            if let Some(v) = self.layers {
                target.layers = v;
            }
            if let Some(v) = self.lr {
                target.lr = v;
            }
            if let Some(v) = self.batch {
                target.batch = v;
            }
            if let Some(v) = self.max_len {
                target.max_len = v;
            }
            if let Some(v) = self.seed {
                target.seed = v;
            }
        };
        apply(h);
        if let Some(v) = self.buckets {
            spec.feature_cfg.buckets = v;
        }
        if let Some(v) = self.tfidf_mode {
            spec.feature_cfg.tfidf_mode = v;
        }
        spec
    }

    fn lexicon_source(&self, explicit: &Option<PathBuf>, filename: &str) -> Result<LexiconSource> {
        if let Some(p) = explicit {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "configured lexicon file {} does not exist",
                    p.display()
                )));
            }
            return Ok(LexiconSource::Path(p.clone()));
        }
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "data_dir {} is not a directory",
                    dir.display()
                )));
            }
            let p = dir.join(filename);
            if p.is_file() {
                return Ok(LexiconSource::Path(p));
            }
        }
        Ok(LexiconSource::Bundled)
    }

    /// Resolve lexicon sources: explicit path, else `data_dir/<name>` when
    /// present, else the copies compiled into the binary.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            emoji: self.lexicon_source(&self.emoji, "emoji.tsv")?,
            dialect: self.lexicon_source(&self.dialect, "dialect.tsv")?,
            hypernyms: self.lexicon_source(&self.hypernyms, "hypernyms.tsv")?,
            stopwords: self.lexicon_source(&self.stopwords, "stopwords.txt")?,
            ..PipelineConfig::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = RunConfig::parse(
            "# comment\n[model]\narch = bigru\nseed = 7\ndropout = 0.25\n[run]\nk = 5\nupsample = true\n",
        )
        .unwrap();
        assert_eq!(cfg.arch, Some(ModelArch::BiGru));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.dropout, Some(0.25));
        assert_eq!(cfg.k, Some(5));
        assert_eq!(cfg.upsample, Some(true));
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(RunConfig::parse("[model]\nnope = 1\n").is_err());
        assert!(RunConfig::parse("[wat]\n").is_err());
        assert!(RunConfig::parse("[model]\narch ~ gru\n").is_err());
        assert!(RunConfig::parse("[model]\narch = transformer\n").is_err());
    }

    #[test]
    fn spec_overrides_defaults() {
        let cfg = RunConfig::parse("[model]\nhidden = 12\nseed = 3\n[features]\nbuckets = 32\n")
            .unwrap();
        let spec = cfg.spec(ModelArch::Gru, FeatureKind::Tfidf);
        assert_eq!(spec.hyper.hidden, 12);
        assert_eq!(spec.hyper.seed, 3);
        assert_eq!(spec.hyper.epochs, 50); // untouched default
        assert_eq!(spec.feature_cfg.buckets, 32);
    }

    #[test]
    fn missing_explicit_lexicon_is_a_config_error() {
        let cfg = RunConfig::parse("[paths]\nemoji = /no/such/file.tsv\n").unwrap();
        assert!(cfg.pipeline_config().is_err());
    }

    #[test]
    fn bundled_lexicons_when_nothing_configured() {
        let cfg = RunConfig::default();
        let pc = cfg.pipeline_config().unwrap();
        assert_eq!(pc.emoji, LexiconSource::Bundled);
    }
}
