//! Run configuration: one TOML file per experiment.
//!
//! `${NAME}` anywhere in the file is replaced by the environment variable
//! `NAME` before parsing. Relative paths resolve against the file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendSpec;
use crate::cda::CdaConfig;
use crate::corpus_builder::{BuildConfig, CompletenessRule, Quotas};
use crate::critique_synthesis::SynthesisConfig;
use crate::evaluation::report::ReportConfig;
use crate::retrieval::DEFAULT_TOP_K;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: environment variable `{var}` is not set")]
    MissingEnv { path: String, line: usize, var: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Benchmark instances used for corpus construction.
    #[serde(default)]
    pub instances: Option<PathBuf>,
    /// Instances for refinement runs and evaluation; defaults to `instances`.
    #[serde(default)]
    pub eval_instances: Option<PathBuf>,
    /// Passage collection (`doc_id`, `title`, `contents` per line).
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Precomputed retrieval run over `corpus`. Without one, BM25 is used
    /// whenever a corpus is given.
    #[serde(default)]
    pub run: Option<PathBuf>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_jobs() -> usize {
    4
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            instances: None,
            eval_instances: None,
            corpus: None,
            run: None,
            top_k: default_top_k(),
            out_dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default)]
    pub quotas: Quotas,
    #[serde(default)]
    pub completeness_rule: CompletenessRule,
    #[serde(default = "default_top_k")]
    pub h1_context_size: usize,
    #[serde(default = "default_h1_attempts")]
    pub h1_max_attempts: usize,
}

fn default_h1_attempts() -> usize {
    BuildConfig::new(0).h1_max_attempts
}

impl Default for CorpusSection {
    fn default() -> Self {
        let b = BuildConfig::new(0);
        CorpusSection {
            quotas: b.quotas,
            completeness_rule: b.completeness_rule,
            h1_context_size: b.h1_context_size,
            h1_max_attempts: b.h1_max_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub synth: Option<SynthesisConfig>,
    #[serde(default)]
    pub cda: Option<CdaConfig>,
    #[serde(default)]
    pub evaluate: ReportConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub path: PathBuf,
}

/// Substitutes `${NAME}` with environment values.
pub fn interpolate_env(text: &str, origin: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let mut rest = line;
        while let Some(start) = rest.find("${") {
            let Some(len) = rest[start + 2..].find('}') else { break };
            let var = &rest[start + 2..start + 2 + len];
            let value = std::env::var(var).map_err(|_| ConfigError::MissingEnv {
                path: origin.to_string(),
                line: i + 1,
                var: var.to_string(),
            })?;
            out.push_str(&rest[..start]);
            out.push_str(&value);
            rest = &rest[start + 3 + len..];
        }
        out.push_str(rest);
    }
    Ok(out)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let path = origin.display().to_string();
        let text = interpolate_env(text, &path)?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.clone(),
            line: e.span().map_or(0, |s| line_of(&text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.path = origin.to_path_buf();
        cfg.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Config::parse(&text, path)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid { path: self.path.display().to_string(), message };
        for spec in &self.backends {
            spec.validate().map_err(|e| invalid(format!("backend `{}`: {e}", spec.id)))?;
        }
        if let Some(synth) = &self.synth {
            synth.validate().map_err(|e| invalid(e.to_string()))?;
        }
        if self.data.top_k == 0 {
            return Err(invalid("data.top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.data.out_dir)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            seed: self.seed,
            quotas: self.corpus.quotas,
            completeness_rule: self.corpus.completeness_rule,
            h1_context_size: self.corpus.h1_context_size,
            h1_max_attempts: self.corpus.h1_max_attempts,
        }
    }
}
