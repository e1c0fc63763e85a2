//! Experiment configuration, read from TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use pic_core::corpus::CorpusSelector;
use pic_core::promptkit::PromptMethod;
use pic_core::text::sha256_hex;
use pic_gateway::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

fn default_concurrency() -> usize {
    4
}

fn default_selector() -> CorpusSelectorField {
    CorpusSelectorField(CorpusSelector::All)
}

/// Selector stored in its string form (`all`, `toxic`, `sample:N:SEED`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSelectorField(pub CorpusSelector);

impl Serialize for CorpusSelectorField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CorpusSelectorField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(CorpusSelectorField).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Annotated pairs (only full-agreement pairs are evaluated).
    pub corpus: PathBuf,
    /// Inference-chain exemplars; required by shot-based and ablation methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<PathBuf>,
    #[serde(default = "default_selector")]
    pub selector: CorpusSelectorField,
    pub methods: Vec<PromptMethod>,
    pub models: Vec<ModelSpec>,
    /// Explicit shot exemplar ids, in order; default is ascending pair id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_set: Option<Vec<String>>,
    /// Directory of template overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub cache_dir: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Errored plus unparsed records tolerated before the run counts as failed.
    #[serde(default)]
    pub error_budget: usize,
    /// Fallback answer of mock models: `hash` or a constant text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_fallback: Option<String>,
}

impl ExperimentConfig {
    /// Parse TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(source: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(source).map_err(|e| RunError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.cache_dir);
        resolve(&mut cfg.output);
        if let Some(p) = cfg.exemplars.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.templates.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| RunError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&source, path.parent().unwrap_or(Path::new(".")))
    }

    /// Route one seed everywhere randomness enters: the config itself, a
    /// sampling selector, and every model that has no seed of its own.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let CorpusSelector::Sample { n, .. } = self.selector.0 {
            self.selector = CorpusSelectorField(CorpusSelector::Sample { n, seed });
        }
        for m in &mut self.models {
            m.seed.get_or_insert(seed);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(RunError::Config("methods must not be empty".into()));
        }
        if self.models.is_empty() {
            return Err(RunError::Config("models must not be empty".into()));
        }
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !seen.insert(*m) {
                return Err(RunError::Config(format!("method {m} listed twice")));
            }
        }
        let mut names = HashSet::new();
        for spec in &self.models {
            spec.validate()?;
            if !names.insert(spec.model_name.as_str()) {
                return Err(RunError::Config(format!(
                    "model {} listed twice",
                    spec.model_name
                )));
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the records: inputs (by content),
    /// selector, methods, models, shots and seed. Concurrency, cache and
    /// output locations are excluded.
    pub fn config_hash(&self) -> Result<String> {
        let digest = |p: &Path| -> Result<String> {
            std::fs::read(p)
                .map(|b| sha256_hex(&b))
                .map_err(|e| RunError::Io {
                    path: p.to_path_buf(),
                    source: e,
                })
        };
        let templates = match &self.templates {
            Some(dir) => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|e| RunError::Io {
                        path: dir.clone(),
                        source: e,
                    })?
                    .flatten()
                    .map(|e| e.path())
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                let mut parts = Vec::new();
                for f in files {
                    let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    parts.push(format!("{name}:{}", digest(&f)?));
                }
                Some(parts)
            }
            None => None,
        };
        let canonical = serde_json::json!({
            "corpus": digest(&self.corpus)?,
            "exemplars": self.exemplars.as_deref().map(digest).transpose()?,
            "templates": templates,
            "selector": self.selector.0.to_string(),
            "methods": self.methods,
            "models": self.models,
            "exemplar_set": self.exemplar_set,
            "seed": self.seed,
            "mock_fallback": self.mock_fallback,
        });
        Ok(sha256_hex(canonical.to_string().as_bytes()))
    }
}
