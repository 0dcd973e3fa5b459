use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalkit::{FormatScorer, FormatTable, LocationLexicon, RewardWeights};
use crate::imgproc::SsimParams;
use crate::ingest::SamplingParams;
use crate::llm::{EndpointConfig, TemplateSet, ENV_API_BASE};
use crate::stitch::StitchParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Command that splits a video into PNG frames; `{input}` and `{output}`
    /// are substituted.
    pub decoder_cmd: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesConfig {
    /// Directory of `<kind>.toml` files overriding the bundled templates.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Suggestions requested per kind.
    pub suggest_count: usize,
    /// Extra text given to the summarize template.
    pub context: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            suggest_count: 3,
            context: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Location keyword file for the format reward; the bundled list otherwise.
    pub lexicon: Option<PathBuf>,
}

/// Everything a run needs. Loaded from one TOML file; the endpoint URL and
/// key may also come from the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ingest: IngestConfig,
    pub sampling: SamplingParams,
    pub ssim: SsimParams,
    pub stitch: StitchParams,
    /// Absent means no model calls are possible.
    pub endpoint: Option<EndpointConfig>,
    pub templates: TemplatesConfig,
    pub pipeline: PipelineConfig,
    pub reward: RewardWeights,
    pub format: FormatTable,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (or defaults when `None`), applies environment overrides
    /// and validates. Relative paths inside the file resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                if let Some(base) = p.parent() {
                    cfg.resolve_paths(base);
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.templates.dir, &mut self.eval.lexicon].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// `FCMIR_API_BASE` alone is enough to enable the endpoint.
    pub fn apply_env(&mut self) {
        let env_base = std::env::var(ENV_API_BASE).is_ok_and(|v| !v.trim().is_empty());
        if self.endpoint.is_none() && env_base {
            self.endpoint = Some(EndpointConfig::default());
        }
        if let Some(ep) = &mut self.endpoint {
            ep.apply_env();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |section: &str, e: Error| Error::Config(format!("[{section}] {e}"));
        self.sampling.validate().map_err(|e| cfg_err("sampling", e))?;
        self.ssim.validate().map_err(|e| cfg_err("ssim", e))?;
        self.stitch.validate().map_err(|e| cfg_err("stitch", e))?;
        self.reward.validate().map_err(|e| cfg_err("reward", e))?;
        if let Some(ep) = &self.endpoint {
            ep.validate()?;
        }
        if self.pipeline.suggest_count == 0 {
            return Err(Error::Config("[pipeline] suggest_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Result<&EndpointConfig> {
        self.endpoint.as_ref().ok_or_else(|| {
            Error::Config(format!("no endpoint configured: add an [endpoint] section or set {ENV_API_BASE}"))
        })
    }

    pub fn template_set(&self) -> Result<TemplateSet> {
        match &self.templates.dir {
            Some(dir) => TemplateSet::with_overrides(dir).map_err(|e| Error::Config(e.to_string())),
            None => Ok(TemplateSet::default()),
        }
    }

    pub fn format_scorer(&self) -> Result<FormatScorer> {
        let lexicon = match &self.eval.lexicon {
            Some(p) => LocationLexicon::from_file(p).map_err(|e| Error::Config(e.to_string()))?,
            None => LocationLexicon::default(),
        };
        Ok(FormatScorer {
            table: self.format.clone(),
            lexicon,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Hex SHA-256 of a value's JSON form.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(json))
}
