//! The run configuration file.
//!
//! ```toml
//! workers = 4
//!
//! [backend]
//! kind = "scripted"          # or "http"
//! endpoint = "http://localhost:8000/v1/chat/completions"
//! model = "agent-7b"
//!
//! [scripted]
//! agent_rate = 0.4
//! reflector_rate = 0.5
//! seed = 7
//!
//! [generation]
//! k = 3
//!
//! [sandbox]
//! python = "python3"
//! timeout_secs = 5.0
//! ```
//!
//! Every key is optional. `RE_REST_*` environment variables override the
//! HTTP settings; command-line flags override both.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::backend::{Backend, BackendError, HttpBackend, HttpConfig, ScriptedPolicy};
use crate::envs::{EnvError, EnvFactory, Sandbox, SandboxLimits, WikiCorpus};
use crate::prompts::{PromptError, PromptStore};
use crate::types::{ConfigError, Domain, GenerationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(flatten)]
    pub http: HttpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedSection {
    pub agent_rate: f64,
    pub reflector_rate: f64,
    /// Falls back to `generation.rng_seed`.
    pub seed: Option<u64>,
    /// Extra bank file merged over the bundled banks.
    pub bank: Option<PathBuf>,
}

impl Default for ScriptedSection {
    fn default() -> Self {
        Self { agent_rate: 0.4, reflector_rate: 0.5, seed: None, bank: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptsSection {
    /// Directory overriding the bundled templates file by file.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxSection {
    pub python: String,
    #[serde(flatten)]
    pub limits: SandboxLimits,
}

impl Default for SandboxSection {
    fn default() -> Self {
        Self { python: "python3".into(), limits: SandboxLimits::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    /// Wiki corpus JSON; the bundled corpus when absent.
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 means one per logical CPU.
    pub workers: usize,
    pub backend: BackendSection,
    pub scripted: ScriptedSection,
    pub generation: GenerationConfig,
    pub prompts: PromptsSection,
    pub sandbox: SandboxSection,
    pub paths: PathsSection,
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error(transparent)]
    Generation(#[from] ConfigError),
    #[error("scripted rates must lie in [0, 1]")]
    Rate,
    #[error(transparent)]
    Prompts(#[from] PromptError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn read(path: &Path) -> Result<String, SetupError> {
    std::fs::read_to_string(path).map_err(|e| SetupError::Io { path: path.display().to_string(), message: e.to_string() })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, SetupError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SetupError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, SetupError> {
        match path {
            Some(p) => Self::from_toml(&read(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        self.generation.validate()?;
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ok(self.scripted.agent_rate) || !ok(self.scripted.reflector_rate) {
            return Err(SetupError::Rate);
        }
        Ok(())
    }

    pub fn scripted_seed(&self) -> u64 {
        self.scripted.seed.unwrap_or(self.generation.rng_seed)
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }

    pub fn scripted_policy(&self) -> Result<ScriptedPolicy, SetupError> {
        let mut policy = ScriptedPolicy::new(assets::all_banks(), self.scripted.agent_rate, self.scripted.reflector_rate, self.scripted_seed());
        if let Some(path) = &self.scripted.bank {
            let extra = ScriptedPolicy::bank_from_json(&read(path)?).map_err(|e| SetupError::Parse(format!("bank: {e}")))?;
            policy.extend_bank(extra);
        }
        Ok(policy)
    }

    pub fn backend(&self) -> Result<Arc<dyn Backend>, SetupError> {
        Ok(match self.backend.kind {
            BackendKind::Scripted => Arc::new(self.scripted_policy()?),
            BackendKind::Http => {
                let mut http = self.backend.http.clone();
                http.apply_env();
                Arc::new(HttpBackend::new(http)?)
            }
        })
    }

    pub fn prompt_store(&self) -> Result<PromptStore, SetupError> {
        Ok(match &self.prompts.dir {
            Some(dir) => PromptStore::from_dir(dir)?,
            None => PromptStore::bundled(),
        })
    }

    /// Environment factory for `domain`. Only code tasks need the sandbox,
    /// so a missing interpreter is an error only there.
    pub fn env_factory(&self, domain: Domain) -> Result<EnvFactory, SetupError> {
        let mut factory = EnvFactory::new(self.generation.score_threshold);
        match domain {
            Domain::Wikiqa => {
                let corpus = match &self.paths.corpus {
                    Some(p) => WikiCorpus::from_json(&read(p)?)?,
                    None => assets::corpus(),
                };
                factory = factory.with_corpus(corpus);
            }
            Domain::Codeexec => {
                factory = factory.with_sandbox(Sandbox::new(&self.sandbox.python, self.sandbox.limits.clone())?);
            }
            Domain::Household => {}
        }
        Ok(factory)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            "workers = 2\n[backend]\nkind = \"http\"\nendpoint = \"http://x\"\nmax_retries = 1\n[scripted]\nagent_rate = 0.1\nseed = 9\n[generation]\nk = 6\n[generation.max_react_steps]\nwikiqa = 5\nhousehold = 50\ncodeexec = 1\n[sandbox]\ntimeout_secs = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.backend.kind, BackendKind::Http);
        assert_eq!(cfg.backend.http.endpoint, "http://x");
        assert_eq!(cfg.backend.http.max_retries, 1);
        assert_eq!(cfg.scripted_seed(), 9);
        assert_eq!(cfg.generation.k, 6);
        assert_eq!(cfg.generation.max_react_steps.wikiqa, 5);
        assert_eq!(cfg.sandbox.limits.timeout_secs, 2.0);
        assert_eq!(cfg.sandbox.python, "python3");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[generation]\nk = 0").is_err());
        assert!(RunConfig::from_toml("[generation]\nreflection_iterations = 2").is_err());
        assert!(RunConfig::from_toml("[scripted]\nagent_rate = 1.5").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.scripted.seed = Some(3);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
