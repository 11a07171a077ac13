//! Text-generation backends: request/response types, the scripted backend
//! used by tests, the OpenAI-compatible remote backend, prompt templates and
//! output parsers.

mod parse;
mod remote;
mod scripted;
mod templates;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{extract_json_block, parse_labeled_line, parse_labeled_line_any, parse_verdict};
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{ScriptRule, ScriptedBackend};
pub use templates::{TemplateError, TemplateSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend returned no usable text for {0}")]
    BackendRefusal(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no JSON found in model output")]
    NoJsonFound,
    #[error("model output JSON unparseable after repairs: {0}")]
    UnparseableJson(String),
    #[error("label `{0}` not found in model output")]
    LabelNotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    SopAl,
    SopTcotDescribe,
    SopTcotTranslate,
    SceneEnrich,
    DialogueWrite,
    SampleAction,
    GenResponse,
    RewardJudge,
    UserState,
    Cot,
    CotSop,
    TotVote,
    UserSim,
    ProfileSim,
}

impl TemplateId {
    pub const ALL: [TemplateId; 14] = [
        TemplateId::SopAl,
        TemplateId::SopTcotDescribe,
        TemplateId::SopTcotTranslate,
        TemplateId::SceneEnrich,
        TemplateId::DialogueWrite,
        TemplateId::SampleAction,
        TemplateId::GenResponse,
        TemplateId::RewardJudge,
        TemplateId::UserState,
        TemplateId::Cot,
        TemplateId::CotSop,
        TemplateId::TotVote,
        TemplateId::UserSim,
        TemplateId::ProfileSim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SopAl => "SOP_AL",
            TemplateId::SopTcotDescribe => "SOP_TCOT_DESCRIBE",
            TemplateId::SopTcotTranslate => "SOP_TCOT_TRANSLATE",
            TemplateId::SceneEnrich => "SCENE_ENRICH",
            TemplateId::DialogueWrite => "DIALOGUE_WRITE",
            TemplateId::SampleAction => "SAMPLE_ACTION",
            TemplateId::GenResponse => "GEN_RESPONSE",
            TemplateId::RewardJudge => "REWARD_JUDGE",
            TemplateId::UserState => "USER_STATE",
            TemplateId::Cot => "COT",
            TemplateId::CotSop => "COT_SOP",
            TemplateId::TotVote => "TOT_VOTE",
            TemplateId::UserSim => "USER_SIM",
            TemplateId::ProfileSim => "PROFILE_SIM",
        }
    }

    /// Template file name under `templates/`.
    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str().to_ascii_lowercase())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| LlmError::Config(format!("unknown template id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Sampling {
    /// SOP prediction.
    pub const TASK1: Sampling = Sampling {
        temperature: 0.1,
        top_p: 0.1,
    };
    /// Dialogue planning and data generation.
    pub const TASK2: Sampling = Sampling {
        temperature: 1.0,
        top_p: 0.95,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template_id: TemplateId,
    pub rendered_text: String,
    pub temperature: f64,
    pub top_p: f64,
    pub n_samples: usize,
}

impl PromptRequest {
    pub fn new(template_id: TemplateId, rendered_text: String, sampling: Sampling, n_samples: usize) -> Self {
        PromptRequest {
            template_id,
            rendered_text,
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            n_samples,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!("top_p {}", self.top_p)));
        }
        if self.n_samples == 0 {
            return Err(LlmError::InvalidRequest("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub sample_index: usize,
    /// Remote backends report usage for the whole request on sample 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

pub fn total_usage(completions: &[Completion]) -> TokenUsage {
    let mut t = TokenUsage::default();
    for c in completions {
        if let Some(u) = c.usage {
            t.add(u);
        }
    }
    t
}

/// A text-generation backend. Implementations must be callable from many
/// threads at once.
pub trait Backend: Send + Sync {
    /// Returns exactly `req.n_samples` completions in sample order.
    fn complete(&self, req: &PromptRequest) -> Result<Vec<Completion>, LlmError>;

    /// A handle for one conversation. Backends with per-conversation state
    /// (scripted call counters) start fresh; stateless ones return a clone.
    fn fork_session(&self) -> SharedBackend;

    fn describe(&self) -> String;

    /// True when reported usage is an estimate rather than provider counts.
    fn usage_is_estimate(&self) -> bool {
        false
    }
}

pub type SharedBackend = Arc<dyn Backend>;

/// Backend selection as stored in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    RemoteChatApi(RemoteConfig),
    Scripted {
        /// Rule file; relative paths resolve against the config file.
        rules: PathBuf,
    },
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self {
            BackendConfig::RemoteChatApi(r) => r.validate(),
            BackendConfig::Scripted { rules } if rules.as_os_str().is_empty() => {
                Err(LlmError::Config("scripted backend needs a rule file".into()))
            }
            BackendConfig::Scripted { .. } => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: BackendConfig =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        if let BackendConfig::Scripted { rules } = &mut cfg {
            if rules.is_relative() {
                if let Some(dir) = path.parent() {
                    *rules = dir.join(&*rules);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<SharedBackend, LlmError> {
        self.validate()?;
        Ok(match self {
            BackendConfig::RemoteChatApi(r) => Arc::new(RemoteBackend::new(r.clone())),
            BackendConfig::Scripted { rules } => Arc::new(ScriptedBackend::from_file(rules)?),
        })
    }
}

pub(crate) fn default_timeout() -> Duration {
    Duration::from_secs(60)
}
