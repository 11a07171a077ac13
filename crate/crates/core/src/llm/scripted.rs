use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Backend, Completion, LlmError, PromptRequest, SharedBackend, TemplateId, TokenUsage};

/// One scripted reply rule. A rule fires when the request uses
/// `template_id` and every pattern occurs in the prompt, in order. With
/// `scope_after_last` set, patterns are only searched after the last
/// occurrence of that marker (for example the latest user line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub template_id: TemplateId,
    #[serde(default)]
    pub patterns: Vec<String>,
    pub responses: Vec<String>,
    /// Walk through `responses` one call at a time (per session) instead of
    /// indexing by sample, repeating the last one when exhausted.
    #[serde(default)]
    pub counter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_after_last: Option<String>,
}

impl ScriptRule {
    pub fn new(template_id: TemplateId, patterns: &[&str], responses: &[&str]) -> Self {
        ScriptRule {
            template_id,
            patterns: patterns.iter().map(|s| s.to_string()).collect(),
            responses: responses.iter().map(|s| s.to_string()).collect(),
            counter: false,
            scope_after_last: None,
        }
    }

    pub fn counted(mut self) -> Self {
        self.counter = true;
        self
    }

    pub fn after_last(mut self, marker: &str) -> Self {
        self.scope_after_last = Some(marker.to_string());
        self
    }

    fn matches(&self, req: &PromptRequest) -> bool {
        if self.template_id != req.template_id {
            return false;
        }
        let mut hay: &str = &req.rendered_text;
        if let Some(marker) = &self.scope_after_last {
            if let Some(i) = hay.rfind(marker.as_str()) {
                hay = &hay[i + marker.len()..];
            }
        }
        let mut pos = 0;
        for p in &self.patterns {
            match hay[pos..].find(p.as_str()) {
                Some(i) => pos += i + p.len(),
                None => return false,
            }
        }
        true
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RuleFile {
    Wrapped { rules: Vec<ScriptRule> },
    Bare(Vec<ScriptRule>),
}

/// Deterministic backend driven by first-match-wins rules.
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Arc<Vec<ScriptRule>>,
    counters: Mutex<HashMap<usize, usize>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend {
            rules: Arc::new(rules),
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let file: RuleFile =
            serde_json::from_str(text).map_err(|e| LlmError::Config(format!("scripted rules: {e}")))?;
        Ok(Self::new(match file {
            RuleFile::Wrapped { rules } | RuleFile::Bare(rules) => rules,
        }))
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &PromptRequest) -> Result<Vec<Completion>, LlmError> {
        req.validate()?;
        let Some((idx, rule)) = self.rules.iter().enumerate().find(|(_, r)| r.matches(req)) else {
            return Err(LlmError::BackendRefusal(format!("{} (no scripted rule)", req.template_id)));
        };
        if rule.responses.is_empty() {
            return Err(LlmError::BackendRefusal(format!("{} (empty rule)", req.template_id)));
        }
        let call = if rule.counter {
            let mut counters = self.counters.lock().expect("counter lock");
            let c = counters.entry(idx).or_insert(0);
            let now = *c;
            *c += 1;
            Some(now)
        } else {
            None
        };
        let prompt_tokens = req.rendered_text.chars().count() as u64;
        (0..req.n_samples)
            .map(|i| {
                let pick = match call {
                    Some(c) => c.min(rule.responses.len() - 1),
                    None => i % rule.responses.len(),
                };
                let text = rule.responses[pick].clone();
                if text.trim().is_empty() {
                    return Err(LlmError::BackendRefusal(format!("{} (empty response)", req.template_id)));
                }
                let usage = TokenUsage {
                    prompt_tokens: if i == 0 { prompt_tokens } else { 0 },
                    completion_tokens: text.chars().count() as u64,
                };
                Ok(Completion {
                    text,
                    sample_index: i,
                    usage: Some(usage),
                })
            })
            .collect()
    }

    fn fork_session(&self) -> SharedBackend {
        Arc::new(ScriptedBackend {
            rules: Arc::clone(&self.rules),
            counters: Mutex::new(HashMap::new()),
        })
    }

    fn describe(&self) -> String {
        format!("scripted ({} rules)", self.rules.len())
    }

    fn usage_is_estimate(&self) -> bool {
        true
    }
}
