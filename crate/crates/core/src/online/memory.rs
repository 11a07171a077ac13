use serde::{Deserialize, Serialize};

use crate::sop::DialoguePath;
use crate::task::{DialogueTurn, QualifiedLabel, TaskDefinition};

/// The user's side of the turn being planned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingUser {
    pub utterance: String,
    pub state: Option<QualifiedLabel>,
}

/// Dialogue so far: completed turns plus the user's latest reply, if the
/// agent has not answered it yet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub history: Vec<DialogueTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingUser>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_turns(history: Vec<DialogueTurn>) -> Self {
        WorkingMemory { history, pending: None }
    }

    pub fn with_user(mut self, utterance: &str) -> Self {
        self.pending = Some(PendingUser {
            utterance: utterance.to_string(),
            state: None,
        });
        self
    }

    /// True before the agent's opening line.
    pub fn is_opening(&self) -> bool {
        self.history.is_empty() && self.pending.is_none()
    }

    pub fn set_pending_state(&mut self, state: QualifiedLabel) {
        if let Some(p) = &mut self.pending {
            p.state = Some(state);
        }
    }

    /// Closes the pending turn with the agent's action and reply.
    pub fn complete_turn(&mut self, action: QualifiedLabel, response: String) -> &DialogueTurn {
        let pending = self.pending.take();
        self.history.push(DialogueTurn {
            user_utterance: pending.as_ref().map(|p| p.utterance.clone()).unwrap_or_default(),
            user_state: pending.and_then(|p| p.state),
            agent_action: action,
            agent_response: response,
        });
        self.history.last().expect("just pushed")
    }

    /// `Agent.Start` followed by each turn's user state and agent action,
    /// then the pending user state if known.
    pub fn observed_path(&self) -> DialoguePath {
        let mut labels = vec![QualifiedLabel::agent("Start")];
        for t in &self.history {
            if let Some(s) = &t.user_state {
                labels.push(s.clone());
            }
            labels.push(t.agent_action.clone());
        }
        if let Some(s) = self.pending.as_ref().and_then(|p| p.state.clone()) {
            labels.push(s);
        }
        DialoguePath::new(labels).expect("starts with Agent.Start")
    }

    pub fn agent_actions(&self) -> impl Iterator<Item = &QualifiedLabel> {
        self.history.iter().map(|t| &t.agent_action)
    }

    /// Conversation rendered for prompts, oldest first. User states are
    /// included when `with_states` is set.
    pub fn render_context(&self, with_states: bool) -> String {
        let mut out = String::new();
        for t in &self.history {
            if !t.is_opening() {
                out.push_str(&format!("User Response: {}\n", t.user_utterance));
                if with_states {
                    if let Some(s) = &t.user_state {
                        out.push_str(&format!("User State: {}\n", s.name()));
                    }
                }
            }
            out.push_str(&format!("Agent Action: {}\n", t.agent_action.name()));
            out.push_str(&format!("Agent Response: {}\n", t.agent_response));
        }
        if let Some(p) = &self.pending {
            out.push_str(&format!("User Response: {}\n", p.utterance));
            if with_states {
                if let Some(s) = &p.state {
                    out.push_str(&format!("User State: {}\n", s.name()));
                }
            }
        }
        if out.is_empty() {
            out.push_str("(the call is just starting; the agent speaks first)\n");
        }
        out
    }
}

pub(crate) fn names_json<'a>(labels: impl IntoIterator<Item = &'a QualifiedLabel>) -> String {
    let names: Vec<&str> = labels.into_iter().map(QualifiedLabel::name).collect();
    serde_json::to_string(&names).unwrap_or_default()
}

pub(crate) fn user_info(task: &TaskDefinition) -> String {
    task.user_profile.to_json_string()
}

/// Guidance paragraph appended to action-selection prompts.
pub(crate) fn guidance_block(actions: &[QualifiedLabel]) -> String {
    if actions.is_empty() {
        return String::new();
    }
    format!(
        "\nFollowing this task's standard procedure, give priority to these agent actions:\n{}\n",
        names_json(actions)
    )
}
