use serde::{Deserialize, Serialize};

use super::memory::{names_json, user_info};
use super::{OnlineError, Planner, WorkingMemory};
use crate::llm::{parse_labeled_line, LlmError, TemplateId};
use crate::task::QualifiedLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePrediction {
    pub state: QualifiedLabel,
    /// What the model wrote after "User State:", if anything.
    pub raw: Option<String>,
    /// Set when `state` is the task's fallback rather than the model's answer.
    pub fallback: bool,
}

/// Classifies the pending user reply. Unusable model output falls back to
/// the task's fallback state with a warning.
pub fn predict_user_state(planner: &Planner<'_>, mem: &WorkingMemory) -> Result<StatePrediction, OnlineError> {
    let mut unresolved = mem.clone();
    if let Some(p) = &mut unresolved.pending {
        p.state = None;
    }
    let text = planner.render(
        TemplateId::UserState,
        &[
            ("user_info", &user_info(planner.task)),
            ("task_knowledge", &planner.task.knowledge_json()),
            ("user_states", &names_json(&planner.task.user_state)),
            ("context", &unresolved.render_context(true)),
        ],
    )?;
    let raw = match planner.ask(TemplateId::UserState, text, 1) {
        Ok(out) => parse_labeled_line(&out[0].text, "User State").ok(),
        Err(OnlineError::Llm(LlmError::BackendRefusal(m))) => {
            planner.warn(format!("state prediction refused: {m}"));
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(state) = raw.as_deref().and_then(|r| planner.task.normalize_state(r)) {
        return Ok(StatePrediction {
            state,
            raw,
            fallback: false,
        });
    }
    let state = planner
        .task
        .fallback_state()
        .ok_or_else(|| OnlineError::ParseFailure("no user state and the task declares none".into()))?;
    planner.warn(format!(
        "user state {:?} not recognised, using {state}",
        raw.as_deref().unwrap_or("<missing>")
    ));
    Ok(StatePrediction {
        state,
        raw,
        fallback: true,
    })
}

/// Plays the user's next reply to the last agent turn in `mem`.
pub fn simulate_user_reply(planner: &Planner<'_>, mem: &WorkingMemory) -> Result<String, OnlineError> {
    let text = planner.render(
        TemplateId::UserSim,
        &[
            ("user_info", &user_info(planner.task)),
            ("agent_goal", &planner.task.conversation_profile.agent_goal),
            ("context", &mem.render_context(false)),
        ],
    )?;
    let out = planner.ask_on(planner.user_sim, TemplateId::UserSim, text, 1)?;
    let reply = parse_labeled_line(&out[0].text, "User Response").unwrap_or_else(|_| out[0].text.trim().to_string());
    if reply.is_empty() {
        return Err(LlmError::BackendRefusal("empty simulated user reply".into()).into());
    }
    Ok(reply)
}

/// Plays the user's next reply and classifies it.
pub fn simulate_user(planner: &Planner<'_>, mem: &WorkingMemory) -> Result<(String, StatePrediction), OnlineError> {
    let reply = simulate_user_reply(planner, mem)?;
    let next = mem.clone().with_user(&reply);
    let state = predict_user_state(planner, &next)?;
    Ok((reply, state))
}
