use super::memory::{guidance_block, names_json, user_info};
use super::{strip_response_label, OnlineError, Planner, WorkingMemory, RESPONSE_LABELS};
use crate::llm::{parse_labeled_line, parse_labeled_line_any, TemplateId};
use crate::task::QualifiedLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct CotOutcome {
    pub action: QualifiedLabel,
    pub response: String,
    pub raw: String,
    /// The state the model itself wrote, unnormalized.
    pub model_state: Option<String>,
}

/// One-shot planning: a single call yields state, action and response.
/// With `guidance` the SOP-aware template is used.
pub fn plan_cot(
    planner: &Planner<'_>,
    mem: &WorkingMemory,
    guidance: Option<&[QualifiedLabel]>,
) -> Result<CotOutcome, OnlineError> {
    // the model classifies the latest reply itself
    let mut unresolved = mem.clone();
    if let Some(p) = &mut unresolved.pending {
        p.state = None;
    }
    let user_info = user_info(planner.task);
    let knowledge = planner.task.knowledge_json();
    let actions = names_json(&planner.task.agent_action);
    let states = names_json(&planner.task.user_state);
    let context = unresolved.render_context(true);
    let mut values: Vec<(&str, &str)> = vec![
        ("user_info", &user_info),
        ("task_knowledge", &knowledge),
        ("agent_actions", &actions),
        ("user_states", &states),
        ("context", &context),
    ];
    let block;
    let id = match guidance {
        Some(g) => {
            block = guidance_block(g);
            values.push(("guidance", &block));
            TemplateId::CotSop
        }
        None => TemplateId::Cot,
    };
    let text = planner.render(id, &values)?;
    let raw = planner.ask(id, text, 1)?.swap_remove(0).text;

    let model_state = parse_labeled_line(&raw, "User State").ok();
    let action_raw = parse_labeled_line(&raw, "Agent Action")
        .map_err(|_| OnlineError::ParseFailure("no `Agent Action:` line".into()))?;
    let action = match planner.task.normalize_action(&action_raw) {
        Some(a) => a,
        None => {
            let other = QualifiedLabel::agent("OtherActions");
            if !planner.task.has_action(&other) {
                return Err(OnlineError::ParseFailure(format!("unknown agent action `{action_raw}`")));
            }
            planner.warn(format!("action `{action_raw}` not in the action list, using {other}"));
            other
        }
    };
    let response = parse_labeled_line_any(&raw, &RESPONSE_LABELS)
        .map(|r| strip_response_label(&r))
        .map_err(|_| OnlineError::ParseFailure("no `Agent Response:` line".into()))?;
    if response.is_empty() {
        return Err(OnlineError::ParseFailure("empty agent response".into()));
    }
    Ok(CotOutcome {
        action,
        response,
        raw,
        model_state,
    })
}
