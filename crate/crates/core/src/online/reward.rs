use serde::{Deserialize, Serialize};

use super::memory::{names_json, user_info};
use super::{OnlineError, Planner, WorkingMemory};
use crate::llm::{parse_verdict, TemplateId};
use crate::sop::SopGraph;
use crate::task::{QualifiedLabel, TaskDefinition};

const SUCCESS_VALUE: f64 = 0.7;
const ENDING_VALUE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Judge samples in order; `None` marks an abstention.
    pub verdicts: Vec<Option<bool>>,
    pub llm_mean: f64,
    pub state_value: f64,
    pub reward: f64,
}

/// Value of the dialogue state reached by taking `action` at search depth
/// `depth`: 0.7 on a success action, 0.3 when the conversation ends without
/// success (terminal SOP vertex, depth limit, or the user signing off), else 0.
pub fn state_value(
    task: &TaskDefinition,
    sop: &SopGraph,
    action: &QualifiedLabel,
    depth: usize,
    depth_limit: usize,
    user_reply: Option<&QualifiedLabel>,
) -> f64 {
    if task.is_success(action) {
        return SUCCESS_VALUE;
    }
    let ending = QualifiedLabel::user("Ending");
    if sop.is_terminal(action) || depth >= depth_limit || user_reply == Some(&ending) {
        return ENDING_VALUE;
    }
    0.0
}

pub fn combine_reward(llm_mean: f64, state_value: f64) -> f64 {
    0.5 * (llm_mean + 0.5 * state_value)
}

fn judge(planner: &Planner<'_>, mem: &WorkingMemory, action: &QualifiedLabel) -> Result<(Vec<Option<bool>>, f64), OnlineError> {
    let text = planner.render(
        TemplateId::RewardJudge,
        &[
            ("user_info", &user_info(planner.task)),
            ("task_knowledge", &planner.task.knowledge_json()),
            ("context", &mem.render_context(true)),
            ("agent_actions", &names_json(&planner.task.agent_action)),
            ("action", action.name()),
        ],
    )?;
    let out = planner.ask(TemplateId::RewardJudge, text, planner.cfg.judge_samples)?;
    let verdicts: Vec<Option<bool>> = out.iter().map(|c| parse_verdict(&c.text)).collect();
    let votes: Vec<f64> = verdicts.iter().flatten().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    if votes.is_empty() {
        return Err(OnlineError::JudgeUnusable);
    }
    let mean = votes.iter().sum::<f64>() / votes.len() as f64;
    Ok((verdicts, mean))
}

/// Scores taking `action` in the dialogue `mem` (before the action).
pub fn reward(
    planner: &Planner<'_>,
    mem: &WorkingMemory,
    action: &QualifiedLabel,
    depth: usize,
    user_reply: Option<&QualifiedLabel>,
) -> Result<RewardBreakdown, OnlineError> {
    let (verdicts, llm_mean) = judge(planner, mem, action)?;
    let sv = state_value(
        planner.task,
        planner.sop.graph(),
        action,
        depth,
        planner.cfg.depth_limit,
        user_reply,
    );
    Ok(RewardBreakdown {
        verdicts,
        llm_mean,
        state_value: sv,
        reward: combine_reward(llm_mean, sv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{golf_graph, golf_task};
    use approx::assert_relative_eq;

    #[test]
    fn combined_values() {
        assert_relative_eq!(combine_reward(1.0, 0.7), 0.675);
        assert_relative_eq!(combine_reward(0.0, 0.7), 0.175);
        assert_relative_eq!(combine_reward(2.0 / 3.0, 0.0), 1.0 / 3.0);
        assert_relative_eq!(combine_reward(0.0, 0.3), 0.075);
    }

    #[test]
    fn state_values() {
        let task = golf_task();
        let g = golf_graph();
        let a = QualifiedLabel::agent;
        assert_eq!(state_value(&task, &g, &a("InformBookingSuccess"), 1, 8, None), 0.7);
        assert_eq!(state_value(&task, &g, &a("PoliteEnd"), 1, 8, None), 0.3);
        assert_eq!(state_value(&task, &g, &a("AttemptPersuasion"), 8, 8, None), 0.3);
        assert_eq!(
            state_value(&task, &g, &a("AttemptPersuasion"), 2, 8, Some(&QualifiedLabel::user("Ending"))),
            0.3
        );
        assert_eq!(state_value(&task, &g, &a("AttemptPersuasion"), 2, 8, None), 0.0);
    }
}
