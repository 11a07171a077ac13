use serde::{Deserialize, Serialize};

use super::memory::{names_json, user_info};
use super::{OnlineError, Planner, WorkingMemory};
use crate::llm::{parse_labeled_line, TemplateId};
use crate::task::QualifiedLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotCandidate {
    /// Assumed state of the pending reply; `None` on the opening turn.
    pub state: Option<QualifiedLabel>,
    pub action: QualifiedLabel,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotTrace {
    pub candidates: Vec<TotCandidate>,
    /// 0-based index into `candidates`.
    pub chosen: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_failure: Option<String>,
}

/// Three-layer tree: `d` user-state hypotheses, `d` sampled actions per
/// state, one response per pair; a vote picks the final candidate.
pub fn plan_tot(planner: &Planner<'_>, mem: &WorkingMemory) -> Result<(TotCandidate, TotTrace), OnlineError> {
    let d = planner.cfg.d;
    let with_sop = planner.cfg.method.uses_sop();
    let states: Vec<Option<QualifiedLabel>> = match &mem.pending {
        None => vec![None],
        Some(p) => {
            let mut states = sample_states(planner, mem, d)?;
            if states.is_empty() {
                states.extend(p.state.clone());
            }
            states.into_iter().map(Some).collect()
        }
    };

    let mut candidates = Vec::new();
    for state in states {
        let mut branch = mem.clone();
        if let Some(s) = &state {
            branch.set_pending_state(s.clone());
        }
        let guidance = if with_sop {
            planner.guidance(&branch).actions
        } else {
            Vec::new()
        };
        for action in planner.sample_actions(&branch, &guidance, d)? {
            let response = planner.generate_response(&branch, &action)?;
            candidates.push(TotCandidate {
                state: state.clone(),
                action,
                response,
            });
        }
    }
    if candidates.is_empty() {
        return Err(OnlineError::NoCandidateActions);
    }

    let mut trace = TotTrace {
        candidates,
        chosen: 0,
        vote_raw: None,
        vote_failure: None,
    };
    if trace.candidates.len() > 1 {
        match vote(planner, mem, &trace.candidates) {
            Ok((raw, Ok(i))) => {
                trace.vote_raw = Some(raw);
                trace.chosen = i;
            }
            Ok((raw, Err(why))) => {
                trace.vote_raw = Some(raw);
                trace.vote_failure = Some(why);
            }
            Err(e) => trace.vote_failure = Some(e.to_string()),
        }
        if let Some(why) = &trace.vote_failure {
            planner.warn(format!("vote failed ({why}), keeping candidate 1"));
        }
    }
    Ok((trace.candidates[trace.chosen].clone(), trace))
}

fn sample_states(planner: &Planner<'_>, mem: &WorkingMemory, n: usize) -> Result<Vec<QualifiedLabel>, OnlineError> {
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
    let mut states = Vec::new();
    for c in planner.ask(TemplateId::UserState, text, n)? {
        let parsed = parse_labeled_line(&c.text, "User State")
            .ok()
            .and_then(|r| planner.task.normalize_state(&r));
        if let Some(s) = parsed {
            if !states.contains(&s) {
                states.push(s);
            }
        }
    }
    Ok(states)
}

/// Returns the raw vote text and the chosen 0-based index, or why the vote
/// could not be read.
fn vote(
    planner: &Planner<'_>,
    mem: &WorkingMemory,
    candidates: &[TotCandidate],
) -> Result<(String, Result<usize, String>), OnlineError> {
    let listing: String = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "{}. User State: {} | Agent Action: {} | Agent Response: {}\n",
                i + 1,
                c.state.as_ref().map(QualifiedLabel::name).unwrap_or("-"),
                c.action.name(),
                c.response
            )
        })
        .collect();
    let text = planner.render(
        TemplateId::TotVote,
        &[
            ("user_info", &user_info(planner.task)),
            ("task_knowledge", &planner.task.knowledge_json()),
            ("context", &mem.render_context(false)),
            ("candidates", &listing),
        ],
    )?;
    let raw = planner.ask(TemplateId::TotVote, text, 1)?.swap_remove(0).text;
    let pick = parse_labeled_line(&raw, "the best candidate is")
        .map_err(|e| e.to_string())
        .and_then(|v| {
            let digits: String = v.chars().skip_while(|c| !c.is_ascii_digit()).take_while(char::is_ascii_digit).collect();
            digits.parse::<usize>().map_err(|_| format!("`{v}` is not a candidate number"))
        })
        .and_then(|k| {
            if (1..=candidates.len()).contains(&k) {
                Ok(k - 1)
            } else {
                Err(format!("candidate {k} out of range"))
            }
        });
    Ok((raw, pick))
}
