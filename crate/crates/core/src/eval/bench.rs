use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, PredictedTurn, TurnJudgment};
use crate::catalog::TaskCatalog;
use crate::llm::{Backend, TemplateSet, TokenUsage};
use crate::online::{decide_turn, simulate_user_reply, Planner, PlannerConfig, TraceDetail, TurnDecision, WorkingMemory};
use crate::sop::{SopGraph, SopGuide};
use crate::task::{Dialogue, TaskDefinition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueFailure {
    pub dialogue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub report: EvalReport,
    pub judgments: Vec<TurnJudgment>,
    pub failures: Vec<DialogueFailure>,
    /// Not part of the report so that reports stay reproducible.
    pub wall_ms: u128,
}

/// Replays every dialogue turn by turn with the gold history as context and
/// judges each planned turn. A failing dialogue is recorded and skipped;
/// the others still count.
pub fn run_benchmark(
    catalog: &TaskCatalog,
    dialogues: &[Dialogue],
    cfg: &PlannerConfig,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<BenchmarkOutput, EvalError> {
    cfg.validate()?;
    if dialogues.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let started = Instant::now();
    let results: Vec<Result<Vec<TurnJudgment>, DialogueFailure>> = dialogues
        .par_iter()
        .enumerate()
        .map(|(i, d)| replay(catalog, d, i, cfg, backend, templates))
        .collect();

    let mut judgments = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(j) => judgments.extend(j),
            Err(f) => {
                log::warn!("dialogue {} failed: {}", f.dialogue_id, f.error);
                failures.push(f);
            }
        }
    }
    let mut report = if judgments.is_empty() {
        EvalReport::default()
    } else {
        EvalReport::from_judgments(&judgments)?
    };
    report.errors = failures.len();
    report.usage_estimated = backend.usage_is_estimate();
    Ok(BenchmarkOutput {
        report,
        judgments,
        failures,
        wall_ms: started.elapsed().as_millis(),
    })
}

fn replay(
    catalog: &TaskCatalog,
    d: &Dialogue,
    index: usize,
    cfg: &PlannerConfig,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<Vec<TurnJudgment>, DialogueFailure> {
    let id = d.dialogue_id.clone().unwrap_or_else(|| index.to_string());
    let fail = |turn_index: Option<usize>, error: String| DialogueFailure {
        dialogue_id: id.clone(),
        turn_index,
        error,
    };
    let task = catalog
        .get(&d.task_ref)
        .ok_or_else(|| fail(None, EvalError::UnknownTask(d.task_ref.clone()).to_string()))?;
    let guide = SopGraph::from_spec(&task.sop)
        .and_then(SopGuide::new)
        .map_err(|e| fail(None, e.to_string()))?;
    let session = backend.fork_session();
    let mut out = Vec::with_capacity(d.turns.len());
    for (t, gold) in d.turns.iter().enumerate() {
        let mut mem = WorkingMemory::from_turns(d.turns[..t].to_vec());
        if !gold.is_opening() {
            mem = mem.with_user(&gold.user_utterance);
        }
        let planner = Planner::new(task, session.as_ref(), session.as_ref(), templates, &guide, cfg);
        let decision = decide_turn(&planner, &mem).map_err(|e| fail(Some(t), e.to_string()))?;
        let mut j = TurnJudgment::new(task, &id, t, gold, Some(PredictedTurn::from(&decision)));
        j.usage = decision.usage;
        j.trace = Some(decision.trace);
        out.push(j);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayOutcome {
    pub dialogue: Dialogue,
    pub decisions: Vec<TurnDecision>,
    /// A success-mark action was emitted.
    pub success: bool,
    /// Index of the first turn with a success-mark action.
    pub success_turn: Option<usize>,
    pub stop_reason: String,
    pub usage: TokenUsage,
}

/// Runs the planner against the simulated user until the agent closes the
/// call, the turn cap forces it to, or the simulated user stops answering.
pub fn self_play(
    task: &TaskDefinition,
    sop: &SopGuide,
    cfg: &PlannerConfig,
    backend: &dyn Backend,
    user_sim: &dyn Backend,
    templates: &TemplateSet,
) -> Result<SelfPlayOutcome, EvalError> {
    cfg.validate()?;
    let mut mem = WorkingMemory::new();
    let mut decisions: Vec<TurnDecision> = Vec::new();
    let mut success_turn = None;
    let mut usage = TokenUsage::default();
    let stop_reason = loop {
        let planner = Planner::new(task, backend, user_sim, templates, sop, cfg);
        let d = decide_turn(&planner, &mem)?;
        usage.add(d.usage);
        if let Some(s) = d.user_state.clone() {
            mem.set_pending_state(s);
        }
        mem.complete_turn(d.agent_action.clone(), d.agent_response.clone());
        if success_turn.is_none() && task.is_success(&d.agent_action) {
            success_turn = Some(decisions.len());
        }
        let forced = matches!(d.trace.detail, TraceDetail::Forced { .. });
        let terminal = sop.graph().is_terminal(&d.agent_action);
        decisions.push(d);
        if terminal {
            break "agent closed the call".to_string();
        }
        if forced || mem.history.len() > cfg.max_turns {
            break "turn cap reached".to_string();
        }
        let planner = Planner::new(task, backend, user_sim, templates, sop, cfg);
        match simulate_user_reply(&planner, &mem) {
            Ok(reply) => {
                usage.add(planner.usage());
                mem = mem.with_user(&reply);
            }
            Err(e) => break format!("simulated user stopped: {e}"),
        }
    };
    Ok(SelfPlayOutcome {
        dialogue: Dialogue {
            dialogue_id: None,
            task_ref: task.a_id.clone(),
            turns: mem.history,
        },
        decisions,
        success: success_turn.is_some(),
        success_turn,
        stop_reason,
        usage,
    })
}
