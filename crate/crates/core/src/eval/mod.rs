//! Metrics for both tasks (SOP structure, turn accuracy, response BLEU) and
//! benchmark drivers.

mod bench;
mod bleu;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::TaskCatalog;
use crate::llm::TokenUsage;
use crate::online::{OnlineError, TurnDecision, TurnTrace};
use crate::sop::{graph_edit_distance, path_prf, GedMode, GraphError, PathScores, SopGraph};
use crate::task::{Dialogue, DialogueTurn, QualifiedLabel, TaskDefinition};

pub use bench::{run_benchmark, self_play, BenchmarkOutput, DialogueFailure, SelfPlayOutcome};
pub use bleu::{bleu, corpus_bleu, tokenize, BleuStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dialogue references unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Planner(#[from] OnlineError),
}

/// The parts of a planned turn that are scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedTurn {
    pub user_state: Option<QualifiedLabel>,
    pub agent_action: QualifiedLabel,
    pub agent_response: String,
}

impl From<&TurnDecision> for PredictedTurn {
    fn from(d: &TurnDecision) -> Self {
        PredictedTurn {
            user_state: d.user_state.clone(),
            agent_action: d.agent_action.clone(),
            agent_response: d.agent_response.clone(),
        }
    }
}

impl From<&DialogueTurn> for PredictedTurn {
    fn from(t: &DialogueTurn) -> Self {
        PredictedTurn {
            user_state: t.user_state.clone(),
            agent_action: t.agent_action.clone(),
            agent_response: t.agent_response.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnJudgment {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub gold: DialogueTurn,
    /// `None` when the prediction has no such turn.
    pub predicted: Option<PredictedTurn>,
    pub action_correct: bool,
    pub state_correct: bool,
    /// The gold action is an SOP vertex.
    pub gold_is_controllable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TurnTrace>,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl TurnJudgment {
    pub fn new(
        task: &TaskDefinition,
        dialogue_id: &str,
        turn_index: usize,
        gold: &DialogueTurn,
        predicted: Option<PredictedTurn>,
    ) -> Self {
        let action_correct = predicted.as_ref().is_some_and(|p| p.agent_action == gold.agent_action);
        let state_correct = predicted.as_ref().is_some_and(|p| p.user_state == gold.user_state);
        TurnJudgment {
            dialogue_id: dialogue_id.to_string(),
            turn_index,
            gold: gold.clone(),
            predicted,
            action_correct,
            state_correct,
            gold_is_controllable: task.sop.vertex.contains(&gold.agent_action),
            trace: None,
            usage: TokenUsage::default(),
        }
    }

    pub fn outcome(&self) -> TurnOutcome {
        TurnOutcome {
            dialogue_id: self.dialogue_id.clone(),
            action_correct: self.action_correct,
            gold_is_controllable: self.gold_is_controllable,
        }
    }
}

/// Minimal per-turn record the accuracy metrics need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub dialogue_id: String,
    pub action_correct: bool,
    pub gold_is_controllable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnScores {
    pub acc_t: f64,
    /// Accuracy on turns whose gold action is an SOP vertex; 0 when there are none.
    pub acc_c: f64,
    /// Accuracy on the remaining turns; 0 when there are none.
    pub acc_p: f64,
    /// Turns that belong to fully correct dialogues, over all turns. Never
    /// exceeds `acc_t`; `perfect_dialogues / dialogues` is the unweighted rate.
    pub acc_d: f64,
    pub turns: usize,
    pub controllable: usize,
    pub proactive: usize,
    pub dialogues: usize,
    pub perfect_dialogues: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score_turns(outcomes: &[TurnOutcome]) -> Result<TurnScores, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (mut correct, mut c_total, mut c_correct, mut p_correct) = (0, 0, 0, 0);
    // (turns, all correct) per dialogue
    let mut per_dialogue: BTreeMap<&str, (usize, bool)> = BTreeMap::new();
    for o in outcomes {
        let ok = o.action_correct;
        correct += usize::from(ok);
        if o.gold_is_controllable {
            c_total += 1;
            c_correct += usize::from(ok);
        } else {
            p_correct += usize::from(ok);
        }
        let e = per_dialogue.entry(&o.dialogue_id).or_insert((0, true));
        e.0 += 1;
        e.1 &= ok;
    }
    let total = outcomes.len();
    let perfect = per_dialogue.values().filter(|v| v.1).count();
    let perfect_turns: usize = per_dialogue.values().filter(|v| v.1).map(|v| v.0).sum();
    Ok(TurnScores {
        acc_t: ratio(correct, total),
        acc_c: ratio(c_correct, c_total),
        acc_p: ratio(p_correct, total - c_total),
        acc_d: ratio(perfect_turns, total),
        turns: total,
        controllable: c_total,
        proactive: total - c_total,
        dialogues: per_dialogue.len(),
        perfect_dialogues: perfect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SopEvaluation {
    pub ged: usize,
    pub gedr: f64,
    pub ged_mode: GedMode,
    pub paths: PathScores,
}

pub fn evaluate_sop(pred: &SopGraph, gt: &SopGraph) -> Result<SopEvaluation, EvalError> {
    let g = graph_edit_distance(pred, gt);
    Ok(SopEvaluation {
        ged: g.ged,
        gedr: g.gedr,
        ged_mode: g.mode,
        paths: path_prf(pred, gt)?,
    })
}

/// Aggregate metrics. Fields a run did not measure are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<TurnScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
    /// Responses that entered the BLEU computation.
    #[serde(default)]
    pub bleu_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sop: Option<SopEvaluation>,
    #[serde(default)]
    pub errors: usize,
    #[serde(default)]
    pub usage: TokenUsage,
    /// Usage figures are codepoint estimates rather than provider counts.
    #[serde(default)]
    pub usage_estimated: bool,
}

impl EvalReport {
    pub fn from_judgments(judgments: &[TurnJudgment]) -> Result<Self, EvalError> {
        let outcomes: Vec<TurnOutcome> = judgments.iter().map(TurnJudgment::outcome).collect();
        let turns = score_turns(&outcomes)?;
        let pairs: Vec<(&str, Vec<&str>)> = judgments
            .iter()
            .filter_map(|j| {
                let p = j.predicted.as_ref()?;
                let has_text = |s: &str| !tokenize(s).is_empty();
                (has_text(&p.agent_response) && has_text(&j.gold.agent_response))
                    .then(|| (p.agent_response.as_str(), vec![j.gold.agent_response.as_str()]))
            })
            .collect();
        let (bleu2, bleu4) = if pairs.is_empty() {
            (None, None)
        } else {
            (
                Some(corpus_bleu(pairs.iter().cloned(), 2)?),
                Some(corpus_bleu(pairs.iter().cloned(), 4)?),
            )
        };
        let mut usage = TokenUsage::default();
        for j in judgments {
            usage.add(j.usage);
        }
        Ok(EvalReport {
            turns: Some(turns),
            bleu2,
            bleu4,
            bleu_pairs: pairs.len(),
            usage,
            ..EvalReport::default()
        })
    }

    pub fn from_sop(sop: SopEvaluation) -> Self {
        EvalReport {
            sop: Some(sop),
            ..EvalReport::default()
        }
    }

    /// Plain-text tables with the accuracy/BLEU and SOP columns.
    pub fn render_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        let mut out = String::new();
        if self.turns.is_some() || self.bleu2.is_some() {
            let t = self.turns.as_ref();
            let row = [
                f(t.map(|t| t.acc_t)),
                f(t.map(|t| t.acc_c)),
                f(t.map(|t| t.acc_p)),
                f(t.map(|t| t.acc_d)),
                f(self.bleu2),
                f(self.bleu4),
            ];
            table(&mut out, &["Acc T", "Acc C", "Acc P", "Acc D", "BLEU-2", "BLEU-4"], &row);
            if let Some(t) = t {
                let _ = writeln!(
                    out,
                    "turns {} (controllable {}, proactive {}), dialogues {}, errors {}",
                    t.turns, t.controllable, t.proactive, t.dialogues, self.errors
                );
            }
            if self.usage.total() > 0 {
                let _ = writeln!(
                    out,
                    "tokens {} prompt + {} completion{}",
                    self.usage.prompt_tokens,
                    self.usage.completion_tokens,
                    if self.usage_estimated { " (estimated)" } else { "" }
                );
            }
        }
        if let Some(s) = &self.sop {
            let mode = match s.ged_mode {
                GedMode::Exact => "",
                GedMode::UpperBound => " (upper bound)",
            };
            let row = [
                format!("{}{mode}", s.ged),
                format!("{:.4}", s.gedr),
                f(Some(s.paths.precision)),
                f(Some(s.paths.recall)),
                f(Some(s.paths.f1)),
            ];
            table(&mut out, &["GED", "GEDR", "Path P", "Path R", "Path F1"], &row);
        }
        out
    }
}

fn table(out: &mut String, head: &[&str], row: &[String]) {
    let widths: Vec<usize> = head.iter().zip(row).map(|(h, r)| h.len().max(r.len())).collect();
    let line = |cells: Vec<String>| {
        let body: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!(" {c:>w$} ")).collect();
        format!("|{}|\n", body.join("|"))
    };
    out.push_str(&line(head.iter().map(|s| s.to_string()).collect()));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
    let _ = writeln!(out, "|{}|", rule.join("|"));
    out.push_str(&line(row.to_vec()));
}

/// Scores predicted dialogues against gold ones turn by turn. Dialogues are
/// paired by id when every gold dialogue has one, else by position.
pub fn compare_dialogues(
    predicted: &[Dialogue],
    gold: &[Dialogue],
    catalog: &TaskCatalog,
) -> Result<(EvalReport, Vec<TurnJudgment>), EvalError> {
    let by_id = gold.iter().all(|d| d.dialogue_id.is_some());
    let mut judgments = Vec::new();
    for (i, g) in gold.iter().enumerate() {
        let task = catalog.get(&g.task_ref).ok_or_else(|| EvalError::UnknownTask(g.task_ref.clone()))?;
        let id = g.dialogue_id.clone().unwrap_or_else(|| i.to_string());
        let p = if by_id {
            predicted.iter().find(|p| p.dialogue_id == g.dialogue_id)
        } else {
            predicted.get(i)
        };
        for (t, gt) in g.turns.iter().enumerate() {
            let pt = p.and_then(|p| p.turns.get(t)).map(PredictedTurn::from);
            judgments.push(TurnJudgment::new(task, &id, t, gt, pt));
        }
    }
    Ok((EvalReport::from_judgments(&judgments)?, judgments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::golf_graph;

    fn o(d: &str, ok: bool, c: bool) -> TurnOutcome {
        TurnOutcome {
            dialogue_id: d.into(),
            action_correct: ok,
            gold_is_controllable: c,
        }
    }

    #[test]
    fn accuracy_fixtures() {
        let s = score_turns(&[o("a", true, true), o("a", true, true), o("a", false, false), o("a", true, true)]).unwrap();
        assert_eq!((s.acc_t, s.acc_c, s.acc_p, s.acc_d), (0.75, 1.0, 0.0, 0.0));

        let mut v: Vec<TurnOutcome> = (0..5).map(|_| o("good", true, true)).collect();
        v.extend((0..5).map(|i| o("bad", i != 2, false)));
        let s = score_turns(&v).unwrap();
        assert_eq!((s.acc_d, s.perfect_dialogues, s.dialogues), (0.5, 1, 2));

        // one short perfect dialogue next to a long failed one
        let mut v = vec![o("short", true, true)];
        v.extend((0..9).map(|_| o("long", false, true)));
        let s = score_turns(&v).unwrap();
        assert_eq!((s.acc_t, s.acc_d), (0.1, 0.1));

        let all = score_turns(&[o("a", true, true), o("b", true, false)]).unwrap();
        assert_eq!((all.acc_t, all.acc_c, all.acc_p, all.acc_d), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(score_turns(&[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn sop_identity_and_edge_removal() {
        let g = golf_graph();
        let e = evaluate_sop(&g, &g).unwrap();
        assert_eq!((e.ged, e.gedr, e.paths.f1), (0, 0.0, 1.0));

        let pred_edges: Vec<_> = g
            .edges()
            .filter(|(a, b)| !(a.name() == "RefuseToAnswer" && b.name() == "PoliteEnd"))
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        let pred = SopGraph::from_edges(g.vertices().to_vec(), pred_edges).unwrap();
        let e = evaluate_sop(&pred, &g).unwrap();
        assert_eq!(e.ged, 1);
        assert!((e.gedr - 1.0 / 29.0).abs() < 1e-12);

        let empty = evaluate_sop(&SopGraph::empty(), &g).unwrap();
        assert_eq!(empty.paths.recall, 0.0);
    }

    #[test]
    fn table_renders() {
        let r = EvalReport {
            turns: Some(score_turns(&[o("a", true, true)]).unwrap()),
            bleu2: Some(0.5),
            ..EvalReport::default()
        };
        let t = r.render_table();
        assert!(t.contains("Acc T") && t.contains("100.00") && t.contains("50.00") && t.contains(" - "));
    }
}
