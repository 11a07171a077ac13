//! Per-turn planning: user-state prediction, then action selection and
//! response generation by CoT, ToT or MCTS, each optionally guided by the SOP.

mod cot;
mod mcts;
mod memory;
mod reward;
mod state;
mod tot;

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{
    total_usage, Backend, Completion, LlmError, PromptRequest, Sampling, TemplateError,
    TemplateId, TemplateSet, TokenUsage,
};
use crate::sop::{SopGuide, SubpathMatch};
use crate::task::{QualifiedLabel, TaskDefinition};

pub use cot::plan_cot;
pub use mcts::{plan_mcts, uct_score, MctsSearch, MctsTrace, NodeSummary};
pub use memory::{PendingUser, WorkingMemory};
pub(crate) use memory::names_json;
pub use reward::{combine_reward, reward, state_value, RewardBreakdown};
pub use state::{predict_user_state, simulate_user, simulate_user_reply, StatePrediction};
pub use tot::{plan_tot, TotCandidate, TotTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OnlineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("could not parse model output: {0}")]
    ParseFailure(String),
    #[error("no candidate actions to expand")]
    NoCandidateActions,
    #[error("every judge sample abstained")]
    JudgeUnusable,
    #[error("task declares no polite-end action")]
    NoPoliteEnd,
    #[error("invalid planner config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlannerMethod {
    #[serde(rename = "CoT")]
    Cot,
    #[serde(rename = "CoT_SOP")]
    CotSop,
    #[serde(rename = "ToT")]
    Tot,
    #[serde(rename = "ToT_SOP")]
    TotSop,
    #[serde(rename = "MCTS")]
    Mcts,
    #[serde(rename = "MCTS_SOP")]
    MctsSop,
}

impl PlannerMethod {
    pub const ALL: [PlannerMethod; 6] = [
        PlannerMethod::Cot,
        PlannerMethod::CotSop,
        PlannerMethod::Tot,
        PlannerMethod::TotSop,
        PlannerMethod::Mcts,
        PlannerMethod::MctsSop,
    ];

    pub fn uses_sop(self) -> bool {
        matches!(self, PlannerMethod::CotSop | PlannerMethod::TotSop | PlannerMethod::MctsSop)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMethod::Cot => "CoT",
            PlannerMethod::CotSop => "CoT_SOP",
            PlannerMethod::Tot => "ToT",
            PlannerMethod::TotSop => "ToT_SOP",
            PlannerMethod::Mcts => "MCTS",
            PlannerMethod::MctsSop => "MCTS_SOP",
        }
    }
}

impl fmt::Display for PlannerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "cot" => PlannerMethod::Cot,
            "cotsop" => PlannerMethod::CotSop,
            "tot" => PlannerMethod::Tot,
            "totsop" => PlannerMethod::TotSop,
            "mcts" => PlannerMethod::Mcts,
            "mctssop" => PlannerMethod::MctsSop,
            _ => return Err(format!("unknown planner method `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub method: PlannerMethod,
    /// Actions sampled per expansion (and ToT branching width).
    pub d: usize,
    /// Search depth limit in simulated turns.
    pub depth_limit: usize,
    pub n_iterations: usize,
    /// UCT exploration weight.
    pub exploration: f64,
    pub judge_samples: usize,
    pub seed: u64,
    /// Completed turns after which the agent is made to close the call.
    pub max_turns: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            method: PlannerMethod::MctsSop,
            d: 3,
            depth_limit: 8,
            n_iterations: 3,
            exploration: 1.0,
            judge_samples: 3,
            seed: 0,
            max_turns: 8,
        }
    }
}

impl PlannerConfig {
    pub fn with_method(method: PlannerMethod) -> Self {
        PlannerConfig {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OnlineError> {
        let bad = |m: &str| Err(OnlineError::Config(m.to_string()));
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if self.depth_limit == 0 {
            return bad("depth_limit must be at least 1");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1");
        }
        if self.exploration.is_nan() || self.exploration < 0.0 {
            return bad("exploration weight must be non-negative");
        }
        if self.judge_samples == 0 {
            return bad("judge_samples must be at least 1");
        }
        if self.max_turns == 0 {
            return bad("max_turns must be at least 1");
        }
        Ok(())
    }
}

/// SOP guidance used for a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTrace {
    pub matched: SubpathMatch,
    pub actions: Vec<QualifiedLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceDetail {
    Forced { reason: String },
    Cot { raw: String, model_user_state: Option<String> },
    Tot(TotTrace),
    Mcts(MctsTrace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub method: PlannerMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_prediction: Option<StatePrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<GuidanceTrace>,
    pub detail: TraceDetail,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDecision {
    /// Predicted state of the user's latest reply; `None` on the opening turn.
    pub user_state: Option<QualifiedLabel>,
    pub agent_action: QualifiedLabel,
    pub agent_response: String,
    pub trace: TurnTrace,
    pub usage: TokenUsage,
}

/// Everything a planning call needs. Built per turn; accumulates token usage
/// and warnings across the calls it makes.
pub struct Planner<'a> {
    pub task: &'a TaskDefinition,
    pub backend: &'a dyn Backend,
    /// Plays the user during search roll-outs.
    pub user_sim: &'a dyn Backend,
    pub templates: &'a TemplateSet,
    /// The SOP in force: guidance for the *_SOP methods and terminal
    /// detection for all of them.
    pub sop: &'a SopGuide,
    pub cfg: &'a PlannerConfig,
    usage: Mutex<TokenUsage>,
    warnings: Mutex<Vec<String>>,
}

impl<'a> Planner<'a> {
    pub fn new(
        task: &'a TaskDefinition,
        backend: &'a dyn Backend,
        user_sim: &'a dyn Backend,
        templates: &'a TemplateSet,
        sop: &'a SopGuide,
        cfg: &'a PlannerConfig,
    ) -> Self {
        Planner {
            task,
            backend,
            user_sim,
            templates,
            sop,
            cfg,
            usage: Mutex::new(TokenUsage::default()),
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn ask(&self, id: TemplateId, text: String, n: usize) -> Result<Vec<Completion>, OnlineError> {
        self.ask_on(self.backend, id, text, n)
    }

    pub(crate) fn ask_on(
        &self,
        backend: &dyn Backend,
        id: TemplateId,
        text: String,
        n: usize,
    ) -> Result<Vec<Completion>, OnlineError> {
        let req = PromptRequest::new(id, text, Sampling::TASK2, n);
        let out = backend.complete(&req)?;
        self.usage.lock().expect("usage lock").add(total_usage(&out));
        Ok(out)
    }

    pub(crate) fn warn(&self, msg: String) {
        log::warn!("{msg}");
        self.warnings.lock().expect("warnings lock").push(msg);
    }

    pub fn usage(&self) -> TokenUsage {
        *self.usage.lock().expect("usage lock")
    }

    pub(crate) fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().expect("warnings lock"))
    }

    pub(crate) fn render(&self, id: TemplateId, values: &[(&str, &str)]) -> Result<String, OnlineError> {
        Ok(self.templates.render(id, values)?)
    }

    /// Agent-side SOP successors of the best-matching subpath: one hop, or
    /// two hops when one hop reaches no agent action. When the window itself
    /// ends on an agent vertex the agent has not just taken, that vertex.
    pub fn guidance(&self, mem: &WorkingMemory) -> GuidanceTrace {
        let observed = mem.observed_path();
        let near = self.sop.nearest(observed.labels(), 1);
        let mut actions: Vec<QualifiedLabel> = near.children.iter().filter(|l| l.is_agent()).cloned().collect();
        if actions.is_empty() {
            if let Some(end) = near.subpath.last() {
                // A window ending on an agent vertex not yet performed points at that vertex.
                if end.is_agent() && mem.agent_actions().last() != Some(end) {
                    actions = vec![end.clone()];
                } else {
                    actions = self.sop.children(end, 2).into_iter().filter(|l| l.is_agent()).collect();
                }
            }
        }
        GuidanceTrace { matched: near, actions }
    }

    /// Generates the agent's line for an already chosen action.
    pub fn generate_response(&self, mem: &WorkingMemory, action: &QualifiedLabel) -> Result<String, OnlineError> {
        let text = self.render(
            TemplateId::GenResponse,
            &[
                ("user_info", &memory::user_info(self.task)),
                ("task_knowledge", &self.task.knowledge_json()),
                ("context", &mem.render_context(true)),
                ("action", action.name()),
            ],
        )?;
        let out = self.ask(TemplateId::GenResponse, text, 1)?;
        Ok(strip_response_label(&out[0].text))
    }

    /// Samples `n` next actions; unparseable or off-vocabulary samples are
    /// dropped with a warning. Order of first appearance, no repeats.
    pub fn sample_actions(
        &self,
        mem: &WorkingMemory,
        guidance: &[QualifiedLabel],
        n: usize,
    ) -> Result<Vec<QualifiedLabel>, OnlineError> {
        let text = self.render(
            TemplateId::SampleAction,
            &[
                ("user_info", &memory::user_info(self.task)),
                ("task_knowledge", &self.task.knowledge_json()),
                ("agent_actions", &memory::names_json(&self.task.agent_action)),
                ("context", &mem.render_context(true)),
                ("guidance", &memory::guidance_block(guidance)),
            ],
        )?;
        let out = self.ask(TemplateId::SampleAction, text, n)?;
        let mut actions: Vec<QualifiedLabel> = Vec::new();
        for c in &out {
            match crate::llm::parse_labeled_line(&c.text, "the best agent action is") {
                Ok(raw) => match self.task.normalize_action(&raw) {
                    Some(a) if !actions.contains(&a) => actions.push(a),
                    Some(_) => {}
                    None => self.warn(format!("sampled action `{raw}` is not in the action list")),
                },
                Err(_) => self.warn(format!("sample {} names no action", c.sample_index)),
            }
        }
        Ok(actions)
    }
}

/// Drops a leading "Agent Response:" style label if the model echoed it.
pub(crate) fn strip_response_label(text: &str) -> String {
    let t = text.trim();
    for label in RESPONSE_LABELS {
        let Some(head) = t.get(..label.len()) else { continue };
        if head.eq_ignore_ascii_case(label) {
            if let Some(rest) = t[label.len()..].trim_start_matches([' ', '*']).strip_prefix(':') {
                return rest.trim().trim_matches('*').trim().to_string();
            }
        }
    }
    t.to_string()
}

pub(crate) const RESPONSE_LABELS: [&str; 2] = ["Agent Response", "Agent's reply"];

/// Plans one agent turn: predicts the state of the user's pending reply,
/// then selects the action and response with the configured method.
pub fn decide_turn(planner: &Planner<'_>, mem: &WorkingMemory) -> Result<TurnDecision, OnlineError> {
    planner.cfg.validate()?;
    let mut mem = mem.clone();
    let state_prediction = match &mem.pending {
        Some(_) => {
            let p = predict_user_state(planner, &mem)?;
            mem.set_pending_state(p.state.clone());
            Some(p)
        }
        None => None,
    };
    let user_state = state_prediction.as_ref().map(|p| p.state.clone());
    let method = planner.cfg.method;

    if mem.history.len() >= planner.cfg.max_turns {
        let action = planner.task.polite_end().ok_or(OnlineError::NoPoliteEnd)?;
        let response = match planner.generate_response(&mem, &action) {
            Ok(r) => r,
            Err(e) => {
                planner.warn(format!("closing line generation failed: {e}"));
                "Thank you for your time. Goodbye.".to_string()
            }
        };
        return Ok(TurnDecision {
            user_state,
            agent_action: action,
            agent_response: response,
            trace: TurnTrace {
                method,
                state_prediction,
                guidance: None,
                detail: TraceDetail::Forced {
                    reason: format!("turn cap of {} reached", planner.cfg.max_turns),
                },
                warnings: planner.take_warnings(),
            },
            usage: planner.usage(),
        });
    }

    let guidance = method.uses_sop().then(|| planner.guidance(&mem));
    let (action, response, detail) = match method {
        PlannerMethod::Cot | PlannerMethod::CotSop => {
            let c = plan_cot(planner, &mem, guidance.as_ref().map(|g| g.actions.as_slice()))?;
            (c.action, c.response, TraceDetail::Cot { raw: c.raw, model_user_state: c.model_state })
        }
        PlannerMethod::Tot | PlannerMethod::TotSop => {
            let (choice, trace) = plan_tot(planner, &mem)?;
            (choice.action, choice.response, TraceDetail::Tot(trace))
        }
        PlannerMethod::Mcts | PlannerMethod::MctsSop => {
            let (action, response, trace) = plan_mcts(planner, &mem)?;
            (action, response, TraceDetail::Mcts(trace))
        }
    };
    Ok(TurnDecision {
        user_state,
        agent_action: action,
        agent_response: response,
        trace: TurnTrace {
            method,
            state_prediction,
            guidance,
            detail,
            warnings: planner.take_warnings(),
        },
        usage: planner.usage(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        for m in PlannerMethod::ALL {
            assert_eq!(m.as_str().parse::<PlannerMethod>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert_eq!("cot+sop".parse::<PlannerMethod>().unwrap(), PlannerMethod::CotSop);
        assert_eq!("mcts-sop".parse::<PlannerMethod>().unwrap(), PlannerMethod::MctsSop);
        assert!("bfs".parse::<PlannerMethod>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PlannerConfig::default();
        assert_eq!((c.d, c.depth_limit, c.n_iterations, c.exploration), (3, 8, 3, 1.0));
        assert!(c.validate().is_ok());
        let bad = PlannerConfig { d: 0, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = PlannerConfig { exploration: -1.0, ..c.clone() };
        assert!(bad.validate().is_err());
        let parsed: PlannerConfig = serde_json::from_str(r#"{"method":"CoT","seed":7}"#).unwrap();
        assert_eq!(parsed.method, PlannerMethod::Cot);
        assert_eq!(parsed.d, 3);
    }

    #[test]
    fn guidance_across_an_agent_to_agent_edge() {
        use crate::fixtures::{golf_graph, golf_task, golf_world};
        use crate::sop::SopGuide;
        use crate::task::DialogueTurn;
        let task = golf_task();
        let backend = golf_world(false).backend();
        let templates = TemplateSet::default();
        let sop = SopGuide::new(golf_graph()).unwrap();
        let cfg = PlannerConfig::default();
        let planner = Planner::new(&task, &backend, &backend, &templates, &sop, &cfg);
        let turn = |state: Option<&str>, action: &str| DialogueTurn {
            user_utterance: String::new(),
            user_state: state.map(QualifiedLabel::user),
            agent_action: QualifiedLabel::agent(action),
            agent_response: String::new(),
        };
        let mut mem = WorkingMemory::from_turns(vec![
            turn(None, "VerifyIdentity"),
            turn(Some("IsThemselves"), "InviteToGolfExperienceEvent"),
            turn(Some("ClearAgreement"), "InquireAboutParticipationNumberOrTime"),
            turn(Some("ProvidedParticipationNumberAndTime"), "InformBookingSuccess"),
        ])
        .with_user("Thanks!");
        mem.set_pending_state(QualifiedLabel::user("Thanks"));
        assert_eq!(planner.guidance(&mem).actions, vec![QualifiedLabel::agent("PoliteEnd")]);

        let mut mem = WorkingMemory::from_turns(vec![turn(None, "VerifyIdentity")]).with_user("Yes.");
        mem.set_pending_state(QualifiedLabel::user("IsThemselves"));
        assert_eq!(planner.guidance(&mem).actions, vec![QualifiedLabel::agent("InviteToGolfExperienceEvent")]);
    }

    #[test]
    fn response_label_stripping() {
        assert_eq!(strip_response_label("Agent Response: Hello there."), "Hello there.");
        assert_eq!(strip_response_label("  Plain reply. "), "Plain reply.");
    }
}
