//! Synthetic scene and dialogue generation from a task's SOP.
//!
//! A main path is sampled from the SOP, widened into a full call by a
//! screenwriter (model or rule-based), voiced line by line by a writer
//! (model or label-echo template) and paired with a simulated user profile.

mod profile;
mod scene;
mod script;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use profile::{backend_profile, sample_profile};
pub use scene::{
    fallback_scene, max_inserted_rounds, neutral_action, neutral_state, pair_into_rounds, parse_scene_labels,
    repair_distance, sample_main_path, spoken_labels, Round, Scene, SceneViolation, MAX_INSERTED, MIN_INSERTED,
    ROUND_SEPARATOR,
};
pub use script::{fallback_script, parse_script, LabeledUtterance, ParsedScript, ScriptViolation};

use crate::llm::{extract_json_block, Backend, LlmError, PromptRequest, Sampling, TemplateError, TemplateId, TemplateSet};
use crate::online::names_json;
use crate::sop::{enumerate_paths, DialoguePath, GraphError, SopGraph};
use crate::task::{Dialogue, DialogueTurn, QualifiedLabel, TaskDefinition, UserProfile};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("scene invalid after {attempts} attempt(s): {violation}")]
    SceneInvalid { attempts: usize, violation: SceneViolation },
    #[error("dialogue invalid after {attempts} attempt(s): {violation}")]
    DialogueInvalid { attempts: usize, violation: ScriptViolation },
    #[error("profile invalid: {0}")]
    ProfileInvalid(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    #[default]
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub scene: Scene,
    pub attempts: usize,
    /// Label edits between the accepted model output and the stored rounds.
    pub repair_distance: usize,
}

fn scene_prompt(path: &DialoguePath, task: &TaskDefinition, profile: &UserProfile, templates: &TemplateSet) -> Result<String, TemplateError> {
    let sop = serde_json::to_string(&task.sop.adjacency_list).unwrap_or_default();
    let main: Vec<String> = spoken_labels(path).iter().map(|l| l.to_string()).collect();
    templates.render(
        TemplateId::SceneEnrich,
        &[
            ("task_knowledge", &task.knowledge_json()),
            ("user_info", &profile.to_json_string()),
            ("agent_actions", &names_json(&task.agent_action)),
            ("user_states", &names_json(&task.user_state)),
            ("sop", &sop),
            ("main_path", &serde_json::to_string(&main).unwrap_or_default()),
        ],
    )
}

/// Asks the backend to widen `path` into a scene, retrying rejected output
/// up to `max_attempts` times.
pub fn enrich_scene(
    path: &DialoguePath,
    task: &TaskDefinition,
    profile: &UserProfile,
    backend: &dyn Backend,
    templates: &TemplateSet,
    max_attempts: usize,
) -> Result<SceneOutcome, DatagenError> {
    let text = scene_prompt(path, task, profile, templates)?;
    let mut last = SceneViolation::Parse {
        detail: "no attempt made".into(),
    };
    for attempt in 1..=max_attempts {
        let out = backend.complete(&PromptRequest::new(TemplateId::SceneEnrich, text.clone(), Sampling::TASK2, 1))?;
        let parsed = extract_json_block(&out[0].text)
            .map_err(|e| SceneViolation::Parse { detail: e.to_string() })
            .and_then(|(value, _)| parse_scene_labels(&value, task))
            .and_then(|raw| {
                let rounds = pair_into_rounds(&raw, task);
                let d = repair_distance(&raw, &rounds);
                Scene::new(path.clone(), rounds, task).map(|s| (s, d))
            });
        match parsed {
            Ok((scene, repair_distance)) => {
                return Ok(SceneOutcome {
                    scene,
                    attempts: attempt,
                    repair_distance,
                })
            }
            Err(v) => {
                log::debug!("scene attempt {attempt} rejected: {v}");
                last = v;
            }
        }
    }
    Err(DatagenError::SceneInvalid {
        attempts: max_attempts,
        violation: last,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptOutcome {
    pub lines: Vec<LabeledUtterance>,
    pub attempts: usize,
    /// Character edits made while cleaning up the accepted output.
    pub repair_distance: usize,
}

/// Asks the backend for one line per scene label, retrying rejected output.
pub fn write_dialogue(
    scene: &Scene,
    task: &TaskDefinition,
    profile: &UserProfile,
    backend: &dyn Backend,
    templates: &TemplateSet,
    max_attempts: usize,
) -> Result<ScriptOutcome, DatagenError> {
    let expected = scene.full_path();
    let labels: Vec<String> = expected.iter().map(|l| l.to_string()).collect();
    let text = templates.render(
        TemplateId::DialogueWrite,
        &[
            ("task_knowledge", &task.knowledge_json()),
            ("user_info", &profile.to_json_string()),
            ("scene_path", &serde_json::to_string(&labels).unwrap_or_default()),
        ],
    )?;
    let mut last = ScriptViolation::Parse {
        detail: "no attempt made".into(),
    };
    for attempt in 1..=max_attempts {
        let out = backend.complete(&PromptRequest::new(TemplateId::DialogueWrite, text.clone(), Sampling::TASK2, 1))?;
        let raw = &out[0].text;
        let value = extract_json_block(raw).ok().map(|(v, _)| v);
        match parse_script(raw, value.as_ref(), &expected, task) {
            Ok(p) => {
                return Ok(ScriptOutcome {
                    lines: p.lines,
                    attempts: attempt,
                    repair_distance: p.repair_distance,
                })
            }
            Err(v) => {
                log::debug!("script attempt {attempt} rejected: {v}");
                last = v;
            }
        }
    }
    Err(DatagenError::DialogueInvalid {
        attempts: max_attempts,
        violation: last,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemQuality {
    pub scene_source: Source,
    pub script_source: Source,
    pub profile_source: Source,
    pub scene_attempts: usize,
    pub script_attempts: usize,
    pub scene_repair_distance: usize,
    pub utterance_repair_distance: usize,
}

/// A scene voiced line by line for one simulated user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedDialogue {
    pub index: usize,
    pub seed: u64,
    pub task_ref: String,
    pub scene: Scene,
    pub utterances: Vec<LabeledUtterance>,
    pub profile: UserProfile,
    pub quality: ItemQuality,
}

impl GeneratedDialogue {
    /// Re-checks the scene invariants and the one-line-per-label pairing.
    pub fn validate(&self, task: &TaskDefinition) -> Result<(), String> {
        let rebuilt = Scene::new(self.scene.main_path.clone(), self.scene.rounds.clone(), task).map_err(|v| v.to_string())?;
        if rebuilt.inserted_count != self.scene.inserted_count {
            return Err(format!(
                "inserted_count {} but rounds give {}",
                self.scene.inserted_count, rebuilt.inserted_count
            ));
        }
        let labels: Vec<&QualifiedLabel> = self.utterances.iter().map(|u| &u.label).collect();
        let full = self.scene.full_path();
        if labels != full.iter().collect::<Vec<_>>() {
            return Err("utterance labels differ from the scene".into());
        }
        if let Some(i) = self.utterances.iter().position(|u| u.text.trim().is_empty()) {
            return Err(format!("empty utterance at line {i}"));
        }
        Ok(())
    }

    pub fn dialogue_id(&self) -> String {
        format!("{}-{:05}", self.task_ref, self.index)
    }

    /// Turn format used by evaluation: the opening agent line, then one turn
    /// per user reply and the agent line that follows it. A user reply with
    /// no agent line after it (the closing one) has no turn.
    pub fn to_dialogue(&self) -> Dialogue {
        let mut turns = Vec::with_capacity(self.scene.rounds.len());
        for (i, pair) in self.utterances.chunks(2).enumerate() {
            let agent = &pair[0];
            let (user_utterance, user_state) = if i == 0 {
                (String::new(), None)
            } else {
                let prev = &self.utterances[2 * i - 1];
                (prev.text.clone(), Some(prev.label.clone()))
            };
            turns.push(DialogueTurn {
                user_utterance,
                user_state,
                agent_action: agent.label.clone(),
                agent_response: agent.text.clone(),
            });
        }
        Dialogue {
            dialogue_id: Some(self.dialogue_id()),
            task_ref: self.task_ref.clone(),
            turns,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[default]
    Pool,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub count: usize,
    pub seed: u64,
    pub max_attempts: usize,
    pub profiles: ProfileMode,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            count: 1,
            seed: 0,
            max_attempts: 3,
            profiles: ProfileMode::Pool,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.max_attempts == 0 {
            return Err(DatagenError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub max: usize,
}

impl DistanceStats {
    fn of(values: impl Iterator<Item = usize>) -> Self {
        let (mut n, mut sum, mut max) = (0usize, 0usize, 0usize);
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
        }
        DistanceStats {
            mean: if n == 0 { 0.0 } else { sum as f64 / n as f64 },
            max,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatagenStats {
    pub generated: usize,
    pub failed: usize,
    pub mean_inserted: f64,
    pub scene_repair: DistanceStats,
    pub utterance_repair: DistanceStats,
    pub scene_retries: usize,
    pub script_retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenBatch {
    pub items: Vec<GeneratedDialogue>,
    pub failures: Vec<ItemFailure>,
    pub stats: DatagenStats,
}

/// Per-item seed: the base seed xor the item index.
pub fn item_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

/// Generates `cfg.count` dialogues in parallel. Without a backend every role
/// uses its rule-based fallback. A failing item is recorded and skipped.
pub fn generate(
    task: &TaskDefinition,
    cfg: &DatagenConfig,
    backend: Option<&dyn Backend>,
    templates: &TemplateSet,
) -> Result<DatagenBatch, DatagenError> {
    cfg.validate()?;
    if cfg.profiles == ProfileMode::Backend && backend.is_none() {
        return Err(DatagenError::Config("backend profiles need a backend".into()));
    }
    let graph = SopGraph::from_spec(&task.sop)?;
    let paths = enumerate_paths(&graph)?;
    let results: Vec<Result<GeneratedDialogue, ItemFailure>> = (0..cfg.count)
        .into_par_iter()
        .map(|index| {
            let seed = item_seed(cfg.seed, index);
            generate_one(task, &paths, index, seed, cfg, backend, templates).map_err(|e| ItemFailure {
                index,
                seed,
                error: e.to_string(),
            })
        })
        .collect();

    let mut items = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(item) => items.push(item),
            Err(f) => {
                log::warn!("item {} (seed {}) failed: {}", f.index, f.seed, f.error);
                failures.push(f);
            }
        }
    }
    let stats = DatagenStats {
        generated: items.len(),
        failed: failures.len(),
        mean_inserted: if items.is_empty() {
            0.0
        } else {
            items.iter().map(|i| i.scene.inserted_count).sum::<usize>() as f64 / items.len() as f64
        },
        scene_repair: DistanceStats::of(items.iter().map(|i| i.quality.scene_repair_distance)),
        utterance_repair: DistanceStats::of(items.iter().map(|i| i.quality.utterance_repair_distance)),
        scene_retries: items.iter().map(|i| i.quality.scene_attempts.saturating_sub(1)).sum(),
        script_retries: items.iter().map(|i| i.quality.script_attempts.saturating_sub(1)).sum(),
    };
    Ok(DatagenBatch { items, failures, stats })
}

fn generate_one(
    task: &TaskDefinition,
    paths: &[DialoguePath],
    index: usize,
    seed: u64,
    cfg: &DatagenConfig,
    backend: Option<&dyn Backend>,
    templates: &TemplateSet,
) -> Result<GeneratedDialogue, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let main = paths.choose(&mut rng).cloned().ok_or(GraphError::NoTerminal)?;
    let session = backend.map(|b| b.fork_session());
    let mut quality = ItemQuality::default();

    let profile = match (&session, cfg.profiles) {
        (Some(b), ProfileMode::Backend) => {
            quality.profile_source = Source::Model;
            backend_profile(task, b.as_ref(), templates)?
        }
        _ => sample_profile(task, &mut rng),
    };

    let scene = match &session {
        Some(b) => {
            let o = enrich_scene(&main, task, &profile, b.as_ref(), templates, cfg.max_attempts)?;
            quality.scene_source = Source::Model;
            quality.scene_attempts = o.attempts;
            quality.scene_repair_distance = o.repair_distance;
            o.scene
        }
        None => fallback_scene(&main, task, &mut rng).map_err(|violation| DatagenError::SceneInvalid {
            attempts: 1,
            violation,
        })?,
    };

    let utterances = match &session {
        Some(b) => {
            let o = write_dialogue(&scene, task, &profile, b.as_ref(), templates, cfg.max_attempts)?;
            quality.script_source = Source::Model;
            quality.script_attempts = o.attempts;
            quality.utterance_repair_distance = o.repair_distance;
            o.lines
        }
        None => fallback_script(&scene.full_path(), &profile),
    };

    Ok(GeneratedDialogue {
        index,
        seed,
        task_ref: task.a_id.clone(),
        scene,
        utterances,
        profile,
        quality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{card_task, golf_task};
    use crate::llm::{ScriptRule, ScriptedBackend};

    fn card_path() -> DialoguePath {
        DialoguePath::new(
            ["Agent.Start", "Agent.VerifyIdentity", "User.NotThemselves", "Agent.PoliteEnd"]
                .iter()
                .map(|s| s.parse().unwrap()),
        )
        .unwrap()
    }

    const CARD_SCENE: &str = r#"Here is the path:
["Agent.Greeting", "User.Greeting", "--",
 "Agent.VerifyIdentity", "User.NotThemselves", "--",
 "Agent.Chat", "User.Chat", "--",
 "Agent.PoliteEnd", "User.Ending", "--"]"#;

    #[test]
    fn enrich_accepts_valid_model_scene() {
        let task = card_task();
        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::SceneEnrich, &[], &[CARD_SCENE])]);
        let o = enrich_scene(&card_path(), &task, &task.user_profile, &b, TemplateSet::builtin(), 3).unwrap();
        assert_eq!(o.attempts, 1);
        assert_eq!(o.repair_distance, 0);
        assert_eq!(o.scene.inserted_count, 2);
        assert_eq!(o.scene.rounds[0].agent, "Agent.Greeting".parse().unwrap());
        assert_eq!(o.scene.rounds[0].user, "User.Greeting".parse().unwrap());
    }

    #[test]
    fn enrich_retries_then_reports_invariant() {
        let task = card_task();
        let deleted = r#"["Agent.Greeting", "User.Greeting", "Agent.Chat", "User.Chat", "Agent.PoliteEnd", "User.Ending"]"#;
        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::SceneEnrich, &[], &[deleted])]);
        let e = enrich_scene(&card_path(), &task, &task.user_profile, &b, TemplateSet::builtin(), 2).unwrap_err();
        assert!(matches!(
            e,
            DatagenError::SceneInvalid { attempts: 2, violation: SceneViolation::Subsequence { .. } }
        ));

        // second sample is good
        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::SceneEnrich, &[], &[deleted, CARD_SCENE]).counted()]);
        let o = enrich_scene(&card_path(), &task, &task.user_profile, &b, TemplateSet::builtin(), 2).unwrap();
        assert_eq!(o.attempts, 2);
    }

    #[test]
    fn enrich_repairs_missing_user_turn() {
        let task = card_task();
        // two agent labels in a row; the repair inserts a neutral reply
        let raw = r#"["Agent.Greeting", "User.Greeting", "Agent.Thank", "Agent.VerifyIdentity", "User.NotThemselves", "Agent.Chat", "User.Chat", "Agent.PoliteEnd"]"#;
        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::SceneEnrich, &[], &[raw])]);
        let o = enrich_scene(&card_path(), &task, &task.user_profile, &b, TemplateSet::builtin(), 1).unwrap();
        assert_eq!(o.repair_distance, 2);
        assert_eq!(o.scene.inserted_count, 3);
    }

    #[test]
    fn write_dialogue_checks_order() {
        let task = card_task();
        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::SceneEnrich, &[], &[CARD_SCENE])]);
        let scene = enrich_scene(&card_path(), &task, &task.user_profile, &b, TemplateSet::builtin(), 1).unwrap().scene;
        let lines: Vec<String> = scene
            .full_path()
            .iter()
            .map(|l| format!("{l}|Line for {}.", l.name()))
            .collect();
        let good = serde_json::to_string(&lines).unwrap();
        let mut swapped = lines.clone();
        swapped.swap(2, 4);
        let swapped = serde_json::to_string(&swapped).unwrap();

        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::DialogueWrite, &[], &[&good])]);
        let o = write_dialogue(&scene, &task, &task.user_profile, &b, TemplateSet::builtin(), 1).unwrap();
        assert_eq!(o.lines.len(), 8);
        assert_eq!(o.lines[0].to_string(), "Agent.Greeting|Line for Greeting.");

        let b = ScriptedBackend::new(vec![ScriptRule::new(TemplateId::DialogueWrite, &[], &[&swapped])]);
        assert!(matches!(
            write_dialogue(&scene, &task, &task.user_profile, &b, TemplateSet::builtin(), 2),
            Err(DatagenError::DialogueInvalid { attempts: 2, violation: ScriptViolation::Sequence { position: 2, .. } })
        ));
    }

    #[test]
    fn fallback_pipeline_is_valid_and_deterministic() {
        let task = golf_task();
        let cfg = DatagenConfig {
            count: 20,
            seed: 7,
            ..DatagenConfig::default()
        };
        let a = generate(&task, &cfg, None, TemplateSet::builtin()).unwrap();
        assert_eq!(a.items.len(), 20);
        assert!(a.failures.is_empty());
        for item in &a.items {
            item.validate(&task).unwrap();
            assert_eq!(item.seed, 7 ^ item.index as u64);
        }
        let b = generate(&task, &cfg, None, TemplateSet::builtin()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conversion_to_turns() {
        let task = golf_task();
        let cfg = DatagenConfig::default();
        let item = generate(&task, &cfg, None, TemplateSet::builtin()).unwrap().items.remove(0);
        let d = item.to_dialogue();
        assert_eq!(d.turns.len(), item.scene.rounds.len());
        assert!(d.turns[0].is_opening());
        for (t, r) in d.turns.iter().zip(&item.scene.rounds) {
            assert_eq!(t.agent_action, r.agent);
        }
        for (t, r) in d.turns[1..].iter().zip(&item.scene.rounds) {
            assert_eq!(t.user_state.as_ref(), Some(&r.user));
        }
    }

    #[test]
    fn backend_profiles_need_a_backend() {
        let cfg = DatagenConfig {
            profiles: ProfileMode::Backend,
            ..DatagenConfig::default()
        };
        assert!(matches!(
            generate(&golf_task(), &cfg, None, TemplateSet::builtin()),
            Err(DatagenError::Config(_))
        ));
    }
}
