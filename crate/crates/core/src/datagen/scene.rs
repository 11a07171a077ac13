use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sop::{enumerate_paths, levenshtein, DialoguePath, GraphError, SopGraph};
use crate::task::{QualifiedLabel, Side, TaskDefinition};

pub const MIN_INSERTED: usize = 2;
pub const MAX_INSERTED: usize = 5;

/// Uniform draw over the enumerated start-to-terminal paths.
pub fn sample_main_path<R: Rng + ?Sized>(sop: &SopGraph, rng: &mut R) -> Result<DialoguePath, GraphError> {
    let paths = enumerate_paths(sop)?;
    paths.choose(rng).cloned().ok_or(GraphError::NoTerminal)
}

/// One exchange: the agent speaks, the user answers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Round {
    pub agent: QualifiedLabel,
    pub user: QualifiedLabel,
}

/// Which scene invariant a candidate broke.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "invariant", rename_all = "snake_case")]
pub enum SceneViolation {
    /// Output could not be read as a label list.
    Parse { detail: String },
    Vocabulary { label: String },
    /// Sides do not alternate agent/user starting with the agent.
    Alternation { position: usize },
    /// A main-path label is missing or out of order.
    Subsequence { missing: QualifiedLabel },
    InsertedCount { count: usize },
}

impl fmt::Display for SceneViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneViolation::Parse { detail } => write!(f, "parse: {detail}"),
            SceneViolation::Vocabulary { label } => write!(f, "vocabulary: `{label}` is not declared by the task"),
            SceneViolation::Alternation { position } => write!(f, "alternation: broken at label {position}"),
            SceneViolation::Subsequence { missing } => write!(f, "subsequence: main-path label {missing} missing or out of order"),
            SceneViolation::InsertedCount { count } => {
                write!(f, "inserted_count: {count} rounds inserted, expected {MIN_INSERTED}..={MAX_INSERTED}")
            }
        }
    }
}

/// A main path widened into a full call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub main_path: DialoguePath,
    pub rounds: Vec<Round>,
    pub inserted_count: usize,
}

impl Scene {
    /// Validates the rounds against `main_path` and the task vocabulary.
    pub fn new(main_path: DialoguePath, rounds: Vec<Round>, task: &TaskDefinition) -> Result<Scene, SceneViolation> {
        let flat = flatten(&rounds);
        check_vocabulary(&flat, task)?;
        for (i, r) in rounds.iter().enumerate() {
            if !r.agent.is_agent() {
                return Err(SceneViolation::Alternation { position: 2 * i });
            }
            if !r.user.is_user() {
                return Err(SceneViolation::Alternation { position: 2 * i + 1 });
            }
        }
        let spoken = spoken_labels(&main_path);
        let inserted_count = max_inserted_rounds(&rounds, spoken)
            .ok_or_else(|| SceneViolation::Subsequence { missing: first_unmatched(&flat, spoken) })?;
        if !(MIN_INSERTED..=MAX_INSERTED).contains(&inserted_count) {
            return Err(SceneViolation::InsertedCount { count: inserted_count });
        }
        Ok(Scene {
            main_path,
            rounds,
            inserted_count,
        })
    }

    pub fn full_path(&self) -> Vec<QualifiedLabel> {
        flatten(&self.rounds)
    }

    /// Labels as a JSON array with a `--` entry after every round.
    pub fn to_json_with_separators(&self) -> String {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rounds {
            out.push(r.agent.to_string());
            out.push(r.user.to_string());
            out.push(ROUND_SEPARATOR.into());
        }
        serde_json::to_string(&out).unwrap_or_default()
    }
}

pub const ROUND_SEPARATOR: &str = "--";

fn flatten(rounds: &[Round]) -> Vec<QualifiedLabel> {
    rounds.iter().flat_map(|r| [r.agent.clone(), r.user.clone()]).collect()
}

/// Main path minus the `Agent.Start` marker, which is never spoken.
pub fn spoken_labels(path: &DialoguePath) -> &[QualifiedLabel] {
    let labels = path.labels();
    match labels.first() {
        Some(first) if first.is_agent() && first.name() == "Start" => &labels[1..],
        _ => labels,
    }
}

fn check_vocabulary(labels: &[QualifiedLabel], task: &TaskDefinition) -> Result<(), SceneViolation> {
    match labels.iter().find(|l| !(task.has_action(l) || task.has_state(l))) {
        Some(l) => Err(SceneViolation::Vocabulary { label: l.to_string() }),
        None => Ok(()),
    }
}

fn first_unmatched(flat: &[QualifiedLabel], main: &[QualifiedLabel]) -> QualifiedLabel {
    let mut it = flat.iter();
    for m in main {
        if !it.any(|l| l == m) {
            return m.clone();
        }
    }
    main.last().cloned().unwrap_or_else(|| QualifiedLabel::agent("Start"))
}

/// Rounds that carry no main-path label, maximised over all ways of
/// embedding `main` as a subsequence of the flattened rounds. `None` when no
/// embedding exists.
pub fn max_inserted_rounds(rounds: &[Round], main: &[QualifiedLabel]) -> Option<usize> {
    const NONE: i64 = i64::MIN / 2;
    let (n, m) = (rounds.len(), main.len());
    // best[i][j]: rounds i.. with main j.. still to place
    let mut best = vec![vec![NONE; m + 1]; n + 1];
    best[n][m] = 0;
    for i in (0..n).rev() {
        let r = &rounds[i];
        for j in (0..=m).rev() {
            let mut b = best[i + 1][j] + 1;
            if j < m && r.agent == main[j] {
                b = b.max(best[i + 1][j + 1]);
                if j + 1 < m && r.user == main[j + 1] {
                    b = b.max(best[i + 1][j + 2]);
                }
            }
            if j < m && r.user == main[j] {
                b = b.max(best[i + 1][j + 1]);
            }
            best[i][j] = b.max(NONE);
        }
    }
    (best[0][0] >= 0).then_some(best[0][0] as usize)
}

/// Neutral user reply used to split two consecutive agent labels.
pub fn neutral_state(task: &TaskDefinition) -> QualifiedLabel {
    pick(task, Side::User, &["HabitualResponseAndContinue", "Thank", "OtherIntentions"])
        .or_else(|| task.fallback_state())
        .expect("validated tasks declare user states")
}

/// Neutral agent filler used to split two consecutive user labels.
pub fn neutral_action(task: &TaskDefinition) -> QualifiedLabel {
    pick(task, Side::Agent, &["Chat", "OtherActions"])
        .or_else(|| task.agent_action.iter().find(|a| a.name() != "Start").cloned())
        .expect("validated tasks declare agent actions")
}

fn closing_state(task: &TaskDefinition) -> QualifiedLabel {
    pick(task, Side::User, &["Ending"]).unwrap_or_else(|| neutral_state(task))
}

fn pick(task: &TaskDefinition, side: Side, names: &[&str]) -> Option<QualifiedLabel> {
    names.iter().find_map(|n| {
        let l = match side {
            Side::Agent => QualifiedLabel::agent(n),
            Side::User => QualifiedLabel::user(n),
        };
        (task.has_action(&l) || task.has_state(&l)).then_some(l)
    })
}

/// Pairs an arbitrary label sequence into rounds, inserting neutral fillers
/// where a side would speak twice, an agent filler before a leading user
/// label and a closing user label after a trailing agent label.
pub fn pair_into_rounds(labels: &[QualifiedLabel], task: &TaskDefinition) -> Vec<Round> {
    let mut rounds = Vec::new();
    let mut agent: Option<QualifiedLabel> = None;
    for l in labels {
        match (l.is_agent(), agent.take()) {
            (true, None) => agent = Some(l.clone()),
            (true, Some(prev)) => {
                rounds.push(Round {
                    agent: prev,
                    user: neutral_state(task),
                });
                agent = Some(l.clone());
            }
            (false, Some(a)) => rounds.push(Round { agent: a, user: l.clone() }),
            (false, None) => rounds.push(Round {
                agent: neutral_action(task),
                user: l.clone(),
            }),
        }
    }
    if let Some(a) = agent {
        rounds.push(Round {
            agent: a,
            user: closing_state(task),
        });
    }
    rounds
}

/// Reads a model's scene output: a JSON array of labels with optional `--`
/// separators. Bare names are resolved against the task vocabulary.
/// Returns the labels as written (separators dropped).
pub fn parse_scene_labels(value: &Value, task: &TaskDefinition) -> Result<Vec<QualifiedLabel>, SceneViolation> {
    let items = value.as_array().ok_or_else(|| SceneViolation::Parse {
        detail: "expected a JSON array".into(),
    })?;
    let mut out = Vec::new();
    for item in items {
        let raw = item.as_str().ok_or_else(|| SceneViolation::Parse {
            detail: format!("non-string entry {item}"),
        })?;
        let raw = raw.trim();
        if raw.is_empty() || raw.chars().all(|c| c == '-') {
            continue;
        }
        let label = task
            .normalize_action(raw)
            .or_else(|| task.normalize_state(raw))
            .ok_or_else(|| SceneViolation::Vocabulary { label: raw.to_string() })?;
        out.push(label);
    }
    if out.is_empty() {
        return Err(SceneViolation::Parse {
            detail: "no labels".into(),
        });
    }
    Ok(out)
}

/// Label-level edit distance between what the model wrote and the repaired
/// rounds.
pub fn repair_distance(raw: &[QualifiedLabel], rounds: &[Round]) -> usize {
    levenshtein(raw, &flatten(rounds))
}

/// Rule-based screenwriter: pairs the main path into rounds, then inserts
/// 2 to 5 small-talk rounds (greeting first, thanks or chat elsewhere) built
/// from the task vocabulary.
pub fn fallback_scene<R: Rng + ?Sized>(
    main_path: &DialoguePath,
    task: &TaskDefinition,
    rng: &mut R,
) -> Result<Scene, SceneViolation> {
    let mut rounds = pair_into_rounds(spoken_labels(main_path), task);
    let k = rng.random_range(MIN_INSERTED..=MAX_INSERTED);

    let greeting = match (pick(task, Side::Agent, &["Greeting"]), pick(task, Side::User, &["Greeting"])) {
        (Some(agent), Some(user)) => Some(Round { agent, user }),
        _ => None,
    };
    let mut fillers: Vec<Round> = ["Thank", "Chat"]
        .iter()
        .filter_map(|n| {
            let agent = pick(task, Side::Agent, &[n])?;
            let user = pick(task, Side::User, &[n]).unwrap_or_else(|| neutral_state(task));
            Some(Round { agent, user })
        })
        .collect();
    if fillers.is_empty() {
        fillers.push(Round {
            agent: neutral_action(task),
            user: neutral_state(task),
        });
    }

    let mut remaining = k;
    if let Some(g) = greeting {
        if rng.random_bool(0.5) {
            rounds.insert(0, g);
            remaining -= 1;
        }
    }
    for _ in 0..remaining {
        let r = fillers.choose(rng).expect("non-empty").clone();
        // never after the closing round
        let at = rng.random_range(0..rounds.len().max(1));
        rounds.insert(at, r);
    }
    Scene::new(main_path.clone(), rounds, task)
}
