//! Task definitions: user/conversation profiles, the action and state
//! vocabularies, the SOP adjacency spec, and recorded dialogues.
//!
//! Task files follow the dataset layout: one JSON object per file with the
//! keys `user_profile`, `conversation_profile`, `agent_action`, `user_state`,
//! `sop`, `a_id`, `domain` and `task`. Unknown keys are kept and written back.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{path}` has the wrong type, expected {expected}")]
    WrongType { path: String, expected: &'static str },
    #[error("bad label `{0}`, expected `Agent.<name>` or `User.<name>`")]
    BadLabel(String),
    #[error("`{path}` references unknown vertex `{vertex}`")]
    SchemaMismatch { path: String, vertex: String },
}

/// Which party a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Agent,
    User,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Agent => "Agent",
            Side::User => "User",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Agent => Side::User,
            Side::User => Side::Agent,
        }
    }
}

impl FromStr for Side {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Agent" => Ok(Side::Agent),
            "User" => Ok(Side::User),
            other => Err(TaskError::BadLabel(other.to_string())),
        }
    }
}

/// An agent action or user state written as `<side>.<name>`.
///
/// The derived ordering (side, then name) coincides with the lexicographic
/// order of the serialized strings, which is what every tie-break uses.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedLabel {
    side: Side,
    name: String,
}

impl QualifiedLabel {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_agent(&self) -> bool {
        self.side == Side::Agent
    }

    pub fn is_user(&self) -> bool {
        self.side == Side::User
    }

    /// Shorthand for building labels in code and tests. Panics on invalid names.
    pub fn agent(name: &str) -> Self {
        qualify(Side::Agent, name).expect("valid agent label")
    }

    pub fn user(name: &str) -> Self {
        qualify(Side::User, name).expect("valid user label")
    }
}

fn valid_name(name: &str) -> bool {
    !name.trim().is_empty() && !name.contains('.')
}

/// Builds a label from a side and an unqualified name.
pub fn qualify(side: Side, name: &str) -> Result<QualifiedLabel, TaskError> {
    if !valid_name(name) {
        return Err(TaskError::BadLabel(format!("{}.{}", side.as_str(), name)));
    }
    Ok(QualifiedLabel {
        side,
        name: name.to_string(),
    })
}

/// Splits `Agent.X` / `User.X` into its side and name.
pub fn split(label: &str) -> Result<(Side, String), TaskError> {
    let bad = || TaskError::BadLabel(label.to_string());
    let (side, name) = label.split_once('.').ok_or_else(bad)?;
    let side: Side = side.parse().map_err(|_| bad())?;
    if !valid_name(name) {
        return Err(bad());
    }
    Ok((side, name.to_string()))
}

impl FromStr for QualifiedLabel {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (side, name) = split(s)?;
        Ok(QualifiedLabel { side, name })
    }
}

impl fmt::Display for QualifiedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.side.as_str(), self.name)
    }
}

impl fmt::Debug for QualifiedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for QualifiedLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Free-form user information held by the agent (name, title, account data...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserProfile(pub IndexMap<String, String>);

impl UserProfile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.0).unwrap_or_default()
    }
}

/// Business content and goals handed to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationProfile {
    pub agent_identity: String,
    pub agent_goal: String,
    pub success_mark: Vec<String>,
    #[serde(default)]
    pub other_knowledge: String,
    #[serde(flatten)]
    pub extra: IndexMap<String, Value>,
}

/// The SOP as written in task files: a vertex list plus adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SopSpec {
    pub vertex: Vec<QualifiedLabel>,
    pub adjacency_list: IndexMap<QualifiedLabel, Vec<QualifiedLabel>>,
}

impl SopSpec {
    pub fn edge_count(&self) -> usize {
        self.adjacency_list.values().map(Vec::len).sum()
    }

    /// Structural checks shared by task validation and offline SOP repair.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for v in &self.vertex {
            if !seen.insert(v) {
                out.push(Violation::new(ViolationCode::DuplicateVertex, v.to_string()));
            }
        }
        for v in &self.vertex {
            if !self.adjacency_list.contains_key(v) {
                out.push(Violation::new(ViolationCode::MissingAdjacencyKey, v.to_string()));
            }
        }
        for (src, targets) in &self.adjacency_list {
            if !seen.contains(src) {
                out.push(Violation::new(
                    ViolationCode::UnknownAdjacencyVertex,
                    format!("sop.adjacency_list.{src}"),
                ));
            }
            let mut local = HashSet::new();
            for t in targets {
                if !seen.contains(t) {
                    out.push(Violation::new(
                        ViolationCode::UnknownAdjacencyVertex,
                        format!("sop.adjacency_list.{src} -> {t}"),
                    ));
                }
                if t == src {
                    out.push(Violation::new(ViolationCode::SelfLoop, src.to_string()));
                }
                if !local.insert(t) {
                    out.push(Violation::new(
                        ViolationCode::DuplicateSuccessor,
                        format!("{src} -> {t}"),
                    ));
                }
            }
        }
        out
    }
}

/// A complete task definition.
///
/// `agent_action` and `user_state` are held qualified; task files list them by
/// bare name and that is also how they are written back.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDefinition {
    pub user_profile: UserProfile,
    pub conversation_profile: ConversationProfile,
    pub agent_action: Vec<QualifiedLabel>,
    pub user_state: Vec<QualifiedLabel>,
    pub sop: SopSpec,
    pub a_id: String,
    pub domain: String,
    pub task: String,
    pub extra: IndexMap<String, Value>,
}

impl TaskDefinition {
    pub fn action_names(&self) -> Vec<&str> {
        self.agent_action.iter().map(QualifiedLabel::name).collect()
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.user_state.iter().map(QualifiedLabel::name).collect()
    }

    pub fn has_action(&self, label: &QualifiedLabel) -> bool {
        label.is_agent() && self.agent_action.contains(label)
    }

    pub fn has_state(&self, label: &QualifiedLabel) -> bool {
        label.is_user() && self.user_state.contains(label)
    }

    /// Success-mark entries as labels. Bare names are read as agent actions;
    /// entries that do not parse are skipped (validation reports them).
    pub fn success_labels(&self) -> Vec<QualifiedLabel> {
        self.conversation_profile
            .success_mark
            .iter()
            .filter_map(|raw| {
                if raw.contains('.') {
                    raw.parse().ok()
                } else {
                    qualify(Side::Agent, raw).ok()
                }
            })
            .collect()
    }

    pub fn is_success(&self, label: &QualifiedLabel) -> bool {
        self.success_labels().contains(label)
    }

    /// Maps model output such as `VerifyIdentity`, `Agent.VerifyIdentity` or
    /// `"VerifyIdentity".` onto the action vocabulary.
    pub fn normalize_action(&self, raw: &str) -> Option<QualifiedLabel> {
        normalize_in(raw, Side::Agent, &self.agent_action)
    }

    pub fn normalize_state(&self, raw: &str) -> Option<QualifiedLabel> {
        normalize_in(raw, Side::User, &self.user_state)
    }

    /// State used when a model names something outside the vocabulary.
    pub fn fallback_state(&self) -> Option<QualifiedLabel> {
        let preferred = QualifiedLabel::user("OtherIntentions");
        if self.user_state.contains(&preferred) {
            return Some(preferred);
        }
        self.user_state.iter().min().cloned()
    }

    /// The polite-closing action: `Agent.PoliteEnd` when declared, otherwise
    /// the first terminal agent vertex of the SOP.
    pub fn polite_end(&self) -> Option<QualifiedLabel> {
        let preferred = QualifiedLabel::agent("PoliteEnd");
        if self.agent_action.contains(&preferred) {
            return Some(preferred);
        }
        self.sop
            .vertex
            .iter()
            .find(|v| {
                v.is_agent()
                    && self
                        .sop
                        .adjacency_list
                        .get(*v)
                        .is_none_or(|succ| succ.is_empty())
            })
            .cloned()
    }

    /// Conversation profile as compact JSON, used as "task knowledge" in prompts.
    pub fn knowledge_json(&self) -> String {
        serde_json::to_string(&self.conversation_profile).unwrap_or_default()
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert(
            "user_profile".into(),
            serde_json::to_value(&self.user_profile).unwrap_or(Value::Null),
        );
        obj.insert(
            "conversation_profile".into(),
            serde_json::to_value(&self.conversation_profile).unwrap_or(Value::Null),
        );
        obj.insert(
            "agent_action".into(),
            Value::from(self.action_names().into_iter().map(String::from).collect::<Vec<_>>()),
        );
        obj.insert(
            "user_state".into(),
            Value::from(self.state_names().into_iter().map(String::from).collect::<Vec<_>>()),
        );
        obj.insert("sop".into(), serde_json::to_value(&self.sop).unwrap_or(Value::Null));
        obj.insert("a_id".into(), Value::from(self.a_id.clone()));
        obj.insert("domain".into(), Value::from(self.domain.clone()));
        obj.insert("task".into(), Value::from(self.task.clone()));
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }
}

fn normalize_in(raw: &str, side: Side, vocab: &[QualifiedLabel]) -> Option<QualifiedLabel> {
    let cleaned = raw
        .trim()
        .trim_matches(|c: char| {
            c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '[' | ']' | '.' | ',' | '*' | '“' | '”')
        })
        .to_string();
    let name = match cleaned.split_once('.') {
        Some((prefix, rest)) if prefix == side.as_str() => rest.trim(),
        Some(_) => return None,
        None => cleaned.as_str(),
    };
    vocab
        .iter()
        .find(|l| l.side() == side && l.name() == name)
        .cloned()
}

impl Serialize for TaskDefinition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TaskDefinition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        task_from_value(&value).map_err(serde::de::Error::custom)
    }
}

/// Parses a task file.
pub fn parse_task_definition(raw: &str) -> Result<TaskDefinition, TaskError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| TaskError::Json(e.to_string()))?;
    task_from_value(&value)
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, TaskError> {
    obj.get(key).ok_or_else(|| TaskError::MissingField(join(path, key)))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, TaskError> {
    v.as_object().ok_or_else(|| TaskError::WrongType {
        path: path.to_string(),
        expected: "object",
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, TaskError> {
    v.as_array().ok_or_else(|| TaskError::WrongType {
        path: path.to_string(),
        expected: "array",
    })
}

fn as_string(v: &Value, path: &str) -> Result<String, TaskError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(TaskError::WrongType {
            path: path.to_string(),
            expected: "string",
        }),
    }
}

fn string_list(v: &Value, path: &str) -> Result<Vec<String>, TaskError> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, item)| as_string(item, &format!("{path}[{i}]")))
        .collect()
}

/// Vocabulary entries may be bare (`Greeting`) or qualified (`User.Greeting`);
/// both are accepted, the qualified form is stored.
fn vocabulary(raw: Vec<String>, side: Side, path: &str) -> Result<Vec<QualifiedLabel>, TaskError> {
    let mut qualified_seen = 0usize;
    let total = raw.len();
    let labels = raw
        .into_iter()
        .map(|entry| {
            if entry.contains('.') {
                qualified_seen += 1;
                let label: QualifiedLabel = entry.parse()?;
                if label.side() != side {
                    return Err(TaskError::BadLabel(entry));
                }
                Ok(label)
            } else {
                qualify(side, &entry)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if qualified_seen > 0 && qualified_seen < total {
        log::warn!("`{path}` mixes qualified and bare names; storing all as qualified");
    }
    Ok(labels)
}

fn task_from_value(value: &Value) -> Result<TaskDefinition, TaskError> {
    let root = as_object(value, "$")?;

    let user_profile_v = as_object(field(root, "", "user_profile")?, "user_profile")?;
    let mut user_profile = IndexMap::new();
    for (k, v) in user_profile_v {
        user_profile.insert(k.clone(), as_string(v, &join("user_profile", k))?);
    }

    let cp = as_object(field(root, "", "conversation_profile")?, "conversation_profile")?;
    let cp_path = "conversation_profile";
    let mut extra = IndexMap::new();
    for (k, v) in cp {
        if !matches!(
            k.as_str(),
            "agent_identity" | "agent_goal" | "success_mark" | "other_knowledge"
        ) {
            extra.insert(k.clone(), v.clone());
        }
    }
    let conversation_profile = ConversationProfile {
        agent_identity: as_string(
            field(cp, cp_path, "agent_identity")?,
            "conversation_profile.agent_identity",
        )?,
        agent_goal: as_string(field(cp, cp_path, "agent_goal")?, "conversation_profile.agent_goal")?,
        success_mark: string_list(
            field(cp, cp_path, "success_mark")?,
            "conversation_profile.success_mark",
        )?,
        other_knowledge: match cp.get("other_knowledge") {
            Some(v) => as_string(v, "conversation_profile.other_knowledge")?,
            None => String::new(),
        },
        extra,
    };

    let agent_action = vocabulary(
        string_list(field(root, "", "agent_action")?, "agent_action")?,
        Side::Agent,
        "agent_action",
    )?;
    let user_state = vocabulary(
        string_list(field(root, "", "user_state")?, "user_state")?,
        Side::User,
        "user_state",
    )?;

    let sop_v = as_object(field(root, "", "sop")?, "sop")?;
    let sop = sop_from_object(sop_v)?;

    let a_id = as_string(field(root, "", "a_id")?, "a_id")?;
    let domain = as_string(field(root, "", "domain")?, "domain")?;
    let task = as_string(field(root, "", "task")?, "task")?;

    let mut top_extra = IndexMap::new();
    for (k, v) in root {
        if !matches!(
            k.as_str(),
            "user_profile"
                | "conversation_profile"
                | "agent_action"
                | "user_state"
                | "sop"
                | "a_id"
                | "domain"
                | "task"
        ) {
            top_extra.insert(k.clone(), v.clone());
        }
    }

    Ok(TaskDefinition {
        user_profile: UserProfile(user_profile),
        conversation_profile,
        agent_action,
        user_state,
        sop,
        a_id,
        domain,
        task,
        extra: top_extra,
    })
}

/// Parses the `sop` object of a task file (also the on-disk graph format).
pub fn sop_from_object(sop_v: &Map<String, Value>) -> Result<SopSpec, TaskError> {
    let vertex = string_list(field(sop_v, "sop", "vertex")?, "sop.vertex")?
        .into_iter()
        .map(|s| s.parse::<QualifiedLabel>())
        .collect::<Result<Vec<_>, _>>()?;
    let known: HashSet<&QualifiedLabel> = vertex.iter().collect();
    let adj_v = as_object(field(sop_v, "sop", "adjacency_list")?, "sop.adjacency_list")?;
    let mut adjacency_list = IndexMap::new();
    for (key, targets) in adj_v {
        let path = format!("sop.adjacency_list.{key}");
        let src: QualifiedLabel = key.parse()?;
        if !known.contains(&src) {
            return Err(TaskError::SchemaMismatch {
                path,
                vertex: key.clone(),
            });
        }
        let mut list = Vec::new();
        for raw in string_list(targets, &path)? {
            let t: QualifiedLabel = raw.parse()?;
            if !known.contains(&t) {
                return Err(TaskError::SchemaMismatch { path, vertex: raw });
            }
            list.push(t);
        }
        adjacency_list.insert(src, list);
    }
    Ok(SopSpec {
        vertex,
        adjacency_list,
    })
}

/// Parses a standalone `sop` JSON object.
pub fn parse_sop(raw: &str) -> Result<SopSpec, TaskError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| TaskError::Json(e.to_string()))?;
    sop_from_object(as_object(&value, "sop")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    DuplicateVertex,
    MissingAdjacencyKey,
    UnknownAdjacencyVertex,
    SelfLoop,
    DuplicateSuccessor,
    UnknownActionLabel,
    UnknownStateLabel,
    DuplicateAction,
    DuplicateState,
    EmptySuccessMark,
    BadSuccessMark,
    NonAgentSuccessMark,
    EmptyDialogue,
    MissingUserState,
}

/// One failed invariant, with the offending label or JSON path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub subject: String,
}

impl Violation {
    pub fn new(code: ViolationCode, subject: impl Into<String>) -> Self {
        Violation {
            code,
            subject: subject.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.subject)
    }
}

/// Checks every task invariant; an empty list means the task is valid.
pub fn validate_task(task: &TaskDefinition) -> Vec<Violation> {
    let mut out = task.sop.violations();

    for v in &task.sop.vertex {
        match v.side() {
            Side::Agent if !task.agent_action.contains(v) => {
                out.push(Violation::new(ViolationCode::UnknownActionLabel, v.to_string()))
            }
            Side::User if !task.user_state.contains(v) => {
                out.push(Violation::new(ViolationCode::UnknownStateLabel, v.to_string()))
            }
            _ => {}
        }
    }

    let mut seen = HashSet::new();
    for a in &task.agent_action {
        if !seen.insert(a) {
            out.push(Violation::new(ViolationCode::DuplicateAction, a.to_string()));
        }
    }
    let mut seen = HashSet::new();
    for s in &task.user_state {
        if !seen.insert(s) {
            out.push(Violation::new(ViolationCode::DuplicateState, s.to_string()));
        }
    }

    let marks = &task.conversation_profile.success_mark;
    if marks.is_empty() {
        out.push(Violation::new(
            ViolationCode::EmptySuccessMark,
            "conversation_profile.success_mark",
        ));
    }
    for raw in marks {
        match raw.parse::<QualifiedLabel>() {
            Ok(label) if label.is_user() => {
                out.push(Violation::new(ViolationCode::NonAgentSuccessMark, raw.clone()))
            }
            Ok(_) => {}
            Err(_) => out.push(Violation::new(ViolationCode::BadSuccessMark, raw.clone())),
        }
    }
    out
}

/// One dialogue turn: the user speaks (`user_utterance`, classified as
/// `user_state`), then the agent acts (`agent_action`) and replies.
///
/// Only the first turn of an agent-initiated dialogue has no user side: its
/// utterance is empty and `user_state` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    #[serde(default)]
    pub user_utterance: String,
    #[serde(default)]
    pub user_state: Option<QualifiedLabel>,
    pub agent_action: QualifiedLabel,
    #[serde(default)]
    pub agent_response: String,
}

impl DialogueTurn {
    pub fn is_opening(&self) -> bool {
        self.user_state.is_none() && self.user_utterance.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    pub task_ref: String,
    pub turns: Vec<DialogueTurn>,
}

impl Dialogue {
    pub fn validate(&self, task: &TaskDefinition) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.turns.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyDialogue, self.task_ref.clone()));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            match &turn.user_state {
                Some(s) if !task.has_state(s) => out.push(Violation::new(
                    ViolationCode::UnknownStateLabel,
                    format!("turns[{i}]: {s}"),
                )),
                None if i > 0 || !turn.user_utterance.is_empty() => out.push(Violation::new(
                    ViolationCode::MissingUserState,
                    format!("turns[{i}]"),
                )),
                _ => {}
            }
            if !task.has_action(&turn.agent_action) {
                out.push(Violation::new(
                    ViolationCode::UnknownActionLabel,
                    format!("turns[{i}]: {}", turn.agent_action),
                ));
            }
        }
        out
    }
}

/// Reads dialogue transcripts, one JSON object per non-empty line.
pub fn read_dialogues_jsonl(text: &str) -> Result<Vec<Dialogue>, TaskError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TaskError::Json(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_dialogues_jsonl(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
        out.push('\n');
    }
    out
}
