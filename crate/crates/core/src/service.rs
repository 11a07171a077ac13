//! Session controller: owns the task catalog and backends, keeps one working
//! memory per conversation, runs the online planner for each user message
//! and appends every turn to a JSONL transcript.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{TaskCatalog, TaskSummary};
use crate::llm::{BackendConfig, SharedBackend, TemplateSet, TokenUsage};
use crate::online::{decide_turn, Planner, PlannerConfig, PlannerMethod, TraceDetail, TurnDecision, WorkingMemory};
use crate::sop::{SopGraph, SopGuide};
use crate::task::{Dialogue, DialogueTurn, SopSpec, TaskDefinition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{session}` has no turn {turn}")]
    UnknownTurn { session: String, turn: usize },
    #[error("session `{0}` has ended")]
    SessionClosed(String),
    #[error("planning turn {turn_index} failed: {message}")]
    Planner { turn_index: usize, message: String },
    #[error("transcript storage: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Succeeded,
    Ended,
}

/// Where a session's SOP comes from: the task file, or an offline-planner
/// prediction on disk (`predicted:<file>`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SopSource {
    GroundTruth,
    Predicted(PathBuf),
}

impl From<SopSource> for String {
    fn from(s: SopSource) -> String {
        match s {
            SopSource::GroundTruth => "ground_truth".into(),
            SopSource::Predicted(p) => format!("predicted:{}", p.display()),
        }
    }
}

impl TryFrom<String> for SopSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for SopSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "" | "ground_truth" | "gt" => Ok(SopSource::GroundTruth),
            other => match other.strip_prefix("predicted:") {
                Some(p) if !p.trim().is_empty() => Ok(SopSource::Predicted(PathBuf::from(p.trim()))),
                _ => Err(format!("unknown SOP source `{other}` (expected ground_truth or predicted:<file>)")),
            },
        }
    }
}

/// Reads a predicted SOP. Accepts an offline-planner output (`adjacency`
/// field), a task file (`sop` field), a bare `{vertex, adjacency_list}` object
/// or a bare adjacency object (vertices then come from the task).
pub fn load_sop_file(path: &Path, task: &TaskDefinition) -> Result<SopSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let inner = value.get("adjacency").or_else(|| value.get("sop")).unwrap_or(&value);
    let spec = if inner.get("adjacency_list").is_some() {
        serde_json::from_value::<SopSpec>(inner.clone()).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        let adjacency_list = serde_json::from_value(inner.clone()).map_err(|e| format!("{}: {e}", path.display()))?;
        SopSpec {
            vertex: task.sop.vertex.clone(),
            adjacency_list,
        }
    };
    let violations = spec.violations();
    if !violations.is_empty() {
        let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(format!("{}: {}", path.display(), v.join("; ")));
    }
    Ok(spec)
}

/// One persisted turn. A failed planning attempt is recorded with `error`
/// set and no decision; it still takes a turn index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub session_id: String,
    pub task_ref: String,
    pub turn_index: usize,
    pub user_utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<TurnDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub usage: TokenUsage,
}

impl TranscriptRecord {
    fn to_turn(&self) -> Option<DialogueTurn> {
        let d = self.decision.as_ref()?;
        Some(DialogueTurn {
            user_utterance: self.user_utterance.clone(),
            user_state: d.user_state.clone(),
            agent_action: d.agent_action.clone(),
            agent_response: d.agent_response.clone(),
        })
    }
}

/// Groups transcript records into dialogues (one per session, in order of
/// first appearance), skipping failed attempts.
pub fn records_to_dialogues(records: &[TranscriptRecord]) -> Vec<Dialogue> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Dialogue> = HashMap::new();
    for r in records {
        let d = by_id.entry(r.session_id.clone()).or_insert_with(|| {
            order.push(r.session_id.clone());
            Dialogue {
                dialogue_id: Some(r.session_id.clone()),
                task_ref: r.task_ref.clone(),
                turns: Vec::new(),
            }
        });
        if let Some(t) = r.to_turn() {
            d.turns.push(t);
        }
    }
    order.into_iter().filter_map(|id| by_id.remove(&id)).collect()
}

pub fn read_records_jsonl(text: &str) -> Result<Vec<TranscriptRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Reads either dialogue JSONL or transcript-record JSONL.
pub fn read_any_dialogues(text: &str) -> Result<Vec<Dialogue>, String> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let is_records = serde_json::from_str::<Value>(first)
        .map(|v| v.get("session_id").is_some())
        .unwrap_or(false);
    if is_records {
        read_records_jsonl(text).map(|r| records_to_dialogues(&r))
    } else {
        crate::task::read_dialogues_jsonl(text).map_err(|e| e.to_string())
    }
}

/// Public view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub task_ref: String,
    pub method: PlannerMethod,
    pub sop_source: SopSource,
    pub status: SessionStatus,
    /// A success-mark action has been emitted (kept after the session ends).
    pub succeeded: bool,
    pub turns: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session: SessionView,
    /// The agent's opening turn, absent when the user speaks first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opening: Option<TurnDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostedTurn {
    pub turn_index: usize,
    pub decision: TurnDecision,
    pub session: SessionView,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub task: String,
    #[serde(default)]
    pub method: Option<PlannerMethod>,
    #[serde(default)]
    pub sop_source: Option<SopSource>,
    #[serde(default)]
    pub seed: Option<u64>,
}

struct Session {
    id: String,
    task_ref: String,
    cfg: PlannerConfig,
    sop_source: SopSource,
    guide: SopGuide,
    memory: WorkingMemory,
    status: SessionStatus,
    succeeded: bool,
    created_at: DateTime<Utc>,
    records: Vec<TranscriptRecord>,
    backend: SharedBackend,
    user_sim: SharedBackend,
}

impl Session {
    fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            task_ref: self.task_ref.clone(),
            method: self.cfg.method,
            sop_source: self.sop_source.clone(),
            status: self.status,
            succeeded: self.succeeded,
            turns: self.memory.history.len(),
            created_at: self.created_at,
        }
    }
}

/// Service settings as stored in a JSON config file. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Backend config file for the agent model.
    pub backend: Option<PathBuf>,
    /// Backend config file for the simulated user; defaults to `backend`.
    pub user_sim: Option<PathBuf>,
    /// Task directory; the bundled tasks when absent.
    pub task_dir: Option<PathBuf>,
    /// Where transcripts are appended; in memory only when absent.
    pub transcript_dir: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub planner: PlannerConfig,
    /// Let the user speak first instead of the agent.
    pub user_opens: bool,
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<ServiceConfig, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: ServiceConfig = serde_json::from_str(&text)
            .map_err(|e| ServiceError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.backend,
            &mut cfg.user_sim,
            &mut cfg.task_dir,
            &mut cfg.transcript_dir,
            &mut cfg.templates_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Builds the service from the files this config points at.
    pub fn build(&self) -> Result<AgentService, ServiceError> {
        let backend_of = |p: &Path| -> Result<SharedBackend, ServiceError> {
            BackendConfig::load(p)
                .and_then(|c| c.build())
                .map_err(|e| ServiceError::InvalidConfig(e.to_string()))
        };
        let backend = backend_of(
            self.backend
                .as_deref()
                .ok_or_else(|| ServiceError::InvalidConfig("no backend configured".into()))?,
        )?;
        let user_sim = match &self.user_sim {
            Some(p) => backend_of(p)?,
            None => backend.clone(),
        };
        let catalog = match &self.task_dir {
            Some(d) => TaskCatalog::load_dir(d).map_err(|e| ServiceError::InvalidConfig(e.to_string()))?,
            None => TaskCatalog::bundled(),
        };
        let templates = match &self.templates_dir {
            Some(d) => TemplateSet::with_overrides(d).map_err(|e| ServiceError::InvalidConfig(e.to_string()))?,
            None => TemplateSet::default(),
        };
        self.planner
            .validate()
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let mut svc = AgentService::new(catalog, backend, user_sim, templates, self.planner.clone());
        svc.user_opens = self.user_opens;
        if let Some(d) = &self.transcript_dir {
            svc = svc.with_transcript_dir(d)?;
        }
        Ok(svc)
    }
}

/// Runs many conversations at once. Each session has its own lock and its
/// own backend handles; the session table lock is only held for lookups.
pub struct AgentService {
    catalog: TaskCatalog,
    backend: SharedBackend,
    user_sim: SharedBackend,
    templates: TemplateSet,
    defaults: PlannerConfig,
    user_opens: bool,
    transcript_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AgentService {
    pub fn new(
        catalog: TaskCatalog,
        backend: SharedBackend,
        user_sim: SharedBackend,
        templates: TemplateSet,
        defaults: PlannerConfig,
    ) -> Self {
        AgentService {
            catalog,
            backend,
            user_sim,
            templates,
            defaults,
            user_opens: false,
            transcript_dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Also append every record to `<dir>/<session id>.jsonl`.
    pub fn with_transcript_dir(mut self, dir: &Path) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(dir).map_err(|e| ServiceError::Storage(format!("{}: {e}", dir.display())))?;
        self.transcript_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn user_opens(mut self, yes: bool) -> Self {
        self.user_opens = yes;
        self
    }

    pub fn catalog(&self) -> &TaskCatalog {
        &self.catalog
    }

    pub fn defaults(&self) -> &PlannerConfig {
        &self.defaults
    }

    pub fn list_tasks(&self) -> Vec<TaskSummary> {
        self.catalog.summaries()
    }

    pub fn task(&self, a_id: &str) -> Result<&TaskDefinition, ServiceError> {
        self.catalog.get(a_id).ok_or_else(|| ServiceError::UnknownTask(a_id.to_string()))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<CreatedSession, ServiceError> {
        let task = self.task(&req.task)?;
        let mut cfg = self.defaults.clone();
        if let Some(m) = req.method {
            cfg.method = m;
        }
        if let Some(s) = req.seed {
            cfg.seed = s;
        }
        cfg.validate().map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let sop_source = req.sop_source.clone().unwrap_or(SopSource::GroundTruth);
        let spec = match &sop_source {
            SopSource::GroundTruth => task.sop.clone(),
            SopSource::Predicted(p) => load_sop_file(p, task).map_err(ServiceError::InvalidConfig)?,
        };
        let guide = SopGraph::from_spec(&spec)
            .and_then(SopGuide::new)
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let mut session = Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            task_ref: task.a_id.clone(),
            cfg,
            sop_source,
            guide,
            memory: WorkingMemory::new(),
            status: SessionStatus::Active,
            succeeded: false,
            created_at: Utc::now(),
            records: Vec::new(),
            backend: self.backend.fork_session(),
            user_sim: self.user_sim.fork_session(),
        };
        let opening = if self.user_opens {
            None
        } else {
            Some(self.run_turn(task, &mut session, None)?.1)
        };
        let view = session.view();
        self.sessions
            .write()
            .expect("session table lock")
            .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(CreatedSession { session: view, opening })
    }

    pub fn post_user_message(&self, id: &str, text: &str) -> Result<PostedTurn, ServiceError> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        if session.status == SessionStatus::Ended {
            return Err(ServiceError::SessionClosed(id.to_string()));
        }
        let task = self.task(&session.task_ref)?;
        let (turn_index, decision) = self.run_turn(task, &mut session, Some(text))?;
        Ok(PostedTurn {
            turn_index,
            decision,
            session: session.view(),
        })
    }

    /// Plans one turn, persists its record and updates the status. On a
    /// planner error the failed record is still persisted.
    fn run_turn(
        &self,
        task: &TaskDefinition,
        session: &mut Session,
        utterance: Option<&str>,
    ) -> Result<(usize, TurnDecision), ServiceError> {
        let started_at = Utc::now();
        let mem = match utterance {
            Some(u) => session.memory.clone().with_user(u),
            None => session.memory.clone(),
        };
        let planner = Planner::new(
            task,
            session.backend.as_ref(),
            session.user_sim.as_ref(),
            &self.templates,
            &session.guide,
            &session.cfg,
        );
        let result = decide_turn(&planner, &mem);
        let turn_index = session.records.len();
        let mut record = TranscriptRecord {
            session_id: session.id.clone(),
            task_ref: session.task_ref.clone(),
            turn_index,
            user_utterance: utterance.unwrap_or_default().to_string(),
            decision: None,
            error: None,
            started_at,
            finished_at: Utc::now(),
            usage: planner.usage(),
        };
        let decision = match result {
            Ok(d) => d,
            Err(e) => {
                record.error = Some(e.to_string());
                self.persist(session, record)?;
                return Err(ServiceError::Planner {
                    turn_index,
                    message: e.to_string(),
                });
            }
        };
        record.usage = decision.usage;
        record.decision = Some(decision.clone());

        let mut mem = mem;
        if let Some(s) = decision.user_state.clone() {
            mem.set_pending_state(s);
        }
        mem.complete_turn(decision.agent_action.clone(), decision.agent_response.clone());
        session.memory = mem;
        if task.is_success(&decision.agent_action) {
            session.succeeded = true;
            session.status = SessionStatus::Succeeded;
        }
        let forced = matches!(decision.trace.detail, TraceDetail::Forced { .. });
        if forced || session.guide.graph().is_terminal(&decision.agent_action) {
            session.status = SessionStatus::Ended;
        }
        self.persist(session, record)?;
        Ok((turn_index, decision))
    }

    fn persist(&self, session: &mut Session, record: TranscriptRecord) -> Result<(), ServiceError> {
        if let Some(dir) = &self.transcript_dir {
            let path = dir.join(format!("{}.jsonl", session.id));
            let mut line = serde_json::to_string(&record).map_err(|e| ServiceError::Storage(e.to_string()))?;
            line.push('\n');
            // one write per record so a line is never interleaved
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
        }
        session.records.push(record);
        Ok(())
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.session(id)?.lock().expect("session lock").view())
    }

    pub fn list_sessions(&self) -> Vec<SessionView> {
        let handles: Vec<_> = self.sessions.read().expect("session table lock").values().cloned().collect();
        let mut out: Vec<SessionView> = handles.iter().map(|h| h.lock().expect("session lock").view()).collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        out
    }

    /// The record of one turn, including its planner trace.
    pub fn get_trace(&self, id: &str, turn: usize) -> Result<TranscriptRecord, ServiceError> {
        let handle = self.session(id)?;
        let session = handle.lock().expect("session lock");
        session.records.get(turn).cloned().ok_or_else(|| ServiceError::UnknownTurn {
            session: id.to_string(),
            turn,
        })
    }

    pub fn records(&self, id: &str) -> Result<Vec<TranscriptRecord>, ServiceError> {
        Ok(self.session(id)?.lock().expect("session lock").records.clone())
    }

    /// Transcript as JSONL, one record per line.
    pub fn export_transcript(&self, id: &str) -> Result<String, ServiceError> {
        let mut out = String::new();
        for r in self.records(id)? {
            out.push_str(&serde_json::to_string(&r).map_err(|e| ServiceError::Storage(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// The session's completed turns in evaluation format.
    pub fn dialogue(&self, id: &str) -> Result<Dialogue, ServiceError> {
        let handle = self.session(id)?;
        let s = handle.lock().expect("session lock");
        Ok(Dialogue {
            dialogue_id: Some(s.id.clone()),
            task_ref: s.task_ref.clone(),
            turns: s.memory.history.clone(),
        })
    }
}
