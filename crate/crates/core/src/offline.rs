//! Offline SOP prediction: ask a backend for the adjacency list of a task's
//! SOP vertices, either directly (AL) or via a prose description first (TCoT).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{
    extract_json_block, total_usage, Backend, Completion, LlmError, PromptRequest, Sampling, TemplateError,
    TemplateId, TemplateSet, TokenUsage,
};
use crate::task::{QualifiedLabel, SopSpec, TaskDefinition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OfflineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("prediction unusable: {0}")]
    PredictionUnusable(String),
    #[error("adjacency output is not a JSON object")]
    NotAnObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SopMethod {
    #[serde(rename = "AL")]
    Al,
    #[serde(rename = "TCoT")]
    Tcot,
}

impl std::str::FromStr for SopMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "al" => Ok(SopMethod::Al),
            "tcot" => Ok(SopMethod::Tcot),
            _ => Err(format!("unknown SOP method `{s}` (expected al or tcot)")),
        }
    }
}

/// One backend call and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: PromptRequest,
    pub completions: Vec<Completion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SopPrediction {
    pub method: SopMethod,
    pub adjacency: SopSpec,
    pub raw_transcript: Vec<Exchange>,
    pub repair_log: Vec<String>,
    pub usage: TokenUsage,
}

pub fn predict_sop(
    task: &TaskDefinition,
    method: SopMethod,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<SopPrediction, OfflineError> {
    match method {
        SopMethod::Al => predict_sop_al(task, backend, templates),
        SopMethod::Tcot => predict_sop_tcot(task, backend, templates),
    }
}

fn vertex_list(task: &TaskDefinition) -> String {
    serde_json::to_string_pretty(&task.sop.vertex).unwrap_or_default()
}

fn call(backend: &dyn Backend, id: TemplateId, text: String) -> Result<Exchange, OfflineError> {
    let request = PromptRequest::new(id, text, Sampling::TASK1, 1);
    let completions = backend.complete(&request)?;
    Ok(Exchange { request, completions })
}

fn finish(
    method: SopMethod,
    task: &TaskDefinition,
    transcript: Vec<Exchange>,
) -> Result<SopPrediction, OfflineError> {
    let last = &transcript.last().expect("at least one exchange").completions[0].text;
    let (value, mut repair_log) = extract_json_block(last)
        .map_err(|e| OfflineError::PredictionUnusable(format!("adjacency output: {e}")))?;
    let (adjacency, log) = repair_adjacency(&value, &task.sop.vertex)?;
    repair_log.extend(log);
    let violations = adjacency.violations();
    if !violations.is_empty() {
        return Err(OfflineError::PredictionUnusable(format!("{violations:?}")));
    }
    let usage = transcript.iter().fold(TokenUsage::default(), |mut acc, ex| {
        acc.add(total_usage(&ex.completions));
        acc
    });
    Ok(SopPrediction {
        method,
        adjacency,
        raw_transcript: transcript,
        repair_log,
        usage,
    })
}

/// One call: task knowledge and vertex list in, adjacency JSON out.
pub fn predict_sop_al(
    task: &TaskDefinition,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<SopPrediction, OfflineError> {
    let text = templates.render(
        TemplateId::SopAl,
        &[("task_knowledge", &task.knowledge_json()), ("vertices", &vertex_list(task))],
    )?;
    let ex = call(backend, TemplateId::SopAl, text)?;
    finish(SopMethod::Al, task, vec![ex])
}

/// Two calls: describe the process in prose, then translate that prose
/// (passed verbatim as the task knowledge) into an adjacency list.
pub fn predict_sop_tcot(
    task: &TaskDefinition,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<SopPrediction, OfflineError> {
    let vertices = vertex_list(task);
    let text = templates.render(
        TemplateId::SopTcotDescribe,
        &[("task_knowledge", &task.knowledge_json()), ("vertices", &vertices)],
    )?;
    let first = call(backend, TemplateId::SopTcotDescribe, text)?;
    let analysis = first.completions[0].text.clone();
    if analysis.trim().is_empty() {
        return Err(OfflineError::PredictionUnusable("process description is empty".into()));
    }
    let text = templates.render(
        TemplateId::SopTcotTranslate,
        &[("analysis", &analysis), ("vertices", &vertices)],
    )?;
    let second = call(backend, TemplateId::SopTcotTranslate, text)?;
    finish(SopMethod::Tcot, task, vec![first, second])
}

/// Resolves a key or target name against the vertex set. Bare names are
/// accepted when they match exactly one vertex.
fn resolve(raw: &str, vertices: &[QualifiedLabel], log: &mut Vec<String>) -> Option<QualifiedLabel> {
    if let Ok(l) = raw.parse::<QualifiedLabel>() {
        return vertices.contains(&l).then_some(l);
    }
    let hits: Vec<&QualifiedLabel> = vertices.iter().filter(|v| v.name() == raw.trim()).collect();
    match hits.as_slice() {
        [one] => {
            log.push(format!("qualified bare name `{raw}` as {one}"));
            Some((*one).clone())
        }
        _ => None,
    }
}

/// Forces a model-written adjacency object into a valid SOP over `vertices`:
/// unknown keys and targets are dropped, missing vertices get empty lists,
/// duplicate successors and self-loops are removed. Every change is logged.
pub fn repair_adjacency(
    raw: &Value,
    vertices: &[QualifiedLabel],
) -> Result<(SopSpec, Vec<String>), OfflineError> {
    let obj = raw.as_object().ok_or(OfflineError::NotAnObject)?;
    let mut log = Vec::new();
    let mut adjacency: IndexMap<QualifiedLabel, Vec<QualifiedLabel>> = IndexMap::new();
    for (key, targets) in obj {
        let Some(src) = resolve(key, vertices, &mut log) else {
            log.push(format!("dropped unknown vertex key `{key}`"));
            continue;
        };
        let list = match targets {
            Value::Array(items) => items.as_slice(),
            Value::Null => &[],
            other => {
                log.push(format!("replaced non-list successors of {src} ({other})"));
                &[]
            }
        };
        let entry = adjacency.entry(src.clone()).or_default();
        for t in list {
            let Some(name) = t.as_str() else {
                log.push(format!("dropped non-string successor {t} of {src}"));
                continue;
            };
            let Some(dst) = resolve(name, vertices, &mut log) else {
                log.push(format!("dropped edge {src} -> `{name}` (unknown vertex)"));
                continue;
            };
            if dst == src {
                log.push(format!("removed self-loop on {src}"));
            } else if entry.contains(&dst) {
                log.push(format!("removed duplicate edge {src} -> {dst}"));
            } else {
                entry.push(dst);
            }
        }
    }
    for v in vertices {
        if !adjacency.contains_key(v) {
            log.push(format!("added missing vertex {v} with no successors"));
            adjacency.insert(v.clone(), Vec::new());
        }
    }
    Ok((
        SopSpec {
            vertex: vertices.to_vec(),
            adjacency_list: adjacency,
        },
        log,
    ))
}
