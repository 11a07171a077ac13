//! Task lookup by `a_id`, loaded from a directory of task files or from the
//! bundled fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::ALL_TASKS;
use crate::task::{parse_task_definition, validate_task, TaskDefinition, TaskError, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Parse { path: String, source: TaskError },
    #[error("{path}: task fails validation ({} violations)", violations.len())]
    Invalid { path: String, violations: Vec<Violation> },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub a_id: String,
    pub domain: String,
    pub task: String,
    pub agent_goal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct TaskCatalog {
    tasks: BTreeMap<String, (TaskDefinition, Option<PathBuf>)>,
}

impl TaskCatalog {
    pub fn bundled() -> Self {
        let mut c = TaskCatalog::default();
        for (_, json) in ALL_TASKS {
            let task = parse_task_definition(json).expect("bundled task parses");
            c.tasks.insert(task.a_id.clone(), (task, None));
        }
        c
    }

    /// Loads every `*.json` file in `dir` (not recursive), in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, CatalogError> {
        let io = |e: std::io::Error| CatalogError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut c = TaskCatalog::default();
        for f in files {
            let task = load_task_file(&f)?;
            c.insert(task, Some(f))?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, task: TaskDefinition, file: Option<PathBuf>) -> Result<(), CatalogError> {
        if self.tasks.contains_key(&task.a_id) {
            return Err(CatalogError::DuplicateId(task.a_id));
        }
        self.tasks.insert(task.a_id.clone(), (task, file));
        Ok(())
    }

    pub fn get(&self, a_id: &str) -> Option<&TaskDefinition> {
        self.tasks.get(a_id).map(|(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.tasks.values().map(|(t, _)| t)
    }

    pub fn summaries(&self) -> Vec<TaskSummary> {
        self.tasks
            .values()
            .map(|(t, f)| TaskSummary {
                a_id: t.a_id.clone(),
                domain: t.domain.clone(),
                task: t.task.clone(),
                agent_goal: t.conversation_profile.agent_goal.clone(),
                file: f.as_ref().map(|p| p.display().to_string()),
            })
            .collect()
    }
}

/// Reads, parses and validates one task file.
pub fn load_task_file(path: &Path) -> Result<TaskDefinition, CatalogError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let task = parse_task_definition(&text).map_err(|source| CatalogError::Parse { path: p.clone(), source })?;
    let violations = validate_task(&task);
    if !violations.is_empty() {
        return Err(CatalogError::Invalid { path: p, violations });
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{CARD_TASK_JSON, GOLF_TASK_JSON};

    #[test]
    fn bundled_has_three() {
        let c = TaskCatalog::bundled();
        assert_eq!(c.len(), 3);
        assert!(c.get("06a14").is_some());
        for t in c.tasks() {
            assert_eq!(validate_task(t), vec![], "{}", t.a_id);
        }
    }

    #[test]
    fn directory_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.json"), GOLF_TASK_JSON).unwrap();
        std::fs::write(dir.path().join("b.json"), CARD_TASK_JSON).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let c = TaskCatalog::load_dir(dir.path()).unwrap();
        let s = c.summaries();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|t| t.file.is_some() && !t.domain.is_empty()));

        std::fs::write(dir.path().join("c.json"), GOLF_TASK_JSON).unwrap();
        assert_eq!(
            TaskCatalog::load_dir(dir.path()).unwrap_err(),
            CatalogError::DuplicateId("06a14".into())
        );
    }
}
