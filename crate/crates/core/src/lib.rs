//! Planning engine for SOP-guided task-oriented dialogue agents.

pub mod catalog;
pub mod datagen;
pub mod eval;
pub mod fixtures;
pub mod llm;
pub mod offline;
pub mod online;
pub mod service;
pub mod sop;
pub mod task;

pub use sop::{DialoguePath, EdgeDirection, GraphError, SopGraph};
pub use task::{
    Dialogue, DialogueTurn, QualifiedLabel, Side, SopSpec, TaskDefinition, TaskError,
};
