//! Bundled task definitions, used by tests, benches and the demo server.

mod world;

use crate::sop::SopGraph;
use crate::task::{parse_task_definition, TaskDefinition};

pub use world::{golf_world, Reply, ScriptedWorld};

pub const GOLF_TASK_JSON: &str = include_str!("../fixtures/tasks/golf_invitation.json");
pub const CARD_TASK_JSON: &str = include_str!("../fixtures/tasks/card_activation.json");
pub const CHECKIN_TASK_JSON: &str = include_str!("../fixtures/tasks/airline_checkin.json");

/// All bundled tasks as `(name, json)`.
pub const ALL_TASKS: [(&str, &str); 3] = [
    ("golf_invitation", GOLF_TASK_JSON),
    ("card_activation", CARD_TASK_JSON),
    ("airline_checkin", CHECKIN_TASK_JSON),
];

pub fn golf_task() -> TaskDefinition {
    parse_task_definition(GOLF_TASK_JSON).expect("bundled task parses")
}

pub fn card_task() -> TaskDefinition {
    parse_task_definition(CARD_TASK_JSON).expect("bundled task parses")
}

pub fn checkin_task() -> TaskDefinition {
    parse_task_definition(CHECKIN_TASK_JSON).expect("bundled task parses")
}

pub fn golf_graph() -> SopGraph {
    SopGraph::from_spec(&golf_task().sop).expect("bundled SOP is valid")
}
