//! SOP graphs and the algorithms that run over them.

mod ged;
mod guide;
mod paths;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{QualifiedLabel, Side, SopSpec, Violation};

pub use ged::{graph_edit_distance, GedMode, GedResult};
pub use guide::{levenshtein, nearest_subpath_children, path_edit_distance, SopGuide, SubpathMatch};
pub use paths::{enumerate_paths, enumerate_paths_capped, path_prf, PathScores, DEFAULT_PATH_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid SOP: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(QualifiedLabel),
    #[error("SOP has no unambiguous start vertex")]
    NoStart,
    #[error("SOP has no terminal vertex")]
    NoTerminal,
    #[error("path enumeration exceeded {0} paths")]
    PathLimit(usize),
}

/// Relation between an ordered vertex pair, derived from the adjacency lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeDirection {
    None,
    Forward,
    Backward,
    Bidirectional,
}

impl EdgeDirection {
    pub fn symbol(self) -> &'static str {
        match self {
            EdgeDirection::None => "--",
            EdgeDirection::Forward => "→",
            EdgeDirection::Backward => "←",
            EdgeDirection::Bidirectional => "↔",
        }
    }

    pub fn mirror(self) -> Self {
        match self {
            EdgeDirection::Forward => EdgeDirection::Backward,
            EdgeDirection::Backward => EdgeDirection::Forward,
            other => other,
        }
    }
}

/// A non-empty label sequence with no immediate repeats.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialoguePath(Vec<QualifiedLabel>);

impl DialoguePath {
    /// Builds a path, collapsing immediate repeats. `None` when empty.
    pub fn new(labels: impl IntoIterator<Item = QualifiedLabel>) -> Option<Self> {
        let mut out: Vec<QualifiedLabel> = Vec::new();
        for l in labels {
            if out.last() != Some(&l) {
                out.push(l);
            }
        }
        (!out.is_empty()).then_some(DialoguePath(out))
    }

    pub fn labels(&self) -> &[QualifiedLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> &QualifiedLabel {
        self.0.last().expect("paths are non-empty")
    }

    pub fn into_inner(self) -> Vec<QualifiedLabel> {
        self.0
    }
}

impl fmt::Display for DialoguePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Directed SOP graph. Vertex order follows the source `vertex` list and
/// successor order follows the adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SopGraph {
    vertices: Vec<QualifiedLabel>,
    index: HashMap<QualifiedLabel, usize>,
    succ: Vec<Vec<usize>>,
    start: Option<usize>,
}

impl SopGraph {
    pub fn empty() -> Self {
        SopGraph {
            vertices: Vec::new(),
            index: HashMap::new(),
            succ: Vec::new(),
            start: None,
        }
    }

    pub fn from_spec(spec: &SopSpec) -> Result<Self, GraphError> {
        let violations = spec.violations();
        if !violations.is_empty() {
            return Err(GraphError::Invalid(violations));
        }
        let edges = spec
            .adjacency_list
            .iter()
            .flat_map(|(s, ts)| ts.iter().map(move |t| (s.clone(), t.clone())));
        Self::from_edges(spec.vertex.iter().cloned(), edges)
    }

    /// Builds a graph from a vertex list and edge list. Edges must reference
    /// listed vertices; duplicates and self-loops are rejected.
    pub fn from_edges(
        vertices: impl IntoIterator<Item = QualifiedLabel>,
        edges: impl IntoIterator<Item = (QualifiedLabel, QualifiedLabel)>,
    ) -> Result<Self, GraphError> {
        let vertices: Vec<QualifiedLabel> = vertices.into_iter().collect();
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.clone(), i).is_some() {
                return Err(GraphError::Invalid(vec![Violation::new(
                    crate::task::ViolationCode::DuplicateVertex,
                    v.to_string(),
                )]));
            }
        }
        let mut succ = vec![Vec::new(); vertices.len()];
        for (s, t) in edges {
            let si = *index.get(&s).ok_or_else(|| GraphError::UnknownVertex(s.clone()))?;
            let ti = *index.get(&t).ok_or_else(|| GraphError::UnknownVertex(t.clone()))?;
            if si == ti {
                return Err(GraphError::Invalid(vec![Violation::new(
                    crate::task::ViolationCode::SelfLoop,
                    s.to_string(),
                )]));
            }
            if succ[si].contains(&ti) {
                return Err(GraphError::Invalid(vec![Violation::new(
                    crate::task::ViolationCode::DuplicateSuccessor,
                    format!("{s} -> {t}"),
                )]));
            }
            succ[si].push(ti);
        }
        let start = pick_start(&vertices, &succ);
        Ok(SopGraph {
            vertices,
            index,
            succ,
            start,
        })
    }

    pub fn to_spec(&self) -> SopSpec {
        SopSpec {
            vertex: self.vertices.clone(),
            adjacency_list: self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), self.succ[i].iter().map(|&j| self.vertices[j].clone()).collect()))
                .collect(),
        }
    }

    pub fn vertices(&self) -> &[QualifiedLabel] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, v: &QualifiedLabel) -> bool {
        self.index.contains_key(v)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&QualifiedLabel, &QualifiedLabel)> {
        self.succ
            .iter()
            .enumerate()
            .flat_map(move |(i, ts)| ts.iter().map(move |&j| (&self.vertices[i], &self.vertices[j])))
    }

    pub fn has_edge(&self, from: &QualifiedLabel, to: &QualifiedLabel) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.succ[a].contains(&b),
            _ => false,
        }
    }

    pub fn successors(&self, v: &QualifiedLabel) -> Option<Vec<&QualifiedLabel>> {
        self.index
            .get(v)
            .map(|&i| self.succ[i].iter().map(|&j| &self.vertices[j]).collect())
    }

    pub fn start(&self) -> Result<&QualifiedLabel, GraphError> {
        self.start.map(|i| &self.vertices[i]).ok_or(GraphError::NoStart)
    }

    /// Vertices with no successors.
    pub fn terminals(&self) -> Vec<&QualifiedLabel> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(i, _)| self.succ[*i].is_empty())
            .map(|(_, v)| v)
            .collect()
    }

    pub fn is_terminal(&self, v: &QualifiedLabel) -> bool {
        self.index.get(v).is_some_and(|&i| self.succ[i].is_empty())
    }

    pub fn edge_direction(
        &self,
        n: &QualifiedLabel,
        m: &QualifiedLabel,
    ) -> Result<EdgeDirection, GraphError> {
        let a = *self.index.get(n).ok_or_else(|| GraphError::UnknownVertex(n.clone()))?;
        let b = *self.index.get(m).ok_or_else(|| GraphError::UnknownVertex(m.clone()))?;
        Ok(match (self.succ[a].contains(&b), self.succ[b].contains(&a)) {
            (true, true) => EdgeDirection::Bidirectional,
            (true, false) => EdgeDirection::Forward,
            (false, true) => EdgeDirection::Backward,
            (false, false) => EdgeDirection::None,
        })
    }

    /// Graphviz rendering, agent vertices blue and user vertices yellow.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph sop {\n  rankdir=TB;\n  node [shape=box, style=filled];\n");
        for v in &self.vertices {
            let color = match v.side() {
                Side::Agent => "lightblue",
                Side::User => "lightyellow",
            };
            out.push_str(&format!("  \"{v}\" [fillcolor={color}];\n"));
        }
        for (a, b) in self.edges() {
            out.push_str(&format!("  \"{a}\" -> \"{b}\";\n"));
        }
        out.push_str("}\n");
        out
    }

    pub(crate) fn raw_succ(&self) -> &[Vec<usize>] {
        &self.succ
    }

    pub(crate) fn raw_start(&self) -> Option<usize> {
        self.start
    }
}

/// `Agent.Start` if present and unreached, else the unique in-degree-0 vertex.
fn pick_start(vertices: &[QualifiedLabel], succ: &[Vec<usize>]) -> Option<usize> {
    let mut indeg = vec![0usize; vertices.len()];
    for ts in succ {
        for &t in ts {
            indeg[t] += 1;
        }
    }
    let named = QualifiedLabel::agent("Start");
    if let Some(i) = vertices.iter().position(|v| v == &named) {
        return (indeg[i] == 0).then_some(i);
    }
    let roots: Vec<usize> = (0..vertices.len()).filter(|&i| indeg[i] == 0).collect();
    match roots.as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}
