use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DialoguePath, GraphError, SopGraph};

/// Enumeration stops with [`GraphError::PathLimit`] past this many paths.
pub const DEFAULT_PATH_CAP: usize = 200_000;

/// All start-to-terminal paths in which every directed edge is used at most
/// once and every vertex appears at most twice, so a loop is walked once.
/// Sorted by label sequence.
pub fn enumerate_paths(g: &SopGraph) -> Result<Vec<DialoguePath>, GraphError> {
    enumerate_paths_capped(g, DEFAULT_PATH_CAP)
}

pub fn enumerate_paths_capped(g: &SopGraph, cap: usize) -> Result<Vec<DialoguePath>, GraphError> {
    let start = g.raw_start().ok_or(GraphError::NoStart)?;
    if g.terminals().is_empty() {
        return Err(GraphError::NoTerminal);
    }
    let succ = g.raw_succ();
    // edge id = offset[src] + position in succ[src]
    let mut offset = Vec::with_capacity(succ.len());
    let mut total = 0;
    for ts in succ {
        offset.push(total);
        total += ts.len();
    }
    let mut walker = Walker {
        succ,
        offset: &offset,
        edge_used: vec![false; total],
        visits: vec![0u8; succ.len()],
        stack: vec![start],
        found: BTreeSet::new(),
        cap,
    };
    walker.visits[start] = 1;
    walker.walk(start)?;
    Ok(walker
        .found
        .into_iter()
        .map(|ix| DialoguePath::new(ix.into_iter().map(|i| g.vertices()[i].clone())).expect("non-empty"))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect())
}

struct Walker<'a> {
    succ: &'a [Vec<usize>],
    offset: &'a [usize],
    edge_used: Vec<bool>,
    visits: Vec<u8>,
    stack: Vec<usize>,
    found: BTreeSet<Vec<usize>>,
    cap: usize,
}

impl Walker<'_> {
    fn walk(&mut self, v: usize) -> Result<(), GraphError> {
        if self.succ[v].is_empty() {
            self.found.insert(self.stack.clone());
            if self.found.len() > self.cap {
                return Err(GraphError::PathLimit(self.cap));
            }
            return Ok(());
        }
        for (k, &w) in self.succ[v].iter().enumerate() {
            let e = self.offset[v] + k;
            if self.edge_used[e] || self.visits[w] >= 2 {
                continue;
            }
            self.edge_used[e] = true;
            self.visits[w] += 1;
            self.stack.push(w);
            let r = self.walk(w);
            self.stack.pop();
            self.visits[w] -= 1;
            self.edge_used[e] = false;
            r?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted_paths: usize,
    pub gold_paths: usize,
    pub matched: usize,
}

/// Precision/recall/F1 of the predicted SOP's dialogue paths against the
/// ground truth's. A prediction with no start or terminal has no paths.
pub fn path_prf(pred: &SopGraph, gt: &SopGraph) -> Result<PathScores, GraphError> {
    let gold: BTreeSet<DialoguePath> = enumerate_paths(gt)?.into_iter().collect();
    let predicted: BTreeSet<DialoguePath> = match enumerate_paths(pred) {
        Ok(p) => p.into_iter().collect(),
        Err(GraphError::NoStart | GraphError::NoTerminal) => BTreeSet::new(),
        Err(e) => return Err(e),
    };
    let matched = predicted.intersection(&gold).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(matched, predicted.len());
    let recall = ratio(matched, gold.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PathScores {
        precision,
        recall,
        f1,
        predicted_paths: predicted.len(),
        gold_paths: gold.len(),
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::task::QualifiedLabel;

    fn a(n: &str) -> QualifiedLabel {
        QualifiedLabel::agent(n)
    }

    #[test]
    fn golf_has_six_paths() {
        let paths = enumerate_paths(&fixtures::golf_graph()).unwrap();
        assert_eq!(paths.len(), 6);
        let loops = paths
            .iter()
            .filter(|p| p.labels().iter().filter(|l| l.name() == "InquireAboutParticipationNumberOrTime").count() == 2)
            .count();
        assert_eq!(loops, 2);
        assert!(paths.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_edge_and_degenerate() {
        let g = SopGraph::from_edges([a("Start"), a("PoliteEnd")], [(a("Start"), a("PoliteEnd"))]).unwrap();
        let p = enumerate_paths(&g).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].labels(), &[a("Start"), a("PoliteEnd")]);

        let g = SopGraph::from_edges([a("Start")], []).unwrap();
        let p = enumerate_paths(&g).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].labels(), &[a("Start")]);
    }

    #[test]
    fn cycle_without_terminal() {
        let g = SopGraph::from_edges(
            [a("Start"), a("B"), a("C")],
            [(a("Start"), a("B")), (a("B"), a("C")), (a("C"), a("B"))],
        )
        .unwrap();
        assert_eq!(enumerate_paths(&g), Err(GraphError::NoTerminal));
    }

    #[test]
    fn cap_is_enforced() {
        assert_eq!(
            enumerate_paths_capped(&fixtures::golf_graph(), 3),
            Err(GraphError::PathLimit(3))
        );
    }

    #[test]
    fn prf_identity_and_empty() {
        let g = fixtures::golf_graph();
        let s = path_prf(&g, &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = path_prf(&SopGraph::empty(), &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_three_of_six_plus_one_spurious() {
        // Dropping the identity-rejection edge removes one gold path; dropping
        // the re-ask loop edge removes two and makes the partial answer a dead end.
        let mut spec = fixtures::golf_task().sop;
        spec.adjacency_list[&a("VerifyIdentity")].retain(|t| t.name() != "NotThemselves");
        spec.adjacency_list[&QualifiedLabel::user("OnlyProvideParticipationNumberOrTime")].clear();
        let pred = SopGraph::from_spec(&spec).unwrap();
        let s = path_prf(&pred, &fixtures::golf_graph()).unwrap();
        assert_eq!((s.matched, s.predicted_paths, s.gold_paths), (3, 4, 6));
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 0.6).abs() < 1e-12);
    }
}
