use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{enumerate_paths, GraphError, SopGraph};
use crate::task::QualifiedLabel;

/// Levenshtein distance with unit insert/delete/substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn path_edit_distance(a: &[QualifiedLabel], b: &[QualifiedLabel]) -> usize {
    levenshtein(a, b)
}

/// The SOP subpath closest to an observed path and the vertices that follow it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpathMatch {
    pub subpath: Vec<QualifiedLabel>,
    pub distance: usize,
    pub children: Vec<QualifiedLabel>,
}

/// Precomputed subpath index for repeated guidance queries on one SOP.
#[derive(Debug, Clone)]
pub struct SopGuide {
    graph: SopGraph,
    /// Distinct contiguous windows of all enumerated paths.
    windows: Vec<Vec<QualifiedLabel>>,
}

impl SopGuide {
    pub fn new(graph: SopGraph) -> Result<Self, GraphError> {
        let paths = enumerate_paths(&graph)?;
        let mut set: BTreeSet<Vec<QualifiedLabel>> = BTreeSet::new();
        for p in &paths {
            let labels = p.labels();
            for i in 0..labels.len() {
                for j in i + 1..=labels.len() {
                    set.insert(labels[i..j].to_vec());
                }
            }
        }
        Ok(SopGuide {
            graph,
            windows: set.into_iter().collect(),
        })
    }

    pub fn graph(&self) -> &SopGraph {
        &self.graph
    }

    /// Finds the window of length at most `observed.len() + 2` with the
    /// smallest edit distance to `observed` (ties: longer, then
    /// lexicographically smaller) and returns the vertices reachable from its
    /// last vertex within `depth` hops, nearest first, without repeats.
    pub fn nearest(&self, observed: &[QualifiedLabel], depth: usize) -> SubpathMatch {
        let max_len = observed.len() + 2;
        let mut best: Option<(usize, &Vec<QualifiedLabel>)> = None;
        for w in &self.windows {
            if w.len() > max_len {
                continue;
            }
            let lower = w.len().abs_diff(observed.len());
            if let Some((d, _)) = best {
                if lower > d {
                    continue;
                }
            }
            let d = levenshtein(w, observed);
            let better = match best {
                None => true,
                Some((bd, bw)) => (d, Reverse(w.len()), w) < (bd, Reverse(bw.len()), bw),
            };
            if better {
                best = Some((d, w));
            }
        }
        match best {
            None => SubpathMatch {
                subpath: Vec::new(),
                distance: observed.len(),
                children: Vec::new(),
            },
            Some((distance, w)) => SubpathMatch {
                subpath: w.clone(),
                distance,
                children: self.children(w.last().expect("windows are non-empty"), depth),
            },
        }
    }

    /// Breadth-first successors of `v` up to `depth` hops, in adjacency order.
    pub fn children(&self, v: &QualifiedLabel, depth: usize) -> Vec<QualifiedLabel> {
        let mut out: Vec<QualifiedLabel> = Vec::new();
        let mut frontier = vec![v.clone()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for f in &frontier {
                for s in self.graph.successors(f).unwrap_or_default() {
                    if !out.contains(s) {
                        out.push(s.clone());
                        next.push(s.clone());
                    }
                }
            }
            frontier = next;
        }
        out
    }
}

/// One-off form of [`SopGuide::nearest`].
pub fn nearest_subpath_children(
    g: &SopGraph,
    observed: &[QualifiedLabel],
    depth: usize,
) -> Result<SubpathMatch, GraphError> {
    Ok(SopGuide::new(g.clone())?.nearest(observed, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn a(n: &str) -> QualifiedLabel {
        QualifiedLabel::agent(n)
    }
    fn u(n: &str) -> QualifiedLabel {
        QualifiedLabel::user(n)
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein::<u8>(b"", b"abc"), 3);
        assert_eq!(levenshtein(b"abc", b"abc"), 0);
    }

    #[test]
    fn exact_prefix_depth_one() {
        let g = fixtures::golf_graph();
        let obs = [a("Start"), a("VerifyIdentity"), u("IsThemselves")];
        let m = nearest_subpath_children(&g, &obs, 1).unwrap();
        assert_eq!(m.distance, 0);
        assert_eq!(m.subpath, obs.to_vec());
        assert_eq!(m.children, vec![a("InviteToGolfExperienceEvent")]);
    }

    #[test]
    fn exact_prefix_depth_two() {
        let g = fixtures::golf_graph();
        let obs = [a("Start"), a("VerifyIdentity"), u("IsThemselves")];
        let m = nearest_subpath_children(&g, &obs, 2).unwrap();
        assert_eq!(
            m.children,
            vec![a("InviteToGolfExperienceEvent"), u("Inconvenient"), u("ClearAgreement")]
        );
    }

    #[test]
    fn off_sop_observation_maps_to_nearest() {
        let g = fixtures::golf_graph();
        // a digression inserted before the invitation is absorbed by one edit
        let obs = [
            a("Start"),
            a("VerifyIdentity"),
            u("IsThemselves"),
            a("InviteToGolfExperienceEvent"),
            u("WorryAndDoubt"),
        ];
        let m = nearest_subpath_children(&g, &obs, 1).unwrap();
        assert_eq!(m.distance, 1);
        assert!(g.successors(m.subpath.last().unwrap()).is_some());
    }

    #[test]
    fn terminal_has_no_children() {
        let g = fixtures::golf_graph();
        let obs = [u("RefuseToAnswer"), a("PoliteEnd")];
        let m = nearest_subpath_children(&g, &obs, 2).unwrap();
        assert_eq!(m.distance, 0);
        assert!(m.children.is_empty());
    }
}
