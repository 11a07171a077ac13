//! Graph edit distance between two SOPs with unit costs: vertex insert,
//! delete and relabel, edge insert and delete. Vertices match for free only
//! when their labels are equal.

use serde::{Deserialize, Serialize};

use super::SopGraph;

/// Graphs up to this many vertices (larger side) are solved exactly with no
/// search budget.
pub const EXACT_VERTEX_LIMIT: usize = 25;
/// Node budget for the branch-and-bound search on larger graphs.
const LARGE_GRAPH_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GedMode {
    Exact,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GedResult {
    pub ged: usize,
    /// `ged / (|V_gt| + |E_gt|)`; for an empty ground truth 0 when equal, else 1.
    pub gedr: f64,
    pub mode: GedMode,
}

const EPS: usize = usize::MAX;

struct Problem {
    n1: usize,
    n2: usize,
    /// pred adjacency matrix, n1 x n1
    pa: Vec<bool>,
    /// gt adjacency matrix, n2 x n2
    ga: Vec<bool>,
    /// gt vertex carrying the same label as each pred vertex
    twin: Vec<Option<usize>>,
    order: Vec<usize>,
    pred_edges: Vec<(usize, usize)>,
    gt_edges: Vec<(usize, usize)>,
}

impl Problem {
    fn new(pred: &SopGraph, gt: &SopGraph) -> Self {
        let n1 = pred.vertex_count();
        let n2 = gt.vertex_count();
        let mut pa = vec![false; n1 * n1];
        let mut pred_edges = Vec::new();
        for (i, ts) in pred.raw_succ().iter().enumerate() {
            for &j in ts {
                pa[i * n1 + j] = true;
                pred_edges.push((i, j));
            }
        }
        let mut ga = vec![false; n2 * n2];
        let mut gt_edges = Vec::new();
        for (i, ts) in gt.raw_succ().iter().enumerate() {
            for &j in ts {
                ga[i * n2 + j] = true;
                gt_edges.push((i, j));
            }
        }
        let twin: Vec<Option<usize>> = pred
            .vertices()
            .iter()
            .map(|v| gt.vertices().iter().position(|w| w == v))
            .collect();
        let degree = |i: usize| pred.raw_succ()[i].len() + (0..n1).filter(|&k| pa[k * n1 + i]).count();
        let mut order: Vec<usize> = (0..n1).collect();
        order.sort_by_key(|&i| (twin[i].is_none(), std::cmp::Reverse(degree(i)), i));
        Problem {
            n1,
            n2,
            pa,
            ga,
            twin,
            order,
            pred_edges,
            gt_edges,
        }
    }

    fn p_edge(&self, a: usize, b: usize) -> bool {
        self.pa[a * self.n1 + b]
    }

    fn g_edge(&self, a: usize, b: usize) -> bool {
        self.ga[a * self.n2 + b]
    }

    /// Cost added by mapping pred vertex `u` to `j` given the images in `map`
    /// of the already-assigned pred vertices `assigned`.
    fn step_cost(&self, u: usize, j: usize, map: &[usize], assigned: &[usize]) -> usize {
        let mut c = if j == EPS || self.twin[u] != Some(j) { 1 } else { 0 };
        for &x in assigned {
            let mx = map[x];
            let both = j != EPS && mx != EPS;
            for (pe, ge) in [
                (self.p_edge(u, x), both && self.g_edge(j, mx)),
                (self.p_edge(x, u), both && self.g_edge(mx, j)),
            ] {
                if pe != ge {
                    c += 1;
                }
            }
        }
        c
    }

    /// Cost of the gt vertices and edges left uncovered by a complete mapping.
    fn completion_cost(&self, used: &[bool]) -> usize {
        let vertices = used.iter().filter(|u| !**u).count();
        let edges = self.gt_edges.iter().filter(|(a, b)| !used[*a] || !used[*b]).count();
        vertices + edges
    }

    fn lower_bound(&self, depth: usize, is_assigned: &[bool], used: &[bool]) -> usize {
        let rem_pred = self.n1 - depth;
        let rem_gt = used.iter().filter(|u| !**u).count();
        let shared = self.order[depth..]
            .iter()
            .filter(|&&u| self.twin[u].is_some_and(|j| !used[j]))
            .count();
        let vertex_lb = rem_pred.max(rem_gt) - shared;
        let ep = self
            .pred_edges
            .iter()
            .filter(|(a, b)| !is_assigned[*a] || !is_assigned[*b])
            .count();
        let eg = self.gt_edges.iter().filter(|(a, b)| !used[*a] || !used[*b]).count();
        vertex_lb + ep.abs_diff(eg)
    }

    /// Full cost of a complete mapping, used to seed the upper bound.
    fn mapping_cost(&self, map: &[usize]) -> usize {
        let mut used = vec![false; self.n2];
        let mut assigned = Vec::with_capacity(self.n1);
        let mut total = 0;
        for &u in &self.order {
            total += self.step_cost(u, map[u], map, &assigned);
            assigned.push(u);
            if map[u] != EPS {
                used[map[u]] = true;
            }
        }
        total + self.completion_cost(&used)
    }
}

struct Search<'a> {
    p: &'a Problem,
    map: Vec<usize>,
    is_assigned: Vec<bool>,
    used: Vec<bool>,
    assigned: Vec<usize>,
    best: usize,
    nodes: u64,
    budget: Option<u64>,
    exhausted: bool,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, g: usize) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.budget.is_some_and(|b| self.nodes > b) {
            self.exhausted = true;
            return;
        }
        let p = self.p;
        if depth == p.n1 {
            let total = g + p.completion_cost(&self.used);
            if total < self.best {
                self.best = total;
            }
            return;
        }
        if g + p.lower_bound(depth, &self.is_assigned, &self.used) >= self.best {
            return;
        }
        let u = p.order[depth];
        let mut candidates: Vec<usize> = Vec::with_capacity(p.n2 + 1);
        if let Some(t) = p.twin[u].filter(|&t| !self.used[t]) {
            candidates.push(t);
        }
        candidates.extend((0..p.n2).filter(|&j| !self.used[j] && Some(j) != p.twin[u]));
        candidates.push(EPS);
        for j in candidates {
            let c = p.step_cost(u, j, &self.map, &self.assigned);
            if g + c >= self.best {
                continue;
            }
            self.map[u] = j;
            self.is_assigned[u] = true;
            self.assigned.push(u);
            if j != EPS {
                self.used[j] = true;
            }
            self.run(depth + 1, g + c);
            if j != EPS {
                self.used[j] = false;
            }
            self.assigned.pop();
            self.is_assigned[u] = false;
            self.map[u] = EPS;
        }
    }
}

/// Edit distance from `pred` to `gt` plus the ratio normalised by the ground
/// truth size.
pub fn graph_edit_distance(pred: &SopGraph, gt: &SopGraph) -> GedResult {
    let p = Problem::new(pred, gt);

    // Seed: label twins mapped, everything else deleted; and the same with
    // leftovers paired up in order.
    let mut seed = vec![EPS; p.n1];
    let mut used = vec![false; p.n2];
    for (s, twin) in seed.iter_mut().zip(&p.twin) {
        if let Some(t) = *twin {
            *s = t;
            used[t] = true;
        }
    }
    let mut best = p.mapping_cost(&seed);
    let mut free = (0..p.n2).filter(|&j| !used[j]);
    let mut paired = seed.clone();
    for v in paired.iter_mut().filter(|v| **v == EPS) {
        match free.next() {
            Some(j) => *v = j,
            None => break,
        }
    }
    best = best.min(p.mapping_cost(&paired));

    let exact = p.n1.max(p.n2) <= EXACT_VERTEX_LIMIT;
    let mut search = Search {
        p: &p,
        map: vec![EPS; p.n1],
        is_assigned: vec![false; p.n1],
        used: vec![false; p.n2],
        assigned: Vec::with_capacity(p.n1),
        best: best + 1,
        nodes: 0,
        budget: (!exact).then_some(LARGE_GRAPH_BUDGET),
        exhausted: false,
    };
    // best + 1 lets the search re-find the seed cost, proving optimality.
    search.run(0, 0);
    let ged = search.best.min(best);
    let mode = if search.exhausted {
        GedMode::UpperBound
    } else {
        GedMode::Exact
    };

    let denom = gt.vertex_count() + gt.edge_count();
    let gedr = if denom == 0 {
        if ged > 0 {
            1.0
        } else {
            0.0
        }
    } else {
        ged as f64 / denom as f64
    };
    GedResult { ged, gedr, mode }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::task::QualifiedLabel;

    #[test]
    fn identical_graphs() {
        let g = fixtures::golf_graph();
        let r = graph_edit_distance(&g, &g);
        assert_eq!(r.ged, 0);
        assert_eq!(r.gedr, 0.0);
        assert_eq!(r.mode, GedMode::Exact);
    }

    #[test]
    fn one_missing_edge() {
        let mut spec = fixtures::golf_task().sop;
        spec.adjacency_list[&QualifiedLabel::user("RefuseToAnswer")].clear();
        let pred = SopGraph::from_spec(&spec).unwrap();
        let r = graph_edit_distance(&pred, &fixtures::golf_graph());
        assert_eq!(r.ged, 1);
        assert!((r.gedr - 1.0 / 29.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_costs_everything() {
        let r = graph_edit_distance(&SopGraph::empty(), &fixtures::golf_graph());
        assert_eq!(r.ged, 29);
        assert_eq!(r.gedr, 1.0);
        let r = graph_edit_distance(&SopGraph::empty(), &SopGraph::empty());
        assert_eq!((r.ged, r.gedr), (0, 0.0));
        let r = graph_edit_distance(&fixtures::golf_graph(), &SopGraph::empty());
        assert_eq!((r.ged, r.gedr), (29, 1.0));
    }
}
