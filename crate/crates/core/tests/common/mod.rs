//! Slow reference implementations and random inputs shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sopplan_core::datagen::GeneratedDialogue;
use sopplan_core::{QualifiedLabel, SopGraph, TaskDefinition};

pub fn label_pool() -> Vec<QualifiedLabel> {
    let agent = ["Start", "Greet", "Ask", "Offer", "Confirm", "End"];
    let user = ["Yes", "No", "Maybe", "Busy", "Ask"];
    agent
        .iter()
        .map(|n| QualifiedLabel::agent(n))
        .chain(user.iter().map(|n| QualifiedLabel::user(n)))
        .collect()
}

/// Random graph: `Agent.Start` first, then distinct pool labels; no
/// self-loops or duplicate edges.
pub fn random_graph(rng: &mut ChaCha8Rng, max_v: usize, max_e: usize) -> SopGraph {
    let pool = label_pool();
    let n = rng.random_range(1..=max_v.min(pool.len()));
    let mut verts = vec![pool[0].clone()];
    let mut rest: Vec<QualifiedLabel> = pool[1..].to_vec();
    while verts.len() < n {
        let i = rng.random_range(0..rest.len());
        verts.push(rest.swap_remove(i));
    }
    let target = rng.random_range(0..=max_e);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut attempts = 0;
    while edges.len() < target && attempts < 200 {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !edges.contains(&(a, b)) {
            edges.push((a, b));
        }
    }
    SopGraph::from_edges(
        verts.clone(),
        edges.into_iter().map(|(a, b)| (verts[a].clone(), verts[b].clone())),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worklist enumeration of start-to-terminal walks, each directed edge used
/// at most once and each vertex visited at most twice.
pub fn oracle_paths(g: &SopGraph) -> Option<BTreeSet<Vec<QualifiedLabel>>> {
    let start = g.start().ok()?.clone();
    if g.terminals().is_empty() {
        return None;
    }
    let mut out = BTreeSet::new();
    // (walk, used edges)
    type Edge = (QualifiedLabel, QualifiedLabel);
    let mut work: Vec<(Vec<QualifiedLabel>, Vec<Edge>)> =
        vec![(vec![start], Vec::new())];
    while let Some((walk, used)) = work.pop() {
        let last = walk.last().unwrap().clone();
        let succ = g.successors(&last).unwrap();
        if succ.is_empty() {
            out.insert(walk);
            continue;
        }
        for s in succ {
            let e = (last.clone(), s.clone());
            if used.contains(&e) || walk.iter().filter(|v| *v == s).count() >= 2 {
                continue;
            }
            let mut w = walk.clone();
            w.push(s.clone());
            let mut u = used.clone();
            u.push(e);
            work.push((w, u));
        }
    }
    Some(out)
}

/// Edit cost of one complete vertex mapping, straight from the definition.
fn mapping_cost(pred: &SopGraph, gt: &SopGraph, map: &[Option<usize>]) -> usize {
    let pv = pred.vertices();
    let gv = gt.vertices();
    let mut cost = 0;
    for (i, m) in map.iter().enumerate() {
        match m {
            None => cost += 1,
            Some(j) if pv[i] != gv[*j] => cost += 1,
            _ => {}
        }
    }
    cost += gv.len() - map.iter().filter(|m| m.is_some()).count();
    let image = |i: usize| map[i];
    for (a, b) in pred.edges() {
        let ia = pv.iter().position(|v| v == a).unwrap();
        let ib = pv.iter().position(|v| v == b).unwrap();
        let kept = match (image(ia), image(ib)) {
            (Some(x), Some(y)) => gt.has_edge(&gv[x], &gv[y]),
            _ => false,
        };
        if !kept {
            cost += 1;
        }
    }
    for (a, b) in gt.edges() {
        let ja = gv.iter().position(|v| v == a).unwrap();
        let jb = gv.iter().position(|v| v == b).unwrap();
        let pa = map.iter().position(|m| *m == Some(ja));
        let pb = map.iter().position(|m| *m == Some(jb));
        let covered = match (pa, pb) {
            (Some(x), Some(y)) => pred.has_edge(&pv[x], &pv[y]),
            _ => false,
        };
        if !covered {
            cost += 1;
        }
    }
    cost
}

/// Minimum over every injective partial mapping of pred vertices into gt.
pub fn oracle_ged(pred: &SopGraph, gt: &SopGraph) -> usize {
    fn rec(
        pred: &SopGraph,
        gt: &SopGraph,
        i: usize,
        map: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut usize,
    ) {
        if i == pred.vertex_count() {
            *best = (*best).min(mapping_cost(pred, gt, map));
            return;
        }
        map.push(None);
        rec(pred, gt, i + 1, map, used, best);
        map.pop();
        for j in 0..gt.vertex_count() {
            if !used[j] {
                used[j] = true;
                map.push(Some(j));
                rec(pred, gt, i + 1, map, used, best);
                map.pop();
                used[j] = false;
            }
        }
    }
    let mut best = usize::MAX;
    rec(pred, gt, 0, &mut Vec::new(), &mut vec![false; gt.vertex_count()], &mut best);
    best
}

/// Recursive edit distance with memo.
pub fn oracle_edit_distance(a: &[QualifiedLabel], b: &[QualifiedLabel]) -> usize {
    fn go(a: &[QualifiedLabel], b: &[QualifiedLabel], memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if let Some(v) = memo[a.len()][b.len()] {
            return v;
        }
        let v = if a.is_empty() {
            b.len()
        } else if b.is_empty() {
            a.len()
        } else {
            let (ah, at) = a.split_last().unwrap();
            let (bh, bt) = b.split_last().unwrap();
            let sub = go(at, bt, memo) + usize::from(ah != bh);
            sub.min(go(at, b, memo) + 1).min(go(a, bt, memo) + 1)
        };
        memo[a.len()][b.len()] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, &mut memo)
}

/// Nearest window by exhaustive scan plus its successors within `depth` hops.
pub fn oracle_subpath(
    g: &SopGraph,
    observed: &[QualifiedLabel],
    depth: usize,
) -> Option<(Vec<QualifiedLabel>, usize, Vec<QualifiedLabel>)> {
    let paths = oracle_paths(g)?;
    let mut cands: Vec<(usize, std::cmp::Reverse<usize>, Vec<QualifiedLabel>)> = Vec::new();
    for p in &paths {
        for i in 0..p.len() {
            for j in i + 1..=p.len() {
                let w = p[i..j].to_vec();
                if w.len() <= observed.len() + 2 {
                    cands.push((oracle_edit_distance(&w, observed), std::cmp::Reverse(w.len()), w));
                }
            }
        }
    }
    let Some((d, _, w)) = cands.into_iter().min() else {
        return Some((Vec::new(), observed.len(), Vec::new()));
    };
    let mut children: Vec<QualifiedLabel> = Vec::new();
    let mut layer = vec![w.last().unwrap().clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for v in &layer {
            for s in g.successors(v).unwrap() {
                if !children.contains(s) {
                    children.push(s.clone());
                    next.push(s.clone());
                }
            }
        }
        layer = next;
    }
    Some((w, d, children))
}

/// A random label walk over the pool, for observed-path inputs.
pub fn random_observed(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<QualifiedLabel> {
    let pool = label_pool();
    let n = rng.random_range(1..=max_len);
    let mut out: Vec<QualifiedLabel> = Vec::new();
    while out.len() < n {
        let l = pool[rng.random_range(0..pool.len())].clone();
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Every embedding of `main` into `flat`, as matched positions.
fn embeddings(flat: &[QualifiedLabel], main: &[QualifiedLabel], from: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if acc.len() == main.len() {
        out.push(acc.clone());
        return;
    }
    for i in from..flat.len() {
        if flat[i] == main[acc.len()] {
            acc.push(i);
            embeddings(flat, main, i + 1, acc, out);
            acc.pop();
        }
    }
}

/// Checks a generated item against the scene rules by brute force and
/// returns its inserted round count: the most rounds some embedding of the
/// main path leaves untouched.
pub fn inserted_rounds_oracle(item: &GeneratedDialogue, task: &TaskDefinition) -> Result<usize, String> {
    let flat: Vec<QualifiedLabel> = item.utterances.iter().map(|u| u.label.clone()).collect();
    if !flat.len().is_multiple_of(2) {
        return Err(format!("odd utterance count {}", flat.len()));
    }
    for (i, l) in flat.iter().enumerate() {
        if l.is_agent() != (i % 2 == 0) {
            return Err(format!("alternation broken at {i}"));
        }
        if !task.agent_action.contains(l) && !task.user_state.contains(l) {
            return Err(format!("{l} not in vocabulary"));
        }
    }
    if item.utterances.iter().any(|u| u.text.is_empty()) {
        return Err("empty utterance".into());
    }
    let main: Vec<QualifiedLabel> = item
        .scene
        .main_path
        .labels()
        .iter()
        .filter(|l| l.name() != "Start")
        .cloned()
        .collect();
    let mut all = Vec::new();
    embeddings(&flat, &main, 0, &mut Vec::new(), &mut all);
    let rounds = flat.len() / 2;
    all.iter()
        .map(|pos| {
            let mut touched = vec![false; rounds];
            for p in pos {
                touched[p / 2] = true;
            }
            touched.iter().filter(|t| !**t).count()
        })
        .max()
        .ok_or_else(|| "main path is not a subsequence".to_string())
}
