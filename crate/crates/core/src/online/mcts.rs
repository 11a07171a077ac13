use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::reward::reward;
use super::state::simulate_user;
use super::{OnlineError, Planner, RewardBreakdown, WorkingMemory};
use crate::llm::LlmError;
use crate::task::QualifiedLabel;

/// Upper confidence bound for a child; unvisited children come first.
pub fn uct_score(q: f64, parent_visits: u32, visits: u32, exploration: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    q + exploration * ((parent_visits.max(1) as f64).ln() / visits as f64).sqrt()
}

#[derive(Debug, Clone)]
struct Node {
    action: Option<QualifiedLabel>,
    parent: Option<usize>,
    depth: usize,
    /// Dialogue after this node's agent turn and the simulated reply.
    memory: WorkingMemory,
    response: String,
    sim_user: Option<String>,
    sim_state: Option<QualifiedLabel>,
    breakdown: Option<RewardBreakdown>,
    q: f64,
    visits: u32,
    children: BTreeMap<QualifiedLabel, usize>,
    expanded: bool,
    terminal: bool,
    dead_end: bool,
}

impl Node {
    fn reward(&self) -> f64 {
        self.breakdown.as_ref().map_or(0.0, |b| b.reward)
    }
}

/// Read-only view of a search node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: usize,
    pub parent: Option<usize>,
    pub action: Option<QualifiedLabel>,
    pub depth: usize,
    pub q: f64,
    pub visits: u32,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<RewardBreakdown>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_state: Option<QualifiedLabel>,
    pub children: Vec<usize>,
    pub expanded: bool,
    pub terminal: bool,
    pub dead_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsTrace {
    pub iterations: usize,
    /// Node id of the chosen root child.
    pub chosen: usize,
    pub tree: Vec<NodeSummary>,
}

/// Search tree rooted at the current dialogue, grown one iteration at a time.
pub struct MctsSearch<'p, 'a> {
    planner: &'p Planner<'a>,
    nodes: Vec<Node>,
    iterations: usize,
}

impl<'p, 'a> MctsSearch<'p, 'a> {
    pub fn new(planner: &'p Planner<'a>, mem: &WorkingMemory) -> Self {
        let root = Node {
            action: None,
            parent: None,
            depth: 0,
            memory: mem.clone(),
            response: String::new(),
            sim_user: None,
            sim_state: None,
            breakdown: None,
            q: 0.0,
            visits: 0,
            children: BTreeMap::new(),
            expanded: false,
            terminal: false,
            dead_end: false,
        };
        MctsSearch {
            planner,
            nodes: vec![root],
            iterations: 0,
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Selection, expansion, greedy simulation to a terminal node, and
    /// backpropagation of mean returns.
    pub fn iterate(&mut self) -> Result<(), OnlineError> {
        let mut path = vec![0];
        let mut cur = 0;
        while self.nodes[cur].expanded && !self.nodes[cur].terminal && !self.nodes[cur].children.is_empty() {
            cur = self.select_child(cur);
            path.push(cur);
        }
        while !self.nodes[cur].terminal {
            if !self.nodes[cur].expanded {
                self.expand(cur)?;
            }
            match self.greedy_child(cur) {
                Some(c) => {
                    cur = c;
                    path.push(c);
                }
                None => break,
            }
        }
        if path.len() == 1 {
            return Err(OnlineError::NoCandidateActions);
        }
        self.backpropagate(&path);
        self.iterations += 1;
        Ok(())
    }

    fn select_child(&self, id: usize) -> usize {
        let parent_visits = self.nodes[id].visits;
        let w = self.planner.cfg.exploration;
        let mut best: Option<(f64, usize)> = None;
        // BTreeMap order makes the first maximum the lexicographically smallest
        for &c in self.nodes[id].children.values() {
            let s = uct_score(self.nodes[c].q, parent_visits, self.nodes[c].visits, w);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, c));
            }
        }
        best.expect("caller checked children").1
    }

    fn greedy_child(&self, id: usize) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &c in self.nodes[id].children.values() {
            let r = self.nodes[c].reward();
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, c));
            }
        }
        best.map(|(_, c)| c)
    }

    fn backpropagate(&mut self, path: &[usize]) {
        let rewards: Vec<f64> = path[1..].iter().map(|&i| self.nodes[i].reward()).collect();
        for (k, &id) in path.iter().enumerate() {
            // node k's incoming edge reward is rewards[k-1]; the root takes all
            let tail = &rewards[k.saturating_sub(1)..];
            let ret = tail.iter().sum::<f64>() / tail.len() as f64;
            let n = &mut self.nodes[id];
            n.visits += 1;
            n.q += (ret - n.q) / n.visits as f64;
        }
    }

    fn expand(&mut self, id: usize) -> Result<(), OnlineError> {
        self.nodes[id].expanded = true;
        let planner = self.planner;
        let mem = self.nodes[id].memory.clone();
        let mut candidates: Vec<QualifiedLabel> = Vec::new();
        let guidance = if planner.cfg.method.uses_sop() {
            planner.guidance(&mem).actions
        } else {
            Vec::new()
        };
        match planner.sample_actions(&mem, &guidance, planner.cfg.d) {
            Ok(a) => candidates = a,
            Err(OnlineError::Llm(LlmError::BackendRefusal(m))) => {
                planner.warn(format!("action sampling refused at node {id}: {m}"));
            }
            Err(e) => return Err(e),
        }
        if planner.cfg.method.uses_sop() {
            let observed = mem.observed_path();
            let near = planner.sop.nearest(observed.labels(), 2);
            for a in near.children.into_iter().filter(|l| l.is_agent()) {
                if !candidates.contains(&a) {
                    candidates.push(a);
                }
            }
        }
        if candidates.is_empty() {
            if id == 0 {
                return Err(OnlineError::NoCandidateActions);
            }
            self.nodes[id].terminal = true;
            self.nodes[id].dead_end = true;
            return Ok(());
        }
        let depth = self.nodes[id].depth + 1;
        for action in candidates {
            let child = match self.make_child(&mem, &action, depth) {
                Ok(c) => c,
                Err(e @ (OnlineError::Llm(LlmError::BackendRefusal(_))
                | OnlineError::ParseFailure(_)
                | OnlineError::JudgeUnusable)) => {
                    planner.warn(format!("candidate {action} at depth {depth} abandoned: {e}"));
                    Node {
                        action: Some(action.clone()),
                        parent: None,
                        depth,
                        memory: mem.clone(),
                        response: String::new(),
                        sim_user: None,
                        sim_state: None,
                        breakdown: None,
                        q: 0.0,
                        visits: 0,
                        children: BTreeMap::new(),
                        expanded: true,
                        terminal: true,
                        dead_end: true,
                    }
                }
                Err(e) => return Err(e),
            };
            let cid = self.nodes.len();
            self.nodes.push(Node { parent: Some(id), ..child });
            self.nodes[id].children.insert(action, cid);
        }
        Ok(())
    }

    fn make_child(&self, mem: &WorkingMemory, action: &QualifiedLabel, depth: usize) -> Result<Node, OnlineError> {
        let planner = self.planner;
        let response = planner.generate_response(mem, action)?;
        let mut next = mem.clone();
        next.complete_turn(action.clone(), response.clone());
        let closes = planner.task.is_success(action) || planner.sop.graph().is_terminal(action);
        let (sim_user, sim_state) = if closes || depth >= planner.cfg.depth_limit {
            (None, None)
        } else {
            let (reply, state) = simulate_user(planner, &next)?;
            next = next.with_user(&reply);
            next.set_pending_state(state.state.clone());
            (Some(reply), Some(state.state))
        };
        let breakdown = reward(planner, mem, action, depth, sim_state.as_ref())?;
        let ending = sim_state.as_ref() == Some(&QualifiedLabel::user("Ending"));
        Ok(Node {
            action: Some(action.clone()),
            parent: None,
            depth,
            memory: next,
            response,
            sim_user,
            sim_state,
            breakdown: Some(breakdown),
            q: 0.0,
            visits: 0,
            children: BTreeMap::new(),
            expanded: false,
            terminal: closes || ending || depth >= planner.cfg.depth_limit,
            dead_end: false,
        })
    }

    /// Root child with the highest value, then most visits, then smallest
    /// label. Abandoned candidates are never chosen.
    pub fn best(&self) -> Result<usize, OnlineError> {
        let mut best: Option<usize> = None;
        for &c in self.nodes[0].children.values() {
            let n = &self.nodes[c];
            if n.dead_end {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let m = &self.nodes[b];
                    n.q > m.q || (n.q == m.q && n.visits > m.visits)
                }
            };
            if better {
                best = Some(c);
            }
        }
        best.ok_or(OnlineError::NoCandidateActions)
    }

    pub fn tree(&self) -> Vec<NodeSummary> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeSummary {
                id,
                parent: n.parent,
                action: n.action.clone(),
                depth: n.depth,
                q: n.q,
                visits: n.visits,
                reward: n.reward(),
                breakdown: n.breakdown.clone(),
                response: n.response.clone(),
                sim_user: n.sim_user.clone(),
                sim_state: n.sim_state.clone(),
                children: n.children.values().copied().collect(),
                expanded: n.expanded,
                terminal: n.terminal,
                dead_end: n.dead_end,
            })
            .collect()
    }
}

/// Runs the configured number of iterations and returns the chosen action,
/// its response and the search trace.
pub fn plan_mcts(
    planner: &Planner<'_>,
    mem: &WorkingMemory,
) -> Result<(QualifiedLabel, String, MctsTrace), OnlineError> {
    let mut search = MctsSearch::new(planner, mem);
    for _ in 0..planner.cfg.n_iterations {
        search.iterate()?;
    }
    let chosen = search.best()?;
    let node = &search.nodes[chosen];
    let action = node.action.clone().expect("root children carry actions");
    let response = node.response.clone();
    Ok((
        action,
        response,
        MctsTrace {
            iterations: search.iterations,
            chosen,
            tree: search.tree(),
        },
    ))
}
