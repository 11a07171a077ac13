//! Graph and text generators shared by the benchmarks.

use sopplan_core::{QualifiedLabel, SopGraph};

/// `Start`, then `layers` layers of `width` vertices with every vertex linked
/// to every vertex of the next layer. Has `width^layers` start-to-end paths.
pub fn layered_graph(layers: usize, width: usize) -> SopGraph {
    let label = |l: usize, i: usize| QualifiedLabel::agent(&format!("L{l}V{i}"));
    let start = QualifiedLabel::agent("Start");
    let mut vertices = vec![start.clone()];
    let mut edges = Vec::new();
    for l in 0..layers {
        for i in 0..width {
            vertices.push(label(l, i));
            if l == 0 {
                edges.push((start.clone(), label(0, i)));
            } else {
                edges.extend((0..width).map(|j| (label(l - 1, j), label(l, i))));
            }
        }
    }
    SopGraph::from_edges(vertices, edges).expect("layered graph is valid")
}

/// `g` without its `k` last edges.
pub fn drop_edges(g: &SopGraph, k: usize) -> SopGraph {
    let edges: Vec<_> = g.edges().map(|(a, b)| (a.clone(), b.clone())).collect();
    let keep = edges.len().saturating_sub(k);
    SopGraph::from_edges(g.vertices().to_vec(), edges.into_iter().take(keep)).expect("subgraph is valid")
}

/// Deterministic pseudo-sentences for BLEU timing; `skew` perturbs every
/// `skew`-th word so candidates and references differ.
pub fn sentences(n: usize, words: usize, skew: usize) -> Vec<String> {
    const VOCAB: [&str; 12] = [
        "the", "agent", "asks", "whether", "you", "would", "like", "to", "join", "our", "golf", "event",
    ];
    (0..n)
        .map(|s| {
            (0..words)
                .map(|w| {
                    let i = (s * 7 + w * 3) % VOCAB.len();
                    if skew > 0 && (s + w) % skew == 0 { "maybe" } else { VOCAB[i] }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sopplan_core::sop::enumerate_paths;

    #[test]
    fn layered_path_count() {
        let g = layered_graph(3, 3);
        assert_eq!(g.vertex_count(), 10);
        assert_eq!(enumerate_paths(&g).unwrap().len(), 27);
        assert_eq!(drop_edges(&g, 2).edge_count(), g.edge_count() - 2);
    }
}
