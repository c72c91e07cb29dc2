//! Seeded generation of random valid attack graphs.
//!
//! Used by property tests and the acceptance harness; grows a graph
//! chronologically so the node order always matches edge chronology.

use crate::graph::{validate_edge, AttackGraph, Edge, EntityAttr, EventType, GraphRole, Node};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// All (event, subject_is_existing, new_attr) combinations that can attach a
/// node of attribute `new_attr` to an existing node of attribute `existing`.
fn attachments(existing: EntityAttr) -> Vec<(EventType, bool, EntityAttr)> {
    let mut out = Vec::new();
    for ev in EventType::ALL {
        for attr in EntityAttr::ALL {
            if validate_edge(existing, ev, attr) {
                out.push((ev, true, attr));
            }
            if validate_edge(attr, ev, existing) {
                out.push((ev, false, attr));
            }
        }
    }
    out
}

/// Generates a random valid graph with `n_nodes >= 2` nodes. Every node is
/// attached to the existing graph by at least one edge; extra edges are added
/// between existing nodes with probability `extra_edge_p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n_nodes: usize, extra_edge_p: f64) -> AttackGraph {
    assert!(n_nodes >= 2);
    let mut nodes = vec![Node::new("n0", EntityAttr::P, 0)];
    let mut edges: Vec<Edge> = Vec::new();
    let mut seq = 0u64;
    for i in 1..n_nodes {
        let anchor = nodes.choose(rng).unwrap().clone();
        let options = attachments(anchor.attr);
        let (ev, anchor_is_subject, attr) = *options.choose(rng).unwrap();
        let id = format!("n{i}");
        nodes.push(Node::new(id.clone(), attr, i));
        let (src, dst) = if anchor_is_subject {
            (anchor.id.clone(), id)
        } else {
            (id, anchor.id.clone())
        };
        edges.push(Edge::new(src, dst, ev, seq));
        seq += 1;
        if rng.gen_bool(extra_edge_p) {
            if let Some(e) = random_edge_between_existing(rng, &nodes, &edges, seq) {
                edges.push(e);
                seq += 1;
            }
        }
    }
    AttackGraph::new(GraphRole::ASG, "testgen", nodes, edges).expect("generated graph is valid")
}

/// Picks a random valid, non-duplicate edge between existing nodes, if any.
pub fn random_edge_between_existing(
    rng: &mut ChaCha8Rng,
    nodes: &[Node],
    edges: &[Edge],
    seq: u64,
) -> Option<Edge> {
    let mut candidates = Vec::new();
    for a in nodes {
        for b in nodes {
            if a.id == b.id {
                continue;
            }
            for ev in EventType::ALL {
                if validate_edge(a.attr, ev, b.attr)
                    && !edges
                        .iter()
                        .any(|e| e.src == a.id && e.dst == b.id && e.event == ev)
                {
                    candidates.push(Edge::new(a.id.clone(), b.id.clone(), ev, seq));
                }
            }
        }
    }
    candidates.choose(rng).cloned()
}
