//! Temporal sequence encoding of attack graphs.
//!
//! A graph with node order `pi` maps to a pair of sequences: the node-type
//! codes and, per node, a windowed adjacency vector holding the event code
//! (or 0) against each of the previous `min(i, M)` nodes, nearest
//! predecessor first.

use super::{
    validate_edge, AttackGraph, Edge, EntityAttr, EventType, GraphRole, Node, TERMINATOR_CODE,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceEncoding {
    /// Node-type code of the i-th node in `pi`.
    pub node_codes: Vec<u8>,
    /// `adj_vectors[i][j]` encodes the event between node `i` and node
    /// `i - 1 - j`, 0 if absent. Vector `i` has length `min(i, window)`.
    pub adj_vectors: Vec<Vec<u8>>,
    pub window: usize,
    /// Set when some edge spans more than `window` positions in `pi` and was
    /// therefore dropped from the encoding.
    pub lossy: bool,
}

impl SequenceEncoding {
    pub fn len(&self) -> usize {
        self.node_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_codes.is_empty()
    }
}

/// Encodes a graph under its chronological node order. Parallel edges between
/// the same node pair collapse to the latest event by `seq`.
pub fn to_sequence(g: &AttackGraph, window: usize) -> SequenceEncoding {
    assert!(window >= 1, "window must be positive");
    let n = g.node_count();
    let order_of: HashMap<&str, usize> = g
        .nodes()
        .iter()
        .map(|x| (x.id.as_str(), x.order_index))
        .collect();
    let node_codes: Vec<u8> = g.nodes_in_order().iter().map(|x| x.attr.code()).collect();

    // Latest event per unordered position pair; edges are already seq-sorted.
    let mut latest: HashMap<(usize, usize), EventType> = HashMap::new();
    let mut lossy = false;
    for e in g.edges() {
        let a = order_of[e.src.as_str()];
        let b = order_of[e.dst.as_str()];
        let (lo, hi) = (a.min(b), a.max(b));
        if hi - lo > window {
            lossy = true;
            continue;
        }
        latest.insert((lo, hi), e.event);
    }

    let mut adj_vectors = Vec::with_capacity(n);
    for i in 0..n {
        let len = i.min(window);
        let mut v = vec![0u8; len];
        for (j, slot) in v.iter_mut().enumerate() {
            if let Some(ev) = latest.get(&(i - 1 - j, i)) {
                *slot = ev.code();
            }
        }
        adj_vectors.push(v);
    }
    SequenceEncoding {
        node_codes,
        adj_vectors,
        window,
        lossy,
    }
}

/// Recovers the subject/object orientation of an event between two attributed
/// endpoints, `earlier` being the node that precedes in `pi`. Returns
/// (subject_is_earlier, ...) or an error when no orientation is admissible.
fn orient(earlier: EntityAttr, later: EntityAttr, ev: EventType) -> Result<bool> {
    let fwd = validate_edge(earlier, ev, later);
    let rev = validate_edge(later, ev, earlier);
    match (fwd, rev) {
        // Both orientations valid only for ForkClone (P, P): the earlier node
        // is the parent.
        (true, _) => Ok(true),
        (false, true) => Ok(false),
        (false, false) => Err(Error::MalformedSequence(format!(
            "no event-table row admits ({earlier}, {ev}, {later}) in either direction"
        ))),
    }
}

/// Reconstructs a graph from its sequence encoding. Edge direction is
/// recovered from the event table; `seq` is assigned in encoding order.
pub fn from_sequence(s: &SequenceEncoding) -> Result<AttackGraph> {
    if s.adj_vectors.len() != s.node_codes.len() {
        return Err(Error::MalformedSequence(
            "node and adjacency sequences differ in length".into(),
        ));
    }
    let mut nodes = Vec::with_capacity(s.node_codes.len());
    for (i, &code) in s.node_codes.iter().enumerate() {
        if code == TERMINATOR_CODE {
            return Err(Error::MalformedSequence(
                "terminator code is reserved and never stored on nodes".into(),
            ));
        }
        nodes.push(Node::new(format!("n{i}"), EntityAttr::from_code(code)?, i));
    }
    let mut edges = Vec::new();
    let mut seq = 0u64;
    for (i, v) in s.adj_vectors.iter().enumerate() {
        if v.len() != i.min(s.window) {
            return Err(Error::MalformedSequence(format!(
                "adjacency vector {i} has length {}, expected {}",
                v.len(),
                i.min(s.window)
            )));
        }
        for (j, &code) in v.iter().enumerate() {
            if code == 0 {
                continue;
            }
            let ev = EventType::from_code(code)?;
            let other = i - 1 - j;
            let earlier = nodes[other].attr;
            let later = nodes[i].attr;
            let (src, dst) = if orient(earlier, later, ev)? {
                (format!("n{other}"), format!("n{i}"))
            } else {
                (format!("n{i}"), format!("n{other}"))
            };
            edges.push(Edge::new(src, dst, ev, seq));
            seq += 1;
        }
    }
    // Node order was given explicitly by the encoding; bypass the
    // chronology-derived order check by re-deriving it.
    AttackGraph::new(GraphRole::ASG, "from_sequence", nodes, edges)
}
