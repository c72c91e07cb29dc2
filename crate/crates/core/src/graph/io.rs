//! Graph file format.
//!
//! A graph file is a JSON document with top-level fields `version`, `role`,
//! `nodes`, `edges`, `provenance`. Attribute and event tags are serialized as
//! their symbol strings ("F0", "Write", ...).

use super::{AttackGraph, Edge, GraphRole, Node};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    role: GraphRole,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    provenance: String,
}

pub fn graph_to_json(g: &AttackGraph) -> String {
    let file = GraphFile {
        version: GRAPH_FORMAT_VERSION,
        role: g.role,
        nodes: g.nodes().to_vec(),
        edges: g.edges().to_vec(),
        provenance: g.provenance.clone(),
    };
    serde_json::to_string_pretty(&file).expect("graph serializes")
}

pub fn graph_from_json(text: &str) -> Result<AttackGraph> {
    let file: GraphFile = serde_json::from_str(text)?;
    AttackGraph::new(file.role, file.provenance, file.nodes, file.edges)
}

pub fn write_graph(g: &AttackGraph, path: &Path) -> Result<()> {
    std::fs::write(path, graph_to_json(g))?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<AttackGraph> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityAttr, EventType};

    #[test]
    fn json_round_trip() {
        let g = AttackGraph::new(
            GraphRole::ATG,
            "sample",
            vec![
                Node::new("p", EntityAttr::P, 0).with_label("powershell"),
                Node::new("f", EntityAttr::F0, 1),
            ],
            vec![Edge::new("p", "f", EventType::Write, 3)],
        )
        .unwrap();
        let text = graph_to_json(&g);
        assert!(text.contains("\"version\": 1"));
        assert!(text.contains("\"F0\""));
        assert!(text.contains("\"Write\""));
        let g2 = graph_from_json(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn rejects_invalid_file() {
        let text = r#"{"version":1,"role":"ASG","nodes":[{"id":"a","attr":"F1","order_index":0}],
            "edges":[{"src":"a","dst":"a","event":"Read","seq":0}],"provenance":""}"#;
        assert!(graph_from_json(text).is_err());
    }
}
