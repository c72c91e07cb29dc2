//! Deterministic DOT export.

use super::{AttackGraph, EntityAttr};
use std::fmt::Write;

fn color(attr: EntityAttr) -> &'static str {
    match attr {
        EntityAttr::P => "red",
        EntityAttr::S => "green",
        EntityAttr::FR => "gray",
        _ => "blue",
    }
}

/// Renders a graph as DOT text. Nodes are emitted in `pi` order, edges in
/// `seq` order, so re-exporting an unchanged graph is byte-identical.
pub fn export_dot(g: &AttackGraph) -> String {
    let mut out = String::from("digraph attack_graph {\n  rankdir=LR;\n");
    for node in g.nodes_in_order() {
        let text = match &node.label {
            Some(l) => format!("{}: {}", node.attr, l),
            None => node.attr.to_string(),
        };
        let style = if node.forecast { ", style=dashed" } else { "" };
        writeln!(
            out,
            "  \"{}\" [label=\"{}\", color={}{}];",
            node.id,
            text.replace('"', "\\\""),
            color(node.attr),
            style
        )
        .unwrap();
    }
    for e in g.edges() {
        let style = if e.forecast { ", style=dashed" } else { "" };
        writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{} ({})\"{}];",
            e.src, e.dst, e.event, e.seq, style
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EventType, GraphRole, Node};

    #[test]
    fn empty_graph_has_empty_body() {
        let g = AttackGraph::new(GraphRole::ASG, "t", vec![], vec![]).unwrap();
        let dot = export_dot(&g);
        assert_eq!(dot, "digraph attack_graph {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn write_edge_and_determinism() {
        let g = AttackGraph::new(
            GraphRole::ASG,
            "t",
            vec![
                Node::new("p", EntityAttr::P, 0),
                Node::new("f", EntityAttr::F3, 1),
            ],
            vec![Edge::new("p", "f", EventType::Write, 0)],
        )
        .unwrap();
        let dot = export_dot(&g);
        assert!(dot.contains("Write"));
        assert!(dot.contains("color=red"));
        assert_eq!(dot, export_dot(&g));
    }
}
