use super::*;
use crate::graph::{AttackGraph, Edge, EntityAttr, EventType, GraphRole, Node};
use crate::testgen::random_graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use EntityAttr::{F0, F2, F3, P, S};
use EventType::{Execute, ForkClone, Read, Receive, Send, Write};

fn g(nodes: &[(&str, EntityAttr)], edges: &[(&str, &str, EventType)]) -> AttackGraph {
    let nodes = nodes
        .iter()
        .map(|&(id, attr)| Node::new(id, attr, 0))
        .collect();
    let edges = edges
        .iter()
        .enumerate()
        .map(|(i, &(src, dst, ev))| Edge::new(src, dst, ev, i as u64))
        .collect();
    AttackGraph::reindexed(GraphRole::ASG, "test", nodes, edges).unwrap()
}

fn e(src: &str, dst: &str, ev: EventType) -> Edge {
    Edge::new(src, dst, ev, 0)
}

#[test]
fn mhes_multi_hop_fork_then_send() {
    let gp = g(
        &[("p1", P), ("p2", P), ("s", S)],
        &[("p1", "p2", ForkClone), ("p2", "s", Send)],
    );
    let u = DeliveryRules::default();
    let path = vec![e("p1", "p2", ForkClone), e("p2", "s", Send)];
    assert!(mhes_equivalent((P, Send, S), &path, &gp, &u).unwrap());
}

#[test]
fn mhes_single_hop() {
    let gp = g(&[("p", P), ("s", S)], &[("p", "s", Send)]);
    let u = DeliveryRules::default();
    let path = vec![e("p", "s", Send)];
    assert!(mhes_equivalent((P, Send, S), &path, &gp, &u).unwrap());
}

#[test]
fn mhes_rejects_wrong_last_event() {
    let gp = g(
        &[("p1", P), ("s1", S), ("p2", P), ("f", F3)],
        &[
            ("p1", "s1", Send),
            ("s1", "p2", Receive),
            ("p2", "f", Write),
        ],
    );
    let u = DeliveryRules::default();
    let path = vec![
        e("p1", "s1", Send),
        e("s1", "p2", Receive),
        e("p2", "f", Write),
    ];
    assert!(!mhes_equivalent((P, Send, S), &path, &gp, &u).unwrap());
}

#[test]
fn mhes_rejects_disconnected_path() {
    let gp = g(
        &[("p1", P), ("s1", S), ("p2", P), ("s2", S)],
        &[("p1", "s1", Send), ("p2", "s2", Send)],
    );
    let u = DeliveryRules::default();
    let path = vec![e("p1", "s1", Send), e("p2", "s2", Send)];
    assert!(mhes_equivalent((P, Send, S), &path, &gp, &u).is_err());
}

#[test]
fn mhes_execute_is_taint_reversed() {
    // Stored direction is process -> file; taint flows file -> process.
    let gp = g(&[("p", P), ("f", F2)], &[("p", "f", Execute)]);
    let u = DeliveryRules::default();
    let path = vec![e("p", "f", Execute)];
    assert!(mhes_equivalent((F2, Execute, P), &path, &gp, &u).unwrap());
    assert!(!mhes_equivalent((P, Execute, F2), &path, &gp, &u).unwrap());
}

#[test]
fn candidate_selection_by_attr_and_degree() {
    // Query node "a": attr P, degree 2.
    let gq = g(
        &[("a", P), ("f", F3), ("s", S)],
        &[("a", "f", Write), ("a", "s", Send)],
    );
    let gp = g(
        &[
            ("k2", P),
            ("f1", F3),
            ("s1", S),
            ("k5", P),
            ("f2", F3),
            ("x", F2),
        ],
        &[
            ("k2", "f1", Write),
            ("k2", "s1", Send),
            ("k5", "f1", Write),
            ("k5", "s1", Send),
            ("k5", "f2", Write),
            ("k5", "x", Write),
            ("k5", "x", Execute),
        ],
    );
    let a = gq.node_by_id("a").unwrap();
    // Equal degree (k2) and greater degree (k5) are included; attribute
    // mismatches (files, sockets) are excluded.
    assert_eq!(candidates(a, &gq, &gp), vec!["k2".to_string(), "k5".into()]);
}

#[test]
fn edge_score_direct_edge_is_one() {
    let gq = g(&[("a", P), ("c", S)], &[("a", "c", Send)]);
    let gp = g(&[("k", P), ("l", S)], &[("k", "l", Send)]);
    let qe = &gq.edges()[0];
    let s = edge_score(qe, "k", &gq, &gp, &AlignmentConfig::default()).unwrap();
    assert_eq!(s, 1.0);
}

#[test]
fn edge_score_three_hop_path_is_one_third() {
    let gq = g(&[("a", P), ("c", S)], &[("a", "c", Send)]);
    let gp = g(
        &[("k", P), ("p2", P), ("p3", P), ("l", S)],
        &[
            ("k", "p2", ForkClone),
            ("p2", "p3", ForkClone),
            ("p3", "l", Send),
        ],
    );
    let qe = &gq.edges()[0];
    let s = edge_score(qe, "k", &gq, &gp, &AlignmentConfig::default()).unwrap();
    assert!((s - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn edge_score_no_path_is_zero() {
    let gq = g(&[("a", P), ("c", S)], &[("a", "c", Send)]);
    let gp = g(&[("k", P), ("s", S)], &[("s", "k", Receive)]);
    let qe = &gq.edges()[0];
    let s = edge_score(qe, "k", &gq, &gp, &AlignmentConfig::default()).unwrap();
    assert_eq!(s, 0.0);
}

#[test]
fn edge_score_respects_max_hops() {
    let gq = g(&[("a", P), ("c", S)], &[("a", "c", Send)]);
    let gp = g(
        &[("k", P), ("p2", P), ("p3", P), ("p4", P), ("p5", P), ("l", S)],
        &[
            ("k", "p2", ForkClone),
            ("p2", "p3", ForkClone),
            ("p3", "p4", ForkClone),
            ("p4", "p5", ForkClone),
            ("p5", "l", Send),
        ],
    );
    let qe = &gq.edges()[0];
    // Five hops exceed the default cap of four.
    let s = edge_score(qe, "k", &gq, &gp, &AlignmentConfig::default()).unwrap();
    assert_eq!(s, 0.0);
    let relaxed = AlignmentConfig {
        max_hops: 5,
        ..AlignmentConfig::default()
    };
    let s = edge_score(qe, "k", &gq, &gp, &relaxed).unwrap();
    assert!((s - 0.2).abs() < 1e-12);
}

#[test]
fn path_score_averages_edge_scores() {
    // Query taint path a -> b -> c; host realizes the first edge in two hops
    // (0.5) and the second directly (1.0).
    let gq = g(
        &[("a", P), ("b", F2), ("c", P)],
        &[("a", "b", Write), ("c", "b", Execute)],
    );
    let gp = g(
        &[("ha", P), ("hp2", P), ("hb", F2), ("hc", P)],
        &[
            ("ha", "hp2", ForkClone),
            ("hp2", "hb", Write),
            ("hc", "hb", Execute),
        ],
    );
    let cfg = AlignmentConfig::default();
    let s = path_score("a", "c", "ha", &gq, &gp, &cfg).unwrap();
    assert!((s - 0.75).abs() < 1e-12);
}

#[test]
fn path_score_with_unrealizable_edge() {
    let gq = g(
        &[("a", P), ("b", P), ("s", S)],
        &[("a", "b", ForkClone), ("b", "s", Send)],
    );
    // Fork is realized directly; no Send exists anywhere in the host.
    let gp = g(
        &[("ha", P), ("hb", P), ("hs", S)],
        &[("ha", "hb", ForkClone), ("hs", "hb", Receive)],
    );
    let cfg = AlignmentConfig::default();
    let s = path_score("a", "s", "ha", &gq, &gp, &cfg).unwrap();
    assert!((s - 0.5).abs() < 1e-12);
}

#[test]
fn path_score_without_path_is_zero() {
    let gq = g(
        &[("a", P), ("b", F3), ("c", P), ("d", F3)],
        &[("a", "b", Write), ("c", "d", Write)],
    );
    let gp = g(&[("k", P), ("f", F3)], &[("k", "f", Write)]);
    let cfg = AlignmentConfig::default();
    assert_eq!(path_score("a", "d", "k", &gq, &gp, &cfg).unwrap(), 0.0);
}

#[test]
fn node_score_averages_over_paths() {
    // Two outgoing paths from "a": the Write branch is realizable, the Send
    // branch is not.
    let gq = g(
        &[("a", P), ("b", F2), ("s", S)],
        &[("a", "b", Write), ("a", "s", Send)],
    );
    let gp = g(&[("ha", P), ("hb", F2)], &[("ha", "hb", Write)]);
    let cfg = AlignmentConfig::default();
    let s = node_score("a", "ha", &gq, &gp, &cfg).unwrap();
    assert!((s - 0.5).abs() < 1e-12);
}

#[test]
fn node_score_fully_realizable_path_is_one() {
    let gq = g(&[("a", P), ("b", F2)], &[("a", "b", Write)]);
    let gp = g(&[("ha", P), ("hb", F2)], &[("ha", "hb", Write)]);
    let cfg = AlignmentConfig::default();
    assert_eq!(node_score("a", "ha", &gq, &gp, &cfg).unwrap(), 1.0);
}

#[test]
fn node_score_unrealizable_is_zero() {
    let gq = g(&[("a", P), ("s", S)], &[("a", "s", Send)]);
    let gp = g(&[("ha", P), ("hf", F3)], &[("ha", "hf", Write)]);
    let cfg = AlignmentConfig::default();
    assert_eq!(node_score("a", "ha", &gq, &gp, &cfg).unwrap(), 0.0);
}

#[test]
fn sink_node_scores_by_incoming_realizability() {
    let gq = g(&[("a", P), ("b", F2)], &[("a", "b", Write)]);
    let gp = g(&[("ha", P), ("hb", F2)], &[("ha", "hb", Write)]);
    let cfg = AlignmentConfig::default();
    assert_eq!(node_score("b", "hb", &gq, &gp, &cfg).unwrap(), 1.0);
}

#[test]
fn self_alignment_scores_one() {
    let cfg = AlignmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2usize, 4, 7, 12, 20] {
        let gr = random_graph(&mut rng, n, 0.3);
        let r = align(&gr, &gr, &cfg).unwrap();
        assert_eq!(r.score, 1.0, "self-alignment failed on {n}-node graph");
        assert_eq!(r.matched_flows, r.total_flows);
    }
}

#[test]
fn verbatim_subgraph_scores_one() {
    let gq = g(
        &[("a", P), ("b", P), ("f", F0), ("s", S)],
        &[
            ("a", "b", ForkClone),
            ("f", "b", Read),
            ("b", "s", Send),
        ],
    );
    // Host: the query embedded verbatim plus surrounding noise.
    let gp = g(
        &[
            ("a", P),
            ("b", P),
            ("f", F0),
            ("s", S),
            ("x1", P),
            ("x2", F3),
        ],
        &[
            ("a", "b", ForkClone),
            ("f", "b", Read),
            ("b", "s", Send),
            ("a", "x1", ForkClone),
            ("x1", "x2", Write),
            ("b", "x2", Write),
        ],
    );
    let r = align(&gq, &gp, &AlignmentConfig::default()).unwrap();
    assert_eq!(r.score, 1.0);
}

#[test]
fn disjoint_attrs_score_zero() {
    let gq = g(&[("a", P), ("b", F0)], &[("a", "b", Write)]);
    let gp = g(&[("k", P), ("s", S)], &[("k", "s", Send)]);
    let r = align(&gq, &gp, &AlignmentConfig::default()).unwrap();
    assert_eq!(r.score, 0.0);
    assert_eq!(r.total_flows, 1);
    assert_eq!(r.matched_flows, 0);
}

#[test]
fn degenerate_queries_are_rejected() {
    let gq = AttackGraph::new(
        GraphRole::ATG,
        "one",
        vec![Node::new("a", P, 0)],
        vec![],
    )
    .unwrap();
    let gp = g(&[("k", P), ("s", S)], &[("k", "s", Send)]);
    assert!(align(&gq, &gp, &AlignmentConfig::default()).is_err());
    let empty = AttackGraph::new(GraphRole::ATG, "zero", vec![], vec![]).unwrap();
    assert!(align(&empty, &gp, &AlignmentConfig::default()).is_err());
}

#[test]
fn name_blindness() {
    let cfg = AlignmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gq = random_graph(&mut rng, 6, 0.3);
    let gp = random_graph(&mut rng, 12, 0.3);
    let labeled = |gr: &AttackGraph| {
        let nodes = gr
            .nodes()
            .iter()
            .map(|n| n.clone().with_label(format!("label-{}", n.id)))
            .collect();
        AttackGraph::new(gr.role, gr.provenance.clone(), nodes, gr.edges().to_vec()).unwrap()
    };
    let plain = align(&gq, &gp, &cfg).unwrap();
    let tagged = align(&labeled(&gq), &labeled(&gp), &cfg).unwrap();
    assert_eq!(plain.score, tagged.score);
    assert_eq!(plain.fixed, tagged.fixed);
}

#[test]
fn alignment_is_deterministic() {
    let cfg = AlignmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gq = random_graph(&mut rng, 5, 0.4);
    let gp = random_graph(&mut rng, 15, 0.4);
    let a = align(&gq, &gp, &cfg).unwrap();
    let b = align(&gq, &gp, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn interpret_reports_instantiated_templates() {
    use crate::atg::AtgTemplate;
    let cfg = AlignmentConfig::default();
    let t1 = AtgTemplate {
        technique_id: "T0001".into(),
        tactic: "collection".into(),
        description: String::new(),
        graph: g(
            &[("p", P), ("f", F0), ("s", S)],
            &[("f", "p", Read), ("p", "s", Send)],
        )
        .with_role(GraphRole::ATG),
    };
    let t2 = AtgTemplate {
        technique_id: "T0002".into(),
        tactic: "execution".into(),
        description: String::new(),
        graph: g(
            &[("p", P), ("f", F2)],
            &[("p", "f", Write), ("p", "f", Execute)],
        )
        .with_role(GraphRole::ATG),
    };
    // AFG holding both instances disjointly.
    let afg = g(
        &[
            ("a_p", P),
            ("a_f", F0),
            ("a_s", S),
            ("b_p", P),
            ("b_f", F2),
        ],
        &[
            ("a_f", "a_p", Read),
            ("a_p", "a_s", Send),
            ("b_p", "b_f", Write),
            ("b_p", "b_f", Execute),
        ],
    );
    let hits = interpret(&afg, &[t1.clone(), t2.clone()], &cfg).unwrap();
    assert_eq!(
        hits,
        vec![("T0001".to_string(), 1.0), ("T0002".to_string(), 1.0)]
    );

    // A single instantiated template reports only itself.
    let afg1 = t1.graph.clone().with_role(GraphRole::AFG);
    let hits = interpret(&afg1, &[t1, t2], &cfg).unwrap();
    assert_eq!(hits, vec![("T0001".to_string(), 1.0)]);

    // Empty template list.
    assert!(interpret(&afg, &[], &cfg).unwrap().is_empty());
}
