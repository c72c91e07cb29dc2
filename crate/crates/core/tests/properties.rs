//! Property tests over randomly generated graphs and edge triples.

use attack_forecast::align::{align, AlignmentConfig};
use attack_forecast::graph::{
    from_sequence, graph_from_json, graph_to_json, to_sequence, validate_edge, AttackGraph, Edge,
    EntityAttr, EventType, GraphRole, Node,
};
use attack_forecast::testgen::random_graph;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn attr_strategy() -> impl Strategy<Value = EntityAttr> {
    prop::sample::select(EntityAttr::ALL.to_vec())
}

fn event_strategy() -> impl Strategy<Value = EventType> {
    prop::sample::select(EventType::ALL.to_vec())
}

fn graph_strategy() -> impl Strategy<Value = AttackGraph> {
    (0u64..1_000_000, 2usize..20, 0.0f64..0.8).prop_map(|(seed, n, p)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_graph(&mut rng, n, p)
    })
}

proptest! {
    /// A graph survives JSON serialization unchanged.
    #[test]
    fn json_round_trip_is_identity(g in graph_strategy()) {
        let text = graph_to_json(&g);
        let back = graph_from_json(&text).unwrap();
        prop_assert_eq!(g, back);
    }

    /// Decoding an encoding and re-encoding it reproduces the encoding, for
    /// any window wide enough to be lossless.
    #[test]
    fn sequence_encode_decode_round_trip(g in graph_strategy()) {
        let window = g.node_count().max(1);
        let enc = to_sequence(&g, window);
        prop_assert!(!enc.lossy);
        let decoded = from_sequence(&enc).unwrap();
        prop_assert_eq!(to_sequence(&decoded, window), enc);
    }

    /// Graph construction accepts a two-node edge exactly when the event
    /// table row exists.
    #[test]
    fn validation_closure(sub in attr_strategy(), ev in event_strategy(), obj in attr_strategy()) {
        let nodes = vec![Node::new("a", sub, 0), Node::new("b", obj, 1)];
        let edges = vec![Edge::new("a", "b", ev, 0)];
        let built = AttackGraph::new(GraphRole::ASG, "prop", nodes, edges);
        prop_assert_eq!(built.is_ok(), validate_edge(sub, ev, obj));
    }

    /// Every graph embeds perfectly into itself.
    #[test]
    fn self_alignment_scores_one(g in graph_strategy()) {
        let r = align(&g, &g, &AlignmentConfig::default()).unwrap();
        prop_assert_eq!(r.score, 1.0);
        prop_assert_eq!(r.matched_flows, r.total_flows);
    }

    /// Windowed encodings only ever drop edges, flagged as lossy; node codes
    /// are window-independent.
    #[test]
    fn narrow_windows_are_flagged_not_corrupted(g in graph_strategy(), window in 1usize..6) {
        let full = to_sequence(&g, g.node_count().max(1));
        let narrow = to_sequence(&g, window);
        prop_assert_eq!(&narrow.node_codes, &full.node_codes);
        let kept: usize = narrow.adj_vectors.iter()
            .flat_map(|v| v.iter())
            .filter(|&&c| c != 0)
            .count();
        let total: usize = full.adj_vectors.iter()
            .flat_map(|v| v.iter())
            .filter(|&&c| c != 0)
            .count();
        prop_assert!(kept <= total);
        prop_assert_eq!(narrow.lossy, kept < total);
    }
}
