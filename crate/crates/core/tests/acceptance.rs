//! Acceptance gate: one test per release criterion, each printing an
//! `ACCEPTANCE PASS` line on success. Tolerances are pinned as constants.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use attack_forecast::align::{align, AlignmentConfig};
use attack_forecast::atg::{load_templates, synthesize_corpus, AtgTemplate, CorpusSpec, SpliceRule};
use attack_forecast::eval::{
    perturbation_study, reconstruction_experiment, reconstruction_summary, technique_prf,
    PerturbationKind, ReconstructionConfig, ReconstructionReport,
};
use attack_forecast::graph::{
    from_sequence, graph_from_json, graph_to_json, to_sequence, AttackGraph, GraphRole,
};
use attack_forecast::model::{
    forecast, gradient_check, load_model, predict_next, save_model, train, ForecastModel,
    ModelConfig, PredictMode, StopCriterion,
};
use attack_forecast::testgen::random_graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

// Pinned tolerances.
const GRADIENT_TOL: f64 = 1e-4;
const MEMORIZATION_NODE_TPR: f64 = 0.95;
const MEMORIZATION_EDGE_TPR: f64 = 0.90;
const RECONSTRUCTION_N1_SCORE: f64 = 0.75; // 0.8 target with 0.05 tolerance
const TECHNIQUE_PRF_FLOOR: f64 = 0.85;
const ALIGN_TIME_BUDGET: Duration = Duration::from_secs(2);
const FORECAST_TIME_BUDGET: Duration = Duration::from_secs(4);

fn templates() -> &'static Vec<AtgTemplate> {
    static CELL: OnceLock<Vec<AtgTemplate>> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
        let (list, diagnostics) = load_templates(&dir).expect("bundled templates load");
        assert!(diagnostics.is_empty(), "bundled templates are clean: {diagnostics:?}");
        list
    })
}

fn synth(count: usize, chain_min: usize, chain_max: usize, seed: u64) -> Vec<AttackGraph> {
    let spec = CorpusSpec {
        chain_min,
        chain_max,
        splice: SpliceRule::ShareRootProcess,
        count,
        seed,
    };
    synthesize_corpus(templates(), &spec)
        .expect("synthesis succeeds")
        .into_iter()
        .map(|sg| sg.graph)
        .collect()
}

/// The subgraph induced by the first `k` nodes in chronological order.
fn prefix_subgraph(g: &AttackGraph, k: usize) -> AttackGraph {
    let nodes: Vec<_> = g.nodes_in_order()[..k].to_vec();
    let keep: std::collections::HashSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    let edges: Vec<_> = g
        .edges()
        .iter()
        .filter(|e| keep.contains(e.src.as_str()) && keep.contains(e.dst.as_str()))
        .cloned()
        .collect();
    AttackGraph::new(g.role, g.provenance.clone(), nodes, edges).expect("prefix is valid")
}

/// Brute-force subgraph-embedding oracle: searches for an injective node map
/// preserving attributes and every query edge verbatim.
fn embeds(query: &AttackGraph, host: &AttackGraph) -> bool {
    let qn = query.nodes();
    let hn = host.nodes();
    fn extend(
        qi: usize,
        query: &AttackGraph,
        host: &AttackGraph,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if qi == query.node_count() {
            return true;
        }
        let q = &query.nodes()[qi];
        'host: for (hi, h) in host.nodes().iter().enumerate() {
            if used[hi] || h.attr != q.attr {
                continue;
            }
            // Every query edge between already-mapped nodes must exist in the
            // host with the same event and direction.
            for e in query.edges() {
                let (si, di) = (
                    query.nodes().iter().position(|n| n.id == e.src).unwrap(),
                    query.nodes().iter().position(|n| n.id == e.dst).unwrap(),
                );
                let involved = (si == qi && di < map.len()) || (di == qi && si < map.len());
                let both_old = si < map.len() && di < map.len();
                if !involved && !both_old {
                    continue;
                }
                let hs = if si == qi { hi } else { map[si] };
                let hd = if di == qi { hi } else { map[di] };
                let found = host.edges().iter().any(|he| {
                    he.event == e.event
                        && host.nodes().iter().position(|n| n.id == he.src).unwrap() == hs
                        && host.nodes().iter().position(|n| n.id == he.dst).unwrap() == hd
                });
                if !found {
                    continue 'host;
                }
            }
            map.push(hi);
            used[hi] = true;
            if extend(qi + 1, query, host, map, used) {
                return true;
            }
            map.pop();
            used[hi] = false;
        }
        false
    }
    if qn.len() > hn.len() {
        return false;
    }
    extend(0, query, host, &mut Vec::new(), &mut vec![false; hn.len()])
}

#[test]
fn criterion_1_alignment_identity_and_embedding() {
    let start = Instant::now();
    let cfg = AlignmentConfig::default();
    for t in templates() {
        let r = align(&t.graph, &t.graph, &cfg).unwrap();
        assert_eq!(r.score, 1.0, "self-alignment of {}", t.technique_id);
    }
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 + (seed as usize % 9);
        let g = random_graph(&mut rng, n, 0.3);
        let r = align(&g, &g, &cfg).unwrap();
        assert_eq!(r.score, 1.0, "self-alignment of random graph seed {seed}");
    }
    for seed in 200..230u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let host = random_graph(&mut rng, 4 + (seed as usize % 5), 0.3);
        let query = prefix_subgraph(&host, 2 + (seed as usize % (host.node_count() - 1)));
        assert!(embeds(&query, &host), "oracle finds the verbatim embedding (seed {seed})");
        let r = align(&query, &host, &cfg).unwrap();
        assert_eq!(r.score, 1.0, "embedded prefix aligns perfectly (seed {seed})");
    }
    assert!(start.elapsed() < Duration::from_secs(60));
    println!("ACCEPTANCE PASS: criterion 1 (alignment identity & embedding)");
}

#[test]
fn criterion_2_perturbation_orderings() {
    let start = Instant::now();
    let graphs = synth(10, 2, 4, 9);
    let seeds = [1u64, 2, 3, 4, 5];
    let rows = perturbation_study(&graphs, 5, &seeds, &AlignmentConfig::default()).unwrap();
    let mean = |kinds: &[PerturbationKind], count: usize| -> f64 {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.count == count && kinds.contains(&r.kind))
            .map(|r| r.mean_score)
            .collect();
        assert_eq!(vals.len(), kinds.len());
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    use PerturbationKind::*;
    for count in 1..=5usize {
        let mhes_node = mean(&[NodeAddMhes, NodeDelMhes], count);
        let rand_node = mean(&[NodeAddRandom, NodeDelRandom], count);
        let edge_ops = mean(&[EdgeAdd, EdgeDel], count);
        let adds = mean(&[EdgeAdd, NodeAddRandom, NodeAddMhes], count);
        let dels = mean(&[EdgeDel, NodeDelRandom, NodeDelMhes], count);
        if count >= 2 {
            assert!(mhes_node > rand_node, "count {count}: MHES {mhes_node} vs random {rand_node}");
            assert!(edge_ops > rand_node, "count {count}: edge {edge_ops} vs node {rand_node}");
            assert!(adds > dels, "count {count}: add {adds} vs del {dels}");
        } else {
            assert!(mhes_node >= rand_node);
            assert!(edge_ops >= rand_node);
            assert!(adds >= dels);
        }
    }
    assert!(start.elapsed() < Duration::from_secs(300));
    println!("ACCEPTANCE PASS: criterion 2 (perturbation ordering)");
}

fn small_model_cfg(seed: u64, epochs: usize) -> ModelConfig {
    ModelConfig {
        node_embed_adj: 16,
        node_embed_attr: 16,
        node_hidden: 32,
        node_layers: 2,
        edge_embed: 8,
        edge_hidden: 32,
        edge_layers: 2,
        window: 5,
        batch_size: 4,
        epochs,
        learning_rate: 1e-2,
        seed,
        zero_weight: 1.0,
    }
}

#[test]
fn criterion_3_gradient_correctness() {
    let start = Instant::now();
    let graphs = synth(4, 1, 2, 31);
    let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, 5)).collect();
    for seed in [1u64, 2, 3] {
        let fresh = ForecastModel::<f64>::new(small_model_cfg(seed, 1)).unwrap();
        let err = gradient_check(&fresh, &encodings[0]).unwrap();
        assert!(err < GRADIENT_TOL, "fresh model seed {seed}: rel err {err}");

        let (trained, _) = train::<f64>(&encodings, &small_model_cfg(seed, 3)).unwrap();
        let err = gradient_check(&trained, &encodings[1]).unwrap();
        assert!(err < GRADIENT_TOL, "mid-training seed {seed}: rel err {err}");
    }
    assert!(start.elapsed() < Duration::from_secs(120));
    println!("ACCEPTANCE PASS: criterion 3 (gradient correctness, tol {GRADIENT_TOL})");
}

struct Memorized {
    model: ForecastModel<f64>,
    graphs: Vec<AttackGraph>,
    final_node_tpr: f64,
    final_edge_tpr: f64,
}

fn memorized() -> &'static Memorized {
    static CELL: OnceLock<Memorized> = OnceLock::new();
    CELL.get_or_init(|| {
        // Random graphs rather than template splices: 20 spliced graphs share
        // long common prefixes, capping the reachable teacher-forced TPR well
        // below the bar regardless of model capacity.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let graphs: Vec<AttackGraph> = (0..20)
            .map(|i| random_graph(&mut rng, 25 + i % 12, 0.3))
            .collect();
        let cfg = ModelConfig {
            node_hidden: 64,
            edge_hidden: 64,
            epochs: 600,
            learning_rate: 1e-2,
            ..small_model_cfg(7, 0)
        };
        let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, cfg.window)).collect();
        let (model, report) = train::<f64>(&encodings, &cfg).unwrap();
        let last = report.epochs.last().unwrap();
        Memorized {
            model,
            graphs,
            final_node_tpr: last.node_tpr,
            final_edge_tpr: last.edge_tpr,
        }
    })
}

#[test]
fn criterion_4_memorization_oracle() {
    let start = Instant::now();
    let m = memorized();
    assert!(
        m.final_node_tpr >= MEMORIZATION_NODE_TPR,
        "node TPR {} < {MEMORIZATION_NODE_TPR}",
        m.final_node_tpr
    );
    assert!(
        m.final_edge_tpr >= MEMORIZATION_EDGE_TPR,
        "edge TPR {} < {MEMORIZATION_EDGE_TPR}",
        m.final_edge_tpr
    );

    // Greedy continuation of every unambiguous held-in prefix must match the
    // training data exactly. A prefix is ambiguous when another training
    // graph shares it but continues differently; greedy decoding cannot
    // reproduce both, so those are excluded.
    let window = m.model.cfg.window;
    let encodings: Vec<_> = m.graphs.iter().map(|g| to_sequence(g, window)).collect();
    let mut checked = 0;
    for (gi, g) in m.graphs.iter().enumerate() {
        let n = g.node_count();
        let enc = &encodings[gi];
        let truth_code = enc.node_codes[n - 1];
        let truth_adj = &enc.adj_vectors[n - 1];
        let ambiguous = encodings.iter().enumerate().any(|(oi, other)| {
            oi != gi
                && other.len() >= n
                && other.node_codes[..n - 1] == enc.node_codes[..n - 1]
                && other.adj_vectors[..n - 1] == enc.adj_vectors[..n - 1]
                && (other.node_codes[n - 1] != truth_code
                    || &other.adj_vectors[n - 1] != truth_adj)
        });
        if ambiguous {
            continue;
        }
        let prefix = prefix_subgraph(g, n - 1);
        let (code, adj) = predict_next(&m.model, &prefix, PredictMode::Greedy).unwrap();
        assert_eq!(code, truth_code, "graph {gi}: continuation node code");
        assert_eq!(&adj, truth_adj, "graph {gi}: continuation adjacency");
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} unambiguous continuations");
    assert!(start.elapsed() < Duration::from_secs(600));
    println!(
        "ACCEPTANCE PASS: criterion 4 (memorization: node TPR {:.3}, edge TPR {:.3}, {checked} exact continuations)",
        m.final_node_tpr, m.final_edge_tpr
    );
}

#[test]
fn criterion_5_window_ordering() {
    let start = Instant::now();
    let graphs = synth(10, 2, 3, 13);
    let run = |window: usize| -> f64 {
        let cfg = ModelConfig {
            window,
            epochs: 60,
            ..small_model_cfg(11, 0)
        };
        let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, window)).collect();
        let (_, report) = train::<f64>(&encodings, &cfg).unwrap();
        report.epochs.last().unwrap().edge_tpr
    };
    let narrow = run(5);
    let wide = run(28);
    assert!(
        narrow >= wide,
        "edge TPR with window 5 ({narrow}) < window 28 ({wide})"
    );
    assert!(start.elapsed() < Duration::from_secs(900));
    println!("ACCEPTANCE PASS: criterion 5 (window ordering: TPR(5)={narrow:.3} >= TPR(28)={wide:.3})");
}

fn reconstruction() -> &'static ReconstructionReport {
    static CELL: OnceLock<ReconstructionReport> = OnceLock::new();
    CELL.get_or_init(|| {
        let graphs = synth(50, 2, 2, 21);
        let cfg = ModelConfig {
            node_hidden: 64,
            edge_hidden: 64,
            epochs: 600,
            learning_rate: 1e-2,
            ..small_model_cfg(3, 0)
        };
        let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, cfg.window)).collect();
        let (model, _) = train::<f64>(&encodings, &cfg).unwrap();
        reconstruction_experiment(&model, &graphs, templates(), &ReconstructionConfig::default())
            .unwrap()
    })
}

#[test]
fn criterion_6_reconstruction_uplift() {
    let start = Instant::now();
    let report = reconstruction();
    assert!(!report.records.is_empty());
    let summary = reconstruction_summary(&report.records);
    for row in &summary {
        assert!(
            row.mean_afg_score >= row.mean_broken_score,
            "N={}: afg {} < broken {}",
            row.deleted,
            row.mean_afg_score,
            row.mean_broken_score
        );
    }
    let n1 = summary
        .iter()
        .find(|r| r.deleted == 1)
        .expect("some graph breaks after one deletion");
    assert!(
        n1.mean_afg_score >= RECONSTRUCTION_N1_SCORE,
        "N=1 reconstructed score {} < {RECONSTRUCTION_N1_SCORE}",
        n1.mean_afg_score
    );
    assert!(start.elapsed() < Duration::from_secs(1200));
    println!(
        "ACCEPTANCE PASS: criterion 6 (reconstruction uplift, N=1 score {:.3})",
        n1.mean_afg_score
    );
}

#[test]
fn criterion_7_technique_prf() {
    let report = reconstruction();
    let truth: Vec<Vec<String>> = report.records.iter().map(|r| r.truth.clone()).collect();
    let broken: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| r.broken_techniques.clone())
        .collect();
    let afg: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| r.afg_techniques.clone())
        .collect();

    let broken_prf = technique_prf(&truth, &broken).unwrap();
    assert_eq!(broken_prf.precision, 1.0, "broken-graph precision");
    assert!(broken_prf.recall < 1.0, "breaking must lose a technique");

    let afg_prf = technique_prf(&truth, &afg).unwrap();
    for (name, v) in [
        ("precision", afg_prf.precision),
        ("recall", afg_prf.recall),
        ("f1", afg_prf.f1),
    ] {
        assert!(v >= TECHNIQUE_PRF_FLOOR, "afg {name} {v} < {TECHNIQUE_PRF_FLOOR}");
    }
    println!(
        "ACCEPTANCE PASS: criterion 7 (technique P/R/F: {:.3}/{:.3}/{:.3})",
        afg_prf.precision, afg_prf.recall, afg_prf.f1
    );
}

#[test]
fn criterion_8_round_trip_suites() {
    let start = Instant::now();
    // Sequence encode/decode identity over random graphs.
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 3 + (seed as usize % 10), 0.4);
        let window = g.node_count();
        let enc = to_sequence(&g, window);
        let back = from_sequence(&enc).unwrap();
        assert_eq!(to_sequence(&back, window), enc, "encode/decode seed {seed}");
        let text = graph_to_json(&g);
        assert_eq!(graph_from_json(&text).unwrap(), g, "json round trip seed {seed}");
    }
    // Entity classification examples.
    use attack_forecast::graph::{classify_entity, EntityAttr};
    for (name, attr) in [
        ("/etc/passwd", EntityAttr::F0),
        ("C:\\Windows\\System32\\kernel32.dll", EntityAttr::F1),
        ("payload.exe", EntityAttr::F2),
        ("notes.txt", EntityAttr::F3),
        ("HKEY_LOCAL_MACHINE\\Software\\Run", EntityAttr::FR),
    ] {
        assert_eq!(classify_entity(name).unwrap(), attr, "{name}");
    }
    // Checkpoint save/load bit-exactness.
    let graphs = synth(3, 1, 1, 41);
    let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, 5)).collect();
    let (model, _) = train::<f64>(&encodings, &small_model_cfg(3, 2)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    save_model(&model, &a).unwrap();
    let loaded = load_model::<f64>(&a).unwrap();
    save_model(&loaded, &b).unwrap();
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "checkpoint round trip is bit-exact"
    );
    assert!(start.elapsed() < Duration::from_secs(60));
    println!("ACCEPTANCE PASS: criterion 8 (round-trip and validation suites)");
}

#[test]
fn criterion_9_throughput() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let host = random_graph(&mut rng, 50, 0.3);
    let query = &templates()[0].graph;
    let t = Instant::now();
    align(query, &host, &AlignmentConfig::default()).unwrap();
    let align_time = t.elapsed();
    assert!(
        align_time < ALIGN_TIME_BUDGET,
        "single-ATG alignment took {align_time:?}"
    );

    let graphs = synth(3, 1, 1, 43);
    let encodings: Vec<_> = graphs.iter().map(|g| to_sequence(g, 5)).collect();
    let (model, _) = train::<f64>(&encodings, &small_model_cfg(5, 2)).unwrap();
    let apg = random_graph(&mut rng, 20, 0.3).with_role(GraphRole::APG);
    let t = Instant::now();
    forecast(&model, &apg, &StopCriterion::Budget, 1).unwrap();
    let forecast_time = t.elapsed();
    assert!(
        forecast_time < FORECAST_TIME_BUDGET,
        "one forecast extension took {forecast_time:?}"
    );
    println!(
        "ACCEPTANCE PASS: criterion 9 (throughput: align {align_time:?}, forecast {forecast_time:?})"
    );
}
