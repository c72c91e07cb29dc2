//! Desk-scale experiments: alignment perturbation study, broken-graph
//! reconstruction, technique precision/recall/F1, and reinforcement-rule
//! dispatch over forecast graphs.
//!
//! All experiments are seed-deterministic; multi-graph experiments
//! parallelize across graphs with a fixed aggregation order.

use crate::align::{align, interpret, taint_endpoints, AlignmentConfig, DeliveryRules};
use crate::atg::AtgTemplate;
use crate::error::{Error, Result};
use crate::graph::{validate_edge, AttackGraph, Edge, EntityAttr, EventType, Node};
use crate::model::{forecast, ForecastModel, StopCriterion, DEFAULT_STEP_BUDGET};
use crate::num::Real;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Duration;

/// Default reinforcement-rule lifetime, sized to comfortably cover typical
/// lateral-movement dwell time.
pub const DEFAULT_RULE_DECAY: Duration = Duration::from_secs(2 * 60 * 60);

/// Default cap on deletions when breaking a graph.
pub const DEFAULT_MAX_DELETIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    EdgeAdd,
    EdgeDel,
    NodeAddRandom,
    NodeDelRandom,
    NodeAddMhes,
    NodeDelMhes,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::EdgeAdd,
        PerturbationKind::EdgeDel,
        PerturbationKind::NodeAddRandom,
        PerturbationKind::NodeDelRandom,
        PerturbationKind::NodeAddMhes,
        PerturbationKind::NodeDelMhes,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PerturbationKind::EdgeAdd => "edge-add",
            PerturbationKind::EdgeDel => "edge-del",
            PerturbationKind::NodeAddRandom => "node-add-random",
            PerturbationKind::NodeDelRandom => "node-del-random",
            PerturbationKind::NodeAddMhes => "node-add-mhes",
            PerturbationKind::NodeDelMhes => "node-del-mhes",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub count: usize,
    pub seed: u64,
}

/// A perturbed graph plus how many operations actually applied. When a kind
/// runs out of applicable sites the graph is returned as-is with
/// `exhausted` set and a diagnostic per skipped operation.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub graph: AttackGraph,
    pub applied: usize,
    pub exhausted: bool,
    pub diagnostics: Vec<String>,
}

/// Applies `spec.count` single-step perturbations of the given kind.
pub fn perturb(g: &AttackGraph, spec: &PerturbationSpec) -> Result<Perturbed> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rules = DeliveryRules::default();
    let mut graph = g.clone();
    let mut applied = 0;
    let mut diagnostics = Vec::new();
    for step in 0..spec.count {
        let outcome = match spec.kind {
            PerturbationKind::EdgeAdd => edge_add(&graph, &mut rng),
            PerturbationKind::EdgeDel => edge_del(&graph, &mut rng),
            PerturbationKind::NodeAddRandom => node_add_random(&graph, &mut rng, step),
            PerturbationKind::NodeDelRandom => node_del_random(&graph, &mut rng),
            PerturbationKind::NodeAddMhes => node_add_mhes(&graph, &mut rng, step),
            PerturbationKind::NodeDelMhes => node_del_mhes(&graph, &mut rng, &rules),
        };
        match outcome {
            Some((nodes, edges)) => {
                graph = AttackGraph::reindexed(g.role, g.provenance.clone(), nodes, edges)?;
                applied += 1;
            }
            None => {
                diagnostics.push(format!(
                    "{}: no applicable site at step {step}, graph unchanged",
                    spec.kind.label()
                ));
            }
        }
    }
    Ok(Perturbed {
        graph,
        exhausted: applied < spec.count,
        applied,
        diagnostics,
    })
}

fn next_seq(g: &AttackGraph) -> u64 {
    if g.edge_count() == 0 {
        0
    } else {
        g.max_seq() + 1
    }
}

fn fresh_id(g: &AttackGraph, prefix: &str, step: usize) -> String {
    let mut id = format!("{prefix}{step}");
    while g.node_by_id(&id).is_some() {
        id.push('x');
    }
    id
}

fn edge_add(g: &AttackGraph, rng: &mut ChaCha8Rng) -> Option<(Vec<Node>, Vec<Edge>)> {
    let e = crate::testgen::random_edge_between_existing(rng, g.nodes(), g.edges(), next_seq(g))?;
    let mut edges = g.edges().to_vec();
    edges.push(e);
    Some((g.nodes().to_vec(), edges))
}

fn edge_del(g: &AttackGraph, rng: &mut ChaCha8Rng) -> Option<(Vec<Node>, Vec<Edge>)> {
    if g.edge_count() == 0 {
        return None;
    }
    let mut edges = g.edges().to_vec();
    edges.sort_by_key(|e| e.seq);
    let idx = rng.gen_range(0..edges.len());
    edges.remove(idx);
    Some((g.nodes().to_vec(), edges))
}

fn node_add_random(
    g: &AttackGraph,
    rng: &mut ChaCha8Rng,
    step: usize,
) -> Option<(Vec<Node>, Vec<Edge>)> {
    let anchor = g.nodes_in_order().choose(rng)?.clone();
    // Enumerate valid attachments of a new node to the anchor, both
    // directions, in a fixed order.
    let mut options = Vec::new();
    for attr in EntityAttr::ALL {
        for ev in EventType::ALL {
            if validate_edge(anchor.attr, ev, attr) {
                options.push((ev, true, attr));
            }
            if validate_edge(attr, ev, anchor.attr) {
                options.push((ev, false, attr));
            }
        }
    }
    let (ev, anchor_is_subject, attr) = *options.choose(rng)?;
    let id = fresh_id(g, "padd", step);
    let mut nodes = g.nodes().to_vec();
    nodes.push(Node::new(id.clone(), attr, g.node_count()));
    let (src, dst) = if anchor_is_subject {
        (anchor.id, id)
    } else {
        (id, anchor.id)
    };
    let mut edges = g.edges().to_vec();
    edges.push(Edge::new(src, dst, ev, next_seq(g)));
    Some((nodes, edges))
}

fn node_del_random(g: &AttackGraph, rng: &mut ChaCha8Rng) -> Option<(Vec<Node>, Vec<Edge>)> {
    if g.node_count() <= 2 {
        return None;
    }
    let victim = g.nodes_in_order().choose(rng)?.id.clone();
    Some(drop_node(g, &victim))
}

fn drop_node(g: &AttackGraph, victim: &str) -> (Vec<Node>, Vec<Edge>) {
    let nodes = g.nodes().iter().filter(|n| n.id != victim).cloned().collect();
    let edges = g
        .edges()
        .iter()
        .filter(|e| e.src != victim && e.dst != victim)
        .cloned()
        .collect();
    (nodes, edges)
}

/// Splits a process-subject edge into an equivalent two-hop delivery chain:
/// P-ev->X becomes P-ForkClone->P'-ev->X. Only Write, Send, and ForkClone
/// edges are splittable: their taint source is a process, so a ForkClone
/// first hop both satisfies a delivery rule and preserves the final event.
fn node_add_mhes(
    g: &AttackGraph,
    rng: &mut ChaCha8Rng,
    step: usize,
) -> Option<(Vec<Node>, Vec<Edge>)> {
    let mut edges = g.edges().to_vec();
    edges.sort_by_key(|e| e.seq);
    let sites: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            matches!(
                e.event,
                EventType::Write | EventType::Send | EventType::ForkClone
            )
        })
        .map(|(i, _)| i)
        .collect();
    let &site = sites.choose(rng)?;
    // Double every seq so the chain's two hops get adjacent slots.
    for e in &mut edges {
        e.seq *= 2;
    }
    let old = edges.remove(site);
    let id = fresh_id(g, "madd", step);
    let mut nodes = g.nodes().to_vec();
    nodes.push(Node::new(id.clone(), EntityAttr::P, g.node_count()));
    edges.push(Edge::new(old.src, id.clone(), EventType::ForkClone, old.seq));
    edges.push(Edge::new(id, old.dst, old.event, old.seq + 1));
    Some((nodes, edges))
}

/// Collapses a two-hop delivery chain a -> m -> b into its equivalent single
/// hop a-ev->b. The middle node must have exactly the two chain edges, the
/// first hop must satisfy a delivery rule, and the collapsed edge must be
/// valid under the event table.
fn node_del_mhes(
    g: &AttackGraph,
    rng: &mut ChaCha8Rng,
    rules: &DeliveryRules,
) -> Option<(Vec<Node>, Vec<Edge>)> {
    if g.node_count() <= 2 {
        return None;
    }
    let mut sites: Vec<(String, Edge)> = Vec::new();
    for m in g.nodes_in_order() {
        let incident: Vec<&Edge> = g
            .edges()
            .iter()
            .filter(|e| e.src == m.id || e.dst == m.id)
            .collect();
        if incident.len() != 2 {
            continue;
        }
        let (mut first, mut last) = (None, None);
        for e in incident {
            let (ts, td) = taint_endpoints(e);
            if td == m.id {
                first = Some((ts.to_string(), e.event));
            } else if ts == m.id {
                last = Some((td.to_string(), e.event, e.seq));
            }
        }
        let (Some((a, ev_in)), Some((b, ev_out, seq_out))) = (first, last) else {
            continue;
        };
        if a == b {
            continue;
        }
        let a_attr = g.node_by_id(&a)?.attr;
        let b_attr = g.node_by_id(&b)?.attr;
        if !rules.admits(a_attr, ev_in, m.attr) {
            continue;
        }
        // Map the collapsed taint hop back to stored direction; Execute is
        // stored process -> file.
        let collapsed = if ev_out == EventType::Execute {
            Edge::new(b.clone(), a.clone(), ev_out, seq_out)
        } else {
            Edge::new(a.clone(), b.clone(), ev_out, seq_out)
        };
        let src_attr = if collapsed.src == a { a_attr } else { b_attr };
        let dst_attr = if collapsed.dst == b { b_attr } else { a_attr };
        if !validate_edge(src_attr, ev_out, dst_attr) {
            continue;
        }
        sites.push((m.id.clone(), collapsed));
    }
    let (victim, collapsed) = sites.choose(rng)?.clone();
    let (nodes, mut edges) = drop_node(g, &victim);
    edges.push(collapsed);
    Some((nodes, edges))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub kind: PerturbationKind,
    pub count: usize,
    pub mean_score: f64,
    pub samples: usize,
}

/// Perturbation-impact study: for every perturbation kind and count 0..=max_count,
/// the alignment score of the original graph (query) against the perturbed
/// graph (host), averaged over graphs and seeds.
pub fn perturbation_study(
    graphs: &[AttackGraph],
    max_count: usize,
    seeds: &[u64],
    cfg: &AlignmentConfig,
) -> Result<Vec<StudyRow>> {
    if graphs.is_empty() || seeds.is_empty() {
        return Err(Error::invalid_input("perturbation study needs graphs and seeds"));
    }
    let mut rows = Vec::new();
    for kind in PerturbationKind::ALL {
        for count in 0..=max_count {
            let scores: Vec<f64> = graphs
                .par_iter()
                .flat_map(|g| {
                    seeds.par_iter().map(move |&seed| {
                        let spec = PerturbationSpec { kind, count, seed };
                        let p = perturb(g, &spec)?;
                        Ok(align(g, &p.graph, cfg)?.score)
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(StudyRow {
                kind,
                count,
                mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
                samples: scores.len(),
            });
        }
    }
    Ok(rows)
}

pub fn study_table(rows: &[StudyRow]) -> String {
    let mut out = String::from("kind\tcount\tmean_score\tsamples\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{}\n",
            r.kind.label(),
            r.count,
            r.mean_score,
            r.samples
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct BrokenGraph {
    pub graph: AttackGraph,
    pub deleted: Vec<String>,
    pub diagnostics: Vec<String>,
}

fn technique_ids(list: &[(String, f64)]) -> BTreeSet<String> {
    list.iter().map(|(id, _)| id.clone()).collect()
}

/// Deletes the temporally latest node (and its edges) repeatedly, up to
/// `max_del` times, stopping as soon as the matched-technique list strictly
/// shrinks.
pub fn break_graph(
    g: &AttackGraph,
    templates: &[AtgTemplate],
    cfg: &AlignmentConfig,
    max_del: usize,
) -> Result<BrokenGraph> {
    let baseline = technique_ids(&interpret(g, templates, cfg)?);
    if baseline.is_empty() {
        return Err(Error::invalid_input(
            "break_graph requires a graph matching at least one template",
        ));
    }
    let mut graph = g.clone();
    let mut deleted = Vec::new();
    let mut diagnostics = Vec::new();
    for _ in 0..max_del {
        if graph.node_count() <= 2 {
            diagnostics.push("stopped: graph too small to break further".into());
            break;
        }
        let victim = graph
            .nodes_in_order()
            .last()
            .expect("non-empty graph")
            .id
            .clone();
        let (nodes, edges) = drop_node(&graph, &victim);
        graph = AttackGraph::reindexed(g.role, g.provenance.clone(), nodes, edges)?;
        deleted.push(victim);
        let now = technique_ids(&interpret(&graph, templates, cfg)?);
        if now.len() < baseline.len() {
            return Ok(BrokenGraph {
                graph,
                deleted,
                diagnostics,
            });
        }
    }
    if max_del > 0 {
        diagnostics.push(format!(
            "technique list did not shrink within {max_del} deletions"
        ));
    }
    Ok(BrokenGraph {
        graph,
        deleted,
        diagnostics,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub graph_id: String,
    pub deleted: usize,
    pub broken_score: f64,
    pub afg_score: f64,
    pub truth: Vec<String>,
    pub broken_techniques: Vec<String>,
    pub afg_techniques: Vec<String>,
    pub generated_nodes: usize,
    pub generated_edges: usize,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub records: Vec<ReconstructionRecord>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionConfig {
    pub align: AlignmentConfig,
    pub budget: usize,
    pub max_del: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            align: AlignmentConfig::default(),
            budget: DEFAULT_STEP_BUDGET,
            max_del: DEFAULT_MAX_DELETIONS,
        }
    }
}

/// Per graph: break it, forecast the broken graph until the matched-template
/// count recovers (or the budget runs out), and score both against the
/// original. Graphs matching no template are skipped with a diagnostic.
pub fn reconstruction_experiment<T: Real>(
    model: &ForecastModel<T>,
    graphs: &[AttackGraph],
    templates: &[AtgTemplate],
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    let stop = StopCriterion::AtgGain {
        templates: templates.to_vec(),
        align_cfg: cfg.align.clone(),
    };
    let results: Vec<std::result::Result<ReconstructionRecord, String>> = graphs
        .par_iter()
        .enumerate()
        .map(|(idx, g)| {
            let graph_id = format!("{}#{idx}", g.provenance);
            let truth = interpret(g, templates, &cfg.align).map_err(|e| e.to_string())?;
            if truth.is_empty() {
                return Err(format!("{graph_id}: matches no template, skipped"));
            }
            let broken =
                break_graph(g, templates, &cfg.align, cfg.max_del).map_err(|e| e.to_string())?;
            let broken_score = align(g, &broken.graph, &cfg.align)
                .map_err(|e| e.to_string())?
                .score;
            let broken_list =
                interpret(&broken.graph, templates, &cfg.align).map_err(|e| e.to_string())?;
            let out = forecast(model, &broken.graph, &stop, cfg.budget).map_err(|e| e.to_string())?;
            let afg_score = align(g, &out.graph, &cfg.align)
                .map_err(|e| e.to_string())?
                .score;
            let afg_list =
                interpret(&out.graph, templates, &cfg.align).map_err(|e| e.to_string())?;
            Ok(ReconstructionRecord {
                graph_id,
                deleted: broken.deleted.len(),
                broken_score,
                afg_score,
                truth: truth.into_iter().map(|(id, _)| id).collect(),
                broken_techniques: broken_list.into_iter().map(|(id, _)| id).collect(),
                afg_techniques: afg_list.into_iter().map(|(id, _)| id).collect(),
                generated_nodes: out.graph.node_count() - broken.graph.node_count(),
                generated_edges: out.graph.edge_count() - broken.graph.edge_count(),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(d) => diagnostics.push(d),
        }
    }
    Ok(ReconstructionReport {
        records,
        diagnostics,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionSummaryRow {
    pub deleted: usize,
    pub mean_broken_score: f64,
    pub mean_afg_score: f64,
    pub records: usize,
}

/// Mean broken-vs-original and afg-vs-original scores per deletion count.
pub fn reconstruction_summary(records: &[ReconstructionRecord]) -> Vec<ReconstructionSummaryRow> {
    let counts: BTreeSet<usize> = records.iter().map(|r| r.deleted).collect();
    counts
        .into_iter()
        .map(|n| {
            let group: Vec<&ReconstructionRecord> =
                records.iter().filter(|r| r.deleted == n).collect();
            let len = group.len() as f64;
            ReconstructionSummaryRow {
                deleted: n,
                mean_broken_score: group.iter().map(|r| r.broken_score).sum::<f64>() / len,
                mean_afg_score: group.iter().map(|r| r.afg_score).sum::<f64>() / len,
                records: group.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-averaged precision/recall/F1 over technique-id sets. Degenerate
/// denominators count as perfect: no predictions means no false positives.
pub fn technique_prf(truth: &[Vec<String>], predicted: &[Vec<String>]) -> Result<Prf> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid_input(
            "truth and predicted lists must be parallel",
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (t, p) in truth.iter().zip(predicted) {
        let ts: BTreeSet<&str> = t.iter().map(String::as_str).collect();
        let ps: BTreeSet<&str> = p.iter().map(String::as_str).collect();
        tp += ts.intersection(&ps).count();
        fp += ps.difference(&ts).count();
        fn_ += ts.difference(&ps).count();
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleAction {
    BlockReadSensitive,
    BlockOutbound,
    BlockExec,
    BlockWrite,
    BlockSpawn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReinforcementRule {
    pub subject: EntityAttr,
    pub event: EventType,
    pub object: EntityAttr,
    pub src: String,
    pub dst: String,
    pub action: RuleAction,
    pub decay_secs: u64,
}

/// Maps each forecast edge of an AFG to a preemptive blocking rule, in edge
/// seq order. Receive edges and reads of non-sensitive files trigger nothing.
pub fn dispatch(afg: &AttackGraph) -> Vec<ReinforcementRule> {
    let mut edges: Vec<&Edge> = afg.edges().iter().filter(|e| e.forecast).collect();
    edges.sort_by_key(|e| e.seq);
    edges
        .into_iter()
        .filter_map(|e| {
            let subject = afg.node_by_id(&e.src)?.attr;
            let object = afg.node_by_id(&e.dst)?.attr;
            let action = match e.event {
                EventType::Read if subject == EntityAttr::F0 => RuleAction::BlockReadSensitive,
                EventType::Read | EventType::Receive => return None,
                EventType::Send => RuleAction::BlockOutbound,
                EventType::Execute => RuleAction::BlockExec,
                EventType::Write => RuleAction::BlockWrite,
                EventType::ForkClone => RuleAction::BlockSpawn,
            };
            Some(ReinforcementRule {
                subject,
                event: e.event,
                object,
                src: e.src.clone(),
                dst: e.dst.clone(),
                action,
                decay_secs: DEFAULT_RULE_DECAY.as_secs(),
            })
        })
        .collect()
}
