//! Attack template graphs: loading, statistics, and synthetic corpus
//! generation by template composition.

use crate::align::taint_endpoints;
use crate::error::{Error, Result};
use crate::graph::{AttackGraph, Edge, EntityAttr, EventType, GraphRole, Node};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// A technique template: an atomic attack graph tagged with its ATT&CK
/// technique and tactic.
#[derive(Debug, Clone, PartialEq)]
pub struct AtgTemplate {
    pub technique_id: String,
    pub tactic: String,
    pub description: String,
    pub graph: AttackGraph,
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateFile {
    technique_id: String,
    tactic: String,
    description: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl AtgTemplate {
    pub fn from_json(text: &str, provenance: &str) -> Result<Self> {
        let file: TemplateFile = serde_json::from_str(text)?;
        let graph = AttackGraph::new(GraphRole::ATG, provenance, file.nodes, file.edges)?;
        if graph.node_count() < 2 || graph.edge_count() < 1 {
            return Err(Error::Template(format!(
                "template {} must have at least 2 nodes and 1 edge",
                file.technique_id
            )));
        }
        Ok(AtgTemplate {
            technique_id: file.technique_id,
            tactic: file.tactic,
            description: file.description,
            graph,
        })
    }

    pub fn to_json(&self) -> String {
        let file = TemplateFile {
            technique_id: self.technique_id.clone(),
            tactic: self.tactic.clone(),
            description: self.description.clone(),
            nodes: self.graph.nodes().to_vec(),
            edges: self.graph.edges().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("template serializes")
    }
}

/// Loads every `*.json` template under `dir`. Malformed files are skipped
/// with a diagnostic; zero valid templates is fatal. The result is ordered by
/// technique id, then file name.
pub fn load_templates(dir: &Path) -> Result<(Vec<AtgTemplate>, Vec<String>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut templates = Vec::new();
    let mut diagnostics = Vec::new();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match std::fs::read_to_string(&path)
            .map_err(Error::from)
            .and_then(|text| AtgTemplate::from_json(&text, &name))
        {
            Ok(t) => templates.push((name, t)),
            Err(e) => diagnostics.push(format!("{name}: {e}")),
        }
    }
    if templates.is_empty() {
        return Err(Error::Template(format!(
            "no valid templates in {} ({} rejected)",
            dir.display(),
            diagnostics.len()
        )));
    }
    templates.sort_by(|a, b| {
        a.1.technique_id
            .cmp(&b.1.technique_id)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok((templates.into_iter().map(|(_, t)| t).collect(), diagnostics))
}

/// Aggregate statistics over a template set.
#[derive(Debug, Clone, Serialize)]
pub struct TemplateStats {
    pub template_count: usize,
    pub nodes_per_attr: BTreeMap<String, usize>,
    pub edges_per_event: BTreeMap<String, usize>,
    pub tactics: Vec<String>,
    pub mean_nodes: f64,
    pub mean_edges: f64,
}

pub fn template_stats(templates: &[AtgTemplate]) -> Result<TemplateStats> {
    if templates.is_empty() {
        return Err(Error::invalid_input("template list is empty"));
    }
    let mut nodes_per_attr: BTreeMap<String, usize> = BTreeMap::new();
    let mut edges_per_event: BTreeMap<String, usize> = BTreeMap::new();
    let mut tactics: Vec<String> = Vec::new();
    let (mut nodes, mut edges) = (0usize, 0usize);
    for t in templates {
        nodes += t.graph.node_count();
        edges += t.graph.edge_count();
        for n in t.graph.nodes() {
            *nodes_per_attr.entry(n.attr.to_string()).or_default() += 1;
        }
        for e in t.graph.edges() {
            *edges_per_event.entry(e.event.to_string()).or_default() += 1;
        }
        if !tactics.contains(&t.tactic) {
            tactics.push(t.tactic.clone());
        }
    }
    tactics.sort();
    Ok(TemplateStats {
        template_count: templates.len(),
        nodes_per_attr,
        edges_per_event,
        tactics,
        mean_nodes: nodes as f64 / templates.len() as f64,
        mean_edges: edges as f64 / templates.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpliceRule {
    /// Every instance forks off one shared root process.
    ShareRootProcess,
    /// Each instance's terminal taint sink becomes the next instance's entry.
    SequentialTaint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Inclusive range of techniques per synthesized graph.
    pub chain_min: usize,
    pub chain_max: usize,
    pub splice: SpliceRule,
    pub count: usize,
    pub seed: u64,
}

/// A synthesized graph plus the technique ids spliced into it.
#[derive(Debug, Clone)]
pub struct SynthGraph {
    pub graph: AttackGraph,
    pub techniques: Vec<String>,
}

const SPLICE_RETRIES: usize = 80;

/// Clones a template graph with instance-prefixed node ids and a seq offset.
fn instantiate(t: &AtgTemplate, instance: usize, seq_base: u64) -> (Vec<Node>, Vec<Edge>) {
    let prefix = format!("t{instance}_");
    let nodes = t
        .graph
        .nodes()
        .iter()
        .map(|n| Node {
            id: format!("{prefix}{}", n.id),
            attr: n.attr,
            order_index: n.order_index,
            label: n.label.clone(),
            forecast: false,
        })
        .collect();
    let edges = t
        .graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| Edge::new(
            format!("{prefix}{}", e.src),
            format!("{prefix}{}", e.dst),
            e.event,
            seq_base + i as u64,
        ))
        .collect();
    (nodes, edges)
}

/// First process node in a template's node order, if any.
fn entry_process(t: &AtgTemplate) -> Option<&Node> {
    t.graph
        .nodes_in_order()
        .iter()
        .find(|n| n.attr == EntityAttr::P)
}

fn splice_once(
    templates: &[AtgTemplate],
    rule: SpliceRule,
    chain: &[usize],
    index: usize,
) -> Result<AttackGraph> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut seq = 0u64;
    match rule {
        SpliceRule::ShareRootProcess => {
            let root = Node::new("root", EntityAttr::P, 0);
            nodes.push(root.clone());
            for (k, &ti) in chain.iter().enumerate() {
                let t = &templates[ti];
                let entry = entry_process(t)
                    .ok_or_else(|| Error::Template(format!(
                        "template {} has no process node to fork",
                        t.technique_id
                    )))?
                    .id
                    .clone();
                let (inst_nodes, inst_edges) = instantiate(t, k, seq + 1);
                edges.push(Edge::new(
                    root.id.clone(),
                    format!("t{k}_{entry}"),
                    EventType::ForkClone,
                    seq,
                ));
                seq += 1 + inst_edges.len() as u64;
                nodes.extend(inst_nodes);
                edges.extend(inst_edges);
            }
        }
        SpliceRule::SequentialTaint => {
            let mut junction: Option<(String, EntityAttr)> = None;
            for (k, &ti) in chain.iter().enumerate() {
                let t = &templates[ti];
                let (mut inst_nodes, mut inst_edges) = instantiate(t, k, seq);
                seq += inst_edges.len() as u64;
                if let Some((junction_id, junction_attr)) = junction.take() {
                    // The next instance's entry is the taint source of its
                    // first edge; it must carry the junction attribute.
                    let first = &inst_edges[0];
                    let (ts, _) = taint_endpoints(first);
                    let entry_id = ts.to_string();
                    let entry_attr = inst_nodes
                        .iter()
                        .find(|n| n.id == entry_id)
                        .map(|n| n.attr)
                        .unwrap();
                    if entry_attr != junction_attr {
                        return Err(Error::Template("incompatible splice junction".into()));
                    }
                    inst_nodes.retain(|n| n.id != entry_id);
                    for e in &mut inst_edges {
                        if e.src == entry_id {
                            e.src = junction_id.clone();
                        }
                        if e.dst == entry_id {
                            e.dst = junction_id.clone();
                        }
                    }
                }
                nodes.extend(inst_nodes);
                edges.extend(inst_edges);
                let last = edges.last().unwrap();
                let (_, sink) = taint_endpoints(last);
                let sink_id = sink.to_string();
                let sink_attr = nodes.iter().find(|n| n.id == sink_id).map(|n| n.attr).unwrap();
                junction = Some((sink_id, sink_attr));
            }
        }
    }
    AttackGraph::reindexed(GraphRole::ASG, format!("synthesized:{index}"), nodes, edges)
}

/// Synthesizes a corpus of scene graphs by composing templates.
/// Fully reproducible from the spec's seed.
pub fn synthesize_corpus(templates: &[AtgTemplate], spec: &CorpusSpec) -> Result<Vec<SynthGraph>> {
    if templates.is_empty() {
        return Err(Error::invalid_input("no templates to synthesize from"));
    }
    if spec.count == 0 || spec.chain_min == 0 || spec.chain_min > spec.chain_max {
        return Err(Error::invalid_input("corpus spec has an empty range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let len = rng.gen_range(spec.chain_min..=spec.chain_max);
        let mut done = false;
        for _attempt in 0..SPLICE_RETRIES {
            let chain: Vec<usize> = (0..len)
                .map(|_| rng.gen_range(0..templates.len()))
                .collect();
            match splice_once(templates, spec.splice, &chain, index) {
                Ok(graph) => {
                    // Mirror the minimum-size corpus filter for real chains.
                    if len >= 2 && graph.node_count() < 5 {
                        continue;
                    }
                    let mut techniques: Vec<String> = chain
                        .iter()
                        .map(|&ti| templates[ti].technique_id.clone())
                        .collect();
                    techniques.sort();
                    techniques.dedup();
                    out.push(SynthGraph { graph, techniques });
                    done = true;
                    break;
                }
                Err(_) => continue,
            }
        }
        if !done {
            return Err(Error::Template(format!(
                "could not splice a valid graph for corpus index {index} after {SPLICE_RETRIES} attempts"
            )));
        }
    }
    Ok(out)
}
