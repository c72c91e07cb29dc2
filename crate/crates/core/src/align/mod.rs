//! Graph alignment with multi-hop equivalent semantics (MHES).
//!
//! Quantifies the presence of a query graph inside a host graph. Candidate
//! nodes are selected by attribute and degree, scored through path and edge
//! scores, fixed at the highest score above a threshold, and the final score
//! is the fraction of query flows preserved between fixed host nodes.
//!
//! A single query edge may be realized by a multi-hop host path when the
//! suspicious semantics travel along the delivery rules: the path must be
//! taint-connected, its last hop must carry the query edge's event, and every
//! earlier hop must belong to the rule set.

mod rules;

pub use rules::{parse_rules, DeliveryRule, DeliveryRules, RuleEvent};

use crate::atg::AtgTemplate;
use crate::error::{Error, Result};
use crate::graph::{AttackGraph, Edge, EntityAttr, EventType, Node};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

/// Maximum simple-path length (in edges) enumerated on the query side.
const PATH_LEN_CAP: usize = 8;
/// Maximum enumerated paths per (start, end) node pair.
const PATH_COUNT_CAP: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentConfig {
    /// Minimum node score required to fix a candidate.
    pub fix_threshold: f64,
    /// Interpretation threshold T: templates scoring above it are reported.
    pub interpret_threshold: f64,
    /// Cap on MHES host-path length for edge realization.
    pub max_hops: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            fix_threshold: 0.3,
            interpret_threshold: 0.6,
            max_hops: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub query: String,
    pub host: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowMatch {
    pub src: String,
    pub dst: String,
    pub matched: bool,
}

/// Result of aligning a query graph against a host graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Fraction of query flows preserved between fixed nodes, in [0, 1].
    pub score: f64,
    /// Fixed host node per query node (absent when no candidate passed the
    /// fixing threshold).
    pub fixed: BTreeMap<String, String>,
    pub node_scores: Vec<CandidateScore>,
    pub matched_flows: usize,
    pub total_flows: usize,
    pub flows: Vec<FlowMatch>,
}

/// Taint-direction view of an edge: the endpoint suspicion flows from, the
/// endpoint it flows to, and the event. All events keep their stored
/// direction except Execute, where suspicion flows from the executed file
/// into the process.
pub fn taint_endpoints<'a>(e: &'a Edge) -> (&'a str, &'a str) {
    match e.event {
        EventType::Execute => (e.dst.as_str(), e.src.as_str()),
        _ => (e.src.as_str(), e.dst.as_str()),
    }
}

/// Directed, taint-canonicalized view of a graph used by the scoring passes.
struct GraphView {
    ids: Vec<String>,
    attrs: Vec<EntityAttr>,
    orders: Vec<usize>,
    index: HashMap<String, usize>,
    /// Outgoing taint edges: (dst, event, member of the delivery-rule set).
    out: Vec<Vec<(usize, EventType, bool)>>,
    degrees: Vec<usize>,
}

impl GraphView {
    fn build(g: &AttackGraph, rules: &DeliveryRules) -> Self {
        let nodes = g.nodes_in_order();
        let ids: Vec<String> = nodes.iter().map(|x| x.id.clone()).collect();
        let attrs: Vec<EntityAttr> = nodes.iter().map(|x| x.attr).collect();
        let orders: Vec<usize> = nodes.iter().map(|x| x.order_index).collect();
        let index: HashMap<String, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut degrees = vec![0usize; ids.len()];
        for e in g.edges() {
            let (ts, td) = taint_endpoints(e);
            let (si, di) = (index[ts], index[td]);
            let in_u = rules.admits(attrs[si], e.event, attrs[di]);
            out[si].push((di, e.event, in_u));
            degrees[si] += 1;
            degrees[di] += 1;
        }
        GraphView {
            ids,
            attrs,
            orders,
            index,
            out,
            degrees,
        }
    }

    /// Shortest MHES-realizing path lengths from anchor `k` for a query edge
    /// with event `ev`: hops[l] = length of the shortest taint path k => l
    /// whose last hop carries `ev` and whose earlier hops all lie in the rule
    /// set. Bounded by `max_hops`.
    fn mhes_hops(&self, k: usize, ev: EventType, max_hops: usize) -> HashMap<usize, usize> {
        // BFS over rule-set hops gives the earlier-hop distances.
        let mut dist_u: HashMap<usize, usize> = HashMap::new();
        dist_u.insert(k, 0);
        let mut queue = VecDeque::from([k]);
        while let Some(u) = queue.pop_front() {
            let d = dist_u[&u];
            if d + 1 >= max_hops {
                continue;
            }
            for &(v, _, in_u) in &self.out[u] {
                if in_u && !dist_u.contains_key(&v) {
                    dist_u.insert(v, d + 1);
                    queue.push_back(v);
                }
            }
        }
        let mut hops: HashMap<usize, usize> = HashMap::new();
        for (&u, &d) in &dist_u {
            if d + 1 > max_hops {
                continue;
            }
            for &(v, e, _) in &self.out[u] {
                if e == ev {
                    let entry = hops.entry(v).or_insert(usize::MAX);
                    *entry = (*entry).min(d + 1);
                }
            }
        }
        hops
    }

    /// True when a suspicion flow can travel from `a` to `b`: a taint path
    /// whose hops all lie in the rule set except possibly the last.
    fn flow_reachable(&self, a: usize, b: usize) -> bool {
        let mut dist_u: HashSet<usize> = HashSet::from([a]);
        let mut queue = VecDeque::from([a]);
        while let Some(u) = queue.pop_front() {
            for &(v, _, in_u) in &self.out[u] {
                if v == b {
                    return true;
                }
                if in_u && dist_u.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        false
    }

    /// All nodes a suspicion flow from `start` can reach: closure over
    /// rule-set hops plus one final arbitrary hop.
    fn flow_set(&self, start: usize) -> HashSet<usize> {
        let mut closure: HashSet<usize> = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _, in_u) in &self.out[u] {
                if in_u && closure.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        let mut seen = HashSet::new();
        for &u in &closure {
            for &(v, _, _) in &self.out[u] {
                seen.insert(v);
            }
        }
        seen
    }
}

/// A query edge in taint direction.
#[derive(Clone, Copy)]
struct QueryEdge {
    src: usize,
    dst: usize,
    event: EventType,
}

pub struct Aligner<'a> {
    cfg: &'a AlignmentConfig,
    qv: GraphView,
    hv: GraphView,
    qedges: Vec<QueryEdge>,
    /// Host candidate indices per query node index.
    cand: Vec<Vec<usize>>,
    /// Simple taint paths (edge-index sequences) starting at each query node.
    paths_from: Vec<Vec<Vec<usize>>>,
    hops_cache: std::cell::RefCell<HashMap<(usize, EventType), HashMap<usize, usize>>>,
}

impl<'a> Aligner<'a> {
    pub fn new(
        query: &'a AttackGraph,
        host: &'a AttackGraph,
        cfg: &'a AlignmentConfig,
        rules: &DeliveryRules,
    ) -> Result<Self> {
        if query.node_count() == 0 {
            return Err(Error::invalid_input("query graph is empty"));
        }
        if query.node_count() == 1 {
            return Err(Error::invalid_input(
                "single-node query graph carries no flows",
            ));
        }
        let qv = GraphView::build(query, rules);
        let hv = GraphView::build(host, rules);
        let qedges: Vec<QueryEdge> = query
            .edges()
            .iter()
            .map(|e| {
                let (ts, td) = taint_endpoints(e);
                QueryEdge {
                    src: qv.index[ts],
                    dst: qv.index[td],
                    event: e.event,
                }
            })
            .collect();
        let cand = (0..qv.ids.len())
            .map(|i| {
                let mut c: Vec<usize> = (0..hv.ids.len())
                    .filter(|&k| hv.attrs[k] == qv.attrs[i] && qv.degrees[i] <= hv.degrees[k])
                    .collect();
                c.sort_by_key(|&k| (hv.orders[k], hv.ids[k].clone()));
                c
            })
            .collect();
        let paths_from = (0..qv.ids.len())
            .map(|i| enumerate_paths(&qv, &qedges, i))
            .collect();
        Ok(Aligner {
            cfg,
            qv,
            hv,
            qedges,
            cand,
            paths_from,
            hops_cache: Default::default(),
        })
    }

    fn hops(&self, k: usize, ev: EventType) -> HashMap<usize, usize> {
        if let Some(h) = self.hops_cache.borrow().get(&(k, ev)) {
            return h.clone();
        }
        let h = self.hv.mhes_hops(k, ev, self.cfg.max_hops);
        self.hops_cache.borrow_mut().insert((k, ev), h.clone());
        h
    }

    /// Edge score of a query edge anchored at host node `k`: the best 1/hops
    /// over destination candidates `l` reachable by an MHES-realizing path
    /// k => l, 0 when none exists within the hop cap. Taking the best rather
    /// than the sum keeps the score in [0, 1], where a direct host edge
    /// scores 1.
    fn edge_score_at(&self, qe: &QueryEdge, k: usize) -> f64 {
        let hops = self.hops(k, qe.event);
        self.cand[qe.dst]
            .iter()
            .filter_map(|l| hops.get(l))
            .map(|&h| 1.0 / h as f64)
            .fold(0.0, f64::max)
    }

    /// Best edge score over all candidates of the edge's source.
    fn edge_score_best(&self, qe: &QueryEdge) -> f64 {
        self.cand[qe.src]
            .iter()
            .map(|&k| self.edge_score_at(qe, k))
            .fold(0.0, f64::max)
    }

    /// Mean edge score along one query path; the path's first edge is
    /// anchored at `k`, later edges at their own best source candidate.
    fn path_score_at(&self, path: &[usize], k: usize) -> f64 {
        let total: f64 = path
            .iter()
            .enumerate()
            .map(|(pos, &ei)| {
                let qe = &self.qedges[ei];
                if pos == 0 {
                    self.edge_score_at(qe, k)
                } else {
                    self.edge_score_best(qe)
                }
            })
            .sum();
        total / path.len() as f64
    }

    /// Node score of candidate `k` for query node `i`: the mean path score
    /// over all enumerated taint paths leaving `i`. A node without outgoing
    /// paths scores by the realizability of its incoming edges at `k`.
    fn node_score_at(&self, i: usize, k: usize) -> f64 {
        let paths = &self.paths_from[i];
        if !paths.is_empty() {
            let total: f64 = paths.iter().map(|p| self.path_score_at(p, k)).sum();
            return total / paths.len() as f64;
        }
        self.incoming_score(i, k)
    }

    /// Mean realizability at `k` of query node i's incoming taint edges.
    /// Scores sink nodes and breaks ties between equally-scored candidates.
    fn incoming_score(&self, i: usize, k: usize) -> f64 {
        let incoming: Vec<&QueryEdge> = self.qedges.iter().filter(|e| e.dst == i).collect();
        if incoming.is_empty() {
            return 0.0;
        }
        let total: f64 = incoming
            .iter()
            .map(|qe| {
                self.cand[qe.src]
                    .iter()
                    .filter_map(|&cj| self.hops(cj, qe.event).get(&k).copied())
                    .map(|h| 1.0 / h as f64)
                    .fold(0.0, f64::max)
            })
            .sum();
        total / incoming.len() as f64
    }

    /// Ordered query node pairs carrying a suspicion flow.
    fn query_flows(&self) -> Vec<(usize, usize)> {
        let n = self.qv.ids.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            let reach = self.qv.flow_set(i);
            for j in 0..n {
                if i != j && reach.contains(&j) {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Whether the flow (i, j) is preserved between the fixed host nodes.
    /// When the mapping collapses i and j onto one host node, the flow
    /// survives only through a host cycle a => a.
    fn flow_matched(&self, fixed: &[Option<usize>], i: usize, j: usize) -> bool {
        match (fixed[i], fixed[j]) {
            (Some(a), Some(b)) => self.hv.flow_reachable(a, b),
            _ => false,
        }
    }

    /// Greedy per-node fixing can land on a candidate that ties the best
    /// score yet strands flows. Revisits each node's equally-scored
    /// candidates and keeps a reassignment only when it strictly increases
    /// the number of matched flows; deterministic because candidates are
    /// visited in sorted order.
    fn repair_fixing(
        &self,
        fixed: &mut [Option<usize>],
        top_score: &[f64],
        pairs: &[(usize, usize)],
    ) {
        if pairs.is_empty() {
            return;
        }
        let count = |fixed: &[Option<usize>]| {
            pairs
                .iter()
                .filter(|&&(i, j)| self.flow_matched(fixed, i, j))
                .count()
        };
        let mut current = count(fixed);
        for _pass in 0..4 {
            let mut improved = false;
            for i in 0..fixed.len() {
                let Some(cur) = fixed[i] else { continue };
                if current == pairs.len() {
                    return;
                }
                for &k in &self.cand[i] {
                    if k == cur || self.node_score_at(i, k) != top_score[i] {
                        continue;
                    }
                    let prev = fixed[i];
                    fixed[i] = Some(k);
                    let m = count(fixed);
                    if m > current {
                        current = m;
                        improved = true;
                        break;
                    }
                    fixed[i] = prev;
                }
            }
            if !improved {
                break;
            }
        }
    }

    /// For small queries, searches all joint assignments of above-threshold
    /// candidates and keeps one only when it strictly beats the greedy
    /// fixing's matched-flow count. Greedy per-node fixing optimizes node
    /// scores independently and can strand flows that a jointly chosen
    /// assignment preserves; the exact search also makes small-query scores
    /// monotone in the host graph, so deleting host nodes never conjures a
    /// higher score. Bounded by query size and assignment-space volume;
    /// deterministic because candidates are visited in sorted order and
    /// replacement requires a strict improvement.
    fn exhaustive_fixing(&self, fixed: &mut [Option<usize>], pairs: &[(usize, usize)]) {
        const MAX_QUERY_NODES: usize = 8;
        const MAX_ASSIGNMENTS: u64 = 200_000;
        let n = self.qv.ids.len();
        if pairs.is_empty() || n > MAX_QUERY_NODES {
            return;
        }
        let eligible: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                self.cand[i]
                    .iter()
                    .copied()
                    .filter(|&k| self.node_score_at(i, k) > self.cfg.fix_threshold)
                    .collect()
            })
            .collect();
        let mut volume: u64 = 1;
        for set in &eligible {
            volume = volume.saturating_mul(set.len().max(1) as u64);
            if volume > MAX_ASSIGNMENTS {
                return;
            }
        }
        let count = |assignment: &[Option<usize>]| {
            pairs
                .iter()
                .filter(|&&(i, j)| self.flow_matched(assignment, i, j))
                .count()
        };
        let mut best = count(fixed);
        if best == pairs.len() {
            return;
        }
        let mut current: Vec<Option<usize>> = vec![None; n];
        let mut winner: Option<Vec<Option<usize>>> = None;
        fn search(
            i: usize,
            eligible: &[Vec<usize>],
            current: &mut Vec<Option<usize>>,
            count: &dyn Fn(&[Option<usize>]) -> usize,
            best: &mut usize,
            winner: &mut Option<Vec<Option<usize>>>,
        ) {
            if i == eligible.len() {
                let m = count(current);
                if m > *best {
                    *best = m;
                    *winner = Some(current.clone());
                }
                return;
            }
            if eligible[i].is_empty() {
                search(i + 1, eligible, current, count, best, winner);
                return;
            }
            for &k in &eligible[i] {
                current[i] = Some(k);
                search(i + 1, eligible, current, count, best, winner);
            }
            current[i] = None;
        }
        search(0, &eligible, &mut current, &count, &mut best, &mut winner);
        if let Some(w) = winner {
            fixed.copy_from_slice(&w);
        }
    }

    /// Runs the full alignment: candidate scoring, fixing, and flow scoring.
    pub fn run(&self) -> AlignmentResult {
        let n = self.qv.ids.len();
        let mut node_scores = Vec::new();
        let mut fixed_idx: Vec<Option<usize>> = vec![None; n];
        let mut top_score = vec![0.0f64; n];
        for i in 0..n {
            let mut best: Option<(usize, f64, f64, usize)> = None;
            for &k in &self.cand[i] {
                let s = self.node_score_at(i, k);
                node_scores.push(CandidateScore {
                    query: self.qv.ids[i].clone(),
                    host: self.hv.ids[k].clone(),
                    score: s,
                });
                if s <= self.cfg.fix_threshold {
                    continue;
                }
                // Equal scores are separated by incoming realizability, then
                // by order proximity; candidates are pre-sorted by
                // (order_index, id), so the last resort is the earliest host
                // node.
                let aux = self.incoming_score(i, k);
                let dist = self.hv.orders[k].abs_diff(self.qv.orders[i]);
                let wins = match best {
                    None => true,
                    Some((_, bs, ba, bd)) => {
                        s > bs || (s == bs && (aux > ba || (aux == ba && dist < bd)))
                    }
                };
                if wins {
                    best = Some((k, s, aux, dist));
                }
            }
            if let Some((k, s, _, _)) = best {
                fixed_idx[i] = Some(k);
                top_score[i] = s;
            }
        }
        let pairs = self.query_flows();
        self.repair_fixing(&mut fixed_idx, &top_score, &pairs);
        self.exhaustive_fixing(&mut fixed_idx, &pairs);

        let mut flows = Vec::new();
        let mut matched = 0usize;
        for &(i, j) in &pairs {
            let ok = self.flow_matched(&fixed_idx, i, j);
            if ok {
                matched += 1;
            }
            flows.push(FlowMatch {
                src: self.qv.ids[i].clone(),
                dst: self.qv.ids[j].clone(),
                matched: ok,
            });
        }
        let total = flows.len();
        let score = if total > 0 {
            matched as f64 / total as f64
        } else {
            0.0
        };
        let fixed = fixed_idx
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| (self.qv.ids[i].clone(), self.hv.ids[k].clone())))
            .collect();
        AlignmentResult {
            score,
            fixed,
            node_scores,
            matched_flows: matched,
            total_flows: total,
            flows,
        }
    }
}

/// Enumerates simple taint paths (edge-index sequences) starting at node
/// `start`, capped in length and per-endpoint count.
fn enumerate_paths(qv: &GraphView, qedges: &[QueryEdge], start: usize) -> Vec<Vec<usize>> {
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); qv.ids.len()];
    for (ei, qe) in qedges.iter().enumerate() {
        out_edges[qe.src].push(ei);
    }
    let mut paths = Vec::new();
    let mut per_end: HashMap<usize, usize> = HashMap::new();
    let mut visited = vec![false; qv.ids.len()];
    visited[start] = true;
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        node: usize,
        out_edges: &[Vec<usize>],
        qedges: &[QueryEdge],
        visited: &mut [bool],
        stack: &mut Vec<usize>,
        paths: &mut Vec<Vec<usize>>,
        per_end: &mut HashMap<usize, usize>,
    ) {
        if stack.len() >= PATH_LEN_CAP {
            return;
        }
        for &ei in &out_edges[node] {
            let next = qedges[ei].dst;
            if visited[next] {
                continue;
            }
            stack.push(ei);
            let count = per_end.entry(next).or_insert(0);
            if *count < PATH_COUNT_CAP {
                *count += 1;
                paths.push(stack.clone());
            }
            visited[next] = true;
            dfs(next, out_edges, qedges, visited, stack, paths, per_end);
            visited[next] = false;
            stack.pop();
        }
    }
    dfs(
        start,
        &out_edges,
        qedges,
        &mut visited,
        &mut stack,
        &mut paths,
        &mut per_end,
    );
    paths
}

/// Candidate host nodes for a query node: equal attribute and host degree at
/// least the query degree.
pub fn candidates(i: &Node, gq: &AttackGraph, gp: &AttackGraph) -> Vec<String> {
    let deg = gq.degree(&i.id);
    let mut out: Vec<&Node> = gp
        .nodes()
        .iter()
        .filter(|k| k.attr == i.attr && deg <= gp.degree(&k.id))
        .collect();
    out.sort_by_key(|k| (k.order_index, k.id.clone()));
    out.into_iter().map(|k| k.id.clone()).collect()
}

/// Checks whether a host path realizes a query edge with equivalent
/// semantics: the path is taint-connected, starts and ends on the query
/// edge's attributes, its last hop carries the query edge's event, and every
/// earlier hop is a delivery rule.
pub fn mhes_equivalent(
    query_edge: (EntityAttr, EventType, EntityAttr),
    path: &[Edge],
    gp: &AttackGraph,
    rules: &DeliveryRules,
) -> Result<bool> {
    if path.is_empty() {
        return Err(Error::invalid_input("path must have at least one hop"));
    }
    let (qi, qev, qj) = query_edge;
    let attr_of = |id: &str| -> Result<EntityAttr> {
        gp.node_by_id(id)
            .map(|n| n.attr)
            .ok_or_else(|| Error::invalid_input(format!("path references unknown node {id}")))
    };
    let mut hops = Vec::new();
    for e in path {
        let (ts, td) = taint_endpoints(e);
        hops.push((ts.to_string(), td.to_string(), e.event));
    }
    for w in hops.windows(2) {
        if w[0].1 != w[1].0 {
            return Err(Error::invalid_input("path is not taint-connected"));
        }
    }
    let first_src = attr_of(&hops[0].0)?;
    let last = hops.last().unwrap();
    let last_sink = attr_of(&last.1)?;
    if first_src != qi || last_sink != qj || last.2 != qev {
        return Ok(false);
    }
    for (ts, td, ev) in &hops[..hops.len() - 1] {
        if !rules.admits(attr_of(ts)?, *ev, attr_of(td)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn build_aligner<'a>(
    gq: &'a AttackGraph,
    gp: &'a AttackGraph,
    cfg: &'a AlignmentConfig,
) -> Result<Aligner<'a>> {
    Aligner::new(gq, gp, cfg, &DeliveryRules::default())
}

/// Edge score of query edge `qe` anchored at host node `k`: the best 1/hops
/// realization over destination candidates.
pub fn edge_score(
    qe: &Edge,
    k: &str,
    gq: &AttackGraph,
    gp: &AttackGraph,
    cfg: &AlignmentConfig,
) -> Result<f64> {
    let a = build_aligner(gq, gp, cfg)?;
    let (ts, td) = taint_endpoints(qe);
    let qe = QueryEdge {
        src: a.qv.index[ts],
        dst: a.qv.index[td],
        event: qe.event,
    };
    let k = *a
        .hv
        .index
        .get(k)
        .ok_or_else(|| Error::invalid_input(format!("unknown host node {k}")))?;
    Ok(a.edge_score_at(&qe, k))
}

/// Mean per-path score over all query paths i => j, the first edge anchored
/// at candidate `k`.
pub fn path_score(
    i: &str,
    j: &str,
    k: &str,
    gq: &AttackGraph,
    gp: &AttackGraph,
    cfg: &AlignmentConfig,
) -> Result<f64> {
    let a = build_aligner(gq, gp, cfg)?;
    let (ii, jj) = (a.qv.index[i], a.qv.index[j]);
    let k = a.hv.index[k];
    let paths: Vec<&Vec<usize>> = a.paths_from[ii]
        .iter()
        .filter(|p| a.qedges[*p.last().unwrap()].dst == jj)
        .collect();
    if paths.is_empty() {
        return Ok(0.0);
    }
    Ok(paths.iter().map(|p| a.path_score_at(p, k)).sum::<f64>() / paths.len() as f64)
}

/// Node score of host candidate `k` for query node `i`.
pub fn node_score(
    i: &str,
    k: &str,
    gq: &AttackGraph,
    gp: &AttackGraph,
    cfg: &AlignmentConfig,
) -> Result<f64> {
    let a = build_aligner(gq, gp, cfg)?;
    Ok(a.node_score_at(a.qv.index[i], a.hv.index[k]))
}

/// Aligns the query graph `gq` against the host graph `gp`.
pub fn align(gq: &AttackGraph, gp: &AttackGraph, cfg: &AlignmentConfig) -> Result<AlignmentResult> {
    Ok(build_aligner(gq, gp, cfg)?.run())
}

/// Technique-level interpretation: every template whose alignment score
/// against `afg` exceeds the interpretation threshold, best score per
/// technique id, sorted by descending score then id.
pub fn interpret(
    afg: &AttackGraph,
    templates: &[AtgTemplate],
    cfg: &AlignmentConfig,
) -> Result<Vec<(String, f64)>> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for t in templates {
        let r = align(&t.graph, afg, cfg)?;
        if r.score > cfg.interpret_threshold {
            let entry = best.entry(t.technique_id.as_str()).or_insert(r.score);
            if r.score > *entry {
                *entry = r.score;
            }
        }
    }
    let mut out: Vec<(String, f64)> = best
        .into_iter()
        .map(|(id, s)| (id.to_string(), s))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests;
