//! Heterogeneous attack-graph data model.
//!
//! Nodes carry exactly one entity attribute, edges carry a typed, globally
//! ordered system event. The node order `pi` is the chronological order
//! induced by edge sequence numbers; it fixes the sequence encoding used by
//! the forecast model. Node labels are display-only; no algorithm in this
//! crate reads them.

mod dot;
mod encode;
mod io;

pub use dot::export_dot;
pub use encode::{from_sequence, to_sequence, SequenceEncoding};
pub use io::{graph_from_json, graph_to_json, read_graph, write_graph};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

/// Number of entity attributes (node-type symbols run 0..=K).
pub const ATTR_COUNT: usize = 7;
/// Reserved node code for the sequence terminator (K + 1). Never stored on
/// graph nodes.
pub const TERMINATOR_CODE: u8 = 7;
/// Number of event types (edge codes run 1..=P, 0 means "no edge").
pub const EVENT_COUNT: usize = 6;

/// Entity attribute of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityAttr {
    /// Sensitive files, e.g. `/etc/passwd`.
    F0,
    /// Library files, e.g. `*.dll`, `*.so`.
    F1,
    /// Executable files and scripts, e.g. `*.exe`, `*.vbs`.
    F2,
    /// Other files.
    F3,
    /// Registry entries, e.g. `HKLM`, `HKCU`.
    FR,
    /// Processes.
    P,
    /// Sockets: IP addresses, domains, URLs.
    S,
}

/// Coarse entity class used by annotation inputs and delivery rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityClass {
    File,
    Process,
    Socket,
}

impl EntityAttr {
    pub const ALL: [EntityAttr; ATTR_COUNT] = [
        EntityAttr::F0,
        EntityAttr::F1,
        EntityAttr::F2,
        EntityAttr::F3,
        EntityAttr::FR,
        EntityAttr::P,
        EntityAttr::S,
    ];

    /// Node-type symbol in 0..=6.
    pub fn code(self) -> u8 {
        match self {
            EntityAttr::F0 => 0,
            EntityAttr::F1 => 1,
            EntityAttr::F2 => 2,
            EntityAttr::F3 => 3,
            EntityAttr::FR => 4,
            EntityAttr::P => 5,
            EntityAttr::S => 6,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::MalformedSequence(format!("node code {code} out of range")))
    }

    /// File attributes include the registry: registry entries participate in
    /// the file rows of the event table.
    pub fn is_file(self) -> bool {
        matches!(
            self,
            EntityAttr::F0 | EntityAttr::F1 | EntityAttr::F2 | EntityAttr::F3 | EntityAttr::FR
        )
    }

    pub fn class(self) -> EntityClass {
        match self {
            EntityAttr::P => EntityClass::Process,
            EntityAttr::S => EntityClass::Socket,
            _ => EntityClass::File,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EntityAttr::F0 => "F0",
            EntityAttr::F1 => "F1",
            EntityAttr::F2 => "F2",
            EntityAttr::F3 => "F3",
            EntityAttr::FR => "FR",
            EntityAttr::P => "P",
            EntityAttr::S => "S",
        }
    }
}

impl fmt::Display for EntityAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl std::str::FromStr for EntityAttr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.symbol() == s)
            .ok_or_else(|| Error::invalid_input(format!("unknown entity attribute {s:?}")))
    }
}

/// System event type of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Write,
    Execute,
    Read,
    Send,
    Receive,
    ForkClone,
}

impl EventType {
    pub const ALL: [EventType; EVENT_COUNT] = [
        EventType::Write,
        EventType::Execute,
        EventType::Read,
        EventType::Send,
        EventType::Receive,
        EventType::ForkClone,
    ];

    /// Adjacency symbol in 1..=6. Code 0 is reserved for "no edge".
    pub fn code(self) -> u8 {
        match self {
            EventType::Write => 1,
            EventType::Execute => 2,
            EventType::Read => 3,
            EventType::Send => 4,
            EventType::Receive => 5,
            EventType::ForkClone => 6,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1..=6 => Ok(Self::ALL[(code - 1) as usize]),
            _ => Err(Error::MalformedSequence(format!(
                "edge code {code} out of range"
            ))),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EventType::Write => "Write",
            EventType::Execute => "Execute",
            EventType::Read => "Read",
            EventType::Send => "Send",
            EventType::Receive => "Receive",
            EventType::ForkClone => "ForkClone",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl std::str::FromStr for EventType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.symbol() == s)
            .ok_or_else(|| Error::invalid_input(format!("unknown event type {s:?}")))
    }
}

/// Checks a (subject, event, object) triple against the event table:
/// Write P->F*, Execute P->F*, Read F*->P, Send P->S, Receive S->P,
/// ForkClone P->P, where F* is any of F0..F3 or FR.
pub fn validate_edge(subject: EntityAttr, event: EventType, object: EntityAttr) -> bool {
    use EntityAttr::{P, S};
    match event {
        EventType::Write | EventType::Execute => subject == P && object.is_file(),
        EventType::Read => subject.is_file() && object == P,
        EventType::Send => subject == P && object == S,
        EventType::Receive => subject == S && object == P,
        EventType::ForkClone => subject == P && object == P,
    }
}

fn socket_regexes() -> &'static (regex::Regex, regex::Regex, regex::Regex) {
    static RE: OnceLock<(regex::Regex, regex::Regex, regex::Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        let url = regex::Regex::new(r"(?i)^(https?|ftp|tcp|udp)://").unwrap();
        let ipv4 =
            regex::Regex::new(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})(:\d+)?$").unwrap();
        let domain = regex::Regex::new(r"(?i)^[a-z0-9][a-z0-9-]*(\.[a-z0-9][a-z0-9-]*)+$").unwrap();
        (url, ipv4, domain)
    })
}

const SENSITIVE_PATHS: &[&str] = &[
    "/etc/passwd",
    "/etc/shadow",
    "/etc/sudoers",
    "/etc/hosts",
    "/etc/crontab",
    "sam",
    "system32\\config",
    "ntds.dit",
    "id_rsa",
    ".ssh",
    "wallet.dat",
    "lsass",
    "secring",
    "credentials",
    "/proc/kcore",
];

const LIBRARY_EXTS: &[&str] = &[".dll", ".so", ".dylib", ".ocx", ".sys", ".drv"];

const EXECUTABLE_EXTS: &[&str] = &[
    ".exe", ".vbs", ".bat", ".cmd", ".ps1", ".sh", ".js", ".jar", ".scr", ".com", ".msi", ".py",
    ".pl", ".hta", ".elf", ".bin",
];

const REGISTRY_ROOTS: &[&str] = &["hkcr", "hklm", "hkcu", "hku", "hkcc", "hkey_"];

const TLDS: &[&str] = &[
    "com", "net", "org", "io", "info", "biz", "edu", "gov", "mil", "ru", "cn", "uk", "de", "fr",
    "co", "cc", "xyz", "top", "onion", "local",
];

/// Subdivides an entity name into its attribute. Classification order is
/// FR, S, F0, F1, F2, P, F3; the first match wins.
pub fn classify_entity(name: &str) -> Result<EntityAttr> {
    if name.is_empty() {
        return Err(Error::invalid_input("entity name must be non-empty"));
    }
    let lower = name.to_ascii_lowercase();
    if REGISTRY_ROOTS.iter().any(|r| lower.starts_with(r)) {
        return Ok(EntityAttr::FR);
    }
    let (url, ipv4, domain) = socket_regexes();
    let tld = lower.rsplit('.').next().unwrap_or("");
    if url.is_match(name) || ipv4.is_match(name) || (domain.is_match(name) && TLDS.contains(&tld)) {
        return Ok(EntityAttr::S);
    }
    if SENSITIVE_PATHS.iter().any(|p| lower.contains(p)) {
        return Ok(EntityAttr::F0);
    }
    if LIBRARY_EXTS.iter().any(|e| lower.ends_with(e)) {
        return Ok(EntityAttr::F1);
    }
    if EXECUTABLE_EXTS.iter().any(|e| lower.ends_with(e)) {
        return Ok(EntityAttr::F2);
    }
    // Bare tokens without path separators or extensions read as processes.
    if !lower.contains(['/', '\\', '.']) {
        return Ok(EntityAttr::P);
    }
    Ok(EntityAttr::F3)
}

/// Role a graph plays in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum GraphRole {
    ASG,
    APG,
    AFG,
    ATG,
}

impl fmt::Display for GraphRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GraphRole::ASG => "ASG",
            GraphRole::APG => "APG",
            GraphRole::AFG => "AFG",
            GraphRole::ATG => "ATG",
        };
        f.write_str(s)
    }
}

/// An attributed node. `label` is display-only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub attr: EntityAttr,
    pub order_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Set on elements materialized by the forecast model.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forecast: bool,
}

impl Node {
    pub fn new(id: impl Into<String>, attr: EntityAttr, order_index: usize) -> Self {
        Node {
            id: id.into(),
            attr,
            order_index,
            label: None,
            forecast: false,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// A typed, timestamped edge. `seq` is the global temporal order of the event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub event: EventType,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forecast: bool,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, event: EventType, seq: u64) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            event,
            seq,
            forecast: false,
        }
    }
}

/// An attack graph: attributed nodes, typed timestamped edges, and the
/// chronological node order `pi` recorded as `order_index` on each node.
///
/// Immutable after construction; all operations on it are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGraph {
    pub role: GraphRole,
    pub provenance: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl AttackGraph {
    /// Builds and validates a graph. Nodes are stored sorted by `order_index`,
    /// edges by `seq`.
    pub fn new(
        role: GraphRole,
        provenance: impl Into<String>,
        mut nodes: Vec<Node>,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        nodes.sort_by_key(|n| n.order_index);
        edges.sort_by_key(|e| e.seq);
        let g = AttackGraph {
            role,
            provenance: provenance.into(),
            nodes,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut ids = HashSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id.as_str()) {
                return Err(Error::invalid_graph(format!("duplicate node id {}", node.id)));
            }
        }
        let orders: HashSet<usize> = self.nodes.iter().map(|x| x.order_index).collect();
        if orders.len() != n || self.nodes.iter().any(|x| x.order_index >= n) {
            return Err(Error::invalid_graph(
                "order_index values must be a permutation of 0..n",
            ));
        }
        let by_id: HashMap<&str, &Node> = self.nodes.iter().map(|x| (x.id.as_str(), x)).collect();
        let mut seqs = HashSet::new();
        let mut keys = HashSet::new();
        for e in &self.edges {
            let src = by_id
                .get(e.src.as_str())
                .ok_or_else(|| Error::invalid_graph(format!("edge references unknown node {}", e.src)))?;
            let dst = by_id
                .get(e.dst.as_str())
                .ok_or_else(|| Error::invalid_graph(format!("edge references unknown node {}", e.dst)))?;
            if e.src == e.dst {
                return Err(Error::invalid_graph(format!("self-loop on node {}", e.src)));
            }
            if !seqs.insert(e.seq) {
                return Err(Error::invalid_graph(format!("duplicate edge seq {}", e.seq)));
            }
            if !keys.insert((e.src.as_str(), e.dst.as_str(), e.event, e.seq)) {
                return Err(Error::invalid_graph("duplicate edge tuple"));
            }
            if !validate_edge(src.attr, e.event, dst.attr) {
                return Err(Error::invalid_graph(format!(
                    "edge ({}, {}, {}) violates the event table",
                    src.attr, e.event, dst.attr
                )));
            }
        }
        // pi-consistency: scanning edges by seq, newly introduced endpoints
        // must appear in increasing order_index.
        let mut seen: HashSet<&str> = HashSet::new();
        let mut last_intro: Option<usize> = None;
        for e in &self.edges {
            let mut endpoints = [by_id[e.src.as_str()], by_id[e.dst.as_str()]];
            endpoints.sort_by_key(|x| x.order_index);
            for node in endpoints {
                if seen.insert(node.id.as_str()) {
                    if let Some(prev) = last_intro {
                        if node.order_index <= prev {
                            return Err(Error::invalid_graph(format!(
                                "node order is inconsistent with edge chronology at node {}",
                                node.id
                            )));
                        }
                    }
                    last_intro = Some(node.order_index);
                }
            }
        }
        Ok(())
    }

    /// Rebuilds a graph after structural edits: recomputes `order_index` from
    /// edge chronology (first appearance, subject before object) and appends
    /// isolated nodes in their previous relative order.
    pub fn reindexed(
        role: GraphRole,
        provenance: impl Into<String>,
        mut nodes: Vec<Node>,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        edges.sort_by_key(|e| e.seq);
        nodes.sort_by_key(|n| n.order_index);
        let mut order: HashMap<String, usize> = HashMap::new();
        for e in &edges {
            for id in [&e.src, &e.dst] {
                if !order.contains_key(id.as_str()) {
                    let next = order.len();
                    order.insert(id.clone(), next);
                }
            }
        }
        for node in &nodes {
            if !order.contains_key(node.id.as_str()) {
                let next = order.len();
                order.insert(node.id.clone(), next);
            }
        }
        for node in &mut nodes {
            node.order_index = order[node.id.as_str()];
        }
        AttackGraph::new(role, provenance, nodes, edges)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_by_id(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Nodes in `pi` order (the storage order).
    pub fn nodes_in_order(&self) -> &[Node] {
        &self.nodes
    }

    /// In-plus-out degree of a node.
    pub fn degree(&self, id: &str) -> usize {
        self.edges
            .iter()
            .filter(|e| e.src == id || e.dst == id)
            .count()
    }

    pub fn max_seq(&self) -> u64 {
        self.edges.iter().map(|e| e.seq).max().unwrap_or(0)
    }

    pub fn with_role(mut self, role: GraphRole) -> Self {
        self.role = role;
        self
    }

    /// Strips labels (used by name-blindness checks; algorithms never read
    /// labels in the first place).
    pub fn without_labels(mut self) -> Self {
        for n in &mut self.nodes {
            n.label = None;
        }
        self
    }
}
