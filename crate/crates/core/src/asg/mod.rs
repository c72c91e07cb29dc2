//! Attack scene graph construction from pre-annotated report sentences.
//!
//! Upstream NLP (sentence filtering, NER, anaphora resolution) is assumed
//! done; input is a list of [`AnnotatedSentence`] carrying tokens with
//! part-of-speech tags, a dependency tree, and coarse-typed entity spans.
//! The builder subdivides entity attributes from the raw names, extracts
//! directed interaction triples through the dependency tree, merges
//! co-referent entities by string similarity, and assembles the result into
//! an ASG when enough distinct entities survive.

use crate::error::{Error, Result};
use crate::graph::{
    classify_entity, validate_edge, AttackGraph, Edge, EntityAttr, EntityClass, EventType,
    GraphRole, Node,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Minimum graph size worth keeping, per the corpus construction rule.
pub const DEFAULT_MIN_NODES: usize = 5;

/// Minimum normalized similarity for a nearest-neighbor verb match.
const VERB_MATCH_FLOOR: f64 = 0.5;

/// Hops climbed through the dependency tree when looking for the verb an
/// entity attaches to.
const VERB_CLIMB_CAP: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Part-of-speech tag; verbs are recognized as `VERB` or `VB*`.
    pub pos: String,
    /// Dependency head token index; `None` marks the root.
    pub head: Option<usize>,
    /// Dependency relation to the head.
    pub deprel: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntitySpan {
    /// Token range `start..end`.
    pub start: usize,
    pub end: usize,
    pub name: String,
    pub class: EntityClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub index: usize,
    pub tokens: Vec<Token>,
    pub spans: Vec<EntitySpan>,
}

impl AnnotatedSentence {
    /// Checks the structural invariants: head indices form a tree over the
    /// tokens and entity spans are in-range and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                Some(h) if h >= n => {
                    return Err(Error::invalid_input(format!(
                        "sentence {}: token {i} head {h} out of range",
                        self.index
                    )));
                }
                Some(h) if h == i => {
                    return Err(Error::invalid_input(format!(
                        "sentence {}: token {i} is its own head",
                        self.index
                    )));
                }
                _ => {}
            }
        }
        // A tree has no cycles: walking heads from any token must terminate.
        for start in 0..n {
            let mut cur = start;
            let mut hops = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                hops += 1;
                if hops > n {
                    return Err(Error::invalid_input(format!(
                        "sentence {}: dependency heads contain a cycle",
                        self.index
                    )));
                }
            }
        }
        let mut spans: Vec<&EntitySpan> = self.spans.iter().collect();
        spans.sort_by_key(|s| s.start);
        for s in &spans {
            if s.start >= s.end || s.end > n {
                return Err(Error::invalid_input(format!(
                    "sentence {}: span {:?} out of range",
                    self.index, s.name
                )));
            }
        }
        for w in spans.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::invalid_input(format!(
                    "sentence {}: spans {:?} and {:?} overlap",
                    self.index, w[0].name, w[1].name
                )));
            }
        }
        Ok(())
    }
}

/// Parses a report file: a JSON array of annotated sentences.
pub fn parse_report(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let sentences: Vec<AnnotatedSentence> = serde_json::from_str(text)?;
    Ok(sentences)
}

/// Subdivides a coarse span class into an entity attribute using the name.
/// The name-based classifier decides among the file subtypes; a name that
/// contradicts the annotated class falls back to the class default.
pub fn span_attr(span: &EntitySpan) -> Result<EntityAttr> {
    let by_name = classify_entity(&span.name)?;
    Ok(match span.class {
        EntityClass::Process => EntityAttr::P,
        EntityClass::Socket => EntityAttr::S,
        EntityClass::File if by_name.is_file() => by_name,
        EntityClass::File => EntityAttr::F3,
    })
}

/// The two-class verb lexicon plus general event-verb entries.
#[derive(Debug, Clone)]
pub struct VerbLexicon {
    entries: Vec<(String, EventType)>,
}

impl VerbLexicon {
    /// Parses `lemma<TAB>EventType` lines; `#` comments and blanks skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((verb, event)) = line.split_once('\t') else {
                return Err(Error::invalid_input(format!(
                    "verb lexicon line {}: expected `lemma<TAB>EventType`",
                    lineno + 1
                )));
            };
            entries.push((verb.trim().to_ascii_lowercase(), event.trim().parse()?));
        }
        if entries.is_empty() {
            return Err(Error::invalid_input("verb lexicon contains no entries"));
        }
        Ok(VerbLexicon { entries })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        VerbLexicon::parse(include_str!("../../data/verbs.tsv")).expect("bundled lexicon parses")
    }

    pub fn entries(&self) -> &[(String, EventType)] {
        &self.entries
    }

    /// Nearest-neighbor lookup restricted to the allowed events. Exact
    /// matches win; otherwise the closest entry by normalized edit
    /// similarity is used, provided it clears the match floor.
    pub fn lookup(&self, verb: &str, allowed: &[EventType]) -> Option<EventType> {
        let verb = verb.to_ascii_lowercase();
        let mut best: Option<(f64, EventType)> = None;
        for (lemma, event) in &self.entries {
            if !allowed.contains(event) {
                continue;
            }
            if *lemma == verb {
                return Some(*event);
            }
            let s = name_similarity(lemma, &verb);
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, *event));
            }
        }
        best.filter(|&(s, _)| s >= VERB_MATCH_FLOOR).map(|(_, e)| e)
    }
}

/// Resolves the ambiguous file-process interaction: Read or Execute by
/// nearest-neighbor lookup over the two verb classes; unknown verbs default
/// to Read.
pub fn disambiguate_read_execute(verb: &str, lexicon: &VerbLexicon) -> EventType {
    lexicon
        .lookup(verb, &[EventType::Read, EventType::Execute])
        .unwrap_or(EventType::Read)
}

/// One entity occurrence inside a triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub name: String,
    pub attr: EntityAttr,
    /// Index of the sentence the mention came from.
    pub sentence: usize,
}

/// A directed interaction, already in stored edge direction: the subject and
/// object satisfy the event table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityMention,
    pub verb: String,
    pub object: EntityMention,
    pub event: EventType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Subject,
    PassiveSubject,
    Object,
}

fn role_of(deprel: &str) -> Option<Role> {
    match deprel {
        "nsubj" | "csubj" => Some(Role::Subject),
        "nsubjpass" | "nsubj:pass" | "csubjpass" | "csubj:pass" => Some(Role::PassiveSubject),
        "obj" | "dobj" | "iobj" | "obl" | "obl:agent" | "agent" | "nmod" | "pobj" => {
            Some(Role::Object)
        }
        _ => None,
    }
}

fn is_verb(pos: &str) -> bool {
    pos == "VERB" || pos.starts_with("VB")
}

/// The token an entity span hangs from: the first token in the span whose
/// head lies outside it.
fn span_head(s: &AnnotatedSentence, span: &EntitySpan) -> Option<usize> {
    (span.start..span.end)
        .find(|&i| match s.tokens[i].head {
            None => true,
            Some(h) => h < span.start || h >= span.end,
        })
}

/// Climbs from the span head to the governing verb, keeping the span head's
/// own relation as the entity's role.
fn attach_to_verb(s: &AnnotatedSentence, span: &EntitySpan) -> Option<(usize, Role)> {
    let head = span_head(s, span)?;
    let role = role_of(&s.tokens[head].deprel)?;
    let mut cur = head;
    for _ in 0..VERB_CLIMB_CAP {
        let h = s.tokens[cur].head?;
        if is_verb(&s.tokens[h].pos) {
            return Some((h, role));
        }
        cur = h;
    }
    None
}

/// Events the actor can semantically perform on the acted-on entity, in
/// actor-centric direction.
fn candidate_events(actor: EntityAttr, acted: EntityAttr) -> Vec<EventType> {
    use EntityAttr::{P, S};
    if actor == P && acted.is_file() {
        vec![EventType::Write, EventType::Read, EventType::Execute]
    } else if actor.is_file() && acted == P {
        vec![EventType::Read, EventType::Execute]
    } else if actor == P && acted == S {
        vec![EventType::Send, EventType::Receive]
    } else if actor == S && acted == P {
        vec![EventType::Receive, EventType::Send]
    } else if actor == P && acted == P {
        vec![EventType::ForkClone]
    } else {
        Vec::new()
    }
}

/// Maps a chosen event and actor/acted pair onto the stored edge direction:
/// Read takes the file as subject, Receive the socket, everything else the
/// process (ForkClone keeps the actor as parent).
fn stored_direction(
    event: EventType,
    actor: EntityMention,
    acted: EntityMention,
) -> (EntityMention, EntityMention) {
    let subject_first = match event {
        EventType::Read => actor.attr.is_file(),
        EventType::Receive => actor.attr == EntityAttr::S,
        EventType::Write | EventType::Execute | EventType::Send => actor.attr == EntityAttr::P,
        EventType::ForkClone => true,
    };
    if subject_first {
        (actor, acted)
    } else {
        (acted, actor)
    }
}

/// Extracts directed triples from every sentence. Malformed sentences are
/// skipped with a diagnostic; entity pairs with no admissible event, no
/// shared verb, or an unknown verb are silently discarded.
pub fn extract_triples(
    sentences: &[AnnotatedSentence],
    lexicon: &VerbLexicon,
) -> (Vec<Triple>, Vec<String>) {
    let per_sentence: Vec<(Vec<Triple>, Vec<String>)> = sentences
        .par_iter()
        .map(|s| {
            let mut diagnostics = Vec::new();
            if let Err(e) = s.validate() {
                diagnostics.push(format!("skipped sentence {}: {e}", s.index));
                return (Vec::new(), diagnostics);
            }
            let mut triples = Vec::new();
            let mut attached = Vec::new();
            for span in &s.spans {
                match span_attr(span) {
                    Ok(attr) => attached.push((span, attr, attach_to_verb(s, span))),
                    Err(e) => diagnostics.push(format!("sentence {}: {e}", s.index)),
                }
            }
            for (ai, a) in attached.iter().enumerate() {
                for b in attached.iter().skip(ai + 1) {
                    let (Some((va, ra)), Some((vb, rb))) = (a.2, b.2) else {
                        continue;
                    };
                    if va != vb {
                        continue;
                    }
                    let (actor, acted) = match (ra, rb) {
                        (Role::Subject, Role::Object) => (a, b),
                        (Role::Object, Role::Subject) => (b, a),
                        (Role::PassiveSubject, Role::Object) => (b, a),
                        (Role::Object, Role::PassiveSubject) => (a, b),
                        _ => continue,
                    };
                    let candidates = candidate_events(actor.1, acted.1);
                    if candidates.is_empty() {
                        continue;
                    }
                    let verb = s.tokens[va].text.to_ascii_lowercase();
                    let event = if candidates == [EventType::Read, EventType::Execute] {
                        disambiguate_read_execute(&verb, lexicon)
                    } else {
                        match lexicon.lookup(&verb, &candidates) {
                            Some(ev) => ev,
                            None => continue,
                        }
                    };
                    let mention = |x: &(&EntitySpan, EntityAttr, _)| EntityMention {
                        name: x.0.name.clone(),
                        attr: x.1,
                        sentence: s.index,
                    };
                    let (subject, object) =
                        stored_direction(event, mention(actor), mention(acted));
                    debug_assert!(validate_edge(subject.attr, event, object.attr));
                    triples.push(Triple {
                        subject,
                        verb,
                        object,
                        event,
                    });
                }
            }
            (triples, diagnostics)
        })
        .collect();
    let mut triples = Vec::new();
    let mut diagnostics = Vec::new();
    for (t, d) in per_sentence {
        triples.extend(t);
        diagnostics.extend(d);
    }
    (triples, diagnostics)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorefConfig {
    /// Index-distance weight W_d.
    pub w_d: f64,
    /// Type-distance weight W_t.
    pub w_t: f64,
    pub threshold: f64,
}

impl Default for CorefConfig {
    fn default() -> Self {
        CorefConfig {
            w_d: 10.0,
            w_t: 2.0,
            threshold: 0.75,
        }
    }
}

/// An entity reference for co-reference scoring: name, position in the
/// triple list, and attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRef {
    pub name: String,
    pub attr: EntityAttr,
    pub index: usize,
}

/// Normalized string similarity: 1 − edit distance / max length.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Co-reference score: name similarity minus index- and type-distance
/// penalties. Type distance is 0 for equal attributes and 1 otherwise.
pub fn coref_similarity(n: &EntityRef, m: &EntityRef, cfg: &CorefConfig) -> f64 {
    let type_dist = f64::from(n.attr != m.attr);
    name_similarity(&n.name, &m.name)
        - (n.index as f64 - m.index as f64).abs() / cfg.w_d
        - type_dist / cfg.w_t
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            self.0[x] = self.find(self.0[x]);
        }
        self.0[x]
    }

    /// Merges two clusters; the smaller (earlier) root wins.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        let keep = ra.min(rb);
        self.0[ra] = keep;
        self.0[rb] = keep;
    }
}

/// Occurrences in triple order: subject then object of each triple.
fn occurrences(triples: &[Triple]) -> Vec<EntityRef> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    for (i, t) in triples.iter().enumerate() {
        for m in [&t.subject, &t.object] {
            out.push(EntityRef {
                name: m.name.clone(),
                attr: m.attr,
                index: i,
            });
        }
    }
    out
}

fn cluster_occurrences(refs: &[EntityRef], cfg: &CorefConfig) -> Vec<usize> {
    let mut uf = UnionFind::new(refs.len());
    for j in 1..refs.len() {
        for i in 0..j {
            if refs[i].attr.class() == refs[j].attr.class()
                && coref_similarity(&refs[i], &refs[j], cfg) > cfg.threshold
            {
                uf.union(i, j);
            }
        }
    }
    (0..refs.len()).map(|i| uf.find(i)).collect()
}

/// Unifies co-referent entities: each occurrence is compared against all
/// earlier occurrences of the same entity class and merged transitively;
/// every cluster is renamed to its earliest member. Clusters that end up
/// sharing a name get a `#k` disambiguator.
pub fn merge_coreferent(triples: &[Triple], cfg: &CorefConfig) -> Vec<Triple> {
    let refs = occurrences(triples);
    let roots = cluster_occurrences(&refs, cfg);
    // Name each cluster after its earliest occurrence, disambiguating
    // clashes between distinct clusters in first-appearance order.
    let mut names: HashMap<usize, (String, EntityAttr)> = HashMap::new();
    let mut taken: HashMap<String, usize> = HashMap::new();
    for (i, &root) in roots.iter().enumerate() {
        if root == i {
            let mut name = refs[i].name.clone();
            let n = taken.entry(name.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                name = format!("{name}#{n}");
            }
            names.insert(i, (name, refs[i].attr));
        }
    }
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let rename = |m: &EntityMention, occ: usize| {
                let (name, attr) = &names[&roots[occ]];
                EntityMention {
                    name: name.clone(),
                    attr: *attr,
                    sentence: m.sentence,
                }
            };
            Triple {
                subject: rename(&t.subject, 2 * i),
                verb: t.verb.clone(),
                object: rename(&t.object, 2 * i + 1),
                event: t.event,
            }
        })
        .collect()
}

/// Assembles merged triples into an ASG: unified entities become nodes,
/// triples become edges in list order. Returns `None` below `min_nodes`.
pub fn assemble_graph(
    triples: &[Triple],
    min_nodes: usize,
    provenance: &str,
) -> Result<Option<AttackGraph>> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut seen: HashMap<String, EntityAttr> = HashMap::new();
    for t in triples {
        for m in [&t.subject, &t.object] {
            match seen.get(&m.name) {
                None => {
                    seen.insert(m.name.clone(), m.attr);
                    nodes.push(Node::new(m.name.clone(), m.attr, nodes.len()));
                }
                Some(&attr) if attr != m.attr => {
                    return Err(Error::invalid_input(format!(
                        "entity {:?} appears with attributes {attr:?} and {:?}",
                        m.name, m.attr
                    )));
                }
                Some(_) => {}
            }
        }
    }
    if nodes.len() < min_nodes {
        return Ok(None);
    }
    let edges: Vec<Edge> = triples
        .iter()
        .enumerate()
        .map(|(i, t)| Edge::new(t.subject.name.clone(), t.object.name.clone(), t.event, i as u64))
        .collect();
    Ok(Some(AttackGraph::reindexed(
        GraphRole::ASG,
        provenance,
        nodes,
        edges,
    )?))
}

#[derive(Debug)]
pub struct AsgBuild {
    pub graph: Option<AttackGraph>,
    pub triples: Vec<Triple>,
    pub diagnostics: Vec<String>,
}

/// Full pipeline: extract, merge, assemble.
pub fn build_asg(
    sentences: &[AnnotatedSentence],
    lexicon: &VerbLexicon,
    coref: &CorefConfig,
    min_nodes: usize,
    provenance: &str,
) -> Result<AsgBuild> {
    let (raw, mut diagnostics) = extract_triples(sentences, lexicon);
    let triples = merge_coreferent(&raw, coref);
    let graph = assemble_graph(&triples, min_nodes, provenance)?;
    if graph.is_none() {
        diagnostics.push(format!(
            "discarded: fewer than {min_nodes} unified entities"
        ));
    }
    Ok(AsgBuild {
        graph,
        triples,
        diagnostics,
    })
}
