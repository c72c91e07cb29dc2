//! Suspicious-semantic delivery rules.
//!
//! The rule set describes which events carry suspicion between entity
//! classes, evaluated on taint direction: file -> process for Read and Load,
//! process -> file for Write, socket -> process for Receive, process ->
//! socket for Send, parent -> child for Fork/Clone. Load is an alias matched
//! by Read edges whose file endpoint is a library file.

use crate::error::{Error, Result};
use crate::graph::{EntityAttr, EntityClass, EventType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleEvent {
    Event(EventType),
    /// Library load, realized as a Read of an F1 file.
    Load,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRule {
    pub source: EntityClass,
    pub event: RuleEvent,
    pub sink: EntityClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRules(Vec<DeliveryRule>);

impl Default for DeliveryRules {
    fn default() -> Self {
        use EntityClass::*;
        use EventType::*;
        DeliveryRules(vec![
            DeliveryRule {
                source: File,
                event: RuleEvent::Event(Read),
                sink: Process,
            },
            DeliveryRule {
                source: Process,
                event: RuleEvent::Event(Write),
                sink: File,
            },
            DeliveryRule {
                source: File,
                event: RuleEvent::Load,
                sink: Process,
            },
            DeliveryRule {
                source: Socket,
                event: RuleEvent::Event(Receive),
                sink: Process,
            },
            DeliveryRule {
                source: Process,
                event: RuleEvent::Event(Send),
                sink: Socket,
            },
            DeliveryRule {
                source: Process,
                event: RuleEvent::Event(ForkClone),
                sink: Process,
            },
        ])
    }
}

impl DeliveryRules {
    pub fn new(rules: Vec<DeliveryRule>) -> Self {
        DeliveryRules(rules)
    }

    pub fn rules(&self) -> &[DeliveryRule] {
        &self.0
    }

    /// True when an edge, given in taint direction, is a member of the rule
    /// set U.
    pub fn admits(&self, source: EntityAttr, event: EventType, sink: EntityAttr) -> bool {
        self.0.iter().any(|r| {
            if r.source != source.class() || r.sink != sink.class() {
                return false;
            }
            match r.event {
                RuleEvent::Event(e) => e == event,
                RuleEvent::Load => event == EventType::Read && source == EntityAttr::F1,
            }
        })
    }
}

/// Parses an override rules file: one rule per line,
/// `source_class event sink_class`, e.g. `File Read Process`. Blank lines and
/// `#` comments are skipped.
pub fn parse_rules(text: &str) -> Result<DeliveryRules> {
    let mut rules = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::invalid_input(format!(
                "rules line {}: expected `source event sink`",
                lineno + 1
            )));
        }
        let class = |s: &str| -> Result<EntityClass> {
            match s {
                "File" => Ok(EntityClass::File),
                "Process" => Ok(EntityClass::Process),
                "Socket" => Ok(EntityClass::Socket),
                _ => Err(Error::invalid_input(format!("unknown entity class {s:?}"))),
            }
        };
        let event = if parts[1] == "Load" {
            RuleEvent::Load
        } else {
            RuleEvent::Event(parts[1].parse()?)
        };
        rules.push(DeliveryRule {
            source: class(parts[0])?,
            event,
            sink: class(parts[2])?,
        });
    }
    if rules.is_empty() {
        return Err(Error::invalid_input("rules file contains no rules"));
    }
    Ok(DeliveryRules(rules))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules_admit_taint_flow_events() {
        let u = DeliveryRules::default();
        assert!(u.admits(EntityAttr::F3, EventType::Read, EntityAttr::P));
        assert!(u.admits(EntityAttr::P, EventType::Write, EntityAttr::F2));
        assert!(u.admits(EntityAttr::S, EventType::Receive, EntityAttr::P));
        assert!(u.admits(EntityAttr::P, EventType::Send, EntityAttr::S));
        assert!(u.admits(EntityAttr::P, EventType::ForkClone, EntityAttr::P));
        // Execute is not a delivery rule.
        assert!(!u.admits(EntityAttr::F2, EventType::Execute, EntityAttr::P));
    }

    #[test]
    fn load_alias_matches_library_reads_only() {
        let u = parse_rules("File Load Process\n").unwrap();
        assert!(u.admits(EntityAttr::F1, EventType::Read, EntityAttr::P));
        assert!(!u.admits(EntityAttr::F3, EventType::Read, EntityAttr::P));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_rules("File Read\n").is_err());
        assert!(parse_rules("# only comments\n").is_err());
    }
}
