//! Event-type vocabulary.
//!
//! The vocabulary is a fixed table of 33 event types loaded from a versioned
//! data file. It carries the goal-capable flag and the statistics group of
//! every type, plus the type used for kickoffs. Cascade checkpoints embed the
//! full table so a model never depends on a file that may have changed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{LemError, Result};
use crate::event::{EventType, NUM_TYPES};

const DEFAULT_MAPPING: &str = include_str!("../data/type_mapping_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeEntry {
    pub id: u8,
    pub name: String,
    /// Statistics bucket, e.g. `pass`, `shot`, `aerial_duel`.
    pub group: String,
    pub goal_capable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub version: String,
    pub kickoff_type: String,
    pub types: Vec<TypeEntry>,
}

/// One ingestion rule: a raw (event, sub-event) label pair and the vocabulary
/// type name it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub event: String,
    pub sub_event: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

/// Vocabulary plus the raw-label rules used by the ingester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMapping {
    #[serde(flatten)]
    pub vocabulary: Vocabulary,
    pub rules: Vec<MappingRule>,
}

impl Vocabulary {
    pub fn validate(&self) -> Result<()> {
        if self.types.len() != NUM_TYPES {
            return Err(LemError::InvalidVocabulary(format!(
                "expected {NUM_TYPES} types, found {}",
                self.types.len()
            )));
        }
        let mut names = HashMap::new();
        for (i, t) in self.types.iter().enumerate() {
            if t.id as usize != i {
                return Err(LemError::InvalidVocabulary(format!(
                    "type '{}' has id {} at position {i}",
                    t.name, t.id
                )));
            }
            if names.insert(t.name.as_str(), t.id).is_some() {
                return Err(LemError::InvalidVocabulary(format!(
                    "duplicate type name '{}'",
                    t.name
                )));
            }
        }
        if !self.types.iter().any(|t| t.goal_capable) {
            return Err(LemError::InvalidVocabulary(
                "no goal-capable type".to_string(),
            ));
        }
        if !names.contains_key(self.kickoff_type.as_str()) {
            return Err(LemError::InvalidVocabulary(format!(
                "kickoff type '{}' is not in the vocabulary",
                self.kickoff_type
            )));
        }
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<EventType> {
        self.types
            .iter()
            .find(|t| t.name == name)
            .map(|t| EventType(t.id))
    }

    pub fn name(&self, t: EventType) -> &str {
        &self.types[t.index()].name
    }

    pub fn group(&self, t: EventType) -> &str {
        &self.types[t.index()].group
    }

    pub fn is_goal_capable(&self, t: EventType) -> bool {
        self.types[t.index()].goal_capable
    }

    pub fn goal_mask(&self) -> [bool; NUM_TYPES] {
        let mut mask = [false; NUM_TYPES];
        for t in &self.types {
            mask[t.id as usize] = t.goal_capable;
        }
        mask
    }

    pub fn kickoff(&self) -> EventType {
        self.by_name(&self.kickoff_type)
            .expect("validated vocabulary has a kickoff type")
    }

    /// Ids of every type in a statistics group.
    pub fn group_members(&self, group: &str) -> Vec<EventType> {
        self.types
            .iter()
            .filter(|t| t.group == group)
            .map(|t| EventType(t.id))
            .collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        TypeMapping::default().vocabulary
    }
}

impl TypeMapping {
    pub fn from_json(raw: &str) -> Result<Self> {
        let mapping: TypeMapping = serde_json::from_str(raw)
            .map_err(|e| LemError::InvalidVocabulary(e.to_string()))?;
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        let mut seen = HashMap::new();
        for rule in &self.rules {
            if self.vocabulary.by_name(&rule.type_name).is_none() {
                return Err(LemError::InvalidVocabulary(format!(
                    "rule {}/{} targets unknown type '{}'",
                    rule.event, rule.sub_event, rule.type_name
                )));
            }
            if seen
                .insert((rule.event.as_str(), rule.sub_event.as_str()), ())
                .is_some()
            {
                return Err(LemError::InvalidVocabulary(format!(
                    "duplicate rule for {}/{}",
                    rule.event, rule.sub_event
                )));
            }
        }
        Ok(())
    }

    /// Lookup table from (event, sub-event) to type.
    pub fn lookup_table(&self) -> HashMap<(String, String), EventType> {
        self.rules
            .iter()
            .map(|r| {
                (
                    (r.event.clone(), r.sub_event.clone()),
                    self.vocabulary
                        .by_name(&r.type_name)
                        .expect("validated rule"),
                )
            })
            .collect()
    }
}

impl Default for TypeMapping {
    fn default() -> Self {
        TypeMapping::from_json(DEFAULT_MAPPING).expect("bundled type mapping is valid")
    }
}
