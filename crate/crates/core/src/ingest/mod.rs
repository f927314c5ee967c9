//! Event-data ingestion: Wyscout parsing, corpus splits and the columnar store.

mod store;
mod wyscout;

pub use store::{read_corpus, write_corpus, write_csv, CORPUS_MAGIC, CORPUS_VERSION};
pub use wyscout::{parse_events, parse_matches, MatchSides, ParseOptions, ParseReport, UnknownTypePolicy};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{LemError, Result};
use crate::event::Event;

/// One match: its events in playing order plus the two sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub match_id: u64,
    pub league: String,
    pub season: String,
    pub home_team: u64,
    /// Zero when the raw stream never shows the away side.
    pub away_team: u64,
    pub events: Vec<Event>,
}

impl Match {
    pub fn final_score(&self) -> (u16, u16) {
        self.events
            .last()
            .map(|e| (e.home_score, e.away_score))
            .unwrap_or((0, 0))
    }

    pub fn has_team(&self, team: u64) -> bool {
        team == self.home_team || team == self.away_team
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = (0u8, f64::NEG_INFINITY, 0u16, 0u16);
        for (i, e) in self.events.iter().enumerate() {
            e.validate()?;
            let bad = |why: &str| {
                LemError::InvalidEvent(format!("match {} event {i}: {why}", self.match_id))
            };
            if e.match_id != self.match_id {
                return Err(bad("wrong match id"));
            }
            if !self.has_team(e.team_id) {
                return Err(bad("team is not one of the two sides"));
            }
            if (e.period, e.minute) < (last.0, last.1) {
                return Err(bad("events out of order"));
            }
            if e.home_score < last.2 || e.away_score < last.3 {
                return Err(bad("score decreases"));
            }
            last = (e.period, e.minute, e.home_score, e.away_score);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    /// Version of the type mapping the events were labelled with.
    pub mapping_version: String,
    pub matches: Vec<Match>,
}

impl Corpus {
    pub fn new(mapping_version: impl Into<String>) -> Self {
        Corpus {
            mapping_version: mapping_version.into(),
            matches: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.matches.iter().map(|m| m.events.len()).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.matches.iter().flat_map(|m| m.events.iter())
    }

    pub fn leagues(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for m in &self.matches {
            if !seen.contains(&m.league) {
                seen.push(m.league.clone());
            }
        }
        seen
    }

    /// Appends another corpus; match ids must stay unique.
    pub fn merge(&mut self, other: Corpus) -> Result<()> {
        if !self.matches.is_empty() && !other.matches.is_empty() && self.mapping_version != other.mapping_version {
            return Err(LemError::InvalidInput(format!(
                "cannot merge corpora labelled with {} and {}",
                self.mapping_version, other.mapping_version
            )));
        }
        if self.matches.is_empty() {
            self.mapping_version = other.mapping_version.clone();
        }
        let ids: HashSet<u64> = self.matches.iter().map(|m| m.match_id).collect();
        if let Some(dup) = other.matches.iter().find(|m| ids.contains(&m.match_id)) {
            return Err(LemError::InvalidInput(format!("duplicate match id {}", dup.match_id)));
        }
        self.matches.extend(other.matches);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for m in &self.matches {
            if !ids.insert(m.match_id) {
                return Err(LemError::InvalidInput(format!("duplicate match id {}", m.match_id)));
            }
            m.validate()?;
        }
        Ok(())
    }

    fn subset(&self, leagues: &[String]) -> Corpus {
        Corpus {
            mapping_version: self.mapping_version.clone(),
            matches: self
                .matches
                .iter()
                .filter(|m| leagues.contains(&m.league))
                .cloned()
                .collect(),
        }
    }
}

/// League selectors for the three corpora.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    #[serde(default)]
    pub validation: Vec<String>,
    #[serde(default)]
    pub pool: Vec<String>,
}

/// Splits by league into (train, validation, fine-tuning pool).
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    let mut used = HashSet::new();
    for label in spec.train.iter().chain(&spec.validation).chain(&spec.pool) {
        if !used.insert(label) {
            return Err(LemError::InvalidInput(format!(
                "league {label} appears in more than one split"
            )));
        }
        if !corpus.matches.iter().any(|m| &m.league == label) {
            return Err(LemError::EmptySelection(format!("no matches for league {label}")));
        }
    }
    Ok((
        corpus.subset(&spec.train),
        corpus.subset(&spec.validation),
        corpus.subset(&spec.pool),
    ))
}
