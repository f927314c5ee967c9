//! Wyscout public-dataset event JSON.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Deserialize;

use super::{Corpus, Match};
use crate::error::{LemError, Result};
use crate::event::{Event, EventType};
use crate::vocab::TypeMapping;

const TAG_GOAL: u32 = 101;
const TAG_OWN_GOAL: u32 = 102;
const TAG_ACCURATE: u32 = 1801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownTypePolicy {
    #[default]
    Drop,
    Error,
}

impl std::str::FromStr for UnknownTypePolicy {
    type Err = LemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(UnknownTypePolicy::Drop),
            "error" => Ok(UnknownTypePolicy::Error),
            _ => Err(LemError::InvalidInput(format!("unknown-type policy '{s}' (drop|error)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchSides {
    pub home: u64,
    pub away: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub league: String,
    pub season: String,
    pub unknown_types: UnknownTypePolicy,
    /// Home and away team per match id. Without an entry the team of the
    /// match's first event is taken as the home side.
    pub sides: HashMap<u64, MatchSides>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRecord {
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: usize,
    pub events: usize,
    pub dropped: Vec<DroppedRecord>,
}

#[derive(Debug, Deserialize)]
struct RawTag {
    id: u32,
}

#[derive(Debug, Deserialize)]
struct RawPosition {
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEvent {
    event_name: String,
    #[serde(default)]
    sub_event_name: String,
    #[serde(default)]
    tags: Vec<RawTag>,
    #[serde(default)]
    positions: Vec<RawPosition>,
    match_id: u64,
    team_id: u64,
    #[serde(default)]
    player_id: u64,
    match_period: String,
    event_sec: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTeamData {
    side: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawMatch {
    wy_id: u64,
    teams_data: HashMap<String, RawTeamData>,
}

fn json_error(raw: &[u8], e: serde_json::Error) -> LemError {
    // serde_json reports 1-based line and column; convert to a byte offset
    let line_start = raw
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b == b'\n')
        .nth(e.line().saturating_sub(2))
        .map(|(i, _)| i + 1)
        .filter(|_| e.line() > 1)
        .unwrap_or(0);
    LemError::Json {
        offset: line_start + e.column().saturating_sub(1),
        message: e.to_string(),
    }
}

fn parse_json<'a, T: Deserialize<'a>>(raw: &'a [u8]) -> Result<T> {
    serde_json::from_slice(raw).map_err(|e| json_error(raw, e))
}

/// Reads a Wyscout matches file into home/away sides per match.
pub fn parse_matches(raw: &[u8]) -> Result<HashMap<u64, MatchSides>> {
    let matches: Vec<RawMatch> = parse_json(raw)?;
    let mut out = HashMap::with_capacity(matches.len());
    for m in matches {
        let mut home = None;
        let mut away = None;
        for (team, data) in &m.teams_data {
            let id: u64 = team
                .parse()
                .map_err(|_| LemError::InvalidInput(format!("match {}: team id '{team}'", m.wy_id)))?;
            match data.side.as_str() {
                "home" => home = Some(id),
                "away" => away = Some(id),
                other => {
                    return Err(LemError::InvalidInput(format!("match {}: side '{other}'", m.wy_id)))
                }
            }
        }
        match (home, away) {
            (Some(home), Some(away)) => {
                out.insert(m.wy_id, MatchSides { home, away });
            }
            _ => {
                return Err(LemError::InvalidInput(format!(
                    "match {} lacks a home or away side",
                    m.wy_id
                )))
            }
        }
    }
    Ok(out)
}

struct Labelled {
    record: usize,
    event_type: EventType,
    period: u8,
    raw: RawEvent,
}

/// Parses one array of Wyscout event records into a corpus.
///
/// Extra-time periods are dropped. Coordinates become fractions of the pitch
/// in the acting team's attacking direction; a record without a position takes
/// the previous event's. Scores are rebuilt by scanning goal tags in playing
/// order: a goal tag counts only on a goal-capable type (goalkeepers' save
/// attempts carry it too) and an own-goal tag credits the other side.
pub fn parse_events(
    raw: &[u8],
    mapping: &TypeMapping,
    options: &ParseOptions,
) -> Result<(Corpus, ParseReport)> {
    let mut report = ParseReport::default();
    let mut corpus = Corpus::new(mapping.vocabulary.version.clone());
    if raw.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok((corpus, report));
    }
    let records: Vec<RawEvent> = parse_json(raw)?;
    report.records = records.len();
    let table = mapping.lookup_table();

    let mut groups: Vec<Vec<Labelled>> = Vec::new();
    let mut group_of: HashMap<u64, usize> = HashMap::new();
    for (record, ev) in records.into_iter().enumerate() {
        let key = (ev.event_name.clone(), ev.sub_event_name.clone());
        let Some(&event_type) = table.get(&key) else {
            if options.unknown_types == UnknownTypePolicy::Error {
                return Err(LemError::UnknownEventType {
                    event: ev.event_name,
                    sub_event: ev.sub_event_name,
                    record,
                });
            }
            let reason = format!("unknown type {}/{}", ev.event_name, ev.sub_event_name);
            log::debug!("record {record}: {reason}");
            report.dropped.push(DroppedRecord { record, reason });
            continue;
        };
        let period = match ev.match_period.as_str() {
            "1H" => 0,
            "2H" => 1,
            other => {
                let reason = format!("period {other} is not modeled");
                log::debug!("record {record}: {reason}");
                report.dropped.push(DroppedRecord { record, reason });
                continue;
            }
        };
        if !ev.event_sec.is_finite() || ev.event_sec < 0.0 {
            return Err(LemError::InvalidInput(format!(
                "record {record}: eventSec {}",
                ev.event_sec
            )));
        }
        let g = *group_of.entry(ev.match_id).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(Labelled {
            record,
            event_type,
            period,
            raw: ev,
        });
    }
    if !report.dropped.is_empty() {
        log::info!("dropped {} of {} records", report.dropped.len(), report.records);
    }

    let vocab = &mapping.vocabulary;
    let matches: Vec<Match> = groups
        .into_par_iter()
        .map(|mut events| -> Result<Match> {
            events.sort_by(|a, b| {
                (a.period, a.raw.event_sec, a.record)
                    .partial_cmp(&(b.period, b.raw.event_sec, b.record))
                    .expect("finite times")
            });
            let match_id = events[0].raw.match_id;
            let sides = match options.sides.get(&match_id) {
                Some(s) => *s,
                None => {
                    let home = events[0].raw.team_id;
                    let away = events
                        .iter()
                        .map(|e| e.raw.team_id)
                        .find(|&t| t != home)
                        .unwrap_or(0);
                    MatchSides { home, away }
                }
            };
            let (mut home_score, mut away_score) = (0u16, 0u16);
            let (mut x, mut y) = (0.5, 0.5);
            let mut out = Vec::with_capacity(events.len());
            for l in &events {
                let ev = &l.raw;
                let is_home = ev.team_id == sides.home;
                if !is_home && ev.team_id != sides.away {
                    return Err(LemError::InvalidInput(format!(
                        "record {}: team {} is not a side of match {match_id}",
                        l.record, ev.team_id
                    )));
                }
                if let Some(p) = ev.positions.first() {
                    x = (p.x / 100.0).clamp(0.0, 1.0);
                    y = (p.y / 100.0).clamp(0.0, 1.0);
                }
                let has = |tag| ev.tags.iter().any(|t| t.id == tag);
                let is_goal = has(TAG_GOAL) && vocab.is_goal_capable(l.event_type);
                if is_goal {
                    if is_home {
                        home_score += 1;
                    } else {
                        away_score += 1;
                    }
                }
                if has(TAG_OWN_GOAL) {
                    if is_home {
                        away_score += 1;
                    } else {
                        home_score += 1;
                    }
                }
                out.push(Event {
                    event_type: l.event_type,
                    period: l.period,
                    minute: ev.event_sec / 60.0,
                    x,
                    y,
                    is_home,
                    is_accurate: has(TAG_ACCURATE),
                    is_goal,
                    home_score,
                    away_score,
                    team_id: ev.team_id,
                    player_id: ev.player_id,
                    match_id,
                });
            }
            Ok(Match {
                match_id,
                league: options.league.clone(),
                season: options.season.clone(),
                home_team: sides.home,
                away_team: sides.away,
                events: out,
            })
        })
        .collect::<Result<_>>()?;
    report.events = matches.iter().map(|m| m.events.len()).sum();
    corpus.matches = matches;
    Ok((corpus, report))
}
