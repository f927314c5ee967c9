//! Columnar corpus file and CSV export.
//!
//! ```text
//! "LEMV"   magic
//! u32      format version
//! u32      header length
//! [u8]     JSON header: mapping version, column order, per-match metadata
//! columns  one contiguous little-endian array per column, header order
//! u32      CRC32 of every byte between magic and checksum
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Match};
use crate::error::{LemError, Result};
use crate::event::{Event, EventType};
use crate::vocab::Vocabulary;

pub const CORPUS_MAGIC: &[u8; 4] = b"LEMV";
pub const CORPUS_VERSION: u32 = 1;

const COLUMNS: [(&str, &str); 13] = [
    ("event_type", "u8"),
    ("period", "u8"),
    ("minute", "f64"),
    ("x", "f64"),
    ("y", "f64"),
    ("is_home", "u8"),
    ("is_accurate", "u8"),
    ("is_goal", "u8"),
    ("home_score", "u16"),
    ("away_score", "u16"),
    ("team_id", "u64"),
    ("player_id", "u64"),
    ("match_id", "u64"),
];

#[derive(Debug, Serialize, Deserialize)]
struct Column {
    name: String,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatchHeader {
    match_id: u64,
    league: String,
    season: String,
    home_team: u64,
    away_team: u64,
    events: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    mapping_version: String,
    columns: Vec<Column>,
    matches: Vec<MatchHeader>,
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(corpus)).map_err(|e| LemError::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| LemError::io(path, e))?)
}

pub(crate) fn encode(corpus: &Corpus) -> Vec<u8> {
    let header = Header {
        mapping_version: corpus.mapping_version.clone(),
        columns: COLUMNS
            .iter()
            .map(|(n, t)| Column {
                name: n.to_string(),
                dtype: t.to_string(),
            })
            .collect(),
        matches: corpus
            .matches
            .iter()
            .map(|m| MatchHeader {
                match_id: m.match_id,
                league: m.league.clone(),
                season: m.season.clone(),
                home_team: m.home_team,
                away_team: m.away_team,
                events: m.events.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + corpus.num_events() * 57);
    out.extend_from_slice(CORPUS_MAGIC);
    out.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);

    macro_rules! column {
        ($f:expr) => {
            for e in corpus.events() {
                out.extend_from_slice(&$f(e).to_le_bytes());
            }
        };
    }
    column!(|e: &Event| e.event_type.0);
    column!(|e: &Event| e.period);
    column!(|e: &Event| e.minute);
    column!(|e: &Event| e.x);
    column!(|e: &Event| e.y);
    column!(|e: &Event| e.is_home as u8);
    column!(|e: &Event| e.is_accurate as u8);
    column!(|e: &Event| e.is_goal as u8);
    column!(|e: &Event| e.home_score);
    column!(|e: &Event| e.away_score);
    column!(|e: &Event| e.team_id);
    column!(|e: &Event| e.player_id);
    column!(|e: &Event| e.match_id);

    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| LemError::InvalidInput("truncated corpus file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn column<const W: usize, T>(&mut self, n: usize, f: fn([u8; W]) -> T) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(W).ok_or_else(|| LemError::InvalidInput("corpus too large".into()))?)?;
        Ok(raw
            .chunks_exact(W)
            .map(|c| f(c.try_into().expect("exact chunk")))
            .collect())
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Corpus> {
    if bytes.len() < 16 || &bytes[..4] != CORPUS_MAGIC {
        return Err(LemError::InvalidInput("not a corpus file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CORPUS_VERSION {
        return Err(LemError::Version {
            found: version,
            expected: CORPUS_VERSION,
        });
    }
    let crc_at = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[crc_at..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[4..crc_at]);
    if stored != computed {
        return Err(LemError::Checksum { stored, computed });
    }
    let mut cur = Cursor {
        bytes: &bytes[..crc_at],
        at: 8,
    };
    let len = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
    let header: Header = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| LemError::InvalidInput(format!("corpus header: {e}")))?;
    let expected: Vec<(&str, &str)> = header
        .columns
        .iter()
        .map(|c| (c.name.as_str(), c.dtype.as_str()))
        .collect();
    if expected != COLUMNS {
        return Err(LemError::InvalidInput("unsupported corpus column layout".into()));
    }
    let n: usize = header.matches.iter().map(|m| m.events).sum();

    let types = cur.column(n, u8::from_le_bytes)?;
    let periods = cur.column(n, u8::from_le_bytes)?;
    let minutes = cur.column(n, f64::from_le_bytes)?;
    let xs = cur.column(n, f64::from_le_bytes)?;
    let ys = cur.column(n, f64::from_le_bytes)?;
    let homes = cur.column(n, u8::from_le_bytes)?;
    let accs = cur.column(n, u8::from_le_bytes)?;
    let goals = cur.column(n, u8::from_le_bytes)?;
    let hs = cur.column(n, u16::from_le_bytes)?;
    let aws = cur.column(n, u16::from_le_bytes)?;
    let teams = cur.column(n, u64::from_le_bytes)?;
    let players = cur.column(n, u64::from_le_bytes)?;
    let match_ids = cur.column(n, u64::from_le_bytes)?;
    if cur.at != cur.bytes.len() {
        return Err(LemError::InvalidInput("trailing bytes in corpus file".into()));
    }

    let mut i = 0;
    let mut matches = Vec::with_capacity(header.matches.len());
    for mh in header.matches {
        let mut events = Vec::with_capacity(mh.events);
        for _ in 0..mh.events {
            let e = Event {
                event_type: EventType::new(types[i])?,
                period: periods[i],
                minute: minutes[i],
                x: xs[i],
                y: ys[i],
                is_home: homes[i] != 0,
                is_accurate: accs[i] != 0,
                is_goal: goals[i] != 0,
                home_score: hs[i],
                away_score: aws[i],
                team_id: teams[i],
                player_id: players[i],
                match_id: match_ids[i],
            };
            e.validate()?;
            events.push(e);
            i += 1;
        }
        matches.push(Match {
            match_id: mh.match_id,
            league: mh.league,
            season: mh.season,
            home_team: mh.home_team,
            away_team: mh.away_team,
            events,
        });
    }
    Ok(Corpus {
        mapping_version: header.mapping_version,
        matches,
    })
}

/// Flat CSV, one row per event, with league, season and type name.
pub fn write_csv<W: Write>(corpus: &Corpus, vocab: &Vocabulary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "league", "season", "match_id", "period", "minute", "type_id", "type", "x", "y", "is_home",
        "is_accurate", "is_goal", "home_score", "away_score", "team_id", "player_id",
    ])?;
    for m in &corpus.matches {
        for e in &m.events {
            w.write_record([
                m.league.clone(),
                m.season.clone(),
                e.match_id.to_string(),
                e.period.to_string(),
                e.minute.to_string(),
                e.event_type.0.to_string(),
                vocab.name(e.event_type).to_string(),
                e.x.to_string(),
                e.y.to_string(),
                (e.is_home as u8).to_string(),
                (e.is_accurate as u8).to_string(),
                (e.is_goal as u8).to_string(),
                e.home_score.to_string(),
                e.away_score.to_string(),
                e.team_id.to_string(),
                e.player_id.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| LemError::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use proptest::strategy::ValueTree;

    fn arb_match(id: u64) -> impl Strategy<Value = Match> {
        prop::collection::vec(
            (0u8..33, 0.0f64..50.0, 0.0f64..=1.0, 0.0f64..=1.0, any::<bool>(), any::<bool>(), any::<u64>()),
            0..30,
        )
        .prop_map(move |rows| {
            let events = rows
                .into_iter()
                .enumerate()
                .map(|(i, (t, m, x, y, h, a, p))| Event {
                    event_type: EventType(t),
                    period: (i % 2) as u8,
                    minute: m,
                    x,
                    y,
                    is_home: h,
                    is_accurate: a,
                    is_goal: false,
                    home_score: i as u16,
                    away_score: 0,
                    team_id: if h { 1 } else { 2 },
                    player_id: p,
                    match_id: id,
                })
                .collect();
            Match {
                match_id: id,
                league: format!("L{id}"),
                season: "2017/18".into(),
                home_team: 1,
                away_team: 2,
                events,
            }
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_idempotent(a in arb_match(1), b in arb_match(2)) {
            let corpus = Corpus { mapping_version: "wyscout-33-v1".into(), matches: vec![a, b] };
            let bytes = encode(&corpus);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(&back, &corpus);
            prop_assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let corpus = Corpus {
            mapping_version: "v".into(),
            matches: vec![Match {
                match_id: 3,
                league: "A".into(),
                season: "S".into(),
                home_team: 1,
                away_team: 2,
                events: vec![],
            }],
        };
        let bytes = encode(&corpus);
        assert!(decode(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[14] ^= 1;
        assert!(decode(&bad).is_err());
        assert_eq!(decode(&bytes).unwrap(), corpus);
    }

    #[test]
    fn csv_has_one_row_per_event() {
        let rng_match = arb_match(5);
        let m = rng_match
            .new_tree(&mut proptest::test_runner::TestRunner::deterministic())
            .unwrap()
            .current();
        let n = m.events.len();
        let corpus = Corpus {
            mapping_version: "v".into(),
            matches: vec![m],
        };
        let mut buf = Vec::new();
        write_csv(&corpus, &Vocabulary::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), n + 1);
    }
}
