//! Synthetic event generators with known conditional structure.

#![allow(dead_code)]

use lem::event::{Event, EventType};
use lem::ingest::{Corpus, Match};
use lem::vocab::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vocab() -> Vocabulary {
    Vocabulary::default()
}

pub fn ty(name: &str) -> EventType {
    vocab().by_name(name).expect("known type")
}

pub fn draw(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One match of roughly `2 * half / 1` events: gaps uniform in [0, 2)
/// minutes, sides 50/50, shots score with probability 0.1.
pub fn generate_match(
    rng: &mut ChaCha8Rng,
    match_id: u64,
    home: u64,
    away: u64,
    types: &[EventType],
    mut next: impl FnMut(&mut ChaCha8Rng, Option<usize>) -> usize,
) -> Match {
    let shot = ty("Shot");
    let mut events = Vec::new();
    let (mut hs, mut aw) = (0u16, 0u16);
    let mut prev = None;
    for period in 0..2u8 {
        let mut minute = 0.0;
        while minute < 47.0 {
            let k = next(rng, prev);
            prev = Some(k);
            let is_home = rng.random_bool(0.5);
            let is_goal = types[k] == shot && rng.random_bool(0.1);
            if is_goal {
                if is_home {
                    hs += 1
                } else {
                    aw += 1
                }
            }
            let team = if is_home { home } else { away };
            events.push(Event {
                event_type: types[k],
                period,
                minute,
                x: rng.random_range(0.0..=1.0),
                y: rng.random_range(0.0..=1.0),
                is_home,
                is_accurate: rng.random_bool(0.8),
                is_goal,
                home_score: hs,
                away_score: aw,
                team_id: team,
                player_id: team * 100 + rng.random_range(0..11),
                match_id,
            });
            minute += rng.random_range(0.0..2.0);
        }
    }
    Match {
        match_id,
        league: "SYN".into(),
        season: "synthetic".into(),
        home_team: home,
        away_team: away,
        events,
    }
}

pub fn markov_types() -> Vec<EventType> {
    ["Simple pass", "Shot", "Ground attacking duel", "Clearance"]
        .iter()
        .map(|n| ty(n))
        .collect()
}

/// Row k is the distribution of the next type given type k.
pub fn markov_transitions() -> Vec<Vec<f64>> {
    vec![
        vec![0.70, 0.10, 0.15, 0.05],
        vec![0.50, 0.05, 0.15, 0.30],
        vec![0.60, 0.10, 0.20, 0.10],
        vec![0.40, 0.05, 0.35, 0.20],
    ]
}

/// Matches until at least `n_events` events exist.
pub fn markov_corpus(n_events: usize, seed: u64) -> Corpus {
    let types = markov_types();
    let rows = markov_transitions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::new(vocab().version);
    let mut total = 0;
    let mut id = 0;
    while total < n_events {
        let m = generate_match(&mut rng, id, 1 + 2 * (id % 10), 2 + 2 * (id % 10), &types, |rng, prev| {
            draw(rng, &rows[prev.unwrap_or(0)])
        });
        total += m.events.len();
        corpus.matches.push(m);
        id += 1;
    }
    corpus
}

/// Style A passes with probability `p_a`, style B with `p_b`; the other three
/// types share the rest equally. Team 1 hosts every style-A match, team 3
/// every style-B match.
pub fn style_corpus(matches: usize, p_a: f64, p_b: f64, seed: u64) -> Corpus {
    let types = markov_types();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::new(vocab().version);
    for id in 0..matches as u64 {
        let style_a = id % 2 == 0;
        let p = if style_a { p_a } else { p_b };
        let row = [p, (1.0 - p) / 3.0, (1.0 - p) / 3.0, (1.0 - p) / 3.0];
        let (home, away) = if style_a { (1, 2) } else { (3, 4) };
        corpus
            .matches
            .push(generate_match(&mut rng, id, home, away, &types, |rng, _| draw(rng, &row)));
    }
    corpus
}

/// Small random corpus with `teams` teams and eleven players each; every
/// pair of teams meets home and away.
pub fn fixture_corpus(teams: u64, events_per_match: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::new(vocab().version);
    let mut id = 0;
    for home in 1..=teams {
        for away in 1..=teams {
            if home == away {
                continue;
            }
            let mut events = Vec::with_capacity(events_per_match);
            for k in 0..events_per_match {
                let is_home = rng.random_bool(0.5);
                let team = if is_home { home } else { away };
                events.push(Event {
                    event_type: EventType(rng.random_range(0..33)),
                    period: (2 * k / events_per_match) as u8,
                    minute: k as f64,
                    x: 0.5,
                    y: 0.5,
                    is_home,
                    is_accurate: true,
                    is_goal: false,
                    home_score: 0,
                    away_score: 0,
                    team_id: team,
                    player_id: team * 100 + rng.random_range(0..11),
                    match_id: id,
                });
            }
            corpus.matches.push(Match {
                match_id: id,
                league: "FIX".into(),
                season: "fixture".into(),
                home_team: home,
                away_team: away,
                events,
            });
            id += 1;
        }
    }
    corpus
}
