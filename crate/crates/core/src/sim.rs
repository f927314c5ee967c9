//! Monte Carlo match simulation.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeScratch, ModelCascade};
use crate::error::{LemError, Result};
use crate::event::{apply_prediction_in, GameState, PredictedEvent, NUM_TYPES};

/// Which side's points a batch reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Home,
    Away,
}

impl std::str::FromStr for Side {
    type Err = LemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "home" => Ok(Side::Home),
            "away" => Ok(Side::Away),
            _ => Err(LemError::InvalidInput(format!("side '{s}' (home|away)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub n_simulations: usize,
    pub base_seed: u64,
    pub max_events_per_match: usize,
    pub half_length_minutes: f64,
    /// Keep every simulated event in the results.
    pub record_events: bool,
    /// Sampling temperature; 1 samples the model as trained.
    pub temperature: f64,
    pub perspective: Side,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            n_simulations: 2500,
            base_seed: 0,
            max_events_per_match: 4000,
            half_length_minutes: 47.0,
            record_events: false,
            temperature: 1.0,
            perspective: Side::Home,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_simulations == 0 || self.max_events_per_match == 0 {
            return Err(LemError::InvalidInput(
                "simulation count and event guard must be at least 1".into(),
            ));
        }
        if !(self.half_length_minutes.is_finite() && self.half_length_minutes > 0.0) {
            return Err(LemError::InvalidInput(format!(
                "half length {}",
                self.half_length_minutes
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(LemError::InvalidInput(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }
}

/// A simulated event with its clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub period: u8,
    pub minute: f64,
    pub event: PredictedEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub home_goals: u32,
    pub away_goals: u32,
    pub num_events: usize,
    /// The event guard stopped the match before full time.
    pub truncated: bool,
    pub home_type_counts: Vec<u32>,
    pub away_type_counts: Vec<u32>,
    /// Empty unless the batch recorded events.
    pub events: Vec<SimEvent>,
}

pub fn points(goals_for: u32, goals_against: u32) -> u8 {
    match goals_for.cmp(&goals_against) {
        std::cmp::Ordering::Greater => 3,
        std::cmp::Ordering::Equal => 1,
        std::cmp::Ordering::Less => 0,
    }
}

impl SimulationResult {
    pub fn points_home(&self) -> u8 {
        points(self.home_goals, self.away_goals)
    }

    pub fn points_for(&self, side: Side) -> u8 {
        match side {
            Side::Home => points(self.home_goals, self.away_goals),
            Side::Away => points(self.away_goals, self.home_goals),
        }
    }
}

/// Plays one match from kickoff. Each half runs until the clock reaches the
/// half length; the event that reaches it is kept. The second half kicks off
/// with the away side in possession.
pub fn simulate_match(
    cascade: &ModelCascade,
    cfg: &BatchConfig,
    rng: &mut ChaCha8Rng,
    scratch: &mut CascadeScratch,
) -> Result<SimulationResult> {
    let unit = cascade.time_unit();
    let kickoff = cascade.vocabulary().kickoff();
    let mut result = SimulationResult {
        seed: 0,
        home_goals: 0,
        away_goals: 0,
        num_events: 0,
        truncated: false,
        home_type_counts: vec![0; NUM_TYPES],
        away_type_counts: vec![0; NUM_TYPES],
        events: Vec::new(),
    };
    'halves: for period in 0..2u8 {
        let mut state = GameState::kickoff(
            kickoff,
            period,
            period == 0,
            result.home_goals.min(u16::MAX as u32) as u16,
            result.away_goals.min(u16::MAX as u32) as u16,
        );
        let mut minute = 0.0f64;
        while minute < cfg.half_length_minutes {
            if result.num_events >= cfg.max_events_per_match {
                result.truncated = true;
                break 'halves;
            }
            let pred = cascade.sample_event_with(&state, rng, scratch, cfg.temperature)?;
            minute += pred.time_bin as f64 * unit.minutes_per_bin();
            state = apply_prediction_in(&state, &pred, unit);
            state.set_clock(period, minute);
            result.num_events += 1;
            let counts = if pred.is_home {
                &mut result.home_type_counts
            } else {
                &mut result.away_type_counts
            };
            counts[pred.event_type.index()] += 1;
            if pred.is_goal {
                if pred.is_home {
                    result.home_goals += 1;
                } else {
                    result.away_goals += 1;
                }
            }
            if cfg.record_events {
                result.events.push(SimEvent {
                    period,
                    minute,
                    event: pred,
                });
            }
        }
    }
    Ok(result)
}

/// Simulation `i` of a batch uses its own stream seeded `base_seed + i`.
pub fn simulate_one(cascade: &ModelCascade, cfg: &BatchConfig, index: u64) -> Result<SimulationResult> {
    let seed = cfg.base_seed.wrapping_add(index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = simulate_match(cascade, cfg, &mut rng, &mut CascadeScratch::default())?;
    r.seed = seed;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_simulations: usize,
    pub base_seed: u64,
    pub perspective: Side,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub total_points: u64,
    pub expected_points: f64,
    /// Sample standard deviation over the square root of N; 0 for one simulation.
    pub standard_error: f64,
    pub mean_home_goals: f64,
    pub mean_away_goals: f64,
    pub truncated: usize,
}

impl BatchSummary {
    pub fn from_results(results: &[SimulationResult], cfg: &BatchConfig) -> Self {
        let pts: Vec<u8> = results.iter().map(|r| r.points_for(cfg.perspective)).collect();
        summarize_points(&pts, cfg.base_seed, cfg.perspective, results)
    }
}

fn summarize_points(pts: &[u8], base_seed: u64, perspective: Side, results: &[SimulationResult]) -> BatchSummary {
    let n = pts.len();
    let total: u64 = pts.iter().map(|&p| p as u64).sum();
    let mean = if n == 0 { 0.0 } else { total as f64 / n as f64 };
    let se = if n > 1 {
        let ss: f64 = pts.iter().map(|&p| (p as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    let mean_of = |f: fn(&SimulationResult) -> u32| {
        if results.is_empty() {
            0.0
        } else {
            results.iter().map(|r| f(r) as f64).sum::<f64>() / results.len() as f64
        }
    };
    BatchSummary {
        n_simulations: n,
        base_seed,
        perspective,
        wins: pts.iter().filter(|&&p| p == 3).count(),
        draws: pts.iter().filter(|&&p| p == 1).count(),
        losses: pts.iter().filter(|&&p| p == 0).count(),
        total_points: total,
        expected_points: mean,
        standard_error: se,
        mean_home_goals: mean_of(|r| r.home_goals),
        mean_away_goals: mean_of(|r| r.away_goals),
        truncated: results.iter().filter(|r| r.truncated).count(),
    }
}

/// Summary statistics of a bare list of per-match points.
pub fn summarize(points: &[u8]) -> BatchSummary {
    summarize_points(points, 0, Side::Home, &[])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub config: BatchConfig,
    pub summary: BatchSummary,
    pub results: Vec<SimulationResult>,
}

impl Batch {
    pub fn points(&self) -> Vec<u8> {
        self.results.iter().map(|r| r.points_for(self.config.perspective)).collect()
    }
}

/// Runs `n_simulations` matches on the rayon pool; results are in index order
/// and do not depend on scheduling.
pub fn simulate_batch(cascade: &ModelCascade, cfg: &BatchConfig) -> Result<Batch> {
    cfg.validate()?;
    let results = (0..cfg.n_simulations as u64)
        .into_par_iter()
        .map_init(CascadeScratch::default, |scratch, i| {
            let seed = cfg.base_seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = simulate_match(cascade, cfg, &mut rng, scratch)?;
            r.seed = seed;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = BatchSummary::from_results(&results, cfg);
    if summary.truncated > 0 {
        log::warn!("{} of {} simulations hit the event guard", summary.truncated, cfg.n_simulations);
    }
    Ok(Batch {
        config: cfg.clone(),
        summary,
        results,
    })
}

/// One row per simulation: seed, goals, points and per-side type counts.
pub fn write_results_csv<W: Write>(batch: &Batch, type_names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "index".to_string(),
        "seed".into(),
        "home_goals".into(),
        "away_goals".into(),
        "points".into(),
        "events".into(),
        "truncated".into(),
    ];
    for side in ["home", "away"] {
        header.extend(type_names.iter().map(|n| format!("{side}:{n}")));
    }
    w.write_record(&header)?;
    for (i, r) in batch.results.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            r.seed.to_string(),
            r.home_goals.to_string(),
            r.away_goals.to_string(),
            r.points_for(batch.config.perspective).to_string(),
            r.num_events.to_string(),
            (r.truncated as u8).to_string(),
        ];
        row.extend(r.home_type_counts.iter().map(|c| c.to_string()));
        row.extend(r.away_type_counts.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| LemError::io("<csv>", e))?;
    Ok(())
}

/// Reads back the per-simulation CSV written by [`write_results_csv`].
pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<SimulationResult>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LemError::InvalidInput(format!("results row {}: column {i}", out.len())))
        };
        if rec.len() != 7 + 2 * NUM_TYPES {
            return Err(LemError::InvalidInput(format!(
                "results row has {} columns, expected {}",
                rec.len(),
                7 + 2 * NUM_TYPES
            )));
        }
        let counts = |start: usize| -> Result<Vec<u32>> {
            (start..start + NUM_TYPES).map(|i| field(i).map(|v| v as u32)).collect()
        };
        out.push(SimulationResult {
            seed: field(1)?,
            home_goals: field(2)? as u32,
            away_goals: field(3)? as u32,
            num_events: field(5)? as usize,
            truncated: field(6)? != 0,
            home_type_counts: counts(7)?,
            away_type_counts: counts(7 + NUM_TYPES)?,
            events: Vec::new(),
        });
    }
    Ok(out)
}
