//! Event and game-state data model.
//!
//! A [`GameState`] is the 42-wide feature vector conditioning every network in
//! the cascade:
//!
//! ```text
//! [0..33)  one-hot event type
//! 33       period (0 first half, 1 second half)
//! 34       minute / 60
//! 35, 36   x, y in the acting team's attacking frame
//! 37       is_home
//! 38       is_accurate
//! 39       is_goal
//! 40, 41   home score / 10, away score / 10 (scores clamped at 10)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{LemError, Result};

pub const NUM_TYPES: usize = 33;
pub const STATE_DIM: usize = NUM_TYPES + 9;

pub const X_BINS: usize = 101;
pub const Y_BINS: usize = 101;
pub const TIME_BINS: usize = 60;
pub const SIDE_BINS: usize = 2;

pub const MAX_SCORE: u16 = 10;

const PERIOD: usize = NUM_TYPES;
const MINUTE: usize = NUM_TYPES + 1;
const X: usize = NUM_TYPES + 2;
const Y: usize = NUM_TYPES + 3;
const IS_HOME: usize = NUM_TYPES + 4;
const IS_ACCURATE: usize = NUM_TYPES + 5;
const IS_GOAL: usize = NUM_TYPES + 6;
const HOME_SCORE: usize = NUM_TYPES + 7;
const AWAY_SCORE: usize = NUM_TYPES + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventType(pub u8);

impl EventType {
    pub fn new(id: u8) -> Result<Self> {
        if (id as usize) < NUM_TYPES {
            Ok(EventType(id))
        } else {
            Err(LemError::InvalidEvent(format!("type id {id} out of range")))
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Unit of the time-elapsed bins predicted by the data network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Minutes,
    Seconds,
}

impl TimeUnit {
    /// Minutes represented by one bin.
    pub fn minutes_per_bin(self) -> f64 {
        match self {
            TimeUnit::Minutes => 1.0,
            TimeUnit::Seconds => 1.0 / 60.0,
        }
    }

    /// Bin for a gap of `delta_minutes` between two events: floor in the
    /// unit, clamped to `[0, 59]`. A relative slack of 1e-9 keeps gaps such as
    /// 10.1 - 10.0 minutes from flooring one bin short.
    pub fn bin(self, delta_minutes: f64) -> u8 {
        let units = delta_minutes / self.minutes_per_bin() * (1.0 + 1e-9);
        if !units.is_finite() || units <= 0.0 {
            return 0;
        }
        units.floor().min((TIME_BINS - 1) as f64) as u8
    }
}

impl std::str::FromStr for TimeUnit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "minutes" => Ok(TimeUnit::Minutes),
            "seconds" => Ok(TimeUnit::Seconds),
            other => Err(format!("unknown time unit '{other}'")),
        }
    }
}

/// One on-ball action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_type: EventType,
    pub period: u8,
    /// Minutes since the start of the period.
    pub minute: f64,
    pub x: f64,
    pub y: f64,
    pub is_home: bool,
    pub is_accurate: bool,
    pub is_goal: bool,
    /// Score at the event time, including a goal scored by this event.
    pub home_score: u16,
    pub away_score: u16,
    pub team_id: u64,
    pub player_id: u64,
    pub match_id: u64,
}

impl Event {
    pub fn validate(&self) -> Result<()> {
        if self.event_type.index() >= NUM_TYPES {
            return Err(LemError::InvalidEvent(format!(
                "type id {} out of range",
                self.event_type.0
            )));
        }
        if self.period > 1 {
            return Err(LemError::InvalidEvent(format!(
                "period {} (only 0 and 1 are modeled)",
                self.period
            )));
        }
        if !self.minute.is_finite() || self.minute < 0.0 {
            return Err(LemError::InvalidEvent(format!("minute {}", self.minute)));
        }
        for (name, v) in [("x", self.x), ("y", self.y)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LemError::InvalidEvent(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The modeled fields recovered from a [`GameState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedState {
    pub event_type: EventType,
    pub period: u8,
    pub minute: f64,
    pub x: f64,
    pub y: f64,
    pub is_home: bool,
    pub is_accurate: bool,
    pub is_goal: bool,
    pub home_score: u16,
    pub away_score: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameState(pub [f32; STATE_DIM]);

fn flag(b: bool) -> f32 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn score_feature(score: u16) -> f32 {
    score.min(MAX_SCORE) as f32 / 10.0
}

fn score_from_feature(v: f32) -> u16 {
    (v * 10.0).round().max(0.0) as u16
}

impl GameState {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn event_type(&self) -> EventType {
        let idx = self.0[..NUM_TYPES]
            .iter()
            .position(|&v| v == 1.0)
            .unwrap_or(0);
        EventType(idx as u8)
    }

    pub fn period(&self) -> u8 {
        self.0[PERIOD] as u8
    }

    pub fn minute(&self) -> f64 {
        self.0[MINUTE] as f64 * 60.0
    }

    pub fn minute_feature(&self) -> f32 {
        self.0[MINUTE]
    }

    pub fn home_score_feature(&self) -> f32 {
        self.0[HOME_SCORE]
    }

    pub fn away_score_feature(&self) -> f32 {
        self.0[AWAY_SCORE]
    }

    pub fn is_home(&self) -> bool {
        self.0[IS_HOME] == 1.0
    }

    pub fn set_clock(&mut self, period: u8, minute: f64) {
        self.0[PERIOD] = period as f32;
        self.0[MINUTE] = (minute / 60.0) as f32;
    }

    /// The kickoff state: `kickoff_type` at the centre spot, accurate, no goal.
    pub fn kickoff(
        kickoff_type: EventType,
        period: u8,
        is_home: bool,
        home_score: u16,
        away_score: u16,
    ) -> Self {
        let mut v = [0.0f32; STATE_DIM];
        v[kickoff_type.index()] = 1.0;
        v[PERIOD] = period as f32;
        v[X] = 0.5;
        v[Y] = 0.5;
        v[IS_HOME] = flag(is_home);
        v[IS_ACCURATE] = 1.0;
        v[HOME_SCORE] = score_feature(home_score);
        v[AWAY_SCORE] = score_feature(away_score);
        GameState(v)
    }

    pub fn decode(&self) -> DecodedState {
        let v = &self.0;
        DecodedState {
            event_type: self.event_type(),
            period: v[PERIOD] as u8,
            minute: self.minute(),
            x: v[X] as f64,
            y: v[Y] as f64,
            is_home: v[IS_HOME] == 1.0,
            is_accurate: v[IS_ACCURATE] == 1.0,
            is_goal: v[IS_GOAL] == 1.0,
            home_score: score_from_feature(v[HOME_SCORE]),
            away_score: score_from_feature(v[AWAY_SCORE]),
        }
    }

    /// Checks the one-hot block and scalar ranges.
    pub fn validate(&self) -> Result<()> {
        let hot = self.0[..NUM_TYPES].iter().filter(|&&v| v == 1.0).count();
        let zero = self.0[..NUM_TYPES].iter().filter(|&&v| v == 0.0).count();
        if hot != 1 || zero != NUM_TYPES - 1 {
            return Err(LemError::InvalidEvent(
                "state type block is not one-hot".to_string(),
            ));
        }
        if self.0[NUM_TYPES..].iter().any(|v| !v.is_finite()) {
            return Err(LemError::InvalidEvent("non-finite state feature".into()));
        }
        for idx in [HOME_SCORE, AWAY_SCORE] {
            if !(0.0..=1.0).contains(&self.0[idx]) {
                return Err(LemError::InvalidEvent("score feature outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Encodes an event into the 42-wide conditioning vector.
pub fn encode_state(event: &Event) -> Result<GameState> {
    event.validate()?;
    let mut v = [0.0f32; STATE_DIM];
    v[event.event_type.index()] = 1.0;
    v[PERIOD] = event.period as f32;
    v[MINUTE] = (event.minute / 60.0) as f32;
    v[X] = event.x as f32;
    v[Y] = event.y as f32;
    v[IS_HOME] = flag(event.is_home);
    v[IS_ACCURATE] = flag(event.is_accurate);
    v[IS_GOAL] = flag(event.is_goal);
    v[HOME_SCORE] = score_feature(event.home_score);
    v[AWAY_SCORE] = score_feature(event.away_score);
    Ok(GameState(v))
}

/// A sampled next event, in the discretized form the data network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictedEvent {
    pub event_type: EventType,
    pub is_accurate: bool,
    pub is_goal: bool,
    /// Percent grid, `0..=100`.
    pub x_bin: u8,
    pub y_bin: u8,
    /// Time since the previous event, in the cascade's [`TimeUnit`].
    pub time_bin: u8,
    pub is_home: bool,
}

impl PredictedEvent {
    pub fn validate(&self) -> Result<()> {
        if self.event_type.index() >= NUM_TYPES
            || self.x_bin as usize >= X_BINS
            || self.y_bin as usize >= Y_BINS
            || self.time_bin as usize >= TIME_BINS
        {
            return Err(LemError::InvalidEvent(format!("{self:?} out of range")));
        }
        Ok(())
    }
}

/// Updates the state after a predicted event, with time bins in minutes.
pub fn apply_prediction(state: &GameState, pred: &PredictedEvent) -> GameState {
    apply_prediction_in(state, pred, TimeUnit::Minutes)
}

/// Interpretation function: the predicted event becomes the new conditioning
/// event. The clock advances by the elapsed bin; a goal adds one to the
/// scoring side. Period changes are the simulator's job.
pub fn apply_prediction_in(state: &GameState, pred: &PredictedEvent, unit: TimeUnit) -> GameState {
    let old = &state.0;
    let mut v = [0.0f32; STATE_DIM];
    v[pred.event_type.index()] = 1.0;
    v[PERIOD] = old[PERIOD];
    let minute = old[MINUTE] as f64 * 60.0 + pred.time_bin as f64 * unit.minutes_per_bin();
    v[MINUTE] = (minute / 60.0) as f32;
    v[X] = pred.x_bin as f32 / 100.0;
    v[Y] = pred.y_bin as f32 / 100.0;
    v[IS_HOME] = flag(pred.is_home);
    v[IS_ACCURATE] = flag(pred.is_accurate);
    v[IS_GOAL] = flag(pred.is_goal);

    let mut home = score_from_feature(old[HOME_SCORE]);
    let mut away = score_from_feature(old[AWAY_SCORE]);
    if pred.is_goal {
        if pred.is_home {
            home += 1;
        } else {
            away += 1;
        }
    }
    v[HOME_SCORE] = score_feature(home);
    v[AWAY_SCORE] = score_feature(away);
    GameState(v)
}

pub fn one_hot(t: EventType) -> [f32; NUM_TYPES] {
    let mut v = [0.0; NUM_TYPES];
    v[t.index()] = 1.0;
    v
}

/// Percent bin of a coordinate in `[0, 1]`.
pub fn coord_bin(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 100.0).round() as u8
}
