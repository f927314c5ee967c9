//! Large events models for soccer.
//!
//! A three-stage cascade of feed-forward networks predicts the next on-ball
//! event from the current game state: its type, then its accuracy and goal
//! flags, then its location, the time elapsed and the acting side. Rolling the
//! cascade forward from kickoff simulates whole matches; fine-tuning the
//! cascade on team or player subsets turns those simulations into what-if
//! analyses of transfers.

pub mod analytics;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod event;
pub mod ingest;
pub mod nnet;
pub mod sim;
pub mod train;
pub mod vocab;

pub use error::{LemError, Result};
