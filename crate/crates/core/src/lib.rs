//! Two-level reinforcement learning for mixed recommendation and ad display.
//!
//! The first level ([`rs_agent`]) builds a rec-list with a cascading DQN; the
//! second level ([`as_agent`]) scores every (ad, insertion slot) pair with a
//! dueling DQN, and the bidding system ([`auction`]) turns those scores plus
//! advertiser revenue into the executed ad action. [`trainer`] runs off-policy
//! training from logged sessions and online tests against [`env`].

pub mod as_agent;
pub mod auction;
pub mod domain;
pub mod env;
pub mod error;
pub mod nn;
pub mod rs_agent;
pub mod state;
pub mod trainer;

pub use error::{RamError, Result};
