//! Post-contingency transmission switching for DC network models.
//!
//! After an N-1 outage the engine runs a load-shed minimizing DC dispatch;
//! where load still has to be shed it looks at the branches feeding the
//! shedding buses, ranks switching candidates by their outage distribution
//! factors against those branches, and re-dispatches each candidate to find
//! the switching actions that need the least shedding.

pub mod case;
pub mod cli;
pub mod contingency;
pub mod dispatch;
pub mod error;
pub mod lp;
pub mod report;
pub mod sensitivity;
pub mod switching;
pub mod topology;

pub use case::{load_case, Branch, Bus, Generator, Network};
pub use error::{Error, Result};
