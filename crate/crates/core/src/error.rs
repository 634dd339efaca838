use thiserror::Error;

use crate::lp::LpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("case schema violation: {0}")]
    Schema(String),

    #[error("duplicate bus {0}")]
    DuplicateBus(usize),

    #[error("duplicate generator {0}")]
    DuplicateGenerator(usize),

    #[error("unknown bus {0}")]
    UnknownBus(usize),

    #[error("invalid load at bus {bus}: {load_mw}")]
    InvalidLoad { bus: usize, load_mw: f64 },

    #[error("branch {0} connects a bus to itself")]
    SelfLoop(usize),

    #[error("nonpositive reactance, branch {0}")]
    NonpositiveReactance(usize),

    #[error("nonpositive rating, branch {0}")]
    NonpositiveRating(usize),

    #[error("invalid limits on generator {0}")]
    GeneratorLimits(usize),

    #[error("invalid cost on generator {0}")]
    GeneratorCost(usize),

    #[error("nonpositive base_mva")]
    BaseMva,

    #[error("slack bus {0} does not exist")]
    SlackMissing(usize),

    #[error("network is disconnected (bus {0} unreachable from the slack bus)")]
    Disconnected(usize),

    #[error("total generation capacity {capacity_mw:.3} MW is below total load {load_mw:.3} MW")]
    InsufficientCapacity { capacity_mw: f64, load_mw: f64 },

    #[error("unknown branch {0}")]
    UnknownBranch(usize),

    #[error("branch {0} is already out of service")]
    BranchOutOfService(usize),

    #[error("unknown generator {0}")]
    UnknownGenerator(usize),

    #[error("injections do not balance: mismatch {0:.6} MW")]
    Unbalanced(f64),

    #[error("singular susceptance matrix")]
    Singular,

    #[error("branch {0} is a bridge; its outage islands the network")]
    Bridge(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimization failed: {0}")]
    Lp(#[from] LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the analysis itself (islanding, infeasible or
    /// numerically broken solves) as opposed to bad input.
    pub fn is_analysis_failure(&self) -> bool {
        matches!(
            self,
            Error::Disconnected(_)
                | Error::Singular
                | Error::Bridge(_)
                | Error::Lp(_)
                | Error::Unbalanced(_)
                | Error::InsufficientCapacity { .. }
        )
    }
}
