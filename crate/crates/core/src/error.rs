use crate::cost::Allocation;

/// Errors raised by the cost model, the solvers and the oracles.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("channel has not been advanced past slot 0 (rtt = 0)")]
    ChannelNotWarmed,

    #[error("degenerate Lagrangian: every cost coefficient is zero")]
    DegenerateObjective,

    #[error("no sign change of the stationarity derivative on [{lo}, {hi}]")]
    NumericalBracket { lo: f64, hi: f64 },

    #[error("block solver found no feasible point at theta = {theta} (worst latency excess {violation} s)")]
    InfeasibleBlock {
        theta: f64,
        violation: f64,
        least_violating: Box<Allocation>,
    },

    #[error("objective is not finite at theta = {theta}")]
    ObjectiveEvaluation { theta: f64 },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("rejection sampling exhausted after {tries} draws for device {device}")]
    InfeasibleBaseline { device: usize, tries: usize },

    #[error("grid oracle supports at most 3 devices, got {devices}")]
    OracleTooLarge { devices: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure(cond: bool, name: &'static str, value: f64) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}
