//! Latency/energy resource allocation for federated learning over a shared
//! wireless uplink.
//!
//! Every device picks a transmit power `p`, a CPU frequency `f`, and all
//! devices share a local accuracy `θ`. The objective is the worst device's
//! weighted energy-plus-latency cost over the whole training run, subject
//! to per-device latency, upload-energy and frequency budgets.
//! [`optimize`] alternates a dual block solver for `(p, f)` with a harmony
//! search over `θ`.
//!
//! ```
//! use fedalloc::{optimize, stream, DeviceProfile, OptimizerConfig, Purpose};
//!
//! let device = DeviceProfile {
//!     d_size: 7.5e6,
//!     b_cycles: 40.0,
//!     c_payload: 4500.0,
//!     rho: 0.05,
//!     zeta: 3.0,
//!     f_max: 2.0,
//!     t_max: 4.0,
//!     e_up_max: 20.0,
//!     w_time: 0.5,
//!     w_energy: 0.5,
//!     sigma: 2000.0,
//! };
//! let devices = vec![device; 3];
//! let mut rng = stream(7, 0, Purpose::Proposed);
//! let result = optimize(&devices, &OptimizerConfig::default(), &mut rng).unwrap();
//! assert!(result.feasible);
//! ```

pub mod alternating;
pub mod channel;
pub mod cost;
pub mod cubic;
pub mod dual;
pub mod error;
pub mod harmony;
pub mod oracle;
pub mod rng;

pub use alternating::{optimize, run_method, Method, OptimizationResult, OptimizerConfig};
pub use channel::{ChannelParams, ChannelState};
pub use cost::{AccuracyConfig, Allocation, CostReport, DeviceCost, DeviceProfile};
pub use dual::{solve_block, BlockSolution, DualState, Multipliers};
pub use error::{Error, Result};
pub use harmony::{harmony_search, HarmonyParams};
pub use rng::{stream, Purpose, StreamRng};

// Compiles and runs the code blocks of the guide as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/block-solver.md")]
    mod block_solver {}
    #[doc = include_str!("../../../book/src/accuracy-search.md")]
    mod accuracy_search {}
    #[doc = include_str!("../../../book/src/alternating.md")]
    mod alternating {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
}
