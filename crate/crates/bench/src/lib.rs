//! Seeded benchmark harness for `fedalloc`: scenario configs, the method
//! suite with its CSV tables, report summaries and the acceptance checks.

pub mod checks;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;
pub mod suite;

pub use config::{load_config, parse_config, DeviceCount, ScenarioConfig};
pub use error::{BenchError, Result};
pub use scenario::generate_scenario;
pub use suite::{run_suite, write_outputs, RunRecord, SuiteOutput};
