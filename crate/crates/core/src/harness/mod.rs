//! Monte-Carlo driver, result files and operation counts.

pub mod complexity;
pub mod config;
pub mod montecarlo;
pub mod oracle;
pub mod output;

pub use complexity::{complexity_ekfs, complexity_map, complexity_report, ComplexityMode, ComplexityParams, ComplexityReport};
pub use config::{CodeConfig, Link, Scenario, ScenarioConfig};
pub use montecarlo::{is_flattened, paired_t, run_monte_carlo, run_point, simulate_frame, ErrorStats, PointResult};
pub use output::{emit_results, write_csv};
pub use oracle::{map_ekfs_agreement, AgreementConfig, AgreementReport};
