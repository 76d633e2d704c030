pub mod config;
pub mod plotdata;
pub mod result;
pub mod trace_csv;

pub use config::{parse_config, parse_config_with_seed, ConfigError, Experiment, ExperimentConfig, ExperimentKind};
pub use plotdata::{emit_plotdata, PlotFile};
pub use result::{config_hash, ResultDocument};
pub use trace_csv::{read_trace, write_trace, TraceMeta};
