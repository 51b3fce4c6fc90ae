//! Files in and out: ranking CSVs, run configuration, traces and summary
//! tables.

pub mod config;
pub mod export;
pub mod rankings;
pub mod run;
pub mod trace;

pub use config::{fresh_seed, ModelKind, RunConfig, Schedule};
pub use export::{write_curve, write_heatmap};
pub use rankings::{parse_rankings, parse_rankings_from, write_rankings, write_rankings_file};
pub use run::{run_fit, run_summarize, trace_header, Progress, SummarizeOptions, Summary};
pub use trace::{read_trace, read_trace_from, write_trace, TraceHeader, TraceWriter, TRACE_VERSION};
