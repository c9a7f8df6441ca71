pub mod config;
pub mod events;
pub mod presets;
pub mod report;

pub use config::{parse_config, parse_scenario_set, serialize_config, ConfigError, Scenario};
pub use events::{read_events, write_events, EventFile, EventHeader};
pub use report::{export_report, ReportDocument, ReportFormat};
