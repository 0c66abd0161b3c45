//! Scenario files, runs and reports for the tollway simulator.

pub mod compare;
pub mod config;
pub mod output;
pub mod scenario;

pub use config::{parse_config, parse_config_str, ConfigError, ScenarioConfig};
pub use scenario::{analyze_config, run_config, run_with_policy, RunError, RunOutput, SplitPolicy, Trajectory};

/// Scenario files shipped with the tool, by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 5] = [
    ("scenario_1a", include_str!("../scenarios/scenario_1a.json")),
    ("scenario_1b", include_str!("../scenarios/scenario_1b.json")),
    ("scenario_2", include_str!("../scenarios/scenario_2.json")),
    ("scenario_3", include_str!("../scenarios/scenario_3.json")),
    ("compare_corridor", include_str!("../scenarios/compare_corridor.json")),
];

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_config_str(text).expect("bundled scenario is valid"))
}
