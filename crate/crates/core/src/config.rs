//! Analysis configuration, loaded from a TOML document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::grid::DEFAULT_WINDOW_SECONDS;
use crate::model::{EventType, TierBoundaries, SECONDS_PER_DAY};

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV_VAR: &str = "TRACEGRIND_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// First SCHEDULE to first terminal event.
    #[default]
    Running,
    /// First SUBMIT to first terminal event.
    Submit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub tier_boundaries: TierBoundaries,
    pub duration_mode: DurationMode,
    /// Lower edges of the job-duration bands, in seconds; the last band is
    /// open above. Must start at 0 and ascend strictly.
    pub duration_band_edges: Vec<u64>,
    pub window_seconds: u64,
    /// Collection event types counted per day.
    pub daily_event_labels: Vec<EventType>,
    /// Whether alloc instances contribute to request sums (tasks always do).
    pub include_alloc_instances: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tier_boundaries: TierBoundaries::default(),
            duration_mode: DurationMode::Running,
            duration_band_edges: vec![0, 100, 1000, SECONDS_PER_DAY],
            window_seconds: DEFAULT_WINDOW_SECONDS,
            daily_event_labels: vec![
                EventType::Submit,
                EventType::Schedule,
                EventType::Finish,
                EventType::Kill,
            ],
            include_alloc_instances: false,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let edges = &self.duration_band_edges;
        if edges.first() != Some(&0) {
            return Err(ConfigError::Invalid(
                "duration_band_edges must start at 0".into(),
            ));
        }
        if !edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConfigError::Invalid(
                "duration_band_edges must ascend strictly".into(),
            ));
        }
        if self.window_seconds == 0 || SECONDS_PER_DAY % self.window_seconds != 0 {
            return Err(ConfigError::Invalid(format!(
                "window_seconds {} does not divide a day",
                self.window_seconds
            )));
        }
        if self.daily_event_labels.is_empty() {
            return Err(ConfigError::Invalid("daily_event_labels is empty".into()));
        }
        let mut seen = self.daily_event_labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.daily_event_labels.len() {
            return Err(ConfigError::Invalid(
                "daily_event_labels contains duplicates".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: AnalysisConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
