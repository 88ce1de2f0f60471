//! Text configuration of a single jump: robot, window and solver settings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{JumpProblem, PhaseGrid, SolverConfig};
use crate::collision::WindowObstacle;
use crate::model::{ModelParams, PAYLOAD_MASS};
use crate::world::{WindowEntry, WorldScenario};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read configuration: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

/// Window cross-section, as seen in the plane of the jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub sill: f64,
    pub opening: f64,
    pub thickness: f64,
    pub lintel: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self { sill: 0.13, opening: 0.7, thickness: 0.05, lintel: 0.3 }
    }
}

impl From<&WindowEntry> for WindowSection {
    fn from(w: &WindowEntry) -> Self {
        Self { sill: w.sill, opening: w.opening, thickness: w.thickness, lintel: w.lintel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    /// Carry the sensor payload.
    pub payload: bool,
    /// Distance from the start pose to the window plane, m.
    pub standoff: f64,
    pub d_min: f64,
    pub window: WindowSection,
    pub model: ModelParams,
    pub grid: PhaseGrid,
    pub solver: SolverConfig,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            payload: true,
            standoff: 0.4,
            d_min: 0.03,
            window: WindowSection::default(),
            model: ModelParams::default(),
            grid: PhaseGrid::default(),
            solver: SolverConfig::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

impl JumpConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Jump through the first window of a scenario.
    pub fn from_scenario(s: &WorldScenario) -> Result<Self, ConfigError> {
        let w = s.windows.first().ok_or_else(|| invalid("window", "scenario has no window to jump through"))?;
        let c = Self { payload: s.payload, window: w.into(), ..Self::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| match e {
            crate::model::ModelError::InvalidParam { field, reason } => invalid(&format!("model.{field}"), reason),
            other => invalid("model", other.to_string()),
        })?;
        if !(self.standoff > 0.0) {
            return Err(invalid("standoff", "must be positive"));
        }
        if !(self.d_min >= 0.0) {
            return Err(invalid("d_min", "must be nonnegative"));
        }
        let w = &self.window;
        if !(w.sill >= 0.0) {
            return Err(invalid("window.sill", "must be nonnegative"));
        }
        for (name, v) in [("window.opening", w.opening), ("window.thickness", w.thickness), ("window.lintel", w.lintel)] {
            if !(v > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        self.grid.validate().map_err(|e| invalid("grid", e.to_string()))?;
        if self.solver.max_iter == 0 || !(self.solver.tol > 0.0) {
            return Err(invalid("solver", "max_iter and tol must be positive"));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        if self.payload {
            self.model.with_payload(PAYLOAD_MASS)
        } else {
            self.model.clone()
        }
    }

    pub fn obstacle(&self) -> Result<WindowObstacle, ConfigError> {
        let w = &self.window;
        WindowObstacle::new(self.standoff, w.thickness, w.sill, w.opening, w.sill + w.opening + w.lintel)
            .map_err(|e| invalid("window", e.to_string()))
    }

    pub fn problem(&self) -> Result<JumpProblem, ConfigError> {
        let mut p = JumpProblem::standing(self.params(), self.obstacle()?, self.d_min);
        p.grid = self.grid.clone();
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_the_default_jump() {
        let c = JumpConfig::parse("").unwrap();
        assert_eq!(c, JumpConfig::default());
        assert_eq!(c.params().body_mass, ModelParams::default().body_mass + PAYLOAD_MASS);
    }

    #[test]
    fn round_trip_through_text() {
        let mut c = JumpConfig::default();
        c.window.sill = 0.2;
        c.payload = false;
        c.solver.multi_start = 3;
        assert_eq!(JumpConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn negative_link_length_names_the_field() {
        let err = JumpConfig::parse("[model]\nlink_length = [-0.2, 0.21]\n").unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "model.link_length"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_are_parse_errors_with_location() {
        let err = JumpConfig::parse("payload = true\nsil = 0.1\n").unwrap_err();
        let ConfigError::Parse(msg) = err else { panic!() };
        assert!(msg.contains("sil") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn window_fields_are_checked() {
        let err = JumpConfig::parse("[window]\nopening = 0.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "window.opening"));
    }
}
