//! Scenario files.
//!
//! Scenarios are TOML documents. Every key is optional; omitted keys take the
//! defaults below and unknown keys are rejected.
//!
//! ```toml
//! case_id = 9                 # 1..=9, or give a [case] table instead
//! vehicle_mode = "full6"      # or "reduced4"
//! max_steps = 60000
//! stream = false              # emit the command stream
//!
//! [goal]
//! position = [1.0, 0.0, 0.0]  # m, world frame
//! yaw = 1.0                   # rad, goal orientation is Rz(yaw)
//!
//! [geometry]
//! l1 = 0.2
//! l2 = 0.2
//! r_ab = [0.2, 0.0, -0.1]
//! mount_ypr = [0.0, 0.0, 0.0]
//! theta_min = -1.0471975511965976
//! theta_max = 1.0471975511965976
//!
//! [controller]
//! v_max = 0.1
//! v_min = 0.005
//! omega_max = 0.3
//! omega_min = 0.015
//! e_p = 0.01
//! e_mu = 0.02
//! lambda_p = 10.0
//! lambda_mu = 10.0
//! dt = 0.01
//!
//! [gains]
//! lambda_pre = 0.3
//! lambda_tra = 0.8
//! psi_tra = [0.0, 0.0]
//! psi_pre = [-0.7853981633974483, 0.7853981633974483]
//!
//! [case]                      # only when case_id is absent
//! weighting = "wc_wj_wm"      # identity | wc | wc_wj | wc_wj_wm
//! k1 = 3.0
//! k2 = -0.05
//! k3 = -0.1
//!
//! [output]
//! dir = "out"
//! stream_path = "commands.jsonl"   # optional; stdout when absent
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlSetup, ControllerParams, DEFAULT_MAX_STEPS};
use crate::geometry::{rot_z, Vec3};
use crate::jacobian::VehicleMode;
use crate::model::{GeometryParams, Pose, RobotState};
use crate::redundancy::SubtaskGains;
use crate::sim::cases::{reference_case, CaseSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalConfig {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        Self {
            position: [1.0, 0.0, 0.0],
            yaw: 1.0,
        }
    }
}

impl GoalConfig {
    pub fn pose(&self) -> Pose {
        Pose::new(Vec3::from(self.position), rot_z(self.yaw))
    }
}

/// Phase thresholds and arm poses; the subtask gains come from the case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub lambda_pre: f64,
    pub lambda_tra: f64,
    pub psi_tra: [f64; 2],
    pub psi_pre: [f64; 2],
}

impl Default for PhaseConfig {
    fn default() -> Self {
        let g = SubtaskGains::default();
        Self {
            lambda_pre: g.lambda_pre,
            lambda_tra: g.lambda_tra,
            psi_tra: g.psi_tra,
            psi_pre: g.psi_pre,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream_path: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".to_string(),
            stream_path: None,
        }
    }
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<u8>,
    #[serde(default)]
    pub vehicle_mode: VehicleMode,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub stream: bool,
    #[serde(default)]
    pub goal: GoalConfig,
    #[serde(default)]
    pub geometry: GeometryParams,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub gains: PhaseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<CaseSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            case_id: Some(9),
            vehicle_mode: VehicleMode::Full6,
            max_steps: DEFAULT_MAX_STEPS,
            stream: false,
            goal: GoalConfig::default(),
            geometry: GeometryParams::default(),
            controller: ControllerParams::default(),
            gains: PhaseConfig::default(),
            case: None,
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Default scenario running reference case `id`.
    pub fn reference(id: u8) -> Self {
        Self {
            case_id: Some(id),
            ..Self::default()
        }
    }

    /// Switches to reference case `id`, dropping any explicit `[case]` table.
    pub fn with_case(mut self, id: u8) -> Self {
        self.case_id = Some(id);
        self.case = None;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        match (self.case_id, &self.case) {
            (Some(_), Some(_)) => {
                problems.push("give either case_id or a [case] table, not both".to_string())
            }
            (Some(id), None) if reference_case(id).is_none() => {
                problems.push(format!("case_id must be in 1..=9, got {id}"))
            }
            (None, None) => problems.push("missing case_id or [case] table".to_string()),
            _ => {}
        }
        if let Some(c) = &self.case {
            if ![c.k1, c.k2, c.k3].iter().all(|v| v.is_finite()) {
                problems.push("case: gains must be finite".to_string());
            }
        }
        if self.max_steps == 0 {
            problems.push("max_steps must be positive".to_string());
        }
        if !(self.goal.position.iter().all(|v| v.is_finite()) && self.goal.yaw.is_finite()) {
            problems.push("goal: values must be finite".to_string());
        }
        problems.extend(self.geometry.validate());
        problems.extend(self.controller.validate());
        problems.extend(self.subtask_gains().validate());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(problems))
        }
    }

    /// The weighting and gains in effect, expanding `case_id` from the reference table.
    pub fn case_spec(&self) -> Option<CaseSpec> {
        match (self.case_id, self.case) {
            (_, Some(c)) => Some(c),
            (Some(id), None) => reference_case(id),
            (None, None) => None,
        }
    }

    /// Identifier used in file names and summary rows.
    pub fn label(&self) -> String {
        match self.case_id {
            Some(id) => id.to_string(),
            None => "custom".to_string(),
        }
    }

    pub fn subtask_gains(&self) -> SubtaskGains {
        let case = self.case_spec();
        SubtaskGains {
            k1: case.map_or(0.0, |c| c.k1),
            k2: case.map_or(0.0, |c| c.k2),
            k3: case.map_or(0.0, |c| c.k3),
            lambda_pre: self.gains.lambda_pre,
            lambda_tra: self.gains.lambda_tra,
            psi_tra: self.gains.psi_tra,
            psi_pre: self.gains.psi_pre,
        }
    }

    /// Controller inputs for this scenario, starting from the zero state.
    ///
    /// Call [`ScenarioConfig::validate`] first; an unresolved case panics.
    pub fn control_setup(&self) -> ControlSetup {
        let case = self.case_spec().expect("validated scenario has a case");
        ControlSetup {
            geometry: self.geometry.clone(),
            params: self.controller.clone(),
            gains: self.subtask_gains(),
            weighting: case.weighting,
            mode: self.vehicle_mode,
            goal: self.goal.pose(),
            initial_state: RobotState::default(),
            max_steps: self.max_steps,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }
}

/// Parses scenario text without validating it, so callers can apply overrides first.
pub fn parse_scenario_unvalidated(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })
}

/// Parses and validates scenario text. `origin` names the source in diagnostics.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigError> {
    let config = parse_scenario_unvalidated(text, origin)?;
    config.validate()?;
    Ok(config)
}

pub fn read_scenario_unvalidated(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_unvalidated(&text, &path.display().to_string())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let config = read_scenario_unvalidated(path)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::redundancy::WeightingScheme;

    #[test]
    fn case_ids_expand() {
        let c = parse_scenario("case_id = 1", "t").unwrap();
        let spec = c.case_spec().unwrap();
        assert_eq!(spec.weighting, WeightingScheme::Identity);
        assert_eq!((spec.k1, spec.k2, spec.k3), (0.0, 0.0, 0.0));
        let c = parse_scenario("case_id = 9", "t").unwrap();
        let g = c.subtask_gains();
        assert_eq!((g.k1, g.k2, g.k3), (3.0, -0.05, -0.1));
        assert_eq!(c.control_setup().weighting, WeightingScheme::WcWjWm);
    }

    #[test]
    fn reference_goal() {
        let text = "case_id = 5\n[goal]\nposition = [1.0, 0.0, 0.0]\nyaw = 1.0\n";
        let c = parse_scenario(text, "t").unwrap();
        let goal = c.goal.pose();
        assert_eq!(goal.p, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(goal.r, rot_z(1.0));
        assert_eq!(c, ScenarioConfig::reference(5));
    }

    #[test]
    fn explicit_case_table() {
        let text = "[case]\nweighting = \"wc_wj\"\nk2 = -0.2\n";
        let c = parse_scenario(text, "t").unwrap();
        assert_eq!(c.label(), "custom");
        let spec = c.case_spec().unwrap();
        assert_eq!(spec.weighting, WeightingScheme::WcWj);
        assert_eq!(spec.k2, -0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_scenario("case_id = 2\n[controller]\nv_maxx = 0.3\n", "scn.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scn.toml"), "{msg}");
        assert!(msg.contains("v_maxx"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = "case_id = 12\nmax_steps = 0\n[controller]\ndt = -1.0\n";
        match parse_scenario(text, "t") {
            Err(ConfigError::Validation(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
        let both = "case_id = 2\n[case]\nweighting = \"wc\"\n";
        assert!(matches!(parse_scenario(both, "t"), Err(ConfigError::Validation(_))));
        let bad_band = "case_id = 2\n[gains]\nlambda_pre = 0.9\n";
        assert!(matches!(parse_scenario(bad_band, "t"), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let text = "case_id = 3\nvehicle_mode = \"reduced4\"\n[geometry]\nl1 = 0.25\n";
        let c = parse_scenario(text, "t").unwrap();
        let once = c.to_toml();
        let again = parse_scenario(&once, "t").unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml(), once);
    }
}
