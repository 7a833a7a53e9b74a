//! Radio/IMU/vision SLAM: an EKF over the UE pose and virtual anchors (mirror
//! images of the BS), surface recovery from the anchors, and the corridor
//! experiment used to compare modality combinations.

mod filter;
mod run;
mod surfaces;
mod world;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub use filter::{reflection_point, triangulate, Anchor, AnchorTrack, RadioUpdateReport, SlamState};
pub use run::{imu_drift_profile, nees_experiment, run_slam, NeesSummary, SlamMetrics, SlamRun, TrajectoryRow};
pub use surfaces::{mapping_error, recover_surfaces};
pub use world::{CorridorScenario, ImuModel, VisionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Bs,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    /// Gyro-integrated heading.
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionTarget {
    pub position: Point,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionDetection {
    pub t: f64,
    pub targets: Vec<VisionTarget>,
    pub lost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingMeasurement {
    pub t: f64,
    /// Arrival azimuth in the UE body frame, (-pi, pi].
    pub bearing: f64,
    /// Global departure azimuth at the BS, when known.
    pub aod: Option<f64>,
    /// Monostatic range toward the reflector, when known.
    pub range: Option<f64>,
    /// 0 = BS, `i + 1` = virtual anchor `i`.
    pub anchor_hint: Option<usize>,
    pub rsrp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamConfig {
    pub sigma_speed: f64,
    pub sigma_yaw_rate: f64,
    /// Extra position diffusion (m^2/s) covering IMU biases.
    pub q_pos: f64,
    pub q_heading: f64,
    /// Diffusion used when no IMU is available.
    pub blind_q_pos: f64,
    pub blind_q_heading: f64,
    pub sigma_aoa: f64,
    pub sigma_aod: f64,
    pub sigma_range: f64,
    pub default_range: f64,
    /// Chi-square gate for bearing association (2 dof).
    pub gate: f64,
    pub vision_gate: f64,
    pub vision_loss_inflation: f64,
    /// Unexplained paths weaker than the strongest by more than this never spawn anchors.
    pub spawn_margin_db: f64,
    pub spawn_consistency_m: f64,
    /// Anchors with covariance trace above this are not used for mapping.
    pub anchor_trust_trace: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            sigma_speed: 0.05,
            sigma_yaw_rate: 0.01,
            q_pos: 2e-4,
            q_heading: 1e-4,
            blind_q_pos: 0.25,
            blind_q_heading: 0.01,
            sigma_aoa: 1.5f64.to_radians(),
            sigma_aod: 1.5f64.to_radians(),
            sigma_range: 0.3,
            default_range: 10.0,
            gate: 9.21,
            vision_gate: 13.8,
            vision_loss_inflation: 4.0,
            spawn_margin_db: 25.0,
            spawn_consistency_m: 1.5,
            anchor_trust_trace: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Modalities {
    pub radio: bool,
    pub imu: bool,
    pub vision: bool,
}

impl Modalities {
    pub const ALL: Modalities = Modalities {
        radio: true,
        imu: true,
        vision: true,
    };

    /// Parse a comma-separated list such as `radio,imu,vision`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut m = Modalities::default();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "radio" => m.radio = true,
                "imu" => m.imu = true,
                "vision" => m.vision = true,
                other => return Err(Error::Config(format!("unknown modality \"{other}\""))),
            }
        }
        if m.is_empty() {
            return Err(Error::Empty("modality set"));
        }
        Ok(m)
    }

    pub fn is_empty(&self) -> bool {
        !(self.radio || self.imu || self.vision)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.radio {
            parts.push("radio");
        }
        if self.imu {
            parts.push("imu");
        }
        if self.vision {
            parts.push("vision");
        }
        parts.join(",")
    }
}
