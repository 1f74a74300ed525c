//! Turns dyadic trajectory logs into regression datasets.
//!
//! Trials are resampled onto a shared `k / rate` grid, screened for the
//! left-turn scenario, split into approach, intersection and exit regions, and
//! converted into feature samples `z = (x_B - x_A, x_lead - x_nominal)` in the
//! lead-aligned frame, where the lead car approaches from the south.

mod build;
mod csv_io;
mod normalize;
mod regions;
mod signal;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use build::{
    build_features, feature_vector, group_by_driver, group_distributions, lead_alignment, prepare_trial,
    process_trial, rotate_quarter, sample_counts, DriverKey, FeatureOptions, NominalSet, PreparedTrial,
    TrialFeatures,
};
pub use csv_io::{read_trials, write_trials};
pub use normalize::{normalize_inputs, normalize_with, train_valid_split, NormalizationMode};
pub use regions::{
    boundary_entry, circle_entry, classify_trial, determine_lead, interaction_window, is_left_turn,
    segment_regions, turn_angle, RegionRadii, LEFT_TURN_RANGE_DEG,
};
pub use signal::{derive_controls, resample, unwrap_angles, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    #[serde(rename = "ISR")]
    Isr,
    #[serde(rename = "NYC")]
    Nyc,
}

impl Site {
    pub const ALL: [Site; 2] = [Site::Isr, Site::Nyc];

    pub fn as_str(self) -> &'static str {
        match self {
            Site::Isr => "ISR",
            Site::Nyc => "NYC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ISR" => Some(Site::Isr),
            "NYC" => Some(Site::Nyc),
            _ => None,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CarId {
    A,
    B,
}

impl CarId {
    pub const ALL: [CarId; 2] = [CarId::A, CarId::B];

    pub fn other(self) -> Self {
        match self {
            CarId::A => CarId::B,
            CarId::B => CarId::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CarId::A => "A",
            CarId::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" => Some(CarId::A),
            "B" => Some(CarId::B),
            _ => None,
        }
    }
}

impl fmt::Display for CarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Approach,
    Intersection,
    Exit,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Approach, Region::Intersection, Region::Exit];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Approach => "approach",
            Region::Intersection => "intersection",
            Region::Exit => "exit",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Accel,
    AngVel,
}

impl Control {
    pub const ALL: [Control; 2] = [Control::Accel, Control::AngVel];

    pub fn as_str(self) -> &'static str {
        match self {
            Control::Accel => "accel",
            Control::AngVel => "ang_vel",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Control::Accel => 0,
            Control::AngVel => 1,
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One logged sample of a car. Position is `[lateral, longitudinal]` in the
/// intersection-centred frame; heading is a bearing clockwise from
/// +longitudinal in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub pos: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub accel: Option<f64>,
    pub ang_vel: Option<f64>,
}

impl Frame {
    pub fn dist(&self) -> f64 {
        self.pos[0].hypot(self.pos[1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Exclusion {
    NotLeftTurn { car: CarId },
    NoIntersectionCrossing,
    NoInteraction,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exclusion::NotLeftTurn { car } => write!(f, "not left turn (car {car})"),
            Exclusion::NoIntersectionCrossing => f.write_str("no intersection crossing"),
            Exclusion::NoInteraction => f.write_str("no interaction"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadTrial {
    pub trial_id: String,
    pub site: Site,
    pub traj_a: Vec<Frame>,
    pub traj_b: Vec<Frame>,
    pub exclusion: Option<Exclusion>,
}

impl DyadTrial {
    pub fn traj(&self, car: CarId) -> &[Frame] {
        match car {
            CarId::A => &self.traj_a,
            CarId::B => &self.traj_b,
        }
    }

    pub fn is_excluded(&self) -> bool {
        self.exclusion.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub t: f64,
    pub z: [f64; 4],
    pub accel: f64,
    pub ang_vel: f64,
    pub region: Region,
    pub lead: CarId,
    pub agent: CarId,
}

impl FeatureSample {
    pub fn control(&self, c: Control) -> f64 {
        match c {
            Control::Accel => self.accel,
            Control::AngVel => self.ang_vel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DistributionKey {
    pub site: Site,
    pub lead: CarId,
    pub region: Region,
    pub control: Control,
}

impl DistributionKey {
    /// All 24 keys in report order.
    pub fn all() -> Vec<DistributionKey> {
        let mut keys = Vec::with_capacity(24);
        for site in Site::ALL {
            for lead in CarId::ALL {
                for region in Region::ALL {
                    for control in Control::ALL {
                        keys.push(DistributionKey { site, lead, region, control });
                    }
                }
            }
        }
        keys
    }

    /// Stable textual key, also used for seed derivation.
    pub fn label(&self) -> String {
        format!("{}/{}/{}/{}", self.site, self.lead, self.region, self.control)
    }
}
