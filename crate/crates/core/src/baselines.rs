//! Comparison schemes: circular flight, fixed-altitude learning, frozen
//! decoding order, maximum power and orthogonal access.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::config::{AccessMode, Config, DecodingMode, PowerMode, TrajectoryMode};
use crate::world::Position3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Circular,
    Fixed2D,
    StaticDecoding,
    MaxPower,
    Oma,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Circular,
        BaselineKind::Fixed2D,
        BaselineKind::StaticDecoding,
        BaselineKind::MaxPower,
        BaselineKind::Oma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Circular => "circular",
            BaselineKind::Fixed2D => "fixed2d",
            BaselineKind::StaticDecoding => "static-order",
            BaselineKind::MaxPower => "max-power",
            BaselineKind::Oma => "oma",
        }
    }

    /// Switch the matching scheme knob of `cfg`.
    pub fn apply(self, cfg: &mut Config) {
        match self {
            BaselineKind::Circular => {
                cfg.trajectory = TrajectoryMode::Circular;
                cfg.power = PowerMode::Max;
            }
            BaselineKind::Fixed2D => cfg.trajectory = TrajectoryMode::Fixed2d,
            BaselineKind::StaticDecoding => cfg.decoding = DecodingMode::Static,
            BaselineKind::MaxPower => cfg.power = PowerMode::Max,
            BaselineKind::Oma => cfg.mode = AccessMode::Oma,
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.name() == s || (s == "static" && *b == BaselineKind::StaticDecoding))
            .ok_or_else(|| {
                let names: Vec<_> = BaselineKind::ALL.iter().map(|b| b.name()).collect();
                format!("unknown baseline `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Apply several baselines; trajectory baselines are mutually exclusive.
pub fn apply_all(kinds: &[BaselineKind], cfg: &mut Config) -> Result<(), String> {
    let trajectories = kinds
        .iter()
        .filter(|k| matches!(k, BaselineKind::Circular | BaselineKind::Fixed2D))
        .count();
    if trajectories > 1 {
        return Err("circular and fixed2d baselines are mutually exclusive".into());
    }
    for &k in kinds {
        k.apply(cfg);
    }
    Ok(())
}

/// Position of UAV `u` at slot `t` on the circle around the area centre.
/// UAVs are spread evenly in phase and fly at the configured UAV speed.
pub fn circular_policy(t: usize, u: usize, cfg: &Config) -> Position3 {
    let (cx, cy) = cfg.area_center();
    let r = cfg.circular_radius;
    let phase = TAU * u as f64 / cfg.num_uavs as f64 + cfg.uav_speed / r * t as f64 * cfg.slot_seconds;
    Position3::new(cx + r * phase.cos(), cy + r * phase.sin(), cfg.circular_altitude)
}
