//! Experiment configuration.
//!
//! [`Config`] carries every physical parameter of the offloading scenario
//! together with the learning and baseline knobs. It is populated from a
//! flat `key = value` text format; unknown keys are rejected.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

/// How users move between slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MobilityKind {
    RandomRoaming,
    DirectionalWalking,
}

/// Where users start at the beginning of each episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayoutKind {
    /// Same initial positions and headings every episode (drawn once from the seed).
    Fixed,
    /// Fresh initial positions every episode.
    Random,
}

/// Evaluation mode of the LoS probability when the horizontal distance exceeds `d0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LosMode {
    /// `d0/r + exp(-(r - d0)/p1)`, clamped to `[0, 1]`.
    AsPrintedClamped,
    /// `d0/r + exp(-(r - d0)/p1) * (1 - d0/r)`.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FadingKind {
    Deterministic,
    RayleighPower,
}

/// Which channel gain multiplies the power of a not-yet-cancelled cluster member
/// in the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntraGain {
    /// The interfering member's own gain, `g_{pi(i)} * P_{pi(i)}`.
    Interferer,
    /// The receiving user's gain, `g_{pi(k)} * P_{pi(i)}`.
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AccessMode {
    Noma,
    Oma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AgentMode {
    /// One evaluation/target network pair shared by every UAV.
    Shared,
    /// One evaluation/target network pair per UAV.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrajectoryMode {
    /// Learned 3-D movement (seven actions).
    Learned3d,
    /// Learned horizontal movement at a pinned altitude (five actions).
    Fixed2d,
    /// Scripted circle around the area centre.
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecodingMode {
    /// SIC order recomputed every slot.
    Dynamic,
    /// SIC order computed when a cluster forms and frozen until re-clustering.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerMode {
    /// Split profile chosen by the agent.
    Learned,
    /// Full power, equal split across cluster members.
    Max,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "expected one of [{}], got `{}`",
                        [$($name),+].join(", "),
                        other
                    )),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($ty::$variant => $name,)+
                })
            }
        }
    };
}

keyword_enum!(MobilityKind { RandomRoaming => "random", DirectionalWalking => "directional" });
keyword_enum!(LayoutKind { Fixed => "fixed", Random => "random" });
keyword_enum!(LosMode { AsPrintedClamped => "as-printed", Corrected => "corrected" });
keyword_enum!(FadingKind { Deterministic => "deterministic", RayleighPower => "rayleigh" });
keyword_enum!(IntraGain { Interferer => "interferer", Receiver => "receiver" });
keyword_enum!(AccessMode { Noma => "noma", Oma => "oma" });
keyword_enum!(AgentMode { Shared => "shared", Independent => "independent" });
keyword_enum!(TrajectoryMode { Learned3d => "learned3d", Fixed2d => "fixed2d", Circular => "circular" });
keyword_enum!(DecodingMode { Dynamic => "dynamic", Static => "static" });
keyword_enum!(PowerMode { Learned => "learned", Max => "max" });

/// A power split: fractions of `P_max` handed out in decoding order,
/// weakest equivalent gain first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerProfile(pub Vec<f64>);

impl PowerProfile {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Fractions for a cluster of `n` members. Clusters smaller than the
    /// profile take its first `n` entries rescaled to the profile total.
    pub fn fractions_for(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        if n >= self.0.len() {
            let mut out = self.0.clone();
            out.resize(n, 0.0);
            return out;
        }
        let head = &self.0[..n];
        let head_sum: f64 = head.iter().sum();
        let total = self.total();
        if head_sum > 0.0 {
            head.iter().map(|f| f * total / head_sum).collect()
        } else {
            vec![total / n as f64; n]
        }
    }

    /// Equal split of the full budget.
    pub fn equal(n: usize) -> Self {
        PowerProfile(vec![1.0 / n.max(1) as f64; n])
    }
}

fn format_profiles(profiles: &[PowerProfile]) -> String {
    profiles
        .iter()
        .map(|p| {
            p.0.iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_profiles(s: &str) -> Result<Vec<PowerProfile>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split('/')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad fraction `{f}`: {e}"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(PowerProfile)
        })
        .collect()
}

/// All parameters of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    // Scenario.
    pub num_uavs: usize,
    pub num_users: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Users' maximum speed, m/s.
    pub user_max_speed: f64,
    /// UAV speed, m/s.
    pub uav_speed: f64,
    pub slot_seconds: f64,
    /// Slots per episode.
    pub slots: usize,
    /// Slots between re-clustering.
    pub recluster_period: usize,
    pub recluster: bool,
    pub mobility: MobilityKind,
    pub layout: LayoutKind,
    pub initial_altitude: f64,
    pub seed: u64,

    // Radio.
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_max_dbm: f64,
    pub qos_bps: f64,
    pub los_mode: LosMode,
    pub fading: FadingKind,
    pub intra_gain: IntraGain,

    // Clustering.
    /// Maximum users per UAV.
    pub max_load: usize,
    pub kmeans_iters: usize,

    // MDP.
    pub power_profiles: Vec<PowerProfile>,
    pub lambda_cap: u32,
    pub gain_offset_db: f64,
    pub gain_span_db: f64,
    pub reward_scale: f64,

    // Learning.
    pub hidden: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_update: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub episodes: usize,
    pub eval_episodes: usize,

    // Scheme.
    pub mode: AccessMode,
    pub agent_mode: AgentMode,
    pub trajectory: TrajectoryMode,
    pub decoding: DecodingMode,
    pub power: PowerMode,
    pub circular_radius: f64,
    pub circular_altitude: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            num_uavs: 3,
            num_users: 6,
            x_min: 0.0,
            x_max: 500.0,
            y_min: 0.0,
            y_max: 500.0,
            h_min: 20.0,
            h_max: 150.0,
            user_max_speed: 0.5,
            uav_speed: 5.0,
            slot_seconds: 1.0,
            slots: 180,
            recluster_period: 60,
            recluster: true,
            mobility: MobilityKind::RandomRoaming,
            layout: LayoutKind::Fixed,
            initial_altitude: 100.0,
            seed: 1,

            carrier_ghz: 2.0,
            bandwidth_hz: 15_000.0,
            noise_psd_dbm_hz: -100.0,
            p_max_dbm: 29.0,
            qos_bps: 150.0,
            los_mode: LosMode::Corrected,
            fading: FadingKind::Deterministic,
            intra_gain: IntraGain::Interferer,

            max_load: 2,
            kmeans_iters: 50,

            power_profiles: vec![
                PowerProfile(vec![0.2, 0.8]),
                PowerProfile(vec![0.35, 0.65]),
                PowerProfile(vec![0.5, 0.5]),
            ],
            lambda_cap: 16,
            gain_offset_db: 150.0,
            gain_span_db: 100.0,
            reward_scale: 1e-5,

            hidden: 40,
            learning_rate: 0.001,
            discount: 1.0,
            replay_capacity: 10_000,
            batch_size: 128,
            target_update: 1000,
            epsilon_start: 0.9,
            epsilon_end: 0.0,
            episodes: 300,
            eval_episodes: 1,

            mode: AccessMode::Noma,
            agent_mode: AgentMode::Shared,
            trajectory: TrajectoryMode::Learned3d,
            decoding: DecodingMode::Dynamic,
            power: PowerMode::Learned,
            circular_radius: 150.0,
            circular_altitude: 100.0,
        }
    }
}

/// Keys that steer a run but do not change what a trained network means.
/// They are excluded from [`Config::digest`].
const RUN_CONTROL_KEYS: &[&str] = &[
    "seed",
    "episodes",
    "eval_episodes",
    "slots",
    "recluster_period",
    "recluster",
    "mobility",
    "layout",
    "fading",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("invalid value `{value}` for `{key}`: {e}"))
}

impl Config {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "num_uavs" => self.num_uavs = parse_value(key, v)?,
            "num_users" => self.num_users = parse_value(key, v)?,
            "x_min" => self.x_min = parse_value(key, v)?,
            "x_max" => self.x_max = parse_value(key, v)?,
            "y_min" => self.y_min = parse_value(key, v)?,
            "y_max" => self.y_max = parse_value(key, v)?,
            "h_min" => self.h_min = parse_value(key, v)?,
            "h_max" => self.h_max = parse_value(key, v)?,
            "user_max_speed" => self.user_max_speed = parse_value(key, v)?,
            "uav_speed" => self.uav_speed = parse_value(key, v)?,
            "slot_seconds" => self.slot_seconds = parse_value(key, v)?,
            "slots" => self.slots = parse_value(key, v)?,
            "recluster_period" | "tr" => self.recluster_period = parse_value(key, v)?,
            "recluster" => self.recluster = parse_value(key, v)?,
            "mobility" => self.mobility = parse_value(key, v)?,
            "layout" => self.layout = parse_value(key, v)?,
            "initial_altitude" => self.initial_altitude = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "carrier_ghz" => self.carrier_ghz = parse_value(key, v)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_value(key, v)?,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = parse_value(key, v)?,
            "p_max_dbm" => self.p_max_dbm = parse_value(key, v)?,
            "qos_bps" => self.qos_bps = parse_value(key, v)?,
            "los_mode" => self.los_mode = parse_value(key, v)?,
            "fading" => self.fading = parse_value(key, v)?,
            "intra_gain" => self.intra_gain = parse_value(key, v)?,
            "eta" | "max_load" => self.max_load = parse_value(key, v)?,
            "kmeans_iters" => self.kmeans_iters = parse_value(key, v)?,
            "power_profiles" => self.power_profiles = parse_profiles(v)?,
            "lambda_cap" => self.lambda_cap = parse_value(key, v)?,
            "gain_offset_db" => self.gain_offset_db = parse_value(key, v)?,
            "gain_span_db" => self.gain_span_db = parse_value(key, v)?,
            "reward_scale" => self.reward_scale = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "discount" => self.discount = parse_value(key, v)?,
            "replay_capacity" => self.replay_capacity = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "target_update" => self.target_update = parse_value(key, v)?,
            "epsilon_start" => self.epsilon_start = parse_value(key, v)?,
            "epsilon_end" => self.epsilon_end = parse_value(key, v)?,
            "episodes" => self.episodes = parse_value(key, v)?,
            "eval_episodes" => self.eval_episodes = parse_value(key, v)?,
            "mode" => self.mode = parse_value(key, v)?,
            "agent_mode" => self.agent_mode = parse_value(key, v)?,
            "trajectory" => self.trajectory = parse_value(key, v)?,
            "decoding" => self.decoding = parse_value(key, v)?,
            "power" => self.power = parse_value(key, v)?,
            "circular_radius" => self.circular_radius = parse_value(key, v)?,
            "circular_altitude" => self.circular_altitude = parse_value(key, v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_uavs", self.num_uavs.to_string()),
            ("num_users", self.num_users.to_string()),
            ("x_min", self.x_min.to_string()),
            ("x_max", self.x_max.to_string()),
            ("y_min", self.y_min.to_string()),
            ("y_max", self.y_max.to_string()),
            ("h_min", self.h_min.to_string()),
            ("h_max", self.h_max.to_string()),
            ("user_max_speed", self.user_max_speed.to_string()),
            ("uav_speed", self.uav_speed.to_string()),
            ("slot_seconds", self.slot_seconds.to_string()),
            ("slots", self.slots.to_string()),
            ("recluster_period", self.recluster_period.to_string()),
            ("recluster", self.recluster.to_string()),
            ("mobility", self.mobility.to_string()),
            ("layout", self.layout.to_string()),
            ("initial_altitude", self.initial_altitude.to_string()),
            ("seed", self.seed.to_string()),
            ("carrier_ghz", self.carrier_ghz.to_string()),
            ("bandwidth_hz", self.bandwidth_hz.to_string()),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz.to_string()),
            ("p_max_dbm", self.p_max_dbm.to_string()),
            ("qos_bps", self.qos_bps.to_string()),
            ("los_mode", self.los_mode.to_string()),
            ("fading", self.fading.to_string()),
            ("intra_gain", self.intra_gain.to_string()),
            ("eta", self.max_load.to_string()),
            ("kmeans_iters", self.kmeans_iters.to_string()),
            ("power_profiles", format_profiles(&self.power_profiles)),
            ("lambda_cap", self.lambda_cap.to_string()),
            ("gain_offset_db", self.gain_offset_db.to_string()),
            ("gain_span_db", self.gain_span_db.to_string()),
            ("reward_scale", self.reward_scale.to_string()),
            ("hidden", self.hidden.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("discount", self.discount.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("target_update", self.target_update.to_string()),
            ("epsilon_start", self.epsilon_start.to_string()),
            ("epsilon_end", self.epsilon_end.to_string()),
            ("episodes", self.episodes.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("mode", self.mode.to_string()),
            ("agent_mode", self.agent_mode.to_string()),
            ("trajectory", self.trajectory.to_string()),
            ("decoding", self.decoding.to_string()),
            ("power", self.power.to_string()),
            ("circular_radius", self.circular_radius.to_string()),
            ("circular_altitude", self.circular_altitude.to_string()),
        ]
    }

    /// Parse `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines on top of the current values (no validation).
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            self.set(key.trim(), value)
                .map_err(|message| ConfigError::Parse { line, message })?;
        }
        Ok(())
    }

    /// Check the invariants every component relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.num_uavs == 0 {
            return fail("num_uavs must be at least 1".into());
        }
        if self.num_users < self.num_uavs {
            return fail("K ≥ U required (every UAV serves at least one user)".into());
        }
        if self.max_load == 0 || self.max_load * self.num_uavs < self.num_users {
            return fail(format!(
                "η·U < K: eta {} × num_uavs {} cannot hold {} users",
                self.max_load, self.num_uavs, self.num_users
            ));
        }
        if self.recluster_period == 0 || self.recluster_period > self.slots {
            return fail(format!(
                "T_r > T: recluster_period {} must lie in [1, slots = {}]",
                self.recluster_period, self.slots
            ));
        }
        if !(1..=1_000_000).contains(&self.target_update) {
            return fail(format!(
                "υ outside [1, 10^6]: target_update = {}",
                self.target_update
            ));
        }
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ordered(self.x_min, self.x_max)
            || !ordered(self.y_min, self.y_max)
            || !ordered(self.h_min, self.h_max)
        {
            return fail("bounds must be finite and ordered (min < max)".into());
        }
        if self.x_min < 0.0 || self.y_min < 0.0 {
            return fail("area bounds must be non-negative".into());
        }
        if self.h_min < 1.01 {
            return fail("h_min must be at least 1.01 m for the LoS model".into());
        }
        if self.initial_altitude < self.h_min || self.initial_altitude > self.h_max {
            return fail("initial_altitude outside [h_min, h_max]".into());
        }
        if self.circular_altitude < self.h_min || self.circular_altitude > self.h_max {
            return fail("circular_altitude outside [h_min, h_max]".into());
        }
        if self.slots == 0 || self.slot_seconds <= 0.0 {
            return fail("slots and slot_seconds must be positive".into());
        }
        if self.user_max_speed < 0.0 || self.uav_speed < 0.0 {
            return fail("speeds must be non-negative".into());
        }
        if self.carrier_ghz <= 0.0 || self.bandwidth_hz <= 0.0 {
            return fail("carrier_ghz and bandwidth_hz must be positive".into());
        }
        if self.power_profiles.is_empty() {
            return fail("at least one power profile is required".into());
        }
        for (i, p) in self.power_profiles.iter().enumerate() {
            if p.0.len() != self.max_load {
                return fail(format!(
                    "power profile {i} has {} fractions, expected eta = {}",
                    p.0.len(),
                    self.max_load
                ));
            }
            if p.0.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || p.total() > 1.0 + 1e-12 {
                return fail(format!("power profile {i} must be non-negative with Σ ≤ 1"));
            }
        }
        if self.gain_span_db <= 0.0 {
            return fail("gain_span_db must be positive".into());
        }
        if self.hidden == 0 || self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("hidden and batch_size must be positive, replay_capacity ≥ batch_size".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return fail("discount must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return fail("need 0 ≤ epsilon_end ≤ epsilon_start ≤ 1".into());
        }
        if self.circular_radius < 0.0 {
            return fail("circular_radius must be non-negative".into());
        }
        Ok(())
    }

    /// Hex SHA-256 over the keys that define the network's meaning.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            if RUN_CONTROL_KEYS.contains(&k) {
                continue;
            }
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Maximum total transmit power in mW.
    pub fn p_max_mw(&self) -> f64 {
        10f64.powf(self.p_max_dbm / 10.0)
    }

    /// Noise power over the full band in mW.
    pub fn noise_mw(&self) -> f64 {
        noise_power_mw(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }

    pub fn area_center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

/// Noise power in mW from a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power_mw(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf(psd_dbm_hz / 10.0) * bandwidth_hz
}
