//! Geometry and kinematics of UAVs and ground users.
//!
//! Users follow one of two mobility models per slot. Random roaming draws a
//! direction and a speed uniformly. Directional walking adds a fixed-heading
//! drift of 4/5·V_max to a random component of at most 1/5·V_max. Users are
//! clamped to the service area; UAV moves that would leave the allowed
//! airspace are replaced by hovering.

use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;

use crate::config::{Config, MobilityKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    /// Altitude above ground.
    pub h: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, h: f64) -> Self {
        Position3 { x, y, h }
    }

    pub fn horizontal_distance(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub mobility: MobilityKind,
    /// Fixed heading in radians, only used by directional walking.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavState {
    pub id: usize,
    pub pos: Position3,
    /// Transmit power per served user in decoding order, mW.
    pub power_profile: Vec<f64>,
}

impl UavState {
    pub fn total_power(&self) -> f64 {
        self.power_profile.iter().sum()
    }
}

/// The seven flight actions, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Movement {
    /// −x
    Left,
    /// +x
    Right,
    /// +y
    Forward,
    /// −y
    Backward,
    /// +h
    Up,
    /// −h
    Down,
    Hover,
}

impl Movement {
    pub const ALL: [Movement; 7] = [
        Movement::Left,
        Movement::Right,
        Movement::Forward,
        Movement::Backward,
        Movement::Up,
        Movement::Down,
        Movement::Hover,
    ];

    /// Movement set of the fixed-altitude scheme.
    pub const HORIZONTAL: [Movement; 5] = [
        Movement::Left,
        Movement::Right,
        Movement::Forward,
        Movement::Backward,
        Movement::Hover,
    ];

    /// Unit direction `(dx, dy, dh)`.
    pub fn direction(self) -> (f64, f64, f64) {
        match self {
            Movement::Left => (-1.0, 0.0, 0.0),
            Movement::Right => (1.0, 0.0, 0.0),
            Movement::Forward => (0.0, 1.0, 0.0),
            Movement::Backward => (0.0, -1.0, 0.0),
            Movement::Up => (0.0, 0.0, 1.0),
            Movement::Down => (0.0, 0.0, -1.0),
            Movement::Hover => (0.0, 0.0, 0.0),
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Movement::Up | Movement::Down)
    }

    pub fn name(self) -> &'static str {
        match self {
            Movement::Left => "left",
            Movement::Right => "right",
            Movement::Forward => "forward",
            Movement::Backward => "backward",
            Movement::Up => "up",
            Movement::Down => "down",
            Movement::Hover => "hover",
        }
    }
}

/// Eq. (2): 3-D distance between a UAV and a ground user.
pub fn distance3d(uav: &Position3, user: &UserState) -> f64 {
    (uav.h * uav.h + (uav.x - user.x).powi(2) + (uav.y - user.y).powi(2)).sqrt()
}

/// Per-slot displacement for the given uniform draws.
///
/// `angle` is the random direction in radians and `fraction` ∈ [0, 1) scales
/// the random magnitude.
pub fn displacement(
    mobility: MobilityKind,
    heading: f64,
    angle: f64,
    fraction: f64,
    v_max: f64,
    dt: f64,
) -> (f64, f64) {
    match mobility {
        MobilityKind::RandomRoaming => {
            let step = fraction * v_max * dt;
            (step * angle.cos(), step * angle.sin())
        }
        MobilityKind::DirectionalWalking => {
            let drift = 0.8 * v_max * dt;
            let jitter = fraction * 0.2 * v_max * dt;
            (
                drift * heading.cos() + jitter * angle.cos(),
                drift * heading.sin() + jitter * angle.sin(),
            )
        }
    }
}

/// Move a user by an explicit displacement sample and clamp it to the area.
pub fn step_user_with(user: &UserState, angle: f64, fraction: f64, cfg: &Config) -> UserState {
    let (dx, dy) = displacement(
        user.mobility,
        user.heading,
        angle,
        fraction,
        cfg.user_max_speed,
        cfg.slot_seconds,
    );
    UserState {
        x: (user.x + dx).clamp(cfg.x_min, cfg.x_max),
        y: (user.y + dy).clamp(cfg.y_min, cfg.y_max),
        ..user.clone()
    }
}

/// Move a user one slot. Draw order: angle, then magnitude fraction.
pub fn step_user<R: Rng + ?Sized>(user: &UserState, rng: &mut R, cfg: &Config) -> UserState {
    let angle = rng.random::<f64>() * TAU;
    let fraction = rng.random::<f64>();
    step_user_with(user, angle, fraction, cfg)
}

pub fn within_airspace(pos: &Position3, cfg: &Config) -> bool {
    (cfg.x_min..=cfg.x_max).contains(&pos.x)
        && (cfg.y_min..=cfg.y_max).contains(&pos.y)
        && (cfg.h_min..=cfg.h_max).contains(&pos.h)
}

/// Displace a UAV by `V·Δt` along the movement axis; hover if the target
/// position leaves the allowed airspace.
pub fn apply_uav_move(uav: &UavState, movement: Movement, cfg: &Config) -> UavState {
    let step = cfg.uav_speed * cfg.slot_seconds;
    let (dx, dy, dh) = movement.direction();
    let target = Position3::new(uav.pos.x + dx * step, uav.pos.y + dy * step, uav.pos.h + dh * step);
    let pos = if within_airspace(&target, cfg) {
        target
    } else {
        uav.pos
    };
    UavState {
        pos,
        ..uav.clone()
    }
}

/// UAVs start evenly spaced along the `x_min` edge at the initial altitude.
pub fn initial_uavs(cfg: &Config) -> Vec<UavState> {
    let u = cfg.num_uavs;
    let span = cfg.y_max - cfg.y_min;
    (0..u)
        .map(|id| UavState {
            id,
            pos: Position3::new(
                cfg.x_min,
                cfg.y_min + (id as f64 + 0.5) * span / u as f64,
                cfg.initial_altitude,
            ),
            power_profile: Vec::new(),
        })
        .collect()
}

/// Users uniform over the area; headings uniform on the circle.
pub fn initial_users<R: Rng + ?Sized>(cfg: &Config, rng: &mut R) -> Vec<UserState> {
    (0..cfg.num_users)
        .map(|id| {
            let x = cfg.x_min + rng.random::<f64>() * (cfg.x_max - cfg.x_min);
            let y = cfg.y_min + rng.random::<f64>() * (cfg.y_max - cfg.y_min);
            let heading = rng.random::<f64>() * TAU;
            UserState {
                id,
                x,
                y,
                mobility: cfg.mobility,
                heading,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn user(x: f64, y: f64, mobility: MobilityKind, heading: f64) -> UserState {
        UserState {
            id: 0,
            x,
            y,
            mobility,
            heading,
        }
    }

    #[test]
    fn distance_examples() {
        let u = user(0.0, 0.0, MobilityKind::RandomRoaming, 0.0);
        assert_eq!(distance3d(&Position3::new(0.0, 0.0, 100.0), &u), 100.0);

        let u = user(130.0, 140.0, MobilityKind::RandomRoaming, 0.0);
        let d = distance3d(&Position3::new(100.0, 100.0, 100.0), &u);
        // sqrt(100^2 + 30^2 + 40^2) = sqrt(12500)
        assert!((d - 12_500f64.sqrt()).abs() < 1e-12);
        assert!((d - 111.803_398_874_989_5).abs() < 1e-9);

        let u = user(42.0, 17.0, MobilityKind::RandomRoaming, 0.0);
        assert_eq!(distance3d(&Position3::new(42.0, 17.0, 20.0), &u), 20.0);
    }

    #[test]
    fn roaming_with_zero_speed_stays_put() {
        let cfg = Config::default();
        let u = user(10.0, 20.0, MobilityKind::RandomRoaming, 0.0);
        let next = step_user_with(&u, 1.3, 0.0, &cfg);
        assert_eq!((next.x, next.y), (10.0, 20.0));
    }

    #[test]
    fn directional_drift_is_four_fifths_of_vmax() {
        let cfg = Config::default();
        let u = user(100.0, 100.0, MobilityKind::DirectionalWalking, 0.0);
        let next = step_user_with(&u, 0.0, 0.0, &cfg);
        assert!((next.x - 100.4).abs() < 1e-12);
        assert_eq!(next.y, 100.0);
    }

    #[test]
    fn users_clamp_at_boundary() {
        let cfg = Config::default();
        let u = user(cfg.x_max, 250.0, MobilityKind::DirectionalWalking, 0.0);
        let next = step_user_with(&u, 0.0, 0.5, &cfg);
        assert_eq!(next.x, cfg.x_max);
    }

    #[test]
    fn uav_moves() {
        let cfg = Config::default();
        let uav = UavState {
            id: 0,
            pos: Position3::new(250.0, 250.0, 100.0),
            power_profile: vec![],
        };
        assert_eq!(apply_uav_move(&uav, Movement::Hover, &cfg).pos, uav.pos);
        assert_eq!(
            apply_uav_move(&uav, Movement::Forward, &cfg).pos,
            Position3::new(250.0, 255.0, 100.0)
        );
        let top = UavState {
            pos: Position3::new(250.0, 250.0, 150.0),
            ..uav.clone()
        };
        assert_eq!(apply_uav_move(&top, Movement::Up, &cfg).pos, top.pos);
        let edge = UavState {
            pos: Position3::new(0.0, 250.0, 100.0),
            ..uav
        };
        assert_eq!(apply_uav_move(&edge, Movement::Left, &cfg).pos, edge.pos);
    }

    #[test]
    fn initial_uavs_line_the_boundary() {
        let cfg = Config::default();
        let uavs = initial_uavs(&cfg);
        assert_eq!(uavs.len(), 3);
        for u in &uavs {
            assert_eq!(u.pos.x, 0.0);
            assert_eq!(u.pos.h, 100.0);
            assert!(within_airspace(&u.pos, &cfg));
        }
        assert!(uavs[0].pos.y < uavs[1].pos.y && uavs[1].pos.y < uavs[2].pos.y);
    }

    #[test]
    fn seeded_trajectories_are_bit_identical() {
        let cfg = Config {
            mobility: MobilityKind::DirectionalWalking,
            ..Config::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut users = initial_users(&cfg, &mut rng);
            for _ in 0..500 {
                users = users.iter().map(|u| step_user(u, &mut rng, &cfg)).collect();
            }
            users
        };
        let a = run();
        let b = run();
        for (ua, ub) in a.iter().zip(&b) {
            assert_eq!(ua.x.to_bits(), ub.x.to_bits());
            assert_eq!(ua.y.to_bits(), ub.y.to_bits());
        }
    }

    proptest! {
        #[test]
        fn users_never_leave_the_area(
            x in 0.0f64..=500.0, y in 0.0f64..=500.0,
            heading in 0.0f64..TAU, seed in any::<u64>(),
            directional in any::<bool>(),
        ) {
            let cfg = Config { user_max_speed: 40.0, ..Config::default() };
            let mobility = if directional { MobilityKind::DirectionalWalking } else { MobilityKind::RandomRoaming };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u = user(x, y, mobility, heading);
            for _ in 0..50 {
                u = step_user(&u, &mut rng, &cfg);
                prop_assert!(u.x >= cfg.x_min && u.x <= cfg.x_max);
                prop_assert!(u.y >= cfg.y_min && u.y <= cfg.y_max);
            }
        }

        #[test]
        fn uavs_never_leave_the_airspace(moves in proptest::collection::vec(0usize..7, 1..200)) {
            let cfg = Config::default();
            let mut uav = initial_uavs(&cfg)[0].clone();
            for m in moves {
                uav = apply_uav_move(&uav, Movement::ALL[m], &cfg);
                prop_assert!(within_airspace(&uav.pos, &cfg));
            }
        }

        #[test]
        fn distance_symmetric_and_monotone_in_altitude(
            dx in -300.0f64..300.0, dy in -300.0f64..300.0, h in 0.0f64..200.0, dh in 0.001f64..50.0,
        ) {
            let u = user(250.0, 250.0, MobilityKind::RandomRoaming, 0.0);
            let a = distance3d(&Position3::new(250.0 + dx, 250.0 + dy, h), &u);
            let b = distance3d(&Position3::new(250.0 - dx, 250.0 - dy, h), &u);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            let higher = distance3d(&Position3::new(250.0 + dx, 250.0 + dy, h + dh), &u);
            prop_assert!(higher > a);
        }
    }
}
