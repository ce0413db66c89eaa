//! The per-slot MDP and the training loop around it.
//!
//! Within one slot the UAVs move first, then the users, then gains are
//! recomputed. Decoding orders use the equivalent gain against the previous
//! slot's committed powers, after which each UAV splits its budget by the
//! chosen profile (weakest user first) and rates are evaluated. Re-clustering
//! happens at slot boundaries that are multiples of `T_r`.
//!
//! Action indices are laid out row-major as `movement · |profiles| + profile`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::circular_policy;
use crate::channel::{channel_gain, LinkGeometry};
use crate::clustering::{recluster, ClusterAssignment, Point};
use crate::config::{AccessMode, Config, DecodingMode, LayoutKind, PowerMode, PowerProfile, TrajectoryMode};
use crate::error::ActionError;
use crate::mdqn::{select_action, EpsilonSchedule, MultiAgent, TrainParams, Transition};
use crate::nn::MlpDims;
use crate::noma::{self, interferer_powers, LinkSnapshot, NomaCluster};
use crate::world::{apply_uav_move, initial_uavs, initial_users, step_user, Movement, Position3, UavState, UserState};

const STREAM_AGENT: u64 = 1;
const STREAM_LAYOUT: u64 = 2;
const STREAM_EPISODE: u64 = 1 << 20;
const STREAM_CLUSTER: u64 = 1 << 40;
const STREAM_EVAL: u64 = 1 << 60;

/// Independent ChaCha stream `id` under `seed`.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActionSpec {
    pub movement: Movement,
    pub profile: usize,
}

/// The discrete per-agent action set for a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    pub movements: Vec<Movement>,
    pub profiles: usize,
}

impl ActionSpace {
    pub fn from_config(cfg: &Config) -> Self {
        let movements = match cfg.trajectory {
            TrajectoryMode::Fixed2d => Movement::HORIZONTAL.to_vec(),
            _ => Movement::ALL.to_vec(),
        };
        let profiles = match cfg.power {
            PowerMode::Learned => cfg.power_profiles.len(),
            PowerMode::Max => 1,
        };
        ActionSpace { movements, profiles }
    }

    pub fn size(&self) -> usize {
        self.movements.len() * self.profiles
    }

    pub fn decode(&self, index: usize) -> Result<ActionSpec, ActionError> {
        if index >= self.size() {
            return Err(ActionError::OutOfRange { index, size: self.size() });
        }
        Ok(ActionSpec {
            movement: self.movements[index / self.profiles],
            profile: index % self.profiles,
        })
    }

    pub fn encode(&self, spec: ActionSpec) -> Option<usize> {
        let m = self.movements.iter().position(|&m| m == spec.movement)?;
        (spec.profile < self.profiles).then_some(m * self.profiles + spec.profile)
    }
}

/// Length of the abstracted state vector, `3U + K`.
pub fn state_dim(cfg: &Config) -> usize {
    3 * cfg.num_uavs + cfg.num_users
}

pub fn network_dims(cfg: &Config) -> MlpDims {
    MlpDims::new(state_dim(cfg), cfg.hidden, ActionSpace::from_config(cfg).size())
}

/// Number of users below the QoS rate, capped.
pub fn qos_penalty(rates: &[f64], qos_bps: f64, cap: u32) -> u32 {
    let below = rates.iter().filter(|&&r| r < qos_bps).count();
    (below as u32).min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardInfo {
    pub sum_rate: f64,
    pub lambda: u32,
    /// `sum_rate / 2^λ`, bits/s.
    pub reward: f64,
}

impl RewardInfo {
    pub fn new(sum_rate: f64, lambda: u32) -> Self {
        RewardInfo {
            sum_rate,
            lambda,
            reward: sum_rate / 2f64.powi(lambda as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardInfo,
    pub rates: Vec<f64>,
    /// Clusters whose decoding order breaks the ascending-gain condition.
    pub order_violations: usize,
    pub reclustered: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: Config,
    actions: ActionSpace,
    pub users: Vec<UserState>,
    pub uavs: Vec<UavState>,
    pub clusters: Vec<NomaCluster>,
    pub centroids: Vec<Point>,
    pub serving: Vec<usize>,
    pub gains: Vec<Vec<f64>>,
    /// Per-user power of the last committed slot, mW.
    pub powers: Vec<f64>,
    /// Per-UAV committed totals of the last slot, mW.
    pub uav_totals: Vec<f64>,
    pub slot: usize,
    pub cluster_epoch: usize,
    recluster_enabled: bool,
    rng: ChaCha8Rng,
    cluster_rng: ChaCha8Rng,
}

impl Environment {
    /// Fresh episode. `stream` selects the episode's mobility and fading draws.
    pub fn new(cfg: &Config, stream: u64) -> Self {
        let mut rng = rng_stream(cfg.seed, stream);
        let users = match cfg.layout {
            LayoutKind::Fixed => initial_users(cfg, &mut rng_stream(cfg.seed, STREAM_LAYOUT)),
            LayoutKind::Random => initial_users(cfg, &mut rng),
        };
        let mut uavs = initial_uavs(cfg);
        if cfg.trajectory == TrajectoryMode::Circular {
            for u in &mut uavs {
                u.pos = circular_policy(0, u.id, cfg);
            }
        }
        let u = cfg.num_uavs;
        let mut env = Environment {
            cfg: cfg.clone(),
            actions: ActionSpace::from_config(cfg),
            users,
            uavs,
            clusters: Vec::new(),
            centroids: Vec::new(),
            serving: vec![0; cfg.num_users],
            gains: vec![vec![0.0; cfg.num_users]; u],
            powers: vec![0.0; cfg.num_users],
            uav_totals: vec![cfg.p_max_mw(); u],
            slot: 0,
            cluster_epoch: 0,
            recluster_enabled: cfg.recluster,
            rng,
            cluster_rng: rng_stream(cfg.seed, STREAM_CLUSTER ^ stream),
        };
        env.recluster();
        env.refresh_gains();
        env.refresh_orders(true);
        for c in &env.clusters {
            let share = cfg.p_max_mw() / c.members.len() as f64;
            for &k in &c.members {
                env.powers[k] = share;
            }
        }
        env
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    fn positions(&self) -> Vec<Point> {
        self.users.iter().map(|u| (u.x, u.y)).collect()
    }

    /// Re-run capacity-bounded K-means and rebuild clusters.
    pub fn recluster(&mut self) {
        let a: ClusterAssignment = recluster(
            &self.positions(),
            &self.uavs,
            self.cfg.max_load,
            self.cfg.kmeans_iters,
            &mut self.cluster_rng,
        );
        for (u, members) in a.clusters.iter().enumerate() {
            for &k in members {
                self.serving[k] = u;
            }
        }
        self.clusters = a
            .clusters
            .into_iter()
            .enumerate()
            .map(|(u, m)| NomaCluster::new(u, m))
            .collect();
        self.centroids = a.centroids;
        self.cluster_epoch += 1;
    }

    fn refresh_gains(&mut self) {
        let cfg = &self.cfg;
        for (u, uav) in self.uavs.iter().enumerate() {
            for (k, user) in self.users.iter().enumerate() {
                let r = uav.pos.horizontal_distance(user.x, user.y);
                let geom = LinkGeometry::from_offsets(r, uav.pos.h).expect("UAVs stay inside the airspace");
                self.gains[u][k] = channel_gain(&geom, cfg.carrier_ghz, cfg.los_mode, cfg.fading, &mut self.rng)
                    .expect("admissible geometry");
            }
        }
    }

    /// Snapshot for the current gains, powers and reference totals.
    pub fn snapshot(&self) -> LinkSnapshot {
        LinkSnapshot {
            gains: self.gains.clone(),
            serving: self.serving.clone(),
            powers: self.powers.clone(),
            reference_power: self.uav_totals.clone(),
            noise: self.cfg.noise_mw(),
        }
    }

    fn refresh_orders(&mut self, force: bool) {
        if !force && self.cfg.decoding == DecodingMode::Static {
            return;
        }
        let snap = self.snapshot();
        for c in &mut self.clusters {
            c.order = noma::decoding_order(c, &snap);
        }
    }

    /// Scaled gain feature in [0, 1].
    fn gain_feature(&self, g: f64) -> f64 {
        ((10.0 * g.log10() + self.cfg.gain_offset_db) / self.cfg.gain_span_db).clamp(0.0, 1.0)
    }

    /// State seen by agent `u`: own coordinates, the other UAVs by id, own
    /// users in decoding order, then every other user by id.
    pub fn abstract_state(&self, u: usize) -> Vec<f64> {
        let cfg = &self.cfg;
        let mut s = Vec::with_capacity(state_dim(cfg));
        let coords = |p: &Position3| [p.x / cfg.x_max, p.y / cfg.y_max, p.h / cfg.h_max];
        s.extend(coords(&self.uavs[u].pos));
        for other in self.uavs.iter().filter(|o| o.id != u) {
            s.extend(coords(&other.pos));
        }
        let own = &self.clusters[u].order;
        for &k in own {
            s.push(self.gain_feature(self.gains[u][k]));
        }
        for k in (0..self.users.len()).filter(|&k| self.serving[k] != u) {
            s.push(self.gain_feature(self.gains[self.serving[k]][k]));
        }
        s.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        s
    }

    pub fn observe_all(&self) -> Vec<Vec<f64>> {
        (0..self.uavs.len()).map(|u| self.abstract_state(u)).collect()
    }

    fn assign_powers(&mut self, profiles: &[usize]) {
        let p_max = self.cfg.p_max_mw();
        for c in &self.clusters {
            let fractions = match self.cfg.power {
                PowerMode::Learned => self.cfg.power_profiles[profiles[c.uav]].fractions_for(c.order.len()),
                PowerMode::Max => PowerProfile::equal(c.order.len()).0,
            };
            for (&k, f) in c.order.iter().zip(fractions) {
                self.powers[k] = f * p_max;
            }
        }
    }

    /// Advance one slot with one action index per UAV.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, ActionError> {
        assert_eq!(actions.len(), self.uavs.len(), "one action per UAV");
        let specs = actions
            .iter()
            .map(|&a| self.actions.decode(a))
            .collect::<Result<Vec<_>, _>>()?;
        let t = self.slot;

        for (uav, spec) in self.uavs.iter_mut().zip(&specs) {
            *uav = match self.cfg.trajectory {
                TrajectoryMode::Circular => UavState {
                    pos: circular_policy(t + 1, uav.id, &self.cfg),
                    ..uav.clone()
                },
                _ => apply_uav_move(uav, spec.movement, &self.cfg),
            };
        }
        for user in &mut self.users {
            *user = step_user(user, &mut self.rng, &self.cfg);
        }
        self.refresh_gains();
        self.refresh_orders(false);
        let profiles: Vec<usize> = specs.iter().map(|s| s.profile).collect();
        self.assign_powers(&profiles);

        let snap = self.snapshot();
        let rates = match self.cfg.mode {
            AccessMode::Noma => noma::noma_rates(&self.clusters, &snap, self.cfg.intra_gain, self.cfg.bandwidth_hz),
            AccessMode::Oma => noma::oma_rates(&self.clusters, &snap, self.cfg.bandwidth_hz),
        };
        let order_violations = self
            .clusters
            .iter()
            .filter(|c| !noma::order_is_valid(&c.order, c.uav, &snap))
            .count();
        let sum_rate: f64 = rates.iter().sum();
        let lambda = qos_penalty(&rates, self.cfg.qos_bps, self.cfg.lambda_cap);
        self.uav_totals = interferer_powers(&snap);
        for uav in &mut self.uavs {
            uav.power_profile = self.clusters[uav.id].order.iter().map(|&k| self.powers[k]).collect();
        }

        self.slot += 1;
        let mut reclustered = false;
        let period = self.cfg.recluster_period.max(1);
        if self.recluster_enabled && self.slot.is_multiple_of(period) && self.slot < self.cfg.slots {
            self.recluster();
            self.refresh_orders(true);
            reclustered = true;
        }
        Ok(StepOutcome {
            reward: RewardInfo::new(sum_rate, lambda),
            rates,
            order_violations,
            reclustered,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub episode: usize,
    pub slot: usize,
    pub agent: usize,
    /// Training step of the learner that produced the loss.
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub sum_rate: f64,
    pub reward: f64,
    pub lambda: u32,
    /// Mean training loss over the agents that trained this slot.
    pub loss: Option<f64>,
    pub positions: Vec<Position3>,
    pub cluster_epoch: usize,
    pub order_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub epsilon: f64,
    /// Sum of per-slot sum rates, bits.
    pub throughput: f64,
    pub slots: Vec<SlotMetrics>,
    pub losses: Vec<LossRecord>,
}

impl EpisodeMetrics {
    pub fn mean_sum_rate(&self) -> f64 {
        self.throughput / self.slots.len().max(1) as f64
    }
}

/// Learners, schedule and random streams for a whole experiment.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: Config,
    pub agents: MultiAgent,
    pub schedule: EpsilonSchedule,
    pub episode: usize,
    agent_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: &Config) -> Self {
        let mut agent_rng = rng_stream(cfg.seed, STREAM_AGENT);
        let agents = MultiAgent::new(cfg, network_dims(cfg), &mut agent_rng);
        Trainer {
            cfg: cfg.clone(),
            agents,
            schedule: EpsilonSchedule::from_config(cfg),
            episode: 0,
            agent_rng,
        }
    }

    /// Wrap existing learners, e.g. restored from a checkpoint.
    pub fn with_agents(cfg: &Config, agents: MultiAgent) -> Self {
        Trainer {
            cfg: cfg.clone(),
            agents,
            schedule: EpsilonSchedule::from_config(cfg),
            episode: 0,
            agent_rng: rng_stream(cfg.seed, STREAM_AGENT),
        }
    }

    /// Environment for training episode `episode`, or evaluation episode
    /// `episode` when `eval` is set.
    pub fn environment(&self, episode: usize, eval: bool) -> Environment {
        let base = if eval { STREAM_EVAL } else { STREAM_EPISODE };
        Environment::new(&self.cfg, base + episode as u64)
    }

    pub fn train_episode(&mut self) -> EpisodeMetrics {
        let mut env = self.environment(self.episode, false);
        let m = self.run_episode(&mut env, RunMode::Train, &mut |_, _| {});
        self.episode += 1;
        m
    }

    pub fn eval_episode(&mut self, index: usize) -> EpisodeMetrics {
        let mut env = self.environment(index, true);
        self.run_episode(&mut env, RunMode::Eval, &mut |_, _| {})
    }

    /// Run `env` to the end of the episode. `observer` sees the environment
    /// after every step.
    pub fn run_episode(
        &mut self,
        env: &mut Environment,
        mode: RunMode,
        observer: &mut dyn FnMut(&Environment, &StepOutcome),
    ) -> EpisodeMetrics {
        let epsilon = match mode {
            RunMode::Train => self.schedule.value(self.episode),
            RunMode::Eval => 0.0,
        };
        let params = TrainParams::from_config(&self.cfg);
        let n = self.cfg.num_uavs;
        let mut states = env.observe_all();
        let mut slots = Vec::with_capacity(self.cfg.slots);
        let mut losses = Vec::new();
        let mut throughput = 0.0;

        for _ in 0..self.cfg.slots {
            let t = env.slot;
            let actions: Vec<usize> = (0..n)
                .map(|u| select_action(&self.agents.learner(u).eval, &states[u], epsilon, &mut self.agent_rng))
                .collect();
            let outcome = env.step(&actions).expect("actions come from the network's output range");
            let next = env.observe_all();
            let mut slot_losses = Vec::new();
            if mode == RunMode::Train {
                let reward = outcome.reward.reward * self.cfg.reward_scale;
                for u in 0..n {
                    self.agents.store(
                        u,
                        Transition {
                            state: std::mem::take(&mut states[u]),
                            action: actions[u],
                            reward,
                            next_state: next[u].clone(),
                        },
                    );
                    let learner = self.agents.learner_mut(u);
                    if let Some(loss) = learner.train_step(&params, &mut self.agent_rng) {
                        slot_losses.push(loss);
                        losses.push(LossRecord {
                            episode: self.episode,
                            slot: t,
                            agent: u,
                            step: learner.train_steps,
                            loss,
                        });
                    }
                }
            }
            observer(env, &outcome);
            throughput += outcome.reward.sum_rate;
            slots.push(SlotMetrics {
                slot: t,
                sum_rate: outcome.reward.sum_rate,
                reward: outcome.reward.reward,
                lambda: outcome.reward.lambda,
                loss: (!slot_losses.is_empty()).then(|| slot_losses.iter().sum::<f64>() / slot_losses.len() as f64),
                positions: env.uavs.iter().map(|u| u.pos).collect(),
                cluster_epoch: env.cluster_epoch,
                order_violations: outcome.order_violations,
            });
            states = next;
        }

        EpisodeMetrics {
            episode: self.episode,
            epsilon,
            throughput,
            slots,
            losses,
        }
    }
}
