//! Deep Q-learning with experience replay and a periodically synced target
//! network, for one network shared by all UAVs or one network per UAV.

use rand::Rng;

use crate::config::{AgentMode, Config};
use crate::nn::{Adam, Mlp, MlpDims, Workspace};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity FIFO store of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Append, evicting the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform sample of `n` indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// ε decays linearly per episode from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub episodes: usize,
}

impl EpsilonSchedule {
    pub fn from_config(cfg: &Config) -> Self {
        EpsilonSchedule {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            episodes: cfg.episodes,
        }
    }

    pub fn value(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.start;
        }
        let frac = (episode as f64 / (self.episodes - 1) as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over the outputs of `net`. The exploration draw is
/// consumed on every call so the random stream does not depend on ε.
pub fn select_action<R: Rng + ?Sized>(net: &Mlp, state: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let explore = rng.random::<f64>() < epsilon;
    let n = net.dims().output;
    if explore {
        rng.random_range(0..n)
    } else {
        argmax(&net.forward(state).expect("state length matches the network input"))
    }
}

/// Bellman targets `R + β · max_a' Q_target(S', a')`.
pub fn compute_targets<'a>(
    target: &Mlp,
    batch: impl IntoIterator<Item = &'a Transition>,
    discount: f64,
) -> Vec<f64> {
    let mut ws = Workspace::new(target.dims());
    batch
        .into_iter()
        .map(|t| {
            if discount == 0.0 {
                return t.reward;
            }
            target
                .forward_with(&t.next_state, &mut ws)
                .expect("next state length matches the network input");
            let best = ws.output().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.reward + discount * best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub batch_size: usize,
    pub discount: f64,
    pub target_update: u64,
}

impl TrainParams {
    pub fn from_config(cfg: &Config) -> Self {
        TrainParams {
            batch_size: cfg.batch_size,
            discount: cfg.discount,
            target_update: cfg.target_update,
        }
    }
}

/// One evaluation/target pair with its optimizer and replay memory.
#[derive(Debug, Clone)]
pub struct Learner {
    pub eval: Mlp,
    pub target: Mlp,
    pub adam: Adam,
    pub memory: ReplayMemory,
    pub train_steps: u64,
    pub syncs: u64,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(dims: MlpDims, lr: f64, capacity: usize, rng: &mut R) -> Self {
        let eval = Mlp::init(dims, rng);
        let target = eval.clone();
        Learner {
            adam: Adam::new(dims.num_params(), lr),
            eval,
            target,
            memory: ReplayMemory::new(capacity),
            train_steps: 0,
            syncs: 0,
        }
    }

    /// One Adam step on a uniformly sampled batch. Returns `None` without
    /// touching the networks while the memory holds fewer than a batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, params: &TrainParams, rng: &mut R) -> Option<f64> {
        if self.memory.len() < params.batch_size {
            return None;
        }
        let idx = self.memory.sample_indices(params.batch_size, rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.memory.get(i)).collect();
        let targets = compute_targets(&self.target, batch.iter().copied(), params.discount);
        let inputs: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let (loss, grad) = self
            .eval
            .batch_loss_grad(&inputs, &actions, &targets)
            .expect("stored transitions match the network shape");
        self.adam
            .step(self.eval.params_mut(), &grad)
            .expect("optimizer sized for the network");
        self.train_steps += 1;
        self.sync_target(params.target_update);
        Some(loss)
    }

    /// Copy eval into target whenever the step counter hits a multiple of `every`.
    pub fn sync_target(&mut self, every: u64) {
        if self.train_steps > 0 && self.train_steps.is_multiple_of(every.max(1)) {
            self.eval
                .clone_into(&mut self.target)
                .expect("eval and target share dims");
            self.syncs += 1;
        }
    }
}

/// Learners for all agents: one shared, or one per UAV.
#[derive(Debug, Clone)]
pub struct MultiAgent {
    pub mode: AgentMode,
    pub learners: Vec<Learner>,
    pub num_agents: usize,
}

impl MultiAgent {
    pub fn new<R: Rng + ?Sized>(cfg: &Config, dims: MlpDims, rng: &mut R) -> Self {
        let count = match cfg.agent_mode {
            AgentMode::Shared => 1,
            AgentMode::Independent => cfg.num_uavs,
        };
        MultiAgent {
            mode: cfg.agent_mode,
            learners: (0..count)
                .map(|_| Learner::new(dims, cfg.learning_rate, cfg.replay_capacity, rng))
                .collect(),
            num_agents: cfg.num_uavs,
        }
    }

    pub fn learner_index(&self, agent: usize) -> usize {
        match self.mode {
            AgentMode::Shared => 0,
            AgentMode::Independent => agent,
        }
    }

    pub fn learner(&self, agent: usize) -> &Learner {
        &self.learners[self.learner_index(agent)]
    }

    pub fn learner_mut(&mut self, agent: usize) -> &mut Learner {
        let i = self.learner_index(agent);
        &mut self.learners[i]
    }

    pub fn store(&mut self, agent: usize, t: Transition) {
        self.learner_mut(agent).memory.push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(state: Vec<f64>, action: usize, reward: f64) -> Transition {
        Transition {
            next_state: state.iter().map(|s| 1.0 - s).collect(),
            state,
            action,
            reward,
        }
    }

    #[test]
    fn argmax_picks_lowest_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 1.0]), 0);
    }

    #[test]
    fn greedy_when_epsilon_zero() {
        let net = Mlp::from_params(MlpDims::new(1, 1, 3), vec![1.0, 0.0, 1.0, 3.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_action(&net, &[1.0], 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn uniform_when_epsilon_one() {
        let net = Mlp::zeros(MlpDims::new(2, 3, 7));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            counts[select_action(&net, &[0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 7.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn targets() {
        let t = tr(vec![0.5], 0, 1.0);
        let zero = Mlp::zeros(MlpDims::new(1, 2, 2));
        assert_eq!(compute_targets(&zero, [&t], 0.9), vec![1.0]);
        // target net outputs 2 for every input
        let two = Mlp::from_params(MlpDims::new(1, 1, 2), vec![0.0, 0.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
        assert_eq!(compute_targets(&two, [&t], 1.0), vec![3.0]);
        assert_eq!(compute_targets(&two, [&t], 0.0), vec![1.0]);
    }

    #[test]
    fn memory_is_fifo() {
        let mut m = ReplayMemory::new(3);
        for r in 0..4 {
            m.push(tr(vec![0.0], 0, r as f64));
        }
        assert_eq!(m.len(), 3);
        let rewards: Vec<f64> = m.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut m = ReplayMemory::new(100);
        for r in 0..100 {
            m.push(tr(vec![0.0], 0, r as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut counts = [0usize; 100];
        for i in m.sample_indices(n, &mut rng) {
            counts[i] += 1;
        }
        let p = 0.01;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        // 3σ per item; a couple of the hundred may stray, so allow 4σ
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let s = EpsilonSchedule { start: 0.9, end: 0.0, episodes: 10 };
        assert_eq!(s.value(0), 0.9);
        assert!(s.value(9).abs() < 1e-15);
        assert!((s.value(3) - 0.6).abs() < 1e-12);
        for e in 1..10 {
            assert!(s.value(e) <= s.value(e - 1));
        }
    }

    #[test]
    fn training_skips_below_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = Learner::new(MlpDims::new(1, 4, 2), 0.001, 100, &mut rng);
        let params = TrainParams { batch_size: 4, discount: 0.0, target_update: 10 };
        for _ in 0..3 {
            l.memory.push(tr(vec![0.5], 1, 1.0));
        }
        let before = l.eval.clone();
        assert_eq!(l.train_step(&params, &mut rng), None);
        assert_eq!(l.eval, before);
        l.memory.push(tr(vec![0.5], 1, 1.0));
        assert!(l.train_step(&params, &mut rng).is_some());
    }

    #[test]
    fn zero_loss_leaves_parameters_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = Learner::new(MlpDims::new(2, 4, 2), 0.001, 100, &mut rng);
        let s = vec![0.2, 0.7];
        let q = l.eval.forward(&s).unwrap();
        for _ in 0..8 {
            l.memory.push(Transition { state: s.clone(), action: 0, reward: q[0], next_state: s.clone() });
        }
        let before = l.eval.clone();
        let params = TrainParams { batch_size: 4, discount: 0.0, target_update: 1000 };
        assert_eq!(l.train_step(&params, &mut rng), Some(0.0));
        assert_eq!(l.eval, before);
    }

    #[test]
    fn frozen_memory_converges_to_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = Learner::new(MlpDims::new(3, 40, 4), 0.001, 100, &mut rng);
        for i in 0..10 {
            let s: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            l.memory.push(tr(s, i % 4, 0.1 * i as f64));
        }
        let params = TrainParams { batch_size: 10, discount: 0.0, target_update: 1000 };
        let full = |l: &Learner| {
            let all: Vec<&Transition> = l.memory.iter().collect();
            let ys = compute_targets(&l.target, all.iter().copied(), 0.0);
            all.iter()
                .zip(&ys)
                .map(|(t, y)| (l.eval.forward(&t.state).unwrap()[t.action] - y).powi(2))
                .sum::<f64>()
                / all.len() as f64
        };
        let mut prev = full(&l);
        for step in 0..5000 {
            let loss = l.train_step(&params, &mut rng).unwrap();
            // loss equals an independent recomputation on the sampled batch
            assert!(loss.is_finite());
            if step < 100 {
                let now = full(&l);
                assert!(now <= prev * 1.05 + 1e-12, "step {step}: {now} > {prev}");
                prev = now;
            }
        }
        assert!(full(&l) < 1e-3);
    }

    #[test]
    fn loss_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut l = Learner::new(MlpDims::new(2, 5, 3), 0.001, 4, &mut rng);
        for i in 0..4 {
            l.memory.push(tr(vec![0.1 * i as f64, 0.3], i % 3, i as f64));
        }
        let params = TrainParams { batch_size: 4, discount: 0.9, target_update: 1000 };
        let eval = l.eval.clone();
        let target = l.target.clone();
        let mut replay = rng.clone();
        let idx = l.memory.sample_indices(4, &mut replay);
        let loss = l.train_step(&params, &mut rng).unwrap();
        let expected = idx
            .iter()
            .map(|&i| {
                let t = l.memory.get(i);
                let qn = target.forward(&t.next_state).unwrap();
                let y = t.reward + 0.9 * qn.iter().cloned().fold(f64::MIN, f64::max);
                (eval.forward(&t.state).unwrap()[t.action] - y).powi(2)
            })
            .sum::<f64>()
            / 4.0;
        assert!((loss - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn target_sync_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut l = Learner::new(MlpDims::new(1, 3, 2), 0.01, 10, &mut rng);
        for i in 0..10 {
            l.memory.push(tr(vec![i as f64 / 10.0], i % 2, 1.0));
        }
        let params = TrainParams { batch_size: 4, discount: 0.5, target_update: 600 };
        let probe = [0.37];
        let mut frozen = l.target.forward(&probe).unwrap();
        for step in 1..=1800u64 {
            l.train_step(&params, &mut rng).unwrap();
            let now = l.target.forward(&probe).unwrap();
            if step % 600 == 0 {
                assert_eq!(now, l.eval.forward(&probe).unwrap());
                frozen = now;
            } else {
                assert_eq!(now, frozen);
            }
        }
        assert_eq!(l.syncs, 3);
    }

    #[test]
    fn shared_and_independent_memories() {
        let mut cfg = Config::default();
        let dims = MlpDims::new(15, 40, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut shared = MultiAgent::new(&cfg, dims, &mut rng);
        assert_eq!(shared.learners.len(), 1);
        for u in 0..3 {
            shared.store(u, tr(vec![0.0; 15], 0, 0.0));
        }
        assert_eq!(shared.learners[0].memory.len(), 3);

        cfg.agent_mode = AgentMode::Independent;
        let mut indep = MultiAgent::new(&cfg, dims, &mut rng);
        assert_eq!(indep.learners.len(), 3);
        for u in 0..3 {
            indep.store(u, tr(vec![0.0; 15], 0, 0.0));
        }
        assert!(indep.learners.iter().all(|l| l.memory.len() == 1));
    }
}
