//! Brute-force oracles: direct re-evaluations of the link formulas, an
//! exhaustive decoding-order check, exhaustive one-step action search and
//! finite-difference gradients.

use std::f64::consts::{LN_10, LN_2};

use rand::{Rng, SeedableRng};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::{self, LinkGeometry};
use crate::config::{FadingKind, IntraGain, LosMode};
use crate::env::Environment;
use crate::nn::Mlp;
use crate::noma::{self, LinkSnapshot, NomaCluster};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub inputs_digest: String,
    pub oracle: Vec<f64>,
    pub implementation: Vec<f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn compare(name: &str, inputs: &str, oracle: Vec<f64>, implementation: Vec<f64>, tolerance: f64) -> Self {
        let max_rel_error = if oracle.len() != implementation.len() {
            f64::INFINITY
        } else {
            oracle
                .iter()
                .zip(&implementation)
                .map(|(&o, &i)| rel_error(o, i))
                .fold(0.0, f64::max)
        };
        OracleReport {
            name: name.to_string(),
            inputs_digest: digest(inputs),
            pass: max_rel_error <= tolerance,
            oracle,
            implementation,
            max_rel_error,
            tolerance,
        }
    }

    fn verdict(name: &str, inputs: &str, pass: bool, oracle: Vec<f64>, implementation: Vec<f64>) -> Self {
        OracleReport {
            name: name.to_string(),
            inputs_digest: digest(inputs),
            oracle,
            implementation,
            max_rel_error: if pass { 0.0 } else { 1.0 },
            tolerance: 0.0,
            pass,
        }
    }
}

fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn lg(x: f64) -> f64 {
    x.ln() / LN_10
}

pub fn oracle_pathloss_los(d: f64, h: f64, fc: f64) -> f64 {
    30.9 + 22.25 * lg(d) - 0.5 * lg(h) * lg(d) + 20.0 * lg(fc)
}

pub fn oracle_pathloss_nlos(d: f64, h: f64, fc: f64) -> f64 {
    let nlos = 32.4 + 43.2 * lg(d) - 7.6 * lg(h) * lg(d) + 20.0 * lg(fc);
    let los = oracle_pathloss_los(d, h, fc);
    if nlos > los {
        nlos
    } else {
        los
    }
}

pub fn oracle_p_los(r: f64, h: f64, corrected: bool) -> f64 {
    let mut d0 = 294.05 * lg(h) - 432.94;
    if d0 < 18.0 {
        d0 = 18.0;
    }
    let p1 = 233.98 * lg(h) - 0.95;
    if r <= d0 {
        return 1.0;
    }
    let tail = (-(r - d0) / p1).exp();
    let p = if corrected {
        d0 / r + tail - tail * d0 / r
    } else {
        d0 / r + tail
    };
    p.clamp(0.0, 1.0)
}

pub fn oracle_gain(r: f64, h: f64, fc: f64, corrected: bool) -> f64 {
    let d = (r * r + h * h).sqrt();
    let p = oracle_p_los(r, h, corrected);
    let loss = p * oracle_pathloss_los(d, h, fc) + (1.0 - p) * oracle_pathloss_nlos(d, h, fc);
    (-loss / 10.0 * LN_10).exp()
}

pub fn oracle_equivalent_gain(s: &LinkSnapshot, u: usize, k: usize) -> f64 {
    if s.serving[k] != u {
        return 0.0;
    }
    let mut interference = s.noise;
    for other in 0..s.gains.len() {
        if other != u {
            interference += s.gains[other][k] * s.reference_power[other];
        }
    }
    s.gains[u][k] / interference
}

/// SINR of every user by id, straight from the definition.
pub fn oracle_sinrs(clusters: &[NomaCluster], s: &LinkSnapshot, intra: IntraGain) -> Vec<f64> {
    let k_total = s.serving.len();
    let mut totals = vec![0.0; s.gains.len()];
    for k in 0..k_total {
        totals[s.serving[k]] += s.powers[k];
    }
    let mut out = vec![0.0; k_total];
    for c in clusters {
        let u = c.uav;
        for j in 0..c.order.len() {
            let k = c.order[j];
            let mut denom = s.noise;
            for later in (j + 1)..c.order.len() {
                let i = c.order[later];
                let g = if intra == IntraGain::Interferer { s.gains[u][i] } else { s.gains[u][k] };
                denom += g * s.powers[i];
            }
            for other in 0..s.gains.len() {
                if other != u {
                    denom += s.gains[other][k] * totals[other];
                }
            }
            out[k] = s.gains[u][k] * s.powers[k] / denom;
        }
    }
    out
}

pub fn oracle_rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + sinr).ln() / LN_2
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Enumerate every decoding order of `cluster` and confirm the
/// implementation's order is the valid one (lowest ids first among ties).
pub fn exhaustive_order_check(cluster: &NomaCluster, snapshot: &LinkSnapshot) -> OracleReport {
    assert!(cluster.members.len() <= 4, "exhaustive check limited to 4 members");
    let g = |k: usize| oracle_equivalent_gain(snapshot, cluster.uav, k);
    let valid: Vec<Vec<usize>> = permutations(&cluster.members)
        .into_iter()
        .filter(|p| p.windows(2).all(|w| g(w[1]) >= g(w[0])))
        .collect();
    // among valid orders, equal-gain runs sorted by id
    let expected = valid
        .iter()
        .filter(|p| p.windows(2).all(|w| g(w[1]) > g(w[0]) || w[1] > w[0]))
        .next().cloned();
    let ours = noma::decoding_order(cluster, snapshot);
    let pass = valid.contains(&ours) && expected.as_ref() == Some(&ours);
    OracleReport::verdict(
        "decoding_order",
        &format!("{cluster:?} {:?}", snapshot.gains),
        pass,
        expected.unwrap_or_default().iter().map(|&k| k as f64).collect(),
        ours.iter().map(|&k| k as f64).collect(),
    )
}

/// Number of valid decoding orders of `cluster`, by enumeration.
pub fn count_valid_orders(cluster: &NomaCluster, snapshot: &LinkSnapshot) -> usize {
    let g = |k: usize| oracle_equivalent_gain(snapshot, cluster.uav, k);
    permutations(&cluster.members)
        .into_iter()
        .filter(|p| p.windows(2).all(|w| g(w[1]) >= g(w[0])))
        .count()
}

/// Try every action of agent `u` on a copy of `env` with the other agents'
/// actions fixed; returns the first action with the highest immediate reward.
pub fn brute_force_best_action(env: &Environment, u: usize, others: &[usize]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..env.action_space().size() {
        let mut trial = env.clone();
        let mut joint = others.to_vec();
        joint[u] = a;
        let r = trial.step(&joint).expect("action in range").reward.reward;
        if r > best.1 {
            best = (a, r);
        }
    }
    best
}

fn masked_loss(net: &Mlp, input: &[f64], target: &[f64], mask: &[bool]) -> f64 {
    let q = net.forward(input).expect("input matches the network");
    q.iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((q, y), _)| (q - y) * (q - y))
        .sum()
}

/// Central differences of the masked loss against backpropagation.
/// The relative error is taken against `max(|fd|, |bp|, floor)`.
pub fn finite_diff_grad(net: &Mlp, input: &[f64], target: &[f64], mask: &[bool], step: f64) -> OracleReport {
    let (_, grad) = net.backward(input, target, mask).expect("shapes match");
    let mut fd = Vec::with_capacity(grad.len());
    let mut probe = net.clone();
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let plus = masked_loss(&probe, input, target, mask);
        probe.params_mut()[i] = orig - step;
        let minus = masked_loss(&probe, input, target, mask);
        probe.params_mut()[i] = orig;
        fd.push((plus - minus) / (2.0 * step));
    }
    let floor = 1e-7;
    let max_rel_error = fd
        .iter()
        .zip(&grad)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max);
    let tolerance = 1e-4;
    OracleReport {
        name: "gradient".into(),
        inputs_digest: digest(&format!("{input:?} {target:?} {mask:?}")),
        oracle: fd,
        implementation: grad,
        max_rel_error,
        tolerance,
        pass: max_rel_error <= tolerance,
    }
}

/// Random admissible link geometry and a random multi-UAV snapshot.
fn random_snapshot<R: Rng + ?Sized>(rng: &mut R) -> (Vec<NomaCluster>, LinkSnapshot) {
    let u = rng.random_range(1..=4usize);
    let k = rng.random_range(u..=3 * u);
    let mut serving: Vec<usize> = (0..k).map(|i| if i < u { i } else { rng.random_range(0..u) }).collect();
    // shuffle ownership so ids are not sorted by cluster
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        serving.swap(i, j);
    }
    let gains = (0..u)
        .map(|_| (0..k).map(|_| 10f64.powf(rng.random_range(-12.0..-6.0))).collect())
        .collect();
    let snap = LinkSnapshot {
        gains,
        serving: serving.clone(),
        powers: (0..k).map(|_| rng.random_range(0.0..800.0)).collect(),
        reference_power: (0..u).map(|_| rng.random_range(0.0..800.0)).collect(),
        noise: 10f64.powf(rng.random_range(-8.0..-4.0)),
    };
    let clusters = (0..u)
        .map(|c| {
            let mut cl = NomaCluster::new(c, (0..k).filter(|&i| serving[i] == c).collect());
            cl.order = noma::decoding_order(&cl, &snap);
            cl
        })
        .collect();
    (clusters, snap)
}

/// Formula oracles over `n` random admissible inputs.
pub fn formula_suite<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<OracleReport> {
    let mut pl = (Vec::new(), Vec::new());
    let mut plos = (Vec::new(), Vec::new());
    let mut gain = (Vec::new(), Vec::new());
    let mut geq = (Vec::new(), Vec::new());
    let mut sinr = (Vec::new(), Vec::new());
    let mut rate = (Vec::new(), Vec::new());
    let mut det = rand_chacha::ChaCha8Rng::seed_from_u64(rng.random());
    for _ in 0..n {
        let h = rng.random_range(20.0..=150.0);
        let r = rng.random_range(0.0..=710.0);
        let fc = rng.random_range(0.5..6.0);
        let corrected = rng.random::<bool>();
        let mode = if corrected { LosMode::Corrected } else { LosMode::AsPrintedClamped };
        let geom = LinkGeometry::from_offsets(r, h).expect("admissible");
        let d = geom.d3d;
        pl.0.push(oracle_pathloss_los(d, h, fc));
        pl.1.push(channel::pathloss_los(&geom, fc));
        pl.0.push(oracle_pathloss_nlos(d, h, fc));
        pl.1.push(channel::pathloss_nlos(&geom, fc));
        plos.0.push(oracle_p_los(r, h, corrected));
        plos.1.push(channel::p_los(&geom, mode).expect("admissible"));
        gain.0.push(oracle_gain(r, h, fc, corrected));
        gain.1.push(channel::channel_gain(&geom, fc, mode, FadingKind::Deterministic, &mut det).expect("admissible"));

        let (clusters, snap) = random_snapshot(rng);
        for c in &clusters {
            for &k in &c.members {
                geq.0.push(oracle_equivalent_gain(&snap, c.uav, k));
                geq.1.push(noma::equivalent_gain(&snap, c.uav, k));
            }
        }
        let intra = if rng.random::<bool>() { IntraGain::Interferer } else { IntraGain::Receiver };
        let expected = oracle_sinrs(&clusters, &snap, intra);
        let bw = rng.random_range(1e3..1e6);
        for c in &clusters {
            for (pos, &k) in c.order.iter().enumerate() {
                let s = noma::user_sinr(c, &snap, pos, intra);
                sinr.0.push(expected[k]);
                sinr.1.push(s);
                rate.0.push(oracle_rate(expected[k], bw));
                rate.1.push(noma::user_rate(s, bw));
            }
        }
    }
    let tol = 1e-9;
    let tag = format!("{n} random admissible inputs");
    vec![
        OracleReport::compare("path_loss", &tag, pl.0, pl.1, tol),
        OracleReport::compare("p_los", &tag, plos.0, plos.1, tol),
        OracleReport::compare("channel_gain", &tag, gain.0, gain.1, tol),
        OracleReport::compare("equivalent_gain", &tag, geq.0, geq.1, tol),
        OracleReport::compare("sinr", &tag, sinr.0, sinr.1, tol),
        OracleReport::compare("rate", &tag, rate.0, rate.1, tol),
    ]
}

/// Exhaustive order checks on `n` random clusters of up to four members.
pub fn order_suite<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<OracleReport> {
    let mut failures = Vec::new();
    let mut checked = 0usize;
    while checked < n {
        let (clusters, snap) = random_snapshot(rng);
        for c in clusters.iter().filter(|c| c.members.len() <= 4) {
            let report = exhaustive_order_check(c, &snap);
            checked += 1;
            if !report.pass {
                failures.push(report);
            }
        }
    }
    if failures.is_empty() {
        vec![OracleReport::verdict("decoding_order", &format!("{checked} random clusters"), true, vec![], vec![])]
    } else {
        failures
    }
}

/// Finite-difference step of the gradient oracle.
pub const FD_STEP: f64 = 1e-4;

/// Smallest |pre-activation| over the hidden layer, by direct loops.
fn kink_margin(net: &Mlp, input: &[f64]) -> f64 {
    let d = net.dims();
    let p = net.params();
    let bias = d.hidden * d.input;
    (0..d.hidden)
        .map(|j| {
            let z: f64 = (0..d.input).map(|i| p[j * d.input + i] * input[i]).sum::<f64>() + p[bias + j];
            z.abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Gradient checks on `n` random networks. Inputs are redrawn until no
/// hidden unit sits within reach of its kink under a perturbation.
pub fn gradient_suite<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<OracleReport> {
    use crate::nn::MlpDims;
    (0..n)
        .map(|_| {
            let dims = MlpDims::new(rng.random_range(1..=16), rng.random_range(1..=40), rng.random_range(1..=21));
            let mut net = Mlp::init(dims, rng);
            for b in net.params_mut().iter_mut() {
                *b += rng.random_range(-0.1..0.1);
            }
            let input: Vec<f64> = loop {
                let x: Vec<f64> = (0..dims.input).map(|_| rng.random_range(-1.0..1.0)).collect();
                if kink_margin(&net, &x) > 10.0 * FD_STEP {
                    break x;
                }
            };
            let target: Vec<f64> = (0..dims.output).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut mask: Vec<bool> = (0..dims.output).map(|_| rng.random::<bool>()).collect();
            let pick = rng.random_range(0..dims.output);
            mask[pick] = true;
            finite_diff_grad(&net, &input, &target, &mask, FD_STEP)
        })
        .collect()
}

/// Every oracle, as run by the hidden `verify` subcommand.
pub fn run_all(seed: u64) -> Vec<OracleReport> {
    let mut rng = crate::env::rng_stream(seed, 7);
    let mut out = formula_suite(10_000, &mut rng);
    out.extend(order_suite(1_000, &mut rng));
    let grads = gradient_suite(100, &mut rng);
    let worst = grads.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    out.push(OracleReport {
        name: "gradient".into(),
        inputs_digest: digest("100 random nets"),
        oracle: vec![],
        implementation: vec![],
        max_rel_error: worst,
        tolerance: 1e-4,
        pass: grads.iter().all(|r| r.pass),
    });
    out
}
