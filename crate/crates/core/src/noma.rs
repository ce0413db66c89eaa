//! Per-slot NOMA link layer.
//!
//! Each UAV serves one cluster on the shared band. Users are decoded in
//! ascending order of equivalent channel gain (own gain over inter-cluster
//! interference plus noise); user `π(k)` cancels `π(1..k−1)` and is
//! interfered by `π(k+1..)` and by every other UAV's total power.

use serde::Serialize;

use crate::config::IntraGain;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NomaCluster {
    pub uav: usize,
    pub members: Vec<usize>,
    /// Decoding order: members sorted by ascending equivalent gain.
    pub order: Vec<usize>,
}

impl NomaCluster {
    pub fn new(uav: usize, members: Vec<usize>) -> Self {
        let order = members.clone();
        NomaCluster {
            uav,
            members,
            order,
        }
    }
}

/// Everything the rate computation needs for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSnapshot {
    /// `gains[u][k]`: linear gain from UAV `u` to user `k`.
    pub gains: Vec<Vec<f64>>,
    /// Serving UAV of each user.
    pub serving: Vec<usize>,
    /// Transmit power allocated to each user by its serving UAV, mW.
    pub powers: Vec<f64>,
    /// Per-UAV total power used as interference in the equivalent gain
    /// (the previous slot's committed totals), mW.
    pub reference_power: Vec<f64>,
    /// Noise power over the full band, mW.
    pub noise: f64,
}

impl LinkSnapshot {
    pub fn num_uavs(&self) -> usize {
        self.gains.len()
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }
}

/// Total power UAV `s` spends on its served users.
pub fn interferer_power(snapshot: &LinkSnapshot, s: usize) -> f64 {
    snapshot
        .serving
        .iter()
        .zip(&snapshot.powers)
        .filter(|(&u, _)| u == s)
        .map(|(_, p)| p)
        .sum()
}

pub fn interferer_powers(snapshot: &LinkSnapshot) -> Vec<f64> {
    let mut totals = vec![0.0; snapshot.num_uavs()];
    for (&u, &p) in snapshot.serving.iter().zip(&snapshot.powers) {
        totals[u] += p;
    }
    totals
}

/// `G_k^u = v_{u,k} g_k^u / (Σ_{s≠u} g_k^s P^s + σ²)` with `P^s` taken from
/// `reference_power`.
pub fn equivalent_gain(snapshot: &LinkSnapshot, u: usize, k: usize) -> f64 {
    if snapshot.serving[k] != u {
        return 0.0;
    }
    let interference: f64 = (0..snapshot.num_uavs())
        .filter(|&s| s != u)
        .map(|s| snapshot.gains[s][k] * snapshot.reference_power[s])
        .sum();
    snapshot.gains[u][k] / (interference + snapshot.noise)
}

/// Members sorted by ascending equivalent gain, ties by ascending user id.
pub fn decoding_order(cluster: &NomaCluster, snapshot: &LinkSnapshot) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = cluster
        .members
        .iter()
        .map(|&k| (equivalent_gain(snapshot, cluster.uav, k), k))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, k)| k).collect()
}

/// True when `G_{π(k)} ≥ G_{π(j)}` for every `k > j`.
pub fn order_is_valid(order: &[usize], uav: usize, snapshot: &LinkSnapshot) -> bool {
    let g: Vec<f64> = order
        .iter()
        .map(|&k| equivalent_gain(snapshot, uav, k))
        .collect();
    g.windows(2).all(|w| w[1] >= w[0])
}

/// SINR of the `position`-th decoded user (0-based) of `cluster`.
pub fn user_sinr(
    cluster: &NomaCluster,
    snapshot: &LinkSnapshot,
    position: usize,
    intra: IntraGain,
) -> f64 {
    let u = cluster.uav;
    let k = cluster.order[position];
    let signal = snapshot.gains[u][k] * snapshot.powers[k];
    let intra_interference: f64 = cluster.order[position + 1..]
        .iter()
        .map(|&i| {
            let g = match intra {
                IntraGain::Interferer => snapshot.gains[u][i],
                IntraGain::Receiver => snapshot.gains[u][k],
            };
            g * snapshot.powers[i]
        })
        .sum();
    let inter_interference: f64 = (0..snapshot.num_uavs())
        .filter(|&s| s != u)
        .map(|s| snapshot.gains[s][k] * interferer_power(snapshot, s))
        .sum();
    signal / (intra_interference + inter_interference + snapshot.noise)
}

/// Shannon rate `B·log2(1 + sinr)`.
pub fn user_rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Rate of every user (indexed by user id) under NOMA.
pub fn noma_rates(
    clusters: &[NomaCluster],
    snapshot: &LinkSnapshot,
    intra: IntraGain,
    bandwidth_hz: f64,
) -> Vec<f64> {
    let mut rates = vec![0.0; snapshot.num_users()];
    for cluster in clusters {
        for (pos, &k) in cluster.order.iter().enumerate() {
            rates[k] = user_rate(user_sinr(cluster, snapshot, pos, intra), bandwidth_hz);
        }
    }
    rates
}

/// Sum of all served users' NOMA rates for one slot.
pub fn sum_rate(
    clusters: &[NomaCluster],
    snapshot: &LinkSnapshot,
    intra: IntraGain,
    bandwidth_hz: f64,
) -> f64 {
    noma_rates(clusters, snapshot, intra, bandwidth_hz)
        .iter()
        .sum()
}

/// Per-user rates under the orthogonal baseline.
///
/// Each UAV splits the band into `|members|` equal sub-bands assigned in
/// decoding order. A user on sub-band `i` is interfered only by other UAVs'
/// sub-band-`i` users; noise scales with the sub-band width.
pub fn oma_rates(clusters: &[NomaCluster], snapshot: &LinkSnapshot, bandwidth_hz: f64) -> Vec<f64> {
    let mut rates = vec![0.0; snapshot.num_users()];
    for cluster in clusters {
        let n = cluster.order.len();
        if n == 0 {
            continue;
        }
        let share = 1.0 / n as f64;
        let noise = snapshot.noise * share;
        for (slot, &k) in cluster.order.iter().enumerate() {
            let signal = snapshot.gains[cluster.uav][k] * snapshot.powers[k];
            let interference: f64 = clusters
                .iter()
                .filter(|other| other.uav != cluster.uav)
                .filter_map(|other| other.order.get(slot).map(|&j| (other.uav, j)))
                .map(|(s, j)| snapshot.gains[s][k] * snapshot.powers[j])
                .sum();
            rates[k] = user_rate(signal / (interference + noise), bandwidth_hz * share);
        }
    }
    rates
}
