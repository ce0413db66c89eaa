//! CSV metrics export.
//!
//! Every file starts with a `#` comment block holding the resolved
//! configuration, followed by a fixed header:
//!
//! `episode,slot,sum_rate_bps,reward,lambda,epsilon,loss,uav0_x,uav0_y,uav0_h,…,cluster_epoch`
//!
//! In per-slot files each row is one slot and `loss` is the mean training
//! loss of that slot (blank when nothing was trained). Summary files have
//! one row per episode with a blank `slot`, episode means for the rate,
//! reward, λ and loss columns, and the final UAV positions.

use std::fmt::Write as _;

use crate::config::Config;
use crate::env::{EpisodeMetrics, LossRecord};

pub const METRICS_VERSION: &str = "uaco-metrics v1";

pub fn preamble(cfg: &Config) -> String {
    let mut out = format!("# {METRICS_VERSION}\n");
    for (k, v) in cfg.entries() {
        writeln!(out, "# {k} = {v}").unwrap();
    }
    out
}

pub fn header(num_uavs: usize) -> String {
    let mut cols = vec!["episode", "slot", "sum_rate_bps", "reward", "lambda", "epsilon", "loss"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for u in 0..num_uavs {
        cols.extend([format!("uav{u}_x"), format!("uav{u}_y"), format!("uav{u}_h")]);
    }
    cols.push("cluster_epoch".into());
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn slot_rows(m: &EpisodeMetrics, out: &mut String) {
    for s in &m.slots {
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            m.episode,
            s.slot,
            s.sum_rate,
            s.reward,
            s.lambda,
            m.epsilon,
            opt(s.loss)
        );
        for p in &s.positions {
            write!(row, ",{},{},{}", p.x, p.y, p.h).unwrap();
        }
        writeln!(out, "{row},{}", s.cluster_epoch).unwrap();
    }
}

pub fn summary_row(m: &EpisodeMetrics, out: &mut String) {
    let n = m.slots.len().max(1) as f64;
    let reward = m.slots.iter().map(|s| s.reward).sum::<f64>() / n;
    let lambda = m.slots.iter().map(|s| f64::from(s.lambda)).sum::<f64>() / n;
    let losses: Vec<f64> = m.losses.iter().map(|l| l.loss).collect();
    let loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
    let mut row = format!(
        "{},,{},{},{},{},{}",
        m.episode,
        m.mean_sum_rate(),
        reward,
        lambda,
        m.epsilon,
        opt(loss)
    );
    if let Some(last) = m.slots.last() {
        for p in &last.positions {
            write!(row, ",{},{},{}", p.x, p.y, p.h).unwrap();
        }
        writeln!(out, "{row},{}", last.cluster_epoch).unwrap();
    } else {
        writeln!(out, "{row},").unwrap();
    }
}

pub const LOSS_HEADER: &str = "episode,slot,agent,step,loss";

pub fn loss_rows(losses: &[LossRecord], out: &mut String) {
    for l in losses {
        writeln!(out, "{},{},{},{},{}", l.episode, l.slot, l.agent, l.step, l.loss).unwrap();
    }
}
