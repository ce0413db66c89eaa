//! Plain-text checkpoints of learner state.
//!
//! ```text
//! uaco-ckpt v1
//! digest <config digest>
//! agent_mode shared
//! learners 1
//! learner 0 train_steps 1200 syncs 1 adam_t 1200
//! tensor 0.eval.w1 40 15
//! <one row of values per line>
//! ...
//! ```
//!
//! Every value is written with 17 significant digits, so a round trip
//! restores the parameters bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{AgentMode, Config};
use crate::error::CheckpointError;
use crate::mdqn::{Learner, MultiAgent, ReplayMemory};
use crate::nn::{Adam, Mlp, MlpDims};

pub const HEADER: &str = "uaco-ckpt v1";

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    writeln!(out, "tensor {name} {rows} {cols}").unwrap();
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
}

fn push_net(out: &mut String, prefix: &str, net: &Mlp) {
    for t in net.tensors() {
        let (rows, cols) = t.shape;
        push_tensor(out, &format!("{prefix}.{}", t.name), rows, cols, &net.params()[t.offset..t.offset + t.len()]);
    }
}

pub fn to_string(agents: &MultiAgent, cfg: &Config) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "digest {}", cfg.digest()).unwrap();
    writeln!(out, "agent_mode {}", agents.mode).unwrap();
    writeln!(out, "learners {}", agents.learners.len()).unwrap();
    for (i, l) in agents.learners.iter().enumerate() {
        writeln!(out, "learner {i} train_steps {} syncs {} adam_t {}", l.train_steps, l.syncs, l.adam.t).unwrap();
        push_net(&mut out, &format!("{i}.eval"), &l.eval);
        push_net(&mut out, &format!("{i}.target"), &l.target);
        let n = l.adam.m.len();
        push_tensor(&mut out, &format!("{i}.adam.m"), n, 1, &l.adam.m);
        push_tensor(&mut out, &format!("{i}.adam.v"), n, 1, &l.adam.v);
    }
    out
}

pub fn write(path: &Path, agents: &MultiAgent, cfg: &Config) -> Result<(), CheckpointError> {
    std::fs::write(path, to_string(agents, cfg))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Malformed {
            line: self.line,
            message: message.into(),
        }
    }

    /// `<keyword> <value>` line.
    fn field(&mut self, keyword: &str) -> Result<&'a str, CheckpointError> {
        let l = self.next()?;
        l.strip_prefix(keyword)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{keyword} …`")))
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T, CheckpointError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn tensor(&mut self, name: &str) -> Result<(usize, usize, Vec<f64>), CheckpointError> {
        let head = self.field("tensor")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(self.err(format!("expected tensor `{name}`")));
        }
        let rows: usize = self.number(parts[1])?;
        let cols: usize = self.number(parts[2])?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let row = l
                .split_whitespace()
                .map(|v| self.number::<f64>(v))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != cols {
                return Err(self.err(format!("expected {cols} values, found {}", row.len())));
            }
            values.extend(row);
        }
        Ok((rows, cols, values))
    }

    fn net(&mut self, prefix: &str) -> Result<Mlp, CheckpointError> {
        let (hidden, input, w1) = self.tensor(&format!("{prefix}.w1"))?;
        let (_, _, b1) = self.tensor(&format!("{prefix}.b1"))?;
        let (output, _, w2) = self.tensor(&format!("{prefix}.w2"))?;
        let (_, _, b2) = self.tensor(&format!("{prefix}.b2"))?;
        let params = [w1, b1, w2, b2].concat();
        Ok(Mlp::from_params(MlpDims::new(input, hidden, output), params)?)
    }
}

/// Parse a checkpoint. The stored config digest must match `cfg` unless
/// `force` is set.
pub fn from_str(text: &str, cfg: &Config, force: bool) -> Result<MultiAgent, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next().map_err(|_| CheckpointError::Version(String::new()))?;
    if header.trim() != HEADER {
        return Err(CheckpointError::Version(header.to_string()));
    }
    let found = lines.field("digest")?.trim().to_string();
    let expected = cfg.digest();
    if found != expected && !force {
        return Err(CheckpointError::Digest { expected, found });
    }
    let mode_text = lines.field("agent_mode")?;
    let mode: AgentMode = mode_text.trim().parse().map_err(|e: String| lines.err(e))?;
    let count_text = lines.field("learners")?;
    let count: usize = lines.number(count_text.trim())?;
    let mut learners = Vec::with_capacity(count);
    for i in 0..count {
        let meta = lines.field("learner")?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 7 || parts[0] != i.to_string() {
            return Err(lines.err("bad learner line"));
        }
        let train_steps: u64 = lines.number(parts[2])?;
        let syncs: u64 = lines.number(parts[4])?;
        let adam_t: u64 = lines.number(parts[6])?;
        let eval = lines.net(&format!("{i}.eval"))?;
        let target = lines.net(&format!("{i}.target"))?;
        let (_, _, m) = lines.tensor(&format!("{i}.adam.m"))?;
        let (_, _, v) = lines.tensor(&format!("{i}.adam.v"))?;
        let mut adam = Adam::new(eval.params().len(), cfg.learning_rate);
        if m.len() != adam.m.len() || v.len() != adam.v.len() {
            return Err(lines.err("optimizer state does not match the network"));
        }
        adam.m = m;
        adam.v = v;
        adam.t = adam_t;
        learners.push(Learner {
            eval,
            target,
            adam,
            memory: ReplayMemory::new(cfg.replay_capacity),
            train_steps,
            syncs,
        });
    }
    Ok(MultiAgent {
        mode,
        learners,
        num_agents: cfg.num_uavs,
    })
}

pub fn read(path: &Path, cfg: &Config, force: bool) -> Result<MultiAgent, CheckpointError> {
    from_str(&std::fs::read_to_string(path)?, cfg, force)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{network_dims, Trainer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained() -> (Config, MultiAgent) {
        let mut cfg = Config::default();
        cfg.slots = 20;
        cfg.recluster_period = 20;
        cfg.batch_size = 16;
        cfg.episodes = 2;
        let mut t = Trainer::new(&cfg);
        t.train_episode();
        t.train_episode();
        (cfg, t.agents)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (cfg, agents) = trained();
        let text = to_string(&agents, &cfg);
        let back = from_str(&text, &cfg, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dims = network_dims(&cfg);
        for _ in 0..100 {
            let x: Vec<f64> = (0..dims.input).map(|_| rng.random()).collect();
            assert_eq!(
                agents.learners[0].eval.forward(&x).unwrap(),
                back.learners[0].eval.forward(&x).unwrap()
            );
        }
        assert_eq!(agents.learners[0].eval, back.learners[0].eval);
        assert_eq!(agents.learners[0].target, back.learners[0].target);
        assert_eq!(agents.learners[0].adam, back.learners[0].adam);
        assert_eq!(agents.learners[0].train_steps, back.learners[0].train_steps);
        assert_eq!(to_string(&back, &cfg), text);
    }

    #[test]
    fn corrupt_header_is_a_version_error() {
        let (cfg, agents) = trained();
        let text = to_string(&agents, &cfg).replacen("uaco-ckpt v1", "uaco-ckpt v9", 1);
        assert!(matches!(from_str(&text, &cfg, false), Err(CheckpointError::Version(_))));
    }

    #[test]
    fn digest_mismatch_needs_force() {
        let (cfg, agents) = trained();
        let text = to_string(&agents, &cfg);
        let mut other = cfg.clone();
        other.qos_bps = 300.0;
        assert!(matches!(from_str(&text, &other, false), Err(CheckpointError::Digest { .. })));
        assert!(from_str(&text, &other, true).is_ok());
        // run-control keys do not change the digest
        let mut reseeded = cfg.clone();
        reseeded.seed = 99;
        assert!(from_str(&text, &reseeded, false).is_ok());
    }

    #[test]
    fn truncated_file_is_malformed() {
        let (cfg, agents) = trained();
        let text = to_string(&agents, &cfg);
        let cut: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(matches!(from_str(&cut, &cfg, false), Err(CheckpointError::Malformed { .. })));
    }
}
