use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::attack::AttackKind;
use crate::crypto::NodeId;
use crate::routing::ProtocolKind;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Width and height in meters.
    pub area: (f64, f64),
    pub node_count: usize,
    pub max_speed: f64,
    pub pause_time: f64,
    pub sim_duration: f64,
    pub flows: usize,
    pub pkt_rate: f64,
    pub pkt_size: u32,
    pub radio_range: f64,
    pub protocol: ProtocolKind,
    pub attackers: Vec<(NodeId, AttackKind)>,
    pub rng_seed: u64,
    /// Shared link rate in bits per second.
    pub link_rate: f64,
    /// Length of one audit epoch in seconds.
    pub audit_epoch: f64,
}

impl ScenarioConfig {
    /// The desk-scale profile: 30 nodes on 300 x 300 m for 200 s, 4 CBR flows.
    pub fn desk(protocol: ProtocolKind) -> ScenarioConfig {
        ScenarioConfig {
            area: (300.0, 300.0),
            node_count: 30,
            max_speed: 25.0,
            pause_time: 0.0,
            sim_duration: 200.0,
            flows: 4,
            pkt_rate: 4.0,
            pkt_size: 256,
            radio_range: 250.0,
            protocol,
            attackers: Vec::new(),
            rng_seed: 1,
            link_rate: 2.0e6,
            audit_epoch: 10.0,
        }
    }

    /// The desk profile with one black hole, one sequence inflater and one
    /// passive dropper.
    pub fn desk_with_attackers(protocol: ProtocolKind) -> ScenarioConfig {
        let mut c = ScenarioConfig::desk(protocol);
        c.attackers = vec![
            (NodeId(27), AttackKind::BlackHole { delta: 1000 }),
            (NodeId(28), AttackKind::SeqInflation { delta: 500 }),
            (NodeId(29), AttackKind::PassiveDrop { p: 0.8 }),
        ];
        c
    }

    /// End of the attacker-silent training epoch.
    pub fn training_end(&self) -> f64 {
        0.1 * self.sim_duration
    }

    pub fn attack_of(&self, node: NodeId) -> Option<AttackKind> {
        self.attackers.iter().find(|(n, _)| *n == node).map(|(_, a)| *a)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive"));
            }
        };
        positive("area", self.area.0.min(self.area.1));
        positive("max_speed", self.max_speed);
        positive("sim_duration", self.sim_duration);
        positive("pkt_rate", self.pkt_rate);
        positive("radio_range", self.radio_range);
        positive("link_rate", self.link_rate);
        positive("audit_epoch", self.audit_epoch);
        if self.node_count < 2 {
            bad.push("node_count must be at least 2".to_string());
        }
        if self.pkt_size == 0 {
            bad.push("pkt_size must be positive".to_string());
        }
        if !(self.pause_time >= 0.0) || self.pause_time > self.sim_duration {
            bad.push("pause_time must lie in [0, sim_duration]".to_string());
        }
        let mut seen = Vec::new();
        for (node, attack) in &self.attackers {
            if node.0 as usize >= self.node_count {
                bad.push(format!("attackers: node {node} is not in the node set"));
            }
            if seen.contains(node) {
                bad.push(format!("attackers: node {node} listed twice"));
            }
            seen.push(*node);
            if let Err(e) = attack.validate() {
                bad.push(format!("attackers: {e}"));
            }
        }
        let honest = self.node_count.saturating_sub(self.attackers.len());
        if 2 * self.flows > honest {
            bad.push(format!(
                "flows: {} flows need {} distinct honest end points, only {honest} available",
                self.flows,
                2 * self.flows
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    /// Parses `key = value` lines. `#` starts a comment. Unset keys keep the
    /// desk-profile defaults.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let mut c = ScenarioConfig::desk(ProtocolKind::Tap3);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::BadValue {
                line: line_no,
                key: key.to_string(),
                value: value.to_string(),
            };
            fn num<T: FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
                v.parse().map_err(|_| bad())
            }
            match key {
                "area" => {
                    let (w, h) = value
                        .split_once(['x', 'X', '*'])
                        .ok_or_else(bad)?;
                    c.area = (num(w.trim(), bad)?, num(h.trim(), bad)?);
                }
                "node_count" => c.node_count = num(value, bad)?,
                "max_speed" => c.max_speed = num(value, bad)?,
                "pause_time" => c.pause_time = num(value, bad)?,
                "sim_duration" => c.sim_duration = num(value, bad)?,
                "flows" => c.flows = num(value, bad)?,
                "pkt_rate" => c.pkt_rate = num(value, bad)?,
                "pkt_size" => c.pkt_size = num(value, bad)?,
                "radio_range" => c.radio_range = num(value, bad)?,
                "protocol" => c.protocol = value.parse().map_err(|_| bad())?,
                "rng_seed" => c.rng_seed = num(value, bad)?,
                "link_rate" => c.link_rate = num(value, bad)?,
                "audit_epoch" => c.audit_epoch = num(value, bad)?,
                "attacker" | "attackers" => {
                    let (node, rest) = value.split_once(':').ok_or_else(bad)?;
                    let node = NodeId(num(node.trim(), bad)?);
                    let attack: AttackKind = rest.parse().map_err(|e| ConfigError::Attack {
                        line: line_no,
                        source: e,
                    })?;
                    c.attackers.push((node, attack));
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        key: key.to_string(),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("area", format!("{}x{}", self.area.0, self.area.1));
        kv("node_count", self.node_count.to_string());
        kv("max_speed", self.max_speed.to_string());
        kv("pause_time", self.pause_time.to_string());
        kv("sim_duration", self.sim_duration.to_string());
        kv("flows", self.flows.to_string());
        kv("pkt_rate", self.pkt_rate.to_string());
        kv("pkt_size", self.pkt_size.to_string());
        kv("radio_range", self.radio_range.to_string());
        kv("protocol", self.protocol.to_string());
        kv("rng_seed", self.rng_seed.to_string());
        kv("link_rate", self.link_rate.to_string());
        kv("audit_epoch", self.audit_epoch.to_string());
        for (node, attack) in &self.attackers {
            kv("attacker", format!("{node}:{attack}"));
        }
        s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("line {line}: {source}")]
    Attack {
        line: usize,
        source: super::attack::AttackParseError,
    },
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_config_text())
    }
}
