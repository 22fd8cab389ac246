//! Scenario configuration files.
//!
//! ```toml
//! q = 101                # field modulus, prime below 2^32
//! seed = 2               # construction and input seed
//! datasets = 6           # K
//! lprime = 1             # symbols per piece in simulated rounds
//!
//! [[cluster]]
//! stragglers = 0         # s2 of this cluster
//! colluders = 1          # T of this cluster
//! users = [[1, 3, 4, 6], [1, 2, 6]]   # one-based datasets per user
//! dropped = []           # one-based users dropped by `run`
//!
//! [audit]
//! cap = 10000            # exhaustive enumeration limit per sweep
//! samples = 1000         # random draws once a sweep exceeds the cap
//! oracle = false         # cross-check leakage by exhaustive counting
//! oracle_budget = 4194304
//! colluder_inputs = "held-pieces"     # or "partial-sum"
//! ```

use std::collections::BTreeSet;

use hisecagg_core::audit::{AuditOptions, ColluderInputs, DEFAULT_ORACLE_BUDGET};
use hisecagg_core::combin::SweepCaps;
use hisecagg_core::topology::{Assignment, Scenario, TopologyError};
use hisecagg_core::DEFAULT_MODULUS;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_q")]
    pub q: u64,
    #[serde(default)]
    pub seed: u64,
    pub datasets: usize,
    #[serde(default = "default_lprime")]
    pub lprime: usize,
    #[serde(rename = "cluster")]
    pub clusters: Vec<ClusterConfig>,
    #[serde(default)]
    pub audit: AuditConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub users: Vec<Vec<usize>>,
    #[serde(default)]
    pub stragglers: usize,
    #[serde(default)]
    pub colluders: usize,
    #[serde(default)]
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub cap: u64,
    pub samples: usize,
    pub oracle: bool,
    pub oracle_budget: u64,
    pub colluder_inputs: InputsConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let caps = SweepCaps::default();
        Self {
            cap: caps.cap as u64,
            samples: caps.samples,
            oracle: false,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            colluder_inputs: InputsConfig::HeldPieces,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputsConfig {
    #[default]
    HeldPieces,
    PartialSum,
}

fn default_q() -> u64 {
    DEFAULT_MODULUS
}

fn default_lprime() -> usize {
    1
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub q: Option<u64>,
    pub seed: Option<u64>,
    pub lprime: Option<usize>,
    pub exhaustive_caps: Option<u64>,
    pub oracle: bool,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(q) = ov.q {
            self.q = q;
        }
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(l) = ov.lprime {
            self.lprime = l;
        }
        if let Some(cap) = ov.exhaustive_caps {
            self.audit.cap = cap;
        }
        self.audit.oracle |= ov.oracle;
    }

    pub fn scenario(&self) -> Result<Scenario, TopologyError> {
        let table: Vec<Vec<Vec<usize>>> = self.clusters.iter().map(|c| c.users.clone()).collect();
        Ok(Scenario {
            assignment: Assignment::from_one_based(self.datasets, &table)?,
            stragglers: self.clusters.iter().map(|c| c.stragglers).collect(),
            colluders: self.clusters.iter().map(|c| c.colluders).collect(),
        })
    }

    /// Zero-based dropped users per cluster.
    pub fn dropouts(&self) -> Result<Vec<BTreeSet<usize>>, String> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(u, c)| {
                c.dropped
                    .iter()
                    .map(|&v| v.checked_sub(1).ok_or_else(|| format!("cluster {}: users are numbered from 1", u + 1)))
                    .collect()
            })
            .collect()
    }
}

impl AuditConfig {
    pub fn options(&self, lprime: usize) -> AuditOptions {
        let caps = SweepCaps { cap: self.cap as u128, samples: self.samples };
        AuditOptions {
            collusion: caps,
            dropouts: caps,
            survivors: caps,
            inputs: match self.colluder_inputs {
                InputsConfig::HeldPieces => ColluderInputs::HeldPieces,
                InputsConfig::PartialSum => ColluderInputs::PartialSum,
            },
            oracle: self.oracle,
            oracle_budget: self.oracle_budget,
            lprime,
        }
    }
}
