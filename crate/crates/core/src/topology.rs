//! Data assignment, replication parameters, feasibility and optimal rates.
//!
//! Indices are zero-based throughout the library: cluster `u`, user `v`
//! within a cluster, dataset `k`, piece `j`. Configuration files and reports
//! use one-based numbering; conversion happens at those edges only.

use std::collections::BTreeSet;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ff::FieldRng;

/// Exact rate value.
pub type Rate = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("no clusters given")]
    NoClusters,
    #[error("cluster {} has no users", .0 + 1)]
    EmptyCluster(usize),
    #[error("user ({},{}) holds no dataset", .0 + 1, .1 + 1)]
    EmptyUserAssignment(usize, usize),
    /// `dataset` is the offending one-based label.
    #[error("user ({},{}) references dataset {dataset}, but there are only {datasets}", .cluster + 1, .user + 1)]
    DatasetOutOfRange { cluster: usize, user: usize, dataset: usize, datasets: usize },
    #[error("dataset {} is not held by any user", .0 + 1)]
    OrphanDataset(usize),
    #[error("expected one {what} entry per cluster ({expected}), got {got}")]
    ClusterCountMismatch { what: &'static str, expected: usize, got: usize },
    #[error("cluster {}: {stragglers} stragglers but replication r2 = {r2} (need s2 < r2)", .cluster + 1)]
    TooManyStragglers { cluster: usize, stragglers: usize, r2: usize },
    #[error("cluster {}: {colluders} colluders exceed V - r2 = {bound}", .cluster + 1)]
    TooManyColluders { cluster: usize, colluders: usize, bound: usize },
    #[error("every dataset is replicated in all {0} clusters (r1 = U); need r1 <= U - 1")]
    ReplicationTooHigh(usize),
    #[error("key count m * R_Z = {0} is not an integer")]
    NonIntegralKeyCount(Rate),
}

/// Which datasets each user holds. `clusters[u][v]` is user `(u, v)`'s set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    datasets: usize,
    clusters: Vec<Vec<BTreeSet<usize>>>,
}

impl Assignment {
    /// Validate and wrap a zero-based assignment table.
    pub fn new(datasets: usize, clusters: Vec<Vec<BTreeSet<usize>>>) -> Result<Self, TopologyError> {
        if clusters.is_empty() {
            return Err(TopologyError::NoClusters);
        }
        let mut held = vec![false; datasets];
        for (u, users) in clusters.iter().enumerate() {
            if users.is_empty() {
                return Err(TopologyError::EmptyCluster(u));
            }
            for (v, set) in users.iter().enumerate() {
                if set.is_empty() {
                    return Err(TopologyError::EmptyUserAssignment(u, v));
                }
                for &k in set {
                    if k >= datasets {
                        return Err(TopologyError::DatasetOutOfRange {
                            cluster: u,
                            user: v,
                            dataset: k + 1,
                            datasets,
                        });
                    }
                    held[k] = true;
                }
            }
        }
        if let Some(k) = held.iter().position(|h| !h) {
            return Err(TopologyError::OrphanDataset(k));
        }
        Ok(Self { datasets, clusters })
    }

    /// Same as [`Assignment::new`] but with one-based dataset labels, as they
    /// appear in configuration files.
    pub fn from_one_based(datasets: usize, clusters: &[Vec<Vec<usize>>]) -> Result<Self, TopologyError> {
        let mut table = Vec::with_capacity(clusters.len());
        for (u, users) in clusters.iter().enumerate() {
            let mut row = Vec::with_capacity(users.len());
            for (v, list) in users.iter().enumerate() {
                let mut set = BTreeSet::new();
                for &k in list {
                    if k == 0 || k > datasets {
                        return Err(TopologyError::DatasetOutOfRange {
                            cluster: u,
                            user: v,
                            dataset: k,
                            datasets,
                        });
                    }
                    set.insert(k - 1);
                }
                row.push(set);
            }
            table.push(row);
        }
        Self::new(datasets, table)
    }

    pub fn datasets(&self) -> usize {
        self.datasets
    }

    pub fn clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_size(&self, u: usize) -> usize {
        self.clusters[u].len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn user(&self, u: usize, v: usize) -> &BTreeSet<usize> {
        &self.clusters[u][v]
    }

    pub fn holds(&self, u: usize, v: usize, k: usize) -> bool {
        self.clusters[u][v].contains(&k)
    }

    /// Union of the datasets held in cluster `u`.
    pub fn cluster_datasets(&self, u: usize) -> BTreeSet<usize> {
        self.clusters[u].iter().flatten().copied().collect()
    }

    pub fn table(&self) -> &[Vec<BTreeSet<usize>>] {
        &self.clusters
    }
}

/// An assignment together with the declared straggler and collusion bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub assignment: Assignment,
    pub stragglers: Vec<usize>,
    pub colluders: Vec<usize>,
}

/// Every scalar the construction needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub datasets: usize,
    pub cluster_sizes: Vec<usize>,
    /// Number of clusters holding dataset `k`.
    pub r1k: Vec<usize>,
    /// `r2k[u][k]`: number of users of cluster `u` holding dataset `k`.
    pub r2k: Vec<Vec<usize>>,
    pub r1: usize,
    pub r2: Vec<usize>,
    pub s2: Vec<usize>,
    pub t: Vec<usize>,
    pub m1: usize,
    pub m2: Vec<usize>,
    /// Number of pieces each gradient is split into.
    pub m: usize,
}

impl DerivedParams {
    pub fn clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    /// Position of piece `j` of dataset `k` in the stacked gradient vector.
    #[inline]
    pub fn column_index(&self, k: usize, j: usize) -> usize {
        j * self.datasets + k
    }

    /// Inverse of [`DerivedParams::column_index`]: `(dataset, piece)`.
    #[inline]
    pub fn column_source(&self, c: usize) -> (usize, usize) {
        (c % self.datasets, c / self.datasets)
    }

    /// `K * m`, the length of the stacked gradient vector.
    pub fn gradient_dim(&self) -> usize {
        self.datasets * self.m
    }

    /// Rows each relay forwards: `m / m1`.
    pub fn relay_rows(&self) -> usize {
        self.m / self.m1
    }

    /// `U * m / m1`, the rows of the relay-to-server code.
    pub fn server_rows(&self) -> usize {
        self.clusters() * self.relay_rows()
    }

    /// Rows each user of cluster `u` sends: `m / (m1 * m2[u])`.
    pub fn user_rows(&self, u: usize) -> usize {
        self.m / (self.m1 * self.m2[u])
    }

    /// `(V_u - s2[u]) * m / (m1 * m2[u])`, the dimension a relay decodes.
    pub fn cluster_rows(&self, u: usize) -> usize {
        (self.cluster_sizes[u] - self.s2[u]) * self.user_rows(u)
    }

    /// Virtual (encodability) rows of cluster `u`'s local code.
    pub fn cluster_virtual_rows(&self, u: usize) -> usize {
        self.cluster_rows(u) - self.relay_rows()
    }
}

/// Compute replication factors and piece counts for a scenario.
///
/// The piece count is `m = lcm_u(m1 * m2[u])`, the smallest value for which
/// every per-relay and per-user row count is an integer. It coincides with
/// `lcm(m1, m2[..])` whenever that value already makes `m / (m1 * m2[u])`
/// integral.
pub fn derive_params(a: &Assignment, s2: &[usize], t: &[usize]) -> Result<DerivedParams, TopologyError> {
    let n_clusters = a.clusters();
    for (what, got) in [("straggler", s2.len()), ("colluder", t.len())] {
        if got != n_clusters {
            return Err(TopologyError::ClusterCountMismatch { what, expected: n_clusters, got });
        }
    }
    let k_total = a.datasets();
    let r2k: Vec<Vec<usize>> = (0..n_clusters)
        .map(|u| {
            (0..k_total)
                .map(|k| a.table()[u].iter().filter(|set| set.contains(&k)).count())
                .collect()
        })
        .collect();
    let r1k: Vec<usize> = (0..k_total).map(|k| r2k.iter().filter(|row| row[k] > 0).count()).collect();
    let r1 = r1k.iter().copied().min().unwrap_or(0);
    let r2: Vec<usize> = r2k
        .iter()
        .map(|row| row.iter().copied().filter(|&c| c > 0).min().expect("cluster holds a dataset"))
        .collect();
    for u in 0..n_clusters {
        if s2[u] >= r2[u] {
            return Err(TopologyError::TooManyStragglers { cluster: u, stragglers: s2[u], r2: r2[u] });
        }
    }
    let m1 = r1;
    let m2: Vec<usize> = r2.iter().zip(s2).map(|(r, s)| r - s).collect();
    let m = m2.iter().fold(m1, |acc, &x| acc.lcm(&(m1 * x)));
    Ok(DerivedParams {
        datasets: k_total,
        cluster_sizes: a.cluster_sizes(),
        r1k,
        r2k,
        r1,
        r2,
        s2: s2.to_vec(),
        t: t.to_vec(),
        m1,
        m2,
        m,
    })
}

/// Check the regime in which the construction is secure and rate-optimal.
pub fn check_feasibility(p: &DerivedParams) -> Result<(), TopologyError> {
    for u in 0..p.clusters() {
        if p.s2[u] >= p.r2[u] {
            return Err(TopologyError::TooManyStragglers { cluster: u, stragglers: p.s2[u], r2: p.r2[u] });
        }
        let bound = p.cluster_sizes[u] - p.r2[u];
        if p.t[u] > bound {
            return Err(TopologyError::TooManyColluders { cluster: u, colluders: p.t[u], bound });
        }
    }
    if p.r1 >= p.clusters() {
        return Err(TopologyError::ReplicationTooHigh(p.clusters()));
    }
    Ok(())
}

/// Optimal link rates and source-key size for a feasible parameter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateReport {
    /// Relay-to-server rate.
    pub r1: Rate,
    /// User-to-relay rate per cluster.
    pub r2: Vec<Rate>,
    /// Source-key rate.
    pub rz: Rate,
    /// Number of independent key vectors, `m * rz`.
    pub key_count: usize,
}

impl RateReport {
    /// Whether every rate equals its lower bound `1/m1`, `1/(m1*m2[u])`.
    pub fn on_capacity_boundary(&self, p: &DerivedParams) -> bool {
        self.r1 == Rate::new(1, p.m1 as i64)
            && self
                .r2
                .iter()
                .zip(&p.m2)
                .all(|(r, &m2)| *r == Rate::new(1, (p.m1 * m2) as i64))
    }
}

/// Rates achieved by the construction: each relay sends `m/m1` pieces and
/// each user `m/(m1*m2[u])` pieces of `L/m` symbols; the key rate covers both
/// relay security (first term) and server security (second term).
pub fn rates(p: &DerivedParams) -> Result<RateReport, TopologyError> {
    let m = p.m as i64;
    let r1 = Rate::new(p.relay_rows() as i64, m);
    let r2: Vec<Rate> = (0..p.clusters()).map(|u| Rate::new(p.user_rows(u) as i64, m)).collect();
    let live = |i: usize| Rate::from_integer((p.cluster_sizes[i] - p.s2[i]) as i64) * r2[i];
    let leak = |i: usize| Rate::from_integer(p.t[i] as i64) * r2[i];
    let n = p.clusters();

    let relay_term = (0..n)
        .map(|i| live(i) + (0..n).filter(|&j| j != i).map(leak).sum::<Rate>())
        .max()
        .expect("at least one cluster");
    let one = Rate::from_integer(1);
    let server_term = std::cmp::min(
        Rate::from_integer(n as i64) * r1 + (0..n).map(leak).sum::<Rate>() - one,
        (0..n).map(live).sum::<Rate>() - one,
    );
    let rz = std::cmp::max(relay_term, server_term);
    let keys = rz * Rate::from_integer(m);
    if !keys.is_integer() || keys < Rate::zero() {
        return Err(TopologyError::NonIntegralKeyCount(keys));
    }
    Ok(RateReport { r1, r2, rz, key_count: keys.to_integer().to_usize().expect("nonnegative") })
}

/// Size limits for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct ScenarioBounds {
    pub max_clusters: usize,
    pub max_cluster_size: usize,
    pub max_datasets: usize,
}

impl Default for ScenarioBounds {
    fn default() -> Self {
        Self { max_clusters: 3, max_cluster_size: 4, max_datasets: 6 }
    }
}

/// Draw a random feasible scenario: at least two clusters, every user
/// holding a random nonempty subset, stragglers and colluders drawn within
/// their feasibility bounds.
pub fn random_scenario(rng: &mut FieldRng, bounds: ScenarioBounds) -> Scenario {
    assert!(bounds.max_clusters >= 2 && bounds.max_cluster_size >= 1 && bounds.max_datasets >= 1);
    let pick = |rng: &mut FieldRng, lo: usize, hi: usize| lo + rng.below((hi - lo + 1) as u64) as usize;
    loop {
        let n_clusters = pick(rng, 2, bounds.max_clusters);
        let k_total = pick(rng, 1, bounds.max_datasets);
        let table: Vec<Vec<BTreeSet<usize>>> = (0..n_clusters)
            .map(|_| {
                let size = pick(rng, 1, bounds.max_cluster_size);
                (0..size)
                    .map(|_| loop {
                        let set: BTreeSet<usize> = (0..k_total).filter(|_| rng.below(2) == 1).collect();
                        if !set.is_empty() {
                            break set;
                        }
                    })
                    .collect()
            })
            .collect();
        let Ok(assignment) = Assignment::new(k_total, table) else {
            continue;
        };
        let zeros = vec![0; n_clusters];
        let base = derive_params(&assignment, &zeros, &zeros).expect("zero stragglers always derive");
        if base.r1 >= n_clusters {
            continue;
        }
        let stragglers: Vec<usize> = base.r2.iter().map(|&r| pick(rng, 0, r - 1)).collect();
        let colluders: Vec<usize> =
            (0..n_clusters).map(|u| pick(rng, 0, base.cluster_sizes[u] - base.r2[u])).collect();
        return Scenario { assignment, stragglers, colluders };
    }
}
