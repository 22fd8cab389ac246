//! One protocol round: inputs, user messages, relay aggregation under
//! dropouts, and decoding at the server.
//!
//! Symbol vectors are matrix rows: `W` is `K*m x L'` in column-index order,
//! `N` is `key_count x L'`, and every message is its coefficient matrix
//! applied to `W' = [W; N]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use itertools::Itertools;
use thiserror::Error;

use crate::builder::Scheme;
use crate::combin::{self, SlotSize, SweepCaps};
use crate::ff::FieldRng;
use crate::matrix::Matrix;
use crate::topology::DerivedParams;

/// Stream for gradient symbols.
pub const GRADIENT_STREAM: u64 = 1;
/// Stream for key symbols.
pub const KEY_STREAM: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("user ({cluster},{user}) would encode column {column} of a dataset it does not hold")]
    EncodabilityViolation { cluster: usize, user: usize, column: usize },
    #[error("cluster {cluster}: {survivors} survivors, at least {needed} needed")]
    TooFewSurvivors { cluster: usize, survivors: usize, needed: usize },
    #[error("cluster {cluster}: no invertible survivor subset")]
    NoInvertibleSubset { cluster: usize },
    #[error("cluster {cluster}: no message from surviving user {user}")]
    MissingMessage { cluster: usize, user: usize },
    #[error("no message from relay {0}")]
    MissingRelayMessage(usize),
    #[error("cluster {cluster}: user {user} does not exist")]
    UnknownUser { cluster: usize, user: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Gradient pieces, one row per `column_index(k, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientSet {
    pub w: Matrix,
}

/// Source-key symbols, one row per key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub n: Matrix,
}

impl GradientSet {
    pub fn lprime(&self) -> usize {
        self.w.cols()
    }
}

/// Uniform gradients and keys, drawn from separate streams of `seed`.
pub fn sample_inputs(s: &Scheme, lprime: usize, seed: u64) -> (GradientSet, KeyMaterial) {
    assert!(lprime >= 1, "at least one symbol per piece");
    let w = Matrix::random(s.field, s.params.gradient_dim(), lprime, &mut FieldRng::with_stream(seed, GRADIENT_STREAM));
    let n = Matrix::random(s.field, s.key_count(), lprime, &mut FieldRng::with_stream(seed, KEY_STREAM));
    (GradientSet { w }, KeyMaterial { n })
}

fn stacked_input(s: &Scheme, w: &GradientSet, n: &KeyMaterial) -> Result<Matrix, RuntimeError> {
    if w.w.rows() != s.params.gradient_dim() || n.n.rows() != s.key_count() || w.w.cols() != n.n.cols() {
        return Err(RuntimeError::DimensionMismatch(format!(
            "inputs {}x{} and {}x{}",
            w.w.rows(),
            w.w.cols(),
            n.n.rows(),
            n.n.cols()
        )));
    }
    Ok(w.w.vstack(&n.n).expect("same width"))
}

fn check_user(s: &Scheme, u: usize, v: usize) -> Result<(), RuntimeError> {
    if u >= s.params.clusters() || v >= s.params.cluster_sizes[u] {
        return Err(RuntimeError::UnknownUser { cluster: u + 1, user: v + 1 });
    }
    Ok(())
}

/// Message of user `(u, v)`, after checking that it only touches held data.
pub fn compute_user_message(
    s: &Scheme,
    u: usize,
    v: usize,
    w: &GradientSet,
    n: &KeyMaterial,
) -> Result<Matrix, RuntimeError> {
    check_user(s, u, v)?;
    let coeff = s.user_coefficients(u, v);
    let p = &s.params;
    for c in 0..p.gradient_dim() {
        let (k, _) = p.column_source(c);
        if !s.assignment().holds(u, v, k) && (0..coeff.rows()).any(|r| !coeff.get(r, c).is_zero()) {
            return Err(RuntimeError::EncodabilityViolation { cluster: u + 1, user: v + 1, column: c + 1 });
        }
    }
    Ok(coeff.mul(&stacked_input(s, w, n)?).expect("conformant"))
}

/// Lexicographically smallest subset of `survivors` of size `V_u - s2[u]`
/// whose stacked blocks are invertible.
pub fn invertible_subset(s: &Scheme, u: usize, survivors: &BTreeSet<usize>) -> Option<BTreeSet<usize>> {
    let live = s.params.cluster_sizes[u] - s.params.s2[u];
    survivors
        .iter()
        .copied()
        .combinations(live)
        .map(|c| c.into_iter().collect::<BTreeSet<_>>())
        .find(|set| s.clusters[u].stacked_blocks(&s.params, set).rank() == s.params.cluster_rows(u))
}

/// Relay `u`'s forwarded rows, decoded from the survivors' messages.
/// Returns the subset actually used together with the message.
pub fn relay_aggregate(
    s: &Scheme,
    u: usize,
    received: &BTreeMap<usize, Matrix>,
    survivors: &BTreeSet<usize>,
) -> Result<(BTreeSet<usize>, Matrix), RuntimeError> {
    let p = &s.params;
    let needed = p.cluster_sizes[u] - p.s2[u];
    if survivors.len() < needed {
        return Err(RuntimeError::TooFewSurvivors { cluster: u + 1, survivors: survivors.len(), needed });
    }
    for &v in survivors {
        check_user(s, u, v)?;
        if !received.contains_key(&v) {
            return Err(RuntimeError::MissingMessage { cluster: u + 1, user: v + 1 });
        }
    }
    let used = invertible_subset(s, u, survivors).ok_or(RuntimeError::NoInvertibleSubset { cluster: u + 1 })?;
    let stack = s.clusters[u].stacked_blocks(p, &used);
    let inv = stack.inverse().map_err(|_| RuntimeError::NoInvertibleSubset { cluster: u + 1 })?;
    let msgs: Vec<&Matrix> = used.iter().map(|v| &received[v]).collect();
    let lprime = msgs[0].cols();
    let x = Matrix::vstack_all(s.field, lprime, msgs).map_err(|e| RuntimeError::DimensionMismatch(e.to_string()))?;
    let t = inv.mul(&x).map_err(|e| RuntimeError::DimensionMismatch(e.to_string()))?;
    Ok((used, t.row_range(0, p.relay_rows()).expect("relay rows fit")))
}

/// The `m` pieces of the sum of all gradients.
pub fn server_decode(s: &Scheme, y: &[Option<Matrix>]) -> Result<Matrix, RuntimeError> {
    let p = &s.params;
    let mut blocks = Vec::with_capacity(p.clusters());
    for u in 0..p.clusters() {
        match y.get(u) {
            Some(Some(m)) => blocks.push(m),
            _ => return Err(RuntimeError::MissingRelayMessage(u + 1)),
        }
    }
    let lprime = blocks[0].cols();
    let stacked = Matrix::vstack_all(s.field, lprime, blocks).map_err(|e| RuntimeError::DimensionMismatch(e.to_string()))?;
    s.relay.decoder.mul(&stacked).map_err(|e| RuntimeError::DimensionMismatch(e.to_string()))
}

/// `sum_k W_{k,j}` for each piece `j`, computed directly.
pub fn direct_sum(s: &Scheme, w: &GradientSet) -> Matrix {
    let p = &s.params;
    let f = s.field;
    let mut out = Matrix::zeros(f, p.m, w.lprime());
    for j in 0..p.m {
        for k in 0..p.datasets {
            let row = w.w.row(p.column_index(k, j));
            for (l, &x) in row.iter().enumerate() {
                out.set(j, l, f.add(out.get(j, l), x));
            }
        }
    }
    out
}

/// Everything exchanged in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    /// `x[u][v]`, `None` for a dropped user.
    pub x: Vec<Vec<Option<Matrix>>>,
    pub survivors: Vec<BTreeSet<usize>>,
    pub used: Vec<BTreeSet<usize>>,
    pub y: Vec<Matrix>,
    pub decoded: Matrix,
}

impl Transcript {
    /// Symbols sent by user `(u, v)`, zero if it dropped.
    pub fn user_link_symbols(&self, u: usize, v: usize) -> usize {
        self.x[u][v].as_ref().map_or(0, |m| m.rows() * m.cols())
    }

    pub fn relay_link_symbols(&self, u: usize) -> usize {
        self.y[u].rows() * self.y[u].cols()
    }

    /// Line-oriented dump; users and clusters are one-based.
    pub fn to_text(&self) -> String {
        let field = self.decoded.field();
        let render = |m: &Matrix| {
            (0..m.rows())
                .map(|r| m.row(r).iter().map(|x| x.value().to_string()).join(" "))
                .join(" | ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "transcript q={} lprime={}", field.modulus(), self.decoded.cols());
        for (u, users) in self.x.iter().enumerate() {
            for (v, msg) in users.iter().enumerate() {
                match msg {
                    Some(m) => {
                        let _ = writeln!(out, "x {} {} : {}", u + 1, v + 1, render(m));
                    }
                    None => {
                        let _ = writeln!(out, "x {} {} : dropped", u + 1, v + 1);
                    }
                }
            }
        }
        for (u, (surv, used)) in self.survivors.iter().zip(&self.used).enumerate() {
            let one_based = |s: &BTreeSet<usize>| s.iter().map(|v| v + 1).join(" ");
            let _ = writeln!(out, "survivors {} : {}", u + 1, one_based(surv));
            let _ = writeln!(out, "used {} : {}", u + 1, one_based(used));
        }
        for (u, y) in self.y.iter().enumerate() {
            let _ = writeln!(out, "y {} : {}", u + 1, render(y));
        }
        let _ = writeln!(out, "decoded : {}", render(&self.decoded));
        out
    }
}

fn check_dropouts(s: &Scheme, dropouts: &[BTreeSet<usize>]) -> Result<(), RuntimeError> {
    let p = &s.params;
    if dropouts.len() != p.clusters() {
        return Err(RuntimeError::DimensionMismatch(format!(
            "{} dropout sets for {} clusters",
            dropouts.len(),
            p.clusters()
        )));
    }
    for (u, d) in dropouts.iter().enumerate() {
        for &v in d {
            check_user(s, u, v)?;
        }
    }
    Ok(())
}

/// Run one round with the given users dropped.
pub fn simulate(
    s: &Scheme,
    w: &GradientSet,
    n: &KeyMaterial,
    dropouts: &[BTreeSet<usize>],
) -> Result<Transcript, RuntimeError> {
    check_dropouts(s, dropouts)?;
    let p = &s.params;
    let mut x = Vec::with_capacity(p.clusters());
    let mut survivors = Vec::new();
    let mut used = Vec::new();
    let mut y = Vec::new();
    for (u, dropped) in dropouts.iter().enumerate() {
        let mut msgs = Vec::with_capacity(p.cluster_sizes[u]);
        let mut received = BTreeMap::new();
        for v in 0..p.cluster_sizes[u] {
            if dropped.contains(&v) {
                msgs.push(None);
            } else {
                let m = compute_user_message(s, u, v, w, n)?;
                received.insert(v, m.clone());
                msgs.push(Some(m));
            }
        }
        let surv: BTreeSet<usize> = received.keys().copied().collect();
        let (chosen, yu) = relay_aggregate(s, u, &received, &surv)?;
        x.push(msgs);
        survivors.push(surv);
        used.push(chosen);
        y.push(yu);
    }
    let decoded = server_decode(s, &y.iter().cloned().map(Some).collect::<Vec<_>>())?;
    Ok(Transcript { x, survivors, used, y, decoded })
}

/// Every dropout pattern with at most `s2[u]` users of cluster `u` dropped
/// (or a sample when there are too many).
pub fn admissible_dropouts(p: &DerivedParams, caps: SweepCaps, rng: &mut FieldRng) -> Vec<Vec<BTreeSet<usize>>> {
    let slots: Vec<(usize, SlotSize)> =
        (0..p.clusters()).map(|u| (p.cluster_sizes[u], SlotSize::AtMost(p.s2[u]))).collect();
    combin::tuples(&slots, caps, rng)
}

/// Decoded sum for each dropout pattern. Relay messages depend only on
/// their own cluster's dropouts, so they are computed once per
/// `(cluster, dropout set)` and shared across patterns.
pub fn decode_sweep(
    s: &Scheme,
    w: &GradientSet,
    n: &KeyMaterial,
    patterns: &[Vec<BTreeSet<usize>>],
) -> Vec<Result<Matrix, RuntimeError>> {
    let p = &s.params;
    let mut messages: HashMap<(usize, usize), Result<Matrix, RuntimeError>> = HashMap::new();
    let mut relay: HashMap<(usize, BTreeSet<usize>), Result<Matrix, RuntimeError>> = HashMap::new();
    patterns
        .iter()
        .map(|pattern| {
            check_dropouts(s, pattern)?;
            let mut y = Vec::with_capacity(p.clusters());
            for (u, dropped) in pattern.iter().enumerate() {
                let yu = relay
                    .entry((u, dropped.clone()))
                    .or_insert_with(|| {
                        let mut received = BTreeMap::new();
                        for v in (0..p.cluster_sizes[u]).filter(|v| !dropped.contains(v)) {
                            let m = messages
                                .entry((u, v))
                                .or_insert_with(|| compute_user_message(s, u, v, w, n))
                                .clone()?;
                            received.insert(v, m);
                        }
                        let surv: BTreeSet<usize> = received.keys().copied().collect();
                        relay_aggregate(s, u, &received, &surv).map(|(_, m)| m)
                    })
                    .clone()?;
                y.push(Some(yu));
            }
            server_decode(s, &y)
        })
        .collect()
}
