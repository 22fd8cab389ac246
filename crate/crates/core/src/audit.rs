//! Security and decodability audit.
//!
//! Every party's observation is a linear image of `W' = [W; N]`, so mutual
//! information between observations reduces to ranks: with `X` uniform,
//! `H(M X) = rank(M)` in units of `log q`. [`linear_mi`] is that formula;
//! [`exhaustive_mi`] recomputes the same quantity by enumerating `X` and
//! counting images, without any linear algebra.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::builder::{self, Scheme};
use crate::combin::{self, SlotSize, SweepCaps};
use crate::ff::{FieldRng, Fe, PrimeField};
use crate::matrix::Matrix;
use crate::runtime;
use crate::topology::DerivedParams;

/// Stream used for sampled collusion tuples.
pub const COLLUSION_STREAM: u64 = 3;
/// Stream used for sampled dropout patterns.
pub const DROPOUT_STREAM: u64 = 4;
/// Default enumeration budget of the counting oracle.
pub const DEFAULT_ORACLE_BUDGET: u64 = 1 << 22;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("enumeration of {q}^{n} points exceeds the budget of {budget}")]
    BudgetExceeded { q: u64, n: usize, budget: u64 },
    #[error("image of {rows} rows does not fit a 128-bit key")]
    KeyTooWide { rows: usize },
    #[error("image distribution is not uniform on a subspace coset: {0}")]
    NonUniform(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Party {
    Relay(usize),
    Server,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Relay(u) => write!(f, "relay {}", u + 1),
            Party::Server => f.write_str("server"),
        }
    }
}

/// A party together with the users colluding with it, per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdversaryScenario {
    pub party: Party,
    pub colluders: Vec<BTreeSet<usize>>,
}

impl fmt::Display for AdversaryScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} colluders={}", self.party, combin::render_sets(&self.colluders))
    }
}

/// How a colluding user's own input is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ColluderInputs {
    /// Every piece of every dataset the user holds.
    #[default]
    HeldPieces,
    /// Only the piecewise sum over the datasets the user holds.
    PartialSum,
}

/// A linear observation: rows act on `W' = [W; N]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearView {
    pub coeff: Matrix,
}

impl LinearView {
    pub fn new(coeff: Matrix) -> Self {
        Self { coeff }
    }

    pub fn empty(field: PrimeField, cols: usize) -> Self {
        Self { coeff: Matrix::zeros(field, 0, cols) }
    }

    /// Unit rows reading the given coordinates.
    pub fn selectors(field: PrimeField, cols: usize, coords: impl IntoIterator<Item = usize>) -> Self {
        let coords: Vec<usize> = coords.into_iter().collect();
        let mut m = Matrix::zeros(field, coords.len(), cols);
        for (r, c) in coords.into_iter().enumerate() {
            m.set(r, c, Fe::ONE);
        }
        Self { coeff: m }
    }

    pub fn stack(&self, other: &LinearView) -> Result<LinearView, AuditError> {
        self.coeff
            .vstack(&other.coeff)
            .map(LinearView::new)
            .map_err(|e| AuditError::DimensionMismatch(e.to_string()))
    }
}

/// Conditioning split into plain coordinate reads and general rows; the
/// split lets the security computations drop the read coordinates instead of
/// eliminating them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conditioning {
    pub coords: BTreeSet<usize>,
    pub rows: Matrix,
}

impl Conditioning {
    pub fn to_view(&self) -> LinearView {
        let field = self.rows.field();
        let sel = LinearView::selectors(field, self.rows.cols(), self.coords.iter().copied());
        sel.stack(&LinearView::new(self.rows.clone())).expect("same width")
    }
}

/// Outcome of a single rank check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub pass: bool,
    pub measured: String,
    pub expected: String,
}

fn outcome(measured: impl ToString, expected: impl ToString) -> CheckOutcome {
    let (m, e) = (measured.to_string(), expected.to_string());
    CheckOutcome { pass: m == e, measured: m, expected: e }
}

/// `decoder * B1 = 0` and `rank(B1) = U*m/m1 - m`.
pub fn check_constraint1(s: &Scheme) -> CheckOutcome {
    let cancels = s.relay.decoder.mul(&s.relay.b1).map(|x| x.is_zero()).unwrap_or(false);
    let rank = s.relay.b1.rank();
    let want = s.params.server_rows() - s.params.m;
    outcome(
        format!("rank={rank},cancel={}", if cancels { "yes" } else { "no" }),
        format!("rank={want},cancel=yes"),
    )
}

/// Key rows `[0 | S2_block(v) * B2]` of the given users, in cluster order.
pub fn colluder_key_rows(s: &Scheme, colluders: &[BTreeSet<usize>]) -> Matrix {
    let blocks: Vec<Matrix> = colluders
        .iter()
        .enumerate()
        .flat_map(|(u, set)| set.iter().map(move |&v| builder::user_key_coefficients(s, u, v)))
        .collect();
    Matrix::vstack_all(s.field, s.key_count(), &blocks).expect("key rows share a width")
}

/// `[B2^(u); S2^(T_i) B2^(i) for i != u]` has full row rank.
pub fn check_constraint2(s: &Scheme, u: usize, colluders: &[BTreeSet<usize>]) -> CheckOutcome {
    let others: Vec<BTreeSet<usize>> = colluders
        .iter()
        .enumerate()
        .map(|(i, set)| if i == u { BTreeSet::new() } else { set.clone() })
        .collect();
    let stack = s.clusters[u].b2.vstack(&colluder_key_rows(s, &others)).expect("key width");
    outcome(stack.rank(), stack.rows())
}

/// `[B1; S2^(T_u) B2^(u) for all u]` has rank `U*m/m1 - m + sum |T_u| b_u`.
pub fn check_constraint3(s: &Scheme, colluders: &[BTreeSet<usize>]) -> CheckOutcome {
    let stack = s.relay.b1.vstack(&colluder_key_rows(s, colluders)).expect("key width");
    let p = &s.params;
    let want = p.server_rows() - p.m + colluders.iter().enumerate().map(|(u, t)| t.len() * p.user_rows(u)).sum::<usize>();
    outcome(stack.rank(), want)
}

/// Collusion tuples at the declared maximal sizes. Cluster `skip`, if any,
/// contributes no colluders.
pub fn collusion_tuples(
    p: &DerivedParams,
    skip: Option<usize>,
    caps: SweepCaps,
    rng: &mut FieldRng,
) -> Vec<Vec<BTreeSet<usize>>> {
    let slots: Vec<(usize, SlotSize)> = (0..p.clusters())
        .map(|i| (p.cluster_sizes[i], SlotSize::Exactly(if skip == Some(i) { 0 } else { p.t[i] })))
        .collect();
    combin::tuples(&slots, caps, rng)
}

/// `I(A X; B X | C X)` for `X` uniform, in units of `log q`.
pub fn linear_mi(a: &LinearView, b: &LinearView, c: &LinearView) -> Result<i64, AuditError> {
    let n = a.coeff.cols();
    if b.coeff.cols() != n || c.coeff.cols() != n {
        return Err(AuditError::DimensionMismatch(format!(
            "views with {n}, {} and {} columns",
            b.coeff.cols(),
            c.coeff.cols()
        )));
    }
    let ac = a.stack(c)?;
    let bc = b.stack(c)?;
    let abc = b.stack(&ac)?;
    Ok(ac.coeff.rank() as i64 + bc.coeff.rank() as i64 - abc.coeff.rank() as i64 - c.coeff.rank() as i64)
}

/// `I(view; W | cond)` where `W` is the first `gradient_dim` coordinates.
/// Equal to [`linear_mi`] with a target of all gradient selectors, computed
/// on much smaller matrices.
pub fn mi_against_gradients(view: &Matrix, cond: &Conditioning, gradient_dim: usize) -> i64 {
    let n = view.cols();
    let keep: Vec<usize> = (0..n).filter(|c| !cond.coords.contains(c)).collect();
    let keys: Vec<usize> = (gradient_dim..n).collect();
    let all_g: Vec<usize> = (0..cond.rows.rows()).collect();
    let ag = cond.rows.vstack(view).expect("same width");
    let all_ag: Vec<usize> = (0..ag.rows()).collect();
    let rank = |m: &Matrix, rows: &[usize], cols: &[usize]| m.submatrix(rows, cols).expect("in range").rank() as i64;
    rank(&ag, &all_ag, &keep) - rank(&cond.rows, &all_g, &keep) - rank(&ag, &all_ag, &keys)
        + rank(&cond.rows, &all_g, &keys)
}

/// Gradient coordinates and extra rows revealed by the colluders.
pub fn colluder_conditioning(s: &Scheme, colluders: &[BTreeSet<usize>], inputs: ColluderInputs) -> Conditioning {
    let p = &s.params;
    let n = s.input_dim();
    let km = p.gradient_dim();
    let mut coords = BTreeSet::new();
    let mut sums = Vec::new();
    for (u, set) in colluders.iter().enumerate() {
        for &v in set {
            let held = s.assignment().user(u, v);
            match inputs {
                ColluderInputs::HeldPieces => {
                    coords.extend(held.iter().flat_map(|&k| (0..p.m).map(move |j| p.column_index(k, j))));
                }
                ColluderInputs::PartialSum => {
                    for j in 0..p.m {
                        let mut row = Matrix::zeros(s.field, 1, n);
                        for &k in held {
                            row.set(0, p.column_index(k, j), Fe::ONE);
                        }
                        sums.push(row);
                    }
                }
            }
        }
    }
    let keys = colluder_key_rows(s, colluders);
    let keys = Matrix::zeros(s.field, keys.rows(), km).hstack(&keys).expect("same height");
    let rows = Matrix::vstack_all(s.field, n, sums.iter().chain(std::iter::once(&keys))).expect("same width");
    Conditioning { coords, rows }
}

/// Observation of the server: all relay messages.
pub fn server_view(s: &Scheme) -> LinearView {
    LinearView::new(s.server_coefficients())
}

/// Observation of relay `u`: the messages of every user of its cluster.
pub fn relay_view(s: &Scheme, u: usize) -> LinearView {
    relay_survivor_view(s, u, &(0..s.params.cluster_sizes[u]).collect())
}

/// Observation of relay `u` restricted to the given users.
pub fn relay_survivor_view(s: &Scheme, u: usize, users: &BTreeSet<usize>) -> LinearView {
    let blocks: Vec<Matrix> = users.iter().map(|&v| s.user_coefficients(u, v)).collect();
    LinearView::new(Matrix::vstack_all(s.field, s.input_dim(), &blocks).expect("same width"))
}

/// Target of every security statement: all gradient coordinates.
pub fn gradient_target(s: &Scheme) -> LinearView {
    LinearView::selectors(s.field, s.input_dim(), 0..s.params.gradient_dim())
}

/// Full conditioning of a scenario: colluder knowledge, plus the sum for
/// the server.
pub fn scenario_conditioning(s: &Scheme, sc: &AdversaryScenario, inputs: ColluderInputs) -> Conditioning {
    let mut cond = colluder_conditioning(s, &sc.colluders, inputs);
    if sc.party == Party::Server {
        cond.rows = s.aggregation_coefficients().vstack(&cond.rows).expect("same width");
    }
    cond
}

/// Leakage to the server beyond the sum and the colluders' own knowledge.
pub fn server_security_mi(s: &Scheme, colluders: &[BTreeSet<usize>], inputs: ColluderInputs) -> i64 {
    let sc = AdversaryScenario { party: Party::Server, colluders: colluders.to_vec() };
    let cond = scenario_conditioning(s, &sc, inputs);
    mi_against_gradients(&server_view(s).coeff, &cond, s.params.gradient_dim())
}

/// Leakage to relay `u`, for the view over all users and for the view over
/// the survivors a relay actually decodes from when nobody drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RelayMi {
    pub all_users: i64,
    pub survivors: i64,
}

pub fn relay_security_mi(s: &Scheme, u: usize, colluders: &[BTreeSet<usize>], inputs: ColluderInputs) -> RelayMi {
    let sc = AdversaryScenario { party: Party::Relay(u), colluders: colluders.to_vec() };
    let cond = scenario_conditioning(s, &sc, inputs);
    let km = s.params.gradient_dim();
    let all_users = mi_against_gradients(&relay_view(s, u).coeff, &cond, km);
    let everyone: BTreeSet<usize> = (0..s.params.cluster_sizes[u]).collect();
    let survivors = match runtime::invertible_subset(s, u, &everyone) {
        Some(used) => mi_against_gradients(&relay_survivor_view(s, u, &used).coeff, &cond, km),
        None => all_users,
    };
    RelayMi { all_users, survivors }
}

/// Conditional mutual information by exhaustive enumeration of `F_q^n`.
///
/// Each joint image is counted; the count must be uniform over a support of
/// size `q^k`, and then its entropy is exactly `k` (in `log q`).
pub fn exhaustive_mi(
    field: PrimeField,
    a: &LinearView,
    b: &LinearView,
    c: &LinearView,
    budget: u64,
) -> Result<i64, AuditError> {
    let n = a.coeff.cols();
    if b.coeff.cols() != n || c.coeff.cols() != n {
        return Err(AuditError::DimensionMismatch(format!(
            "views with {n}, {} and {} columns",
            b.coeff.cols(),
            c.coeff.cols()
        )));
    }
    let q = field.modulus();
    let points = u32::try_from(n)
        .ok()
        .and_then(|e| q.checked_pow(e))
        .filter(|&t| t <= budget)
        .ok_or(AuditError::BudgetExceeded { q, n, budget })?;
    let h = |parts: &[&Matrix]| image_entropy(field, parts, n, points);
    let (a, b, c) = (&a.coeff, &b.coeff, &c.coeff);
    Ok(h(&[a, c])? + h(&[b, c])? - h(&[a, b, c])? - h(&[c])?)
}

/// Entropy (in `log q`) of `M X` for `X` uniform on `F_q^n`, where `M` is the
/// concatenation of `parts`.
fn image_entropy(field: PrimeField, parts: &[&Matrix], n: usize, points: u64) -> Result<i64, AuditError> {
    let q = field.modulus();
    let rows: Vec<&[Fe]> = parts.iter().flat_map(|m| (0..m.rows()).map(move |r| m.row(r))).collect();
    let bits = 64 - (q - 1).leading_zeros() as usize;
    if rows.len() * bits > 128 {
        return Err(AuditError::KeyTooWide { rows: rows.len() });
    }
    // cols[i][r] = coefficient of x_i in row r
    let cols: Vec<Vec<u64>> = (0..n).map(|i| rows.iter().map(|row| row[i].value()).collect()).collect();
    let mut y = vec![0u64; rows.len()];
    let mut x = vec![0u64; n];
    let mut keys = Vec::with_capacity(points as usize);
    let pack = |y: &[u64]| y.iter().enumerate().fold(0u128, |acc, (r, &v)| acc | ((v as u128) << (r * bits)));
    for step in 0..points {
        keys.push(pack(&y));
        if step + 1 == points {
            break;
        }
        // odometer: every digit that changes moves by +1 mod q
        let mut i = 0;
        loop {
            for (yr, &cr) in y.iter_mut().zip(&cols[i]) {
                *yr = (*yr + cr) % q;
            }
            x[i] += 1;
            if x[i] < q {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
    keys.sort_unstable();
    let mut runs = keys.chunk_by(|p, q| p == q).map(|g| g.len() as u64);
    let first = runs.next().expect("at least one point");
    if runs.any(|len| len != first) {
        return Err(AuditError::NonUniform("unequal preimage sizes".into()));
    }
    let support = points / first;
    let mut k = 0;
    let mut size = 1u64;
    while size < support {
        size *= q;
        k += 1;
    }
    if size != support {
        return Err(AuditError::NonUniform(format!("support {support} is not a power of {q}")));
    }
    Ok(k)
}

/// Audit configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    pub collusion: SweepCaps,
    pub dropouts: SweepCaps,
    pub survivors: SweepCaps,
    pub inputs: ColluderInputs,
    /// Cross-check every rank-based MI with the counting oracle.
    pub oracle: bool,
    pub oracle_budget: u64,
    /// Symbols per piece in the decodability rounds.
    pub lprime: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            collusion: SweepCaps::default(),
            dropouts: SweepCaps::default(),
            survivors: SweepCaps::default(),
            inputs: ColluderInputs::default(),
            oracle: false,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            lprime: 1,
        }
    }
}

/// One line of an audit report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditLine {
    pub check: String,
    pub scenario: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl AuditLine {
    pub fn new(check: &str, scenario: impl ToString, o: CheckOutcome) -> Self {
        Self { check: check.into(), scenario: scenario.to_string(), measured: o.measured, expected: o.expected, pass: o.pass }
    }
}

impl fmt::Display for AuditLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}] measured={} expected={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check,
            self.scenario,
            self.measured,
            self.expected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct AuditReport {
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn first_failure(&self) -> Option<&AuditLine> {
        self.lines.iter().find(|l| !l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditLine> {
        self.lines.iter().filter(|l| !l.pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&l.to_string());
            out.push('\n');
        }
        let failed = self.lines.iter().filter(|l| !l.pass).count();
        out.push_str(&format!("summary checks={} failed={}\n", self.lines.len(), failed));
        out
    }
}

fn mi_line(check: &str, sc: &AdversaryScenario, mi: i64) -> AuditLine {
    AuditLine::new(check, sc, outcome(mi, 0))
}

fn oracle_line(s: &Scheme, sc: &AdversaryScenario, view: &LinearView, cond: &Conditioning, rank_mi: i64, budget: u64) -> AuditLine {
    let target = gradient_target(s);
    let measured = match exhaustive_mi(s.field, view, &target, &cond.to_view(), budget) {
        Ok(v) => v.to_string(),
        Err(e) => format!("error({e})"),
    };
    AuditLine::new("oracle_mi", sc, CheckOutcome { pass: measured == rank_mi.to_string(), measured, expected: rank_mi.to_string() })
}

fn adversary_lines(s: &Scheme, sc: &AdversaryScenario, opts: &AuditOptions) -> Vec<AuditLine> {
    let mut lines = Vec::new();
    let cond = scenario_conditioning(s, sc, opts.inputs);
    let km = s.params.gradient_dim();
    match sc.party {
        Party::Server => {
            lines.push(AuditLine::new("constraint3", sc, check_constraint3(s, &sc.colluders)));
            let view = server_view(s);
            let mi = mi_against_gradients(&view.coeff, &cond, km);
            lines.push(mi_line("server_mi", sc, mi));
            if opts.oracle {
                lines.push(oracle_line(s, sc, &view, &cond, mi, opts.oracle_budget));
            }
        }
        Party::Relay(u) => {
            lines.push(AuditLine::new("constraint2", sc, check_constraint2(s, u, &sc.colluders)));
            let view = relay_view(s, u);
            let mi = mi_against_gradients(&view.coeff, &cond, km);
            lines.push(mi_line("relay_mi", sc, mi));
            let everyone: BTreeSet<usize> = (0..s.params.cluster_sizes[u]).collect();
            let used = runtime::invertible_subset(s, u, &everyone);
            let survivor_mi = used
                .as_ref()
                .map(|used| mi_against_gradients(&relay_survivor_view(s, u, used).coeff, &cond, km));
            lines.push(AuditLine::new(
                "relay_mi_survivors",
                sc,
                match survivor_mi {
                    Some(v) => outcome(v, 0),
                    None => CheckOutcome { pass: false, measured: "no invertible subset".into(), expected: "0".into() },
                },
            ));
            if opts.oracle {
                lines.push(oracle_line(s, sc, &view, &cond, mi, opts.oracle_budget));
            }
        }
    }
    lines
}

/// Structural checks, rank constraints, leakage for every collusion tuple
/// and decodability for every dropout pattern.
pub fn audit_full(s: &Scheme, opts: &AuditOptions) -> AuditReport {
    let p = &s.params;
    let a = s.assignment();
    let mut lines = Vec::new();

    let defects = builder::relay_defects(a, p, &s.relay);
    lines.push(AuditLine::new(
        "relay_structure",
        "-",
        CheckOutcome { pass: defects.is_empty(), measured: defects.first().cloned().unwrap_or("ok".into()), expected: "ok".into() },
    ));
    let mut survivor_rng = FieldRng::with_stream(s.seed, DROPOUT_STREAM + 1);
    for cc in &s.clusters {
        let defects = builder::cluster_defects(a, p, &s.relay, cc);
        let scenario = format!("cluster {}", cc.cluster + 1);
        lines.push(AuditLine::new(
            "cluster_structure",
            &scenario,
            CheckOutcome { pass: defects.is_empty(), measured: defects.first().cloned().unwrap_or("ok".into()), expected: "ok".into() },
        ));
        let bad = builder::singular_survivor_sets(p, cc, opts.survivors, &mut survivor_rng);
        lines.push(AuditLine::new("survivor_stacks", &scenario, outcome(format!("singular={}", bad.len()), "singular=0")));
    }
    lines.push(AuditLine::new("constraint1", "-", check_constraint1(s)));

    let mut rng = FieldRng::with_stream(s.seed, COLLUSION_STREAM);
    let mut scenarios = Vec::new();
    for u in 0..p.clusters() {
        for colluders in collusion_tuples(p, None, opts.collusion, &mut rng) {
            scenarios.push(AdversaryScenario { party: Party::Relay(u), colluders });
        }
    }
    for colluders in collusion_tuples(p, None, opts.collusion, &mut rng) {
        scenarios.push(AdversaryScenario { party: Party::Server, colluders });
    }
    let per: Vec<Vec<AuditLine>> = scenarios.par_iter().map(|sc| adversary_lines(s, sc, opts)).collect();
    lines.extend(per.into_iter().flatten());

    let (w, n) = runtime::sample_inputs(s, opts.lprime.max(1), s.seed);
    let want = runtime::direct_sum(s, &w);
    let mut drop_rng = FieldRng::with_stream(s.seed, DROPOUT_STREAM);
    let patterns = runtime::admissible_dropouts(p, opts.dropouts, &mut drop_rng);
    let decoded = runtime::decode_sweep(s, &w, &n, &patterns);
    for (pattern, result) in patterns.iter().zip(decoded) {
        let scenario = format!("dropouts={}", combin::render_sets(pattern));
        let o = match result {
            Ok(d) if d == want => outcome("sum", "sum"),
            Ok(_) => outcome("mismatch", "sum"),
            Err(e) => outcome(format!("error({e})"), "sum"),
        };
        lines.push(AuditLine::new("decode", scenario, o));
    }
    AuditReport { lines }
}
