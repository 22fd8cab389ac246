//! Construction of the two-layer linear code.
//!
//! The relay layer fixes `S1`, the demand matrix `F = [A; V]` and the key
//! matrix `B1`; each cluster then gets a local code `(S2, F2, B2)` whose
//! first `m/m1` rows reproduce what its relay must forward. Unknown
//! ("virtual") rows are solved column by column from the encodability
//! zeros, everything else is sampled uniformly, and the result is checked
//! against the rank constraints before it is returned.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::audit;
use crate::combin::{self, SweepCaps};
use crate::ff::{FieldError, FieldRng, Fe, PrimeField};
use crate::matrix::{Matrix, MatrixError};
use crate::topology::{self, Assignment, DerivedParams, RateReport, Scenario, TopologyError};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("construction failed in {stage} after {attempts} attempts: {reason}")]
    ConstructionFailed { stage: String, attempts: usize, reason: String },
    #[error("no encodable solution for column {column} of the {layer} layer")]
    InfeasibleColumn { layer: String, column: usize },
    #[error("constraint {constraint} violated for colluders {scenario}")]
    SecurityConstraintViolated { constraint: u8, scenario: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Retry budget for every randomized step.
    pub max_attempts: usize,
    /// Survivor sets checked for invertibility.
    pub survivors: SweepCaps,
    /// Collusion tuples checked against constraints 2 and 3.
    pub collusion: SweepCaps,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { max_attempts: 32, survivors: SweepCaps::default(), collusion: SweepCaps::default() }
    }
}

/// Relay-to-server code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayCode {
    pub s1: Matrix,
    /// Aggregation rows of `F`.
    pub a: Matrix,
    /// Virtual demand rows of `F`.
    pub v: Matrix,
    pub f1: Matrix,
    /// First `m` rows of `S1^-1`.
    pub decoder: Matrix,
    /// Null-space basis of `decoder`, as columns.
    pub q: Matrix,
    pub b1: Matrix,
}

impl RelayCode {
    /// `F = [A; V]`.
    pub fn f(&self) -> Matrix {
        self.a.vstack(&self.v).expect("A and V share a width")
    }

    /// Assemble from `S1`, `F` and `B1`, deriving `F1`, the decoder and `Q`.
    pub fn from_parts(p: &DerivedParams, s1: Matrix, f: Matrix, b1: Matrix) -> Result<Self, BuildError> {
        let d = p.server_rows();
        if s1.rows() != d || s1.cols() != d || f.rows() != d || f.cols() != p.gradient_dim() || b1.rows() != d {
            return Err(MatrixError::DimensionMismatch(format!(
                "relay code S1 {}x{}, F {}x{}, B1 {}x{} for {d} rows",
                s1.rows(),
                s1.cols(),
                f.rows(),
                f.cols(),
                b1.rows(),
                b1.cols()
            ))
            .into());
        }
        let inv = s1.inverse()?;
        let decoder = inv.row_range(0, p.m)?;
        let q = decoder.null_space_basis();
        let f1 = s1.mul(&f)?;
        Ok(Self { a: f.row_range(0, p.m)?, v: f.row_range(p.m, d)?, s1, f1, decoder, q, b1 })
    }

    /// Rows of `[F1 | B1]` forwarded by relay `u`.
    pub fn relay_rows(&self, p: &DerivedParams, u: usize) -> (Matrix, Matrix) {
        let r = p.relay_rows();
        (
            self.f1.row_range(u * r, (u + 1) * r).expect("relay in range"),
            self.b1.row_range(u * r, (u + 1) * r).expect("relay in range"),
        )
    }
}

/// Local code of one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCode {
    pub cluster: usize,
    /// `V_u * b` rows by `d` columns; user `v` owns rows `v*b .. (v+1)*b`.
    pub s2: Matrix,
    pub f2: Matrix,
    pub b2: Matrix,
}

impl ClusterCode {
    pub fn user_block(&self, p: &DerivedParams, v: usize) -> Matrix {
        let b = p.user_rows(self.cluster);
        self.s2.row_range(v * b, (v + 1) * b).expect("user in range")
    }

    /// Stacked `S2` blocks of the given users, in ascending order.
    pub fn stacked_blocks(&self, p: &DerivedParams, users: &BTreeSet<usize>) -> Matrix {
        let blocks: Vec<Matrix> = users.iter().map(|&v| self.user_block(p, v)).collect();
        Matrix::vstack_all(self.s2.field(), self.s2.cols(), &blocks).expect("blocks share a width")
    }

    /// `[F2 | B2]`.
    pub fn task(&self) -> Matrix {
        self.f2.hstack(&self.b2).expect("F2 and B2 share a height")
    }
}

/// A fully assembled scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    pub field: PrimeField,
    pub scenario: Scenario,
    pub params: DerivedParams,
    pub rates: RateReport,
    pub relay: RelayCode,
    pub clusters: Vec<ClusterCode>,
    pub seed: u64,
}

impl Scheme {
    pub fn assignment(&self) -> &Assignment {
        &self.scenario.assignment
    }

    pub fn key_count(&self) -> usize {
        self.rates.key_count
    }

    /// Length of `W' = [W; N]`.
    pub fn input_dim(&self) -> usize {
        self.params.gradient_dim() + self.key_count()
    }

    pub fn user_block(&self, u: usize, v: usize) -> Matrix {
        self.clusters[u].user_block(&self.params, v)
    }

    /// Map from `W'` to the message of user `(u, v)`.
    pub fn user_coefficients(&self, u: usize, v: usize) -> Matrix {
        self.user_block(u, v).mul(&self.clusters[u].task()).expect("conformant")
    }

    /// Map from `W'` to the relay messages, stacked: `[F1 | B1]`.
    pub fn server_coefficients(&self) -> Matrix {
        self.relay.f1.hstack(&self.relay.b1).expect("conformant")
    }

    /// Map from `W'` to the demanded sum: `[A | 0]`.
    pub fn aggregation_coefficients(&self) -> Matrix {
        self.relay
            .a
            .hstack(&Matrix::zeros(self.field, self.params.m, self.key_count()))
            .expect("conformant")
    }
}

/// `m x K*m` matrix with a one at `(j, column_index(k, j))` for every `k`.
pub fn build_aggregation_matrix(field: PrimeField, p: &DerivedParams) -> Matrix {
    let mut a = Matrix::zeros(field, p.m, p.gradient_dim());
    for j in 0..p.m {
        for k in 0..p.datasets {
            a.set(j, p.column_index(k, j), Fe::ONE);
        }
    }
    a
}

/// Solve `V` from `S1` so that every relay's rows of `S1 * [A; V]` vanish on
/// the datasets its cluster lacks. Free variables are set to zero.
pub fn solve_relay_virtual(a: &Assignment, p: &DerivedParams, s1: &Matrix) -> Result<Matrix, BuildError> {
    let field = s1.field();
    let d = p.server_rows();
    let r = p.relay_rows();
    let cluster_sets: Vec<BTreeSet<usize>> = (0..p.clusters()).map(|u| a.cluster_datasets(u)).collect();
    let mut v = Matrix::zeros(field, d - p.m, p.gradient_dim());
    for c in 0..p.gradient_dim() {
        let (k, j) = p.column_source(c);
        let rows: Vec<usize> = (0..p.clusters())
            .filter(|&u| !cluster_sets[u].contains(&k))
            .flat_map(|u| u * r..(u + 1) * r)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let virt: Vec<usize> = (p.m..d).collect();
        let coef = s1.submatrix(&rows, &virt)?;
        let rhs: Vec<Fe> = rows.iter().map(|&i| field.neg(s1.get(i, j))).collect();
        let x = coef
            .solve_particular(&rhs)
            .map_err(|_| BuildError::InfeasibleColumn { layer: "relay".into(), column: c })?;
        for (i, val) in x.into_iter().enumerate() {
            v.set(i, c, val);
        }
    }
    Ok(v)
}

/// Relay layer for a given `S1` and key mixer `G`: `B1 = Q * G`.
pub fn relay_layer_from(a: &Assignment, p: &DerivedParams, s1: Matrix, g: &Matrix) -> Result<RelayCode, BuildError> {
    let field = s1.field();
    let v = solve_relay_virtual(a, p, &s1)?;
    let f = build_aggregation_matrix(field, p).vstack(&v)?;
    let mut rc = RelayCode::from_parts(p, s1, f, Matrix::zeros(field, p.server_rows(), g.cols()))?;
    rc.b1 = rc.q.mul(g)?;
    Ok(rc)
}

/// Every structural property the relay code must have, as a list of
/// failures (empty when sound).
pub fn relay_defects(a: &Assignment, p: &DerivedParams, rc: &RelayCode) -> Vec<String> {
    let mut out = Vec::new();
    let r = p.relay_rows();
    for u in 0..p.clusters() {
        let held = a.cluster_datasets(u);
        for c in 0..p.gradient_dim() {
            let (k, _) = p.column_source(c);
            if held.contains(&k) {
                continue;
            }
            if (u * r..(u + 1) * r).any(|i| !rc.f1.get(i, c).is_zero()) {
                out.push(format!("relay {} encodes column {}", u + 1, c + 1));
            }
        }
    }
    match rc.decoder.mul(&rc.f1) {
        Ok(x) if x == rc.a => {}
        _ => out.push("decoder does not recover the aggregate".into()),
    }
    match rc.decoder.mul(&rc.b1) {
        Ok(x) if x.is_zero() => {}
        _ => out.push("decoder does not cancel the keys".into()),
    }
    let want = p.server_rows() - p.m;
    let got = rc.b1.rank();
    if got != want {
        out.push(format!("rank(B1) = {got}, expected {want}"));
    }
    out
}

pub fn build_relay_layer(
    a: &Assignment,
    p: &DerivedParams,
    key_count: usize,
    field: PrimeField,
    rng: &mut FieldRng,
    opts: &BuildOptions,
) -> Result<RelayCode, BuildError> {
    let d = p.server_rows();
    let mut last = String::new();
    let mut infeasible = None;
    for _ in 0..opts.max_attempts {
        let Ok(s1) = Matrix::random_full_rank(field, d, d, rng, opts.max_attempts) else {
            last = "no invertible S1".into();
            continue;
        };
        let Ok(g) = Matrix::random_full_rank(field, d - p.m, key_count, rng, opts.max_attempts) else {
            last = "no full-rank key mixer".into();
            continue;
        };
        match relay_layer_from(a, p, s1, &g) {
            Ok(rc) => {
                let defects = relay_defects(a, p, &rc);
                if defects.is_empty() {
                    return Ok(rc);
                }
                last = defects.join("; ");
            }
            Err(e @ BuildError::InfeasibleColumn { .. }) => {
                last = e.to_string();
                infeasible = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(infeasible.unwrap_or(BuildError::ConstructionFailed {
        stage: "relay layer".into(),
        attempts: opts.max_attempts,
        reason: last,
    }))
}

/// Cluster code for a given `S2` and the rows of `B2` below the relay rows.
pub fn cluster_layer_from(
    u: usize,
    rc: &RelayCode,
    a: &Assignment,
    p: &DerivedParams,
    s2: Matrix,
    extra_keys: &Matrix,
) -> Result<ClusterCode, BuildError> {
    let field = s2.field();
    let b = p.user_rows(u);
    let d = p.cluster_rows(u);
    let r = p.relay_rows();
    let n_users = p.cluster_sizes[u];
    if s2.rows() != n_users * b || s2.cols() != d || extra_keys.rows() != d - r {
        return Err(MatrixError::DimensionMismatch(format!(
            "cluster {} S2 {}x{}, extra keys {} rows",
            u + 1,
            s2.rows(),
            s2.cols(),
            extra_keys.rows()
        ))
        .into());
    }
    let (task_f, task_b) = rc.relay_rows(p, u);
    let mut f2 = Matrix::zeros(field, d, p.gradient_dim());
    f2.paste(0, 0, &task_f)?;
    let virt: Vec<usize> = (r..d).collect();
    let fixed: Vec<usize> = (0..r).collect();
    for c in 0..p.gradient_dim() {
        let (k, _) = p.column_source(c);
        let rows: Vec<usize> = (0..n_users)
            .filter(|&v| !a.holds(u, v, k))
            .flat_map(|v| v * b..(v + 1) * b)
            .collect();
        if rows.is_empty() || virt.is_empty() {
            continue;
        }
        let coef = s2.submatrix(&rows, &virt)?;
        let known = s2.submatrix(&rows, &fixed)?;
        let rhs: Vec<Fe> = (0..rows.len())
            .map(|i| {
                let s = (0..r).fold(Fe::ZERO, |acc, t| field.add(acc, field.mul(known.get(i, t), task_f.get(t, c))));
                field.neg(s)
            })
            .collect();
        let x = coef
            .solve_particular(&rhs)
            .map_err(|_| BuildError::InfeasibleColumn { layer: format!("cluster {}", u + 1), column: c })?;
        for (i, val) in x.into_iter().enumerate() {
            f2.set(r + i, c, val);
        }
    }
    let b2 = task_b.vstack(extra_keys)?;
    Ok(ClusterCode { cluster: u, s2, f2, b2 })
}

/// Encodability zeros and relay-row agreement for one cluster.
pub fn cluster_defects(a: &Assignment, p: &DerivedParams, rc: &RelayCode, cc: &ClusterCode) -> Vec<String> {
    let u = cc.cluster;
    let mut out = Vec::new();
    let (task_f, task_b) = rc.relay_rows(p, u);
    let r = p.relay_rows();
    if cc.f2.row_range(0, r).ok() != Some(task_f) || cc.b2.row_range(0, r).ok() != Some(task_b) {
        out.push(format!("cluster {} task rows differ from relay rows", u + 1));
    }
    for v in 0..p.cluster_sizes[u] {
        let Ok(coef) = cc.user_block(p, v).mul(&cc.f2) else {
            out.push(format!("cluster {} has malformed blocks", u + 1));
            return out;
        };
        for c in 0..p.gradient_dim() {
            let (k, _) = p.column_source(c);
            if !a.holds(u, v, k) && (0..coef.rows()).any(|i| !coef.get(i, c).is_zero()) {
                out.push(format!("user ({},{}) encodes column {}", u + 1, v + 1, c + 1));
            }
        }
    }
    out
}

/// Survivor sets (of size `V_u - s2[u]`) whose stacked blocks are singular.
pub fn singular_survivor_sets(
    p: &DerivedParams,
    cc: &ClusterCode,
    caps: SweepCaps,
    rng: &mut FieldRng,
) -> Vec<BTreeSet<usize>> {
    let u = cc.cluster;
    let live = p.cluster_sizes[u] - p.s2[u];
    combin::subsets_of_size(p.cluster_sizes[u], live, caps, rng)
        .into_iter()
        .filter(|set| cc.stacked_blocks(p, set).rank() < p.cluster_rows(u))
        .collect()
}

pub fn build_cluster_layer(
    u: usize,
    rc: &RelayCode,
    a: &Assignment,
    p: &DerivedParams,
    field: PrimeField,
    rng: &mut FieldRng,
    opts: &BuildOptions,
) -> Result<ClusterCode, BuildError> {
    let b = p.user_rows(u);
    let d = p.cluster_rows(u);
    let key_count = rc.b1.cols();
    let mut last = String::new();
    let mut infeasible = None;
    for _ in 0..opts.max_attempts {
        let s2 = Matrix::random(field, p.cluster_sizes[u] * b, d, rng);
        let extra = Matrix::random(field, d - p.relay_rows(), key_count, rng);
        let cc = match cluster_layer_from(u, rc, a, p, s2, &extra) {
            Ok(cc) => cc,
            Err(e @ BuildError::InfeasibleColumn { .. }) => {
                last = e.to_string();
                infeasible = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let defects = cluster_defects(a, p, rc, &cc);
        if !defects.is_empty() {
            last = defects.join("; ");
            continue;
        }
        let bad = singular_survivor_sets(p, &cc, opts.survivors, rng);
        if let Some(set) = bad.first() {
            last = format!("survivors {} not invertible", combin::render_sets(std::slice::from_ref(set)));
            continue;
        }
        return Ok(cc);
    }
    Err(infeasible.unwrap_or(BuildError::ConstructionFailed {
        stage: format!("cluster {}", u + 1),
        attempts: opts.max_attempts,
        reason: last,
    }))
}

/// First constraint violation across all collusion tuples at the declared
/// bounds, if any.
pub fn first_violation(s: &Scheme, caps: SweepCaps) -> Option<(u8, String)> {
    let c1 = audit::check_constraint1(s);
    if !c1.pass {
        return Some((1, "-".into()));
    }
    let mut rng = FieldRng::with_stream(s.seed, audit::COLLUSION_STREAM);
    for u in 0..s.params.clusters() {
        for tuple in audit::collusion_tuples(&s.params, Some(u), caps, &mut rng) {
            if !audit::check_constraint2(s, u, &tuple).pass {
                return Some((2, format!("relay {} with {}", u + 1, combin::render_sets(&tuple))));
            }
        }
    }
    for tuple in audit::collusion_tuples(&s.params, None, caps, &mut rng) {
        if !audit::check_constraint3(s, &tuple).pass {
            return Some((3, format!("server with {}", combin::render_sets(&tuple))));
        }
    }
    None
}

/// Derive, check, construct and verify a scheme.
pub fn build_scheme(scenario: &Scenario, q: u64, seed: u64, opts: &BuildOptions) -> Result<Scheme, BuildError> {
    let field = PrimeField::new(q)?;
    let a = &scenario.assignment;
    let params = topology::derive_params(a, &scenario.stragglers, &scenario.colluders)?;
    topology::check_feasibility(&params)?;
    let rates = topology::rates(&params)?;
    let mut rng = FieldRng::new(seed);
    let mut violation = None;
    for _ in 0..opts.max_attempts {
        let relay = build_relay_layer(a, &params, rates.key_count, field, &mut rng, opts)?;
        let clusters = (0..params.clusters())
            .map(|u| build_cluster_layer(u, &relay, a, &params, field, &mut rng, opts))
            .collect::<Result<Vec<_>, _>>()?;
        let scheme = Scheme {
            field,
            scenario: scenario.clone(),
            params: params.clone(),
            rates: rates.clone(),
            relay,
            clusters,
            seed,
        };
        match first_violation(&scheme, opts.collusion) {
            None => return Ok(scheme),
            Some(v) => violation = Some(v),
        }
    }
    let (constraint, scenario) = violation.expect("at least one attempt");
    Err(BuildError::SecurityConstraintViolated { constraint, scenario })
}

/// `S2_block(v) * B2`: the map from the source key to user `(u, v)`'s key.
pub fn user_key_coefficients(s: &Scheme, u: usize, v: usize) -> Matrix {
    s.user_block(u, v).mul(&s.clusters[u].b2).expect("conformant")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::tests::table_one;

    fn params(a: &Assignment, s2: &[usize], t: &[usize]) -> DerivedParams {
        topology::derive_params(a, s2, t).unwrap()
    }

    #[test]
    fn aggregation_matrix_shapes() {
        let f = PrimeField::new(101).unwrap();
        let p = params(&table_one(), &[0, 1], &[1, 1]);
        let a = build_aggregation_matrix(f, &p);
        let mut want = vec![vec![0i64; 12]; 2];
        for k in 0..6 {
            want[0][k] = 1;
            want[1][6 + k] = 1;
        }
        assert_eq!(a, Matrix::from_i64(f, &want).unwrap());

        let single = Assignment::from_one_based(1, &[vec![vec![1]]]).unwrap();
        let p = params(&single, &[0], &[0]);
        assert_eq!(build_aggregation_matrix(f, &p), Matrix::from_i64(f, &[vec![1]]).unwrap());

        let three = Assignment::from_one_based(3, &[vec![vec![1, 2, 3]], vec![vec![1, 2, 3]]]).unwrap();
        let p = params(&three, &[0, 0], &[0, 0]);
        assert_eq!(p.m, 2);
        let one_piece = Assignment::from_one_based(3, &[vec![vec![1, 2]], vec![vec![3]], vec![vec![1, 2]]]).unwrap();
        let p = params(&one_piece, &[0, 0, 0], &[0, 0, 0]);
        assert_eq!(p.m, 1);
        assert_eq!(build_aggregation_matrix(f, &p), Matrix::from_i64(f, &[vec![1, 1, 1]]).unwrap());
    }

    #[test]
    fn relay_virtual_column_from_fixture_s1() {
        let f = PrimeField::new(101).unwrap();
        let a = table_one();
        let p = params(&a, &[0, 1], &[1, 1]);
        let s1 = Matrix::from_i64(f, &[vec![1, 3, 2, 1], vec![5, 1, 1, 2], vec![2, 4, 3, 1], vec![1, 1, 3, 2]]).unwrap();
        let v = solve_relay_virtual(&a, &p, &s1).unwrap();
        // dataset 1 is missing from cluster 2, so relay 2's rows pin column 1
        assert_eq!(f.centered(v.get(0, 0)), -1);
        assert_eq!(f.centered(v.get(1, 0)), 1);
        // column 7 is piece 2 of dataset 1
        assert_eq!(v.get(0, 6), f.from_rational(-7, 3).unwrap());
        assert_eq!(v.get(1, 6), f.from_i64(3));
        // datasets 2..4 are held by both clusters: canonical zero
        for c in [1, 2, 3, 7, 8, 9] {
            assert!(v.get(0, c).is_zero() && v.get(1, c).is_zero());
        }
    }

    #[test]
    fn square_system_when_single_replication() {
        // r1 = 1, U = 2: each missing column is pinned by a square system
        let f = PrimeField::new(DEFAULT_Q).unwrap();
        let a = Assignment::from_one_based(2, &[vec![vec![1]], vec![vec![2]]]).unwrap();
        let p = params(&a, &[0, 0], &[0, 0]);
        assert_eq!((p.m, p.server_rows()), (1, 2));
        let mut rng = FieldRng::new(5);
        let s1 = Matrix::random_full_rank(f, 2, 2, &mut rng, 32).unwrap();
        let v = solve_relay_virtual(&a, &p, &s1).unwrap();
        // relay 1 lacks dataset 2: s1[0][0]*1 + s1[0][1]*v = 0
        let lhs = f.add(s1.get(0, 0), f.mul(s1.get(0, 1), v.get(0, 1)));
        assert!(lhs.is_zero());
    }

    const DEFAULT_Q: u64 = crate::ff::DEFAULT_MODULUS;

    fn example_scenario() -> Scenario {
        Scenario { assignment: table_one(), stragglers: vec![0, 1], colluders: vec![1, 1] }
    }

    #[test]
    fn example_scheme_builds_with_fixture_rates() {
        for seed in [0, 1, 99] {
            let s = build_scheme(&example_scenario(), DEFAULT_Q, seed, &BuildOptions::default()).unwrap();
            assert_eq!(s.rates.r1, topology::Rate::from_integer(1));
            assert_eq!(s.rates.r2, vec![topology::Rate::from_integer(1), topology::Rate::new(1, 2)]);
            assert_eq!(s.rates.rz, topology::Rate::new(5, 2));
            assert!(relay_defects(s.assignment(), &s.params, &s.relay).is_empty());
            for cc in &s.clusters {
                assert!(cluster_defects(s.assignment(), &s.params, &s.relay, cc).is_empty());
            }
            let k = user_key_coefficients(&s, 0, 0);
            assert_eq!((k.rows(), k.cols()), (2, 5));
            let k = user_key_coefficients(&s, 1, 3);
            assert_eq!((k.rows(), k.cols()), (1, 5));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = build_scheme(&example_scenario(), DEFAULT_Q, 7, &BuildOptions::default()).unwrap();
        let b = build_scheme(&example_scenario(), DEFAULT_Q, 7, &BuildOptions::default()).unwrap();
        let c = build_scheme(&example_scenario(), DEFAULT_Q, 8, &BuildOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.relay.s1, c.relay.s1);
    }

    #[test]
    fn infeasible_collusion_rejected_before_construction() {
        let mut sc = example_scenario();
        sc.colluders = vec![1, 2];
        let err = build_scheme(&sc, DEFAULT_Q, 0, &BuildOptions::default()).unwrap_err();
        assert!(matches!(err, BuildError::Topology(TopologyError::TooManyColluders { cluster: 1, .. })));
    }

    #[test]
    fn missing_dataset_forces_zero_virtual_entries() {
        let s = build_scheme(&example_scenario(), DEFAULT_Q, 3, &BuildOptions::default()).unwrap();
        // dataset 5 (index 4) is absent from cluster 1
        let cc = &s.clusters[0];
        for c in [4, 10] {
            assert!((0..cc.f2.rows()).all(|i| cc.f2.get(i, c).is_zero()));
        }
    }

    #[test]
    fn degenerate_single_user_cluster() {
        let a = Assignment::from_one_based(2, &[vec![vec![1]], vec![vec![2]], vec![vec![1, 2]]]).unwrap();
        let sc = Scenario { assignment: a, stragglers: vec![0, 0, 0], colluders: vec![0, 0, 0] };
        let s = build_scheme(&sc, DEFAULT_Q, 1, &BuildOptions::default()).unwrap();
        for cc in &s.clusters {
            assert_eq!(s.params.cluster_virtual_rows(cc.cluster), 0);
            let (tf, _) = s.relay.relay_rows(&s.params, cc.cluster);
            assert_eq!(cc.f2, tf);
            assert_eq!((cc.s2.rows(), cc.s2.cols()), (1, 1));
        }
    }

    #[test]
    fn zero_block_gives_zero_keys() {
        let mut s = build_scheme(&example_scenario(), DEFAULT_Q, 4, &BuildOptions::default()).unwrap();
        let cols = s.clusters[1].s2.cols();
        s.clusters[1].s2.paste(0, 0, &Matrix::zeros(s.field, 1, cols)).unwrap();
        assert!(user_key_coefficients(&s, 1, 0).is_zero());
    }
}
