//! Worked two-cluster example: six datasets, clusters of two and four users,
//! one straggler allowed in the second cluster and one colluder per
//! cluster. The reference code matrices are embedded as rational tables
//! and checked over a chosen prime field.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::audit::{self, ColluderInputs};
use crate::builder::{self, ClusterCode, RelayCode, Scheme};
use crate::combin::SweepCaps;
use crate::ff::{FieldError, FieldRng, PrimeField};
use crate::matrix::Matrix;
use crate::runtime;
use crate::topology::{self, Assignment, Rate, Scenario};

/// Default field for fixture checks.
pub const FIXTURE_MODULUS: u64 = 101;
/// Seed used to sample the second cluster's encoding matrix, which is not
/// part of the fixture data.
pub const FIXTURE_SEED: u64 = 2;

const S1: &[&str] = &["1 3 2 1", "5 1 1 2", "2 4 3 1", "1 1 3 2"];

const F: &[&str] = &[
    "1 1 1 1 1 1 0 0 0 0 0 0",
    "0 0 0 0 0 0 1 1 1 1 1 1",
    "-1 1 3 2 1 -1 -7/3 2 3 2 -5/3 -7/3",
    "1 3 1 1 -3 1 3 3 2 1 1/3 3",
];

const F1: &[&str] = &[
    "0 6 8 6 0 0 4/3 10 11 8 0 4/3",
    "6 12 10 9 0 6 14/3 9 8 5 0 14/3",
    "0 8 12 9 2 0 0 13 15 11 -2/3 0",
    "0 10 12 9 -2 0 0 13 14 9 -10/3 0",
];

const B1: &[&str] = &["1 1 2 3 3", "-1 2 1 3 0", "2 1 3 4 5", "1 2 3 5 4"];

const S2_1: &[&str] = &["2 3 1 1", "1 2 2 1", "1 1 2 3", "3 1 2 2"];

/// `[F2 | B2]` of the first cluster.
const TASK_1: &[&str] = &[
    "0 6 8 6 0 0 4/3 10 11 8 0 4/3 1 1 2 3 3",
    "6 12 10 9 0 6 14/3 9 8 5 0 14/3 -1 2 1 3 0",
    "2 18 -33 -51/2 0 4 5 19 -85/2 -61/2 0 1 1 3 4 3 1",
    "1 -66 16 12 0 3 2 -66 22 16 0 3 4 1 3 2 1",
];

const B2_2: &[&str] = &["2 1 3 4 5", "1 2 3 5 4", "3 5 1 3 2"];

/// Dataset holdings, one-based, per cluster and user.
pub fn example_assignment() -> Assignment {
    Assignment::from_one_based(
        6,
        &[
            vec![vec![1, 3, 4, 6], vec![1, 2, 6]],
            vec![vec![2, 3, 5], vec![2, 3, 4, 5], vec![2, 3, 4], vec![3, 4, 5]],
        ],
    )
    .expect("valid example")
}

pub fn example_scenario() -> Scenario {
    Scenario { assignment: example_assignment(), stragglers: vec![0, 1], colluders: vec![1, 1] }
}

fn parse_entry(field: PrimeField, tok: &str) -> Result<crate::ff::Fe, FieldError> {
    let (num, den) = match tok.split_once('/') {
        Some((n, d)) => (n.parse::<i64>().expect("fixture literal"), d.parse::<i64>().expect("fixture literal")),
        None => (tok.parse::<i64>().expect("fixture literal"), 1),
    };
    field.from_rational(num, den)
}

/// Embed a table of rationals into `F_q`.
pub fn embed(field: PrimeField, rows: &[&str]) -> Result<Matrix, FieldError> {
    let parsed: Vec<Vec<crate::ff::Fe>> = rows
        .iter()
        .map(|r| r.split_whitespace().map(|t| parse_entry(field, t)).collect())
        .collect::<Result<_, _>>()?;
    let cols = parsed.first().map_or(0, Vec::len);
    Ok(Matrix::from_rows(field, parsed.len(), cols, parsed.into_iter().flatten().collect()).expect("rectangular"))
}

/// The fixture matrices over a given field.
#[derive(Debug, Clone)]
pub struct FixtureMatrices {
    pub s1: Matrix,
    pub f: Matrix,
    pub f1: Matrix,
    pub b1: Matrix,
    pub s2_1: Matrix,
    pub task_1: Matrix,
    pub b2_2: Matrix,
}

impl FixtureMatrices {
    pub fn embed(field: PrimeField) -> Result<Self, FieldError> {
        Ok(Self {
            s1: embed(field, S1)?,
            f: embed(field, F)?,
            f1: embed(field, F1)?,
            b1: embed(field, B1)?,
            s2_1: embed(field, S2_1)?,
            task_1: embed(field, TASK_1)?,
            b2_2: embed(field, B2_2)?,
        })
    }
}

/// A complete scheme on the example built from the fixture matrices; the
/// second cluster's `S2` is sampled from `seed` until the cluster code is
/// valid and the rank constraints hold.
pub fn example_scheme(q: u64, seed: u64) -> Result<Scheme, builder::BuildError> {
    let field = PrimeField::new(q)?;
    let pubd = FixtureMatrices::embed(field)?;
    let scenario = example_scenario();
    let a = &scenario.assignment;
    let params = topology::derive_params(a, &scenario.stragglers, &scenario.colluders)?;
    let rates = topology::rates(&params)?;
    let relay = RelayCode::from_parts(&params, pubd.s1.clone(), pubd.f.clone(), pubd.b1.clone())?;
    let cluster1 = ClusterCode {
        cluster: 0,
        s2: pubd.s2_1.clone(),
        f2: pubd.task_1.col_range(0, 12)?,
        b2: pubd.task_1.col_range(12, 17)?,
    };
    let mut rng = FieldRng::new(seed);
    let opts = builder::BuildOptions::default();
    let mut last = None;
    for _ in 0..opts.max_attempts {
        let s2 = Matrix::random(field, 4, 3, &mut rng);
        let cluster2 = match builder::cluster_layer_from(1, &relay, a, &params, s2, &pubd.b2_2.row_range(2, 3)?) {
            Ok(c) => c,
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        if !builder::singular_survivor_sets(&params, &cluster2, SweepCaps::default(), &mut rng).is_empty() {
            continue;
        }
        let scheme = Scheme {
            field,
            scenario: scenario.clone(),
            params: params.clone(),
            rates: rates.clone(),
            relay: relay.clone(),
            clusters: vec![cluster1.clone(), cluster2],
            seed,
        };
        match builder::first_violation(&scheme, SweepCaps::default()) {
            None => return Ok(scheme),
            Some((constraint, scenario)) => last = Some(builder::BuildError::SecurityConstraintViolated { constraint, scenario }),
        }
    }
    Err(last.unwrap_or(builder::BuildError::ConstructionFailed {
        stage: "cluster 2".into(),
        attempts: opts.max_attempts,
        reason: "no invertible survivor stacks".into(),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FixtureLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FixtureReport {
    pub q: u64,
    pub lines: Vec<FixtureLine>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("fixture q={}\n", self.q);
        for l in &self.lines {
            let _ = writeln!(out, "{} {} {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
        }
        let failed = self.lines.iter().filter(|l| !l.pass).count();
        let _ = writeln!(out, "summary checks={} failed={}", self.lines.len(), failed);
        out
    }

    fn push(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.lines.push(FixtureLine { name: name.into(), pass, detail: detail.into() });
    }
}

fn columns_of(p: &topology::DerivedParams, datasets: &[usize]) -> Vec<usize> {
    (0..p.m).flat_map(|j| datasets.iter().map(move |&k| p.column_index(k, j))).collect()
}

fn zero_cols(m: &Matrix, rows: std::ops::Range<usize>, cols: &[usize]) -> bool {
    rows.clone().all(|r| cols.iter().all(|&c| m.get(r, c).is_zero()))
}

/// Check the reference example over `F_q`.
pub fn verify(q: u64) -> FixtureReport {
    let mut rep = FixtureReport { q, lines: Vec::new() };
    let field = match PrimeField::new(q) {
        Ok(f) => f,
        Err(e) => {
            rep.push("field", false, e.to_string());
            return rep;
        }
    };
    let pubd = match FixtureMatrices::embed(field) {
        Ok(p) => p,
        Err(e) => {
            rep.push("embed", false, e.to_string());
            return rep;
        }
    };
    rep.push("embed", true, "all entries map into the field");

    let sc = example_scenario();
    let a = &sc.assignment;
    let p = topology::derive_params(a, &sc.stragglers, &sc.colluders).expect("example derives");
    let rates = topology::rates(&p).expect("example rates");
    let want = (Rate::from_integer(1), vec![Rate::from_integer(1), Rate::new(1, 2)], Rate::new(5, 2), 5);
    let got = (rates.r1, rates.r2.clone(), rates.rz, rates.key_count);
    rep.push("rates", got == want, format!("R1={} R2=[{}, {}] RZ={} keys={}", got.0, got.1[0], got.1[1], got.2, got.3));

    let f1 = pubd.s1.mul(&pubd.f).expect("4x4 times 4x12");
    rep.push("f1_equals_s1_f", f1 == pubd.f1, "S1*F against the stored F1");
    rep.push(
        "aggregation_rows",
        pubd.f.row_range(0, 2).expect("rows") == builder::build_aggregation_matrix(field, &p),
        "first two rows of F",
    );

    // relay 1 lacks dataset 5, relay 2 lacks datasets 1 and 6
    let relay1_missing = columns_of(&p, &[4]);
    let relay2_missing = columns_of(&p, &[0, 5]);
    let s1_2 = pubd.s1.row_range(2, 4).expect("rows");
    let col1 = s1_2.mul(&pubd.f.col_range(0, 1).expect("col")).expect("conformant");
    rep.push("relay2_column1", col1.is_zero(), "S1 rows 3-4 times F column 1");
    rep.push(
        "relay_encodability",
        zero_cols(&pubd.f1, 0..2, &relay1_missing) && zero_cols(&pubd.f1, 2..4, &relay2_missing),
        "F1 zero on datasets a relay lacks",
    );

    let decoder = match pubd.s1.inverse() {
        Ok(inv) => inv.row_range(0, 2).expect("rows"),
        Err(e) => {
            rep.push("s1_invertible", false, e.to_string());
            return rep;
        }
    };
    rep.push(
        "decode_rows",
        decoder.mul(&pubd.f1).expect("conformant") == builder::build_aggregation_matrix(field, &p),
        "S1^-1 rows 1-2 times F1 = [1 0; 0 1] blocks",
    );
    let rank_b1 = pubd.b1.rank();
    let cancels = decoder.mul(&pubd.b1).expect("conformant").is_zero();
    rep.push("constraint1", rank_b1 == 2 && cancels, format!("rank(B1)={rank_b1} cancel={cancels}"));

    // canonical solutions agree wherever a column is pinned down
    match builder::solve_relay_virtual(a, &p, &pubd.s1) {
        Ok(v) => {
            let pinned = columns_of(&p, &[0, 4, 5]);
            let ok = pinned.iter().all(|&c| (0..2).all(|r| v.get(r, c) == pubd.f.get(2 + r, c)));
            rep.push("relay_virtual_solve", ok, "V columns of datasets 1, 5, 6 reproduced");
        }
        Err(e) => rep.push("relay_virtual_solve", false, e.to_string()),
    }

    let f2 = pubd.task_1.col_range(0, 12).expect("cols");
    let b2 = pubd.task_1.col_range(12, 17).expect("cols");
    let relay_task = pubd.f1.hstack(&pubd.b1).expect("conformant");
    rep.push(
        "cluster1_task_rows",
        pubd.task_1.row_range(0, 2).expect("rows") == relay_task.row_range(0, 2).expect("rows"),
        "rows 1-2 of [F2|B2] are relay 1's rows of [F1|B1]",
    );
    let mut enc_ok = true;
    for v in 0..2 {
        let blk = pubd.s2_1.row_range(2 * v, 2 * v + 2).expect("rows").mul(&f2).expect("conformant");
        let lacking: Vec<usize> = (0..6).filter(|&k| !a.holds(0, v, k)).collect();
        enc_ok &= zero_cols(&blk, 0..2, &columns_of(&p, &lacking));
    }
    rep.push("cluster1_encodability", enc_ok, "each user's coefficients vanish on unheld datasets");
    rep.push("cluster1_zero_columns", zero_cols(&f2, 0..4, &[4, 10]), "F2 columns 5 and 11 are zero");
    let cluster1 = ClusterCode { cluster: 0, s2: pubd.s2_1.clone(), f2: f2.clone(), b2: b2.clone() };
    match builder::cluster_layer_from(0, &RelayCode::from_parts(&p, pubd.s1.clone(), pubd.f.clone(), pubd.b1.clone()).expect("invertible"), a, &p, pubd.s2_1.clone(), &b2.row_range(2, 4).expect("rows")) {
        Ok(cc) => {
            let pinned = columns_of(&p, &[1, 2, 3, 4]);
            let ok = pinned.iter().all(|&c| (2..4).all(|r| cc.f2.get(r, c) == f2.get(r, c)));
            rep.push("cluster1_virtual_solve", ok, "F2 columns of datasets 2-5 reproduced");
        }
        Err(e) => rep.push("cluster1_virtual_solve", false, e.to_string()),
    }
    rep.push("cluster1_s2_invertible", pubd.s2_1.rank() == 4, format!("rank(S2)={}", pubd.s2_1.rank()));
    rep.push(
        "cluster2_task_rows",
        pubd.b2_2.row_range(0, 2).expect("rows") == pubd.b1.row_range(2, 4).expect("rows"),
        "rows 1-2 of B2 are relay 2's rows of B1",
    );

    // relay 2 colluding with either user of cluster 1: only fixture data
    let ranks: Vec<usize> = (0..2)
        .map(|v| {
            let key = cluster1.user_block(&p, v).mul(&b2).expect("conformant");
            pubd.b2_2.vstack(&key).expect("width").rank()
        })
        .collect();
    rep.push("relay2_collusion_stack", ranks.iter().all(|&r| r == 5), format!("5x5 ranks {ranks:?}"));

    let scheme = match example_scheme(q, FIXTURE_SEED) {
        Ok(s) => s,
        Err(e) => {
            rep.push("assembled_scheme", false, e.to_string());
            return rep;
        }
    };
    rep.push("assembled_scheme", true, format!("second cluster sampled from seed {FIXTURE_SEED}"));
    let ranks: Vec<usize> = (0..4)
        .map(|v| {
            let key = builder::user_key_coefficients(&scheme, 1, v);
            b2.vstack(&key).expect("width").rank()
        })
        .collect();
    rep.push("relay1_collusion_stack", ranks.iter().all(|&r| r == 5), format!("5x5 ranks {ranks:?}"));
    let mut ranks = Vec::new();
    for v1 in 0..2 {
        for v2 in 0..4 {
            let stack = Matrix::vstack_all(
                field,
                5,
                [
                    &pubd.b1,
                    &builder::user_key_coefficients(&scheme, 0, v1),
                    &builder::user_key_coefficients(&scheme, 1, v2),
                ],
            )
            .expect("width");
            ranks.push(stack.rank());
        }
    }
    rep.push("server_collusion_stack", ranks.iter().all(|&r| r == 5), format!("7x5 ranks {ranks:?}"));

    let mut rng = FieldRng::new(0);
    let tuples = audit::collusion_tuples(&p, None, SweepCaps::default(), &mut rng);
    let server_max = tuples.iter().map(|t| audit::server_security_mi(&scheme, t, ColluderInputs::HeldPieces)).max();
    rep.push("server_mi", server_max == Some(0), format!("max over {} tuples = {}", tuples.len(), server_max.unwrap_or(-1)));
    let relay_max = (0..2)
        .flat_map(|u| tuples.iter().map(move |t| (u, t)))
        .map(|(u, t)| {
            let mi = audit::relay_security_mi(&scheme, u, t, ColluderInputs::HeldPieces);
            mi.all_users.max(mi.survivors)
        })
        .max();
    rep.push("relay_mi", relay_max == Some(0), format!("max over {} scenarios = {}", 2 * tuples.len(), relay_max.unwrap_or(-1)));

    let (w, n) = runtime::sample_inputs(&scheme, 1, FIXTURE_SEED);
    let patterns = runtime::admissible_dropouts(&p, SweepCaps::default(), &mut rng);
    let want = runtime::direct_sum(&scheme, &w);
    let ok = runtime::decode_sweep(&scheme, &w, &n, &patterns).into_iter().all(|r| r.as_ref() == Ok(&want));
    rep.push("decode_all_patterns", ok, format!("{} dropout patterns", patterns.len()));
    let straggler = runtime::simulate(&scheme, &w, &n, &[BTreeSet::new(), BTreeSet::from([3])]);
    rep.push(
        "straggler_round",
        straggler.as_ref().map(|t| t.decoded == want).unwrap_or(false),
        "user (2,4) dropped",
    );
    rep
}
