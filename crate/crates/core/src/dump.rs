//! Plain-text scheme dump.
//!
//! ```text
//! hisecagg-scheme 1
//! q <modulus>
//! seed <seed>
//! datasets <K>
//! cluster <u> users <V_u> stragglers <s2> colluders <T>
//! user <u> <v> <held datasets...>
//! matrix <name> <rows> <cols>
//! <row-major entries, one matrix row per line>
//! ...
//! digest sha256 <hex of every preceding byte>
//! ```
//!
//! Indices are one-based. Matrices appear in the order `S1 A V F1 Q B1`,
//! then `S2.u F2.u B2.u` for each cluster.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::builder::{BuildError, ClusterCode, RelayCode, Scheme};
use crate::ff::{Fe, PrimeField};
use crate::matrix::Matrix;
use crate::topology::{self, Assignment, Scenario};

const HEADER: &str = "hisecagg-scheme 1";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing matrix {0}")]
    MissingMatrix(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Whether the trailing digest matched the content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestStatus {
    Match,
    Mismatch,
    Missing,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|x| x.value().to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Serialize a scheme, digest line included.
pub fn to_text(s: &Scheme) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "q {}", s.field.modulus());
    let _ = writeln!(out, "seed {}", s.seed);
    let _ = writeln!(out, "datasets {}", s.params.datasets);
    let a = s.assignment();
    for u in 0..a.clusters() {
        let _ = writeln!(
            out,
            "cluster {} users {} stragglers {} colluders {}",
            u + 1,
            a.cluster_size(u),
            s.scenario.stragglers[u],
            s.scenario.colluders[u]
        );
        for v in 0..a.cluster_size(u) {
            let held: Vec<String> = a.user(u, v).iter().map(|k| (k + 1).to_string()).collect();
            let _ = writeln!(out, "user {} {} {}", u + 1, v + 1, held.join(" "));
        }
    }
    let rc = &s.relay;
    for (name, m) in [("S1", &rc.s1), ("A", &rc.a), ("V", &rc.v), ("F1", &rc.f1), ("Q", &rc.q), ("B1", &rc.b1)] {
        write_matrix(&mut out, name, m);
    }
    for cc in &s.clusters {
        let u = cc.cluster + 1;
        write_matrix(&mut out, &format!("S2.{u}"), &cc.s2);
        write_matrix(&mut out, &format!("F2.{u}"), &cc.f2);
        write_matrix(&mut out, &format!("B2.{u}"), &cc.b2);
    }
    let digest = hex(&Sha256::digest(out.as_bytes()));
    let _ = writeln!(out, "digest sha256 {digest}");
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>), DumpError> {
        match self.inner.next() {
            Some((i, l)) => Ok((i + 1, l.split_whitespace().collect())),
            None => Err(DumpError::Parse { line: 0, msg: "unexpected end of dump".into() }),
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.inner.peek().and_then(|(_, l)| l.split_whitespace().next())
    }
}

fn perr(line: usize, msg: impl Into<String>) -> DumpError {
    DumpError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, tok: Option<&&str>) -> Result<T, DumpError> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| perr(line, "expected a number"))
}

fn keyword(line: usize, toks: &[&str], want: &str) -> Result<(), DumpError> {
    if toks.first() != Some(&want) {
        return Err(perr(line, format!("expected `{want}`")));
    }
    Ok(())
}

fn read_matrix(lines: &mut Lines<'_>, field: PrimeField) -> Result<(String, Matrix), DumpError> {
    let (ln, toks) = lines.next()?;
    keyword(ln, &toks, "matrix")?;
    let name = toks.get(1).ok_or_else(|| perr(ln, "matrix without a name"))?.to_string();
    let rows: usize = num(ln, toks.get(2))?;
    let cols: usize = num(ln, toks.get(3))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, toks) = lines.next()?;
        if toks.len() != cols {
            return Err(perr(ln, format!("expected {cols} entries, found {}", toks.len())));
        }
        for t in toks {
            let v: u64 = t.parse().map_err(|_| perr(ln, format!("bad entry `{t}`")))?;
            if v >= field.modulus() {
                return Err(perr(ln, format!("entry {v} is not reduced mod {}", field.modulus())));
            }
            data.push(field.elem(v));
        }
    }
    let m = Matrix::from_rows(field, rows, cols, data).map_err(|e| perr(ln, e.to_string()))?;
    Ok((name, m))
}

/// Parse a dump. The scheme is rebuilt from the stored matrices exactly as
/// written (only the decoder is recomputed from `S1`), so an edited dump
/// loads and then fails the audit.
pub fn from_text(text: &str) -> Result<(Scheme, DigestStatus), DumpError> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable() };
    let (ln, toks) = lines.next()?;
    if toks.join(" ") != HEADER {
        return Err(perr(ln, "not a scheme dump"));
    }
    let (ln, toks) = lines.next()?;
    keyword(ln, &toks, "q")?;
    let field = PrimeField::new(num(ln, toks.get(1))?).map_err(BuildError::from)?;
    let (ln, toks) = lines.next()?;
    keyword(ln, &toks, "seed")?;
    let seed: u64 = num(ln, toks.get(1))?;
    let (ln, toks) = lines.next()?;
    keyword(ln, &toks, "datasets")?;
    let datasets: usize = num(ln, toks.get(1))?;

    let mut table = Vec::new();
    let mut stragglers = Vec::new();
    let mut colluders = Vec::new();
    while lines.peek_keyword() == Some("cluster") {
        let (ln, toks) = lines.next()?;
        let users: usize = num(ln, toks.get(3))?;
        stragglers.push(num(ln, toks.get(5))?);
        colluders.push(num(ln, toks.get(7))?);
        let mut cluster = Vec::new();
        for _ in 0..users {
            let (ln, toks) = lines.next()?;
            keyword(ln, &toks, "user")?;
            let held = toks[3..]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| perr(ln, format!("bad dataset `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            cluster.push(held);
        }
        table.push(cluster);
    }
    let assignment = Assignment::from_one_based(datasets, &table).map_err(BuildError::from)?;
    let scenario = Scenario { assignment, stragglers, colluders };
    let params = topology::derive_params(&scenario.assignment, &scenario.stragglers, &scenario.colluders)
        .map_err(BuildError::from)?;
    let rates = topology::rates(&params).map_err(BuildError::from)?;

    let mut mats = std::collections::BTreeMap::new();
    while lines.peek_keyword() == Some("matrix") {
        let (name, m) = read_matrix(&mut lines, field)?;
        mats.insert(name, m);
    }
    let body_end = text.rfind("digest ").unwrap_or(text.len());
    let status = match lines.inner.next() {
        Some((_, l)) => {
            let toks: Vec<&str> = l.split_whitespace().collect();
            let want = hex(&Sha256::digest(&text.as_bytes()[..body_end]));
            if toks.len() == 3 && toks[0] == "digest" && toks[1] == "sha256" && toks[2] == want {
                DigestStatus::Match
            } else {
                DigestStatus::Mismatch
            }
        }
        None => DigestStatus::Missing,
    };
    let mut take = |name: &str| mats.remove(name).ok_or_else(|| DumpError::MissingMatrix(name.into()));
    let s1 = take("S1")?;
    let decoder = s1
        .inverse()
        .map_err(BuildError::from)?
        .row_range(0, params.m)
        .map_err(BuildError::from)?;
    let relay = RelayCode {
        a: take("A")?,
        v: take("V")?,
        f1: take("F1")?,
        q: take("Q")?,
        b1: take("B1")?,
        s1,
        decoder,
    };
    let clusters = (0..params.clusters())
        .map(|u| {
            Ok(ClusterCode {
                cluster: u,
                s2: take(&format!("S2.{}", u + 1))?,
                f2: take(&format!("F2.{}", u + 1))?,
                b2: take(&format!("B2.{}", u + 1))?,
            })
        })
        .collect::<Result<Vec<_>, DumpError>>()?;
    check_shapes(&params, &relay, &clusters, rates.key_count)?;
    Ok((Scheme { field, scenario, params, rates, relay, clusters, seed }, status))
}

fn check_shapes(
    p: &topology::DerivedParams,
    rc: &RelayCode,
    clusters: &[ClusterCode],
    keys: usize,
) -> Result<(), DumpError> {
    let d = p.server_rows();
    let km = p.gradient_dim();
    let mut want: Vec<(String, &Matrix, usize, usize)> = vec![
        ("S1".into(), &rc.s1, d, d),
        ("A".into(), &rc.a, p.m, km),
        ("V".into(), &rc.v, d - p.m, km),
        ("F1".into(), &rc.f1, d, km),
        ("Q".into(), &rc.q, d, d - p.m),
        ("B1".into(), &rc.b1, d, keys),
    ];
    for cc in clusters {
        let u = cc.cluster;
        let rows = p.cluster_rows(u);
        want.push((format!("S2.{}", u + 1), &cc.s2, p.cluster_sizes[u] * p.user_rows(u), rows));
        want.push((format!("F2.{}", u + 1), &cc.f2, rows, km));
        want.push((format!("B2.{}", u + 1), &cc.b2, rows, keys));
    }
    for (name, m, r, c) in want {
        if m.rows() != r || m.cols() != c {
            return Err(perr(0, format!("{name} is {}x{}, expected {r}x{c}", m.rows(), m.cols())));
        }
    }
    Ok(())
}

/// Flip one stored entry (by adding one) of the named matrix; for negative
/// controls on dumps.
pub fn perturb_entry(s: &mut Scheme, name: &str, row: usize, col: usize) -> bool {
    let m = match name {
        "S1" => &mut s.relay.s1,
        "F1" => &mut s.relay.f1,
        "B1" => &mut s.relay.b1,
        _ => {
            let Some((kind, u)) = name.split_once('.') else { return false };
            let Some(cc) = u.parse::<usize>().ok().and_then(|u| s.clusters.get_mut(u.wrapping_sub(1))) else {
                return false;
            };
            match kind {
                "S2" => &mut cc.s2,
                "F2" => &mut cc.f2,
                "B2" => &mut cc.b2,
                _ => return false,
            }
        }
    };
    if row >= m.rows() || col >= m.cols() {
        return false;
    }
    let f = m.field();
    m.set(row, col, f.add(m.get(row, col), Fe::ONE));
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_scheme, BuildOptions};
    use crate::reference::example_scenario;

    fn example() -> Scheme {
        build_scheme(&example_scenario(), 101, 3, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = example();
        let text = to_text(&s);
        assert!(text.starts_with("hisecagg-scheme 1\nq 101\nseed 3\ndatasets 6\n"));
        assert!(text.contains("user 1 1 1 3 4 6\n"));
        let (back, status) = from_text(&text).unwrap();
        assert_eq!(status, DigestStatus::Match);
        assert_eq!(back, s);
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn edits_are_detected() {
        let text = to_text(&example());
        assert_eq!(from_text(&text).unwrap().1, DigestStatus::Match);
        // change one entry of B1
        let at = text.find("matrix B1").unwrap();
        let line_start = text[at..].find('\n').unwrap() + at + 1;
        let end = text[line_start..].find(' ').unwrap() + line_start;
        let old: u64 = text[line_start..end].parse().unwrap();
        let tampered = format!("{}{}{}", &text[..line_start], (old + 1) % 101, &text[end..]);
        assert_eq!(from_text(&tampered).unwrap().1, DigestStatus::Mismatch);
        let no_digest = &text[..text.rfind("digest").unwrap()];
        assert_eq!(from_text(no_digest).unwrap().1, DigestStatus::Missing);
    }

    #[test]
    fn malformed_dumps_are_rejected() {
        assert!(matches!(from_text("hello"), Err(DumpError::Parse { line: 1, .. })));
        let text = to_text(&example());
        let cut = text.replacen("matrix A ", "matrix AA ", 1);
        assert!(matches!(from_text(&cut), Err(DumpError::MissingMatrix(name)) if name == "A"));
        let bad = text.replacen("q 101", "q 100", 1);
        assert!(from_text(&bad).is_err());
    }

    #[test]
    fn perturbation_targets() {
        let mut s = example();
        let before = s.clone();
        assert!(perturb_entry(&mut s, "B2.2", 0, 0));
        assert_ne!(s, before);
        assert!(!perturb_entry(&mut s, "B2.9", 0, 0));
        assert!(!perturb_entry(&mut s, "X", 0, 0));
    }
}
