use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use hisecagg_core::audit::{audit_full, AuditLine, AuditReport, DROPOUT_STREAM};
use hisecagg_core::combin::{render_sets, SweepCaps};
use hisecagg_core::dump::{self, DigestStatus, DumpError};
use hisecagg_core::runtime::{self, RuntimeError, Transcript};
use hisecagg_core::topology::{self, Rate, TopologyError};
use hisecagg_core::{build_scheme, reference, BuildError, BuildOptions, FieldRng, Matrix, Scheme};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Overrides, ScenarioConfig};
use crate::exit;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible parameters: {name}: {source}")]
    Infeasible { name: &'static str, source: TopologyError },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("construction failed: {0}")]
    Construction(BuildError),
    #[error("{0}")]
    Security(BuildError),
    #[error("unreadable scheme dump: {0}")]
    Dump(DumpError),
    #[error("decode failed: {0}")]
    Decode(RuntimeError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Config(_) | CliError::Infeasible { .. } | CliError::Precondition(_) => {
                exit::PRECONDITION
            }
            CliError::Dump(_) => exit::PRECONDITION,
            CliError::Construction(_) => exit::CONSTRUCTION,
            CliError::Security(_) => exit::SECURITY,
            CliError::Decode(_) => exit::DECODE,
        }
    }
}

/// Variant name of a topology error, for reports and exit messages.
pub fn violation_name(e: &TopologyError) -> &'static str {
    match e {
        TopologyError::NoClusters => "NoClusters",
        TopologyError::EmptyCluster(_) => "EmptyCluster",
        TopologyError::EmptyUserAssignment(..) => "EmptyUserAssignment",
        TopologyError::DatasetOutOfRange { .. } => "DatasetOutOfRange",
        TopologyError::OrphanDataset(_) => "OrphanDataset",
        TopologyError::ClusterCountMismatch { .. } => "ClusterCountMismatch",
        TopologyError::TooManyStragglers { .. } => "TooManyStragglers",
        TopologyError::TooManyColluders { .. } => "TooManyColluders",
        TopologyError::ReplicationTooHigh(_) => "ReplicationTooHigh",
        TopologyError::NonIntegralKeyCount(_) => "NonIntegralKeyCount",
    }
}

fn infeasible(source: TopologyError) -> CliError {
    CliError::Infeasible { name: violation_name(&source), source }
}

fn from_build(e: BuildError) -> CliError {
    match e {
        BuildError::Topology(t) => infeasible(t),
        BuildError::Field(f) => CliError::Config(f.to_string()),
        e @ BuildError::SecurityConstraintViolated { .. } => CliError::Security(e),
        e => CliError::Construction(e),
    }
}

fn from_runtime(e: RuntimeError) -> CliError {
    match e {
        RuntimeError::NoInvertibleSubset { .. } | RuntimeError::MissingMessage { .. } | RuntimeError::MissingRelayMessage(_) => {
            CliError::Decode(e)
        }
        e => CliError::Precondition(e.to_string()),
    }
}

/// A command's report in both renderings, with its exit code.
#[derive(Debug, Clone)]
pub struct Output {
    pub text: String,
    pub structured: Value,
    pub code: u8,
    /// Diagnostics for stderr.
    pub notes: Vec<String>,
}

impl Output {
    fn new(text: String, structured: Value, code: u8) -> Self {
        Self { text, structured, code, notes: Vec::new() }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub fn load_config(path: &Path, ov: &Overrides) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::parse(&read(path)?).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.apply(ov);
    Ok(cfg)
}

/// Either a configuration to build from or a stored scheme.
pub enum Input {
    Config(ScenarioConfig),
    Dump { scheme: Box<Scheme>, digest: DigestStatus },
}

pub fn load_input(path: &Path, ov: &Overrides) -> Result<Input, CliError> {
    let text = read(path)?;
    if text.starts_with("hisecagg-scheme") {
        let (scheme, digest) = dump::from_text(&text).map_err(CliError::Dump)?;
        return Ok(Input::Dump { scheme: Box::new(scheme), digest });
    }
    let mut cfg = ScenarioConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.apply(ov);
    Ok(Input::Config(cfg))
}

fn build(cfg: &ScenarioConfig) -> Result<Scheme, CliError> {
    let scenario = cfg.scenario().map_err(infeasible)?;
    let caps = SweepCaps { cap: cfg.audit.cap as u128, samples: cfg.audit.samples };
    let opts = BuildOptions { survivors: caps, collusion: caps, ..BuildOptions::default() };
    build_scheme(&scenario, cfg.q, cfg.seed, &opts).map_err(from_build)
}

fn rate_list(r: &[Rate]) -> String {
    let items: Vec<String> = r.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn usize_list(v: &[usize]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

pub fn rates(cfg: &ScenarioConfig) -> Result<Output, CliError> {
    let scenario = cfg.scenario().map_err(infeasible)?;
    let p = topology::derive_params(&scenario.assignment, &scenario.stragglers, &scenario.colluders)
        .map_err(infeasible)?;
    let r = topology::rates(&p).map_err(infeasible)?;
    let feasible = topology::check_feasibility(&p);
    let boundary = r.on_capacity_boundary(&p);
    let mut text = format!("R1={} R2={} RZ={} keys={}\n", r.r1, rate_list(&r.r2), r.rz, r.key_count);
    let _ = writeln!(
        text,
        "params K={} U={} V={} m1={} m2={} m={} r1={} r2={}",
        p.datasets,
        p.clusters(),
        usize_list(&p.cluster_sizes),
        p.m1,
        usize_list(&p.m2),
        p.m,
        p.r1,
        usize_list(&p.r2)
    );
    let feasible_text = match &feasible {
        Ok(()) => "yes".to_string(),
        Err(e) => format!("no {}: {e}", violation_name(e)),
    };
    let _ = writeln!(text, "feasible {feasible_text}");
    let _ = writeln!(text, "boundary {}", if boundary { "yes" } else { "no" });
    let structured = json!({
        "r1": r.r1.to_string(),
        "r2": r.r2.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        "rz": r.rz.to_string(),
        "key_count": r.key_count,
        "params": p,
        "feasible": feasible.is_ok(),
        "violation": feasible.as_ref().err().map(violation_name),
        "boundary": boundary,
    });
    let mut out = Output::new(text, structured, if feasible.is_ok() { exit::OK } else { exit::PRECONDITION });
    if let Err(e) = feasible {
        out.notes.push(infeasible(e).to_string());
    }
    Ok(out)
}

fn audit_output(report: &AuditReport) -> Output {
    let code = if report.passed() { exit::OK } else { exit::SECURITY };
    let mut out = Output::new(report.to_text(), serde_json::to_value(report).expect("serializable"), code);
    if let Some(first) = report.first_failure() {
        out.notes.push(format!("first failure: {first}"));
    }
    out
}

/// Build, audit and write the dump to `out_path`.
pub fn build_cmd(cfg: &ScenarioConfig, out_path: &Path) -> Result<Output, CliError> {
    let s = build(cfg)?;
    let report = audit_full(&s, &cfg.audit.options(cfg.lprime));
    let text = dump::to_text(&s);
    std::fs::write(out_path, &text).map_err(|source| CliError::Io { path: out_path.display().to_string(), source })?;
    let mut out = audit_output(&report);
    out.notes.push(format!("wrote {}", out_path.display()));
    Ok(out)
}

fn digest_line(status: DigestStatus) -> AuditLine {
    let measured = match status {
        DigestStatus::Match => "match",
        DigestStatus::Mismatch => "mismatch",
        DigestStatus::Missing => "missing",
    };
    AuditLine {
        check: "digest".into(),
        scenario: "-".into(),
        measured: measured.into(),
        expected: "match".into(),
        pass: status == DigestStatus::Match,
    }
}

pub fn audit_cmd(input: Input, ov: &Overrides) -> Result<Output, CliError> {
    match input {
        Input::Config(cfg) => {
            let s = build(&cfg)?;
            Ok(audit_output(&audit_full(&s, &cfg.audit.options(cfg.lprime))))
        }
        Input::Dump { scheme, digest } => {
            let mut cfg = crate::config::AuditConfig::default();
            if let Some(cap) = ov.exhaustive_caps {
                cfg.cap = cap;
            }
            cfg.oracle = ov.oracle;
            let mut report = audit_full(&scheme, &cfg.options(ov.lprime.unwrap_or(1)));
            report.lines.insert(0, digest_line(digest));
            Ok(audit_output(&report))
        }
    }
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<u64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|x| x.value()).collect()).collect()
}

fn render(m: &Matrix) -> String {
    matrix_rows(m)
        .iter()
        .map(|row| row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Per-link symbol counts of a transcript against `R * L`, `L = m * lprime`.
fn link_lines(s: &Scheme, t: &Transcript, lprime: usize) -> (String, Vec<Value>, bool) {
    let l = (s.params.m * lprime) as i64;
    let mut text = String::new();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut push = |link: String, symbols: usize, rate: Rate| {
        let want = rate * Rate::from_integer(l);
        let pass = Rate::from_integer(symbols as i64) == want;
        ok &= pass;
        let _ = writeln!(text, "link {link} symbols={symbols} rate*L={want} {}", if pass { "ok" } else { "MISMATCH" });
        rows.push(json!({ "link": link, "symbols": symbols, "expected": want.to_string(), "pass": pass }));
    };
    for u in 0..s.params.clusters() {
        push(format!("relay {}", u + 1), t.relay_link_symbols(u), s.rates.r1);
        for v in t.survivors[u].iter().copied() {
            push(format!("user {} {}", u + 1, v + 1), t.user_link_symbols(u, v), s.rates.r2[u]);
        }
    }
    (text, rows, ok)
}

pub struct RunRequest {
    /// Explicit dropouts, replacing any configured ones.
    pub dropouts: Option<Vec<BTreeSet<usize>>>,
    pub all_patterns: bool,
}

/// Parse `U:V` (one-based) dropout flags into per-cluster sets.
pub fn parse_drops(flags: &[String], clusters: usize) -> Result<Vec<BTreeSet<usize>>, CliError> {
    let mut out = vec![BTreeSet::new(); clusters];
    for f in flags {
        let bad = || CliError::Precondition(format!("dropout `{f}` is not of the form CLUSTER:USER"));
        let (u, v) = f.split_once(':').ok_or_else(bad)?;
        let (u, v): (usize, usize) = (u.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?);
        if u == 0 || u > clusters || v == 0 {
            return Err(CliError::Precondition(format!("dropout `{f}` names no user")));
        }
        out[u - 1].insert(v - 1);
    }
    Ok(out)
}

pub fn run_cmd(input: Input, ov: &Overrides, req: &RunRequest) -> Result<Output, CliError> {
    let (s, lprime, configured, caps, mut notes) = match input {
        Input::Config(cfg) => {
            let s = build(&cfg)?;
            let dropouts = cfg.dropouts().map_err(CliError::Precondition)?;
            let caps = SweepCaps { cap: cfg.audit.cap as u128, samples: cfg.audit.samples };
            (s, cfg.lprime, dropouts, caps, Vec::new())
        }
        Input::Dump { scheme, digest } => {
            let n = scheme.params.clusters();
            let mut caps = SweepCaps::default();
            if let Some(cap) = ov.exhaustive_caps {
                caps.cap = cap as u128;
            }
            let notes = match digest {
                DigestStatus::Match => Vec::new(),
                other => vec![format!("warning: dump digest {other:?}")],
            };
            (*scheme, ov.lprime.unwrap_or(1), vec![BTreeSet::new(); n], caps, notes)
        }
    };
    if lprime == 0 {
        return Err(CliError::Precondition("lprime must be positive".into()));
    }
    let p = &s.params;
    let (w, n) = runtime::sample_inputs(&s, lprime, s.seed);
    let want = runtime::direct_sum(&s, &w);

    if req.all_patterns {
        let mut rng = FieldRng::with_stream(s.seed, DROPOUT_STREAM);
        let patterns = runtime::admissible_dropouts(p, caps, &mut rng);
        let results = runtime::decode_sweep(&s, &w, &n, &patterns);
        let mut text = String::new();
        let mut rows = Vec::new();
        let mut failed = 0;
        for (pat, res) in patterns.iter().zip(results) {
            let verdict = match res {
                Ok(d) if d == want => "OK".to_string(),
                Ok(_) => "MISMATCH".to_string(),
                Err(e) => format!("ERROR {e}"),
            };
            failed += (verdict != "OK") as usize;
            let _ = writeln!(text, "decode {verdict} dropouts={}", render_sets(pat));
            rows.push(json!({ "dropouts": render_sets(pat), "verdict": verdict }));
        }
        let _ = writeln!(text, "summary patterns={} failed={failed}", patterns.len());
        let code = if failed == 0 { exit::OK } else { exit::DECODE };
        let structured = json!({ "patterns": rows, "failed": failed });
        let mut out = Output::new(text, structured, code);
        out.notes.append(&mut notes);
        return Ok(out);
    }

    let dropouts = req.dropouts.clone().unwrap_or(configured);
    if dropouts.len() != p.clusters() {
        return Err(CliError::Precondition(format!("{} dropout sets for {} clusters", dropouts.len(), p.clusters())));
    }
    for (u, d) in dropouts.iter().enumerate() {
        if d.len() > p.s2[u] {
            return Err(CliError::Precondition(format!(
                "cluster {}: {} users dropped but only {} stragglers are tolerated",
                u + 1,
                d.len(),
                p.s2[u]
            )));
        }
    }
    let t = runtime::simulate(&s, &w, &n, &dropouts).map_err(from_runtime)?;
    let ok = t.decoded == want;
    let (links, link_rows, links_ok) = link_lines(&s, &t, lprime);
    let mut text = t.to_text();
    let _ = writeln!(text, "direct : {}", render(&want));
    text.push_str(&links);
    let _ = writeln!(text, "decode {}", if ok { "OK" } else { "MISMATCH" });
    let structured = json!({
        "q": s.field.modulus(),
        "lprime": lprime,
        "dropouts": render_sets(&dropouts),
        "used": render_sets(&t.used),
        "decoded": matrix_rows(&t.decoded),
        "direct": matrix_rows(&want),
        "links": link_rows,
        "links_on_rate": links_ok,
        "decode_ok": ok,
    });
    let mut out = Output::new(text, structured, if ok { exit::OK } else { exit::DECODE });
    out.notes.append(&mut notes);
    Ok(out)
}

pub fn fixture_cmd(q: u64) -> Output {
    let r = reference::verify(q);
    let code = if r.passed() { exit::OK } else { exit::FIXTURE };
    let mut out = Output::new(r.to_text(), serde_json::to_value(&r).expect("serializable"), code);
    for l in r.lines.iter().filter(|l| !l.pass) {
        out.notes.push(format!("fixture check failed: {} ({})", l.name, l.detail));
    }
    out
}
