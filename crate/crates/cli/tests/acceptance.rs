//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hisecagg_cli::commands;
use hisecagg_cli::Overrides;
use hisecagg_core::audit::{
    self, audit_full, check_constraint2, check_constraint3, collusion_tuples, exhaustive_mi, linear_mi,
    relay_security_mi, relay_survivor_view, relay_view, scenario_conditioning, server_security_mi, server_view,
    AdversaryScenario, AuditOptions, ColluderInputs, LinearView, Party, DEFAULT_ORACLE_BUDGET,
};
use hisecagg_core::combin::{binomial, SweepCaps};
use hisecagg_core::dump;
use hisecagg_core::reference;
use hisecagg_core::runtime::{self, admissible_dropouts, decode_sweep, direct_sum, sample_inputs};
use hisecagg_core::topology::{random_scenario, Rate, ScenarioBounds};
use hisecagg_core::{build_scheme, BuildOptions, FieldRng, Matrix, Scheme, DEFAULT_MODULUS};

type Verdict = Result<String, String>;

const INSTANCES: usize = 100;
const HELD: ColluderInputs = ColluderInputs::HeldPieces;

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml")
}

fn ms(d: Duration) -> String {
    format!("{:.1} ms", d.as_secs_f64() * 1e3)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random feasible instances with U <= 3, V <= 4, K <= 6 over the default field.
fn random_instances() -> Result<Vec<Scheme>, String> {
    let bounds = ScenarioBounds { max_clusters: 3, max_cluster_size: 4, max_datasets: 6 };
    let mut rng = FieldRng::with_stream(2024, 9);
    (0..INSTANCES)
        .map(|i| {
            let sc = random_scenario(&mut rng, bounds);
            build_scheme(&sc, DEFAULT_MODULUS, i as u64, &BuildOptions::default())
                .map_err(|e| format!("instance {i}: {e}"))
        })
        .collect()
}

fn c1_rates() -> Verdict {
    let start = Instant::now();
    let cfg = commands::load_config(&example_config(), &Overrides::default()).map_err(|e| e.to_string())?;
    let out = commands::rates(&cfg).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let v = &out.structured;
    let sc = cfg.scenario().map_err(|e| e.to_string())?;
    let p = hisecagg_core::topology::derive_params(&sc.assignment, &sc.stragglers, &sc.colluders)
        .map_err(|e| e.to_string())?;
    let r = hisecagg_core::topology::rates(&p).map_err(|e| e.to_string())?;
    ensure(r.r1 == Rate::from_integer(1), || format!("R1={}", r.r1))?;
    ensure(r.r2 == vec![Rate::from_integer(1), Rate::new(1, 2)], || format!("R2={:?}", r.r2))?;
    ensure(r.rz == Rate::new(5, 2), || format!("RZ={}", r.rz))?;
    ensure(r.key_count == 5, || format!("keys={}", r.key_count))?;
    let first = out.text.lines().next().unwrap_or_default().to_string();
    ensure(first == "R1=1 R2=[1, 1/2] RZ=5/2 keys=5", || format!("printed `{first}`"))?;
    ensure(v["boundary"] == true && out.code == 0, || "not on the boundary or not feasible".into())?;
    ensure(took < Duration::from_millis(100), || format!("took {}", ms(took)))?;
    Ok(format!("{first} in {}", ms(took)))
}

fn c2_fixture() -> Verdict {
    let start = Instant::now();
    let r = reference::verify(101);
    let took = start.elapsed();
    let needed = [
        "f1_equals_s1_f",
        "decode_rows",
        "constraint1",
        "relay2_collusion_stack",
        "relay1_collusion_stack",
        "server_collusion_stack",
        "relay2_column1",
        "cluster1_zero_columns",
        "relay_encodability",
        "cluster1_encodability",
    ];
    for name in needed {
        let line = r.lines.iter().find(|l| l.name == name).ok_or_else(|| format!("check {name} missing"))?;
        ensure(line.pass, || format!("{name}: {}", line.detail))?;
    }
    ensure(r.passed(), || r.to_text())?;
    ensure(took < Duration::from_secs(1), || format!("took {}", ms(took)))?;
    Ok(format!("{} fixture checks at q=101 in {}", r.lines.len(), ms(took)))
}

fn c3_decodability(schemes: &[Scheme], build_time: Duration) -> Verdict {
    let start = Instant::now();
    let mut patterns_total = 0;
    for (i, s) in schemes.iter().enumerate() {
        let p = &s.params;
        let (w, n) = sample_inputs(s, 1, s.seed);
        let want = direct_sum(s, &w);
        let pats = admissible_dropouts(p, SweepCaps::default(), &mut FieldRng::new(0));
        let expected: u128 = (0..p.clusters())
            .map(|u| (0..=p.s2[u]).map(|k| binomial(p.cluster_sizes[u], k)).sum::<u128>())
            .product();
        ensure(pats.len() as u128 == expected, || format!("instance {i}: {} of {expected} patterns", pats.len()))?;
        for (pat, got) in pats.iter().zip(decode_sweep(s, &w, &n, &pats)) {
            match got {
                Ok(d) if d == want => {}
                Ok(_) => return Err(format!("instance {i}: wrong sum for dropouts {pat:?}")),
                Err(e) => return Err(format!("instance {i}: dropouts {pat:?}: {e}")),
            }
        }
        patterns_total += pats.len();
    }
    let took = build_time + start.elapsed();
    ensure(schemes.len() >= 100, || format!("only {} instances", schemes.len()))?;
    ensure(took < Duration::from_secs(60), || format!("took {}", ms(took)))?;
    Ok(format!("{} instances, {patterns_total} dropout patterns exact, {} incl. builds", schemes.len(), ms(took)))
}

fn tuple_count(s: &Scheme, skip: Option<usize>) -> u128 {
    let p = &s.params;
    (0..p.clusters())
        .map(|u| if skip == Some(u) { 1 } else { binomial(p.cluster_sizes[u], p.t[u]) })
        .product()
}

fn c4_constraints(schemes: &[Scheme]) -> Verdict {
    let caps = SweepCaps { cap: 10_000, samples: 1_000 };
    let (mut checked, mut sampled) = (0usize, 0usize);
    for (i, s) in schemes.iter().enumerate() {
        let mut rng = FieldRng::with_stream(s.seed, audit::COLLUSION_STREAM);
        ensure(audit::check_constraint1(s).pass, || format!("instance {i}: constraint 1"))?;
        for u in 0..s.params.clusters() {
            let tuples = collusion_tuples(&s.params, Some(u), caps, &mut rng);
            sampled += (tuple_count(s, Some(u)) > caps.cap) as usize;
            for t in &tuples {
                let o = check_constraint2(s, u, t);
                ensure(o.pass, || format!("instance {i} relay {} {t:?}: rank {} != {}", u + 1, o.measured, o.expected))?;
            }
            checked += tuples.len();
        }
        let tuples = collusion_tuples(&s.params, None, caps, &mut rng);
        sampled += (tuple_count(s, None) > caps.cap) as usize;
        for t in &tuples {
            let o = check_constraint3(s, t);
            ensure(o.pass, || format!("instance {i} server {t:?}: rank {} != {}", o.measured, o.expected))?;
        }
        checked += tuples.len();
    }
    Ok(format!("{checked} collusion tuples at maximal size, {sampled} sweeps sampled"))
}

fn zero_keys(s: &Scheme) -> Scheme {
    let mut z = s.clone();
    z.relay.b1 = Matrix::zeros(s.field, s.relay.b1.rows(), s.relay.b1.cols());
    for cc in &mut z.clusters {
        cc.b2 = Matrix::zeros(s.field, cc.b2.rows(), cc.b2.cols());
    }
    z
}

fn c5_zero_leakage(schemes: &[Scheme]) -> Verdict {
    let caps = SweepCaps::default();
    let (mut scenarios, mut controls) = (0usize, 0usize);
    let mut min_control = i64::MAX;
    for (i, s) in schemes.iter().enumerate() {
        let tuples = collusion_tuples(&s.params, None, caps, &mut FieldRng::with_stream(s.seed, audit::COLLUSION_STREAM));
        for t in &tuples {
            let mi = server_security_mi(s, t, HELD);
            ensure(mi == 0, || format!("instance {i} server {t:?}: {mi}"))?;
            for u in 0..s.params.clusters() {
                let mi = relay_security_mi(s, u, t, HELD);
                ensure(mi.all_users == 0 && mi.survivors == 0, || format!("instance {i} relay {} {t:?}: {mi:?}", u + 1))?;
            }
            scenarios += 1 + s.params.clusters();
        }
        let z = zero_keys(s);
        let none = vec![BTreeSet::new(); s.params.clusters()];
        let mut vals = vec![server_security_mi(&z, &none, HELD)];
        vals.extend((0..s.params.clusters()).map(|u| relay_security_mi(&z, u, &none, HELD).all_users));
        for v in &vals {
            ensure(*v > 0, || format!("instance {i}: keys-zeroed control leaks {v}"))?;
            min_control = min_control.min(*v);
        }
        controls += vals.len();
    }
    Ok(format!("{scenarios} scenarios at 0, {controls} keys-zeroed controls all > 0 (min {min_control})"))
}

/// Schemes over `F_q` with at most `max_n` input coordinates.
fn tiny_schemes(q: u64, n: std::ops::RangeInclusive<usize>, want: usize, seed: u64) -> Vec<Scheme> {
    let bounds = ScenarioBounds { max_clusters: 3, max_cluster_size: 3, max_datasets: 4 };
    let mut rng = FieldRng::with_stream(seed, 9);
    let mut out = Vec::new();
    for i in 0..2000 {
        if out.len() == want {
            break;
        }
        let sc = random_scenario(&mut rng, bounds);
        if let Ok(s) = build_scheme(&sc, q, i, &BuildOptions::default()) {
            if n.contains(&s.input_dim()) && s.key_count() > 0 {
                out.push(s);
            }
        }
    }
    out
}

/// (view, target, conditioning) triples covering both security definitions,
/// unconditioned views, total adversary knowledge and single messages.
fn triples(s: &Scheme) -> Vec<(String, LinearView, LinearView, LinearView)> {
    let f = s.field;
    let n = s.input_dim();
    let km = s.params.gradient_dim();
    let grads = LinearView::selectors(f, n, 0..km);
    let keys = LinearView::selectors(f, n, km..n);
    let empty = LinearView::empty(f, n);
    let mut out = Vec::new();
    let mut parties: Vec<Party> = (0..s.params.clusters()).map(Party::Relay).collect();
    parties.push(Party::Server);
    let tuples = collusion_tuples(&s.params, None, SweepCaps::default(), &mut FieldRng::new(1));
    for party in parties {
        let view = match party {
            Party::Relay(u) => relay_view(s, u),
            Party::Server => server_view(s),
        };
        out.push((format!("{party} alone"), view.clone(), grads.clone(), empty.clone()));
        for t in &tuples {
            for inputs in [ColluderInputs::HeldPieces, ColluderInputs::PartialSum] {
                let sc = AdversaryScenario { party, colluders: t.clone() };
                let cond = scenario_conditioning(s, &sc, inputs).to_view();
                let knowledge = view.stack(&cond).expect("same width");
                out.push((format!("{sc} {inputs:?}"), view.clone(), grads.clone(), cond));
                out.push((format!("{sc} {inputs:?} knowledge"), knowledge, grads.clone(), empty.clone()));
            }
        }
        if let Party::Relay(u) = party {
            let everyone: BTreeSet<usize> = (0..s.params.cluster_sizes[u]).collect();
            if let Some(used) = runtime::invertible_subset(s, u, &everyone) {
                out.push((format!("{party} survivors"), relay_survivor_view(s, u, &used), grads.clone(), empty.clone()));
            }
        }
    }
    for u in 0..s.params.clusters() {
        for v in 0..s.params.cluster_sizes[u] {
            let x = LinearView::new(s.user_coefficients(u, v));
            out.push((format!("user ({},{}) vs gradients", u + 1, v + 1), x.clone(), grads.clone(), empty.clone()));
            out.push((format!("user ({},{}) vs keys", u + 1, v + 1), x, keys.clone(), empty.clone()));
        }
    }
    out
}

fn c6_oracle() -> Verdict {
    let start = Instant::now();
    let mut instances = Vec::new();
    instances.extend(tiny_schemes(2, 1..=14, 3, 60));
    instances.extend(tiny_schemes(2, 15..=20, 1, 61));
    instances.extend(tiny_schemes(3, 1..=10, 3, 62));
    ensure(instances.len() >= 5, || format!("only {} tiny instances", instances.len()))?;
    let mut total = 0;
    let mut nonzero = 0;
    let mut widths = Vec::new();
    for (i, s) in instances.iter().enumerate() {
        ensure(s.input_dim() <= 22, || format!("instance {i}: dimension {}", s.input_dim()))?;
        let battery = triples(s);
        ensure(battery.len() >= 20, || format!("instance {i}: {} triples", battery.len()))?;
        for (name, a, b, c) in &battery {
            let exact = exhaustive_mi(s.field, a, b, c, DEFAULT_ORACLE_BUDGET).map_err(|e| format!("{name}: {e}"))?;
            let rank = linear_mi(a, b, c).map_err(|e| e.to_string())?;
            ensure(exact == rank, || format!("instance {i} {name}: counting {exact}, ranks {rank}"))?;
            nonzero += (exact != 0) as usize;
        }
        total += battery.len();
        widths.push(format!("q={} n={}", s.field.modulus(), s.input_dim()));
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), || format!("took {}", ms(took)))?;
    Ok(format!(
        "{} instances [{}], {total} triples equal ({nonzero} nonzero) in {}",
        instances.len(),
        widths.join(", "),
        ms(took)
    ))
}

fn c7_capacity(schemes: &[Scheme]) -> Verdict {
    let mut links = 0;
    for (i, s) in schemes.iter().enumerate() {
        let p = &s.params;
        for lprime in [1usize, 3] {
            let l = Rate::from_integer((p.m * lprime) as i64);
            let (w, n) = sample_inputs(s, lprime, s.seed);
            let pats = admissible_dropouts(p, SweepCaps::default(), &mut FieldRng::new(0));
            for pat in [&pats[0], pats.last().expect("at least the empty pattern")] {
                let t = runtime::simulate(s, &w, &n, pat).map_err(|e| format!("instance {i}: {e}"))?;
                ensure(s.rates.on_capacity_boundary(p), || format!("instance {i}: rates off the boundary"))?;
                for (u, dropped) in pat.iter().enumerate() {
                    let got = Rate::from_integer(t.relay_link_symbols(u) as i64);
                    ensure(got == s.rates.r1 * l, || format!("instance {i} relay {}: {got} != R1*L", u + 1))?;
                    links += 1;
                    for v in 0..p.cluster_sizes[u] {
                        let got = Rate::from_integer(t.user_link_symbols(u, v) as i64);
                        let want = if dropped.contains(&v) { Rate::from_integer(0) } else { s.rates.r2[u] * l };
                        ensure(got == want, || format!("instance {i} user ({},{}): {got} != {want}", u + 1, v + 1))?;
                        links += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{links} link loads equal R*L exactly"))
}

fn c8_determinism(schemes: &[Scheme]) -> Verdict {
    for s in schemes.iter().take(10) {
        let again = build_scheme(&s.scenario, s.field.modulus(), s.seed, &BuildOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(dump::to_text(s) == dump::to_text(&again), || "library dumps differ".into())?;
        let opts = AuditOptions::default();
        ensure(audit_full(s, &opts).to_text() == audit_full(&again, &opts).to_text(), || "audit reports differ".into())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = example_config();
    let run = |args: &[&str]| -> Result<(Vec<u8>, i32), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_hisecagg")).args(args).output().map_err(|e| e.to_string())?;
        Ok((o.stdout, o.status.code().unwrap_or(-1)))
    };
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let cfg_s = cfg.to_str().expect("utf-8 path");
    let ra = run(&["build", cfg_s, "--out", a.to_str().expect("utf-8")])?;
    let rb = run(&["build", cfg_s, "--out", b.to_str().expect("utf-8")])?;
    ensure(ra == rb && ra.1 == 0, || "build reports differ or failed".into())?;
    let (da, db) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
    ensure(da == db, || "dumps differ".into())?;
    for args in [
        vec!["rates", cfg_s],
        vec!["run", cfg_s],
        vec!["run", cfg_s, "--all-patterns"],
        vec!["audit", a.to_str().expect("utf-8")],
        vec!["fixture-verify"],
    ] {
        let (x, y) = (run(&args)?, run(&args)?);
        ensure(x == y, || format!("`{}` differs across runs", args.join(" ")))?;
    }
    Ok(format!("dump of {} bytes and 6 CLI reports byte-identical; 10 library rebuilds identical", da.len()))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    match verdict {
        Ok(detail) => {
            println!("PASS criterion {n} {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL criterion {n} {name}: {detail}");
            false
        }
    }
}

fn main() {
    let start = Instant::now();
    let built = random_instances();
    let build_time = start.elapsed();
    let built = &built;
    let with = |f: fn(&[Scheme]) -> Verdict| move || built.as_ref().map_err(Clone::clone).and_then(|s| f(s));
    let results = [
        report(1, "rates", c1_rates),
        report(2, "fixture", c2_fixture),
        report(3, "decodability", || built.as_ref().map_err(Clone::clone).and_then(|s| c3_decodability(s, build_time))),
        report(4, "constraints", with(c4_constraints)),
        report(5, "zero-leakage", with(c5_zero_leakage)),
        report(6, "oracle", c6_oracle),
        report(7, "capacity", with(c7_capacity)),
        report(8, "determinism", with(c8_determinism)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
