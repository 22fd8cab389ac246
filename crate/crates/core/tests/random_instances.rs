mod common;

use hisecagg_core::audit::{audit_full, AuditOptions};
use hisecagg_core::runtime::{self, admissible_dropouts, decode_sweep, direct_sum, sample_inputs};
use hisecagg_core::topology::{self, ScenarioBounds};
use hisecagg_core::{build_scheme, BuildOptions, FieldRng, DEFAULT_MODULUS};

#[test]
fn random_instances_build_and_decode() {
    let bounds = ScenarioBounds::default();
    for (i, sc) in common::scenarios(1, 50, bounds).iter().enumerate() {
        let s = build_scheme(sc, DEFAULT_MODULUS, i as u64, &BuildOptions::default())
            .unwrap_or_else(|e| panic!("instance {i}: {e}\n{sc:?}"));
        let p = &s.params;
        assert_eq!(s.relay.b1.rows(), p.server_rows());
        assert_eq!(s.key_count(), s.rates.key_count);
        assert!(topology::check_feasibility(p).is_ok());
        let (w, n) = sample_inputs(&s, 2, 77);
        let want = direct_sum(&s, &w);
        let pats = admissible_dropouts(p, Default::default(), &mut FieldRng::new(i as u64));
        for (pat, got) in pats.iter().zip(decode_sweep(&s, &w, &n, &pats)) {
            assert_eq!(got.as_ref().ok(), Some(&want), "instance {i} dropouts {pat:?}");
        }
        let t = runtime::simulate(&s, &w, &n, &vec![Default::default(); p.clusters()]).unwrap();
        assert_eq!(t.decoded, want);
    }
}

#[test]
fn random_instances_pass_full_audit() {
    for (i, sc) in common::scenarios(2, 20, ScenarioBounds::default()).iter().enumerate() {
        let s = build_scheme(sc, DEFAULT_MODULUS, 100 + i as u64, &BuildOptions::default()).unwrap();
        let report = audit_full(&s, &AuditOptions::default());
        assert!(report.passed(), "instance {i}: {}", report.first_failure().unwrap());
    }
}

#[test]
fn builds_are_deterministic_in_the_seed() {
    let sc = &common::scenarios(3, 1, ScenarioBounds::default())[0];
    let a = build_scheme(sc, DEFAULT_MODULUS, 5, &BuildOptions::default()).unwrap();
    let b = build_scheme(sc, DEFAULT_MODULUS, 5, &BuildOptions::default()).unwrap();
    let c = build_scheme(sc, DEFAULT_MODULUS, 6, &BuildOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.relay.s1, c.relay.s1);
}
