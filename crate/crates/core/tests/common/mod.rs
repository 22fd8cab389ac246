#![allow(dead_code)]

use hisecagg_core::builder::{self, BuildOptions, Scheme};
use hisecagg_core::ff::{FieldRng, PrimeField};
use hisecagg_core::topology::{self, random_scenario, Scenario, ScenarioBounds};

/// Relay and cluster layers as the builder makes them, with the collusion
/// constraints left unchecked.
pub fn unchecked_scheme(sc: &Scenario, q: u64, seed: u64) -> Option<Scheme> {
    let field = PrimeField::new(q).ok()?;
    let a = &sc.assignment;
    let params = topology::derive_params(a, &sc.stragglers, &sc.colluders).ok()?;
    topology::check_feasibility(&params).ok()?;
    let rates = topology::rates(&params).ok()?;
    let opts = BuildOptions::default();
    let mut rng = FieldRng::new(seed);
    let relay = builder::build_relay_layer(a, &params, rates.key_count, field, &mut rng, &opts).ok()?;
    let clusters = (0..params.clusters())
        .map(|u| builder::build_cluster_layer(u, &relay, a, &params, field, &mut rng, &opts))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    Some(Scheme { field, scenario: sc.clone(), params, rates, relay, clusters, seed })
}

/// Scenarios drawn from a dedicated generator stream.
pub fn scenarios(seed: u64, count: usize, bounds: ScenarioBounds) -> Vec<Scenario> {
    let mut rng = FieldRng::with_stream(seed, 9);
    (0..count).map(|_| random_scenario(&mut rng, bounds)).collect()
}

pub fn small_bounds() -> ScenarioBounds {
    ScenarioBounds { max_clusters: 3, max_cluster_size: 3, max_datasets: 3 }
}
