//! Shared fixtures for the benchmarks.

use epirisk_core::da::{init_ensemble, PriorSpec};
use epirisk_core::network::{generate_static_network, NetworkConfig};
use epirisk_core::riskmodel::Outcomes;
use epirisk_core::rng::Seeds;
use epirisk_core::{ContactNetwork, Ensemble};

pub const SEED: u64 = 42;

pub fn network(population: usize) -> ContactNetwork {
    generate_static_network(&NetworkConfig::with_population(population), SEED).expect("network")
}

/// Identity model index over the people of `net`.
pub fn identity_index(net: &ContactNetwork) -> Vec<Option<u32>> {
    (0..net.node_count()).map(|p| (p < net.population()).then_some(p as u32)).collect()
}

/// Prior ensemble with a few percent of every member's mass in E and I.
pub fn ensemble(net: &ContactNetwork, members: usize) -> Ensemble {
    let outcomes = net
        .people()
        .map(|m| {
            let r = m.age_band.expect("person").outcome_rates();
            Outcomes {
                h: r.hospitalization,
                d: r.community_death,
                d_prime: r.hospital_death,
            }
        })
        .collect();
    let mut ens = init_ensemble(outcomes, &PriorSpec::default(), members, &Seeds::new(SEED, 0)).expect("ensemble");
    for m in 0..members {
        for i in 0..net.population() {
            let x = 0.01 * ((i * 7 + m * 13) % 5) as f64;
            *ens.state_mut(m, i) = [1.0 - 2.0 * x, x, x, 0.0, 0.0, 0.0];
        }
    }
    ens
}
