//! Degree-corrected block model for the three groups.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{ContactBounds, ContactNetwork, Edge, EdgeKind, Group, NodeMeta, WardDegrees};
use crate::age::{community_age_weights, healthcare_worker_age_weights, AgeBand};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, SimRng};

const STUB_ROUNDS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of people `N`.
    pub population: usize,
    pub worker_fraction: f64,
    pub community_exponent: f64,
    pub community_mean_degree: f64,
    pub community_max_degree: usize,
    pub worker_mean_degree: f64,
    /// Mean number of community neighbors per healthcare worker.
    pub worker_community_mean_degree: f64,
    /// Initial bed slots as a fraction of `N` (at least `min_beds`).
    pub bed_fraction: f64,
    pub min_beds: usize,
    pub bed_mean_degree: f64,
    /// Mean number of healthcare-worker neighbors per bed slot.
    pub bed_worker_mean_degree: f64,
    pub bounds: ContactBounds,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            population: 97_942,
            worker_fraction: 0.05,
            community_exponent: 2.5,
            community_mean_degree: 10.0,
            community_max_degree: 100,
            worker_mean_degree: 10.0,
            worker_community_mean_degree: 5.0,
            bed_fraction: 0.02,
            min_beds: 10,
            bed_mean_degree: 5.0,
            bed_worker_mean_degree: 5.0,
            bounds: ContactBounds::DEFAULT,
        }
    }
}

impl NetworkConfig {
    pub fn with_population(population: usize) -> Self {
        Self {
            population,
            ..Self::default()
        }
    }

    pub fn worker_count(&self) -> usize {
        (self.worker_fraction * self.population as f64).round() as usize
    }

    pub fn bed_count(&self) -> usize {
        ((self.bed_fraction * self.population as f64).ceil() as usize).max(self.min_beds)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Generation(msg));
        if self.population < 100 {
            return fail(format!("population must be at least 100, got {}", self.population));
        }
        if !(self.community_exponent > 2.0) {
            return fail(format!(
                "community exponent must exceed 2, got {}",
                self.community_exponent
            ));
        }
        if !(0.0..1.0).contains(&self.worker_fraction) {
            return fail(format!("worker fraction must lie in [0, 1), got {}", self.worker_fraction));
        }
        let workers = self.worker_count();
        let community = self.population - workers;
        let cap = self.community_max_degree.min(community.saturating_sub(1));
        if !(self.community_mean_degree > 0.0) || self.community_mean_degree >= cap as f64 {
            return fail(format!(
                "community mean degree {} must be positive and below the degree cap {cap}",
                self.community_mean_degree
            ));
        }
        for (name, v) in [
            ("worker mean degree", self.worker_mean_degree),
            ("worker-community mean degree", self.worker_community_mean_degree),
            ("bed mean degree", self.bed_mean_degree),
            ("bed-worker mean degree", self.bed_worker_mean_degree),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        ContactBounds::new(self.bounds.min, self.bounds.max)?;
        Ok(())
    }
}

fn truncated_pareto_mean(alpha: f64, lo: f64, hi: f64) -> f64 {
    let num = (hi.powf(2.0 - alpha) - lo.powf(2.0 - alpha)) / (2.0 - alpha);
    let den = (hi.powf(1.0 - alpha) - lo.powf(1.0 - alpha)) / (1.0 - alpha);
    num / den
}

/// Lower cutoff `x_min` of a power law on `[x_min, cap]` with the given mean.
pub(crate) fn solve_power_law_floor(alpha: f64, mean: f64, cap: f64) -> f64 {
    let (mut lo, mut hi) = (1e-9, mean);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_pareto_mean(alpha, mid, cap) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Integer degrees from a continuous truncated power law, rounded
/// stochastically so the expected degree equals the continuous mean.
pub(crate) fn power_law_degrees(
    n: usize,
    alpha: f64,
    mean: f64,
    cap: usize,
    rng: &mut SimRng,
) -> Vec<usize> {
    let x_min = solve_power_law_floor(alpha, mean, cap as f64);
    let a = x_min.powf(1.0 - alpha);
    let b = (cap as f64).powf(1.0 - alpha);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let x = (a - u * (a - b)).powf(1.0 / (1.0 - alpha));
            let base = x.floor();
            let d = base as usize + usize::from(rng.random::<f64>() < x - base);
            d.min(cap)
        })
        .collect()
}

/// Configuration-model matching: pair shuffled stubs, return rejected pairs
/// (self-loops, duplicates) to the pool and retry; leftovers are dropped.
pub(crate) fn match_stubs(degrees: &[usize], offset: u32, rng: &mut SimRng) -> Vec<(u32, u32)> {
    let mut stubs: Vec<u32> = degrees
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i as u32 + offset, d))
        .collect();
    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(stubs.len() / 2);
    let mut pairs = Vec::with_capacity(stubs.len() / 2);
    for _ in 0..STUB_ROUNDS {
        if stubs.len() < 2 {
            break;
        }
        stubs.shuffle(rng);
        let mut rest = Vec::new();
        for pair in stubs.chunks(2) {
            if pair.len() < 2 {
                rest.push(pair[0]);
                continue;
            }
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u != v && seen.insert((u, v)) {
                pairs.push((u, v));
            } else {
                rest.extend_from_slice(pair);
            }
        }
        stubs = rest;
    }
    pairs
}

/// Erdős–Rényi edges among `n` nodes starting at `offset`, by geometric
/// skipping over the lower triangle.
pub(crate) fn er_within(n: usize, p: f64, offset: u32, rng: &mut SimRng) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    if p <= 0.0 || n < 2 {
        return out;
    }
    if p >= 1.0 {
        for v in 1..n {
            for w in 0..v {
                out.push((w as u32 + offset, v as u32 + offset));
            }
        }
        return out;
    }
    let log_q = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, -1i64);
    while v < n {
        let r: f64 = 1.0 - rng.random::<f64>();
        w += 1 + (r.ln() / log_q).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            out.push((w as u32 + offset, v as u32 + offset));
        }
    }
    out
}

/// Erdős–Rényi bipartite edges between `[a0, a0 + na)` and `[b0, b0 + nb)`.
pub(crate) fn er_between(
    na: usize,
    a0: u32,
    nb: usize,
    b0: u32,
    p: f64,
    rng: &mut SimRng,
) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let total = (na as u64) * (nb as u64);
    if p <= 0.0 || total == 0 {
        return out;
    }
    let push = |k: u64, out: &mut Vec<(u32, u32)>| {
        out.push((a0 + (k / nb as u64) as u32, b0 + (k % nb as u64) as u32));
    };
    if p >= 1.0 {
        for k in 0..total {
            push(k, &mut out);
        }
        return out;
    }
    let log_q = (1.0 - p).ln();
    let mut k: i64 = -1;
    loop {
        let r: f64 = 1.0 - rng.random::<f64>();
        k += 1 + (r.ln() / log_q).floor() as i64;
        if k as u64 >= total {
            break;
        }
        push(k as u64, &mut out);
    }
    out
}

fn draw_ages(n: usize, weights: [f64; 5], rng: &mut SimRng) -> Vec<AgeBand> {
    let dist = WeightedIndex::new(weights).expect("age weights are positive");
    (0..n)
        .map(|_| AgeBand::from_index(dist.sample(rng)).expect("five bands"))
        .collect()
}

/// Build the static network: healthcare workers occupy ids `0..n_b`, the
/// community `n_b..N`, bed slots `N..N+B`.
pub fn generate_static_network(config: &NetworkConfig, seed: u64) -> Result<ContactNetwork> {
    config.validate()?;
    let n = config.population;
    let workers = config.worker_count();
    let community = n - workers;
    let beds = config.bed_count();
    let rng = |index| stream(seed, 0, Purpose::Network, index);

    let mut nodes = Vec::with_capacity(n + beds);
    let worker_ages = draw_ages(workers, healthcare_worker_age_weights(), &mut rng(0));
    let community_ages = draw_ages(community, community_age_weights(), &mut rng(1));
    for (id, age) in worker_ages.into_iter().chain(community_ages).enumerate() {
        nodes.push(NodeMeta {
            id,
            group: if id < workers {
                Group::HealthcareWorker
            } else {
                Group::Community
            },
            age_band: Some(age),
            bounds: config.bounds,
            k_ext: 0,
        });
    }
    for slot in 0..beds {
        nodes.push(NodeMeta {
            id: n + slot,
            group: Group::HospitalBed,
            age_band: None,
            bounds: config.bounds,
            k_ext: 0,
        });
    }

    let mut edges = Vec::new();
    let mut add = |pairs: Vec<(u32, u32)>, kind| {
        edges.extend(pairs.into_iter().map(|(a, b)| Edge { a, b, kind }));
    };

    let cap = config.community_max_degree.min(community - 1);
    let mut r = rng(2);
    let mut degrees = power_law_degrees(
        community,
        config.community_exponent,
        config.community_mean_degree,
        cap,
        &mut r,
    );
    if degrees.iter().sum::<usize>() % 2 == 1 {
        let candidates: Vec<usize> = (0..community).filter(|&i| degrees[i] < cap).collect();
        let pick = candidates[r.random_range(0..candidates.len())];
        degrees[pick] += 1;
    }
    add(match_stubs(&degrees, workers as u32, &mut r), EdgeKind::CommunityCommunity);

    // Small populations saturate: the worker block becomes complete.
    let p_bb = if workers > 1 {
        (config.worker_mean_degree / (workers - 1) as f64).min(1.0)
    } else {
        0.0
    };
    add(er_within(workers, p_bb, 0, &mut rng(3)), EdgeKind::WorkerWorker);

    if workers > 0 {
        let p_bc = if community > 0 {
            (config.worker_community_mean_degree / community as f64).min(1.0)
        } else {
            0.0
        };
        add(
            er_between(workers, 0, community, workers as u32, p_bc, &mut rng(4)),
            EdgeKind::WorkerCommunity,
        );
    }

    let p_aa = if beds > 1 {
        (config.bed_mean_degree / (beds - 1) as f64).min(1.0)
    } else {
        0.0
    };
    add(er_within(beds, p_aa, n as u32, &mut rng(5)), EdgeKind::BedBed);
    if workers > 0 {
        let p_ab = (config.bed_worker_mean_degree / workers as f64).min(1.0);
        add(
            er_between(beds, n as u32, workers, 0, p_ab, &mut rng(6)),
            EdgeKind::BedWorker,
        );
    }

    Ok(ContactNetwork::from_parts(
        nodes,
        n,
        workers,
        edges,
        config.community_mean_degree,
        WardDegrees {
            bed_mean_degree: config.bed_mean_degree,
            bed_worker_mean_degree: config.bed_worker_mean_degree,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn community_degrees(net: &ContactNetwork) -> Vec<usize> {
        let mut deg = vec![0usize; net.population()];
        for e in net.edges() {
            if e.kind == EdgeKind::CommunityCommunity {
                deg[e.a as usize] += 1;
                deg[e.b as usize] += 1;
            }
        }
        deg[net.worker_count()..].to_vec()
    }

    #[test]
    fn power_law_floor_reproduces_target_mean() {
        let x = solve_power_law_floor(2.5, 10.0, 100.0);
        assert!((truncated_pareto_mean(2.5, x, 100.0) - 10.0).abs() < 1e-9);
        // Untruncated mean is 3 x_min; the cap pulls the mean down, so the
        // floor must sit above 10 / 3.
        assert!(x > 10.0 / 3.0 && x < 5.0);
    }

    #[test]
    fn degree_sample_mean_matches_target() {
        let mut rng = stream(1, 0, Purpose::Network, 99);
        let d = power_law_degrees(200_000, 2.5, 10.0, 100, &mut rng);
        let mean = d.iter().sum::<usize>() as f64 / d.len() as f64;
        assert!((mean - 10.0).abs() < 0.1, "mean {mean}");
        assert!(d.iter().all(|&k| k <= 100));
    }

    #[test]
    fn small_network_mean_community_degree_over_many_seeds() {
        let cfg = NetworkConfig::with_population(100);
        let mut total = 0.0;
        for seed in 0..100 {
            let net = generate_static_network(&cfg, seed).unwrap();
            let d = community_degrees(&net);
            total += d.iter().sum::<usize>() as f64 / d.len() as f64;
        }
        let mean = total / 100.0;
        assert!((mean - 10.0).abs() <= 2.0, "mean community degree {mean}");
    }

    #[test]
    fn group_structure_and_edge_rules() {
        let cfg = NetworkConfig::with_population(3000);
        let net = generate_static_network(&cfg, 4).unwrap();
        assert_eq!(net.worker_count(), 150);
        assert_eq!(net.community_count(), 2850);
        assert_eq!(net.bed_count(), 60);
        let mut seen = HashSet::new();
        for e in net.edges() {
            assert_ne!(e.a, e.b);
            assert!(seen.insert((e.a.min(e.b), e.a.max(e.b))), "duplicate edge");
            let ga = net.node(e.a as usize).unwrap().group;
            let gb = net.node(e.b as usize).unwrap().group;
            let pair = [ga, gb];
            let expected: &[Group] = match e.kind {
                EdgeKind::CommunityCommunity => &[Group::Community, Group::Community],
                EdgeKind::WorkerWorker => &[Group::HealthcareWorker, Group::HealthcareWorker],
                EdgeKind::WorkerCommunity => &[Group::HealthcareWorker, Group::Community],
                EdgeKind::BedBed => &[Group::HospitalBed, Group::HospitalBed],
                EdgeKind::BedWorker => &[Group::HospitalBed, Group::HealthcareWorker],
            };
            assert_eq!(pair, expected, "{e:?}");
        }
        for n in net.nodes() {
            match n.group {
                Group::HospitalBed => assert!(n.age_band.is_none()),
                Group::HealthcareWorker => assert!(matches!(
                    n.age_band,
                    Some(AgeBand::Adult18To44 | AgeBand::Adult45To64)
                )),
                Group::Community => assert!(n.age_band.is_some()),
            }
        }
    }

    #[test]
    fn inter_group_mean_degrees() {
        let net = generate_static_network(&NetworkConfig::with_population(20_000), 8).unwrap();
        let count = |k| net.edges().iter().filter(|e| e.kind == k).count() as f64;
        let nb = net.worker_count() as f64;
        let nc = net.community_count() as f64;
        let na = net.bed_count() as f64;
        // Poisson-count tolerances: five standard deviations.
        let check = |observed: f64, expected: f64| {
            assert!((observed - expected).abs() < 5.0 * expected.sqrt(), "{observed} vs {expected}");
        };
        check(count(EdgeKind::WorkerWorker), nb * 10.0 / 2.0);
        check(count(EdgeKind::WorkerCommunity), nb * 5.0);
        check(count(EdgeKind::BedBed), na * 5.0 / 2.0);
        check(count(EdgeKind::BedWorker), na * 5.0);
        let cc = community_degrees(&net);
        let mean = cc.iter().sum::<usize>() as f64 / nc;
        assert!((mean - 10.0).abs() < 0.3, "community mean degree {mean}");
        assert!(cc.iter().all(|&d| d <= 100));
    }

    #[test]
    fn rejects_infeasible_configurations() {
        let bad = NetworkConfig::with_population(50);
        assert!(matches!(generate_static_network(&bad, 0), Err(Error::Generation(m)) if m.contains("at least 100")));
        let bad = NetworkConfig {
            community_exponent: 1.5,
            ..NetworkConfig::with_population(200)
        };
        assert!(matches!(generate_static_network(&bad, 0), Err(Error::Generation(m)) if m.contains("exponent")));
        let bad = NetworkConfig {
            community_mean_degree: 150.0,
            ..NetworkConfig::with_population(1000)
        };
        assert!(matches!(generate_static_network(&bad, 0), Err(Error::Generation(m)) if m.contains("cap")));
    }

    #[test]
    fn er_within_hits_expected_edge_count() {
        let mut rng = stream(2, 0, Purpose::Network, 50);
        let edges = er_within(1000, 0.01, 0, &mut rng);
        let expected = 0.01 * 1000.0 * 999.0 / 2.0;
        assert!((edges.len() as f64 - expected).abs() < 5.0 * expected.sqrt());
        assert!(edges.iter().all(|&(a, b)| a < b && b < 1000));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn every_seed_respects_partition_and_cap(seed in any::<u64>(), n in 100usize..1500) {
            let cfg = NetworkConfig::with_population(n);
            let net = generate_static_network(&cfg, seed).unwrap();
            prop_assert_eq!(net.worker_count(), (0.05 * n as f64).round() as usize);
            prop_assert_eq!(net.population(), n);
            let cap = 100.min(net.community_count() - 1);
            prop_assert!(community_degrees(&net).iter().all(|&d| d <= cap));
            for e in net.edges() {
                prop_assert!(e.a != e.b);
            }
        }
    }
}
