//! Stochastic SEIHRD process on the time-dependent network.
//!
//! Progression clocks (E→I, I exit, H exit) are drawn when a node enters a
//! state. Transmission is scheduled lazily: when a node becomes a source (or
//! when a new day's schedule arrives) the first transmission on each of its
//! usable edges is drawn from that edge's contact intervals, and the
//! candidate is checked against the current states when it is popped. Every
//! channel is a Poisson process during contact, so this is exact.

mod output;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::age::AgeBand;
use crate::error::{Error, Result};
use crate::network::{ContactNetwork, EdgeSchedule};
use crate::rng::{Purpose, Seeds, SimRng};

pub use output::{write_daily_csv, Cause, DailyAggregate, DailyTracker, EventLog, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Health {
    S = 0,
    E = 1,
    I = 2,
    H = 3,
    R = 4,
    D = 5,
}

impl Health {
    pub const ALL: [Health; 6] = [Health::S, Health::E, Health::I, Health::H, Health::R, Health::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["S", "E", "I", "H", "R", "D"][self as usize]
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.label() == s)
    }

    pub fn is_source(self) -> bool {
        matches!(self, Health::I | Health::H)
    }

    /// Allowed single transitions of the SEIHRD graph.
    pub fn can_transition_to(self, to: Health) -> bool {
        use Health::*;
        matches!(
            (self, to),
            (S, E) | (E, I) | (I, H) | (I, R) | (I, D) | (H, R) | (H, D)
        )
    }
}

/// Surrogate-world rates, homogeneous across nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Transmission rate across an active edge, day⁻¹.
    pub beta: f64,
    /// Mean latent period σ⁻¹, days.
    pub latent_period: f64,
    /// Mean duration of infectiousness in the community γ⁻¹, days.
    pub infectious_period: f64,
    /// Mean duration of hospitalization γ'⁻¹, days.
    pub hospital_period: f64,
    /// Transmission modifier on hospital edges.
    pub hospital_modifier: f64,
    /// Transmission modifier elsewhere.
    pub community_modifier: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            beta: 12.0,
            latent_period: 3.7,
            infectious_period: 3.2,
            hospital_period: 5.0,
            hospital_modifier: 0.1,
            community_modifier: 1.0,
        }
    }
}

/// Hospitalization and mortality fractions `(h, d, d')` for an age band.
pub fn age_outcome_rates(band: AgeBand) -> (f64, f64, f64) {
    let r = band.outcome_rates();
    (r.hospitalization, r.community_death, r.hospital_death)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EventKind {
    Progress { node: u32, epoch: u32 },
    Transmit { source: u32, epoch: u32, target: u32 },
}

#[derive(Clone, Copy, Debug)]
struct Queued {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cumulative {
    pub infections: u64,
    pub hospitalizations: u64,
    pub deaths: u64,
}

/// Ground truth of one surrogate world.
#[derive(Clone, Debug)]
pub struct WorldState {
    health: Vec<Health>,
    epoch: Vec<u32>,
    outcomes: Vec<(f64, f64, f64)>,
    params: WorldParams,
    t: f64,
    counts: [usize; 6],
    cumulative: Cumulative,
    queue: BinaryHeap<Queued>,
    seq: u64,
    scheduled_day: Option<u32>,
    rng: SimRng,
}

/// Seed `round(fraction · N)` uniformly chosen people as infectious at t = 0.
pub fn init_world(
    network: &mut ContactNetwork,
    initial_infectious_fraction: f64,
    params: WorldParams,
    seeds: &Seeds,
) -> Result<WorldState> {
    if !(0.0..=1.0).contains(&initial_infectious_fraction) {
        return Err(Error::Config(format!(
            "initial infectious fraction must lie in [0, 1], got {initial_infectious_fraction}"
        )));
    }
    let mut world = WorldState::new(network, params, seeds);
    let n = network.population();
    let k = (initial_infectious_fraction * n as f64).round() as usize;
    let mut pick = seeds.rng(Purpose::World, 0);
    let mut chosen = sample(&mut pick, n, k.min(n)).into_vec();
    chosen.sort_unstable();
    for node in chosen {
        world.set_health(network, node, Health::I)?;
    }
    Ok(world)
}

impl WorldState {
    /// Everybody susceptible at t = 0.
    pub fn new(network: &ContactNetwork, params: WorldParams, seeds: &Seeds) -> Self {
        let n = network.population();
        let outcomes = network
            .people()
            .map(|m| age_outcome_rates(m.age_band.expect("people have an age band")))
            .collect();
        let mut counts = [0usize; 6];
        counts[Health::S.index()] = n;
        Self {
            health: vec![Health::S; n],
            epoch: vec![0; n],
            outcomes,
            params,
            t: 0.0,
            counts,
            cumulative: Cumulative::default(),
            queue: BinaryHeap::new(),
            seq: 0,
            scheduled_day: None,
            rng: seeds.rng(Purpose::Kmc, 0),
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn health(&self, node: usize) -> Health {
        self.health[node]
    }

    pub fn health_slice(&self) -> &[Health] {
        &self.health
    }

    pub fn population(&self) -> usize {
        self.health.len()
    }

    pub fn count(&self, h: Health) -> usize {
        self.counts[h.index()]
    }

    pub fn counts(&self) -> [usize; 6] {
        self.counts
    }

    pub fn cumulative(&self) -> Cumulative {
        self.cumulative
    }

    /// Force `node` into `health` at the current time and start the clocks
    /// that state carries. Intended for seeding before a day starts: a source
    /// set in the middle of a day transmits from the next day's schedule on.
    /// Hospital placement is handled for `H`.
    pub fn set_health(&mut self, network: &mut ContactNetwork, node: usize, health: Health) -> Result<()> {
        if node >= self.health.len() {
            return Err(Error::UnknownNode(node));
        }
        let old = self.health[node];
        if old == Health::H && health != Health::H {
            network.discharge(node)?;
        }
        if health == Health::H && old != Health::H {
            network.transfer_to_hospital(node, &mut self.rng)?;
        }
        self.enter(network, node, health, None);
        Ok(())
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Queued {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn exp(&mut self, rate: f64) -> f64 {
        let e: f64 = Exp1.sample(&mut self.rng);
        e / rate
    }

    /// Switch state and draw the clocks of the new state. New sources draw
    /// transmission candidates from `schedule` if one is current.
    fn enter(
        &mut self,
        network: &ContactNetwork,
        node: usize,
        health: Health,
        schedule: Option<&EdgeSchedule>,
    ) {
        let old = self.health[node];
        self.counts[old.index()] -= 1;
        self.counts[health.index()] += 1;
        self.health[node] = health;
        self.epoch[node] = self.epoch[node].wrapping_add(1);
        let epoch = self.epoch[node];
        let wait = match health {
            Health::E => Some(self.exp(1.0 / self.params.latent_period)),
            Health::I => Some(self.exp(1.0 / self.params.infectious_period)),
            Health::H => Some(self.exp(1.0 / self.params.hospital_period)),
            _ => None,
        };
        if let Some(w) = wait {
            let t = self.t + w;
            self.push(
                t,
                EventKind::Progress {
                    node: node as u32,
                    epoch,
                },
            );
        }
        if health.is_source() {
            if let Some(s) = schedule {
                self.schedule_transmissions(network, node, s);
            }
        }
    }

    /// Draw the first transmission time on each usable edge of `source`
    /// within the remaining contact intervals of `schedule`.
    fn schedule_transmissions(&mut self, network: &ContactNetwork, source: usize, schedule: &EdgeSchedule) {
        let anchor = match self.health[source] {
            Health::I => source,
            Health::H => match network.bed_of(source) {
                Some(bed) => bed,
                None => return,
            },
            _ => return,
        };
        let epoch = self.epoch[source];
        let t0 = self.t;
        for &e in network.incident_edges(anchor) {
            let e = e as usize;
            // Bed slots added during the day have no intervals until tomorrow.
            if e >= schedule.edge_count() {
                continue;
            }
            let Some((u, v)) = network.resolve_edge(e) else {
                continue;
            };
            let target = if u == source { v } else { u };
            if target == source || self.health[target] != Health::S {
                continue;
            }
            let modifier = if network.edges()[e].kind.is_hospital() {
                self.params.hospital_modifier
            } else {
                self.params.community_modifier
            };
            let kappa = modifier * self.params.beta;
            if kappa <= 0.0 {
                continue;
            }
            let intervals = schedule.intervals(e);
            let first = intervals.partition_point(|iv| iv.end <= t0);
            for iv in &intervals[first..] {
                let start = iv.start.max(t0);
                let len = iv.end - start;
                let p = -(-kappa * len).exp_m1();
                let u: f64 = self.rng.random();
                if u < p {
                    // Exponential truncated to the contact, by inversion.
                    let v: f64 = self.rng.random();
                    let tau = (-(-(v * p)).ln_1p() / kappa).min(len);
                    self.push(
                        start + tau,
                        EventKind::Transmit {
                            source: source as u32,
                            epoch,
                            target: target as u32,
                        },
                    );
                    break;
                }
            }
        }
    }

    /// Advance the world to `t_end` using `schedule`, which must cover
    /// `[t, t_end)`. Transitions are appended to `log` when given.
    pub fn run(
        &mut self,
        network: &mut ContactNetwork,
        schedule: &EdgeSchedule,
        t_end: f64,
        mut log: Option<&mut EventLog>,
    ) -> Result<()> {
        let day_start = schedule.day as f64;
        let day_end = day_start + 1.0;
        if self.t < day_start || t_end > day_end + 1e-12 || t_end < self.t {
            return Err(Error::ScheduleGap {
                covered_from: day_start,
                covered_to: day_end,
                needed_from: self.t,
                needed_to: t_end,
            });
        }
        if schedule.edge_count() > network.edges().len() {
            return Err(Error::Config("schedule has more edges than the network".into()));
        }
        if self.scheduled_day != Some(schedule.day) {
            self.scheduled_day = Some(schedule.day);
            for node in 0..self.health.len() {
                if self.health[node].is_source() {
                    self.schedule_transmissions(network, node, schedule);
                }
            }
        }
        while let Some(top) = self.queue.peek() {
            if top.time >= t_end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.t = ev.time;
            match ev.kind {
                EventKind::Progress { node, epoch } => {
                    let node = node as usize;
                    if self.epoch[node] != epoch {
                        continue;
                    }
                    let from = self.health[node];
                    let to = self.progress_target(node, from);
                    match (from, to) {
                        (Health::I, Health::H) => {
                            network.transfer_to_hospital(node, &mut self.rng)?;
                            self.cumulative.hospitalizations += 1;
                        }
                        (Health::H, _) => network.discharge(node)?,
                        _ => {}
                    }
                    if to == Health::D {
                        self.cumulative.deaths += 1;
                    }
                    self.enter(network, node, to, Some(schedule));
                    if let Some(log) = log.as_deref_mut() {
                        log.push(Transition::progression(self.t, node, from, to));
                    }
                }
                EventKind::Transmit {
                    source,
                    epoch,
                    target,
                } => {
                    let (source, target) = (source as usize, target as usize);
                    if self.epoch[source] != epoch || self.health[target] != Health::S {
                        continue;
                    }
                    self.cumulative.infections += 1;
                    self.enter(network, target, Health::E, Some(schedule));
                    if let Some(log) = log.as_deref_mut() {
                        log.push(Transition::transmission(self.t, target, source));
                    }
                }
            }
        }
        self.t = t_end;
        Ok(())
    }

    fn progress_target(&mut self, node: usize, from: Health) -> Health {
        let (h, d, d_hosp) = self.outcomes[node];
        let u: f64 = self.rng.random();
        match from {
            Health::E => Health::I,
            Health::I => {
                if u < h {
                    Health::H
                } else if u < h + d {
                    Health::D
                } else {
                    Health::R
                }
            }
            Health::H => {
                if u < d_hosp {
                    Health::D
                } else {
                    Health::R
                }
            }
            other => other,
        }
    }

    /// Per-state indicator matrix, `[node][state]`.
    pub fn indicators(&self) -> Vec<[f64; 6]> {
        self.health
            .iter()
            .map(|h| {
                let mut v = [0.0; 6];
                v[h.index()] = 1.0;
                v
            })
            .collect()
    }
}

/// Run `days` whole days from the current world time, sampling each day's
/// schedule from the network's current contact bounds.
pub fn run_days(
    world: &mut WorldState,
    network: &mut ContactNetwork,
    days: u32,
    mu: f64,
    seeds: &Seeds,
    mut log: Option<&mut EventLog>,
    mut tracker: Option<&mut DailyTracker>,
) -> Result<()> {
    let first = world.time().floor() as u32;
    for day in first..first + days {
        let schedule = crate::network::sample_day_schedule(network, day, mu, seeds);
        world.run(network, &schedule, day as f64 + 1.0, log.as_deref_mut())?;
        if let Some(t) = tracker.as_deref_mut() {
            t.record(day, world);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ContactBounds, Edge, EdgeKind, Group, NodeMeta, WardDegrees};

    pub(crate) fn line_network(n: usize, band: AgeBand) -> ContactNetwork {
        let nodes = (0..n)
            .map(|id| NodeMeta {
                id,
                group: Group::Community,
                age_band: Some(band),
                bounds: ContactBounds::DEFAULT,
                k_ext: 0,
            })
            .collect();
        let edges = (1..n)
            .map(|i| Edge {
                a: (i - 1) as u32,
                b: i as u32,
                kind: EdgeKind::CommunityCommunity,
            })
            .collect();
        ContactNetwork::from_components(
            nodes,
            edges,
            10.0,
            WardDegrees {
                bed_mean_degree: 5.0,
                bed_worker_mean_degree: 5.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn transition_graph() {
        use Health::*;
        assert!(S.can_transition_to(E));
        assert!(I.can_transition_to(H));
        assert!(!S.can_transition_to(I));
        assert!(!R.can_transition_to(S));
        assert!(!D.can_transition_to(R));
        assert!(!E.can_transition_to(H));
    }

    #[test]
    fn outcome_table_rows() {
        assert_eq!(age_outcome_rates(AgeBand::Under18), (0.002, 1e-6, 0.019));
        assert_eq!(age_outcome_rates(AgeBand::Senior75Plus), (0.16, 0.015, 0.512));
    }

    #[test]
    fn zero_fraction_never_starts() {
        let mut net = line_network(10, AgeBand::Adult18To44);
        let seeds = Seeds::new(1, 0);
        let mut world = init_world(&mut net, 0.0, WorldParams::default(), &seeds).unwrap();
        run_days(&mut world, &mut net, 20, 720.0, &seeds, None, None).unwrap();
        assert_eq!(world.count(Health::S), 10);
        assert_eq!(world.cumulative(), Cumulative::default());
    }

    #[test]
    fn full_fraction_has_no_transmissions() {
        let mut net = line_network(10, AgeBand::Adult18To44);
        let seeds = Seeds::new(1, 0);
        let mut world = init_world(&mut net, 1.0, WorldParams::default(), &seeds).unwrap();
        let mut log = EventLog::default();
        run_days(&mut world, &mut net, 60, 720.0, &seeds, Some(&mut log), None).unwrap();
        assert_eq!(world.cumulative().infections, 0);
        assert!(log.events().iter().all(|e| e.cause == output::Cause::Progression));
        assert_eq!(world.count(Health::R) + world.count(Health::D), 10);
    }

    #[test]
    fn schedule_gap_is_an_error() {
        let mut net = line_network(4, AgeBand::Adult18To44);
        let seeds = Seeds::new(1, 0);
        let mut world = init_world(&mut net, 0.5, WorldParams::default(), &seeds).unwrap();
        let sched = EdgeSchedule::always_active(net.edges().len(), 2, 720.0);
        assert!(matches!(
            world.run(&mut net, &sched, 3.0, None),
            Err(Error::ScheduleGap { .. })
        ));
        let sched = EdgeSchedule::always_active(net.edges().len(), 0, 720.0);
        assert!(matches!(
            world.run(&mut net, &sched, 1.5, None),
            Err(Error::ScheduleGap { .. })
        ));
    }

    #[test]
    fn counts_and_log_are_consistent() {
        let mut net = crate::network::generate_static_network(
            &crate::network::NetworkConfig::with_population(2000),
            5,
        )
        .unwrap();
        let seeds = Seeds::new(5, 0);
        let mut world = init_world(&mut net, 0.01, WorldParams::default(), &seeds).unwrap();
        let mut log = EventLog::default();
        let mut last = Cumulative::default();
        for day in 0..40 {
            let sched = crate::network::sample_day_schedule(&net, day, 720.0, &seeds);
            world.run(&mut net, &sched, day as f64 + 1.0, Some(&mut log)).unwrap();
            assert_eq!(world.counts().iter().sum::<usize>(), 2000);
            let c = world.cumulative();
            assert!(c.infections >= last.infections && c.deaths >= last.deaths);
            assert!(c.hospitalizations >= last.hospitalizations);
            last = c;
            assert_eq!(world.count(Health::H), net.hospitalized_count());
        }
        let mut prev = 0.0;
        for e in log.events() {
            assert!(e.time >= prev);
            assert!(e.from.can_transition_to(e.to));
            prev = e.time;
        }
        assert_eq!(
            log.events().iter().filter(|e| e.to == Health::E).count() as u64,
            last.infections
        );
        assert!(last.infections > 0);
    }

    #[test]
    fn permanently_active_pair_infection_probability() {
        // Source stays infectious (very long infectious period), so the
        // target's infection time is Exp(κ) with κ = 12 day⁻¹.
        let params = WorldParams {
            infectious_period: 1e9,
            ..WorldParams::default()
        };
        let tau = 0.05;
        let reps = 20_000;
        let mut infected = 0;
        for r in 0..reps {
            let mut net = line_network(2, AgeBand::Adult18To44);
            let seeds = Seeds::new(3, r);
            let mut world = WorldState::new(&net, params, &seeds);
            world.set_health(&mut net, 0, Health::I).unwrap();
            let sched = EdgeSchedule::always_active(1, 0, 720.0);
            world.run(&mut net, &sched, tau, None).unwrap();
            if world.health(1) != Health::S {
                infected += 1;
            }
        }
        let p = 1.0 - (-12.0f64 * tau).exp();
        let freq = infected as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "{freq} vs {p}");
    }

    #[test]
    fn hospitalized_nodes_lose_community_contacts() {
        let mut net = line_network(3, AgeBand::Senior75Plus);
        let seeds = Seeds::new(2, 0);
        let mut world = WorldState::new(&net, WorldParams { hospital_period: 1e9, ..Default::default() }, &seeds);
        world.set_health(&mut net, 1, Health::H).unwrap();
        for day in 0..5 {
            let sched = EdgeSchedule::always_active(net.edges().len(), day, 720.0);
            world.run(&mut net, &sched, day as f64 + 1.0, None).unwrap();
        }
        assert_eq!(world.health(0), Health::S);
        assert_eq!(world.health(2), Health::S);
    }
}
