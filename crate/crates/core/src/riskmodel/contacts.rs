//! Contacts between model nodes over one forecast window.

use crate::network::{ContactNetwork, EdgeSchedule, Interval};

/// A contact pair with its mean activity over one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivePair {
    pub pair: u32,
    pub a: u32,
    pub b: u32,
    /// Transmission modifier times mean activity `w̄` over the step.
    pub weight: f64,
}

/// Pairs of model nodes with their contact intervals. Parallel channels
/// between the same two nodes are kept as separate pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelContacts {
    pairs: Vec<[u32; 2]>,
    modifier: Vec<f64>,
    offsets: Vec<u32>,
    intervals: Vec<Interval>,
}

impl ModelContacts {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            ..Self::default()
        }
    }

    pub fn push(&mut self, a: usize, b: usize, modifier: f64, intervals: &[Interval]) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.pairs.push([a as u32, b as u32]);
        self.modifier.push(modifier);
        self.intervals.extend_from_slice(intervals);
        self.offsets.push(self.intervals.len() as u32);
    }

    /// Permanently active pairs, for tests and static-network runs.
    pub fn always_on(pairs: &[(usize, usize)], t0: f64, t1: f64) -> Self {
        let mut c = Self::new();
        for &(a, b) in pairs {
            c.push(a, b, 1.0, &[Interval { start: t0, end: t1 }]);
        }
        c
    }

    /// Contacts realized in `schedule` between people that `index` maps to
    /// model nodes. Edges are resolved with the ward occupancy at call time;
    /// `include` can drop people (for example the dead).
    pub fn from_schedule(
        network: &ContactNetwork,
        schedule: &EdgeSchedule,
        index: &[Option<u32>],
        hospital_modifier: f64,
        community_modifier: f64,
        include: impl Fn(usize) -> bool,
    ) -> Self {
        let mut c = Self::new();
        for e in 0..schedule.edge_count().min(network.edges().len()) {
            let ivs = schedule.intervals(e);
            if ivs.is_empty() {
                continue;
            }
            let Some((u, v)) = network.resolve_edge(e) else {
                continue;
            };
            if !include(u) || !include(v) {
                continue;
            }
            let (Some(a), Some(b)) = (index[u], index[v]) else {
                continue;
            };
            let modifier = if network.edges()[e].kind.is_hospital() {
                hospital_modifier
            } else {
                community_modifier
            };
            c.push(a as usize, b as usize, modifier, ivs);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, p: usize) -> [u32; 2] {
        self.pairs[p]
    }

    pub fn modifier(&self, p: usize) -> f64 {
        self.modifier[p]
    }

    pub fn intervals(&self, p: usize) -> &[Interval] {
        &self.intervals[self.offsets[p] as usize..self.offsets[p + 1] as usize]
    }

    /// Mean activity of pair `p` over `[t0, t1]`.
    pub fn mean_activity(&self, p: usize, t0: f64, t1: f64) -> f64 {
        let iv = self.intervals(p);
        if t1 <= t0 {
            let idx = iv.partition_point(|i| i.end <= t0);
            return f64::from(idx < iv.len() && iv[idx].start <= t0);
        }
        let first = iv.partition_point(|i| i.end <= t0);
        let mut covered = 0.0;
        for i in &iv[first..] {
            if i.start >= t1 {
                break;
            }
            covered += i.end.min(t1) - i.start.max(t0);
        }
        covered / (t1 - t0)
    }

    /// Pairs with contact during `[t0, t1]`, weighted by modifier and mean activity.
    pub fn step_weights(&self, t0: f64, t1: f64, out: &mut Vec<ActivePair>) {
        out.clear();
        for p in 0..self.pairs.len() {
            let w = self.mean_activity(p, t0, t1);
            if w > 0.0 {
                let [a, b] = self.pairs[p];
                out.push(ActivePair {
                    pair: p as u32,
                    a,
                    b,
                    weight: w * self.modifier[p],
                });
            }
        }
    }

    /// Pairs with any contact in `[t0, t1)`, ignoring activity level.
    pub fn touched_pairs(&self, t0: f64, t1: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.pairs.len()).filter(move |&p| {
            let iv = self.intervals(p);
            let first = iv.partition_point(|i| i.end <= t0);
            first < iv.len() && iv[first].start < t1
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_static_network, sample_day_schedule, NetworkConfig};
    use crate::rng::{stream, Purpose, Seeds};

    #[test]
    fn step_weights_average_activity() {
        let mut c = ModelContacts::new();
        c.push(
            0,
            1,
            0.1,
            &[Interval { start: 0.1, end: 0.2 }, Interval { start: 0.3, end: 0.35 }],
        );
        c.push(1, 2, 1.0, &[]);
        let mut out = Vec::new();
        c.step_weights(0.0, 0.5, &mut out);
        assert_eq!(out.len(), 1);
        assert!((out[0].weight - 0.1 * 0.15 / 0.5).abs() < 1e-15);
        c.step_weights(0.2, 0.3, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn resolution_follows_admissions_and_index() {
        let mut net = generate_static_network(&NetworkConfig::with_population(300), 1).unwrap();
        let sched = sample_day_schedule(&net, 0, 720.0, &Seeds::new(1, 0));
        let everyone: Vec<Option<u32>> = (0..net.node_count())
            .map(|i| (i < net.population()).then_some(i as u32))
            .collect();
        let all = ModelContacts::from_schedule(&net, &sched, &everyone, 0.1, 1.0, |_| true);
        // fresh network: no patients, so no hospital pairs
        assert!((0..all.len()).all(|p| all.modifier(p) == 1.0));

        let person = 200;
        let mut rng = stream(1, 0, Purpose::Hospital, 0);
        net.transfer_to_hospital(person, &mut rng).unwrap();
        let after = ModelContacts::from_schedule(&net, &sched, &everyone, 0.1, 1.0, |_| true);
        for p in 0..after.len() {
            let [a, b] = after.pair(p);
            if a as usize == person || b as usize == person {
                assert_eq!(after.modifier(p), 0.1);
            }
        }
        let none = ModelContacts::from_schedule(&net, &sched, &everyone, 0.1, 1.0, |i| i != 5);
        assert!((0..none.len()).all(|p| !none.pair(p).contains(&5)));
    }
}
