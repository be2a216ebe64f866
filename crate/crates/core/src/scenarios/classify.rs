//! Flagging users as possibly infectious and scoring the flags against the
//! surrogate truth.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::kmc::Health;
use crate::network::{ContactNetwork, EdgeSchedule};
use crate::observations::{ObservationKind, ObservationRecord};
use crate::riskmodel::Ensemble;

use super::UserBase;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationResult {
    /// Per model node.
    pub flags: Vec<bool>,
    pub threshold: Option<f64>,
    pub tpr: f64,
    /// Flagged fraction of the whole user base.
    pub ppf: f64,
    pub fpr: f64,
    pub positives: usize,
    pub true_positives: usize,
}

/// Per model node: is the user infectious (state I) in the truth?
pub fn truth_infectious(truth: &[Health], users: &UserBase) -> Vec<bool> {
    users.users().iter().map(|&u| truth[u] == Health::I).collect()
}

/// Score `flags` among `eligible` users against `infectious`.
pub fn score(flags: Vec<bool>, eligible: &[bool], infectious: &[bool], threshold: Option<f64>) -> ClassificationResult {
    let n = flags.len();
    let (mut pos, mut tp, mut sick, mut counted) = (0usize, 0usize, 0usize, 0usize);
    for k in 0..n {
        if !eligible[k] {
            continue;
        }
        counted += 1;
        sick += usize::from(infectious[k]);
        if flags[k] {
            pos += 1;
            tp += usize::from(infectious[k]);
        }
    }
    let healthy = counted - sick;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    ClassificationResult {
        tpr: ratio(tp, sick),
        ppf: ratio(pos, n),
        fpr: ratio(pos - tp, healthy),
        positives: pos,
        true_positives: tp,
        flags,
        threshold,
    }
}

/// Ensemble-mean `⟨I⟩` per model node.
pub fn mean_infectious(ensemble: &Ensemble) -> Vec<f64> {
    (0..ensemble.nodes()).map(|i| ensemble.mean_probability(i, Health::I)).collect()
}

/// Flag eligible users whose ensemble-mean `⟨I⟩` exceeds `c_i`.
pub fn classify(mean_i: &[f64], eligible: &[bool], infectious: &[bool], c_i: f64) -> ClassificationResult {
    let flags = mean_i.iter().zip(eligible).map(|(&p, &e)| e && p > c_i).collect();
    score(flags, eligible, infectious, Some(c_i))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub ppf: f64,
    pub tpr: f64,
}

/// TPR and PPF for each threshold, in descending threshold order.
pub fn roc_curve(mean_i: &[f64], eligible: &[bool], infectious: &[bool], thresholds: &[f64]) -> Vec<RocPoint> {
    let mut ts = thresholds.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    ts.into_iter()
        .map(|c| {
            let r = classify(mean_i, eligible, infectious, c);
            RocPoint {
                threshold: c,
                ppf: r.ppf,
                tpr: r.tpr,
            }
        })
        .collect()
}

/// TPR of a curve at `ppf` by linear interpolation, starting from the origin.
/// Returns `None` beyond the curve's largest PPF.
pub fn tpr_at_ppf(curve: &[RocPoint], ppf: f64) -> Option<f64> {
    let mut prev = (0.0, 0.0);
    for p in curve {
        if p.ppf >= ppf {
            if p.ppf == prev.0 {
                return Some(p.tpr.max(prev.1));
            }
            let w = (ppf - prev.0) / (p.ppf - prev.0);
            return Some(prev.1 + w * (p.tpr - prev.1));
        }
        prev = (p.ppf, p.tpr);
    }
    None
}

/// TPR of a single operating point `(ppf0, tpr0)` carried to another PPF:
/// below it by dropping flagged users at random, above it by flagging
/// randomly chosen unflagged users.
pub fn randomized_tpr(ppf0: f64, tpr0: f64, ppf: f64) -> f64 {
    if ppf <= ppf0 {
        if ppf0 > 0.0 {
            tpr0 * ppf / ppf0
        } else {
            0.0
        }
    } else if ppf0 < 1.0 {
        tpr0 + (1.0 - tpr0) * (ppf - ppf0) / (1.0 - ppf0)
    } else {
        tpr0
    }
}

/// Geometric threshold grid from `hi` down to `lo`, plus 0 and 1.
pub fn default_thresholds(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let count = count.max(2);
    let ratio = (lo / hi).powf(1.0 / (count - 1) as f64);
    out.extend((0..count).map(|k| hi * ratio.powi(k as i32)));
    out.push(0.0);
    out
}

fn positive_testers(observations: &[ObservationRecord], users: &UserBase) -> Vec<usize> {
    let mut out: Vec<usize> = observations
        .iter()
        .filter(|o| o.kind == ObservationKind::TestPositive)
        .filter_map(|o| users.model_index(o.node as usize))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Flag users with a positive test among `observations`.
pub fn baseline_test_only(
    observations: &[ObservationRecord],
    users: &UserBase,
    eligible: &[bool],
    infectious: &[bool],
) -> ClassificationResult {
    let mut flags = vec![false; users.len()];
    for k in positive_testers(observations, users) {
        flags[k] = eligible[k];
    }
    score(flags, eligible, infectious, None)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TracingRule {
    /// Total contact time between the pair within one day.
    #[default]
    DailyCumulative,
    /// Any single uninterrupted contact.
    PerEvent,
}

/// Pairs of users with a qualifying contact, per day, for the trailing days.
#[derive(Clone, Debug, Default)]
pub struct ContactHistory {
    days: VecDeque<(u32, Vec<(u32, u32)>)>,
    keep: u32,
    min_duration: f64,
    rule: TracingRule,
}

impl ContactHistory {
    /// Keep `keep` days; a contact qualifies above `min_minutes`.
    pub fn new(keep: u32, min_minutes: f64, rule: TracingRule) -> Self {
        Self {
            days: VecDeque::new(),
            keep,
            min_duration: min_minutes / 1440.0,
            rule,
        }
    }

    /// Record the user pairs with a qualifying contact in `schedule`.
    /// Edges are resolved with the ward occupancy at call time.
    pub fn record_day(&mut self, day: u32, network: &ContactNetwork, schedule: &EdgeSchedule, users: &UserBase) {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for e in 0..schedule.edge_count().min(network.edges().len()) {
            let ivs = schedule.intervals(e);
            if ivs.is_empty() {
                continue;
            }
            let qualifies = match self.rule {
                TracingRule::PerEvent => ivs.iter().any(|i| i.duration() > self.min_duration),
                TracingRule::DailyCumulative => ivs.iter().map(|i| i.duration()).sum::<f64>() > self.min_duration,
            };
            if !qualifies {
                continue;
            }
            let Some((u, v)) = network.resolve_edge(e) else {
                continue;
            };
            if let (Some(a), Some(b)) = (users.model_index(u), users.model_index(v)) {
                pairs.push((a.min(b) as u32, a.max(b) as u32));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        self.days.push_back((day, pairs));
        while let Some(&(d, _)) = self.days.front() {
            if d + self.keep <= day {
                self.days.pop_front();
            } else {
                break;
            }
        }
    }

    /// Model indices with a qualifying contact with any of `sources` over
    /// the retained days. Sources themselves are not included.
    pub fn traced(&self, sources: &[usize], n: usize) -> Vec<usize> {
        let mut is_source = vec![false; n];
        for &s in sources {
            is_source[s] = true;
        }
        let mut hit = vec![false; n];
        for (_, pairs) in &self.days {
            for &(a, b) in pairs {
                let (a, b) = (a as usize, b as usize);
                if is_source[a] && !is_source[b] {
                    hit[b] = true;
                }
                if is_source[b] && !is_source[a] {
                    hit[a] = true;
                }
            }
        }
        (0..n).filter(|&k| hit[k]).collect()
    }

    pub fn days_retained(&self) -> usize {
        self.days.len()
    }
}

/// Positive-tested users plus their traced contacts.
pub fn baseline_contact_tracing(
    observations: &[ObservationRecord],
    history: &ContactHistory,
    users: &UserBase,
    eligible: &[bool],
    infectious: &[bool],
) -> ClassificationResult {
    let sources = positive_testers(observations, users);
    let mut flags = vec![false; users.len()];
    for &k in sources.iter().chain(history.traced(&sources, users.len()).iter()) {
        flags[k] = eligible[k];
    }
    score(flags, eligible, infectious, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_static_network, Interval, NetworkConfig};
    use proptest::prelude::*;

    #[test]
    fn extreme_thresholds() {
        let mean = [0.2, 0.0, 0.9, 0.5];
        let elig = [true; 4];
        let inf = [true, false, true, false];
        let none = classify(&mean, &elig, &inf, 1.0);
        assert_eq!((none.tpr, none.ppf), (0.0, 0.0));
        let all = classify(&mean, &elig, &inf, -1.0);
        assert_eq!((all.tpr, all.ppf, all.fpr), (1.0, 1.0, 1.0));
        // c = 0 flags everyone with a strictly positive probability
        assert_eq!(classify(&mean, &elig, &inf, 0.0).positives, 3);
    }

    #[test]
    fn randomized_tpr_matches_random_flagging() {
        use rand::seq::index::sample;
        // 1000 users, 100 infectious; the base classifier flags 20 users,
        // 10 of them infectious.
        let n = 1000;
        let inf: Vec<bool> = (0..n).map(|k| k < 100).collect();
        let base: Vec<usize> = (0..10).chain(500..510).collect();
        let (p0, t0) = (0.02, 0.1);
        let mut rng = crate::rng::stream(3, 0, crate::rng::Purpose::Misc, 0);
        let unflagged: Vec<usize> = (0..n).filter(|k| !base.contains(k)).collect();
        for (target, extra) in [(0.2, 180), (0.5, 480)] {
            let trials = 2000;
            let mut hits = 0usize;
            for _ in 0..trials {
                hits += sample(&mut rng, unflagged.len(), extra).iter().filter(|&k| inf[unflagged[k]]).count();
            }
            let empirical = (10.0 + hits as f64 / trials as f64) / 100.0;
            assert!((empirical - randomized_tpr(p0, t0, target)).abs() < 2e-3, "{empirical}");
        }
        assert!((randomized_tpr(p0, t0, 0.01) - 0.05).abs() < 1e-12);
        assert_eq!(randomized_tpr(p0, t0, p0), t0);
    }

    #[test]
    fn perfect_knowledge_reaches_full_tpr_at_prevalence() {
        let inf: Vec<bool> = (0..100).map(|k| k % 10 == 0).collect();
        let mean: Vec<f64> = inf.iter().map(|&b| f64::from(b)).collect();
        let r = classify(&mean, &[true; 100], &inf, 0.5);
        assert_eq!((r.tpr, r.ppf), (1.0, 0.1));
    }

    #[test]
    fn interpolation_on_curve() {
        let curve = [
            RocPoint { threshold: 0.5, ppf: 0.1, tpr: 0.4 },
            RocPoint { threshold: 0.1, ppf: 0.3, tpr: 0.8 },
        ];
        assert!((tpr_at_ppf(&curve, 0.05).unwrap() - 0.2).abs() < 1e-15);
        assert!((tpr_at_ppf(&curve, 0.2).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(tpr_at_ppf(&curve, 0.5), None);
    }

    #[test]
    fn baselines_flag_testers_and_contacts() {
        let net = generate_static_network(&NetworkConfig::with_population(200), 2).unwrap();
        let users = UserBase::everyone(&net);
        let n = users.len();
        let elig = vec![true; n];
        let inf = vec![false; n];
        assert_eq!(baseline_test_only(&[], &users, &elig, &inf).positives, 0);

        let e = net.edges().iter().position(|e| !e.kind.is_hospital()).unwrap();
        let (a, b) = (net.edges()[e].a as usize, net.edges()[e].b as usize);
        let mut per_edge = vec![Vec::new(); net.edges().len()];
        per_edge[e] = vec![Interval { start: 3.1, end: 3.1 + 20.0 / 1440.0 }];
        let sched = EdgeSchedule::from_intervals(3, 720.0, per_edge);
        let mut hist = ContactHistory::new(10, 15.0, TracingRule::PerEvent);
        hist.record_day(3, &net, &sched, &users);
        let obs = [ObservationRecord::new(3, a, 4.0, ObservationKind::TestPositive, 0.5, 0.5)];
        let r = baseline_contact_tracing(&obs, &hist, &users, &elig, &inf);
        assert_eq!(r.positives, 2);
        assert!(r.flags[a] && r.flags[b]);
        assert_eq!(baseline_contact_tracing(&[], &hist, &users, &elig, &inf).positives, 0);
        // old days fall out of the window
        for d in 4..14 {
            hist.record_day(d, &net, &EdgeSchedule::from_intervals(d, 720.0, vec![Vec::new(); net.edges().len()]), &users);
        }
        assert_eq!(hist.days_retained(), 10);
        assert_eq!(baseline_contact_tracing(&obs, &hist, &users, &elig, &inf).positives, 1);
    }

    #[test]
    fn short_contacts_add_up_only_under_the_cumulative_rule() {
        let net = generate_static_network(&NetworkConfig::with_population(200), 2).unwrap();
        let users = UserBase::everyone(&net);
        let e = net.edges().iter().position(|e| !e.kind.is_hospital()).unwrap();
        let mut per_edge = vec![Vec::new(); net.edges().len()];
        let ten = 10.0 / 1440.0;
        per_edge[e] = vec![Interval { start: 0.2, end: 0.2 + ten }, Interval { start: 0.5, end: 0.5 + ten }];
        let sched = EdgeSchedule::from_intervals(0, 720.0, per_edge);
        let src = [net.edges()[e].a as usize];
        let mut ev = ContactHistory::new(10, 15.0, TracingRule::PerEvent);
        ev.record_day(0, &net, &sched, &users);
        assert!(ev.traced(&src, users.len()).is_empty());
        let mut cum = ContactHistory::new(10, 15.0, TracingRule::DailyCumulative);
        cum.record_day(0, &net, &sched, &users);
        assert_eq!(cum.traced(&src, users.len()), vec![net.edges()[e].b as usize]);
    }

    proptest! {
        #[test]
        fn roc_is_monotone(
            mean in proptest::collection::vec(0.0f64..1.0, 50),
            inf in proptest::collection::vec(any::<bool>(), 50),
        ) {
            let ts = default_thresholds(1e-4, 0.5, 30);
            let curve = roc_curve(&mean, &[true; 50], &inf, &ts);
            for w in curve.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[1].ppf >= w[0].ppf && w[1].tpr >= w[0].tpr);
            }
            for p in &curve {
                prop_assert!((0.0..=1.0).contains(&p.ppf) && (0.0..=1.0).contains(&p.tpr));
            }
        }
    }
}
