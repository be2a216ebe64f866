//! Synthetic data drawn from the surrogate world: diagnostic tests,
//! temperature sensors and hospitalization/vital status.
//!
//! Every record carries the probability the model should match and the
//! error rate the filter turns into an observation variance.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::Health;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssaySpec {
    pub sensitivity: f64,
    pub specificity: f64,
}

impl AssaySpec {
    pub const DIAGNOSTIC: Self = Self {
        sensitivity: 0.80,
        specificity: 0.99,
    };
    pub const SENSOR: Self = Self {
        sensitivity: 0.20,
        specificity: 0.98,
    };
    pub const SEROLOGY: Self = Self {
        sensitivity: 0.90,
        specificity: 0.95,
    };

    pub fn new(sensitivity: f64, specificity: f64) -> Result<Self> {
        let s = Self {
            sensitivity,
            specificity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(self.sensitivity) || !ok(self.specificity) {
            return Err(Error::Config(format!(
                "assay sensitivity {} and specificity {} must lie in (0, 1]",
                self.sensitivity, self.specificity
            )));
        }
        Ok(())
    }
}

/// Probability of being infectious given a positive result at prevalence `p`.
pub fn ppv(assay: &AssaySpec, p: f64) -> f64 {
    let tp = assay.sensitivity * p;
    let fp = (1.0 - assay.specificity) * (1.0 - p);
    if tp + fp == 0.0 {
        return 0.0;
    }
    tp / (tp + fp)
}

/// Probability of being infectious given a negative result at prevalence `p`.
pub fn for_rate(assay: &AssaySpec, p: f64) -> f64 {
    let fneg = (1.0 - assay.sensitivity) * p;
    let tneg = assay.specificity * (1.0 - p);
    if fneg + tneg == 0.0 {
        return 1.0;
    }
    fneg / (fneg + tneg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    Low,
    Medium,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    TestPositive,
    TestNegative,
    SensorPositive,
    SensorNegative,
    Hospitalized,
    NotHospitalized,
    Deceased,
    Alive,
    SerologyPositive,
}

impl ObservationKind {
    pub fn fidelity(self) -> Fidelity {
        use ObservationKind::*;
        match self {
            SensorPositive | SensorNegative => Fidelity::Low,
            TestPositive | TestNegative | SerologyPositive => Fidelity::Medium,
            Hospitalized | NotHospitalized | Deceased | Alive => Fidelity::High,
        }
    }

    /// Model compartment the observed value refers to.
    pub fn observed_state(self) -> Health {
        use ObservationKind::*;
        match self {
            TestPositive | TestNegative | SensorPositive | SensorNegative => Health::I,
            Hospitalized | NotHospitalized => Health::H,
            Deceased | Alive => Health::D,
            SerologyPositive => Health::R,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub day: u32,
    /// Person id in the contact network.
    pub node: u32,
    /// Absolute time in days.
    pub time: f64,
    pub kind: ObservationKind,
    pub value: f64,
    pub error_rate: f64,
    pub fidelity: Fidelity,
}

impl ObservationRecord {
    pub fn new(day: u32, node: usize, time: f64, kind: ObservationKind, value: f64, error_rate: f64) -> Self {
        Self {
            day,
            node: node as u32,
            time,
            kind,
            value,
            error_rate,
            fidelity: kind.fidelity(),
        }
    }
}

fn outcome(assay: &AssaySpec, infected: bool, rng: &mut SimRng) -> bool {
    if infected {
        rng.random::<f64>() < assay.sensitivity
    } else {
        rng.random::<f64>() >= assay.specificity
    }
}

/// Test `budget` living users drawn uniformly without replacement. Results
/// are stamped at `time` and mapped through PPV/FOR at prevalence `prevalence`.
pub fn administer_tests(
    truth: &[Health],
    users: &[usize],
    budget: usize,
    assay: &AssaySpec,
    prevalence: f64,
    day: u32,
    time: f64,
    rng: &mut SimRng,
) -> Vec<ObservationRecord> {
    let living: Vec<usize> = users.iter().copied().filter(|&u| truth[u] != Health::D).collect();
    let budget = budget.min(living.len());
    if budget == 0 {
        return Vec::new();
    }
    let pos = ppv(assay, prevalence);
    let neg = for_rate(assay, prevalence);
    let mut picked: Vec<usize> = sample(rng, living.len(), budget).into_iter().map(|k| living[k]).collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|u| {
            if outcome(assay, truth[u] == Health::I, rng) {
                ObservationRecord::new(day, u, time, ObservationKind::TestPositive, pos, 1.0 - pos)
            } else {
                ObservationRecord::new(day, u, time, ObservationKind::TestNegative, neg, neg)
            }
        })
        .collect()
}

/// Users who wear a sensor: a uniform `fraction` of `users`, sorted.
pub fn select_participants(users: &[usize], fraction: f64, rng: &mut SimRng) -> Vec<usize> {
    let k = ((fraction.clamp(0.0, 1.0) * users.len() as f64).round() as usize).min(users.len());
    let mut out: Vec<usize> = sample(rng, users.len(), k).into_iter().map(|i| users[i]).collect();
    out.sort_unstable();
    out
}

/// One reading per living, non-hospitalized participant. Negative readings
/// are dropped unless `keep_negative`.
pub fn sensor_readings(
    truth: &[Health],
    participants: &[usize],
    assay: &AssaySpec,
    prevalence: f64,
    keep_negative: bool,
    day: u32,
    time: f64,
    rng: &mut SimRng,
) -> Vec<ObservationRecord> {
    let pos = ppv(assay, prevalence);
    let neg = for_rate(assay, prevalence);
    let mut out = Vec::new();
    for &u in participants {
        if matches!(truth[u], Health::D | Health::H) {
            continue;
        }
        if outcome(assay, truth[u] == Health::I, rng) {
            out.push(ObservationRecord::new(day, u, time, ObservationKind::SensorPositive, pos, 1.0 - pos));
        } else if keep_negative {
            out.push(ObservationRecord::new(day, u, time, ObservationKind::SensorNegative, neg, neg));
        }
    }
    out
}

/// Exact hospitalization and vital status of every user.
pub fn status_observations(truth: &[Health], users: &[usize], day: u32, time: f64) -> Vec<ObservationRecord> {
    let mut out = Vec::with_capacity(2 * users.len());
    for &u in users {
        let h = truth[u];
        let kind = if h == Health::H {
            ObservationKind::Hospitalized
        } else {
            ObservationKind::NotHospitalized
        };
        out.push(ObservationRecord::new(day, u, time, kind, f64::from(h == Health::H), 0.0));
        let kind = if h == Health::D {
            ObservationKind::Deceased
        } else {
            ObservationKind::Alive
        };
        out.push(ObservationRecord::new(day, u, time, kind, f64::from(h == Health::D), 0.0));
    }
    out
}

/// Positive serological results among tested users, mapped to `⟨R⟩ = PPV`
/// at resistance prevalence `prevalence`.
pub fn serology_tests(
    truth: &[Health],
    users: &[usize],
    budget: usize,
    assay: &AssaySpec,
    prevalence: f64,
    day: u32,
    time: f64,
    rng: &mut SimRng,
) -> Vec<ObservationRecord> {
    let living: Vec<usize> = users.iter().copied().filter(|&u| truth[u] != Health::D).collect();
    let budget = budget.min(living.len());
    let pos = ppv(assay, prevalence);
    let mut picked: Vec<usize> = sample(rng, living.len(), budget).into_iter().map(|k| living[k]).collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .filter(|&u| outcome(assay, truth[u] == Health::R, rng))
        .map(|u| ObservationRecord::new(day, u, time, ObservationKind::SerologyPositive, pos, 1.0 - pos))
        .collect()
}

pub fn write_observations(path: &Path, records: &[ObservationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: ObservationRecord = rec?;
        if rec.fidelity != rec.kind.fidelity() {
            return Err(Error::format(path, format!("fidelity of {:?} must be {:?}", rec.kind, rec.kind.fidelity())));
        }
        if !(0.0..=1.0).contains(&rec.value) || !(0.0..=1.0).contains(&rec.error_rate) {
            return Err(Error::format(path, format!("value or error rate outside [0, 1] for node {}", rec.node)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn ppv_and_for_hand_values() {
        let a = AssaySpec::DIAGNOSTIC;
        assert!((ppv(&a, 0.01) - 0.008 / 0.0179).abs() < 1e-12);
        assert!((ppv(&a, 0.01) - 0.4469).abs() < 1e-4);
        assert!((for_rate(&a, 0.01) - 0.002 / (0.002 + 0.99 * 0.99)).abs() < 1e-12);
        assert_eq!(ppv(&a, 1.0), 1.0);
        assert_eq!(ppv(&AssaySpec::new(0.5, 1.0).unwrap(), 1e-4), 1.0);
        assert_eq!(for_rate(&AssaySpec::new(1.0, 0.9).unwrap(), 0.3), 0.0);
        assert!(for_rate(&a, 1.0 / 5000.0) > 0.0);
    }

    #[test]
    fn ppv_above_prevalence_above_for() {
        for a in [AssaySpec::DIAGNOSTIC, AssaySpec::SENSOR] {
            let mut last = (0.0, 0.0);
            for k in 1..=1000 {
                let p = k as f64 / 1000.0;
                let (hi, lo) = (ppv(&a, p), for_rate(&a, p));
                assert!(hi >= p - 1e-15 && p >= lo - 1e-15);
                assert!(hi >= last.0 && lo >= last.1);
                last = (hi, lo);
            }
        }
    }

    #[test]
    fn assay_bounds_checked() {
        assert!(AssaySpec::new(0.0, 0.9).is_err());
        assert!(AssaySpec::new(0.9, 1.1).is_err());
    }

    #[test]
    fn kinds_determine_fidelity() {
        assert_eq!(ObservationKind::SensorPositive.fidelity(), Fidelity::Low);
        assert_eq!(ObservationKind::TestNegative.fidelity(), Fidelity::Medium);
        assert_eq!(ObservationKind::Deceased.fidelity(), Fidelity::High);
    }

    #[test]
    fn test_budget_and_sensitivity() {
        let users: Vec<usize> = (0..1000).collect();
        let truth = vec![Health::I; 1000];
        let mut rng = stream(3, 0, Purpose::Tests, 0);
        assert!(administer_tests(&truth, &users, 0, &AssaySpec::DIAGNOSTIC, 0.1, 0, 1.0, &mut rng).is_empty());
        let mut positives = 0;
        let trials = 20 * 1000;
        for day in 0..20 {
            let recs = administer_tests(&truth, &users, 1000, &AssaySpec::DIAGNOSTIC, 0.1, day, 1.0, &mut rng);
            assert_eq!(recs.len(), 1000);
            positives += recs.iter().filter(|r| r.kind == ObservationKind::TestPositive).count();
        }
        let rate = positives as f64 / trials as f64;
        let se = (0.8 * 0.2 / trials as f64).sqrt();
        assert!((rate - 0.8).abs() < 3.0 * se, "{rate}");
    }

    #[test]
    fn tests_drawn_without_replacement() {
        let users: Vec<usize> = (10..60).collect();
        let truth = vec![Health::S; 60];
        let mut rng = stream(3, 0, Purpose::Tests, 1);
        let recs = administer_tests(&truth, &users, 50, &AssaySpec::DIAGNOSTIC, 0.1, 0, 1.0, &mut rng);
        let mut nodes: Vec<u32> = recs.iter().map(|r| r.node).collect();
        nodes.dedup();
        assert_eq!(nodes, (10..60).collect::<Vec<u32>>());
    }

    #[test]
    fn false_positive_rate_matches_specificity() {
        let participants: Vec<usize> = (0..1000).collect();
        let truth = vec![Health::S; 1000];
        let mut rng = stream(4, 0, Purpose::Sensors, 0);
        let mut flagged = 0;
        for day in 0..20 {
            let recs = sensor_readings(&truth, &participants, &AssaySpec::SENSOR, 0.01, false, day, 1.0, &mut rng);
            assert!(recs.iter().all(|r| r.kind == ObservationKind::SensorPositive));
            flagged += recs.len();
        }
        let n = 20_000.0;
        let rate = flagged as f64 / n;
        assert!((rate - 0.02).abs() < 3.0 * (0.02 * 0.98 / n).sqrt(), "{rate}");
        assert!(sensor_readings(&truth, &[], &AssaySpec::SENSOR, 0.01, true, 0, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn status_is_exact() {
        let truth = [Health::S, Health::H, Health::D];
        let recs = status_observations(&truth, &[0, 1, 2], 4, 5.0);
        assert_eq!(recs.len(), 6);
        assert_eq!((recs[2].kind, recs[2].value, recs[2].error_rate), (ObservationKind::Hospitalized, 1.0, 0.0));
        assert_eq!((recs[5].kind, recs[5].value), (ObservationKind::Deceased, 1.0));
        assert_eq!((recs[0].kind, recs[1].kind), (ObservationKind::NotHospitalized, ObservationKind::Alive));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            ObservationRecord::new(2, 7, 3.0, ObservationKind::TestPositive, 0.44, 0.56),
            ObservationRecord::new(2, 9, 3.0, ObservationKind::Alive, 0.0, 0.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        write_observations(&p, &recs).unwrap();
        assert_eq!(read_observations(&p).unwrap(), recs);
        let text = std::fs::read_to_string(&p).unwrap().replace("medium", "high");
        std::fs::write(&p, text).unwrap();
        assert!(read_observations(&p).is_err());
    }
}
