//! Contact interventions and the per-person isolation ledger.
//!
//! Policies act at the start of a day, before that day's contacts are
//! sampled, using classifications and test results from the day before.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ContactNetwork, Group};

use super::UserBase;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    None,
    Lockdown,
    Tti,
    DaIsolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionPolicy {
    pub kind: PolicyKind,
    /// First day with reduced contacts.
    pub start_day: u32,
    /// λ_max of community nodes under lockdown, day⁻¹.
    pub lockdown_max: f64,
    /// λ_min = λ_max of an isolating person, day⁻¹.
    pub isolation_rate: f64,
    /// Negative classifications in a row before release.
    pub release_days: u32,
    /// Length of a test-trace-isolate isolation, days.
    pub tti_days: u32,
}

impl Default for InterventionPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::None,
            start_day: 20,
            lockdown_max: 33.0,
            isolation_rate: 4.0,
            release_days: 5,
            tti_days: 14,
        }
    }
}

impl InterventionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.lockdown_max > 0.0) || !(self.isolation_rate > 0.0) {
            return Err(Error::Config("lockdown and isolation contact rates must be positive".into()));
        }
        if self.kind == PolicyKind::DaIsolation && self.release_days == 0 {
            return Err(Error::Config("release_days must be at least 1".into()));
        }
        if self.kind == PolicyKind::Tti && self.tti_days == 0 {
            return Err(Error::Config("tti_days must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolationReason {
    Da,
    Tti,
}

/// Days `[start_day, end_day)` of reduced contact for one person.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationRecord {
    pub node: u32,
    pub start_day: u32,
    pub end_day: Option<u32>,
    pub reason: IsolationReason,
}

impl IsolationRecord {
    /// Length in days, counting an open record up to `last_day`.
    pub fn duration(&self, last_day: u32) -> u32 {
        self.end_day.unwrap_or(last_day + 1) - self.start_day
    }
}

#[derive(Clone, Copy, Debug)]
struct Active {
    record: usize,
    negatives: u32,
    until: u32,
}

/// What the policy needs to know from the previous day.
#[derive(Clone, Copy, Debug, Default)]
pub struct PolicyInputs<'a> {
    /// DA classification per model node.
    pub flags: Option<&'a [bool]>,
    /// Model nodes to isolate under test-trace-isolate.
    pub tti_targets: &'a [usize],
}

#[derive(Clone, Debug)]
pub struct PolicyState {
    policy: InterventionPolicy,
    active: Vec<Option<Active>>,
    ledger: Vec<IsolationRecord>,
    lockdown_on: bool,
}

impl PolicyState {
    pub fn new(policy: InterventionPolicy, population: usize) -> Self {
        Self {
            policy,
            active: vec![None; population],
            ledger: Vec::new(),
            lockdown_on: false,
        }
    }

    pub fn policy(&self) -> &InterventionPolicy {
        &self.policy
    }

    pub fn ledger(&self) -> &[IsolationRecord] {
        &self.ledger
    }

    pub fn isolated_count(&self) -> usize {
        self.active.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_isolated(&self, person: usize) -> bool {
        self.active[person].is_some()
    }

    pub fn lockdown_on(&self) -> bool {
        self.lockdown_on
    }

    fn isolate(&mut self, network: &mut ContactNetwork, person: usize, day: u32, until: u32, reason: IsolationReason) -> Result<()> {
        if let Some(a) = &mut self.active[person] {
            a.negatives = 0;
            a.until = a.until.max(until);
            return Ok(());
        }
        if network.is_modified(person) {
            return Err(Error::PolicyConflict(format!(
                "person {person} already has modified contact rates from another intervention"
            )));
        }
        let r = self.policy.isolation_rate;
        network.apply_contact_bounds(&[person], r, r)?;
        self.ledger.push(IsolationRecord {
            node: person as u32,
            start_day: day,
            end_day: None,
            reason,
        });
        self.active[person] = Some(Active {
            record: self.ledger.len() - 1,
            negatives: 0,
            until,
        });
        Ok(())
    }

    fn release(&mut self, network: &mut ContactNetwork, person: usize, day: u32) -> Result<()> {
        if let Some(a) = self.active[person].take() {
            network.restore_contact_bounds(&[person])?;
            self.ledger[a.record].end_day = Some(day);
        }
        Ok(())
    }

    /// Update contact bounds for `day`. Returns whether any bounds changed.
    pub fn apply(&mut self, network: &mut ContactNetwork, users: &UserBase, day: u32, inputs: PolicyInputs<'_>) -> Result<bool> {
        if day < self.policy.start_day {
            return Ok(false);
        }
        match self.policy.kind {
            PolicyKind::None => Ok(false),
            PolicyKind::Lockdown => {
                if self.lockdown_on {
                    return Ok(false);
                }
                let community: Vec<usize> = network
                    .people()
                    .filter(|n| n.group == Group::Community)
                    .map(|n| n.id as usize)
                    .collect();
                if let Some(&p) = community.iter().find(|&&p| self.active[p].is_some()) {
                    return Err(Error::PolicyConflict(format!("person {p} is isolating when the lockdown starts")));
                }
                for &p in &community {
                    let min = network.nodes()[p].bounds.min;
                    network.apply_contact_bounds(&[p], min, self.policy.lockdown_max)?;
                }
                self.lockdown_on = true;
                Ok(true)
            }
            PolicyKind::DaIsolation => {
                let Some(flags) = inputs.flags else {
                    return Ok(false);
                };
                let mut changed = false;
                for (k, &u) in users.users().iter().enumerate() {
                    if flags[k] {
                        changed |= self.active[u].is_none();
                        self.isolate(network, u, day, u32::MAX, IsolationReason::Da)?;
                    } else if let Some(a) = &mut self.active[u] {
                        a.negatives += 1;
                        if a.negatives >= self.policy.release_days {
                            self.release(network, u, day)?;
                            changed = true;
                        }
                    }
                }
                Ok(changed)
            }
            PolicyKind::Tti => {
                let mut changed = false;
                for p in 0..self.active.len() {
                    if self.active[p].is_some_and(|a| day >= a.until) {
                        self.release(network, p, day)?;
                        changed = true;
                    }
                }
                let until = day + self.policy.tti_days;
                for &k in inputs.tti_targets {
                    let u = users.users()[k];
                    changed |= self.active[u].is_none();
                    self.isolate(network, u, day, until, IsolationReason::Tti)?;
                }
                Ok(changed)
            }
        }
    }
}

pub fn write_isolation_ledger(path: &Path, ledger: &[IsolationRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "node,start_day,end_day,reason")?;
    for r in ledger {
        let end = r.end_day.map(|d| d.to_string()).unwrap_or_default();
        let reason = match r.reason {
            IsolationReason::Da => "da",
            IsolationReason::Tti => "tti",
        };
        writeln!(out, "{},{},{end},{reason}", r.node, r.start_day)?;
    }
    out.flush()?;
    Ok(())
}
