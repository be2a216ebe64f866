use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cumulative, Health, WorldState};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Transmission,
    Progression,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub node: usize,
    pub from: Health,
    pub to: Health,
    pub cause: Cause,
    /// Infecting node for transmissions.
    pub source: Option<usize>,
}

impl Transition {
    pub(crate) fn progression(time: f64, node: usize, from: Health, to: Health) -> Self {
        Self {
            time,
            node,
            from,
            to,
            cause: Cause::Progression,
            source: None,
        }
    }

    pub(crate) fn transmission(time: f64, node: usize, source: usize) -> Self {
        Self {
            time,
            node,
            from: Health::S,
            to: Health::E,
            cause: Cause::Transmission,
            source: Some(source),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Transition>,
}

impl EventLog {
    pub fn push(&mut self, t: Transition) {
        self.events.push(t);
    }

    pub fn events(&self) -> &[Transition] {
        &self.events
    }

    pub fn clear(&mut self) {
        self.events.clear();
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "node", "from", "to", "cause", "source"])?;
        for e in &self.events {
            let cause = match e.cause {
                Cause::Transmission => "transmission",
                Cause::Progression => "progression",
            };
            w.write_record([
                e.time.to_string(),
                e.node.to_string(),
                e.from.label().to_string(),
                e.to.label().to_string(),
                cause.to_string(),
                e.source.map_or_else(String::new, |s| s.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Raw daily counts from the surrogate world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyAggregate {
    pub day: u32,
    pub new_infections: u64,
    pub new_hospitalizations: u64,
    pub new_deaths: u64,
    /// Infectious (I) count at the end of the day.
    pub prevalence: usize,
    pub hospitalized: usize,
    pub cumulative_deaths: u64,
}

/// Turns cumulative counters into per-day increments.
#[derive(Clone, Debug, Default)]
pub struct DailyTracker {
    last: Cumulative,
    rows: Vec<DailyAggregate>,
}

impl DailyTracker {
    pub fn new(world: &WorldState) -> Self {
        Self {
            last: world.cumulative(),
            rows: Vec::new(),
        }
    }

    pub fn record(&mut self, day: u32, world: &WorldState) -> DailyAggregate {
        let c = world.cumulative();
        let row = DailyAggregate {
            day,
            new_infections: c.infections - self.last.infections,
            new_hospitalizations: c.hospitalizations - self.last.hospitalizations,
            new_deaths: c.deaths - self.last.deaths,
            prevalence: world.count(Health::I),
            hospitalized: world.count(Health::H),
            cumulative_deaths: c.deaths,
        };
        self.last = c;
        self.rows.push(row);
        row
    }

    pub fn rows(&self) -> &[DailyAggregate] {
        &self.rows
    }
}

/// Daily aggregates scaled per 100,000 people.
pub fn write_daily_csv(path: &Path, rows: &[DailyAggregate], population: usize) -> Result<()> {
    let scale = 1e5 / population as f64;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "day",
        "new_infections",
        "new_hospitalizations",
        "new_deaths",
        "prevalence",
        "hospitalized",
        "cumulative_deaths",
    ])?;
    for r in rows {
        w.write_record([
            r.day.to_string(),
            (r.new_infections as f64 * scale).to_string(),
            (r.new_hospitalizations as f64 * scale).to_string(),
            (r.new_deaths as f64 * scale).to_string(),
            (r.prevalence as f64 * scale).to_string(),
            (r.hospitalized as f64 * scale).to_string(),
            (r.cumulative_deaths as f64 * scale).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
