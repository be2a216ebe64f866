//! Daily contact schedules: one two-state birth–death process per edge.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::{node_activation_rate, pair_bounds};
use super::{ContactBounds, ContactNetwork};
use crate::error::Result;
use crate::rng::{Purpose, Seeds, SimRng};

/// Edges per random stream. Fixed so schedules do not depend on the number
/// of worker threads.
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Active intervals of every edge for one day, in absolute time (days).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSchedule {
    pub day: u32,
    pub mu: f64,
    offsets: Vec<u32>,
    intervals: Vec<Interval>,
}

impl EdgeSchedule {
    /// Every edge active for the whole of `day`.
    pub fn always_active(edge_count: usize, day: u32, mu: f64) -> Self {
        let d = day as f64;
        Self {
            day,
            mu,
            offsets: (0..=edge_count as u32).collect(),
            intervals: vec![Interval { start: d, end: d + 1.0 }; edge_count],
        }
    }

    /// Build from explicit per-edge interval lists (sorted, disjoint, inside `day`).
    pub fn from_intervals(day: u32, mu: f64, per_edge: Vec<Vec<Interval>>) -> Self {
        let mut offsets = Vec::with_capacity(per_edge.len() + 1);
        offsets.push(0u32);
        let mut intervals = Vec::new();
        for ivs in per_edge {
            intervals.extend(ivs);
            offsets.push(intervals.len() as u32);
        }
        Self {
            day,
            mu,
            offsets,
            intervals,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn intervals(&self, edge: usize) -> &[Interval] {
        &self.intervals[self.offsets[edge] as usize..self.offsets[edge + 1] as usize]
    }

    pub fn total_contacts(&self) -> usize {
        self.intervals.len()
    }

    /// Whether `edge` is active at absolute time `t`.
    pub fn is_active(&self, edge: usize, t: f64) -> bool {
        let iv = self.intervals(edge);
        let idx = iv.partition_point(|i| i.end <= t);
        idx < iv.len() && iv[idx].start <= t
    }

    /// Fraction of `[t0, t1]` during which `edge` is active.
    pub fn active_fraction(&self, edge: usize, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return if self.is_active(edge, t0) { 1.0 } else { 0.0 };
        }
        let iv = self.intervals(edge);
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

    /// Debug export: one row per interval.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "edge,start,end")?;
        for edge in 0..self.edge_count() {
            for iv in self.intervals(edge) {
                writeln!(out, "{edge},{},{}", iv.start, iv.end)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Sample the intervals of one edge over `[day, day + 1)`. The edge starts
/// inactive at midnight; activations come from thinning the diurnal rate
/// against its daily maximum, durations are exponential with rate `mu`, and a
/// contact still open at the next midnight is closed there.
pub fn sample_edge_day(
    bounds: &ContactBounds,
    k_hat: f64,
    mu: f64,
    day: f64,
    rng: &mut SimRng,
    out: &mut Vec<Interval>,
) {
    let peak = bounds.min.max(bounds.max) / k_hat;
    if !(peak > 0.0) {
        return;
    }
    let mut t = 0.0;
    loop {
        let wait: f64 = Exp1.sample(rng);
        t += wait / peak;
        if t >= 1.0 {
            return;
        }
        let rate = node_activation_rate(bounds, t, k_hat);
        if rng.random::<f64>() * peak >= rate {
            continue;
        }
        let dur: f64 = Exp1.sample(rng);
        let end = (t + dur / mu).min(1.0);
        out.push(Interval {
            start: day + t,
            end: day + end,
        });
        t = end;
        if t >= 1.0 {
            return;
        }
    }
}

/// Sample every edge's activity for `day` from the current contact bounds.
/// Edge chunks draw from independent streams and run in parallel.
pub fn sample_day_schedule(
    network: &ContactNetwork,
    day: u32,
    mu: f64,
    seeds: &Seeds,
) -> EdgeSchedule {
    let edges = network.edges();
    let nodes = network.nodes();
    let k_hat = network.mean_degree_community();
    let chunks: Vec<(Vec<u32>, Vec<Interval>)> = edges
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk, slice)| {
            let mut rng = seeds.rng(Purpose::Schedule, ((day as u64) << 32) | chunk as u64);
            let mut counts = Vec::with_capacity(slice.len());
            let mut intervals = Vec::new();
            for e in slice {
                let before = intervals.len();
                let bounds = pair_bounds(&nodes[e.a as usize].bounds, &nodes[e.b as usize].bounds);
                sample_edge_day(&bounds, k_hat, mu, day as f64, &mut rng, &mut intervals);
                counts.push((intervals.len() - before) as u32);
            }
            (counts, intervals)
        })
        .collect();

    let mut offsets = Vec::with_capacity(edges.len() + 1);
    offsets.push(0u32);
    let total: usize = chunks.iter().map(|c| c.1.len()).sum();
    let mut intervals = Vec::with_capacity(total);
    for (counts, ivs) in chunks {
        for c in counts {
            let last = *offsets.last().unwrap();
            offsets.push(last + c);
        }
        intervals.extend(ivs);
    }
    EdgeSchedule {
        day,
        mu,
        offsets,
        intervals,
    }
}
