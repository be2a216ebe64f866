//! Reduced master equations for per-node SEIHRD probabilities, integrated
//! for a whole ensemble at once.

mod contacts;
mod integrate;
mod rhs;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::Health;

pub use contacts::{ActivePair, ModelContacts};
pub use integrate::{integrate, IntegrationStats, IntegratorConfig};
pub use rhs::{closure_band_fraction, compute_closure, infectious_pressure, master_rhs, ClosureField, ClosureMode};

/// Learned per-node rates of one member, all in day⁻¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
}

impl NodeParams {
    pub fn as_array(&self) -> [f64; 4] {
        [self.beta, self.sigma, self.gamma, self.gamma_prime]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            beta: a[0],
            sigma: a[1],
            gamma: a[2],
            gamma_prime: a[3],
        }
    }
}

/// Fixed hospitalization and mortality fractions of a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcomes {
    pub h: f64,
    pub d: f64,
    pub d_prime: f64,
}

/// `M` members over `n` model nodes. States and parameters are stored
/// member-major: entry `m * n + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: usize,
    nodes: usize,
    states: Vec<[f64; 6]>,
    params: Vec<NodeParams>,
    outcomes: Vec<Outcomes>,
    /// `k_i^x ⟨w_i⟩` per node; multiplied by `P(t) η_i` in the equations.
    exogenous: Vec<f64>,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"EPRENS\0\0";
const SNAPSHOT_VERSION: u32 = 1;

impl Ensemble {
    /// All members fully susceptible, parameters zero until set.
    pub fn new(members: usize, outcomes: Vec<Outcomes>) -> Self {
        let nodes = outcomes.len();
        let mut s = [0.0; 6];
        s[Health::S.index()] = 1.0;
        Self {
            members,
            nodes,
            states: vec![s; members * nodes],
            params: vec![
                NodeParams {
                    beta: 0.0,
                    sigma: 0.0,
                    gamma: 0.0,
                    gamma_prime: 0.0
                };
                members * nodes
            ],
            outcomes,
            exogenous: vec![0.0; nodes],
        }
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn state(&self, m: usize, i: usize) -> &[f64; 6] {
        &self.states[m * self.nodes + i]
    }

    pub fn state_mut(&mut self, m: usize, i: usize) -> &mut [f64; 6] {
        &mut self.states[m * self.nodes + i]
    }

    pub fn member_states(&self, m: usize) -> &[[f64; 6]] {
        &self.states[m * self.nodes..(m + 1) * self.nodes]
    }

    pub fn states(&self) -> &[[f64; 6]] {
        &self.states
    }

    pub(crate) fn states_mut(&mut self) -> &mut [[f64; 6]] {
        &mut self.states
    }

    pub fn params(&self, m: usize, i: usize) -> &NodeParams {
        &self.params[m * self.nodes + i]
    }

    pub fn params_mut(&mut self, m: usize, i: usize) -> &mut NodeParams {
        &mut self.params[m * self.nodes + i]
    }

    pub fn member_params(&self, m: usize) -> &[NodeParams] {
        &self.params[m * self.nodes..(m + 1) * self.nodes]
    }

    pub fn outcomes(&self) -> &[Outcomes] {
        &self.outcomes
    }

    pub fn exogenous(&self) -> &[f64] {
        &self.exogenous
    }

    /// Set `k_i^x ⟨w_i⟩` for every node.
    pub fn set_exogenous(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.nodes {
            return Err(Error::Config(format!(
                "exogenous weights for {} nodes, ensemble has {}",
                weights.len(),
                self.nodes
            )));
        }
        self.exogenous = weights;
        Ok(())
    }

    /// Ensemble-mean probability vector of node `i`.
    pub fn mean_state(&self, i: usize) -> [f64; 6] {
        let mut out = [0.0; 6];
        for m in 0..self.members {
            for (o, v) in out.iter_mut().zip(self.state(m, i)) {
                *o += v;
            }
        }
        out.map(|v| v / self.members as f64)
    }

    pub fn mean_probability(&self, i: usize, h: Health) -> f64 {
        (0..self.members).map(|m| self.state(m, i)[h.index()]).sum::<f64>() / self.members as f64
    }

    /// Largest deviation of a per-node probability sum from one.
    pub fn max_conservation_error(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn clip_states(&mut self) {
        for s in &mut self.states {
            for v in s.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }

    /// `P = max(Σ_m Σ_i ⟨I_i⟩^m / (Ñ M), 1/Ñ)` with Ñ the number of model nodes.
    pub fn prevalence(&self) -> f64 {
        estimate_prevalence(self, self.nodes)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        bincode::serialize_into(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        let mut version = [0u8; 4];
        input
            .read_exact(&mut magic)
            .and_then(|_| input.read_exact(&mut version))
            .map_err(|_| Error::format(path, "truncated header"))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::format(path, "not an ensemble snapshot"));
        }
        let version = u32::from_le_bytes(version);
        if version != SNAPSHOT_VERSION {
            return Err(Error::format(path, format!("unsupported snapshot version {version}")));
        }
        Ok(bincode::deserialize_from(input)?)
    }

    /// Append `day,node,S,E,I,H,R,D` rows of ensemble means. `labels` maps
    /// model index to the node id written in the file.
    pub fn write_mean_rows(&self, out: &mut impl Write, day: u32, labels: &[usize]) -> Result<()> {
        for (i, label) in labels.iter().enumerate().take(self.nodes) {
            let s = self.mean_state(i);
            writeln!(
                out,
                "{day},{label},{},{},{},{},{},{}",
                s[0], s[1], s[2], s[3], s[4], s[5]
            )?;
        }
        Ok(())
    }
}

/// Prevalence estimate over an ensemble of `user_count` nodes, floored at
/// `1 / user_count`.
pub fn estimate_prevalence(ensemble: &Ensemble, user_count: usize) -> f64 {
    let total: f64 = ensemble.states.iter().map(|s| s[Health::I.index()]).sum();
    let n = user_count.max(1) as f64;
    (total / (n * ensemble.members.max(1) as f64)).max(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(n: usize) -> Vec<Outcomes> {
        vec![
            Outcomes {
                h: 0.01,
                d: 0.001,
                d_prime: 0.1
            };
            n
        ]
    }

    #[test]
    fn prevalence_floor_and_average() {
        let mut ens = Ensemble::new(3, outcomes(1000));
        assert_eq!(ens.prevalence(), 0.001);
        for s in ens.states_mut() {
            s[2] = 0.05;
            s[0] = 0.95;
        }
        assert!((ens.prevalence() - 0.05).abs() < 1e-15);
        // mixed: member 0 all 0.1, member 1 all 0.3, member 2 zero
        for i in 0..1000 {
            ens.state_mut(0, i)[2] = 0.1;
            ens.state_mut(1, i)[2] = 0.3;
            ens.state_mut(2, i)[2] = 0.0;
        }
        let direct = (0.1 * 1000.0 + 0.3 * 1000.0) / (3.0 * 1000.0);
        assert!((ens.prevalence() - direct).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut ens = Ensemble::new(2, outcomes(5));
        ens.state_mut(1, 3)[2] = 0.25;
        ens.params_mut(0, 4).beta = 11.0;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ens.bin");
        ens.write_snapshot(&p).unwrap();
        assert_eq!(Ensemble::read_snapshot(&p).unwrap(), ens);
        std::fs::write(&p, b"garbage!").unwrap();
        assert!(Ensemble::read_snapshot(&p).is_err());
    }

    #[test]
    fn mean_rows_format() {
        let mut ens = Ensemble::new(2, outcomes(2));
        ens.state_mut(0, 1)[0] = 0.5;
        ens.state_mut(0, 1)[2] = 0.5;
        let mut buf = Vec::new();
        ens.write_mean_rows(&mut buf, 7, &[10, 20]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "7,10,1,0,0,0,0,0\n7,20,0.75,0,0.25,0,0,0\n");
    }
}
