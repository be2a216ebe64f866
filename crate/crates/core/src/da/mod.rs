//! Multi-pass ensemble adjustment Kalman filtering over a sliding window.
//!
//! Each cycle forecasts the ensemble across the window, then for every data
//! class (sensors, tests, status; lowest fidelity first) updates states and
//! parameters at the window start from the mismatch between trajectories and
//! data, and forecasts again. Updates are localized to single nodes.

mod eakf;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::Health;
use crate::observations::{Fidelity, ObservationRecord};
use crate::riskmodel::{integrate, Ensemble, IntegratorConfig, ModelContacts, NodeParams, Outcomes};
use crate::rng::{Purpose, Seeds, SimRng};

pub use eakf::{
    coupled_covariance, eakf_joint, eakf_joint_coupled, Direction, regularization_amount, regularized_covariance, sample_covariance,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflationPlacement {
    /// Inflate the window-start state once, right before the last update.
    #[default]
    BeforeFinalUpdate,
    /// Inflate once, right before the first update of the cycle.
    BeforeFirstUpdate,
    Off,
}

/// How the covariance regularization enters the per-node update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationForm {
    /// `α I` on the updated states, with predicted observations loading on
    /// the state they observe and the probability sum regularized on its own.
    #[default]
    Identity,
    /// Each perturbation of a component is balanced by the other updated
    /// components in proportion to their ensemble mean, so it moves
    /// probability instead of creating it.
    MassConserving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DAConfig {
    /// Window length Δ, days.
    pub window: f64,
    pub members: usize,
    /// Regularization factors per pass; unset means `5/M` for sensors and
    /// tests and `1/M` for status data.
    pub delta_sensors: Option<f64>,
    pub delta_tests: Option<f64>,
    pub delta_status: Option<f64>,
    pub regularize: bool,
    pub regularization: RegularizationForm,
    pub inflation: InflationPlacement,
    pub inflation_a: f64,
    pub inflation_b: f64,
    pub spin_up_days: u32,
    /// Noise std of the per-node probability-sum pseudo-observation.
    pub conservation_std: f64,
    /// Floor on observation noise std; status data carry zero error.
    pub min_obs_std: f64,
    pub learn_parameters: bool,
    /// Trajectory snapshots per window, used to interpolate observation times.
    pub substeps: usize,
}

impl Default for DAConfig {
    fn default() -> Self {
        Self {
            window: 1.0,
            members: 100,
            delta_sensors: None,
            delta_tests: None,
            delta_status: None,
            regularize: true,
            regularization: RegularizationForm::default(),
            inflation: InflationPlacement::BeforeFinalUpdate,
            inflation_a: 3.0,
            inflation_b: 0.1,
            spin_up_days: 8,
            conservation_std: 1e-2,
            min_obs_std: 1e-2,
            learn_parameters: true,
            substeps: 1,
        }
    }
}

impl DAConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.members < 2 {
            return bad(format!("ensemble size {} must be at least 2", self.members));
        }
        if !(self.window > 0.0) {
            return bad(format!("window {} must be positive", self.window));
        }
        for d in [self.delta_sensors, self.delta_tests, self.delta_status].into_iter().flatten() {
            if !(d >= 0.0) {
                return bad(format!("regularization factor {d} must be non-negative"));
            }
        }
        if !(self.inflation_a >= 1.0) || !(self.inflation_b >= 0.0) {
            return bad(format!(
                "inflation needs a >= 1 and b >= 0, got a = {}, b = {}",
                self.inflation_a, self.inflation_b
            ));
        }
        if !(self.conservation_std > 0.0) || !(self.min_obs_std >= 0.0) {
            return bad("conservation std must be positive and the observation floor non-negative".into());
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        Ok(())
    }

    pub fn delta(&self, fidelity: Fidelity) -> f64 {
        let m = self.members as f64;
        match fidelity {
            Fidelity::Low => self.delta_sensors.unwrap_or(5.0 / m),
            Fidelity::Medium => self.delta_tests.unwrap_or(5.0 / m),
            Fidelity::High => self.delta_status.unwrap_or(1.0 / m),
        }
    }
}

/// Prior distributions of the learned per-node rates and the initial
/// infectious fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub beta_mean: f64,
    pub beta_std: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Minimum latent period, days, plus a gamma-distributed excess.
    pub latent_min: f64,
    pub latent_shape: f64,
    pub latent_scale: f64,
    pub infectious_min: f64,
    pub infectious_shape: f64,
    pub infectious_scale: f64,
    pub hospital_min: f64,
    pub hospital_shape: f64,
    pub hospital_scale: f64,
    pub initial_alpha: f64,
    pub initial_beta: f64,
    /// Smallest rate allowed after an update, day⁻¹.
    pub rate_floor: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_mean: 12.0,
            beta_std: 3.0,
            beta_min: 1.0,
            beta_max: 20.0,
            latent_min: 1.0,
            latent_shape: 1.35,
            latent_scale: 2.0,
            infectious_min: 1.0,
            infectious_shape: 1.1,
            infectious_scale: 2.0,
            hospital_min: 1.0,
            hospital_shape: 1.0,
            hospital_scale: 4.0,
            initial_alpha: 0.0016,
            initial_beta: 1.0,
            rate_floor: 1e-3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("invalid prior: {e}"))
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.samplers().map(|_| ())
    }

    fn samplers(&self) -> Result<PriorSamplers> {
        if !(self.beta_min < self.beta_max) || !(self.beta_mean >= self.beta_min && self.beta_mean <= self.beta_max) {
            return Err(Error::Config(format!(
                "transmission prior mean {} outside [{}, {}]",
                self.beta_mean, self.beta_min, self.beta_max
            )));
        }
        for m in [self.latent_min, self.infectious_min, self.hospital_min] {
            if !(m > 0.0) {
                return Err(Error::Config(format!("minimum period {m} must be positive")));
            }
        }
        Ok(PriorSamplers {
            beta: Normal::new(self.beta_mean, self.beta_std).map_err(config_err)?,
            latent: Gamma::new(self.latent_shape, self.latent_scale).map_err(config_err)?,
            infectious: Gamma::new(self.infectious_shape, self.infectious_scale).map_err(config_err)?,
            hospital: Gamma::new(self.hospital_shape, self.hospital_scale).map_err(config_err)?,
            initial: Beta::new(self.initial_alpha, self.initial_beta).map_err(config_err)?,
        })
    }

    /// Clamp rates to the prior supports.
    pub fn clip(&self, p: &mut NodeParams) {
        let clamp = |v: f64, lo: f64, hi: f64| if v.is_nan() { lo } else { v.clamp(lo, hi) };
        p.beta = clamp(p.beta, self.beta_min, self.beta_max);
        p.sigma = clamp(p.sigma, self.rate_floor, 1.0 / self.latent_min);
        p.gamma = clamp(p.gamma, self.rate_floor, 1.0 / self.infectious_min);
        p.gamma_prime = clamp(p.gamma_prime, self.rate_floor, 1.0 / self.hospital_min);
    }

    pub fn mean_initial_fraction(&self) -> f64 {
        self.initial_alpha / (self.initial_alpha + self.initial_beta)
    }
}

struct PriorSamplers {
    beta: Normal<f64>,
    latent: Gamma<f64>,
    infectious: Gamma<f64>,
    hospital: Gamma<f64>,
    initial: Beta<f64>,
}

impl PriorSamplers {
    fn params(&self, prior: &PriorSpec, rng: &mut SimRng) -> NodeParams {
        let beta = loop {
            let b = self.beta.sample(rng);
            if b >= prior.beta_min && b <= prior.beta_max {
                break b;
            }
        };
        NodeParams {
            beta,
            sigma: 1.0 / (prior.latent_min + self.latent.sample(rng)),
            gamma: 1.0 / (prior.infectious_min + self.infectious.sample(rng)),
            gamma_prime: 1.0 / (prior.hospital_min + self.hospital.sample(rng)),
        }
    }
}

/// Draw a fresh rate set from the prior.
pub fn sample_params(prior: &PriorSpec, rng: &mut SimRng) -> Result<NodeParams> {
    Ok(prior.samplers()?.params(prior, rng))
}

/// Ensemble with parameters from the prior and, per member, a beta-drawn
/// fraction of nodes set infectious (rounded stochastically), the rest
/// susceptible.
pub fn init_ensemble(outcomes: Vec<Outcomes>, prior: &PriorSpec, members: usize, seeds: &Seeds) -> Result<Ensemble> {
    if members < 2 {
        return Err(Error::Config(format!("ensemble size {members} must be at least 2")));
    }
    let samplers = prior.samplers()?;
    let n = outcomes.len();
    let mut ens = Ensemble::new(members, outcomes);
    for m in 0..members {
        let mut rng = seeds.rng(Purpose::Ensemble, m as u64);
        for i in 0..n {
            *ens.params_mut(m, i) = samplers.params(prior, &mut rng);
        }
        let frac = samplers.initial.sample(&mut rng);
        let exact = frac * n as f64;
        let mut k = exact.floor() as usize;
        if rng.random::<f64>() < exact - exact.floor() {
            k += 1;
        }
        for i in rand::seq::index::sample(&mut rng, n, k.min(n)) {
            *ens.state_mut(m, i) = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        }
    }
    Ok(ens)
}

/// `x ↦ a (x - x̄) + x̄ + N(0, (b x̄)²)` on a set of samples, clipped to `[0, 1]`
/// when `clip` is set.
pub fn inflate_samples(xs: &mut [f64], a: f64, b: f64, clip: bool, rng: &mut SimRng) {
    if xs.is_empty() {
        return;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    for x in xs.iter_mut() {
        let z: f64 = if b > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        *x = a * (*x - mean) + mean + b * mean * z;
        if clip {
            *x = x.clamp(0.0, 1.0);
        }
    }
}

/// Inflate every state component of the listed nodes across the ensemble.
pub fn inflate(ensemble: &mut Ensemble, nodes: &[usize], a: f64, b: f64, rng: &mut SimRng) {
    let members = ensemble.members();
    let mut buf = vec![0.0; members];
    for &i in nodes {
        for c in 0..6 {
            for (m, v) in buf.iter_mut().enumerate() {
                *v = ensemble.state(m, i)[c];
            }
            inflate_samples(&mut buf, a, b, true, rng);
            for (m, v) in buf.iter().enumerate() {
                ensemble.state_mut(m, i)[c] = *v;
            }
        }
    }
}

/// Ensemble states on a time grid across one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    nodes: usize,
    snapshots: Vec<Vec<[f64; 6]>>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshot(&self, k: usize) -> &[[f64; 6]] {
        &self.snapshots[k]
    }

    /// Value of component `c` of node `i` in member `m` at time `t`, linear
    /// between snapshots and held constant outside the grid.
    pub fn value(&self, m: usize, i: usize, c: usize, t: f64) -> f64 {
        let at = |k: usize| self.snapshots[k][m * self.nodes + i][c];
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return at(0);
        }
        if t >= self.times[last] {
            return at(last);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * at(k) + w * at(k + 1)
    }
}

/// Integrate from `t0` to `t1`, storing `substeps + 1` snapshots.
pub fn forecast(
    ensemble: &mut Ensemble,
    contacts: &ModelContacts,
    t0: f64,
    t1: f64,
    substeps: usize,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let substeps = substeps.max(1);
    let mut traj = Trajectory {
        times: vec![t0],
        nodes: ensemble.nodes(),
        snapshots: vec![ensemble.states().to_vec()],
    };
    for k in 1..=substeps {
        let a = t0 + (t1 - t0) * (k - 1) as f64 / substeps as f64;
        let b = if k == substeps {
            t1
        } else {
            t0 + (t1 - t0) * k as f64 / substeps as f64
        };
        integrate(ensemble, contacts, a, b, config)?;
        traj.times.push(b);
        traj.snapshots.push(ensemble.states().to_vec());
    }
    Ok(traj)
}

/// State components an update may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSet {
    All,
    /// S, E, I and R only.
    Seir,
    None,
}

impl StateSet {
    fn components(self) -> &'static [usize] {
        match self {
            StateSet::All => &[0, 1, 2, 3, 4, 5],
            StateSet::Seir => &[0, 1, 2, 4],
            StateSet::None => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassConfig {
    pub states: StateSet,
    pub params: bool,
    pub delta: f64,
    pub regularize: bool,
    pub form: RegularizationForm,
    pub conservation_std: f64,
    pub min_obs_std: f64,
}

impl PassConfig {
    /// Pass settings for one data class under `config`.
    pub fn for_fidelity(config: &DAConfig, fidelity: Fidelity) -> Self {
        Self {
            states: if fidelity == Fidelity::High {
                StateSet::Seir
            } else {
                StateSet::All
            },
            params: config.learn_parameters,
            delta: config.delta(fidelity),
            regularize: config.regularize,
            form: config.regularization,
            conservation_std: config.conservation_std,
            min_obs_std: config.min_obs_std,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct UpdateSummary {
    pub observations: usize,
    pub nodes: usize,
    /// Mean absolute change of updated state entries.
    pub state_change: f64,
    /// Mean absolute relative change of updated rates.
    pub param_change: f64,
    pub mean_regularization: f64,
}

struct NodeResult {
    node: usize,
    states: Vec<[f64; 6]>,
    params: Vec<NodeParams>,
    alpha: f64,
}

/// Regularization directions for one node. Rows `0..comps.len()` hold the
/// updated components, observation `k` sits in row `obs_row + k`, and the
/// probability sum is the last row.
fn regularization_directions(
    form: RegularizationForm,
    comps: &[usize],
    obs_row: usize,
    observed: &[usize],
    mean: &[f64; 6],
) -> Vec<Direction> {
    let sum_row = obs_row + observed.len();
    let load = |dir: &mut Direction, c: usize, w: f64| {
        if let Some(row) = comps.iter().position(|&x| x == c) {
            dir.push((row, w));
        }
        dir.extend(observed.iter().enumerate().filter(|(_, &o)| o == c).map(|(k, _)| (obs_row + k, w)));
    };
    let mut out: Vec<Direction> = Vec::with_capacity(comps.len() + observed.len() + 1);
    for &c in comps {
        let mut dir = Vec::new();
        load(&mut dir, c, 1.0);
        if form == RegularizationForm::MassConserving {
            let others: Vec<usize> = comps.iter().copied().filter(|&x| x != c).collect();
            let total: f64 = others.iter().map(|&x| mean[x].max(0.0)).sum();
            for &x in &others {
                let w = if total > 0.0 {
                    mean[x].max(0.0) / total
                } else {
                    1.0 / others.len() as f64
                };
                load(&mut dir, x, -w);
            }
        }
        out.push(dir);
    }
    for (k, o) in observed.iter().enumerate() {
        if !comps.contains(o) {
            out.push(vec![(obs_row + k, 1.0)]);
        }
    }
    if form == RegularizationForm::Identity {
        out.push(vec![(sum_row, 1.0)]);
    }
    out
}

/// Localized update of window-start states and rates. `ensemble` holds the
/// states at the window start; `trajectory` is the forecast they produced.
/// Observations of people outside `index` are ignored.
pub fn eakf_update(
    ensemble: &mut Ensemble,
    trajectory: &Trajectory,
    observations: &[ObservationRecord],
    index: &[Option<u32>],
    pass: &PassConfig,
    prior: &PriorSpec,
) -> Result<UpdateSummary> {
    let mut by_node: Vec<(usize, Vec<&ObservationRecord>)> = Vec::new();
    {
        let mut mapped: Vec<(usize, &ObservationRecord)> = observations
            .iter()
            .filter_map(|o| index.get(o.node as usize).copied().flatten().map(|i| (i as usize, o)))
            .collect();
        mapped.sort_by_key(|(i, _)| *i);
        for (i, o) in mapped {
            match by_node.last_mut() {
                Some((j, list)) if *j == i => list.push(o),
                _ => by_node.push((i, vec![o])),
            }
        }
    }
    let members = ensemble.members();
    let comps = pass.states.components();
    let nq = comps.len() + if pass.params { 4 } else { 0 };
    let ens = &*ensemble;

    let results: Vec<NodeResult> = by_node
        .par_iter()
        .map(|(i, obs)| {
            let i = *i;
            let p = obs.len() + 1;
            let d = nq + p;
            let mut z = nalgebra::DMatrix::zeros(d, members);
            for m in 0..members {
                let s = ens.state(m, i);
                let mut row = 0;
                for &c in comps {
                    z[(row, m)] = s[c];
                    row += 1;
                }
                if pass.params {
                    for v in ens.params(m, i).as_array() {
                        z[(row, m)] = v;
                        row += 1;
                    }
                }
                for o in obs {
                    z[(row, m)] = trajectory.value(m, i, o.kind.observed_state().index(), o.time);
                    row += 1;
                }
                z[(row, m)] = s.iter().sum();
            }
            let mut y: Vec<f64> = obs.iter().map(|o| o.value).collect();
            let mut r: Vec<f64> = obs.iter().map(|o| o.error_rate.max(pass.min_obs_std).powi(2)).collect();
            let delta_min =
                obs.iter().map(|o| o.error_rate.max(pass.min_obs_std)).sum::<f64>() / obs.len() as f64;
            y.push(1.0);
            r.push(pass.conservation_std.powi(2));
            let mut mask = vec![true; d];
            if pass.params {
                mask[comps.len()..nq].iter_mut().for_each(|v| *v = false);
            }
            let (delta, delta_min) = if pass.regularize { (pass.delta, delta_min) } else { (0.0, 0.0) };
            let observed: Vec<usize> = obs.iter().map(|o| o.kind.observed_state().index()).collect();
            let directions = regularization_directions(pass.form, comps, nq, &observed, &ens.mean_state(i));
            let alpha = eakf_joint_coupled(&mut z, &y, &r, &mask, &directions, delta, delta_min);

            let mut states = Vec::with_capacity(members);
            let mut params = Vec::with_capacity(members);
            for m in 0..members {
                let mut s = *ens.state(m, i);
                for (row, &c) in comps.iter().enumerate() {
                    s[c] = z[(row, m)].clamp(0.0, 1.0);
                }
                let mut q = *ens.params(m, i);
                if pass.params {
                    let base = comps.len();
                    q = NodeParams::from_array(std::array::from_fn(|k| z[(base + k, m)]));
                    prior.clip(&mut q);
                }
                if s.iter().any(|v| !v.is_finite()) || q.as_array().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        node: i,
                        member: m,
                        stage: "update",
                    });
                }
                states.push(s);
                params.push(q);
            }
            Ok(NodeResult {
                node: i,
                states,
                params,
                alpha,
            })
        })
        .collect::<Result<_>>()?;

    let mut summary = UpdateSummary {
        observations: by_node.iter().map(|(_, o)| o.len()).sum(),
        nodes: results.len(),
        ..Default::default()
    };
    let (mut ds, mut ns, mut dp, mut np) = (0.0, 0usize, 0.0, 0usize);
    for res in results {
        summary.mean_regularization += res.alpha;
        for m in 0..members {
            let old = *ensemble.state(m, res.node);
            for &c in comps {
                ds += (res.states[m][c] - old[c]).abs();
                ns += 1;
            }
            *ensemble.state_mut(m, res.node) = res.states[m];
            if pass.params {
                let old = ensemble.params(m, res.node).as_array();
                for (o, n) in old.iter().zip(res.params[m].as_array()) {
                    dp += ((n - o) / o.abs().max(1e-12)).abs();
                    np += 1;
                }
                *ensemble.params_mut(m, res.node) = res.params[m];
            }
        }
    }
    if summary.nodes > 0 {
        summary.mean_regularization /= summary.nodes as f64;
    }
    summary.state_change = if ns > 0 { ds / ns as f64 } else { 0.0 };
    summary.param_change = if np > 0 { dp / np as f64 } else { 0.0 };
    Ok(summary)
}

/// Update only the rates from the observations, leaving states untouched.
pub fn learn_parameters(
    ensemble: &mut Ensemble,
    trajectory: &Trajectory,
    observations: &[ObservationRecord],
    index: &[Option<u32>],
    config: &DAConfig,
    fidelity: Fidelity,
    prior: &PriorSpec,
) -> Result<UpdateSummary> {
    let pass = PassConfig {
        states: StateSet::None,
        params: true,
        ..PassConfig::for_fidelity(config, fidelity)
    };
    eakf_update(ensemble, trajectory, observations, index, &pass, prior)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PassDiagnostics {
    pub fidelity: Option<Fidelity>,
    pub summary: UpdateSummary,
}

/// One row per cycle and pass in the diagnostics file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CycleDiagnostics {
    pub day: u32,
    pub passes: Vec<PassDiagnostics>,
    /// Mean over nodes of the ensemble std of `⟨I⟩` at the window end.
    pub spread_i: f64,
    /// Mean `|Σ - 1|` over nodes and members before and after the cycle.
    pub conservation_before: f64,
    pub conservation_after: f64,
}

fn mean_conservation(ensemble: &Ensemble) -> f64 {
    let s = ensemble.states();
    if s.is_empty() {
        return 0.0;
    }
    s.iter().map(|x| (x.iter().sum::<f64>() - 1.0).abs()).sum::<f64>() / s.len() as f64
}

fn mean_spread_i(ensemble: &Ensemble) -> f64 {
    let (mm, n) = (ensemble.members(), ensemble.nodes());
    if n == 0 || mm < 2 {
        return 0.0;
    }
    let c = Health::I.index();
    let mut total = 0.0;
    for i in 0..n {
        let mean = ensemble.mean_probability(i, Health::I);
        let var = (0..mm).map(|m| (ensemble.state(m, i)[c] - mean).powi(2)).sum::<f64>() / (mm - 1) as f64;
        total += var.sqrt();
    }
    total / n as f64
}

const PASS_ORDER: [Fidelity; 3] = [Fidelity::Low, Fidelity::Medium, Fidelity::High];

/// One update-forecast cycle over `[t0, t0 + window]`. On entry the ensemble
/// is at `t0`; on exit it is at the window end. Observations outside the
/// window are ignored; a window without data is a pure forecast.
#[allow(clippy::too_many_arguments)]
pub fn da_cycle(
    ensemble: &mut Ensemble,
    contacts: &ModelContacts,
    t0: f64,
    observations: &[ObservationRecord],
    index: &[Option<u32>],
    config: &DAConfig,
    prior: &PriorSpec,
    integrator: &IntegratorConfig,
    day: u32,
    seeds: &Seeds,
) -> Result<CycleDiagnostics> {
    let t1 = t0 + config.window;
    let mut diag = CycleDiagnostics {
        day,
        conservation_before: mean_conservation(ensemble),
        ..Default::default()
    };
    let eps = 1e-9;
    let in_window: Vec<&ObservationRecord> = observations
        .iter()
        .filter(|o| o.time >= t0 - eps && o.time <= t1 + eps)
        .collect();
    let passes: Vec<(Fidelity, Vec<ObservationRecord>)> = PASS_ORDER
        .iter()
        .map(|&f| (f, in_window.iter().filter(|o| o.fidelity == f).map(|o| **o).collect::<Vec<_>>()))
        .filter(|(_, obs)| !obs.is_empty())
        .collect();

    let mut start = ensemble.states().to_vec();
    let mut traj = forecast(ensemble, contacts, t0, t1, config.substeps, integrator)?;
    // Status reports reach every user daily and say little about S, E, I
    // and R, so only people with test or sensor data count as assimilated.
    let mut assimilated: Vec<usize> = passes
        .iter()
        .filter(|(f, _)| *f != Fidelity::High)
        .flat_map(|(_, obs)| obs.iter().filter_map(|o| index.get(o.node as usize).copied().flatten()))
        .map(|i| i as usize)
        .collect();
    assimilated.sort_unstable();
    assimilated.dedup();
    for (k, (fidelity, obs)) in passes.iter().enumerate() {
        ensemble.states_mut().copy_from_slice(&start);
        let inflate_now = match config.inflation {
            InflationPlacement::BeforeFinalUpdate => k + 1 == passes.len(),
            InflationPlacement::BeforeFirstUpdate => k == 0,
            InflationPlacement::Off => false,
        };
        if inflate_now {
            let mut rng = seeds.rng(Purpose::Inflation, u64::from(day));
            inflate(ensemble, &assimilated, config.inflation_a, config.inflation_b, &mut rng);
        }
        let pass = PassConfig::for_fidelity(config, *fidelity);
        let summary = eakf_update(ensemble, &traj, obs, index, &pass, prior)?;
        diag.passes.push(PassDiagnostics {
            fidelity: Some(*fidelity),
            summary,
        });
        start.copy_from_slice(ensemble.states());
        traj = forecast(ensemble, contacts, t0, t1, config.substeps, integrator)?;
    }
    diag.spread_i = mean_spread_i(ensemble);
    diag.conservation_after = mean_conservation(ensemble);
    Ok(diag)
}

pub fn write_diagnostics_csv(out: &mut impl Write, rows: &[CycleDiagnostics], header: bool) -> Result<()> {
    if header {
        writeln!(
            out,
            "day,pass,observations,nodes,state_change,param_change,regularization,spread_i,conservation_before,conservation_after"
        )?;
    }
    for c in rows {
        let tail = format!("{},{},{}", c.spread_i, c.conservation_before, c.conservation_after);
        if c.passes.is_empty() {
            writeln!(out, "{},none,0,0,0,0,0,{tail}", c.day)?;
        }
        for p in &c.passes {
            let name = match p.fidelity {
                Some(Fidelity::Low) => "sensors",
                Some(Fidelity::Medium) => "tests",
                Some(Fidelity::High) => "status",
                None => "none",
            };
            let s = &p.summary;
            writeln!(
                out,
                "{},{name},{},{},{},{},{},{tail}",
                c.day, s.observations, s.nodes, s.state_change, s.param_change, s.mean_regularization
            )?;
        }
    }
    Ok(())
}

pub fn write_diagnostics_file(path: &Path, rows: &[CycleDiagnostics]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_diagnostics_csv(&mut f, rows, true)?;
    f.flush()?;
    Ok(())
}
