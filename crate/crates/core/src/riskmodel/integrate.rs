//! Embedded Runge–Kutta–Fehlberg 4(5) over the whole ensemble.
//!
//! All members share one adaptive step. Per attempted step the contact
//! weights are averaged over the step, and the closure and prevalence are
//! taken from the ensemble at the start of the step; the right-hand side is
//! then autonomous within the step. The fifth-order solution is propagated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rhs::member_rhs;
use super::{compute_closure, ClosureMode, Ensemble, ModelContacts};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step, days.
    pub max_step: f64,
    /// Smallest step before giving up, days.
    pub min_step: f64,
    pub closure: ClosureMode,
    pub closure_floor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-4,
            atol: 1e-6,
            max_step: 3.0 / 24.0,
            min_step: 1e-10,
            closure: ClosureMode::Ensemble,
            closure_floor: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
}

const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];

struct Workspace {
    k: [Vec<[f64; 6]>; 6],
    stage: Vec<[f64; 6]>,
    next: Vec<[f64; 6]>,
    zeta: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![[0.0; 6]; n]),
            stage: vec![[0.0; 6]; n],
            next: vec![[0.0; 6]; n],
            zeta: vec![0.0; n],
        }
    }
}

/// Integrate every member from `t0` to `t1` with contacts from `contacts`.
/// States are clipped to `[0, 1]` after each accepted step.
pub fn integrate(
    ensemble: &mut Ensemble,
    contacts: &ModelContacts,
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<IntegrationStats> {
    let mut stats = IntegrationStats::default();
    if !(t1 > t0) {
        return Ok(stats);
    }
    let n = ensemble.nodes();
    let members = ensemble.members();
    let mut t = t0;
    let mut h = config.max_step.min(t1 - t0);
    let mut active = Vec::new();
    let mut candidate: Vec<[f64; 6]> = vec![[0.0; 6]; n * members];
    let mut errors: Vec<(f64, usize)> = vec![(0.0, 0); members];

    while t < t1 {
        // Land exactly on t1 without leaving a sliver step.
        if t + h >= t1 || t1 - (t + h) < 1e-12 {
            h = t1 - t;
        }
        contacts.step_weights(t, t + h, &mut active);
        let closure = compute_closure(ensemble, &active, config.closure, config.closure_floor);
        let prevalence = ensemble.prevalence();

        {
            let states = ensemble.states();
            let params_all = &ensemble.params;
            let outcomes = &ensemble.outcomes;
            let exogenous = &ensemble.exogenous;
            let active = &active;
            let closure = &closure;
            candidate
                .par_chunks_mut(n.max(1))
                .zip(errors.par_iter_mut())
                .enumerate()
                .for_each_init(|| Workspace::new(n), |ws, (m, (out, err))| {
                    let y = &states[m * n..(m + 1) * n];
                    let params = &params_all[m * n..(m + 1) * n];
                    for s in 0..6 {
                        for i in 0..n {
                            let mut v = y[i];
                            for (j, a) in A[s].iter().enumerate().take(s) {
                                let kj = &ws.k[j][i];
                                for c in 0..6 {
                                    v[c] += h * a * kj[c];
                                }
                            }
                            ws.stage[i] = v;
                        }
                        member_rhs(
                            &ws.stage,
                            params,
                            outcomes,
                            exogenous,
                            active,
                            closure,
                            prevalence,
                            &mut ws.zeta,
                            &mut ws.k[s],
                        );
                    }
                    let mut worst = (0.0f64, 0usize);
                    for i in 0..n {
                        let mut y5 = y[i];
                        for c in 0..6 {
                            let mut d5 = 0.0;
                            let mut d4 = 0.0;
                            for s in 0..6 {
                                d5 += B5[s] * ws.k[s][i][c];
                                d4 += B4[s] * ws.k[s][i][c];
                            }
                            y5[c] += h * d5;
                            let e = (h * (d5 - d4)).abs();
                            let scale = config.atol + config.rtol * y[i][c].abs().max(y5[c].abs());
                            let ratio = e / scale;
                            if !(ratio <= worst.0) {
                                worst = (if ratio.is_nan() { f64::INFINITY } else { ratio }, i);
                            }
                        }
                        ws.next[i] = y5;
                    }
                    out.copy_from_slice(&ws.next);
                    *err = worst;
                });
        }

        let (worst_member, &(err, worst_node)) = errors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .expect("at least one member");
        if err <= 1.0 {
            if let Some(pos) = candidate.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite {
                    node: pos % n,
                    member: pos / n,
                    stage: "forecast",
                });
            }
            ensemble.states_mut().copy_from_slice(&candidate);
            ensemble.clip_states();
            t += h;
            stats.accepted += 1;
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * grow).min(config.max_step);
        } else {
            stats.rejected += 1;
            let shrink = if err.is_finite() { (0.9 * err.powf(-0.25)).clamp(0.1, 0.5) } else { 0.1 };
            h *= shrink;
            if h < config.min_step {
                return Err(Error::StepUnderflow {
                    t,
                    step: h,
                    node: worst_node,
                    member: worst_member,
                });
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskmodel::{NodeParams, Outcomes};

    fn single(sigma: f64, gamma: f64) -> Ensemble {
        let mut e = Ensemble::new(
            1,
            vec![Outcomes {
                h: 0.0,
                d: 0.0,
                d_prime: 0.0,
            }],
        );
        *e.params_mut(0, 0) = NodeParams {
            beta: 12.0,
            sigma,
            gamma,
            gamma_prime: 0.2,
        };
        e
    }

    #[test]
    fn linear_decay_matches_closed_form() {
        let sigma = 1.0 / 3.7;
        let gamma = 1.0 / 3.2;
        let mut e = single(sigma, gamma);
        *e.state_mut(0, 0) = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let t = 6.0;
        integrate(&mut e, &ModelContacts::new(), 0.0, t, &IntegratorConfig::default()).unwrap();
        let exact_e = (-sigma * t).exp();
        let exact_i = sigma / (gamma - sigma) * ((-sigma * t).exp() - (-gamma * t).exp());
        let s = e.state(0, 0);
        assert!((s[1] - exact_e).abs() / exact_e < 1e-6, "{} vs {exact_e}", s[1]);
        assert!((s[2] - exact_i).abs() / exact_i < 1e-6, "{} vs {exact_i}", s[2]);
    }

    #[test]
    fn steps_never_exceed_three_hours() {
        let mut e = single(0.2, 0.3);
        *e.state_mut(0, 0) = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let stats = integrate(&mut e, &ModelContacts::new(), 0.0, 1.0, &IntegratorConfig::default()).unwrap();
        assert!(stats.accepted >= 8);
    }

    #[test]
    fn pair_infection_matches_two_node_solution() {
        // Node 1 fixed infectious (γ = 0); node 0 susceptible with σ = 0:
        // S0(t) = exp(-κ t) for κ = β on a permanently active edge.
        let mut e = Ensemble::new(
            1,
            vec![
                Outcomes {
                    h: 0.0,
                    d: 0.0,
                    d_prime: 0.0
                };
                2
            ],
        );
        for i in 0..2 {
            *e.params_mut(0, i) = NodeParams {
                beta: 12.0,
                sigma: 0.0,
                gamma: 0.0,
                gamma_prime: 0.0,
            };
        }
        *e.state_mut(0, 1) = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let contacts = ModelContacts::always_on(&[(0, 1)], 0.0, 0.5);
        integrate(&mut e, &contacts, 0.0, 0.5, &IntegratorConfig::default()).unwrap();
        let exact = (-12.0f64 * 0.5).exp();
        assert!((e.state(0, 0)[0] - exact).abs() < 1e-6);
    }

    #[test]
    fn non_finite_parameters_are_reported() {
        let mut e = single(f64::NAN, 0.3);
        *e.state_mut(0, 0) = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let r = integrate(&mut e, &ModelContacts::new(), 0.0, 1.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::StepUnderflow { node: 0, member: 0, .. })), "{r:?}");
    }
}
