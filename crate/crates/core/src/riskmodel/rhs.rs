//! Infectious pressure, closure coefficients and the master-equation RHS.

use serde::{Deserialize, Serialize};

use super::{ActivePair, Ensemble, NodeParams, Outcomes};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    /// Coefficients estimated from the ensemble each step.
    #[default]
    Ensemble,
    /// All coefficients one.
    MeanField,
}

/// `C_SI` and `C_SH` per active pair and direction. Entry `2k` is for
/// target `a`, source `b` of the `k`-th active pair; `2k + 1` the reverse.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClosureField {
    pub si: Vec<f64>,
    pub sh: Vec<f64>,
}

impl ClosureField {
    pub fn mean_field(active: usize) -> Self {
        Self {
            si: vec![1.0; 2 * active],
            sh: vec![1.0; 2 * active],
        }
    }
}

const S: usize = 0;
const E: usize = 1;
const I: usize = 2;
const H: usize = 3;

/// Ensemble closure `C = mean(S_i X_j) / (mean S_i · mean X_j)` for every
/// active pair and direction. Denominators below `floor` fall back to one.
pub fn compute_closure(ensemble: &Ensemble, active: &[ActivePair], mode: ClosureMode, floor: f64) -> ClosureField {
    if mode == ClosureMode::MeanField || ensemble.members() < 2 {
        return ClosureField::mean_field(active.len());
    }
    let n = ensemble.nodes();
    let mm = ensemble.members();
    let inv_m = 1.0 / mm as f64;
    let mut mean = vec![[0.0f64; 3]; n];
    for m in 0..mm {
        for (acc, s) in mean.iter_mut().zip(ensemble.member_states(m)) {
            acc[0] += s[S];
            acc[1] += s[I];
            acc[2] += s[H];
        }
    }
    for acc in &mut mean {
        for v in acc.iter_mut() {
            *v *= inv_m;
        }
    }
    let states = ensemble.states();
    let ratio = |num: f64, den: f64| if den < floor { 1.0 } else { num / den };
    let mut field = ClosureField {
        si: Vec::with_capacity(2 * active.len()),
        sh: Vec::with_capacity(2 * active.len()),
    };
    for p in active {
        let (a, b) = (p.a as usize, p.b as usize);
        let (mut sa_ib, mut sa_hb, mut sb_ia, mut sb_ha) = (0.0, 0.0, 0.0, 0.0);
        for m in 0..mm {
            let sa = &states[m * n + a];
            let sb = &states[m * n + b];
            sa_ib += sa[S] * sb[I];
            sa_hb += sa[S] * sb[H];
            sb_ia += sb[S] * sa[I];
            sb_ha += sb[S] * sa[H];
        }
        field.si.push(ratio(sa_ib * inv_m, mean[a][0] * mean[b][1]));
        field.si.push(ratio(sb_ia * inv_m, mean[b][0] * mean[a][1]));
        field.sh.push(ratio(sa_hb * inv_m, mean[a][0] * mean[b][2]));
        field.sh.push(ratio(sb_ha * inv_m, mean[b][0] * mean[a][2]));
    }
    field
}

/// Share of closure coefficients inside `[lo, hi]`, counting only those
/// whose mean-field denominator is at least `min_denominator`. `None` when
/// no coefficient qualifies.
pub fn closure_band_fraction(ensemble: &Ensemble, active: &[ActivePair], lo: f64, hi: f64, min_denominator: f64) -> Option<f64> {
    let field = compute_closure(ensemble, active, ClosureMode::Ensemble, min_denominator);
    let means: Vec<[f64; 6]> = (0..ensemble.nodes()).map(|i| ensemble.mean_state(i)).collect();
    let (mut total, mut inside) = (0usize, 0usize);
    for (k, p) in active.iter().enumerate() {
        let (a, b) = (p.a as usize, p.b as usize);
        let dens = [
            (means[a][S] * means[b][I], field.si[2 * k]),
            (means[b][S] * means[a][I], field.si[2 * k + 1]),
            (means[a][S] * means[b][H], field.sh[2 * k]),
            (means[b][S] * means[a][H], field.sh[2 * k + 1]),
        ];
        for (den, c) in dens {
            if den >= min_denominator {
                total += 1;
                inside += usize::from((lo..=hi).contains(&c));
            }
        }
    }
    (total > 0).then(|| inside as f64 / total as f64)
}

/// Network part of the infectious pressure, `ζ_i`, for one member's
/// states. The `⟨S_i⟩` of the joint probabilities cancels, so this is
/// well defined at `⟨S_i⟩ = 0`.
pub(crate) fn pressure_into(
    states: &[[f64; 6]],
    params: &[NodeParams],
    active: &[ActivePair],
    closure: &ClosureField,
    zeta: &mut [f64],
) {
    zeta.iter_mut().for_each(|z| *z = 0.0);
    for (k, p) in active.iter().enumerate() {
        let (a, b) = (p.a as usize, p.b as usize);
        let kappa = 0.5 * p.weight * (params[a].beta + params[b].beta);
        let (xa, xb) = (&states[a], &states[b]);
        zeta[a] += kappa * (xb[I] * closure.si[2 * k] + xb[H] * closure.sh[2 * k]);
        zeta[b] += kappa * (xa[I] * closure.si[2 * k + 1] + xa[H] * closure.sh[2 * k + 1]);
    }
}

/// `ζ_i` for member `m` of the ensemble.
pub fn infectious_pressure(ensemble: &Ensemble, m: usize, active: &[ActivePair], closure: &ClosureField) -> Vec<f64> {
    let mut zeta = vec![0.0; ensemble.nodes()];
    pressure_into(ensemble.member_states(m), ensemble.member_params(m), active, closure, &mut zeta);
    zeta
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn member_rhs(
    states: &[[f64; 6]],
    params: &[NodeParams],
    outcomes: &[Outcomes],
    exogenous: &[f64],
    active: &[ActivePair],
    closure: &ClosureField,
    prevalence: f64,
    zeta: &mut [f64],
    out: &mut [[f64; 6]],
) {
    pressure_into(states, params, active, closure, zeta);
    for i in 0..states.len() {
        let x = &states[i];
        let p = &params[i];
        let o = &outcomes[i];
        let force = (zeta[i] + exogenous[i] * prevalence * p.beta) * x[S];
        let latent = p.sigma * x[E];
        let leave_i = p.gamma * x[I];
        let leave_h = p.gamma_prime * x[H];
        out[i] = [
            -force,
            force - latent,
            latent - leave_i,
            o.h * leave_i - leave_h,
            (1.0 - o.h - o.d) * leave_i + (1.0 - o.d_prime) * leave_h,
            o.d * leave_i + o.d_prime * leave_h,
        ];
    }
}

/// Time derivative of every node's probability vector for member `m`.
pub fn master_rhs(
    ensemble: &Ensemble,
    m: usize,
    active: &[ActivePair],
    closure: &ClosureField,
    prevalence: f64,
) -> Vec<[f64; 6]> {
    let n = ensemble.nodes();
    let mut zeta = vec![0.0; n];
    let mut out = vec![[0.0; 6]; n];
    member_rhs(
        ensemble.member_states(m),
        ensemble.member_params(m),
        ensemble.outcomes(),
        ensemble.exogenous(),
        active,
        closure,
        prevalence,
        &mut zeta,
        &mut out,
    );
    out
}
