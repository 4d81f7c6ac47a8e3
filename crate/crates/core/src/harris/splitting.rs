use serde::{Deserialize, Serialize};

use super::{envelope_integrals, HarrisError};
use crate::model::{CoefficientModel, ModelConstants};
use crate::semiflow::Propagator;

/// Number of periods after which the pure transport part has lost a factor `κ^k/e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingDiagnostic {
    pub log_kappa: f64,
    pub k_max: usize,
    /// Least admissible number of periods, if any up to `k_max`.
    pub k: Option<usize>,
    /// `sup_x ∫_0^{kT} ā(X_{s,0}(x)) ds` for `k = 1..` up to the answer.
    pub bounds: Vec<f64>,
    pub omega: f64,
    /// `κ^k (1 − e^{−1}) e^{−ωkT} / q̂`.
    pub delta: Option<f64>,
    /// Largest transport-only column sum over `kT` on the grid.
    pub measured_gain: Option<f64>,
    /// `measured_gain ≤ exp(bound)`.
    pub consistent: Option<bool>,
}

pub fn splitting_diagnostic(
    model: &CoefficientModel,
    constants: &ModelConstants,
    propagator: &Propagator,
    log_kappa: f64,
    k_max: usize,
) -> Result<SplittingDiagnostic, HarrisError> {
    if !(log_kappa < 0.0) {
        return Err(HarrisError::InvalidKappa(log_kappa));
    }
    let grid = propagator.grid();
    let period = propagator.period();
    let m = propagator.steps_per_period();
    let omega = 1f64.max(constants.q_hat + constants.a_sup);
    let nodes = grid.nodes();

    let mut bounds = Vec::new();
    let mut k = None;
    for kk in 1..=k_max {
        let mut sup = f64::NEG_INFINITY;
        for &x in &nodes {
            let integrals = envelope_integrals(model, constants, x, kk as f64 * period, kk * m)?;
            sup = sup.max(integrals[kk * m]);
        }
        bounds.push(sup);
        if sup <= kk as f64 * log_kappa - 1.0 {
            k = Some(kk);
            break;
        }
    }

    let (delta, measured_gain, consistent) = match k {
        Some(k) => {
            let kt = k as f64 * period;
            let delta = (k as f64 * log_kappa).exp() * (1.0 - (-1f64).exp()) * (-omega * kt).exp() / constants.q_hat;
            let gain = propagator.transport_column_sums(k * m).into_iter().fold(0.0, f64::max);
            let bound = bounds[k - 1];
            (Some(delta), Some(gain), Some(gain <= bound.exp() * (1.0 + 1e-9)))
        }
        None => (None, None, None),
    };
    Ok(SplittingDiagnostic {
        log_kappa,
        k_max,
        k,
        bounds,
        omega,
        delta,
        measured_gain,
        consistent,
    })
}
