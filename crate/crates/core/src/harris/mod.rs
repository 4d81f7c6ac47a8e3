//! Quantitative certificates: sub-eigenfunction, Lyapunov pair, minorization, Harris
//! contraction factor and the transport splitting diagnostic.

mod certificate;
mod lyapunov;
mod minorization;
mod splitting;
mod sub_eigen;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flow::FlowError;
use crate::model::{norm, CoefficientModel, ModelConstants, Point};
use crate::semiflow::{GridField, SemiflowError, TruncatedBox};
use crate::spectral::SpectralError;

pub use certificate::{harris_certificate, phi_envelope, zeta_from_constants, HarrisCertificate, TailSource, ZetaChoice};
pub use lyapunov::{lyapunov_pair, LyapunovPair};
pub use minorization::{epsilon_r, lens_volume, minorization, MinorizationReport};
pub use splitting::{splitting_diagnostic, SplittingDiagnostic};
pub use sub_eigen::{sub_eigen_certificate, SubEigenCertificate};

/// Number of random fields drawn by the empirical checks.
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum HarrisError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Semiflow(#[from] SemiflowError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("no admissible r in ({r1}, {r0}) at this resolution (q0 = {q0})")]
    NoAdmissibleRadius { r0: f64, r1: f64, q0: f64 },
    #[error("strong positivity not verified: inf q on the band is {0}")]
    NotStrong(f64),
    #[error("minorization chain needs more than {0} sub-steps")]
    ChainTooLong(usize),
    #[error("kappa must lie in (0, 1), got log kappa = {0}")]
    InvalidKappa(f64),
    #[error("invalid interval [{s}, {t}]")]
    InvalidInterval { s: f64, t: f64 },
    #[error("invalid radius {0}")]
    InvalidRadius(f64),
}

/// Upper bound of `a` along the forward trajectory of `x`: cumulative upper Riemann sums
/// of `ā(X_{s,0}(x))` at the step times `k·dt`.
pub(crate) fn envelope_integrals(
    model: &CoefficientModel,
    constants: &ModelConstants,
    x: Point,
    horizon: f64,
    steps: usize,
) -> Result<Vec<f64>, HarrisError> {
    let solver = crate::flow::FlowSolver::for_model(model, crate::flow::DEFAULT_FLOW_TOL)?;
    let traj = solver.trajectory(model, 0.0, horizon, x, steps);
    let dt = horizon / steps as f64;
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in traj.windows(2) {
        let hi = constants.a_bar.at_point(w[0]).max(constants.a_bar.at_point(w[1]));
        acc += dt * hi;
        out.push(acc);
    }
    Ok(out)
}

/// Random field of one of three shapes: white noise, a bump at a random node, or an
/// indicator of a random ball.
pub(crate) fn random_field(grid: &TruncatedBox, rng: &mut ChaCha8Rng, signed: bool) -> GridField {
    let kind = rng.gen_range(0..3);
    let centre = grid.node(rng.gen_range(0..grid.len()));
    let width = rng.gen_range(0.05..0.5) * grid.half_width;
    let values = grid
        .nodes()
        .into_iter()
        .map(|x| {
            let d = norm([x[0] - centre[0], x[1] - centre[1]]);
            let base = match kind {
                0 => rng.gen_range(0.0..1.0),
                1 => (-(d / width).powi(2)).exp(),
                _ => {
                    if d < width {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            if signed {
                base * rng.gen_range(-1.0..1.0)
            } else {
                base
            }
        })
        .collect();
    GridField::new(*grid, values, 0.0)
}

#[cfg(test)]
pub(crate) mod tests {
    use crate::model::{derived_constants, CoefficientModel, ModelConstants, SamplingPlan};
    use crate::semiflow::TruncatedBox;

    pub(crate) fn setup(family: &str, params: serde_json::Value, n: usize) -> (CoefficientModel, TruncatedBox, ModelConstants) {
        let (m, g) = crate::spectral::tests::setup(family, params, n);
        let c = derived_constants(&m, &g, &SamplingPlan::default());
        (m, g, c)
    }
}
