//! Perron pair of the period map, Floquet exponent, periodic eigenfamilies, attraction rate
//! and a dense-matrix cross-check.

mod convergence;
mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::model::CoefficientModel;
use crate::semiflow::{pairing, DualGridField, GridField, Propagator, PropagatorConfig, SemiflowError, TruncatedBox};

pub use convergence::{convergence_rate, orthogonal_test_field, write_decay_csv, ConvergenceReport};
pub use oracle::{dense_oracle, SpectrumReport, DENSE_ORACLE_LIMIT};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Semiflow(#[from] SemiflowError),
    #[error("power iteration did not converge in {iterations} iterations (ratio {ratio}, defect {defect:e})")]
    MaxIterations { iterations: usize, ratio: f64, defect: f64 },
    #[error("period map sends the iterate to zero")]
    ZeroImage,
    #[error("initial field must be nonnegative and nonzero")]
    InvalidStart,
    #[error("pairing of the Perron vectors is {0}, expected positive")]
    NonPositivePairing(f64),
    #[error("dense oracle size guard: {nodes} nodes exceeds {limit}")]
    SizeGuard { nodes: usize, limit: usize },
    #[error("dense eigensolve of the {0}-node period matrix did not converge")]
    EigenSolve(usize),
    #[error("convergence study needs at least {needed} periods, got {got}")]
    TooFewPeriods { needed: usize, got: usize },
    #[error("Richardson extrapolation needs an even number of steps per period, got {0}")]
    OddSteps(usize),
}

/// `S = S_{T,0}` and its transpose on a fixed discretization.
#[derive(Debug, Clone)]
pub struct PeriodOperator {
    propagator: Propagator,
}

impl PeriodOperator {
    pub fn new(model: &CoefficientModel, grid: &TruncatedBox, config: &PropagatorConfig) -> Result<Self, SpectralError> {
        Ok(Self {
            propagator: Propagator::new(model, grid, config)?,
        })
    }

    pub fn from_propagator(propagator: Propagator) -> Self {
        Self { propagator }
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn grid(&self) -> &TruncatedBox {
        self.propagator.grid()
    }

    pub fn period(&self) -> f64 {
        self.propagator.period()
    }

    pub fn apply(&self, f: &GridField) -> Result<GridField, SpectralError> {
        let mut out = self.propagator.evolve(0.0, self.period(), f)?;
        out.time = f.time;
        Ok(out)
    }

    pub fn apply_dual(&self, phi: &DualGridField) -> Result<DualGridField, SpectralError> {
        let mut out = self.propagator.evolve_dual(self.period(), 0.0, phi)?;
        out.time = phi.time;
        Ok(out)
    }

    pub fn dense_matrix(&self) -> Result<DenseMatrix, SpectralError> {
        Ok(self.propagator.dense_evolution(0.0, self.period())?)
    }
}

#[derive(Debug, Clone)]
pub struct PowerResult<F> {
    pub eigenvalue: f64,
    pub vector: F,
    pub iterations: usize,
    /// Distance between the last two normalized iterates.
    pub defect: f64,
}

/// `f ← Sf/‖Sf‖₁` until successive iterates differ by less than `tol` in L¹.
pub fn power_iteration(
    s: &PeriodOperator,
    f_init: &GridField,
    tol: f64,
    max_iter: usize,
) -> Result<PowerResult<GridField>, SpectralError> {
    if !f_init.is_nonnegative() || f_init.l1_norm() == 0.0 {
        return Err(SpectralError::InvalidStart);
    }
    let mut f = f_init.clone().scaled(1.0 / f_init.l1_norm());
    let mut ratio = 0.0;
    let mut defect = f64::INFINITY;
    for it in 1..=max_iter {
        let sf = s.apply(&f)?;
        ratio = sf.l1_norm();
        if ratio == 0.0 {
            return Err(SpectralError::ZeroImage);
        }
        let next = sf.scaled(1.0 / ratio);
        defect = next.l1_distance(&f);
        f = next;
        if defect < tol {
            return Ok(PowerResult {
                eigenvalue: ratio,
                vector: f,
                iterations: it,
                defect,
            });
        }
    }
    Err(SpectralError::MaxIterations {
        iterations: max_iter,
        ratio,
        defect,
    })
}

/// `φ ← S*φ/‖S*φ‖∞` until successive iterates differ by less than `tol` in sup norm.
pub fn dual_power_iteration(
    s: &PeriodOperator,
    phi_init: &DualGridField,
    tol: f64,
    max_iter: usize,
) -> Result<PowerResult<DualGridField>, SpectralError> {
    if !phi_init.is_nonnegative() || phi_init.sup_norm() == 0.0 {
        return Err(SpectralError::InvalidStart);
    }
    let mut phi = phi_init.clone().scaled(1.0 / phi_init.sup_norm());
    let mut ratio = 0.0;
    let mut defect = f64::INFINITY;
    for it in 1..=max_iter {
        let sp = s.apply_dual(&phi)?;
        ratio = sp.sup_norm();
        if ratio == 0.0 {
            return Err(SpectralError::ZeroImage);
        }
        let next = sp.scaled(1.0 / ratio);
        defect = next.sup_distance(&phi);
        phi = next;
        if defect < tol {
            return Ok(PowerResult {
                eigenvalue: ratio,
                vector: phi,
                iterations: it,
                defect,
            });
        }
    }
    Err(SpectralError::MaxIterations {
        iterations: max_iter,
        ratio,
        defect,
    })
}

/// Normalized Perron pair with its periodic families sampled at every step time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSolution {
    pub lambda_f: f64,
    pub big_lambda0: f64,
    pub dual_eigenvalue: f64,
    pub period: f64,
    pub steps_per_period: usize,
    /// `max_t |⟨φ_t, f_t⟩ − 1|`.
    pub normalization_residual: f64,
    /// `|‖φ_0‖∞ − 1|`.
    pub sup_norm_residual: f64,
    /// `‖f_T − f_0‖₁`.
    pub periodicity_defect_f: f64,
    /// `‖φ_T − φ_0‖∞`.
    pub periodicity_defect_phi: f64,
    /// `‖S f0 − Λ0 f0‖₁ / ‖f0‖₁`.
    pub eigen_residual: f64,
    /// `‖S*φ0 − Λ0 φ0‖∞`.
    pub dual_eigen_residual: f64,
    pub iterations: usize,
    pub dual_iterations: usize,
    pub min_f: f64,
    pub min_phi: f64,
    #[serde(skip)]
    pub f_samples: Vec<GridField>,
    #[serde(skip)]
    pub phi_samples: Vec<DualGridField>,
}

impl EigenSolution {
    pub fn f0(&self) -> &GridField {
        &self.f_samples[0]
    }

    /// The normalized dual eigenvector; stored as the time-`T` sample, where the backward
    /// family starts.
    pub fn phi0(&self) -> &DualGridField {
        self.phi_samples.last().unwrap()
    }
}

pub fn assemble_solution(
    s: &PeriodOperator,
    forward: &PowerResult<GridField>,
    dual: &PowerResult<DualGridField>,
) -> Result<EigenSolution, SpectralError> {
    let big_lambda0 = forward.eigenvalue;
    let period = s.period();
    let lambda_f = big_lambda0.ln() / period;
    let phi0 = dual.vector.clone().scaled(1.0 / dual.vector.sup_norm());
    let p = pairing(&phi0, &forward.vector);
    if !(p > 0.0) {
        return Err(SpectralError::NonPositivePairing(p));
    }
    let f0 = forward.vector.clone().scaled(1.0 / p);

    let prop = s.propagator();
    let mut f_samples = prop.evolve_samples(0.0, period, &f0)?;
    for f in &mut f_samples {
        f.scale((-lambda_f * f.time).exp());
    }
    let mut phi_samples = prop.evolve_dual_samples(period, 0.0, &phi0)?;
    for phi in &mut phi_samples {
        phi.scale((-lambda_f * (period - phi.time)).exp());
    }
    let normalization_residual = f_samples
        .iter()
        .zip(&phi_samples)
        .map(|(f, phi)| (pairing(phi, f) - 1.0).abs())
        .fold(0.0, f64::max);
    let f_end = f_samples.last().unwrap();
    let periodicity_defect_f = f_end.l1_distance(&f0);
    let phi_start = &phi_samples[0];
    // φ_0 on the sampled family is e^{−λT}S*φ0, which returns to φ0 at convergence
    let periodicity_defect_phi = phi_start.sup_distance(&phi0);
    let eigen_residual = (f_end.l1_distance(&f0) * big_lambda0) / f0.l1_norm();
    let sphi = s.apply_dual(&phi0)?;
    let dual_eigen_residual = sphi.sup_distance(&phi0.clone().scaled(big_lambda0));
    let min_f = f_samples.iter().map(|f| f.min_value()).fold(f64::INFINITY, f64::min);
    let min_phi = phi_samples.iter().map(|f| f.min_value()).fold(f64::INFINITY, f64::min);
    Ok(EigenSolution {
        lambda_f,
        big_lambda0,
        dual_eigenvalue: dual.eigenvalue,
        period,
        steps_per_period: prop.steps_per_period(),
        normalization_residual,
        sup_norm_residual: (phi0.sup_norm() - 1.0).abs(),
        periodicity_defect_f,
        periodicity_defect_phi,
        eigen_residual,
        dual_eigen_residual,
        iterations: forward.iterations,
        dual_iterations: dual.iterations,
        min_f,
        min_phi,
        f_samples,
        phi_samples,
    })
}

/// Forward and dual power iteration from the uniform starts, then assembly.
pub fn solve(s: &PeriodOperator, tol: f64, max_iter: usize) -> Result<EigenSolution, SpectralError> {
    let grid = *s.grid();
    let f_init = GridField::constant(grid, 1.0, 0.0);
    let phi_init = DualGridField::constant(grid, 1.0, 0.0);
    let forward = power_iteration(s, &f_init, tol, max_iter)?;
    let dual = dual_power_iteration(s, &phi_init, tol, max_iter)?;
    assemble_solution(s, &forward, &dual)
}

/// `λ_F` at `m/2`, `m`, `2m` steps per period and its two-level extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichardsonEstimate {
    pub steps: [usize; 3],
    pub raw: [f64; 3],
    pub first_level: [f64; 2],
    pub extrapolated: f64,
}

pub fn richardson_lambda(
    model: &CoefficientModel,
    grid: &TruncatedBox,
    config: &PropagatorConfig,
    tol: f64,
    max_iter: usize,
) -> Result<RichardsonEstimate, SpectralError> {
    let m = config.steps_per_period;
    if m % 2 != 0 {
        return Err(SpectralError::OddSteps(m));
    }
    let steps = [m / 2, m, 2 * m];
    let mut raw = [0.0; 3];
    let f_init = GridField::constant(*grid, 1.0, 0.0);
    for (k, &n) in steps.iter().enumerate() {
        let c = PropagatorConfig {
            steps_per_period: n,
            ..*config
        };
        let s = PeriodOperator::new(model, grid, &c)?;
        raw[k] = power_iteration(&s, &f_init, tol, max_iter)?.eigenvalue.ln() / model.period;
    }
    Ok(richardson_combine(steps, raw, config.splitting))
}

/// Halving `dt` removes the `dt^p` then the `dt^{p+1}` term, `p` being the splitting order.
pub fn richardson_combine(steps: [usize; 3], raw: [f64; 3], splitting: crate::semiflow::Splitting) -> RichardsonEstimate {
    let p = match splitting {
        crate::semiflow::Splitting::Strang => 2,
        crate::semiflow::Splitting::Lie => 1,
    };
    let w1 = (1u32 << p) as f64;
    let w2 = (1u32 << (p + 1)) as f64;
    let first_level = [(w1 * raw[1] - raw[0]) / (w1 - 1.0), (w1 * raw[2] - raw[1]) / (w1 - 1.0)];
    let extrapolated = (w2 * first_level[1] - first_level[0]) / (w2 - 1.0);
    RichardsonEstimate {
        steps,
        raw,
        first_level,
        extrapolated,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};
    use crate::semiflow::Splitting;
    use serde_json::json;

    pub(crate) fn setup(family: &str, params: serde_json::Value, n: usize) -> (CoefficientModel, TruncatedBox) {
        let cfg: ModelConfig = serde_json::from_value(json!({
            "family": family, "period": 1.0, "dimension": 1, "params": params,
            "box": {"half_width": 6.0, "cells_per_dim": n}
        }))
        .unwrap();
        (build_model(&cfg).unwrap(), cfg.truncated_box().unwrap())
    }

    #[test]
    fn identity_operator() {
        let (m, g) = setup(
            "gaussian_confined",
            json!({"kappa": 0.0, "c": 0.0, "a0": 0.0, "a_mod": 0.0, "a2": 0.0, "beta": 0.0, "sigma": 0.2}),
            16,
        );
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig { steps_per_period: 4, ..Default::default() }).unwrap();
        let f = GridField::from_fn(g, 0.0, |x| 1.0 + x[0] * x[0]);
        let r = power_iteration(&s, &f, 1e-12, 10).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.eigenvalue - 1.0).abs() < 1e-15);
        let phi = DualGridField::from_fn(g, 0.0, |x| 7.0 + x[0]);
        let d = dual_power_iteration(&s, &phi, 1e-12, 10).unwrap();
        assert!((d.eigenvalue - 1.0).abs() < 1e-15);
        assert!(d.vector.sup_distance(&phi.clone().scaled(1.0 / phi.sup_norm())) < 1e-15);
    }

    #[test]
    fn rank_one_perron_pair() {
        let (m, g) = setup("rank_one", json!({"a0": -0.5, "beta": 2.0}), 64);
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let sol = solve(&s, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((sol.lambda_f - 1.5).abs() < 1e-4);
        assert!(sol.phi0().values.iter().all(|v| (v - 1.0).abs() < 1e-3));
        let k = GridField::from_fn(g, 0.0, |x| crate::model::gaussian(x, 0.3, 1));
        let f0 = sol.f0().clone().scaled(1.0 / sol.f0().l1_norm());
        assert!(f0.l1_distance(&k.clone().scaled(1.0 / k.l1_norm())) < 1e-3);
        assert!(sol.normalization_residual < 1e-10);
        assert!(sol.min_f > 0.0 && sol.min_phi > 0.0);
        assert!((sol.dual_eigenvalue - sol.big_lambda0).abs() < 1e-10 * sol.big_lambda0);
    }

    #[test]
    fn richardson_weights_cancel_polynomial_error() {
        let truth = 0.3;
        let raw = [64, 128, 256].map(|m| {
            let dt = 1.0 / m as f64;
            truth + 2.0 * dt * dt - 5.0 * dt * dt * dt
        });
        let r = richardson_combine([64, 128, 256], raw, Splitting::Strang);
        assert!((r.extrapolated - truth).abs() < 1e-12);
        let raw = [64, 128, 256].map(|m| {
            let dt = 1.0 / m as f64;
            truth + 2.0 * dt + 3.0 * dt * dt
        });
        let r = richardson_combine([64, 128, 256], raw, Splitting::Lie);
        assert!((r.extrapolated - truth).abs() < 1e-12);
    }

    #[test]
    fn zero_start_rejected() {
        let (m, g) = setup("rank_one", json!({"a0": -0.5, "beta": 2.0}), 16);
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig { steps_per_period: 4, ..Default::default() }).unwrap();
        assert!(matches!(
            power_iteration(&s, &GridField::zeros(g, 0.0), 1e-12, 10),
            Err(SpectralError::InvalidStart)
        ));
    }
}
