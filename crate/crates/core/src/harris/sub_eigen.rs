use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::HarrisError;
use crate::model::{ball_lattice, distance, norm, CoefficientModel, ModelConstants, Point, SamplingPlan};
use crate::semiflow::GridField;
use crate::spectral::PeriodOperator;

/// Candidate radii tried between `r1` and `r0`.
const RADIUS_SCAN: usize = 400;

/// `g0` with `S g0 ≥ κ0 g0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubEigenCertificate {
    pub x0: Point,
    pub r0: f64,
    pub r1: f64,
    /// Inner radius where the gradient term is controlled by `q0`.
    pub r: f64,
    pub alpha0: f64,
    /// `log κ0 = −α0 T`; κ0 itself underflows for steep bumps.
    pub log_kappa0: f64,
    pub kappa0: f64,
    pub gradient_ratio: f64,
    pub v_sup_local: f64,
    pub a_minus_div_sup: f64,
    /// `min_x (S g0 − κ0 g0)(x)`.
    pub defect: f64,
    #[serde(skip)]
    pub g0: Option<GridField>,
}

/// `cos²(π|x−x0|/(2r0))` on `B(x0, r0)`, zero outside.
fn bump(x0: Point, r0: f64, x: Point) -> f64 {
    let rho = distance(x, x0);
    if rho < r0 {
        (0.5 * PI * rho / r0).cos().powi(2)
    } else {
        0.0
    }
}

/// `|∇g0|` at distance `rho` from the centre.
fn bump_gradient(r0: f64, rho: f64) -> f64 {
    0.5 * PI / r0 * (PI * rho / r0).sin().abs()
}

/// Max of `|∇g0|` over `rho ∈ [lo, hi]`; the profile peaks at `r0/2`.
fn gradient_max(r0: f64, lo: f64, hi: f64) -> f64 {
    if lo <= 0.5 * r0 && 0.5 * r0 <= hi {
        0.5 * PI / r0
    } else {
        bump_gradient(r0, lo).max(bump_gradient(r0, hi))
    }
}

fn ball_samples(center: Point, r: f64, plan: &SamplingPlan, d: usize) -> Vec<Point> {
    let (mut pts, _) = ball_lattice(center, r, plan.local_points, d);
    pts.push(center);
    let dirs = if d == 1 { 2 } else { 32 };
    for k in 0..dirs {
        let th = 2.0 * PI * k as f64 / dirs as f64;
        let u = if d == 1 { [th.cos().signum(), 0.0] } else { [th.cos(), th.sin()] };
        pts.push([center[0] + r * u[0], center[1] + r * u[1]]);
    }
    pts
}

pub fn sub_eigen_certificate(
    model: &CoefficientModel,
    constants: &ModelConstants,
    s: &PeriodOperator,
    plan: &SamplingPlan,
) -> Result<SubEigenCertificate, HarrisError> {
    let (x0, r0, r1, q0) = (constants.x0, constants.r0, constants.r1, constants.q0);
    let no_radius = HarrisError::NoAdmissibleRadius { r0, r1, q0 };
    if !(q0 > 0.0) {
        return Err(no_radius);
    }
    let d = model.dimension;
    let times = plan.times(model.period);
    let v_sup = |r: f64| {
        let pts = ball_samples(x0, r, plan, d);
        times
            .iter()
            .flat_map(|&t| pts.iter().map(move |&x| norm(model.velocity(t, x))))
            .fold(0.0, f64::max)
    };
    let v_r0 = v_sup(r0);
    let inf_g_r1 = bump(x0, r0, [x0[0] + r1, x0[1]]);
    let admissible = |r: f64| gradient_max(r0, r, r0) * v_r0 <= q0 * inf_g_r1;

    let mut chosen = None;
    for k in 1..RADIUS_SCAN {
        let r = r0 - (r0 - r1) * k as f64 / RADIUS_SCAN as f64;
        if admissible(r) {
            chosen = Some(r);
        } else {
            break;
        }
    }
    let r = chosen.ok_or(no_radius)?;

    let min_g = bump(x0, r0, [x0[0] + r, x0[1]]);
    let gradient_ratio = gradient_max(r0, 0.0, r) / min_g;
    let v_sup_local = v_sup(r);
    let pts = ball_samples(x0, r, plan, d);
    let a_minus_div_sup = times
        .iter()
        .flat_map(|&t| pts.iter().map(move |&x| (model.fitness(t, x) - model.velocity_divergence(t, x)).abs()))
        .fold(0.0, f64::max);
    let alpha0 = gradient_ratio * v_sup_local + a_minus_div_sup;
    let log_kappa0 = -alpha0 * model.period;
    let kappa0 = log_kappa0.exp();

    let g0 = GridField::from_fn(*s.grid(), 0.0, |x| bump(x0, r0, x));
    let sg = s.apply(&g0)?;
    let defect = sg
        .values
        .iter()
        .zip(&g0.values)
        .map(|(a, b)| a - kappa0 * b)
        .fold(f64::INFINITY, f64::min);
    Ok(SubEigenCertificate {
        x0,
        r0,
        r1,
        r,
        alpha0,
        log_kappa0,
        kappa0,
        gradient_ratio,
        v_sup_local,
        a_minus_div_sup,
        defect,
        g0: Some(g0),
    })
}
