use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::HarrisError;
use crate::model::{ball_lattice, norm, CoefficientModel, ModelConstants, SamplingPlan};
use crate::semiflow::{DualGridField, Propagator};

/// Longest constructive chain attempted.
const MAX_CHAIN: usize = 1_000_000;

/// `|B(0, r − r0/8) ∩ B(x_r, r0)|` with `|x_r| = r + 5r0/8`.
pub fn lens_volume(r: f64, r0: f64, dimension: usize) -> f64 {
    let a = r - r0 / 8.0;
    if a <= 0.0 {
        return 0.0;
    }
    let dist = r + 5.0 * r0 / 8.0;
    if dimension == 1 {
        let lo = (-a).max(dist - r0);
        let hi = a.min(dist + r0);
        (hi - lo).max(0.0)
    } else {
        circle_overlap(a, r0, dist)
    }
}

/// Area of the intersection of two discs with radii `a`, `b` and centres `d` apart.
fn circle_overlap(a: f64, b: f64, d: f64) -> f64 {
    if d >= a + b {
        return 0.0;
    }
    if d <= (a - b).abs() {
        return PI * a.min(b).powi(2);
    }
    let ca = ((d * d + a * a - b * b) / (2.0 * d * a)).clamp(-1.0, 1.0);
    let cb = ((d * d + b * b - a * a) / (2.0 * d * b)).clamp(-1.0, 1.0);
    let k = (-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b);
    a * a * ca.acos() + b * b * cb.acos() - 0.5 * k.max(0.0).sqrt()
}

/// Largest time span on which trajectories starting in `B(0, r + r0/2)` move less than
/// `r0/8`, from the ball growth envelope.
pub fn epsilon_r(r: f64, r0: f64, n_inf: f64) -> f64 {
    if n_inf == 0.0 {
        return f64::INFINITY;
    }
    (r0 / (8.0 * (r + 0.5 * r0 + 1.0))).ln_1p() / n_inf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizationReport {
    pub r: f64,
    pub big_r: f64,
    pub s: f64,
    pub t: f64,
    pub steps: usize,
    pub tau: f64,
    /// Radius feeding each chain step.
    pub radii: Vec<f64>,
    pub log_c_constructive: f64,
    pub c_constructive: f64,
    /// `min_{B(0,R)} S*_{s,t} 1_{B(0,r)}` on the grid.
    pub c_direct: f64,
    pub consistent: bool,
}

fn inf_fitness(model: &CoefficientModel, radius: f64, plan: &SamplingPlan) -> f64 {
    let d = model.dimension;
    let (mut pts, _) = ball_lattice([0.0; 2], radius, plan.local_points, d);
    let dirs = if d == 1 { 2 } else { 64 };
    for k in 0..dirs {
        let th = 2.0 * PI * k as f64 / dirs as f64;
        pts.push(if d == 1 { [radius * th.cos().signum(), 0.0] } else { [radius * th.cos(), radius * th.sin()] });
    }
    plan.times(model.period)
        .iter()
        .flat_map(|&t| pts.iter().map(move |&x| model.fitness(t, x)))
        .fold(f64::INFINITY, f64::min)
}

/// `S*_{s,t} 1_{B(0,r)} ≥ c 1_{B(0,R)}`, by the radius-growing chain and directly on the grid.
#[allow(clippy::too_many_arguments)]
pub fn minorization(
    model: &CoefficientModel,
    constants: &ModelConstants,
    propagator: &Propagator,
    r: f64,
    big_r: f64,
    s: f64,
    t: f64,
    plan: &SamplingPlan,
) -> Result<MinorizationReport, HarrisError> {
    if !(t > s) {
        return Err(HarrisError::InvalidInterval { s, t });
    }
    if !(r > 0.0) || !(big_r > 0.0) {
        return Err(HarrisError::InvalidRadius(r.min(big_r)));
    }
    if !(constants.q0_plus > 0.0) {
        return Err(HarrisError::NotStrong(constants.q0_plus));
    }
    let r0 = constants.r0;
    let d = model.dimension;
    let n_inf = model.velocity_bounds().0;
    let half = 0.5 * r0;
    let needed = (((big_r - r) / half).ceil().max(0.0) as usize).max(1);
    let rho_max = r + (needed - 1) as f64 * half;
    let eps_min = epsilon_r(rho_max, r0, n_inf);
    let span = t - s;
    let mut steps = needed;
    while span / steps as f64 >= eps_min {
        steps = ((span / eps_min).floor() as usize + 1).max(steps + 1);
        if steps > MAX_CHAIN {
            return Err(HarrisError::ChainTooLong(MAX_CHAIN));
        }
    }
    let tau = span / steps as f64;
    let radii: Vec<f64> = (0..steps).map(|i| (r + i as f64 * half).min(rho_max)).collect();
    let mut log_c = 0.0;
    for &rho in &radii {
        let b = lens_volume(rho, r0, d);
        let a = inf_fitness(model, rho + r0, plan);
        log_c += (constants.q0_plus * b * tau).ln() + tau * a;
    }

    let grid = *propagator.grid();
    let ind = DualGridField::indicator_ball(grid, [0.0; 2], r, t);
    let pulled = propagator.evolve_dual(t, s, &ind)?;
    let c_direct = (0..grid.len())
        .filter(|&i| norm(grid.node(i)) < big_r)
        .map(|i| pulled.values[i])
        .fold(f64::INFINITY, f64::min);
    let c_constructive = log_c.exp();
    Ok(MinorizationReport {
        r,
        big_r,
        s,
        t,
        steps,
        tau,
        radii,
        log_c_constructive: log_c,
        c_constructive,
        c_direct,
        consistent: c_constructive <= c_direct * (1.0 + 1e-9),
    })
}
