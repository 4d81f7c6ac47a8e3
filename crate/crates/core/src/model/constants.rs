use serde::{Deserialize, Serialize};

use super::{distance, norm, CoefficientModel, Point};
use crate::linalg;
use crate::semiflow::TruncatedBox;

/// Resolution of the sampling used for every sup/inf over `[0,T] × box`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Times `kT/time_samples`, `k = 0..time_samples`.
    pub time_samples: usize,
    /// Lattice points per radius for integrals over small balls.
    pub local_points: usize,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            time_samples: 32,
            local_points: 16,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn times(&self, period: f64) -> Vec<f64> {
        let n = self.time_samples.max(1);
        (0..n).map(|k| period * k as f64 / n as f64).collect()
    }
}

/// `ā(r) = sup_{t, |y| ≥ r} a(t, y)` on a radius ladder, read piecewise constant from above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialEnvelope {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest radius at which a sample was actually seen.
    pub witnessed_up_to: f64,
}

impl RadialEnvelope {
    pub const LADDER_LEN: usize = 64;

    pub fn ladder(grid: &TruncatedBox) -> Vec<f64> {
        let lo = 0.5 * grid.spacing();
        let hi = grid.half_width * (grid.dimension as f64).sqrt();
        let k = Self::LADDER_LEN - 1;
        let mut radii = vec![0.0];
        radii.extend((0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)));
        radii
    }

    /// Value at the largest ladder radius not exceeding `r`.
    pub fn eval(&self, r: f64) -> f64 {
        let idx = self.radii.partition_point(|&ri| ri <= r).saturating_sub(1);
        self.values[idx]
    }

    pub fn at_point(&self, x: Point) -> f64 {
        self.eval(norm(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub n_inf: f64,
    pub div_inf: f64,
    pub q_hat: f64,
    pub a_sup: f64,
    /// Worst-case `sup |v|` over the box samples.
    pub v_sup: f64,
    pub x0: Point,
    pub r0: f64,
    pub r1: f64,
    /// `inf_{x ∈ B(x0,r0)} ∫_{B(x0,r1)} q(t,y,x) dy`.
    pub q0: f64,
    /// `inf q` over the band `|x − y| < r0`.
    pub q0_plus: f64,
    /// Pair `(y, x)` attaining `q0_plus`.
    pub q0_plus_witness: (Point, Point),
    pub r_a: Option<f64>,
    pub a_bar: RadialEnvelope,
    pub cells_per_dim: usize,
    pub time_samples: usize,
}

/// Column masses `h^d Σ_x q(t, y, x)` for every source node `y`.
pub(crate) fn column_masses(model: &CoefficientModel, grid: &TruncatedBox, t: f64) -> Vec<f64> {
    let nodes = grid.nodes();
    let hd = grid.cell_volume();
    nodes
        .iter()
        .map(|&y| hd * linalg::sum(nodes.iter().map(|&x| model.kernel(t, y, x))))
        .collect()
}

pub(crate) fn kernel_times(model: &CoefficientModel, plan: &SamplingPlan) -> Vec<f64> {
    if model.kernel_is_autonomous() {
        vec![0.0]
    } else {
        plan.times(model.period)
    }
}

/// Midpoint lattice covering the open ball `B(center, r)`, with the cell volume.
pub(crate) fn ball_lattice(center: Point, r: f64, per_radius: usize, dimension: usize) -> (Vec<Point>, f64) {
    let m = per_radius.max(1);
    let delta = r / m as f64;
    let coords: Vec<f64> = (0..2 * m).map(|i| -r + (i as f64 + 0.5) * delta).collect();
    let mut pts = Vec::new();
    if dimension == 1 {
        pts.extend(coords.iter().map(|&u| [center[0] + u, 0.0]));
    } else {
        for &u in &coords {
            for &w in &coords {
                if u.hypot(w) < r {
                    pts.push([center[0] + u, center[1] + w]);
                }
            }
        }
    }
    (pts, delta.powi(dimension as i32))
}

/// Sup/inf constants of the model over the sampling plan.
pub fn derived_constants(model: &CoefficientModel, grid: &TruncatedBox, plan: &SamplingPlan) -> ModelConstants {
    let nodes = grid.nodes();
    let times = plan.times(model.period);

    let mut n_inf = 0.0f64;
    let mut div_inf = 0.0f64;
    let mut v_sup = 0.0f64;
    let mut a_sup = f64::NEG_INFINITY;
    let mut node_a_max = vec![f64::NEG_INFINITY; nodes.len()];
    for &t in &times {
        for (i, &x) in nodes.iter().enumerate() {
            let v = norm(model.velocity(t, x));
            v_sup = v_sup.max(v);
            n_inf = n_inf.max(v / (1.0 + norm(x)));
            div_inf = div_inf.max(model.velocity_divergence(t, x).abs());
            let a = model.fitness(t, x);
            a_sup = a_sup.max(a);
            node_a_max[i] = node_a_max[i].max(a);
        }
    }

    let q_hat = kernel_times(model, plan)
        .into_iter()
        .flat_map(|t| column_masses(model, grid, t))
        .fold(0.0, f64::max);

    let a_bar = radial_envelope(grid, &nodes, &node_a_max);
    let r_a = a_bar
        .radii
        .iter()
        .zip(&a_bar.values)
        .find(|(r, v)| **v < 0.0 && **r <= a_bar.witnessed_up_to)
        .map(|(r, _)| *r);

    let pos = model.positivity;
    let q0 = qpos2_mass(model, plan, pos.x0, pos.r0, pos.r1);
    let (q0_plus, q0_plus_witness) = band_minimum(model, grid, plan, pos.r0);

    ModelConstants {
        n_inf,
        div_inf,
        q_hat,
        a_sup,
        v_sup,
        x0: pos.x0,
        r0: pos.r0,
        r1: pos.r1,
        q0,
        q0_plus,
        q0_plus_witness,
        r_a,
        a_bar,
        cells_per_dim: grid.cells_per_dim,
        time_samples: times.len(),
    }
}

fn radial_envelope(grid: &TruncatedBox, nodes: &[Point], node_a_max: &[f64]) -> RadialEnvelope {
    let mut by_radius: Vec<(f64, f64)> = nodes.iter().map(|&x| norm(x)).zip(node_a_max.iter().copied()).collect();
    by_radius.sort_by(|a, b| b.0.total_cmp(&a.0));
    // suffix maxima from the outside in
    let mut tail_max = Vec::with_capacity(by_radius.len());
    let mut running = f64::NEG_INFINITY;
    for &(_, a) in &by_radius {
        running = running.max(a);
        tail_max.push(running);
    }
    let witnessed_up_to = by_radius.first().map_or(0.0, |p| p.0);
    let radii = RadialEnvelope::ladder(grid);
    let mut values = Vec::with_capacity(radii.len());
    let mut last = f64::NEG_INFINITY;
    for &r in &radii {
        // number of samples with |y| ≥ r
        let count = by_radius.partition_point(|p| p.0 >= r);
        let v = if count == 0 { last } else { tail_max[count - 1] };
        values.push(v);
        last = v;
    }
    RadialEnvelope {
        radii,
        values,
        witnessed_up_to,
    }
}

/// `inf_{x ∈ B(x0,r0)} ∫_{B(x0,r1)} q(t,y,x) dy` by lattice quadrature.
pub(crate) fn qpos2_mass(model: &CoefficientModel, plan: &SamplingPlan, x0: Point, r0: f64, r1: f64) -> f64 {
    let d = model.dimension;
    let (ys, w) = ball_lattice(x0, r1, plan.local_points, d);
    let (xs, _) = ball_lattice(x0, r0, plan.local_points, d);
    let mut q0 = f64::INFINITY;
    for t in kernel_times(model, plan) {
        for &x in &xs {
            let m = w * linalg::sum(ys.iter().map(|&y| model.kernel(t, y, x)));
            q0 = q0.min(m);
        }
    }
    q0
}

fn band_directions(d: usize) -> Vec<Point> {
    if d == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..16)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 8.0;
                [th.cos(), th.sin()]
            })
            .collect()
    }
}

/// Minimum of `q(t,y,x)` over grid pairs with `|x − y| < r0` and over pairs at distance just below `r0`.
pub(crate) fn band_minimum(
    model: &CoefficientModel,
    grid: &TruncatedBox,
    plan: &SamplingPlan,
    r0: f64,
) -> (f64, (Point, Point)) {
    let nodes = grid.nodes();
    let dirs = band_directions(grid.dimension);
    let edge = r0 * (1.0 - 1e-9);
    let mut best = (f64::INFINITY, ([0.0; 2], [0.0; 2]));
    for t in kernel_times(model, plan) {
        for &y in &nodes {
            let mut consider = |x: Point| {
                let q = model.kernel(t, y, x);
                if q < best.0 {
                    best = (q, (y, x));
                }
            };
            for &x in &nodes {
                if distance(x, y) < r0 {
                    consider(x);
                }
            }
            for dir in &dirs {
                consider([y[0] + edge * dir[0], y[1] + edge * dir[1]]);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, gaussian, ModelConfig};
    use serde_json::json;

    fn model(v: serde_json::Value) -> (CoefficientModel, TruncatedBox) {
        let cfg: ModelConfig = serde_json::from_value(v).unwrap();
        (build_model(&cfg).unwrap(), cfg.truncated_box().unwrap())
    }

    #[test]
    fn rank_one_constants() {
        let (m, b) = model(json!({
            "family": "rank_one", "period": 1.0, "dimension": 1,
            "params": {"a0": -0.5, "beta": 2.0},
            "box": {"half_width": 6.0, "cells_per_dim": 128}
        }));
        let c = derived_constants(&m, &b, &SamplingPlan::default());
        assert!((c.q_hat - 2.0).abs() < 1e-10);
        assert_eq!(c.a_sup, -0.5);
        assert_eq!(c.n_inf, 0.0);
    }

    #[test]
    fn confined_constants_against_dense_sampling() {
        let (m, b) = model(json!({
            "family": "gaussian_confined", "period": 1.0, "dimension": 1,
            "params": {"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2},
            "box": {"half_width": 6.0, "cells_per_dim": 256}
        }));
        let c = derived_constants(&m, &b, &SamplingPlan::default());
        // independent oracle: a(0, x) at the node closest to 0
        let h = b.spacing();
        assert!((c.a_sup - (2.0 - (h / 2.0).powi(2))).abs() < 1e-12);
        let k = c.a_bar.radii.partition_point(|&r| r <= 5.0);
        let (below, above) = (c.a_bar.radii[k - 1], c.a_bar.radii[k]);
        assert!(c.a_bar.eval(5.0) <= 2.0 - below * below + 1e-9);
        assert!(c.a_bar.eval(above) <= 2.0 - 25.0);
        // envelope dominates every sample
        for t in SamplingPlan::default().times(1.0) {
            for x in b.nodes() {
                assert!(m.fitness(t, x) <= c.a_bar.at_point(x));
            }
        }
        for w in c.a_bar.values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let expected = 2.0 * gaussian([0.2, 0.0], 0.2, 1);
        assert!((c.q0_plus - expected).abs() < 1e-8 * expected);
        assert!(c.r_a.unwrap() <= 2.0f64.sqrt() + 0.2);
    }

    #[test]
    fn n_inf_of_linear_drift() {
        let (m, b) = model(json!({
            "family": "autonomous", "period": 1.0, "dimension": 1,
            "params": {"kappa": 1.0, "a0": 0.0, "a2": 1.0, "beta": 1.0, "sigma": 0.5},
            "box": {"half_width": 6.0, "cells_per_dim": 64}
        }));
        let c = derived_constants(&m, &b, &SamplingPlan::default());
        let xm = b.nodes().iter().map(|x| x[0].abs()).fold(0.0, f64::max);
        assert!((c.n_inf - xm / (1.0 + xm)).abs() < 1e-14);
        assert!(c.n_inf < 6.0 / 7.0);
    }
}
