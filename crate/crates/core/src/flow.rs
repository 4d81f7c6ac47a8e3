//! Characteristics `X_{t,s}(x)` of the velocity field, with the Jacobian and the
//! fitness integral co-integrated along each trajectory.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{norm, CoefficientModel, Point};
use crate::semiflow::TruncatedBox;

pub const DEFAULT_FLOW_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("ODE step size underflow integrating from t={s} to t={t} at x={x:?} (last defect {defect:e})")]
    StepUnderflow { s: f64, t: f64, x: Point, defect: f64 },
    #[error("flow tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

/// One characteristic: `end_point = X_{t,s}(x)`, `jacobian = J_{t,s}(x)`,
/// `fitness_integral = ∫_s^t a(τ, X_{τ,s}(x)) dτ` (signed when `t < s`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub start_time: f64,
    pub end_time: f64,
    pub start_point: Point,
    pub end_point: Point,
    pub jacobian: f64,
    pub log_jacobian: f64,
    pub fitness_integral: f64,
    pub ode_tolerance: f64,
    pub substeps: usize,
    /// Set when the trajectory left the configured safety box; the value is kept as computed.
    pub left_safety_box: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSolver {
    pub tol: f64,
    pub max_substep: f64,
    pub safety_box: Option<TruncatedBox>,
}

type State = [f64; 4];

impl FlowSolver {
    /// Substep cap `0.1/(N∞ + ‖Div v‖∞ + 1)` from the model's analytic velocity bounds.
    pub fn for_model(model: &CoefficientModel, tol: f64) -> Result<Self, FlowError> {
        if !(tol > 0.0) {
            return Err(FlowError::InvalidTolerance(tol));
        }
        let (n_inf, div) = model.velocity_bounds();
        Ok(Self {
            tol,
            max_substep: 0.1 / (n_inf + div + 1.0),
            safety_box: None,
        })
    }

    pub fn with_safety_box(mut self, b: TruncatedBox) -> Self {
        self.safety_box = Some(b);
        self
    }

    fn rhs(model: &CoefficientModel, t: f64, y: &State) -> State {
        let x = [y[0], y[1]];
        let v = model.velocity(t, x);
        [v[0], v[1], model.velocity_divergence(t, x), model.fitness(t, x)]
    }

    fn rk4_step(model: &CoefficientModel, t: f64, y: &State, h: f64) -> State {
        let add = |a: &State, b: &State, c: f64| -> State { std::array::from_fn(|i| a[i] + c * b[i]) };
        let k1 = Self::rhs(model, t, y);
        let k2 = Self::rhs(model, t + 0.5 * h, &add(y, &k1, 0.5 * h));
        let k3 = Self::rhs(model, t + 0.5 * h, &add(y, &k2, 0.5 * h));
        let k4 = Self::rhs(model, t + h, &add(y, &k3, h));
        std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    fn outside(&self, x: Point) -> bool {
        match &self.safety_box {
            Some(b) => x[0].abs() > b.half_width || x[1].abs() > b.half_width,
            None => false,
        }
    }

    /// Fixed-step integration with `n` substeps; returns the state and the safety flag.
    fn integrate(&self, model: &CoefficientModel, s: f64, t: f64, x: Point, n: usize) -> (State, bool) {
        let h = (t - s) / n as f64;
        let mut y = [x[0], x[1], 0.0, 0.0];
        let mut left = self.outside(x);
        for k in 0..n {
            y = Self::rk4_step(model, s + k as f64 * h, &y, h);
            left |= self.outside([y[0], y[1]]);
        }
        (y, left)
    }

    pub fn flow_map(&self, model: &CoefficientModel, s: f64, t: f64, x: Point) -> Result<FlowSample, FlowError> {
        let mut sample = FlowSample {
            start_time: s,
            end_time: t,
            start_point: x,
            end_point: x,
            jacobian: 1.0,
            log_jacobian: 0.0,
            fitness_integral: 0.0,
            ode_tolerance: self.tol,
            substeps: 0,
            left_safety_box: self.outside(x),
        };
        let span = (t - s).abs();
        if span == 0.0 {
            return Ok(sample);
        }
        let target = self.tol * span * (1.0 + norm(x));
        let mut n = ((span / self.max_substep).ceil() as usize).max(1);
        let (mut coarse, _) = self.integrate(model, s, t, x, n);
        let mut defect = f64::INFINITY;
        for _ in 0..MAX_DOUBLINGS {
            n *= 2;
            let (fine, left) = self.integrate(model, s, t, x, n);
            defect = (0..4).map(|i| (fine[i] - coarse[i]).abs()).fold(0.0, f64::max);
            if defect <= target {
                sample.end_point = [fine[0], fine[1]];
                sample.log_jacobian = fine[2];
                sample.jacobian = fine[2].exp();
                sample.fitness_integral = fine[3];
                sample.substeps = n;
                sample.left_safety_box |= left;
                return Ok(sample);
            }
            coarse = fine;
        }
        Err(FlowError::StepUnderflow { s, t, x, defect })
    }

    /// Positions `X_{s + k(t−s)/steps, s}(x)` for `k = 0..=steps`, fixed RK4 substeps.
    pub fn trajectory(&self, model: &CoefficientModel, s: f64, t: f64, x: Point, steps: usize) -> Vec<Point> {
        let steps = steps.max(1);
        let dt = (t - s) / steps as f64;
        let sub = ((dt.abs() / self.max_substep).ceil() as usize).max(1);
        let h = dt / sub as f64;
        let mut y = [x[0], x[1], 0.0, 0.0];
        let mut out = Vec::with_capacity(steps + 1);
        out.push(x);
        let mut time = s;
        for _ in 0..steps {
            for _ in 0..sub {
                y = Self::rk4_step(model, time, &y, h);
                time += h;
            }
            out.push([y[0], y[1]]);
        }
        out
    }
}

pub fn flow_map(model: &CoefficientModel, s: f64, t: f64, x: Point, tol: f64) -> Result<FlowSample, FlowError> {
    FlowSolver::for_model(model, tol)?.flow_map(model, s, t, x)
}

/// `|X_{s,t}(X_{t,s}(x)) − x|`.
pub fn inverse_consistency(model: &CoefficientModel, s: f64, t: f64, x: Point, tol: f64) -> Result<f64, FlowError> {
    let solver = FlowSolver::for_model(model, tol)?;
    let fwd = solver.flow_map(model, s, t, x)?;
    let back = solver.flow_map(model, t, s, fwd.end_point)?;
    Ok(crate::model::distance(back.end_point, x))
}

/// Riemann-sum measure of `{τ ∈ [0, horizon] : |X_{τ,0}(x)| < R}` at step `dt`.
pub fn ball_occupation_time(model: &CoefficientModel, x: Point, radius: f64, horizon: f64, dt: f64) -> f64 {
    let steps = (horizon / dt).round().max(0.0) as usize;
    let solver = FlowSolver::for_model(model, DEFAULT_FLOW_TOL).expect("positive default tolerance");
    let path = solver.trajectory(model, 0.0, steps as f64 * dt, x, steps);
    // left-endpoint rule over [k dt, (k+1) dt)
    path[..steps].iter().filter(|p| norm(**p) < radius).count() as f64 * dt
}

/// Lower envelope, observed value and upper envelope of `|X_{t,s}(E)|` for a union of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureDefect {
    pub lower: f64,
    pub observed: f64,
    pub upper: f64,
}

impl MeasureDefect {
    pub fn contained(&self, tol: f64) -> bool {
        self.lower - tol <= self.observed && self.observed <= self.upper + tol
    }
}

pub fn flow_measure_defect(
    model: &CoefficientModel,
    grid: &TruncatedBox,
    cells: &[usize],
    s: f64,
    t: f64,
    tol: f64,
) -> Result<MeasureDefect, FlowError> {
    let solver = FlowSolver::for_model(model, tol)?;
    let hd = grid.cell_volume();
    let mut acc = crate::linalg::CompensatedSum::new();
    for &c in cells {
        acc.add(hd * solver.flow_map(model, s, t, grid.node(c))?.jacobian);
    }
    let measure = hd * cells.len() as f64;
    let div = model.velocity_bounds().1;
    let span = (t - s).abs();
    Ok(MeasureDefect {
        lower: (-span * div).exp() * measure,
        observed: acc.value(),
        upper: (span * div).exp() * measure,
    })
}

/// `(|x|+1)e^{−N∞|t−s|} − 1 ≤ |X_{t,s}(x)| ≤ (|x|+1)e^{N∞|t−s|} − 1`.
pub fn ball_growth_envelope(n_inf: f64, x: Point, span: f64) -> (f64, f64) {
    let r = norm(x) + 1.0;
    (r * (-n_inf * span.abs()).exp() - 1.0, r * (n_inf * span.abs()).exp() - 1.0)
}

/// CSV dump with columns `s, t, x…, X…, J, int_a`.
pub fn write_trajectory_csv<W: Write>(mut w: W, dimension: usize, samples: &[FlowSample]) -> io::Result<()> {
    let axes: Vec<usize> = (0..dimension).collect();
    let head_x: Vec<String> = axes.iter().map(|i| format!("x{}", i + 1)).collect();
    let head_big: Vec<String> = axes.iter().map(|i| format!("X{}", i + 1)).collect();
    writeln!(w, "s,t,{},{},J,int_a", head_x.join(","), head_big.join(","))?;
    for s in samples {
        let xs: Vec<String> = axes.iter().map(|&i| format!("{:.17e}", s.start_point[i])).collect();
        let ys: Vec<String> = axes.iter().map(|&i| format!("{:.17e}", s.end_point[i])).collect();
        writeln!(
            w,
            "{:.17e},{:.17e},{},{},{:.17e},{:.17e}",
            s.start_time,
            s.end_time,
            xs.join(","),
            ys.join(","),
            s.jacobian,
            s.fitness_integral
        )?;
    }
    Ok(())
}
