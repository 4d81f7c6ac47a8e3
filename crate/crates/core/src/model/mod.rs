//! Coefficient triples `(v, a, q)`, the built-in families, derived constants and
//! sampled hypothesis checks.

mod config;
mod constants;
mod hypotheses;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{build_model, BoxConfig, ModelConfig, TabulatedKernelConfig};
pub use constants::{derived_constants, ModelConstants, RadialEnvelope, SamplingPlan};
pub(crate) use constants::ball_lattice;
pub use hypotheses::{check_hypotheses, HypothesisReport, HypothesisVerdict, Verdict};

/// A point of `ℝ^d`, `d ≤ 2`; unused components stay at zero.
pub type Point = [f64; 2];

pub fn norm(x: Point) -> f64 {
    x[0].hypot(x[1])
}

pub fn distance(x: Point, y: Point) -> f64 {
    (x[0] - y[0]).hypot(x[1] - y[1])
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("dimension must be 1 or 2, got {0}")]
    InvalidDimension(usize),
    #[error("tabulated kernel has a negative entry {value} at index {index}")]
    NegativeTabulatedKernel { index: usize, value: f64 },
    #[error("tabulated kernel: {0}")]
    InvalidTabulation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    GaussianConfined,
    RankOne,
    Autonomous,
    CustomTabulated,
}

impl FamilyId {
    pub fn parse(name: &str) -> Result<Self, ModelError> {
        match name {
            "gaussian_confined" => Ok(Self::GaussianConfined),
            "rank_one" => Ok(Self::RankOne),
            "autonomous" => Ok(Self::Autonomous),
            "custom_tabulated" => Ok(Self::CustomTabulated),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GaussianConfined => "gaussian_confined",
            Self::RankOne => "rank_one",
            Self::Autonomous => "autonomous",
            Self::CustomTabulated => "custom_tabulated",
        }
    }
}

/// `v(t,x) = −κx + c·sin(2πt/T)·e₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDrift {
    pub kappa: f64,
    pub shift: f64,
}

/// `a(t,x) = a0 + a_mod·cos(2πt/T) − a2|x|² + shift + m·sin(2πt/T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFitness {
    pub a0: f64,
    pub a_mod: f64,
    pub a2: f64,
    pub shift: f64,
    pub modulation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    pub half_width: f64,
    pub cells_per_dim: usize,
    pub dimension: usize,
    /// Row-major, rows indexed by the source `y`, columns by the target `x`.
    pub values: Vec<f64>,
}

impl TabulatedKernel {
    fn cell(&self, p: Point) -> Option<usize> {
        let h = 2.0 * self.half_width / self.cells_per_dim as f64;
        let axis = |x: f64| -> Option<usize> {
            let u = ((x + self.half_width) / h).floor();
            (u >= 0.0 && u < self.cells_per_dim as f64).then_some(u as usize)
        };
        match self.dimension {
            1 => axis(p[0]),
            _ => Some(axis(p[0])? * self.cells_per_dim + axis(p[1])?),
        }
    }

    fn nodes(&self) -> usize {
        self.cells_per_dim.pow(self.dimension as u32)
    }

    pub fn eval(&self, y: Point, x: Point) -> f64 {
        match (self.cell(y), self.cell(x)) {
            (Some(i), Some(j)) => self.values[i * self.nodes() + j],
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `q(t,y,x) = β·G_σ(x − y)`.
    Convolution { beta: f64, sigma: f64 },
    /// `q(t,y,x) = β·G_σ(x)`.
    RankOne { beta: f64, sigma: f64 },
    Tabulated(Arc<TabulatedKernel>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMask {
    /// Keep `q(t,y,x)` only where `x₁ > y₁`.
    XGreaterThanY,
}

/// Parameters of the positivity conditions: `q > 0` on `|x − y| < r0`, mass on `B(x0, r1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityParams {
    pub x0: Point,
    pub r0: f64,
    pub r1: f64,
}

/// Normalized Gaussian density in dimension `d`.
pub fn gaussian(z: Point, sigma: f64, d: usize) -> f64 {
    let r2 = z[0] * z[0] + z[1] * z[1];
    (2.0 * PI * sigma * sigma).powf(-(d as f64) / 2.0) * (-r2 / (2.0 * sigma * sigma)).exp()
}

/// The triple `(v, a, q)` with its period. All maps are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    pub period: f64,
    pub dimension: usize,
    pub family: FamilyId,
    pub drift: LinearDrift,
    pub fitness_law: QuadraticFitness,
    pub kernel_law: Kernel,
    pub mask: Option<KernelMask>,
    pub positivity: PositivityParams,
}

impl CoefficientModel {
    fn phase(&self, t: f64) -> f64 {
        2.0 * PI * t / self.period
    }

    pub fn velocity(&self, t: f64, x: Point) -> Point {
        let LinearDrift { kappa, shift } = self.drift;
        let mut v = [-kappa * x[0] + shift * self.phase(t).sin(), -kappa * x[1]];
        if self.dimension == 1 {
            v[1] = 0.0;
        }
        v
    }

    pub fn velocity_divergence(&self, _t: f64, _x: Point) -> f64 {
        -self.drift.kappa * self.dimension as f64
    }

    pub fn fitness(&self, t: f64, x: Point) -> f64 {
        let f = self.fitness_law;
        let p = self.phase(t);
        let r2 = x[0] * x[0] + x[1] * x[1];
        let mut a = f.a0 - f.a2 * r2 + f.shift;
        if f.a_mod != 0.0 {
            a += f.a_mod * p.cos();
        }
        if f.modulation != 0.0 {
            a += f.modulation * p.sin();
        }
        a
    }

    /// `q(t, y, x)`: rate at which mass at `y` produces mass at `x`.
    pub fn kernel(&self, _t: f64, y: Point, x: Point) -> f64 {
        if let Some(KernelMask::XGreaterThanY) = self.mask {
            if x[0] <= y[0] {
                return 0.0;
            }
        }
        let d = self.dimension;
        match &self.kernel_law {
            Kernel::Convolution { beta, sigma } => beta * gaussian([x[0] - y[0], x[1] - y[1]], *sigma, d),
            Kernel::RankOne { beta, sigma } => beta * gaussian(x, *sigma, d),
            Kernel::Tabulated(tab) => tab.eval(y, x),
        }
    }

    /// True when `q` does not depend on `t` (all built-in families).
    pub fn kernel_is_autonomous(&self) -> bool {
        true
    }

    /// True when none of `v`, `a`, `q` depends on `t`.
    pub fn is_autonomous(&self) -> bool {
        self.drift.shift == 0.0
            && self.fitness_law.a_mod == 0.0
            && self.fitness_law.modulation == 0.0
            && self.kernel_is_autonomous()
    }

    /// Analytic bounds `(sup |v|/(1+|x|), sup |Div v|)` valid on all of `ℝ^d`.
    pub fn velocity_bounds(&self) -> (f64, f64) {
        let LinearDrift { kappa, shift } = self.drift;
        (kappa.abs().max(shift.abs()), kappa.abs() * self.dimension as f64)
    }

    /// Same model with `a` replaced by `a + c`.
    pub fn with_fitness_shift(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.fitness_law.shift += c;
        m
    }

    /// Same model with `a` replaced by `a + amplitude·sin(2πt/T)`.
    pub fn with_fitness_modulation(&self, amplitude: f64) -> Self {
        let mut m = self.clone();
        m.fitness_law.modulation += amplitude;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn confined() -> CoefficientModel {
        let cfg: ModelConfig = serde_json::from_value(serde_json::json!({
            "family": "gaussian_confined", "period": 1.0, "dimension": 1,
            "params": {"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2},
            "box": {"half_width": 6.0, "cells_per_dim": 64}
        }))
        .unwrap();
        build_model(&cfg).unwrap()
    }

    #[test]
    fn gaussian_confined_formulas() {
        let m = confined();
        let (t, x) = (0.3, [0.7, 0.0]);
        let v = m.velocity(t, x);
        assert!((v[0] - (-0.7 + 0.5 * (2.0 * PI * 0.3).sin())).abs() < 1e-15);
        assert!((m.fitness(t, x) - (1.0 + (2.0 * PI * 0.3).cos() - 0.49)).abs() < 1e-15);
        let g = 2.0 / (0.2 * (2.0 * PI).sqrt()) * (-(0.5f64).powi(2) / 0.08).exp();
        assert!((m.kernel(t, [0.2, 0.0], x) - g).abs() < 1e-14);
    }

    #[test]
    fn maps_are_periodic() {
        let m = confined();
        for k in 0..50 {
            let t = 0.137 * k as f64;
            let x = [(k as f64 * 0.77).sin() * 3.0, 0.0];
            let v0 = m.velocity(t, x);
            let v1 = m.velocity(t + m.period, x);
            assert!((v0[0] - v1[0]).abs() < 1e-13);
            assert!((m.fitness(t, x) - m.fitness(t + m.period, x)).abs() < 1e-13);
        }
    }

    #[test]
    fn divergence_matches_finite_difference() {
        let m = confined();
        let h = 1e-5;
        for &x in &[-2.0, 0.1, 3.3] {
            let fd = (m.velocity(0.2, [x + h, 0.0])[0] - m.velocity(0.2, [x - h, 0.0])[0]) / (2.0 * h);
            assert!((fd - m.velocity_divergence(0.2, [x, 0.0])).abs() < 1e-8);
        }
    }
}
