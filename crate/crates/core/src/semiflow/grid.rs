//! Truncated uniform grids and the density / test-function fields living on them.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::Point;

use super::SemiflowError;

/// The box `[-L, L]^d` cut into `n^d` cells; grid nodes are cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedBox {
    pub half_width: f64,
    pub cells_per_dim: usize,
    pub dimension: usize,
}

impl TruncatedBox {
    pub fn new(half_width: f64, cells_per_dim: usize, dimension: usize) -> Result<Self, SemiflowError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(SemiflowError::InvalidBox(format!("half_width must be positive, got {half_width}")));
        }
        if cells_per_dim < 8 {
            return Err(SemiflowError::InvalidBox(format!(
                "cells_per_dim must be at least 8, got {cells_per_dim}"
            )));
        }
        if !(1..=2).contains(&dimension) {
            return Err(SemiflowError::InvalidBox(format!("dimension must be 1 or 2, got {dimension}")));
        }
        Ok(Self {
            half_width,
            cells_per_dim,
            dimension,
        })
    }

    /// Cell width `h = 2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells_per_dim as f64
    }

    /// `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    /// Lebesgue measure of the box.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dimension as i32)
    }

    /// Number of nodes `n^d`.
    pub fn len(&self) -> usize {
        self.cells_per_dim.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Per-axis indices of a flat node index (row-major, first axis slowest).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dimension {
            1 => [idx, 0],
            _ => [idx / self.cells_per_dim, idx % self.cells_per_dim],
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dimension {
            1 => multi[0],
            _ => multi[0] * self.cells_per_dim + multi[1],
        }
    }

    pub fn node(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        match self.dimension {
            1 => [self.coordinate(m[0]), 0.0],
            _ => [self.coordinate(m[0]), self.coordinate(m[1])],
        }
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Largest Euclidean norm of a node.
    pub fn max_node_radius(&self) -> f64 {
        let c = self.half_width - 0.5 * self.spacing();
        c * (self.dimension as f64).sqrt()
    }

    /// Nodes strictly inside `B(center, r)`.
    pub fn nodes_in_ball(&self, center: Point, r: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| crate::model::distance(self.node(i), center) < r)
            .collect()
    }

    /// Index of the node closest to `p` (clamped to the box).
    pub fn nearest_node(&self, p: Point) -> usize {
        let h = self.spacing();
        let n = self.cells_per_dim as isize;
        let axis = |x: f64| -> usize { (((x + self.half_width) / h).floor() as isize).clamp(0, n - 1) as usize };
        self.flat_index([axis(p[0]), if self.dimension == 2 { axis(p[1]) } else { 0 }])
    }

    /// Same box with the resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            cells_per_dim: self.cells_per_dim * factor,
            ..*self
        }
    }
}

/// A density sampled on grid nodes (the `L¹` side of the pairing).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: TruncatedBox,
    pub values: Vec<f64>,
    pub time: f64,
}

/// A test function sampled on grid nodes (the `L^∞` side of the pairing).
#[derive(Debug, Clone, PartialEq)]
pub struct DualGridField {
    pub grid: TruncatedBox,
    pub values: Vec<f64>,
    pub time: f64,
}

macro_rules! field_common {
    ($ty:ident) => {
        impl $ty {
            pub fn new(grid: TruncatedBox, values: Vec<f64>, time: f64) -> Self {
                assert_eq!(values.len(), grid.len(), "field length does not match grid");
                Self { grid, values, time }
            }

            pub fn zeros(grid: TruncatedBox, time: f64) -> Self {
                Self::new(grid, vec![0.0; grid.len()], time)
            }

            pub fn constant(grid: TruncatedBox, value: f64, time: f64) -> Self {
                Self::new(grid, vec![value; grid.len()], time)
            }

            pub fn from_fn(grid: TruncatedBox, time: f64, f: impl Fn(Point) -> f64) -> Self {
                let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
                Self::new(grid, values, time)
            }

            /// Indicator of the open ball `B(center, r)` on the nodes.
            pub fn indicator_ball(grid: TruncatedBox, center: Point, r: f64, time: f64) -> Self {
                Self::from_fn(grid, time, |x| {
                    if crate::model::distance(x, center) < r {
                        1.0
                    } else {
                        0.0
                    }
                })
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn scale(&mut self, c: f64) {
                for v in &mut self.values {
                    *v *= c;
                }
            }

            pub fn scaled(mut self, c: f64) -> Self {
                self.scale(c);
                self
            }

            pub fn abs(&self) -> Self {
                Self::new(self.grid, self.values.iter().map(|v| v.abs()).collect(), self.time)
            }

            pub fn min_value(&self) -> f64 {
                self.values.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub fn max_value(&self) -> f64 {
                self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }

            pub fn sup_norm(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            /// Discrete `L¹` norm `h^d Σ|v|`.
            pub fn l1_norm(&self) -> f64 {
                self.grid.cell_volume() * linalg::sum(self.values.iter().map(|v| v.abs()))
            }

            pub fn l1_distance(&self, other: &Self) -> f64 {
                self.grid.cell_volume()
                    * linalg::sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()))
            }

            pub fn sup_distance(&self, other: &Self) -> f64 {
                self.values
                    .iter()
                    .zip(&other.values)
                    .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
            }

            pub fn is_nonnegative(&self) -> bool {
                self.values.iter().all(|&v| v >= 0.0)
            }

            pub fn is_strictly_positive(&self) -> bool {
                self.values.iter().all(|&v| v > 0.0)
            }
        }
    };
}

field_common!(GridField);
field_common!(DualGridField);

impl GridField {
    /// Discrete mass `h^d Σ v`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * linalg::sum(self.values.iter().copied())
    }

    /// `L¹` mass located in the outer shell `|x|_∞ > (1 - fraction) L`.
    pub fn outer_shell_mass(&self, fraction: f64) -> f64 {
        let cut = (1.0 - fraction) * self.grid.half_width;
        let h_d = self.grid.cell_volume();
        h_d * linalg::sum((0..self.len()).filter_map(|i| {
            let x = self.grid.node(i);
            (x[0].abs().max(x[1].abs()) > cut).then(|| self.values[i].abs())
        }))
    }

    /// Unit-mass single-cell field (the discrete Dirac at node `idx`).
    pub fn dirac(grid: TruncatedBox, idx: usize, time: f64) -> Self {
        let mut f = Self::zeros(grid, time);
        f.values[idx] = 1.0 / grid.cell_volume();
        f
    }
}

/// Discrete duality bracket `⟨φ, f⟩ = h^d Σ φ f`.
pub fn pairing(phi: &DualGridField, f: &GridField) -> f64 {
    assert_eq!(phi.grid, f.grid, "pairing across different grids");
    f.grid.cell_volume() * linalg::dot(&phi.values, &f.values)
}

/// `⟨|φ|, |f|⟩`, the natural scale for rounding defects of a pairing.
pub fn abs_pairing(phi: &DualGridField, f: &GridField) -> f64 {
    f.grid.cell_volume() * linalg::sum(phi.values.iter().zip(&f.values).map(|(a, b)| (a * b).abs()))
}
