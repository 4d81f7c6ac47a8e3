use serde::{Deserialize, Serialize};

use super::grid::{DualGridField, GridField, TruncatedBox};
use super::SemiflowError;
use crate::flow::{FlowSolver, DEFAULT_FLOW_TOL};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::model::{CoefficientModel, Point};

/// Above this many nodes the quadratic kernel factor is applied as `f + hB(f + h/2·Bf)`
/// instead of being assembled.
const DENSE_FACTOR_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    Lie,
    Strang,
}

/// Where `B_{s'}` is evaluated inside each kernel sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelQuadrature {
    Midpoint,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    /// `m` in `dt = T/m`.
    pub steps_per_period: usize,
    pub interpolation_order: usize,
    pub kernel_quadrature: KernelQuadrature,
    pub splitting: Splitting,
    pub flow_tol: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 128,
            interpolation_order: 1,
            kernel_quadrature: KernelQuadrature::Midpoint,
            splitting: Splitting::Strang,
            flow_tol: DEFAULT_FLOW_TOL,
        }
    }
}

impl PropagatorConfig {
    pub fn dt(&self, period: f64) -> f64 {
        period / self.steps_per_period as f64
    }

    pub fn validate(&self) -> Result<(), SemiflowError> {
        if self.steps_per_period == 0 {
            return Err(SemiflowError::InvalidConfig("steps_per_period must be positive".into()));
        }
        if !matches!(self.interpolation_order, 1 | 3) {
            return Err(SemiflowError::InvalidConfig(format!(
                "interpolation_order must be 1 or 3, got {}",
                self.interpolation_order
            )));
        }
        if !(self.flow_tol > 0.0) {
            return Err(SemiflowError::InvalidConfig("flow_tol must be positive".into()));
        }
        Ok(())
    }
}

/// 1-d interpolation weights at grid coordinate `u` (node `i` sits at `u = i`); indices may
/// fall outside `0..n`, where the field is zero.
fn axis_weights(u: f64, order: usize) -> Vec<(isize, f64)> {
    let i0 = u.floor();
    let w = u - i0;
    let i0 = i0 as isize;
    if order == 1 {
        vec![(i0, 1.0 - w), (i0 + 1, w)]
    } else {
        vec![
            (i0 - 1, -w * (w - 1.0) * (w - 2.0) / 6.0),
            (i0, (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0),
            (i0 + 1, -(w + 1.0) * w * (w - 2.0) / 2.0),
            (i0 + 2, (w + 1.0) * w * (w - 1.0) / 6.0),
        ]
    }
}

/// Interpolation weights of a point on the grid nodes; zero extension outside the box.
pub fn interpolation_stencil(grid: &TruncatedBox, p: Point, order: usize) -> Vec<(usize, f64)> {
    let h = grid.spacing();
    let n = grid.cells_per_dim as isize;
    let coord = |x: f64| (x + grid.half_width) / h - 0.5;
    // far outside: every stencil index is out of range
    let reach = (order as f64 + 1.0) / 2.0 + 1.0;
    let in_reach = |u: f64| u > -reach && u < n as f64 - 1.0 + reach;
    let ux = coord(p[0]);
    if !in_reach(ux) {
        return Vec::new();
    }
    let wx: Vec<(usize, f64)> = axis_weights(ux, order)
        .into_iter()
        .filter(|&(i, w)| i >= 0 && i < n && w != 0.0)
        .map(|(i, w)| (i as usize, w))
        .collect();
    if grid.dimension == 1 {
        return wx;
    }
    let uy = coord(p[1]);
    if !in_reach(uy) {
        return Vec::new();
    }
    let wy: Vec<(usize, f64)> = axis_weights(uy, order)
        .into_iter()
        .filter(|&(i, w)| i >= 0 && i < n && w != 0.0)
        .map(|(i, w)| (i as usize, w))
        .collect();
    let mut out = Vec::with_capacity(wx.len() * wy.len());
    for &(i, a) in &wx {
        for &(j, b) in &wy {
            out.push((grid.flat_index([i, j]), a * b));
        }
    }
    out
}

#[derive(Debug, Clone)]
struct KernelSlot {
    b: DenseMatrix,
    /// `I + hB + h²B²/2` when assembled.
    factor: Option<DenseMatrix>,
}

impl KernelSlot {
    fn new(b: DenseMatrix, h: Option<f64>) -> Self {
        let factor = h.filter(|_| b.rows() <= DENSE_FACTOR_LIMIT).map(|h| {
            let mut k = b.matmul(&b);
            k.scale_add_identity(0.5 * h * h, 1.0);
            k.add_scaled(&b, h);
            k
        });
        Self { b, factor }
    }
}

/// Discrete semiflow on a fixed grid with one period of step operators cached.
#[derive(Debug, Clone)]
pub struct Propagator {
    model: CoefficientModel,
    grid: TruncatedBox,
    config: PropagatorConfig,
    dt: f64,
    solver: FlowSolver,
    transport: Vec<CsrMatrix>,
    transport_t: Vec<CsrMatrix>,
    slots: Vec<KernelSlot>,
}

impl Propagator {
    pub fn new(model: &CoefficientModel, grid: &TruncatedBox, config: &PropagatorConfig) -> Result<Self, SemiflowError> {
        config.validate()?;
        if grid.dimension != model.dimension {
            return Err(SemiflowError::InvalidConfig(format!(
                "grid dimension {} differs from model dimension {}",
                grid.dimension, model.dimension
            )));
        }
        let dt = config.dt(model.period);
        let solver = FlowSolver::for_model(model, config.flow_tol)?.with_safety_box(*grid);
        let mut p = Self {
            model: model.clone(),
            grid: *grid,
            config: *config,
            dt,
            solver,
            transport: Vec::new(),
            transport_t: Vec::new(),
            slots: Vec::new(),
        };
        for j in 0..config.steps_per_period {
            let t = j as f64 * dt;
            let v = p.assemble_transport(t, t + dt)?;
            p.transport_t.push(v.transpose());
            p.transport.push(v);
        }
        let h = match config.splitting {
            Splitting::Strang => Some(0.5 * dt),
            Splitting::Lie => None,
        };
        let times: Vec<f64> = if model.kernel_is_autonomous() {
            vec![0.0]
        } else {
            (0..config.steps_per_period)
                .flat_map(|j| p.slot_times(j as f64 * dt))
                .collect()
        };
        p.slots = times.into_iter().map(|t| KernelSlot::new(p.kernel_matrix(t), h)).collect();
        Ok(p)
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    pub fn grid(&self) -> &TruncatedBox {
        &self.grid
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn period(&self) -> f64 {
        self.model.period
    }

    pub fn steps_per_period(&self) -> usize {
        self.config.steps_per_period
    }

    /// Kernel evaluation times within the step starting at `t`.
    fn slot_times(&self, t: f64) -> Vec<f64> {
        let dt = self.dt;
        match (self.config.splitting, self.config.kernel_quadrature) {
            (Splitting::Strang, KernelQuadrature::Midpoint) => vec![t + 0.25 * dt, t + 0.75 * dt],
            (Splitting::Strang, KernelQuadrature::Endpoint) => vec![t, t + dt],
            (Splitting::Lie, KernelQuadrature::Midpoint) => vec![t + 0.5 * dt],
            (Splitting::Lie, KernelQuadrature::Endpoint) => vec![t + dt],
        }
    }

    fn slot(&self, step: usize, which: usize) -> &KernelSlot {
        if self.slots.len() == 1 {
            &self.slots[0]
        } else {
            let per = self.slot_times(0.0).len();
            &self.slots[(step % self.config.steps_per_period) * per + which]
        }
    }

    /// `Q[x][y] = h^d q(t, y, x)` so that `(B_t f)_x = Σ_y Q[x][y] f_y`.
    pub fn kernel_matrix(&self, t: f64) -> DenseMatrix {
        let nodes = self.grid.nodes();
        let hd = self.grid.cell_volume();
        DenseMatrix::from_fn(nodes.len(), nodes.len(), |i, j| hd * self.model.kernel(t, nodes[j], nodes[i]))
    }

    /// Matrix of `V_{t,s}`: one backward characteristic per node, interpolation, Jacobian and
    /// fitness weight.
    pub fn assemble_transport(&self, s: f64, t: f64) -> Result<CsrMatrix, SemiflowError> {
        if t < s {
            return Err(SemiflowError::BackwardInterval { s, t });
        }
        let order = self.config.interpolation_order;
        let mut rows = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            let x = self.grid.node(i);
            let back = self.solver.flow_map(&self.model, t, s, x)?;
            let weight = back.jacobian * (-back.fitness_integral).exp();
            rows.push(
                interpolation_stencil(&self.grid, back.end_point, order)
                    .into_iter()
                    .map(|(j, w)| (j, w * weight))
                    .collect(),
            );
        }
        Ok(CsrMatrix::from_rows(self.grid.len(), rows))
    }

    fn step_index(&self, t: f64) -> Result<i64, SemiflowError> {
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * self.dt * k.abs().max(1.0) {
            return Err(SemiflowError::TimeNotOnGrid { t, dt: self.dt });
        }
        Ok(k as i64)
    }

    fn cached(&self, k: i64) -> usize {
        k.rem_euclid(self.config.steps_per_period as i64) as usize
    }

    /// `V_{t,s} f` with a fresh flow solve per node over the whole interval.
    pub fn apply_transport(&self, s: f64, t: f64, f: &GridField) -> Result<GridField, SemiflowError> {
        let v = self.assemble_transport(s, t)?;
        Ok(GridField::new(self.grid, v.matvec(&f.values), t))
    }

    /// `B_t f(x) = h^d Σ_y q(t,y,x) f(y)`.
    pub fn apply_kernel(&self, t: f64, f: &GridField) -> GridField {
        let values = if self.model.kernel_is_autonomous() {
            self.slots[0].b.matvec(&f.values)
        } else {
            self.kernel_matrix(t).matvec(&f.values)
        };
        GridField::new(self.grid, values, t)
    }

    /// `B*_t φ`, the transpose of the matrix used by [`Self::apply_kernel`].
    pub fn apply_kernel_dual(&self, t: f64, phi: &DualGridField) -> DualGridField {
        let values = if self.model.kernel_is_autonomous() {
            self.slots[0].b.matvec_transpose(&phi.values)
        } else {
            self.kernel_matrix(t).matvec_transpose(&phi.values)
        };
        DualGridField::new(self.grid, values, t)
    }

    fn factor(&self, slot: &KernelSlot, h: f64, x: &[f64]) -> Vec<f64> {
        match &slot.factor {
            Some(k) => k.matvec(x),
            None => {
                let bx = slot.b.matvec(x);
                let inner: Vec<f64> = x.iter().zip(&bx).map(|(a, b)| a + 0.5 * h * b).collect();
                let b2 = slot.b.matvec(&inner);
                x.iter().zip(&b2).map(|(a, b)| a + h * b).collect()
            }
        }
    }

    fn factor_t(&self, slot: &KernelSlot, h: f64, x: &[f64]) -> Vec<f64> {
        match &slot.factor {
            Some(k) => k.matvec_transpose(x),
            None => {
                let bx = slot.b.matvec_transpose(x);
                let b2 = slot.b.matvec_transpose(&bx);
                (0..x.len()).map(|i| x[i] + h * bx[i] + 0.5 * h * h * b2[i]).collect()
            }
        }
    }

    fn step_values(&self, k: i64, v: &CsrMatrix, f: &[f64]) -> Vec<f64> {
        let step = self.cached(k);
        match self.config.splitting {
            Splitting::Strang => {
                let h = 0.5 * self.dt;
                let f1 = self.factor(self.slot(step, 0), h, f);
                let f2 = v.matvec(&f1);
                self.factor(self.slot(step, 1), h, &f2)
            }
            Splitting::Lie => {
                let f2 = v.matvec(f);
                let b = self.slot(step, 0).b.matvec(&f2);
                f2.iter().zip(&b).map(|(a, b)| a + self.dt * b).collect()
            }
        }
    }

    fn step_dual_values(&self, k: i64, vt: &CsrMatrix, phi: &[f64]) -> Vec<f64> {
        let step = self.cached(k);
        match self.config.splitting {
            Splitting::Strang => {
                let h = 0.5 * self.dt;
                let p1 = self.factor_t(self.slot(step, 1), h, phi);
                let p2 = vt.matvec(&p1);
                self.factor_t(self.slot(step, 0), h, &p2)
            }
            Splitting::Lie => {
                let b = self.slot(step, 0).b.matvec_transpose(phi);
                let p1: Vec<f64> = phi.iter().zip(&b).map(|(a, b)| a + self.dt * b).collect();
                vt.matvec(&p1)
            }
        }
    }

    /// One splitting step approximating `S_{t+dt,t}`.
    pub fn step(&self, t: f64, f: &GridField) -> Result<GridField, SemiflowError> {
        let k = self.step_index(t)?;
        let v = &self.transport[self.cached(k)];
        Ok(GridField::new(self.grid, self.step_values(k, v, &f.values), t + self.dt))
    }

    /// Exact transpose of [`Self::step`]: maps a test function at `t + dt` to one at `t`.
    pub fn step_dual(&self, t: f64, phi: &DualGridField) -> Result<DualGridField, SemiflowError> {
        let k = self.step_index(t)?;
        let vt = &self.transport_t[self.cached(k)];
        Ok(DualGridField::new(self.grid, self.step_dual_values(k, vt, &phi.values), t))
    }

    fn range(&self, s: f64, t: f64) -> Result<(i64, i64), SemiflowError> {
        let (ks, kt) = (self.step_index(s)?, self.step_index(t)?);
        if kt < ks {
            return Err(SemiflowError::BackwardInterval { s, t });
        }
        Ok((ks, kt))
    }

    /// `S_{t,s} f`.
    pub fn evolve(&self, s: f64, t: f64, f: &GridField) -> Result<GridField, SemiflowError> {
        let (ks, kt) = self.range(s, t)?;
        let mut values = f.values.clone();
        for k in ks..kt {
            values = self.step_values(k, &self.transport[self.cached(k)], &values);
        }
        Ok(GridField::new(self.grid, values, t))
    }

    /// `S*_{s,t} φ`: pulls a test function at time `t` back to time `s`.
    pub fn evolve_dual(&self, t: f64, s: f64, phi: &DualGridField) -> Result<DualGridField, SemiflowError> {
        let (ks, kt) = self.range(s, t)?;
        let mut values = phi.values.clone();
        for k in (ks..kt).rev() {
            values = self.step_dual_values(k, &self.transport_t[self.cached(k)], &values);
        }
        Ok(DualGridField::new(self.grid, values, s))
    }

    /// Forward snapshots at every step time in `[s, t]`.
    pub fn evolve_samples(&self, s: f64, t: f64, f: &GridField) -> Result<Vec<GridField>, SemiflowError> {
        let (ks, kt) = self.range(s, t)?;
        let mut out = vec![GridField::new(self.grid, f.values.clone(), s)];
        for k in ks..kt {
            let next = self.step_values(k, &self.transport[self.cached(k)], &out.last().unwrap().values);
            out.push(GridField::new(self.grid, next, (k + 1) as f64 * self.dt));
        }
        Ok(out)
    }

    /// Dual snapshots at every step time in `[s, t]`, ordered by increasing time.
    pub fn evolve_dual_samples(
        &self,
        t: f64,
        s: f64,
        phi: &DualGridField,
    ) -> Result<Vec<DualGridField>, SemiflowError> {
        let (ks, kt) = self.range(s, t)?;
        let mut out = vec![DualGridField::new(self.grid, phi.values.clone(), t)];
        for k in (ks..kt).rev() {
            let next = self.step_dual_values(k, &self.transport_t[self.cached(k)], &out.last().unwrap().values);
            out.push(DualGridField::new(self.grid, next, k as f64 * self.dt));
        }
        out.reverse();
        Ok(out)
    }

    /// Cached transport matrix of the step starting at `j·dt`.
    pub fn transport_step(&self, j: usize) -> &CsrMatrix {
        &self.transport[j % self.config.steps_per_period]
    }

    /// Column sums of the transport-only product over the first `steps` steps, i.e. the
    /// L¹ gain of each source cell.
    pub fn transport_column_sums(&self, steps: usize) -> Vec<f64> {
        let mut w = vec![1.0; self.grid.len()];
        for k in (0..steps).rev() {
            w = self.transport_t[k % self.config.steps_per_period].matvec(&w);
        }
        w
    }

    /// Dense matrix of `S_{t,s}`, assembled column by column.
    pub fn dense_evolution(&self, s: f64, t: f64) -> Result<DenseMatrix, SemiflowError> {
        let n = self.grid.len();
        let mut m = DenseMatrix::zeros(n, n);
        let mut e = GridField::zeros(self.grid, s);
        for j in 0..n {
            e.values[j] = 1.0;
            let col = self.evolve(s, t, &e)?;
            e.values[j] = 0.0;
            for (i, v) in col.values.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }
}

/// `‖evolve(0,T,f)‖₁` on successively refined `(n, dt)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGridStudy {
    /// `(cells_per_dim, steps_per_period, ‖S f‖₁)`.
    pub levels: Vec<(usize, usize, f64)>,
    /// `log₂` of successive difference ratios.
    pub observed_orders: Vec<f64>,
}

pub fn two_grid_study(
    model: &CoefficientModel,
    grid: &TruncatedBox,
    config: &PropagatorConfig,
    levels: usize,
    initial: impl Fn(Point) -> f64,
) -> Result<TwoGridStudy, SemiflowError> {
    let mut out = Vec::new();
    for l in 0..levels {
        let g = grid.refined(1 << l);
        let c = PropagatorConfig {
            steps_per_period: config.steps_per_period << l,
            ..*config
        };
        let p = Propagator::new(model, &g, &c)?;
        let f = GridField::from_fn(g, 0.0, &initial);
        out.push((g.cells_per_dim, c.steps_per_period, p.evolve(0.0, model.period, &f)?.l1_norm()));
    }
    let diffs: Vec<f64> = out.windows(2).map(|w| (w[1].2 - w[0].2).abs()).collect();
    let observed_orders = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(TwoGridStudy {
        levels: out,
        observed_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};
    use crate::semiflow::{abs_pairing, pairing};
    use serde_json::json;

    fn build(family: &str, params: serde_json::Value, n: usize) -> (CoefficientModel, TruncatedBox) {
        let cfg: ModelConfig = serde_json::from_value(json!({
            "family": family, "period": 1.0, "dimension": 1, "params": params,
            "box": {"half_width": 6.0, "cells_per_dim": n}
        }))
        .unwrap();
        (build_model(&cfg).unwrap(), cfg.truncated_box().unwrap())
    }

    fn transport_only(kappa: f64, a0: f64) -> (CoefficientModel, TruncatedBox) {
        build(
            "gaussian_confined",
            json!({"kappa": kappa, "c": 0.0, "a0": a0, "a_mod": 0.0, "a2": 0.0, "beta": 0.0, "sigma": 0.2}),
            128,
        )
    }

    fn bump(g: TruncatedBox) -> GridField {
        GridField::from_fn(g, 0.0, |x| (-(x[0] - 0.3).powi(2)).exp())
    }

    #[test]
    fn identity_transport() {
        let (m, g) = transport_only(0.0, 0.0);
        let p = Propagator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let f = bump(g);
        assert_eq!(p.apply_transport(0.0, 0.7, &f).unwrap().values, f.values);
    }

    #[test]
    fn pure_decay() {
        let (m, g) = transport_only(0.0, -0.5);
        let p = Propagator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let f = bump(g);
        let out = p.apply_transport(0.0, 2.0, &f).unwrap();
        for (a, b) in out.values.iter().zip(&f.values) {
            assert!((a - (-1.0f64).exp() * b).abs() < 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn contraction_conserves_mass() {
        let (m, g) = build(
            "gaussian_confined",
            json!({"kappa": 1.0, "c": 0.0, "a0": 0.0, "a_mod": 0.0, "a2": 0.0, "beta": 0.0, "sigma": 0.2}),
            256,
        );
        let p = Propagator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let f = GridField::from_fn(g, 0.0, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
        let out = p.apply_transport(0.0, 1.0, &f).unwrap();
        assert!((out.mass() - f.mass()).abs() < 2.0 * g.spacing(), "{} {}", out.mass(), f.mass());
        assert!((f.mass() - 2.0).abs() <= g.spacing());
    }

    #[test]
    fn kernel_examples() {
        let (m, g) = build("rank_one", json!({"a0": -0.5, "beta": 2.0}), 128);
        let p = Propagator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        assert!(p.apply_kernel(0.0, &GridField::zeros(g, 0.0)).values.iter().all(|&v| v == 0.0));
        let f = bump(g);
        let out = p.apply_kernel(0.0, &f);
        let total = f.mass();
        for (i, v) in out.values.iter().enumerate() {
            let k = crate::model::gaussian(g.node(i), 0.3, 1);
            assert!((v - 2.0 * k * total).abs() < 1e-12);
        }
        let ones = DualGridField::constant(g, 1.0, 0.0);
        let d = p.apply_kernel_dual(0.0, &ones);
        for v in &d.values {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_of_single_cell_is_gaussian() {
        let (m, g) = build(
            "gaussian_confined",
            json!({"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2}),
            512,
        );
        let p = Propagator::new(&m, &g, &PropagatorConfig { steps_per_period: 4, ..Default::default() }).unwrap();
        let y0 = g.nearest_node([0.5, 0.0]);
        let out = p.apply_kernel(0.0, &GridField::dirac(g, y0, 0.0));
        assert!((out.mass() - 2.0).abs() < 1e-6);
        let c = g.node(y0);
        let i = g.nearest_node([0.7, 0.0]);
        let expected = 2.0 * crate::model::gaussian([g.node(i)[0] - c[0], 0.0], 0.2, 1);
        assert!((out.values[i] - expected).abs() < 1e-12);
    }

    #[test]
    fn step_without_kernel_is_transport() {
        let (m, g) = transport_only(1.0, 0.3);
        let p = Propagator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let f = bump(g);
        let a = p.step(0.25, &f).unwrap();
        let b = p.apply_transport(0.25, 0.25 + p.dt(), &f).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn rank_one_step_leading_eigenvalue() {
        let (m, g) = build("rank_one", json!({"a0": -0.5, "beta": 2.0}), 64);
        let cfg = PropagatorConfig {
            steps_per_period: 1000,
            ..Default::default()
        };
        let p = Propagator::new(&m, &g, &cfg).unwrap();
        let dt = p.dt();
        // k is the eigenvector of the rank-one step; its ratio is the eigenvalue
        let k = GridField::from_fn(g, 0.0, |x| crate::model::gaussian(x, 0.3, 1));
        let out = p.step(0.0, &k).unwrap();
        let ratio = out.values[32] / k.values[32];
        let mu = k.mass();
        let z = 0.5 * dt * 2.0 * mu;
        let exact = (-0.5 * dt).exp() * (1.0 + z + 0.5 * z * z).powi(2);
        assert!((ratio - exact).abs() < 1e-13);
        assert!((ratio - (-0.5 * dt).exp() * (1.0 + 2.0 * dt)).abs() < 10.0 * dt * dt);
    }

    #[test]
    fn step_duality_to_roundoff() {
        let (m, g) = build(
            "gaussian_confined",
            json!({"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2}),
            64,
        );
        for splitting in [Splitting::Strang, Splitting::Lie] {
            let p = Propagator::new(&m, &g, &PropagatorConfig { splitting, ..Default::default() }).unwrap();
            let f = GridField::from_fn(g, 0.0, |x| (x[0] * 3.1).sin() + 0.2);
            let phi = DualGridField::from_fn(g, 0.0, |x| (x[0] * 1.7).cos());
            let t = 5.0 * p.dt();
            let lhs = pairing(&p.step_dual(t, &phi).unwrap(), &f);
            let rhs = pairing(&phi, &p.step(t, &f).unwrap());
            let scale = abs_pairing(&phi.abs(), &p.step(t, &f.abs()).unwrap());
            assert!((lhs - rhs).abs() <= 10.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn periodic_caching_matches_fresh_assembly() {
        let (m, g) = build(
            "gaussian_confined",
            json!({"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2}),
            32,
        );
        let p = Propagator::new(&m, &g, &PropagatorConfig { steps_per_period: 16, ..Default::default() }).unwrap();
        let j = 5;
        let t = j as f64 * p.dt() + m.period;
        let fresh = p.assemble_transport(t, t + p.dt()).unwrap().to_dense();
        let cached = p.transport_step(j).to_dense();
        for (a, b) in fresh.data().iter().zip(cached.data()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn cubic_stencil_reproduces_cubics() {
        let g = TruncatedBox::new(1.0, 16, 1).unwrap();
        let p = [0.137, 0.0];
        let st = interpolation_stencil(&g, p, 3);
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let v: f64 = st.iter().map(|&(j, w)| w * f(g.node(j)[0])).sum();
        assert!((v - f(p[0])).abs() < 1e-13);
        assert!(interpolation_stencil(&g, [3.0, 0.0], 3).is_empty());
    }
}
