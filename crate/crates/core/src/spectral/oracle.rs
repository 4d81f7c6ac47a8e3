use serde::{Deserialize, Serialize};

use super::{PeriodOperator, SpectralError};

/// Largest node count for which the dense period matrix is eigensolved.
pub const DENSE_ORACLE_LIMIT: usize = 4096;

/// Relative tolerance used for multiplicity and peripheral counts.
const PERIPHERAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `(re, im)` sorted by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub leading: f64,
    pub leading_imag: f64,
    /// `|λ₂| / |λ₁|`.
    pub gap_ratio: f64,
    pub leading_multiplicity: usize,
    pub peripheral_count: usize,
}

impl SpectrumReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<(f64, f64)>) -> Self {
        let modulus = |z: &(f64, f64)| z.0.hypot(z.1);
        eigenvalues.sort_by(|a, b| modulus(b).total_cmp(&modulus(a)));
        let lead = eigenvalues[0];
        let r1 = modulus(&lead);
        let leading_multiplicity = eigenvalues
            .iter()
            .filter(|z| (z.0 - lead.0).hypot(z.1 - lead.1) <= PERIPHERAL_TOL * r1)
            .count();
        let peripheral_count = eigenvalues
            .iter()
            .filter(|z| (modulus(z) - r1).abs() <= PERIPHERAL_TOL * r1)
            .count();
        let gap_ratio = eigenvalues.get(1).map_or(0.0, |z| modulus(z) / r1);
        Self {
            leading: lead.0,
            leading_imag: lead.1,
            gap_ratio,
            leading_multiplicity,
            peripheral_count,
            eigenvalues,
        }
    }

    pub fn leading_is_simple_real_positive(&self) -> bool {
        self.leading > 0.0 && self.leading_imag == 0.0 && self.leading_multiplicity == 1 && self.peripheral_count == 1
    }
}

/// Full eigendecomposition of the assembled period matrix.
pub fn dense_oracle(s: &PeriodOperator) -> Result<SpectrumReport, SpectralError> {
    let nodes = s.grid().len();
    if nodes > DENSE_ORACLE_LIMIT {
        return Err(SpectralError::SizeGuard {
            nodes,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let eig = s
        .dense_matrix()?
        .to_faer()
        .eigenvalues()
        .map_err(|_| SpectralError::EigenSolve(nodes))?;
    Ok(SpectrumReport::from_eigenvalues(eig.iter().map(|z| (z.re, z.im)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiflow::PropagatorConfig;
    use crate::spectral::tests::setup;
    use serde_json::json;

    #[test]
    fn rank_one_spectrum() {
        let (m, g) = setup("rank_one", json!({"a0": -0.5, "beta": 2.0}), 32);
        let cfg = PropagatorConfig {
            steps_per_period: 256,
            ..Default::default()
        };
        let s = PeriodOperator::new(&m, &g, &cfg).unwrap();
        let rep = dense_oracle(&s).unwrap();
        assert!(rep.leading_is_simple_real_positive());
        assert!((rep.leading - 1.5f64.exp()).abs() < 1e-4 * rep.leading);
        for z in &rep.eigenvalues[1..] {
            assert!((z.0 - (-0.5f64).exp()).abs() < 1e-10 && z.1.abs() < 1e-10);
        }
        assert!((rep.gap_ratio - (-2.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn diagonal_fitness_spectrum() {
        // no drift, no kernel: the period matrix is diag(e^{T a(x)})
        let (m, g) = setup(
            "autonomous",
            json!({"kappa": 0.0, "a0": 0.5, "a2": 1.0, "beta": 0.0, "sigma": 0.2}),
            16,
        );
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig { steps_per_period: 8, ..Default::default() }).unwrap();
        let rep = dense_oracle(&s).unwrap();
        let amax = g.nodes().iter().map(|&x| m.fitness(0.0, x)).fold(f64::NEG_INFINITY, f64::max);
        assert!((rep.leading - amax.exp()).abs() < 1e-12 * rep.leading);
        // the two central cells share the maximum
        assert_eq!(rep.leading_multiplicity, 2);
    }

    #[test]
    fn size_guard() {
        let cfg: crate::model::ModelConfig = serde_json::from_value(json!({
            "family": "rank_one", "period": 1.0, "dimension": 2, "params": {"a0": -0.5, "beta": 2.0},
            "box": {"half_width": 3.0, "cells_per_dim": 65}
        }))
        .unwrap();
        let m = crate::model::build_model(&cfg).unwrap();
        let g = cfg.truncated_box().unwrap();
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig { steps_per_period: 2, ..Default::default() }).unwrap();
        assert!(matches!(dense_oracle(&s), Err(SpectralError::SizeGuard { nodes: 4225, .. })));
    }
}
