use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{random_field, HarrisError};
use crate::model::{norm, ModelConstants};
use crate::semiflow::abs_pairing;
use crate::spectral::{EigenSolution, PeriodOperator};

/// `‖Ũf‖₁ ≤ γ‖f‖₁ + Θ⟨φ0,|f|⟩` for `Ũ = e^{−λ_F T} S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPair {
    pub gamma: f64,
    pub big_theta: f64,
    /// Radius beyond which `ā + q̂ ≤ −α`.
    pub radius: f64,
    pub small_theta: f64,
    /// `1 + |λ_F|`.
    pub alpha: f64,
    /// `min φ_t` over `B(0, R)` and all sampled times.
    pub c_r: f64,
    /// No ladder radius reaches the threshold; `R` covers the whole box.
    pub covers_whole_box: bool,
    pub checks_passed: usize,
    pub checks_total: usize,
    /// Smallest `γ‖f‖ + Θ⟨φ0,|f|⟩ − ‖Ũf‖` over the random fields.
    pub worst_margin: f64,
}

impl LyapunovPair {
    pub fn holds(&self) -> bool {
        self.checks_passed == self.checks_total
    }
}

pub fn lyapunov_pair(
    constants: &ModelConstants,
    sol: &EigenSolution,
    s: &PeriodOperator,
    samples: usize,
    seed: u64,
) -> Result<LyapunovPair, HarrisError> {
    let grid = *s.grid();
    let period = s.period();
    let lambda = sol.lambda_f;
    let alpha = 1.0 + lambda.abs();
    let env = &constants.a_bar;
    let hit = env
        .radii
        .iter()
        .zip(&env.values)
        .find(|(_, a)| **a + constants.q_hat <= -alpha)
        .map(|(r, _)| *r);
    let covers_whole_box = hit.is_none();
    let radius = hit.unwrap_or(grid.max_node_radius() + grid.spacing());
    let small_theta = env.values[0] + constants.q_hat + alpha;

    let inside: Vec<usize> = (0..grid.len()).filter(|&i| norm(grid.node(i)) < radius).collect();
    let c_r = sol
        .phi_samples
        .iter()
        .flat_map(|phi| inside.iter().map(move |&i| phi.values[i]))
        .fold(f64::INFINITY, f64::min);
    let rate = alpha + lambda;
    let big_theta = small_theta / c_r * (-(-rate * period).exp_m1()) / rate;
    let gamma = (-period).exp();

    let phi0 = sol.phi0();
    let scale = (-lambda * period).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..samples {
        let f = random_field(&grid, &mut rng, true);
        let uf = s.apply(&f)?.scaled(scale);
        let rhs = gamma * f.l1_norm() + big_theta * abs_pairing(phi0, &f);
        let margin = rhs - uf.l1_norm();
        worst_margin = worst_margin.min(margin);
        if margin >= -1e-12 * rhs {
            passed += 1;
        }
    }
    Ok(LyapunovPair {
        gamma,
        big_theta,
        radius,
        small_theta,
        alpha,
        c_r,
        covers_whole_box,
        checks_passed: passed,
        checks_total: samples,
        worst_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harris::tests::setup;
    use crate::semiflow::PropagatorConfig;
    use crate::spectral::{solve, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use serde_json::json;

    #[test]
    fn rank_one_falls_back_to_whole_box() {
        let (m, g, c) = setup("rank_one", json!({"a0": -0.5, "beta": 2.0}), 64);
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let sol = solve(&s, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l = lyapunov_pair(&c, &sol, &s, 50, 1).unwrap();
        assert!(l.covers_whole_box);
        assert!(l.holds());
        assert!((l.gamma - (-1.0f64).exp()).abs() < 1e-15);
        assert!(l.big_theta > 1.0 - l.gamma);
    }

    #[test]
    fn confined_radius_matches_threshold() {
        let (m, g, c) = setup(
            "gaussian_confined",
            json!({"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2}),
            64,
        );
        let s = PeriodOperator::new(&m, &g, &PropagatorConfig::default()).unwrap();
        let sol = solve(&s, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l = lyapunov_pair(&c, &sol, &s, 50, 1).unwrap();
        // ā(x) = 2 − x², so the threshold radius solves 2 − R² + q̂ = −1 − |λ_F|
        let exact = (3.0 + sol.lambda_f.abs() + c.q_hat).sqrt();
        assert!(!l.covers_whole_box);
        assert!(l.radius >= exact - 0.2 && l.radius <= exact * 1.2, "{} vs {}", l.radius, exact);
        assert!(l.holds());
        // fixed point: ‖Ũf0‖ = ‖f0‖ ≤ γ‖f0‖ + Θ
        assert!(l.big_theta >= (1.0 - l.gamma) * sol.f0().l1_norm());
    }
}
