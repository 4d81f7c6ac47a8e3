use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{envelope_integrals, random_field, HarrisError, LyapunovPair};
use crate::model::{norm, CoefficientModel, ModelConstants};
use crate::semiflow::{pairing, GridField};
use crate::spectral::{EigenSolution, PeriodOperator};

/// Which bound fixed the Harris radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    /// `A·sup_{|x|≥R} Φ ≤ 1/2`.
    Envelope,
    /// `A·sup_{|x|≥R} φ0 ≤ 1/2` read off the grid.
    Phi0,
    /// Neither tail is small inside the box; `R` covers every node.
    WholeBox,
}

/// Weighted-norm contraction factor and the weight achieving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaChoice {
    pub beta: f64,
    /// `1 − ζ`, kept separately since it can be far below machine epsilon.
    pub gap: f64,
    pub zeta: f64,
    /// `‖Ũⁿf − ⟨φ0,f⟩f0‖₁ ≤ C ζⁿ ‖f − ⟨φ0,f⟩f0‖₁`.
    pub prefactor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarrisCertificate {
    pub gamma: f64,
    pub big_theta: f64,
    pub lyapunov_radius: f64,
    pub small_theta: f64,
    pub big_a: f64,
    pub harris_radius: f64,
    pub tail_source: TailSource,
    /// Radius of the support of `g_A`.
    pub support_radius: f64,
    /// `Sf ≥ c⟨1_{B(0,R_harris)}, f⟩ 1_{B(0,support_radius)}`.
    pub c: f64,
    pub g_a_height: f64,
    pub g_a_mass: f64,
    /// `η = ⟨φ0, g_A⟩`.
    pub eta: f64,
    /// `(c/2) c_A e^{−λ_F T}|B(0,R1)|` with `c_A = min φ0` on the support.
    pub eta_lower_bound: f64,
    pub zeta: ZetaChoice,
    pub zeta_constructive: f64,
    pub zeta_observed: Option<f64>,
    pub zeta_oracle: Option<f64>,
    /// `max_x (φ0 − Φ)(x)`.
    pub envelope_excess: f64,
    pub checks_passed: usize,
    pub checks_total: usize,
    /// Smallest `(Ũf − ⟨φ0,f⟩g_A)(x)` over checked fields and nodes.
    pub worst_margin: f64,
    #[serde(skip)]
    pub g_a: Option<GridField>,
}

impl HarrisCertificate {
    pub fn holds(&self) -> bool {
        self.checks_passed == self.checks_total
    }
}

/// `Φ(x)` at every node: the upper envelope of `φ0` from the dual Duhamel formula.
pub fn phi_envelope(
    model: &CoefficientModel,
    constants: &ModelConstants,
    sol: &EigenSolution,
    s: &PeriodOperator,
) -> Result<Vec<f64>, HarrisError> {
    let grid = s.grid();
    let period = s.period();
    let steps = s.propagator().steps_per_period();
    let dt = period / steps as f64;
    let lambda = sol.lambda_f;
    let growth = ((constants.q_hat + constants.a_sup - lambda) * period).exp() * constants.q_hat;
    grid.nodes()
        .into_iter()
        .map(|x| {
            let integrals = envelope_integrals(model, constants, x, period, steps)?;
            let first = (-lambda * period + integrals[steps]).exp();
            let outer: f64 = integrals.windows(2).map(|w| dt * w[0].max(w[1]).exp()).sum();
            Ok(first + growth * outer)
        })
        .collect()
}

/// Smallest `ζ = max(ζ_A, ζ_B2, ζ_BA)` over the weight `β`.
pub fn zeta_from_constants(gamma: f64, big_theta: f64, big_a: f64, eta: f64, g_mass: f64) -> ZetaChoice {
    let gap = |beta: f64| {
        let drift = big_a * (1.0 - gamma) - 2.0 * big_theta;
        let g_large = beta * drift / (2.0 + beta * big_a);
        let g_small = (eta + beta * (1.0 - big_theta - gamma + g_mass)) / (1.0 + beta);
        let g_edge = (2.0 * eta + beta * (drift + 2.0 * g_mass)) / (2.0 + beta * big_a);
        g_large.min(g_small).min(g_edge)
    };
    // the gap is a minimum of monotone functions of β, hence unimodal in log β
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut k = -640;
    while k <= 40 {
        let lb = k as f64 * 0.5;
        let v = gap(10f64.powf(lb));
        if v > best.0 {
            best = (v, lb);
        }
        k += 1;
    }
    let (mut lo, mut hi) = (best.1 - 0.5, best.1 + 0.5);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if gap(10f64.powf(m1)) < gap(10f64.powf(m2)) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let lb = 0.5 * (lo + hi);
    let (beta, g) = if gap(10f64.powf(lb)) >= best.0 {
        (10f64.powf(lb), gap(10f64.powf(lb)))
    } else {
        (10f64.powf(best.1), best.0)
    };
    ZetaChoice {
        beta,
        gap: g,
        zeta: 1.0 - g,
        prefactor: (1.0 + beta) / beta,
    }
}

/// Smallest sorted-node radius whose exterior tail satisfies `A·sup ≤ 1/2`.
fn tail_radius(radii_sorted: &[(f64, usize)], values: &[f64], big_a: f64) -> Option<f64> {
    let n = radii_sorted.len();
    let mut suffix = vec![0.0f64; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1].max(values[radii_sorted[j].1]);
    }
    (1..n).find(|&j| big_a * suffix[j] <= 0.5).map(|j| radii_sorted[j].0)
}

#[allow(clippy::too_many_arguments)]
pub fn harris_certificate(
    model: &CoefficientModel,
    constants: &ModelConstants,
    sol: &EigenSolution,
    s: &PeriodOperator,
    lyapunov: &LyapunovPair,
    samples: usize,
    seed: u64,
) -> Result<HarrisCertificate, HarrisError> {
    let grid = *s.grid();
    let hd = grid.cell_volume();
    let period = s.period();
    let lambda = sol.lambda_f;
    let decay = (-lambda * period).exp();
    let (gamma, big_theta) = (lyapunov.gamma, lyapunov.big_theta);
    let big_a = 4.0 * big_theta / (1.0 - gamma);
    let phi0 = sol.phi0();

    let envelope = phi_envelope(model, constants, sol, s)?;
    let envelope_excess = phi0
        .values
        .iter()
        .zip(&envelope)
        .map(|(p, e)| p - e)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut by_radius: Vec<(f64, usize)> = (0..grid.len()).map(|i| (norm(grid.node(i)), i)).collect();
    by_radius.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (harris_radius, tail_source) = match tail_radius(&by_radius, &envelope, big_a) {
        Some(r) => (r, TailSource::Envelope),
        None => match tail_radius(&by_radius, &phi0.values, big_a) {
            Some(r) => (r, TailSource::Phi0),
            None => (grid.max_node_radius() + grid.spacing(), TailSource::WholeBox),
        },
    };

    // columns of the period matrix for the sources in B(0, R_harris)
    let sources: Vec<usize> = by_radius.iter().take_while(|(r, _)| *r < harris_radius).map(|p| p.1).collect();
    let mut row_min = vec![f64::INFINITY; grid.len()];
    let mut e = GridField::zeros(grid, 0.0);
    for &y in &sources {
        e.values[y] = 1.0;
        let col = s.apply(&e)?;
        e.values[y] = 0.0;
        for (m, v) in row_min.iter_mut().zip(&col.values) {
            *m = m.min(*v / hd);
        }
    }

    // support radius maximizing η among node radii up to A
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let (mut c_run, mut phi_mass, mut count) = (f64::INFINITY, 0.0, 0usize);
    let mut j = 0;
    while j < by_radius.len() {
        let r = by_radius[j].0;
        if r > big_a {
            break;
        }
        while j < by_radius.len() && by_radius[j].0 == r {
            let i = by_radius[j].1;
            c_run = c_run.min(row_min[i]);
            phi_mass += hd * phi0.values[i];
            count += 1;
            j += 1;
        }
        let eta = 0.5 * c_run * decay * phi_mass;
        if best.map_or(true, |b| eta > b.1) {
            best = Some((r, eta, c_run, count as f64 * hd));
        }
    }
    let (support_radius, eta, c, support_volume) = best.ok_or(HarrisError::InvalidRadius(big_a))?;
    let g_a_height = 0.5 * c * decay;
    let g_a = GridField::from_fn(grid, 0.0, |x| if norm(x) <= support_radius { g_a_height } else { 0.0 });
    let g_a_mass = g_a_height * support_volume;
    let c_support = (0..grid.len())
        .filter(|&i| norm(grid.node(i)) <= support_radius)
        .map(|i| phi0.values[i])
        .fold(f64::INFINITY, f64::min);
    let eta_lower_bound = g_a_height * c_support * support_volume;

    let zeta = zeta_from_constants(gamma, big_theta, big_a, eta, g_a_mass);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst_margin = f64::INFINITY;
    let mut drawn = 0;
    while drawn < samples {
        let f = random_field(&grid, &mut rng, false);
        let p = pairing(phi0, &f);
        if !(p > 0.0) || f.l1_norm() > big_a * p {
            continue;
        }
        drawn += 1;
        let uf = s.apply(&f)?.scaled(decay);
        let mut ok = true;
        for (u, g) in uf.values.iter().zip(&g_a.values) {
            let margin = u - p * g;
            worst_margin = worst_margin.min(margin);
            if margin < -1e-12 * u.abs() {
                ok = false;
            }
        }
        if ok {
            passed += 1;
        }
    }

    Ok(HarrisCertificate {
        gamma,
        big_theta,
        lyapunov_radius: lyapunov.radius,
        small_theta: lyapunov.small_theta,
        big_a,
        harris_radius,
        tail_source,
        support_radius,
        c,
        g_a_height,
        g_a_mass,
        eta,
        eta_lower_bound,
        zeta_constructive: zeta.zeta,
        zeta,
        zeta_observed: None,
        zeta_oracle: None,
        envelope_excess,
        checks_passed: passed,
        checks_total: samples,
        worst_margin,
        g_a: Some(g_a),
    })
}
