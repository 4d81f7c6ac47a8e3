use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EigenSolution, PeriodOperator, SpectralError};
use crate::semiflow::{pairing, GridField};

/// Periods skipped before fitting.
pub const BURN_IN: usize = 3;
const MIN_PERIODS: usize = 6;
/// Relative level below which `e_n` is treated as iteration noise.
const FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rho_hat: f64,
    pub c_hat: f64,
    /// `R²` of the log-linear fit; absent when fewer than three points survive the floor.
    pub r_squared: Option<f64>,
    pub zeta_observed: f64,
    /// `(n, e_n)` for `n = 0..=n_periods`.
    pub curve: Vec<(usize, f64)>,
    /// `e_{n+1} / e_n`.
    pub ratios: Vec<f64>,
    pub fit_range: (usize, usize),
    pub floor: f64,
    /// The curve reached the floor first; `rho_hat` is then a lower bound.
    pub floor_limited: bool,
    pub nonincreasing_after_burn_in: bool,
}

/// `f − ⟨φ0, f⟩ f0`.
pub fn orthogonal_test_field(sol: &EigenSolution, f: &GridField) -> GridField {
    let p = pairing(sol.phi0(), f);
    let values = f.values.iter().zip(&sol.f0().values).map(|(a, b)| a - p * b).collect();
    GridField::new(f.grid, values, f.time)
}

/// Decay of `‖Λ0^{−n}Sⁿf − ⟨φ0,f⟩f0‖₁` and its log-linear fit past the burn-in.
pub fn convergence_rate(
    s: &PeriodOperator,
    sol: &EigenSolution,
    f_test: &GridField,
    n_periods: usize,
) -> Result<ConvergenceReport, SpectralError> {
    if n_periods < MIN_PERIODS {
        return Err(SpectralError::TooFewPeriods {
            needed: MIN_PERIODS,
            got: n_periods,
        });
    }
    let f0 = sol.f0();
    let p = pairing(sol.phi0(), f_test);
    let target = f0.clone().scaled(p);
    let floor = FLOOR * (f_test.l1_norm() + p.abs() * f0.l1_norm());
    let mut g = f_test.clone();
    let mut curve = vec![(0, g.l1_distance(&target))];
    for n in 1..=n_periods {
        g = s.apply(&g)?.scaled(1.0 / sol.big_lambda0);
        curve.push((n, g.l1_distance(&target)));
    }
    let ratios: Vec<f64> = curve.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let nonincreasing_after_burn_in = curve[BURN_IN..]
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 || w[1].1 <= floor);

    let usable: Vec<(f64, f64)> = curve[BURN_IN..]
        .iter()
        .take_while(|(_, e)| *e > floor)
        .map(|&(n, e)| (n as f64, e.ln()))
        .collect();
    let period = s.period();
    let e0 = curve[0].1;
    let (slope, r_squared, fit_range, floor_limited) = if usable.len() >= 3 {
        let (b, r2) = fit_line(&usable);
        (b, Some(r2), (BURN_IN, BURN_IN + usable.len() - 1), false)
    } else {
        // the floor was crossed at n*: e_{n*} ≤ floor bounds the rate from below
        let n_star = curve.iter().find(|(_, e)| *e <= floor).map_or(n_periods, |c| c.0).max(1);
        (((floor / e0).ln() / n_star as f64).min(0.0), None, (0, n_star), true)
    };
    let zeta_observed = slope.exp();
    let c_hat = curve
        .iter()
        .filter(|(_, e)| *e > floor)
        .map(|&(n, e)| e / (e0 * zeta_observed.powi(n as i32)))
        .fold(1.0, f64::max);
    Ok(ConvergenceReport {
        rho_hat: -slope / period,
        c_hat,
        r_squared,
        zeta_observed,
        curve,
        ratios,
        fit_range,
        floor,
        floor_limited,
        nonincreasing_after_burn_in,
    })
}

/// Least-squares slope and coefficient of determination.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (b, r2)
}

pub fn write_decay_csv<W: Write>(mut w: W, report: &ConvergenceReport) -> std::io::Result<()> {
    writeln!(w, "n,e_n")?;
    for (n, e) in &report.curve {
        writeln!(w, "{n},{e:e}")?;
    }
    Ok(())
}
