use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::harris::{HarrisCertificate, LyapunovPair, MinorizationReport, SplittingDiagnostic, SubEigenCertificate};
use crate::model::{HypothesisReport, ModelConstants};
use crate::spectral::{ConvergenceReport, EigenSolution, RichardsonEstimate, SpectrumReport};

/// Eigenvalues kept in the report from the dense spectrum.
const REPORTED_EIGENVALUES: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub nodes: usize,
    pub leading: f64,
    pub leading_imag: f64,
    pub gap_ratio: f64,
    pub leading_multiplicity: usize,
    pub peripheral_count: usize,
    /// `|Λ0 − λ₁| / Λ0` against the power iteration, when both ran.
    pub relative_gap_to_power: Option<f64>,
    pub top_eigenvalues: Vec<(f64, f64)>,
}

impl OracleSummary {
    pub fn new(nodes: usize, spectrum: &SpectrumReport, big_lambda0: Option<f64>) -> Self {
        Self {
            nodes,
            leading: spectrum.leading,
            leading_imag: spectrum.leading_imag,
            gap_ratio: spectrum.gap_ratio,
            leading_multiplicity: spectrum.leading_multiplicity,
            peripheral_count: spectrum.peripheral_count,
            relative_gap_to_power: big_lambda0.map(|l| (l - spectrum.leading).abs() / l),
            top_eigenvalues: spectrum.eigenvalues.iter().take(REPORTED_EIGENVALUES).copied().collect(),
        }
    }
}

/// `log κ0/T ≤ λ_F ≤ q̂ + a_sup`.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaBracket {
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Certificates {
    pub sub_eigen: Option<SubEigenCertificate>,
    pub bracket: Option<LambdaBracket>,
    pub lyapunov: Option<LyapunovPair>,
    pub harris: Option<HarrisCertificate>,
    pub minorization: Option<MinorizationReport>,
    pub splitting: Option<SplittingDiagnostic>,
    /// Certificates that could not be built, with the reason.
    pub unavailable: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub task: String,
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub exit_code: i32,
    pub error: Option<String>,
    pub constants: Option<ModelConstants>,
    pub hypotheses: Option<HypothesisReport>,
    pub lambda_f: Option<f64>,
    pub lambda_f_extrapolated: Option<f64>,
    pub big_lambda0: Option<f64>,
    pub eigen: Option<EigenSolution>,
    pub richardson: Option<RichardsonEstimate>,
    pub oracle: Option<OracleSummary>,
    pub rho_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub convergence: Option<ConvergenceReport>,
    pub certificates: Option<Certificates>,
    /// Wall-clock seconds per phase; the only nondeterministic part of the report.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(task: &str, config: Value, config_hash: String, seed: u64) -> Self {
        Self {
            task: task.into(),
            config_hash,
            config,
            seed,
            exit_code: 0,
            error: None,
            constants: None,
            hypotheses: None,
            lambda_f: None,
            lambda_f_extrapolated: None,
            big_lambda0: None,
            eigen: None,
            richardson: None,
            oracle: None,
            rho_hat: None,
            c_hat: None,
            convergence: None,
            certificates: None,
            timings: BTreeMap::new(),
        }
    }
}
