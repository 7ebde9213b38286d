//! JSON shape of the diagnostics report.

use hbary_core::diagnostics::QuadratureSummary;
use hbary_core::DiagnosticsReport;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SwapWitnessRecord {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub pattern: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureRecord {
    pub max_value: f64,
    pub max_order_gap: f64,
    pub max_identity_error: f64,
    pub evaluations: usize,
    pub subsampled: bool,
}

impl From<&QuadratureSummary> for QuadratureRecord {
    fn from(q: &QuadratureSummary) -> Self {
        Self {
            max_value: q.max_value,
            max_order_gap: q.max_order_gap,
            max_identity_error: q.max_identity_error,
            evaluations: q.evaluations,
            subsampled: q.subsampled,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile {
    pub passed: bool,
    pub failed_checks: Vec<&'static str>,
    pub value: f64,
    pub support_size: usize,
    pub c_monotone_margin: Option<f64>,
    pub c_monotone_witness: Option<SwapWitnessRecord>,
    pub c_monotone_subsampled: bool,
    pub inverse_lipschitz_l: Option<f64>,
    pub inverse_lipschitz_witness: Option<[Vec<usize>; 2]>,
    pub monge_defect: f64,
    /// `[tails, count]` pairs.
    pub tail_histogram: Vec<[usize; 2]>,
    pub duality_gap: f64,
    pub slackness_max: f64,
    pub feasibility_margin: f64,
    pub marginal_error: f64,
    pub barycenter_max_mass: f64,
    pub first_marginal_max_mass: f64,
    pub lambda_min: Vec<f64>,
    pub first_order_residual: Option<f64>,
    pub map_reconstruction_error: Option<f64>,
    pub skipped_atoms: usize,
    pub quadrature: Option<QuadratureRecord>,
}

impl From<&DiagnosticsReport> for ReportFile {
    fn from(r: &DiagnosticsReport) -> Self {
        Self {
            passed: r.passed(),
            failed_checks: r.failed_checks(),
            value: r.value,
            support_size: r.support_size,
            c_monotone_margin: r.c_monotone_margin,
            c_monotone_witness: r.c_monotone_witness.as_ref().map(|w| SwapWitnessRecord {
                first: w.first.clone(),
                second: w.second.clone(),
                pattern: w.pattern.clone(),
            }),
            c_monotone_subsampled: r.c_monotone_subsampled,
            inverse_lipschitz_l: r.inverse_lipschitz_l,
            inverse_lipschitz_witness: r.inverse_lipschitz_witness.as_ref().map(|(a, b)| [a.clone(), b.clone()]),
            monge_defect: r.monge_defect,
            tail_histogram: r.tail_histogram.iter().map(|&(k, c)| [k, c]).collect(),
            duality_gap: r.duality_gap,
            slackness_max: r.slackness_max,
            feasibility_margin: r.feasibility_margin,
            marginal_error: r.marginal_error,
            barycenter_max_mass: r.barycenter_max_mass,
            first_marginal_max_mass: r.first_marginal_max_mass,
            lambda_min: r.lambda_min.clone(),
            first_order_residual: r.first_order_residual,
            map_reconstruction_error: r.map_reconstruction_error,
            skipped_atoms: r.skipped_atoms,
            quadrature: r.quadrature.as_ref().map(QuadratureRecord::from),
        }
    }
}
