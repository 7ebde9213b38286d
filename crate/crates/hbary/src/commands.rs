//! The pipeline behind each command. Every command writes its files into
//! `out` and returns a summary of what it wrote.

use std::fs;
use std::path::Path;
use std::time::Instant;

use hbary_core::{
    coupled_objective, diagnose, glue_from_disintegration, push_forward_barycenter, solve_mmot_entropic, solve_mmot_lp,
    solve_w_h, CostTensor, DiagnosticsReport, DiscreteMeasure, Potentials, Problem, TransportPlan,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::assemble::assemble_parallel;
use crate::config::{MarginalSource, RunConfig, SolverChoice};
use crate::error::{CliError, CliResult};
use crate::io::{
    load_plan, load_potentials, save_measure, save_plan, save_potentials, write_json, write_text, MeasureFormat,
    PlanFile, PotentialsFile,
};
use crate::report::ReportFile;

/// A solved instance.
pub struct Solved {
    pub problem: Problem,
    pub tensor: CostTensor,
    pub plan: TransportPlan,
    pub potentials: Potentials,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

pub(crate) fn ensure_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Builds the problem and its tensor.
pub fn prepare(cfg: &RunConfig, n_override: Option<usize>) -> CliResult<(Problem, CostTensor, f64)> {
    let problem = cfg.problem(n_override)?;
    let t0 = Instant::now();
    let tensor = assemble_parallel(&problem, cfg.budget, cfg.threads)?;
    Ok((problem, tensor, t0.elapsed().as_secs_f64()))
}

pub fn solve_prepared(cfg: &RunConfig, problem: Problem, tensor: CostTensor, assembly_seconds: f64) -> CliResult<Solved> {
    let t0 = Instant::now();
    let (plan, potentials) = match cfg.solver {
        SolverChoice::Lp => solve_mmot_lp(&tensor, &problem.marginals).map_err(CliError::Solver)?,
        SolverChoice::Entropic { eps, max_iter, tol } => {
            let sol = solve_mmot_entropic(&tensor, &problem.marginals, eps, max_iter, tol).map_err(CliError::Solver)?;
            (sol.plan, sol.potentials)
        }
    };
    Ok(Solved {
        problem,
        tensor,
        plan,
        potentials,
        assembly_seconds,
        solve_seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn solve(cfg: &RunConfig) -> CliResult<Solved> {
    let (problem, tensor, secs) = prepare(cfg, None)?;
    solve_prepared(cfg, problem, tensor, secs)
}

fn solver_name(cfg: &RunConfig) -> String {
    match cfg.solver {
        SolverChoice::Lp => "lp".into(),
        SolverChoice::Entropic { eps, .. } => format!("entropic(eps={eps})"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BarycenterSummary {
    pub command: &'static str,
    pub solver: String,
    pub cost: &'static str,
    pub labels: Vec<String>,
    pub value: f64,
    pub dual_value: f64,
    pub support_size: usize,
    pub vertex_bound: usize,
    pub barycenter_atoms: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

fn labels_of(problem: &Problem) -> Vec<String> {
    problem.marginals.iter().map(|m| m.label().to_string()).collect()
}

/// Writes `plan.json`, `potentials.json`, `barycenter.json`,
/// `barycenter.csv`, `summary.json` and `timings.json`.
pub fn cmd_barycenter(cfg: &RunConfig, out: &Path) -> CliResult<BarycenterSummary> {
    let s = solve(cfg)?;
    ensure_dir(out)?;
    let nu = push_forward_barycenter(&s.plan, &s.tensor, cfg.tolerances.merge)?;
    let labels = labels_of(&s.problem);
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    save_plan(&PlanFile::from_plan(&s.plan), &out.join("plan.json"))?;
    save_potentials(&PotentialsFile::from_potentials(&s.potentials, &label_refs), &out.join("potentials.json"))?;
    save_measure(&nu, &out.join("barycenter.json"), MeasureFormat::Json)?;
    save_measure(&nu, &out.join("barycenter.csv"), MeasureFormat::Csv)?;
    let dims = s.problem.shape();
    let summary = BarycenterSummary {
        command: "barycenter",
        solver: solver_name(cfg),
        cost: s.problem.cost.name(),
        labels,
        value: s.plan.value,
        dual_value: s.potentials.dual_value,
        support_size: s.plan.support_size(),
        vertex_bound: dims.iter().sum::<usize>() - dims.len() + 1,
        barycenter_atoms: nu.len(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(
        &out.join("timings.json"),
        &Timings {
            assembly_seconds: s.assembly_seconds,
            solve_seconds: s.solve_seconds,
        },
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct Perturbation {
    pub seed: u64,
    pub objective: f64,
    /// Objective minus the objective at the barycenter.
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceSummary {
    pub command: &'static str,
    pub solver: String,
    /// Multi-marginal value.
    pub c_mm: f64,
    /// `sum_i lambda_i W_h(mu_i, nu_bar)`.
    pub c2m: f64,
    /// Value of the plan glued from optimal couplings with `nu_bar`.
    pub glued: f64,
    pub gap_c2m: f64,
    pub gap_glued: f64,
    pub threshold: f64,
    pub threshold_rule: String,
    pub passed: bool,
    pub perturbations: Vec<Perturbation>,
    pub min_perturbation_excess: Option<f64>,
}

fn perturb(nu: &DiscreteMeasure, scale: f64, seed: u64) -> CliResult<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = nu
        .coords()
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            c + scale * z
        })
        .collect();
    Ok(DiscreteMeasure::new(nu.dim(), coords, nu.masses().to_vec(), "perturbed")?)
}

fn spread(problem: &Problem) -> f64 {
    let d = problem.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for m in &problem.marginals {
        for p in m.points() {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
}

/// Checks `C_MM = sum_i lambda_i W_h(mu_i, nu_bar)` and the gluing sandwich;
/// writes `equivalence.json`. Fails with exit 2 when a gap exceeds the
/// threshold.
pub fn cmd_equivalence(cfg: &RunConfig, out: &Path) -> CliResult<EquivalenceSummary> {
    let s = solve(cfg)?;
    ensure_dir(out)?;
    let nu = push_forward_barycenter(&s.plan, &s.tensor, cfg.tolerances.merge)?;
    let c_mm = s.plan.value;
    let c2m = coupled_objective(&s.problem, &nu)?;
    let couplings = s
        .problem
        .marginals
        .iter()
        .map(|mu| solve_w_h(&s.problem.cost, mu, &nu))
        .collect::<Result<Vec<_>, _>>()?;
    let glued = glue_from_disintegration(&nu, &couplings, &s.tensor)?.value;

    let base = cfg.tolerances.equivalence * (1.0 + c_mm.abs());
    let (threshold, threshold_rule) = match cfg.solver {
        SolverChoice::Lp => (base, format!("{:e} * (1 + |c_mm|)", cfg.tolerances.equivalence)),
        SolverChoice::Entropic { eps, .. } => {
            let entropy: f64 = s.problem.marginals.iter().map(|m| (m.len() as f64).ln()).sum();
            (
                base + eps * entropy,
                format!(
                    "{:e} * (1 + |c_mm|) + eps * sum_i ln(n_i), the entropic excess bound",
                    cfg.tolerances.equivalence
                ),
            )
        }
    };
    let gap_c2m = (c_mm - c2m).abs();
    let gap_glued = (c_mm - glued).abs();
    let scale = 0.05 * spread(&s.problem).max(1e-3);
    let mut perturbations = Vec::with_capacity(cfg.perturbations);
    for k in 0..cfg.perturbations as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let objective = coupled_objective(&s.problem, &perturb(&nu, scale, seed)?)?;
        perturbations.push(Perturbation {
            seed,
            objective,
            excess: objective - c2m,
        });
    }
    let summary = EquivalenceSummary {
        command: "equivalence",
        solver: solver_name(cfg),
        c_mm,
        c2m,
        glued,
        gap_c2m,
        gap_glued,
        threshold,
        threshold_rule,
        passed: gap_c2m <= threshold && gap_glued <= threshold,
        min_perturbation_excess: perturbations.iter().map(|p| p.excess).reduce(f64::min),
        perturbations,
    };
    write_json(&out.join("equivalence.json"), &summary)?;
    if !summary.passed {
        return Err(CliError::Solver(hbary_core::Error::OptimalityViolation {
            value: c2m.max(glued),
            optimum: c_mm,
        }));
    }
    Ok(summary)
}

/// Diagnoses a saved plan (from `cfg.plan`) or a freshly solved one; writes
/// `report.json`. Returns an exit-3 error naming the failed checks.
pub fn cmd_diagnose(cfg: &RunConfig, out: &Path) -> CliResult<DiagnosticsReport> {
    let (problem, tensor, plan, potentials) = match &cfg.plan {
        Some(path) => {
            let (problem, tensor, _) = prepare(cfg, None)?;
            let file = load_plan(path)?;
            if file.marginal_pair.is_some() {
                return Err(CliError::Validation(format!(
                    "{} holds a two-marginal coupling, expected a multi-marginal plan",
                    path.display()
                )));
            }
            let mut plan = file.into_plan(&tensor)?;
            plan.check_marginals(&problem.marginal_masses(), hbary_core::plan::MARGINAL_TOL)?;
            let potentials = match &cfg.potentials {
                Some(p) => load_potentials(p)?.into_potentials(&problem.marginals)?,
                None => solve_mmot_lp(&tensor, &problem.marginals).map_err(CliError::Solver)?.1,
            };
            (problem, tensor, plan, potentials)
        }
        None => {
            let s = solve(cfg)?;
            (s.problem, s.tensor, s.plan, s.potentials)
        }
    };
    ensure_dir(out)?;
    let report = diagnose(&problem, &tensor, &plan, &potentials, &cfg.diagnostics_options(problem.dim()))?;
    write_json(&out.join("report.json"), &ReportFile::from(&report))?;
    let failed = report.failed_checks();
    if !failed.is_empty() {
        return Err(CliError::Diagnostics {
            failed: failed.into_iter().map(str::to_string).collect(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub value: f64,
    pub support_size: usize,
    pub monge_defect: f64,
    pub l_hat: Option<f64>,
    pub c_monotone_margin: Option<f64>,
    pub duality_gap: f64,
    pub slackness_max: f64,
    pub feasibility_margin: f64,
    pub first_order_residual: Option<f64>,
    pub map_reconstruction_error: Option<f64>,
}

/// Runs the pipeline once per resolution and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CliResult<Vec<SweepRow>> {
    if cfg.resolutions.is_empty() {
        return Err(CliError::Validation("sweep needs a nonempty list of resolutions".into()));
    }
    if let Some(n) = cfg.resolutions.iter().find(|&&n| n == 0) {
        return Err(CliError::Validation(format!("resolution {n} is not a positive sample size")));
    }
    if !cfg.marginals.iter().all(MarginalSource::is_density) {
        return Err(CliError::Validation("sweep needs density marginals, not files".into()));
    }
    let mut rows = Vec::with_capacity(cfg.resolutions.len());
    for &n in &cfg.resolutions {
        let (problem, tensor, secs) = prepare(cfg, Some(n))?;
        let s = solve_prepared(cfg, problem, tensor, secs)?;
        let mut opts = cfg.diagnostics_options(s.problem.dim());
        opts.quadrature_orders = None;
        let r = diagnose(&s.problem, &s.tensor, &s.plan, &s.potentials, &opts)?;
        rows.push(SweepRow {
            n,
            value: r.value,
            support_size: r.support_size,
            monge_defect: r.monge_defect,
            l_hat: r.inverse_lipschitz_l,
            c_monotone_margin: r.c_monotone_margin,
            duality_gap: r.duality_gap,
            slackness_max: r.slackness_max,
            feasibility_margin: r.feasibility_margin,
            first_order_residual: r.first_order_residual,
            map_reconstruction_error: r.map_reconstruction_error,
        });
    }
    ensure_dir(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::parse(out.join("sweep.csv"), e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::parse(out.join("sweep.csv"), e))?;
    write_text(&out.join("sweep.csv"), &String::from_utf8_lossy(&bytes))?;
    Ok(rows)
}

/// Writes every marginal, sampled or loaded, as `<label>.json` and `<label>.csv`.
pub fn cmd_sample(cfg: &RunConfig, out: &Path) -> CliResult<Vec<DiscreteMeasure>> {
    cfg.validate()?;
    let measures = cfg.measures(None)?;
    ensure_dir(out)?;
    for m in &measures {
        save_measure(m, &out.join(format!("{}.json", m.label())), MeasureFormat::Json)?;
        save_measure(m, &out.join(format!("{}.csv", m.label())), MeasureFormat::Csv)?;
    }
    Ok(measures)
}
