//! Structural checks on computed plans.
//!
//! Exact checks: c-monotonicity of the support, LP duality gap, dual
//! feasibility, complementary slackness, injectivity of the barycenter map on
//! the support, marginal reproduction, and non-concentration of the
//! barycenter measure. Approximate checks: the first-order system linking
//! potential gradients to `lambda_i Dh(x_i - xbar)`, and reconstruction of the
//! barycenter map from potential gradients. The latter two rely on gradients
//! of discrete potentials estimated by local affine least squares and only
//! make sense as trends over refining quantizations.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barycenter::{solve_barycenter, Configuration};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::DiscreteMeasure;
use crate::plan::{push_forward_barycenter, Potentials, TransportPlan};
use crate::quadrature::gauss_legendre_unit;
use crate::tensor::{CostTensor, Problem};

pub const MONOTONE_TOL: f64 = 1e-9;
pub const GAP_TOL: f64 = 1e-8;
pub const SLACKNESS_TOL: f64 = 1e-8;
pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const MARGINAL_TOL: f64 = 1e-9;
pub const CONCENTRATION_TOL: f64 = 1e-12;
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Pair-pattern evaluations done exhaustively before subsampling kicks in.
pub const DEFAULT_PAIR_BUDGET: usize = 200_000;

/// Swap patterns `S` up to complement: swapping `S` or its complement
/// yields the same pair of tuples. Bit `i` set means marginal `i` is in `S`.
fn swap_patterns(n: usize) -> impl Iterator<Item = u64> {
    // fix marginal 0 outside S
    (1..(1u64 << n) - 1).filter(|m| m & 1 == 0)
}

fn pattern_members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// All pairs when they fit the budget, otherwise a seeded uniform sample.
fn pair_indices(n_atoms: usize, per_pair: usize, budget: usize, seed: u64) -> (Vec<(usize, usize)>, bool) {
    let total = n_atoms * n_atoms.saturating_sub(1) / 2;
    if total * per_pair.max(1) <= budget {
        let mut out = Vec::with_capacity(total);
        for a in 0..n_atoms {
            for b in a + 1..n_atoms {
                out.push((a, b));
            }
        }
        return (out, false);
    }
    let draws = budget / per_pair.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = (0..draws)
        .map(|_| {
            let a = rng.random_range(0..n_atoms);
            let mut b = rng.random_range(0..n_atoms - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect();
    (out, true)
}

fn swap(first: &[usize], second: &[usize], mask: u64) -> (Vec<usize>, Vec<usize>) {
    let mut a = first.to_vec();
    let mut b = second.to_vec();
    for i in 0..a.len() {
        if mask >> i & 1 == 1 {
            core::mem::swap(&mut a[i], &mut b[i]);
        }
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapWitness {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// Marginals whose coordinates are exchanged.
    pub pattern: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityCheck {
    /// Minimum over checked pairs and patterns of swapped cost minus cost;
    /// `+inf` when the support has a single atom.
    pub margin: f64,
    pub witness: Option<SwapWitness>,
    pub evaluations: usize,
    pub subsampled: bool,
}

impl MonotonicityCheck {
    pub fn passed(&self) -> bool {
        self.margin >= -MONOTONE_TOL
    }
}

/// Pairwise c-monotonicity of the support of `plan`, with costs read off the
/// tensor.
pub fn check_c_monotone(plan: &TransportPlan, tensor: &CostTensor, pair_budget: usize, seed: u64) -> MonotonicityCheck {
    let n = tensor.shape().order();
    let patterns: Vec<u64> = swap_patterns(n).collect();
    let (pairs, subsampled) = pair_indices(plan.atoms.len(), patterns.len(), pair_budget, seed);
    let mut out = MonotonicityCheck {
        margin: f64::INFINITY,
        witness: None,
        evaluations: 0,
        subsampled,
    };
    for (a, b) in pairs {
        let x1 = &plan.atoms[a].index;
        let x2 = &plan.atoms[b].index;
        let base = tensor.at(x1) + tensor.at(x2);
        for &mask in &patterns {
            let (s1, s2) = swap(x1, x2, mask);
            let margin = tensor.at(&s1) + tensor.at(&s2) - base;
            out.evaluations += 1;
            if margin < out.margin {
                out.margin = margin;
                out.witness = Some(SwapWitness {
                    first: x1.clone(),
                    second: x2.clone(),
                    pattern: pattern_members(mask, n),
                });
            }
        }
    }
    out
}

/// Double integral over `[0,1]^2` of
/// `sum_{i in S, j not in S} (y_i - yt_i)^T D^2_{x_i x_j} c_h(y(s,t)) (y_j - yt_j)`
/// along the bilinear path moving coordinates in `S` with `s` and the others
/// with `t`, by tensorized Gauss–Legendre quadrature.
///
/// It equals `c(y) + c(yt) - c(z) - c(zt)` where `z, zt` are the swapped
/// configurations, so it is nonpositive on c-monotone pairs.
pub fn check_quadrature_inequality(
    problem: &Problem,
    y: &Configuration,
    yt: &Configuration,
    pattern: &[usize],
    order: usize,
) -> Result<f64> {
    let n = problem.n_marginals();
    if y.len() != n || yt.len() != n || y.dim() != problem.dim() || yt.dim() != problem.dim() {
        return Err(Error::Validation("configurations do not match the problem".into()));
    }
    let mut in_s = vec![false; n];
    for &i in pattern {
        if i >= n {
            return Err(Error::Index {
                index: i,
                detail: "swap pattern member out of range",
            });
        }
        in_s[i] = true;
    }
    if in_s.iter().all(|&b| b) || in_s.iter().all(|&b| !b) {
        return Err(Error::Validation("swap pattern must be a nonempty proper subset".into()));
    }
    let d = problem.dim();
    let delta: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_iterator(d, y.point(i).iter().zip(yt.point(i)).map(|(a, b)| a - b)))
        .collect();
    if delta.iter().all(|v| v.norm() == 0.0) {
        return Ok(0.0);
    }
    let (nodes, weights) = gauss_legendre_unit(order);
    let mut total = 0.0;
    let mut coords = vec![0.0; n * d];
    for (s, ws) in nodes.iter().zip(&weights) {
        for (t, wt) in nodes.iter().zip(&weights) {
            for i in 0..n {
                let r = if in_s[i] { *s } else { *t };
                for k in 0..d {
                    coords[i * d + k] = yt.point(i)[k] + r * delta[i][k];
                }
            }
            let cfg = Configuration::from_flat(d, coords.clone())?;
            let jet = solve_barycenter(&problem.cost, &problem.weights, &cfg, problem.tol)?;
            let mut integrand = 0.0;
            for i in (0..n).filter(|&i| in_s[i]) {
                for j in (0..n).filter(|&j| !in_s[j]) {
                    integrand += delta[i].dot(&(jet.cost_cross_hessian(i, j)? * &delta[j]));
                }
            }
            total += ws * wt * integrand;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSummary {
    /// Largest integral value over checked pairs and patterns at the low order.
    pub max_value: f64,
    /// Largest change between the low and the high order.
    pub max_order_gap: f64,
    /// Largest deviation of the integral from the exact swap-cost identity.
    pub max_identity_error: f64,
    pub evaluations: usize,
    pub subsampled: bool,
}

/// Runs [`check_quadrature_inequality`] on support pairs at two orders.
pub fn quadrature_sweep(
    problem: &Problem,
    plan: &TransportPlan,
    tensor: &CostTensor,
    orders: (usize, usize),
    pair_budget: usize,
    seed: u64,
) -> Result<QuadratureSummary> {
    let n = problem.n_marginals();
    let patterns: Vec<u64> = swap_patterns(n).collect();
    let (pairs, subsampled) = pair_indices(plan.atoms.len(), patterns.len(), pair_budget, seed);
    let mut out = QuadratureSummary {
        max_value: f64::NEG_INFINITY,
        max_order_gap: 0.0,
        max_identity_error: 0.0,
        evaluations: 0,
        subsampled,
    };
    for (a, b) in pairs {
        let x1 = &plan.atoms[a].index;
        let x2 = &plan.atoms[b].index;
        let y = problem.configuration(x1);
        let yt = problem.configuration(x2);
        for &mask in &patterns {
            let members = pattern_members(mask, n);
            let lo = check_quadrature_inequality(problem, &y, &yt, &members, orders.0)?;
            let hi = check_quadrature_inequality(problem, &y, &yt, &members, orders.1)?;
            let (s1, s2) = swap(x1, x2, mask);
            let exact = tensor.at(x1) + tensor.at(x2) - tensor.at(&s1) - tensor.at(&s2);
            out.max_value = out.max_value.max(lo);
            out.max_order_gap = out.max_order_gap.max((lo - hi).abs());
            out.max_identity_error = out.max_identity_error.max((hi - exact).abs());
            out.evaluations += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseLipschitz {
    /// `min |xbar(y) - xbar(yt)| / |y - yt|` over distinct support pairs;
    /// `+inf` when the support has a single atom.
    pub l_hat: f64,
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
}

impl InverseLipschitz {
    pub fn injective(&self) -> bool {
        self.l_hat > 0.0
    }
}

fn support_barycenters(problem: &Problem, plan: &TransportPlan, tensor: &CostTensor) -> Result<Vec<Vec<f64>>> {
    plan.atoms
        .iter()
        .map(|a| match tensor.barycenter_at(&a.index) {
            Some(b) => Ok(b.to_vec()),
            None => problem.jet(&a.index).map(|j| j.xbar.as_slice().to_vec()),
        })
        .collect()
}

/// Empirical inverse-Lipschitz constant of the barycenter map on the support.
pub fn inverse_lipschitz(problem: &Problem, plan: &TransportPlan, tensor: &CostTensor) -> Result<InverseLipschitz> {
    let bary = support_barycenters(problem, plan, tensor)?;
    let configs: Vec<Configuration> = plan.atoms.iter().map(|a| problem.configuration(&a.index)).collect();
    let mut out = InverseLipschitz {
        l_hat: f64::INFINITY,
        witness: None,
    };
    for a in 0..configs.len() {
        for b in a + 1..configs.len() {
            let den = configs[a].distance(&configs[b]);
            if den == 0.0 {
                continue;
            }
            let ratio = linalg::dist(&bary[a], &bary[b]) / den;
            if ratio < out.l_hat {
                out.l_hat = ratio;
                out.witness = Some((plan.atoms[a].index.clone(), plan.atoms[b].index.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MongeDefect {
    /// `sum_j mu_1(j) (tails_j - 1) / max(1, tails_j)`, in `[0, 1)`.
    pub defect: f64,
    /// Number of first-marginal atoms carrying each tail count.
    pub histogram: BTreeMap<usize, usize>,
}

/// Distance of `plan` from a graph over the first marginal.
pub fn monge_defect(plan: &TransportPlan, first_marginal: &[f64]) -> MongeDefect {
    let tails = plan.tails_per_first_atom();
    let mut histogram = BTreeMap::new();
    let mut defect = 0.0;
    for (&j, &k) in &tails {
        *histogram.entry(k).or_insert(0) += 1;
        defect += first_marginal[j] * (k as f64 - 1.0) / (k.max(1) as f64);
    }
    MongeDefect { defect, histogram }
}

/// Gradients of a function sampled on the atoms of `measure`, by weighted
/// affine least squares over each atom's `k` nearest atoms (itself
/// included). Weights are tricube in distance with a bandwidth of 1.5 times
/// the farthest neighbour. `None` where the fit is rank deficient.
pub fn estimate_gradients(measure: &DiscreteMeasure, values: &[f64], k: usize) -> Vec<Option<DVector<f64>>> {
    let d = measure.dim();
    let n = measure.len();
    let k = k.min(n);
    (0..n)
        .map(|j| {
            if k < d + 1 {
                return None;
            }
            let center = measure.point(j);
            let mut near: Vec<(f64, usize)> = (0..n).map(|l| (linalg::dist(center, measure.point(l)), l)).collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k);
            let r_max = near.last().map(|p| p.0).unwrap_or(0.0);
            if r_max == 0.0 {
                return None;
            }
            let bandwidth = 1.5 * r_max;
            let mut a = DMatrix::zeros(k, d + 1);
            let mut rhs = DVector::zeros(k);
            for (row, &(r, l)) in near.iter().enumerate() {
                let u = r / bandwidth;
                let w = libm::sqrt(libm::pow(1.0 - u * u * u, 3.0));
                a[(row, 0)] = w;
                for c in 0..d {
                    a[(row, c + 1)] = w * (measure.point(l)[c] - center[c]) / r_max;
                }
                rhs[row] = w * values[l];
            }
            let svd = a.svd(true, true);
            let smax = svd.singular_values.max();
            if svd.singular_values.min() <= 1e-10 * smax {
                return None;
            }
            let coef = svd.solve(&rhs, 0.0).ok()?;
            Some(DVector::from_iterator(d, (0..d).map(|c| coef[c + 1] / r_max)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderCheck {
    /// `max |lambda_i Dh(x_i - xbar) - grad phi_i(x_i)|` over support atoms
    /// and marginals with a usable gradient estimate.
    pub residual: Option<f64>,
    /// Atom gradients that could not be estimated.
    pub skipped: usize,
    pub feasibility_margin: f64,
    pub slackness_max: f64,
    pub duality_gap: f64,
}

fn gradient_table(problem: &Problem, potentials: &Potentials, k: usize) -> (Vec<Vec<Option<DVector<f64>>>>, usize) {
    let mut skipped = 0;
    let table: Vec<Vec<Option<DVector<f64>>>> = problem
        .marginals
        .iter()
        .zip(&potentials.phi)
        .map(|(m, phi)| {
            let g = estimate_gradients(m, phi, k);
            skipped += g.iter().filter(|v| v.is_none()).count();
            g
        })
        .collect();
    (table, skipped)
}

/// Default neighbourhood size for gradient estimates.
pub fn default_neighbors(dim: usize) -> usize {
    dim + 2
}

/// Approximate first-order optimality system plus the exact LP checks.
pub fn first_order_residual(
    problem: &Problem,
    plan: &TransportPlan,
    tensor: &CostTensor,
    potentials: &Potentials,
    neighbors: usize,
) -> Result<FirstOrderCheck> {
    let (grads, skipped) = gradient_table(problem, potentials, neighbors);
    let bary = support_barycenters(problem, plan, tensor)?;
    let mut residual: Option<f64> = None;
    for (atom, xbar) in plan.atoms.iter().zip(&bary) {
        for (i, &j) in atom.index.iter().enumerate() {
            let Some(g) = &grads[i][j] else { continue };
            let x = problem.marginals[i].point(j);
            let diff: Vec<f64> = x.iter().zip(xbar).map(|(a, b)| a - b).collect();
            let dc = problem.cost.gradient_unchecked(&diff) * problem.weights.get(i);
            let r = (dc - g).norm();
            residual = Some(residual.map_or(r, |v: f64| v.max(r)));
        }
    }
    Ok(FirstOrderCheck {
        residual,
        skipped,
        feasibility_margin: potentials.feasibility_margin(tensor),
        slackness_max: potentials.slackness_max(plan, tensor),
        duality_gap: plan.value - potentials.dual_value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReconstruction {
    /// Larger of the two errors below; `0` when every marginal is a single
    /// atom, `None` when no atom admitted a reconstruction.
    pub error: Option<f64>,
    /// `max |g_i(x_i) - xbar(x)|` over support atoms.
    pub barycenter_error: Option<f64>,
    /// `max |g_i(x_i) - g_1(x_1)|` over support atoms.
    pub graph_error: Option<f64>,
    /// Atoms skipped for lack of a gradient or a gradient outside the range of `Dh`.
    pub skipped: usize,
}

/// Rebuilds `g_i(x_i) = x_i - Dh^{-1}(grad phi_i(x_i) / lambda_i)` from
/// estimated potential gradients and compares it with the computed
/// barycenters. Consistency of all `g_i` on a support atom is the implicit
/// form of `T_i = g_i^{-1} o g_1`.
pub fn reconstruct_maps(
    problem: &Problem,
    plan: &TransportPlan,
    tensor: &CostTensor,
    potentials: &Potentials,
    neighbors: usize,
) -> Result<MapReconstruction> {
    if problem.marginals.iter().all(|m| m.len() == 1) {
        return Ok(MapReconstruction {
            error: Some(0.0),
            barycenter_error: Some(0.0),
            graph_error: Some(0.0),
            skipped: 0,
        });
    }
    let (grads, mut skipped) = gradient_table(problem, potentials, neighbors);
    let n = problem.n_marginals();
    // g[i][j], computed lazily per marginal atom
    let mut g: Vec<Vec<Option<DVector<f64>>>> = Vec::with_capacity(n);
    for i in 0..n {
        let lambda = problem.weights.get(i);
        let mu = &problem.marginals[i];
        let row = (0..mu.len())
            .map(|j| {
                let grad = grads[i][j].as_ref()?;
                let scaled: Vec<f64> = grad.iter().map(|v| v / lambda).collect();
                match problem.cost.invert_gradient(&scaled, 1e-12) {
                    Ok(w) => Some(DVector::from_column_slice(mu.point(j)) - w),
                    Err(_) => {
                        skipped += 1;
                        None
                    }
                }
            })
            .collect();
        g.push(row);
    }
    let bary = support_barycenters(problem, plan, tensor)?;
    let mut bary_err: Option<f64> = None;
    let mut graph_err: Option<f64> = None;
    let bump = |slot: &mut Option<f64>, v: f64| *slot = Some(slot.map_or(v, |s: f64| s.max(v)));
    for (atom, xbar) in plan.atoms.iter().zip(&bary) {
        let xb = DVector::from_column_slice(xbar);
        let g1 = g[0][atom.index[0]].as_ref();
        for (i, &j) in atom.index.iter().enumerate() {
            let Some(gi) = &g[i][j] else { continue };
            bump(&mut bary_err, (gi - &xb).norm());
            if i > 0 {
                if let Some(g1) = g1 {
                    bump(&mut graph_err, (gi - g1).norm());
                }
            }
        }
    }
    let error = match (bary_err, graph_err) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    Ok(MapReconstruction {
        error,
        barycenter_error: bary_err,
        graph_error: graph_err,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsOptions {
    pub pair_budget: usize,
    pub seed: u64,
    /// Neighbourhood size for potential gradients; `None` skips the
    /// approximate first-order and map checks.
    pub neighbors: Option<usize>,
    pub merge_tol: f64,
    /// Orders for the quadrature check; `None` skips it.
    pub quadrature_orders: Option<(usize, usize)>,
    pub quadrature_pair_budget: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            pair_budget: DEFAULT_PAIR_BUDGET,
            seed: 0,
            neighbors: None,
            merge_tol: 1e-9,
            quadrature_orders: None,
            quadrature_pair_budget: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub value: f64,
    pub support_size: usize,
    /// `None` when the support has a single atom (vacuous pass).
    pub c_monotone_margin: Option<f64>,
    pub c_monotone_witness: Option<SwapWitness>,
    pub c_monotone_subsampled: bool,
    /// `None` when the support has a single atom (vacuous pass).
    pub inverse_lipschitz_l: Option<f64>,
    pub inverse_lipschitz_witness: Option<(Vec<usize>, Vec<usize>)>,
    pub monge_defect: f64,
    pub tail_histogram: Vec<(usize, usize)>,
    pub duality_gap: f64,
    pub slackness_max: f64,
    pub feasibility_margin: f64,
    pub marginal_error: f64,
    pub barycenter_max_mass: f64,
    pub first_marginal_max_mass: f64,
    /// Smallest eigenvalue of `M_i H^{-1} M_i` over the support, per marginal.
    pub lambda_min: Vec<f64>,
    pub first_order_residual: Option<f64>,
    pub map_reconstruction_error: Option<f64>,
    pub skipped_atoms: usize,
    pub quadrature: Option<QuadratureSummary>,
}

impl DiagnosticsReport {
    /// Names of the exact checks that fail.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.c_monotone_margin.is_some_and(|m| !(m >= -MONOTONE_TOL)) {
            out.push("c_monotonicity");
        }
        if !(self.duality_gap.abs() <= GAP_TOL * (1.0 + self.value.abs())) {
            out.push("duality_gap");
        }
        if !(self.slackness_max <= SLACKNESS_TOL) {
            out.push("complementary_slackness");
        }
        if !(self.feasibility_margin >= -FEASIBILITY_TOL) {
            out.push("dual_feasibility");
        }
        if self.inverse_lipschitz_l.is_some_and(|l| !(l > 0.0)) {
            out.push("injectivity");
        }
        if !(self.marginal_error <= MARGINAL_TOL) {
            out.push("marginals");
        }
        if !(self.barycenter_max_mass <= self.first_marginal_max_mass + CONCENTRATION_TOL) {
            out.push("non_concentration");
        }
        if self.quadrature.as_ref().is_some_and(|q| !(q.max_value <= QUADRATURE_TOL)) {
            out.push("quadrature_inequality");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failed_checks().is_empty()
    }
}

/// Runs every check on a plan and its potentials.
pub fn diagnose(
    problem: &Problem,
    tensor: &CostTensor,
    plan: &TransportPlan,
    potentials: &Potentials,
    options: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    if plan.atoms.iter().any(|a| !tensor.shape().contains(&a.index)) {
        return Err(Error::Validation("plan atom outside the cost tensor".into()));
    }
    let masses = problem.marginal_masses();
    let mono = check_c_monotone(plan, tensor, options.pair_budget, options.seed);
    let lip = inverse_lipschitz(problem, plan, tensor)?;
    let monge = monge_defect(plan, problem.marginals[0].masses());
    let nu = push_forward_barycenter(plan, tensor, options.merge_tol);
    let barycenter_max_mass = match &nu {
        Ok(m) => m.max_mass(),
        Err(_) => plan.atoms.iter().map(|a| a.mass).fold(0.0, f64::max),
    };

    let mut lambda_min = vec![f64::INFINITY; problem.n_marginals()];
    for a in &plan.atoms {
        let jet = problem.jet(&a.index)?;
        for (i, slot) in lambda_min.iter_mut().enumerate() {
            *slot = slot.min(jet.lambda_min(i)?);
        }
    }

    let (first_order, maps, skipped) = match options.neighbors {
        Some(k) => {
            let fo = first_order_residual(problem, plan, tensor, potentials, k)?;
            let mr = reconstruct_maps(problem, plan, tensor, potentials, k)?;
            let skipped = fo.skipped.max(mr.skipped);
            (fo.residual, mr.error, skipped)
        }
        None => (None, None, 0),
    };
    let quadrature = match options.quadrature_orders {
        Some(orders) => Some(quadrature_sweep(
            problem,
            plan,
            tensor,
            orders,
            options.quadrature_pair_budget,
            options.seed,
        )?),
        None => None,
    };
    let value = plan.evaluate(tensor);
    Ok(DiagnosticsReport {
        value,
        support_size: plan.support_size(),
        c_monotone_margin: mono.margin.is_finite().then_some(mono.margin),
        c_monotone_witness: mono.witness,
        c_monotone_subsampled: mono.subsampled,
        inverse_lipschitz_l: lip.l_hat.is_finite().then_some(lip.l_hat),
        inverse_lipschitz_witness: lip.witness,
        monge_defect: monge.defect,
        tail_histogram: monge.histogram.into_iter().collect(),
        duality_gap: value - potentials.dual_value,
        slackness_max: potentials.slackness_max(plan, tensor),
        feasibility_margin: potentials.feasibility_margin(tensor),
        marginal_error: plan.marginal_error(&masses),
        barycenter_max_mass,
        first_marginal_max_mass: problem.marginals[0].max_mass(),
        lambda_min,
        first_order_residual: first_order,
        map_reconstruction_error: maps,
        skipped_atoms: skipped,
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::PlanAtom;
    use crate::tensor::TensorShape;

    fn table(values: Vec<f64>, dims: Vec<usize>) -> CostTensor {
        CostTensor::from_values(TensorShape::new(dims, 1000).unwrap(), values).unwrap()
    }

    #[test]
    fn patterns_up_to_complement() {
        assert_eq!(swap_patterns(2).collect::<Vec<_>>(), vec![2]);
        assert_eq!(swap_patterns(3).count(), 3);
        assert_eq!(swap_patterns(4).count(), 7);
    }

    #[test]
    fn monge_defect_formula() {
        let t = table(vec![0.0; 4], vec![2, 2]);
        let plan = TransportPlan::new(
            vec![
                PlanAtom { index: vec![0, 0], mass: 0.25 },
                PlanAtom { index: vec![0, 1], mass: 0.25 },
                PlanAtom { index: vec![1, 1], mass: 0.5 },
            ],
            &t,
        )
        .unwrap();
        let m = monge_defect(&plan, &[0.5, 0.5]);
        assert!((m.defect - 0.25).abs() < 1e-15);
        assert_eq!(m.histogram.get(&2), Some(&1));
        assert_eq!(m.histogram.get(&1), Some(&1));
    }

    #[test]
    fn single_atom_is_vacuous() {
        let t = table(vec![0.0; 4], vec![2, 2]);
        let plan = TransportPlan::new(vec![PlanAtom { index: vec![1, 0], mass: 1.0 }], &t).unwrap();
        let c = check_c_monotone(&plan, &t, 100, 0);
        assert_eq!(c.margin, f64::INFINITY);
        assert!(c.passed());
        assert_eq!(c.evaluations, 0);
    }

    #[test]
    fn subsampling_respects_budget() {
        let (pairs, sub) = pair_indices(1000, 3, 3000, 5);
        assert!(sub);
        assert_eq!(pairs.len(), 1000);
        assert!(pairs.iter().all(|(a, b)| a < b));
        let (again, _) = pair_indices(1000, 3, 3000, 5);
        assert_eq!(pairs, again);
    }

    #[test]
    fn gradient_of_affine_function_is_exact() {
        let pts: Vec<Vec<f64>> = (0..12).map(|k| vec![(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()]).collect();
        let m = DiscreteMeasure::uniform(&pts, "m").unwrap();
        let vals: Vec<f64> = m.points().map(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).collect();
        for g in estimate_gradients(&m, &vals, 4).into_iter().flatten() {
            assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] + 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_neighbourhood_is_rank_deficient() {
        let pts: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64, 2.0 * k as f64]).collect();
        let m = DiscreteMeasure::uniform(&pts, "line").unwrap();
        let vals = vec![0.0; 5];
        assert!(estimate_gradients(&m, &vals, 4).iter().all(|g| g.is_none()));
    }
}
