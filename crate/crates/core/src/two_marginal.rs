//! Two-marginal transport `W_h(mu, rho)`, the coupled two-marginal objective,
//! extraction of the couplings `(pi_i, xbar_h)_# gamma` from a multi-marginal
//! plan, and gluing of two-marginal couplings along a common first marginal.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::{solve_transport_lp, LpOptions};
use crate::measure::DiscreteMeasure;
use crate::plan::{push_forward_with_assignment, PlanAtom, TransportPlan, MARGINAL_TOL};
use crate::tensor::{CostTensor, Problem, TensorShape};
use crate::cost::ConvexCost;

/// Relative tolerance for optimality and duality comparisons.
pub const GAP_TOL: f64 = 1e-8;

/// A coupling in `Pi(rho, mu)`. Atom `((k, j), m)` moves mass `m` between
/// atom `k` of `rho` and atom `j` of `mu`, at cost `h(x_j - z_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMarginalPlan {
    pub atoms: Vec<((usize, usize), f64)>,
    pub value: f64,
    /// Dual vectors on `rho` and on `mu`.
    pub potentials: (Vec<f64>, Vec<f64>),
    pub dual_value: f64,
}

impl TwoMarginalPlan {
    pub fn duality_gap(&self) -> f64 {
        self.value - self.dual_value
    }

    /// Mass on each atom of the first marginal.
    pub fn first_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for ((k, _), m) in &self.atoms {
            out[*k] += m;
        }
        out
    }

    pub fn second_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for ((_, j), m) in &self.atoms {
            out[*j] += m;
        }
        out
    }
}

fn pair_tensor(cost: &ConvexCost, mu: &DiscreteMeasure, rho: &DiscreteMeasure) -> Result<CostTensor> {
    if mu.dim() != cost.dim() || rho.dim() != cost.dim() {
        return Err(Error::DimensionMismatch {
            expected: cost.dim(),
            found: if mu.dim() != cost.dim() { mu.dim() } else { rho.dim() },
        });
    }
    let shape = TensorShape::new(vec![rho.len(), mu.len()], usize::MAX)?;
    let mut values = Vec::with_capacity(shape.len());
    let mut diff = vec![0.0; cost.dim()];
    for z in rho.points() {
        for x in mu.points() {
            for ((d, a), b) in diff.iter_mut().zip(x).zip(z) {
                *d = a - b;
            }
            values.push(cost.value_unchecked(&diff));
        }
    }
    CostTensor::from_values(shape, values)
}

/// `W_h(mu, rho) = min over couplings of rho and mu of the integral of h(x - z)`,
/// solved exactly; the result is a vertex of the transportation polytope.
pub fn solve_w_h(cost: &ConvexCost, mu: &DiscreteMeasure, rho: &DiscreteMeasure) -> Result<TwoMarginalPlan> {
    let tensor = pair_tensor(cost, mu, rho)?;
    let (plan, pot, _) = solve_transport_lp(&tensor, &[rho.masses(), mu.masses()], &LpOptions::default())?;
    let mut phi = pot.phi.into_iter();
    let psi_rho = phi.next().unwrap_or_default();
    let phi_mu = phi.next().unwrap_or_default();
    Ok(TwoMarginalPlan {
        atoms: plan.atoms.iter().map(|a| ((a.index[0], a.index[1]), a.mass)).collect(),
        value: plan.value,
        potentials: (psi_rho, phi_mu),
        dual_value: pot.dual_value,
    })
}

/// `sum_i lambda_i W_h(mu_i, candidate)`.
pub fn coupled_objective(problem: &Problem, candidate: &DiscreteMeasure) -> Result<f64> {
    let mut total = 0.0;
    for (i, mu) in problem.marginals.iter().enumerate() {
        total += problem.weights.get(i) * solve_w_h(&problem.cost, mu, candidate)?.value;
    }
    Ok(total)
}

/// The coupling between the barycenter measure and `mu_i` induced by `plan`,
/// checked against an independent exact solve of `W_h(mu_i, nu_bar)`.
///
/// Fails with [`Error::OptimalityViolation`] when the induced coupling is
/// not optimal, which can only happen if `plan` was not.
pub fn extract_two_marginal(
    problem: &Problem,
    plan: &TransportPlan,
    tensor: &CostTensor,
    i: usize,
    merge_tol: f64,
) -> Result<TwoMarginalPlan> {
    if i >= problem.n_marginals() {
        return Err(Error::Index {
            index: i,
            detail: "marginal index out of range",
        });
    }
    let (nu, assignment) = push_forward_with_assignment(plan, tensor, merge_tol)?;
    let mu = &problem.marginals[i];
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, &k) in plan.atoms.iter().zip(&assignment) {
        *pairs.entry((k, a.index[i])).or_insert(0.0) += a.mass;
    }
    let mut diff = vec![0.0; problem.dim()];
    let mut value = 0.0;
    for (&(k, j), &m) in &pairs {
        for ((d, a), b) in diff.iter_mut().zip(mu.point(j)).zip(nu.point(k)) {
            *d = a - b;
        }
        value += m * problem.cost.value_unchecked(&diff);
    }
    let reference = solve_w_h(&problem.cost, mu, &nu)?;
    if (value - reference.value).abs() > GAP_TOL * (1.0 + reference.value.abs()) {
        return Err(Error::OptimalityViolation {
            value,
            optimum: reference.value,
        });
    }
    Ok(TwoMarginalPlan {
        atoms: pairs.into_iter().collect(),
        value,
        potentials: reference.potentials,
        dual_value: reference.dual_value,
    })
}

/// Glues couplings `gamma_i in Pi(rho, mu_i)` into a multi-marginal plan:
/// mass at `(j_1, ..., j_N)` is `sum_z rho(z) prod_i gamma_i(z, j_i) / rho(z)`.
pub fn glue_from_disintegration(
    rho: &DiscreteMeasure,
    couplings: &[TwoMarginalPlan],
    tensor: &CostTensor,
) -> Result<TransportPlan> {
    let dims = tensor.shape().dims();
    if couplings.len() != dims.len() {
        return Err(Error::MarginalMismatch(format!(
            "{} couplings for a tensor of order {}",
            couplings.len(),
            dims.len()
        )));
    }
    // conditionals[i][z] = list of (j, gamma_i(z, j) / rho(z))
    let mut conditionals: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(couplings.len());
    for (i, g) in couplings.iter().enumerate() {
        if g.atoms.iter().any(|((k, j), _)| *k >= rho.len() || *j >= dims[i]) {
            return Err(Error::MarginalMismatch(format!("coupling {i} indexes outside rho or mu_{i}")));
        }
        let first = g.first_marginal(rho.len());
        for (k, (a, b)) in first.iter().zip(rho.masses()).enumerate() {
            if (a - b).abs() > MARGINAL_TOL {
                return Err(Error::MarginalMismatch(format!(
                    "coupling {i} puts mass {a} on rho atom {k}, expected {b}"
                )));
            }
        }
        let mut rows = vec![Vec::new(); rho.len()];
        for ((k, j), m) in &g.atoms {
            if first[*k] > 0.0 {
                rows[*k].push((*j, m / first[*k]));
            }
        }
        conditionals.push(rows);
    }
    let mut atoms = Vec::new();
    for (z, &rz) in rho.masses().iter().enumerate() {
        let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), rz)];
        for cond in &conditionals {
            let mut next = Vec::with_capacity(partial.len() * cond[z].len());
            for (idx, m) in &partial {
                for &(j, p) in &cond[z] {
                    let mut t = idx.clone();
                    t.push(j);
                    next.push((t, m * p));
                }
            }
            partial = next;
        }
        atoms.extend(partial.into_iter().map(|(index, mass)| PlanAtom { index, mass }));
    }
    TransportPlan::new(atoms, tensor)
}
