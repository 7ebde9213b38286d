//! Multi-marginal transport plans, dual potentials, and the barycenter
//! push-forward.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::tensor::{advance, CostTensor};

/// Marginal reproduction tolerance per atom.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanAtom {
    pub index: Vec<usize>,
    pub mass: f64,
}

/// A sparse coupling: atoms `(j_1, ..., j_N) -> mass`, sorted by tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub atoms: Vec<PlanAtom>,
    pub value: f64,
    pub marginals_checked: bool,
    /// True when the plan is a basic solution of the linear program.
    pub vertex: bool,
}

impl TransportPlan {
    /// Sorts and merges atoms with identical tuples, drops nonpositive masses,
    /// and prices the plan on `tensor`.
    pub fn new(atoms: Vec<PlanAtom>, tensor: &CostTensor) -> Result<Self> {
        let mut map: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for a in atoms {
            if !tensor.shape().contains(&a.index) {
                return Err(Error::Validation(format!(
                    "plan atom {:?} outside tensor shape {:?}",
                    a.index,
                    tensor.shape().dims()
                )));
            }
            if !a.mass.is_finite() || a.mass < 0.0 {
                return Err(Error::Validation(format!("plan atom {:?} has mass {}", a.index, a.mass)));
            }
            *map.entry(a.index).or_insert(0.0) += a.mass;
        }
        let atoms: Vec<PlanAtom> = map
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(index, mass)| PlanAtom { index, mass })
            .collect();
        let mut plan = Self {
            atoms,
            value: 0.0,
            marginals_checked: false,
            vertex: false,
        };
        plan.value = plan.evaluate(tensor);
        Ok(plan)
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_marginals(&self) -> usize {
        self.atoms.first().map(|a| a.index.len()).unwrap_or(0)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// `sum mass * cost` over the atoms.
    pub fn evaluate(&self, tensor: &CostTensor) -> f64 {
        self.atoms.iter().map(|a| a.mass * tensor.at(&a.index)).sum()
    }

    /// Projection of the plan onto coordinate `i`.
    pub fn marginal(&self, i: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for a in &self.atoms {
            out[a.index[i]] += a.mass;
        }
        out
    }

    /// Largest per-atom deviation from the prescribed marginals.
    pub fn marginal_error(&self, masses: &[&[f64]]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, mu) in masses.iter().enumerate() {
            for (p, q) in self.marginal(i, mu.len()).iter().zip(mu.iter()) {
                worst = worst.max((p - q).abs());
            }
        }
        worst
    }

    /// Verifies membership in the set of couplings of `masses`.
    pub fn check_marginals(&mut self, masses: &[&[f64]], tol: f64) -> Result<()> {
        if self.atoms.iter().any(|a| a.index.len() != masses.len()) {
            return Err(Error::MarginalMismatch("plan order differs from marginal count".into()));
        }
        let err = self.marginal_error(masses);
        if err > tol {
            return Err(Error::MarginalMismatch(format!(
                "marginal deviation {err:e} exceeds {tol:e}"
            )));
        }
        self.marginals_checked = true;
        Ok(())
    }

    /// For every first-marginal atom, the number of distinct tails
    /// `(j_2, ..., j_N)` carrying mass.
    pub fn tails_per_first_atom(&self) -> BTreeMap<usize, usize> {
        let mut out: BTreeMap<usize, usize> = BTreeMap::new();
        for a in &self.atoms {
            *out.entry(a.index[0]).or_insert(0) += 1;
        }
        out
    }
}

/// Dual potentials, one vector per marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub phi: Vec<Vec<f64>>,
    pub dual_value: f64,
}

impl Potentials {
    pub fn new(phi: Vec<Vec<f64>>, masses: &[&[f64]]) -> Self {
        let dual_value = phi
            .iter()
            .zip(masses)
            .map(|(p, m)| p.iter().zip(m.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        Self { phi, dual_value }
    }

    pub fn sum_at(&self, tuple: &[usize]) -> f64 {
        self.phi.iter().zip(tuple).map(|(p, &j)| p[j]).sum()
    }

    /// `min_t (c_t - sum_i phi_i(t_i))`; nonnegative iff the potentials are
    /// dual feasible.
    pub fn feasibility_margin(&self, tensor: &CostTensor) -> f64 {
        let dims = tensor.shape().dims();
        let mut tuple = vec![0usize; dims.len()];
        let mut worst = f64::INFINITY;
        for &c in tensor.values() {
            worst = worst.min(c - self.sum_at(&tuple));
            advance(&mut tuple, dims);
        }
        worst
    }

    /// Largest `|c_t - sum_i phi_i(t_i)|` over plan atoms.
    pub fn slackness_max(&self, plan: &TransportPlan, tensor: &CostTensor) -> f64 {
        plan.atoms
            .iter()
            .map(|a| (tensor.at(&a.index) - self.sum_at(&a.index)).abs())
            .fold(0.0, f64::max)
    }

    /// Replaces `phi_i` by the infimum over tuples with `t_i = j` of
    /// `c_t - sum_{k != i} phi_k(t_k)`.
    pub fn c_transform(&self, tensor: &CostTensor, i: usize) -> Vec<f64> {
        let dims = tensor.shape().dims();
        let mut out = vec![f64::INFINITY; dims[i]];
        let mut tuple = vec![0usize; dims.len()];
        for &c in tensor.values() {
            let others = self.sum_at(&tuple) - self.phi[i][tuple[i]];
            let v = c - others;
            if v < out[tuple[i]] {
                out[tuple[i]] = v;
            }
            advance(&mut tuple, dims);
        }
        out
    }

    /// Iterated c,i-transforms over `i = 1..N` until no entry moves by more
    /// than `tol` or `max_passes` sweeps ran. Returns the passes used.
    pub fn c_conjugate(&self, tensor: &CostTensor, masses: &[&[f64]], tol: f64, max_passes: usize) -> (Self, usize) {
        let mut cur = self.clone();
        for pass in 1..=max_passes {
            let mut moved: f64 = 0.0;
            for i in 0..cur.phi.len() {
                let next = cur.c_transform(tensor, i);
                for (a, b) in next.iter().zip(&cur.phi[i]) {
                    moved = moved.max((a - b).abs());
                }
                cur.phi[i] = next;
            }
            if moved <= tol {
                return (Self::new(cur.phi, masses), pass);
            }
        }
        (Self::new(cur.phi, masses), max_passes)
    }
}

/// Pushes `plan` forward under the barycenter map; returns the measure and,
/// for each plan atom, the index of its barycenter atom.
pub(crate) fn push_forward_with_assignment(
    plan: &TransportPlan,
    tensor: &CostTensor,
    merge_tol: f64,
) -> Result<(DiscreteMeasure, Vec<usize>)> {
    if !tensor.has_barycenters() {
        return Err(Error::Validation("cost tensor carries no barycenters".into()));
    }
    if plan.atoms.is_empty() {
        return Err(Error::Validation("empty plan".into()));
    }
    let mut points: Vec<&[f64]> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut assignment = Vec::with_capacity(plan.atoms.len());
    for a in &plan.atoms {
        let b = tensor.barycenter_at(&a.index).expect("checked above");
        let hit = points
            .iter()
            .position(|q| crate::linalg::dist(b, q) <= merge_tol);
        match hit {
            Some(k) => {
                masses[k] += a.mass;
                assignment.push(k);
            }
            None => {
                assignment.push(points.len());
                points.push(b);
                masses.push(a.mass);
            }
        }
    }
    let dim = points[0].len();
    let coords = points.iter().flat_map(|p| p.iter().copied()).collect();
    let measure = DiscreteMeasure::with_merge_tol(dim, coords, masses, "barycenter", 0.0)?;
    if measure.len() != assignment.iter().max().map_or(0, |m| m + 1) {
        return Err(Error::Validation("barycenter merge changed atom count".into()));
    }
    Ok((measure, assignment))
}

/// The h-Wasserstein barycenter `(xbar_h)_# plan`, coincident barycenters
/// merged within `merge_tol`.
pub fn push_forward_barycenter(plan: &TransportPlan, tensor: &CostTensor, merge_tol: f64) -> Result<DiscreteMeasure> {
    push_forward_with_assignment(plan, tensor, merge_tol).map(|(m, _)| m)
}
