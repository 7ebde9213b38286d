//! Dense multi-marginal cost tensors.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::barycenter::{solve_barycenter, BarycenterJet, Configuration, Weights, DEFAULT_TOL};
use crate::cost::ConvexCost;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Default cap on the number of tensor entries.
pub const DEFAULT_BUDGET: usize = 2_000_000;

/// A barycenter problem: cost, weights and the `N` marginals.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cost: ConvexCost,
    pub weights: Weights,
    pub marginals: Vec<DiscreteMeasure>,
    /// Stationarity tolerance of every barycenter solve.
    pub tol: f64,
}

impl Problem {
    pub fn new(cost: ConvexCost, weights: Weights, marginals: Vec<DiscreteMeasure>) -> Result<Self> {
        if marginals.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} marginals",
                weights.len(),
                marginals.len()
            )));
        }
        if let Some(m) = marginals.iter().find(|m| m.dim() != cost.dim()) {
            return Err(Error::DimensionMismatch {
                expected: cost.dim(),
                found: m.dim(),
            });
        }
        Ok(Self {
            cost,
            weights,
            marginals,
            tol: DEFAULT_TOL,
        })
    }

    pub fn n_marginals(&self) -> usize {
        self.marginals.len()
    }

    pub fn dim(&self) -> usize {
        self.cost.dim()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.marginals.iter().map(|m| m.len()).collect()
    }

    pub fn marginal_masses(&self) -> Vec<&[f64]> {
        self.marginals.iter().map(|m| m.masses()).collect()
    }

    /// The configuration `(x_{1,j_1}, ..., x_{N,j_N})`.
    pub fn configuration(&self, tuple: &[usize]) -> Configuration {
        let d = self.dim();
        let mut coords = Vec::with_capacity(d * tuple.len());
        for (m, &j) in self.marginals.iter().zip(tuple) {
            coords.extend_from_slice(m.point(j));
        }
        Configuration::from_flat(d, coords).expect("marginals share a positive dimension")
    }

    pub fn jet(&self, tuple: &[usize]) -> Result<BarycenterJet> {
        solve_barycenter(&self.cost, &self.weights, &self.configuration(tuple), self.tol)
    }

    /// `c_h` and the barycenter at one tuple, tagged with the tuple on failure.
    pub fn entry(&self, tuple: &[usize]) -> Result<(f64, Vec<f64>)> {
        match self.jet(tuple) {
            Ok(j) => Ok((j.cost, j.xbar.as_slice().to_vec())),
            Err(e) => Err(Error::TensorEntry {
                index: tuple.to_vec(),
                source: Box::new(e),
            }),
        }
    }
}

/// Row-major indexing of tuples `(j_1, ..., j_N)`, last index fastest, so the
/// flat order is the lexicographic tuple order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorShape {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl TensorShape {
    pub fn new(dims: Vec<usize>, budget: usize) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Validation(format!("invalid tensor shape {dims:?}")));
        }
        let mut len: usize = 1;
        for &n in &dims {
            len = len.checked_mul(n).filter(|&l| l <= budget).ok_or(Error::BudgetExceeded {
                entries: dims.iter().fold(1usize, |a, &b| a.saturating_mul(b)),
                budget,
            })?;
        }
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(Self { dims, strides, len })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn flat(&self, tuple: &[usize]) -> usize {
        tuple.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    pub fn tuple(&self, mut flat: usize) -> Vec<usize> {
        let mut t = vec![0; self.dims.len()];
        for (k, s) in self.strides.iter().enumerate() {
            t[k] = flat / s;
            flat %= s;
        }
        t
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        tuple.len() == self.dims.len() && tuple.iter().zip(&self.dims).all(|(j, n)| j < n)
    }
}

/// Costs for every tuple of atoms, plus the barycenter of each tuple when the
/// tensor comes from a barycenter problem.
#[derive(Debug, Clone)]
pub struct CostTensor {
    shape: TensorShape,
    values: Vec<f64>,
    dim: usize,
    barycenters: Option<Vec<f64>>,
}

impl CostTensor {
    /// A tensor of arbitrary nonnegative costs without barycenter data.
    pub fn from_values(shape: TensorShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Validation(format!(
                "{} values for a tensor of {} entries",
                values.len(),
                shape.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite cost entry".into()));
        }
        Ok(Self {
            shape,
            values,
            dim: 0,
            barycenters: None,
        })
    }

    /// Assembles from per-entry results in flat order, e.g. computed in parallel
    /// by a caller through [`Problem::entry`].
    pub fn from_entries(shape: TensorShape, dim: usize, entries: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if entries.len() != shape.len() {
            return Err(Error::Validation("entry count differs from tensor size".into()));
        }
        let mut values = Vec::with_capacity(entries.len());
        let mut bary = Vec::with_capacity(entries.len() * dim);
        for (v, b) in entries {
            if b.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: b.len(),
                });
            }
            values.push(v);
            bary.extend_from_slice(&b);
        }
        let mut t = Self::from_values(shape, values)?;
        t.dim = dim;
        t.barycenters = Some(bary);
        Ok(t)
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn at(&self, tuple: &[usize]) -> f64 {
        self.values[self.shape.flat(tuple)]
    }

    pub fn has_barycenters(&self) -> bool {
        self.barycenters.is_some()
    }

    pub fn barycenter(&self, flat: usize) -> Option<&[f64]> {
        self.barycenters
            .as_ref()
            .map(|b| &b[flat * self.dim..(flat + 1) * self.dim])
    }

    pub fn barycenter_at(&self, tuple: &[usize]) -> Option<&[f64]> {
        self.barycenter(self.shape.flat(tuple))
    }
}

/// Evaluates `c_h` on every tuple of atoms, sequentially and in flat order.
pub fn assemble_cost_tensor(problem: &Problem, budget: usize) -> Result<CostTensor> {
    if problem.n_marginals() < 2 {
        return Err(Error::Validation("at least two marginals are required".into()));
    }
    let shape = TensorShape::new(problem.shape(), budget)?;
    let mut entries = Vec::with_capacity(shape.len());
    let mut tuple = vec![0usize; shape.order()];
    for _ in 0..shape.len() {
        entries.push(problem.entry(&tuple)?);
        advance(&mut tuple, shape.dims());
    }
    CostTensor::from_entries(shape, problem.dim(), entries)
}

/// Odometer increment in lexicographic order; wraps to all zeros at the end.
pub(crate) fn advance(tuple: &mut [usize], dims: &[usize]) {
    for k in (0..tuple.len()).rev() {
        tuple[k] += 1;
        if tuple[k] < dims[k] {
            return;
        }
        tuple[k] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(label: &str) -> DiscreteMeasure {
        DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5], label).unwrap()
    }

    #[test]
    fn quadratic_two_by_two() {
        let p = Problem::new(
            ConvexCost::quadratic(1).unwrap(),
            Weights::uniform(2).unwrap(),
            vec![two_point("a"), two_point("b")],
        )
        .unwrap();
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        let expect = [0.0, 0.25, 0.25, 0.0];
        for (v, e) in t.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
        assert_eq!(t.barycenter_at(&[0, 1]).unwrap(), &[0.5]);
    }

    #[test]
    fn single_atom_marginals() {
        let q = [0.3, -1.0];
        let m = DiscreteMeasure::dirac(&q, "q").unwrap();
        let p = Problem::new(
            ConvexCost::pseudo_huber(2, 0.5).unwrap(),
            Weights::uniform(3).unwrap(),
            vec![m.clone(), m.clone(), m],
        )
        .unwrap();
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!(t.values(), &[0.0]);
    }

    #[test]
    fn budget_is_enforced() {
        let p = Problem::new(
            ConvexCost::quadratic(1).unwrap(),
            Weights::uniform(3).unwrap(),
            vec![two_point("a"), two_point("b"), two_point("c")],
        )
        .unwrap();
        assert_eq!(
            assemble_cost_tensor(&p, 7).unwrap_err(),
            Error::BudgetExceeded { entries: 8, budget: 7 }
        );
    }

    #[test]
    fn flat_order_is_lexicographic() {
        let s = TensorShape::new(vec![2, 3, 4], 100).unwrap();
        let mut t = vec![0; 3];
        for f in 0..s.len() {
            assert_eq!(s.tuple(f), t);
            assert_eq!(s.flat(&t), f);
            advance(&mut t, s.dims());
        }
        assert_eq!(t, vec![0, 0, 0]);
    }
}
