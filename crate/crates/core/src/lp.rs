//! Exact solver for the multi-marginal transportation linear program
//!
//! ```text
//! min  sum_t c_t x_t
//! s.t. sum_{t : t_i = j} x_t = mu_i(j)   for every marginal i and atom j
//!      x >= 0
//! ```
//!
//! Revised primal simplex over a dense basis inverse. One equality row per
//! atom is kept for the first marginal and rows `(i, 0)` of the remaining
//! marginals are dropped, which removes exactly the `N - 1` redundancies, so
//! a basis has `sum_i n_i - N + 1` columns. The starting basis comes from a
//! multi-marginal north-west corner rule. Entering and leaving variables
//! follow Bland's rule over the lexicographic tuple order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::plan::{PlanAtom, Potentials, TransportPlan, MARGINAL_TOL};
use crate::tensor::{advance, CostTensor};

const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
const NOT_BASIC: usize = usize::MAX;

/// Simplex tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Reduced costs below `-rc_tol * (1 + max |c|)` are improving.
    pub rc_tol: f64,
    /// Basic values at or below this are dropped from the reported plan.
    pub mass_floor: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            rc_tol: 1e-12,
            mass_floor: 1e-15,
            max_iterations: 2_000_000,
        }
    }
}

/// Statistics of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LpStats {
    pub iterations: usize,
    pub degenerate_pivots: usize,
    pub refactorizations: usize,
}

struct RowMap {
    offset: Vec<usize>,
    rows: usize,
}

impl RowMap {
    fn new(dims: &[usize]) -> Self {
        let mut offset = Vec::with_capacity(dims.len());
        let mut rows = 0;
        for (i, &n) in dims.iter().enumerate() {
            offset.push(rows);
            rows += if i == 0 { n } else { n - 1 };
        }
        Self { offset, rows }
    }

    fn row(&self, i: usize, j: usize) -> Option<usize> {
        match (i, j) {
            (0, j) => Some(j),
            (_, 0) => None,
            (i, j) => Some(self.offset[i] + j - 1),
        }
    }

    fn column(&self, tuple: &[usize], out: &mut Vec<usize>) {
        out.clear();
        out.extend(tuple.iter().enumerate().filter_map(|(i, &j)| self.row(i, j)));
    }
}

/// Multi-marginal north-west corner rule advancing one pointer per step, so
/// exactly `sum n_i - N + 1` (possibly zero-mass) cells are produced and
/// they form a basis.
fn north_west_corner(dims: &[usize], masses: &[&[f64]]) -> Vec<(Vec<usize>, f64)> {
    let mut resid: Vec<Vec<f64>> = masses.iter().map(|m| m.to_vec()).collect();
    let mut ptr = vec![0usize; dims.len()];
    let mut cells = Vec::new();
    loop {
        let amount = (0..dims.len())
            .map(|i| resid[i][ptr[i]])
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        for i in 0..dims.len() {
            resid[i][ptr[i]] -= amount;
        }
        cells.push((ptr.clone(), amount));
        let next = (0..dims.len())
            .filter(|&i| ptr[i] + 1 < dims[i])
            .min_by(|&a, &b| resid[a][ptr[a]].total_cmp(&resid[b][ptr[b]]).then(a.cmp(&b)));
        match next {
            Some(i) => ptr[i] += 1,
            None => break,
        }
    }
    cells
}

struct Simplex<'a> {
    tensor: &'a CostTensor,
    rows: RowMap,
    m: usize,
    b: Vec<f64>,
    basic: Vec<usize>,
    position: Vec<usize>,
    binv: Vec<f64>,
    x: Vec<f64>,
    stats: LpStats,
    col: Vec<usize>,
}

impl<'a> Simplex<'a> {
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        let shape = self.tensor.shape();
        for (k, &t) in self.basic.iter().enumerate() {
            let tuple = shape.tuple(t);
            self.rows.column(&tuple, &mut self.col);
            for &r in &self.col {
                bmat[(r, k)] = 1.0;
            }
        }
        let inv = bmat.lu().try_inverse().ok_or_else(|| Error::NumericalStall {
            iterations: self.stats.iterations,
            detail: "basis matrix became singular".into(),
        })?;
        for r in 0..m {
            for c in 0..m {
                self.binv[r * m + c] = inv[(r, c)];
            }
        }
        let xb = inv * DVector::from_column_slice(&self.b);
        for k in 0..m {
            self.x[k] = xb[k];
        }
        self.stats.refactorizations += 1;
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &t) in self.basic.iter().enumerate() {
            let c = self.tensor.value(t);
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[k * m..(k + 1) * m];
            for (yr, br) in y.iter_mut().zip(row) {
                *yr += c * br;
            }
        }
        y
    }

    fn potentials(&self, y: &[f64]) -> Vec<Vec<f64>> {
        self.tensor
            .shape()
            .dims()
            .iter()
            .enumerate()
            .map(|(i, &n)| (0..n).map(|j| self.rows.row(i, j).map_or(0.0, |r| y[r])).collect())
            .collect()
    }

    /// First nonbasic tuple (lexicographic) with negative reduced cost.
    fn price(&self, phi: &[Vec<f64>], tol: f64) -> Option<usize> {
        let dims = self.tensor.shape().dims();
        let mut tuple = vec![0usize; dims.len()];
        for (t, &c) in self.tensor.values().iter().enumerate() {
            if self.position[t] == NOT_BASIC {
                let s: f64 = phi.iter().zip(&tuple).map(|(p, &j)| p[j]).sum();
                if c - s < -tol {
                    return Some(t);
                }
            }
            advance(&mut tuple, dims);
        }
        None
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let m = self.m;
        let tuple = self.tensor.shape().tuple(entering);
        self.rows.column(&tuple, &mut self.col);
        let mut d = vec![0.0; m];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = self.col.iter().map(|&r| self.binv[k * m + r]).sum();
        }
        // ratio test with Bland tie-breaking on the basic variable's tuple order
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..m {
            if d[k] > PIVOT_TOL {
                let ratio = self.x[k].max(0.0) / d[k];
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((kb, rb)) => {
                        let tie = (ratio - rb).abs() <= 1e-14 * (1.0 + rb);
                        if (!tie && ratio < rb) || (tie && self.basic[k] < self.basic[kb]) {
                            Some((k, ratio))
                        } else {
                            Some((kb, rb))
                        }
                    }
                };
            }
        }
        let (r, theta) = leave.ok_or_else(|| Error::NumericalStall {
            iterations: self.stats.iterations,
            detail: "no leaving variable in a bounded program".into(),
        })?;
        if theta == 0.0 {
            self.stats.degenerate_pivots += 1;
        }
        for k in 0..m {
            self.x[k] -= theta * d[k];
        }
        self.x[r] = theta;
        self.position[self.basic[r]] = NOT_BASIC;
        self.basic[r] = entering;
        self.position[entering] = r;

        let dr = d[r];
        for c in 0..m {
            self.binv[r * m + c] /= dr;
        }
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, tail) = rest.split_at_mut(m);
        for (k, row) in head.chunks_mut(m).enumerate() {
            let f = d[k];
            if f != 0.0 {
                row.iter_mut().zip(pivot_row.iter()).for_each(|(a, p)| *a -= f * p);
            }
        }
        for (k, row) in tail.chunks_mut(m).enumerate() {
            let f = d[r + 1 + k];
            if f != 0.0 {
                row.iter_mut().zip(pivot_row.iter()).for_each(|(a, p)| *a -= f * p);
            }
        }
        Ok(())
    }
}

/// Solves the transportation program for arbitrary marginal masses.
pub fn solve_transport_lp(
    tensor: &CostTensor,
    masses: &[&[f64]],
    options: &LpOptions,
) -> Result<(TransportPlan, Potentials, LpStats)> {
    let dims = tensor.shape().dims().to_vec();
    if masses.len() != dims.len() || masses.iter().zip(&dims).any(|(m, &n)| m.len() != n) {
        return Err(Error::Validation(format!(
            "marginal sizes {:?} do not match tensor shape {dims:?}",
            masses.iter().map(|m| m.len()).collect::<Vec<_>>()
        )));
    }
    let totals: Vec<f64> = masses.iter().map(|m| m.iter().sum()).collect();
    if masses.iter().any(|m| m.iter().any(|v| !(v.is_finite() && *v >= 0.0)))
        || totals.iter().any(|t| (t - totals[0]).abs() > MARGINAL_TOL)
    {
        return Err(Error::Infeasible(format!("marginal totals {totals:?} differ")));
    }

    let rows = RowMap::new(&dims);
    let m = rows.rows;
    let mut b = vec![0.0; m];
    for (i, mu) in masses.iter().enumerate() {
        for (j, &v) in mu.iter().enumerate() {
            if let Some(r) = rows.row(i, j) {
                b[r] = v;
            }
        }
    }
    let start = north_west_corner(&dims, masses);
    debug_assert_eq!(start.len(), m);
    let shape = tensor.shape();
    let mut position = vec![NOT_BASIC; shape.len()];
    let mut basic = Vec::with_capacity(m);
    for (k, (tuple, _)) in start.iter().enumerate() {
        let t = shape.flat(tuple);
        position[t] = k;
        basic.push(t);
    }
    let mut sx = Simplex {
        tensor,
        rows,
        m,
        b,
        basic,
        position,
        binv: vec![0.0; m * m],
        x: vec![0.0; m],
        stats: LpStats::default(),
        col: Vec::with_capacity(dims.len()),
    };
    sx.refactor()?;

    let cmax = tensor.values().iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let tol = options.rc_tol * (1.0 + cmax);
    let mut since_refactor = 0;
    loop {
        let y = sx.duals();
        let phi = sx.potentials(&y);
        match sx.price(&phi, tol) {
            Some(q) => {
                if sx.stats.iterations >= options.max_iterations {
                    return Err(Error::NumericalStall {
                        iterations: sx.stats.iterations,
                        detail: "iteration limit reached".into(),
                    });
                }
                sx.pivot(q)?;
                sx.stats.iterations += 1;
                since_refactor += 1;
                if since_refactor >= REFACTOR_EVERY {
                    sx.refactor()?;
                    since_refactor = 0;
                }
            }
            None if since_refactor > 0 => {
                // confirm optimality on a fresh factorization
                sx.refactor()?;
                since_refactor = 0;
            }
            None => break,
        }
    }

    let worst = sx.x.iter().copied().fold(f64::INFINITY, f64::min);
    if worst < -MARGINAL_TOL {
        return Err(Error::NumericalStall {
            iterations: sx.stats.iterations,
            detail: format!("final basis is primal infeasible ({worst:e})"),
        });
    }
    let y = sx.duals();
    let phi = sx.potentials(&y);
    let atoms = sx
        .basic
        .iter()
        .zip(&sx.x)
        .filter(|(_, &v)| v > options.mass_floor)
        .map(|(&t, &v)| PlanAtom {
            index: shape.tuple(t),
            mass: v,
        })
        .collect();
    let mut plan = TransportPlan::new(atoms, tensor)?;
    plan.vertex = true;
    plan.check_marginals(masses, MARGINAL_TOL)?;
    let potentials = Potentials::new(phi, masses);
    Ok((plan, potentials, sx.stats))
}

/// Exact multi-marginal optimal transport: a basic optimal plan together
/// with optimal dual potentials.
pub fn solve_mmot_lp(tensor: &CostTensor, measures: &[DiscreteMeasure]) -> Result<(TransportPlan, Potentials)> {
    let masses: Vec<&[f64]> = measures.iter().map(|m| m.masses()).collect();
    solve_transport_lp(tensor, &masses, &LpOptions::default()).map(|(p, d, _)| (p, d))
}
