//! Pointwise h-barycenters, the induced multi-marginal cost `c_h`, and the
//! analytic first and second derivatives of both.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cost::ConvexCost;
use crate::error::{Error, Result};

/// Stationarity tolerance used when callers do not pick one.
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 60;

/// Positive weights summing to one, at least two of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    /// Normalizes `raw` to unit sum.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::InvalidWeights(format!(
                "at least two weights are required, got {}",
                raw.len()
            )));
        }
        if let Some(w) = raw.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeights(format!("weights must be positive, got {w}")));
        }
        let total: f64 = raw.iter().sum();
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(alloc::vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// `N` points of `R^d`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(points: &[&[f64]]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Validation("configuration needs points of positive dimension".into()));
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords })
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean norm of the difference in `R^{Nd}`.
    pub fn distance(&self, other: &Configuration) -> f64 {
        crate::linalg::dist(&self.coords, &other.coords)
    }

    /// Adds `v` to every point.
    pub fn translated(&self, v: &[f64]) -> Self {
        let coords = self
            .coords
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(v).map(|(a, b)| a + b))
            .collect();
        Self { dim: self.dim, coords }
    }

    fn diff(&self, i: usize, z: &DVector<f64>) -> Vec<f64> {
        self.point(i).iter().zip(z.iter()).map(|(a, b)| a - b).collect()
    }
}

/// The barycenter of a configuration together with the second-order data
/// `M_i = D^2h(x_i - xbar)` and `H = sum_k lambda_k M_k`.
#[derive(Debug, Clone)]
pub struct BarycenterJet {
    pub xbar: DVector<f64>,
    pub m: Vec<DMatrix<f64>>,
    pub h: DMatrix<f64>,
    /// `Dh(x_i - xbar)` for every `i`.
    pub grads: Vec<DVector<f64>>,
    /// `c_h` at the configuration.
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    weights: Vec<f64>,
    h_chol: Cholesky<f64, Dyn>,
}

fn objective(h: &ConvexCost, w: &Weights, x: &Configuration, z: &DVector<f64>) -> f64 {
    (0..x.len())
        .map(|i| w.get(i) * h.value_unchecked(&x.diff(i, z)))
        .sum()
}

fn stationarity(h: &ConvexCost, w: &Weights, x: &Configuration, z: &DVector<f64>) -> DVector<f64> {
    let mut f = DVector::zeros(x.dim());
    for i in 0..x.len() {
        f += h.gradient_unchecked(&x.diff(i, z)) * w.get(i);
    }
    f
}

fn check_inputs(h: &ConvexCost, w: &Weights, x: &Configuration) -> Result<()> {
    if x.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: x.dim(),
        });
    }
    if x.len() != w.len() {
        return Err(Error::Validation(format!(
            "{} weights for {} points",
            w.len(),
            x.len()
        )));
    }
    Ok(())
}

/// Minimizes `z -> sum_i lambda_i h(x_i - z)` by damped Newton started at the
/// weighted Euclidean mean.
///
/// The step solves `H dz = F` with `F = sum_i lambda_i Dh(x_i - z)`; its
/// length is halved until the objective decreases. Iteration stops once
/// `|F| <= tol`.
pub fn solve_barycenter(h: &ConvexCost, w: &Weights, x: &Configuration, tol: f64) -> Result<BarycenterJet> {
    check_inputs(h, w, x)?;
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tolerance must be positive, got {tol}")));
    }
    let n = x.len();
    let d = x.dim();
    let mut z = DVector::zeros(d);
    for i in 0..n {
        z += DVector::from_column_slice(x.point(i)) * w.get(i);
    }
    let mut f = objective(h, w, x, &z);
    let mut iterations = 0;
    let mut residual;
    loop {
        let grad = stationarity(h, w, x, &z);
        residual = grad.norm();
        if residual <= tol {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NonConvergence {
                what: "barycenter Newton",
                iterations,
                residual,
            });
        }
        iterations += 1;
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..n {
            hess += h.hessian_unchecked(&x.diff(i, &z)) * w.get(i);
        }
        let step = crate::linalg::spd_solve(&hess, &grad).ok_or(Error::NonConvergence {
            what: "barycenter Newton (Hessian not SPD)",
            iterations,
            residual,
        })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &z + &step * t;
            let fc = objective(h, w, x, &cand);
            // Near the optimum the decrease drops below rounding of f; accept a
            // non-increasing step if it shrinks the stationarity residual.
            if fc < f
                || (fc <= f + 1e-14 * (1.0 + f.abs())
                    && stationarity(h, w, x, &cand).norm() < residual)
            {
                z = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "barycenter Newton (line search)",
                iterations,
                residual,
            });
        }
    }
    build_jet(h, w, x, z, residual, iterations)
}

fn build_jet(
    h: &ConvexCost,
    w: &Weights,
    x: &Configuration,
    xbar: DVector<f64>,
    residual: f64,
    iterations: usize,
) -> Result<BarycenterJet> {
    let d = x.dim();
    let mut m = Vec::with_capacity(x.len());
    let mut grads = Vec::with_capacity(x.len());
    let mut hsum = DMatrix::zeros(d, d);
    let mut cost = 0.0;
    for i in 0..x.len() {
        let diff = x.diff(i, &xbar);
        let mi = h.hessian_unchecked(&diff);
        hsum += &mi * w.get(i);
        grads.push(h.gradient_unchecked(&diff));
        cost += w.get(i) * h.value_unchecked(&diff);
        m.push(mi);
    }
    let h_chol = hsum.clone().cholesky().ok_or(Error::NonConvergence {
        what: "barycenter Hessian factorization",
        iterations,
        residual,
    })?;
    Ok(BarycenterJet {
        xbar,
        m,
        h: hsum,
        grads,
        cost,
        residual,
        iterations,
        weights: w.as_slice().to_vec(),
        h_chol,
    })
}

/// `c_h(x) = sum_i lambda_i h(x_i - xbar_h(x))`.
pub fn cost_ch(h: &ConvexCost, w: &Weights, x: &Configuration, tol: f64) -> Result<f64> {
    Ok(solve_barycenter(h, w, x, tol)?.cost)
}

impl BarycenterJet {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xbar.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Index {
                index: i,
                detail: "marginal index exceeds configuration size",
            });
        }
        Ok(())
    }

    /// `H^{-1} B`.
    pub fn solve_h(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.h_chol.solve(b)
    }

    /// `D_{x_i} xbar_h = H^{-1} lambda_i M_i`.
    pub fn barycenter_jacobian(&self, i: usize) -> Result<DMatrix<f64>> {
        self.index(i)?;
        Ok(self.solve_h(&(&self.m[i] * self.weights[i])))
    }

    /// `D_{x_i} c_h = lambda_i Dh(x_i - xbar)`; the term through `D xbar`
    /// vanishes by stationarity.
    pub fn cost_gradient(&self, i: usize) -> Result<DVector<f64>> {
        self.index(i)?;
        Ok(&self.grads[i] * self.weights[i])
    }

    /// `D^2_{x_i x_j} c_h = -lambda_i lambda_j M_i H^{-1} M_j` for `i != j`.
    pub fn cost_cross_hessian(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.index(i)?;
        self.index(j)?;
        if i == j {
            return Err(Error::Index {
                index: j,
                detail: "cross Hessian needs i != j; use cost_own_hessian",
            });
        }
        let s = self.solve_h(&self.m[j]);
        Ok(&self.m[i] * s * (-self.weights[i] * self.weights[j]))
    }

    /// `D^2_{x_i x_i} c_h = lambda_i M_i (Id - H^{-1} lambda_i M_i)`.
    pub fn cost_own_hessian(&self, i: usize) -> Result<DMatrix<f64>> {
        self.index(i)?;
        let d = self.dim();
        let li = self.weights[i];
        let inner = DMatrix::identity(d, d) - self.solve_h(&(&self.m[i] * li));
        Ok(&self.m[i] * inner * li)
    }

    /// Smallest eigenvalue of `M_i H^{-1} M_i`.
    pub fn lambda_min(&self, i: usize) -> Result<f64> {
        self.index(i)?;
        let a = &self.m[i] * self.solve_h(&self.m[i]);
        Ok(crate::linalg::min_eigenvalue(&a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg1(xs: &[f64]) -> Configuration {
        Configuration::from_flat(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![1.0]).is_err());
        assert!(Weights::new(vec![1.0, 0.0]).is_err());
        assert!(Weights::new(vec![1.0, f64::NAN]).is_err());
        let w = Weights::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn quadratic_is_weighted_mean() {
        let h = ConvexCost::quadratic(2).unwrap();
        let w = Weights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let x = Configuration::new(&[&[0.0, 1.0], &[2.0, -1.0], &[4.0, 3.0]]).unwrap();
        let jet = solve_barycenter(&h, &w, &x, DEFAULT_TOL).unwrap();
        assert!((jet.xbar[0] - 2.6).abs() < 1e-12);
        assert!((jet.xbar[1] - 1.4).abs() < 1e-12);
        assert_eq!(jet.iterations, 0);
    }

    #[test]
    fn coincident_points() {
        let h = ConvexCost::log_cosh(2).unwrap();
        let w = Weights::uniform(3).unwrap();
        let q = [0.7, -0.2];
        let x = Configuration::new(&[&q, &q, &q]).unwrap();
        let jet = solve_barycenter(&h, &w, &x, DEFAULT_TOL).unwrap();
        assert!((jet.xbar[0] - 0.7).abs() < 1e-15 && (jet.xbar[1] + 0.2).abs() < 1e-15);
        assert_eq!(jet.residual, 0.0);
        assert_eq!(jet.cost, 0.0);
    }

    #[test]
    fn pseudo_huber_midpoint() {
        let h = ConvexCost::pseudo_huber(1, 1.0).unwrap();
        let w = Weights::uniform(2).unwrap();
        let jet = solve_barycenter(&h, &w, &cfg1(&[0.0, 1.0]), DEFAULT_TOL).unwrap();
        assert!((jet.xbar[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cost_closed_form() {
        let h = ConvexCost::quadratic(1).unwrap();
        let w = Weights::uniform(2).unwrap();
        let c = cost_ch(&h, &w, &cfg1(&[0.0, 1.0]), DEFAULT_TOL).unwrap();
        assert!((c - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadratic_derivatives() {
        let h = ConvexCost::quadratic(2).unwrap();
        let w = Weights::uniform(2).unwrap();
        let x = Configuration::new(&[&[0.0, 1.0], &[3.0, 1.0]]).unwrap();
        let jet = solve_barycenter(&h, &w, &x, DEFAULT_TOL).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((jet.barycenter_jacobian(0).unwrap() - &id * 0.5).amax() < 1e-15);
        assert!((jet.cost_cross_hessian(0, 1).unwrap() + &id * 0.5).amax() < 1e-15);
        assert!((jet.cost_own_hessian(1).unwrap() - &id * 0.5).amax() < 1e-15);
        let g = jet.cost_gradient(0).unwrap();
        assert!((g[0] - 2.0 * 0.5 * (0.0 - 1.5)).abs() < 1e-14 && g[1].abs() < 1e-14);
    }

    #[test]
    fn index_errors() {
        let h = ConvexCost::quadratic(1).unwrap();
        let w = Weights::uniform(2).unwrap();
        let jet = solve_barycenter(&h, &w, &cfg1(&[0.0, 1.0]), DEFAULT_TOL).unwrap();
        assert!(matches!(jet.cost_cross_hessian(1, 1), Err(Error::Index { .. })));
        assert!(jet.barycenter_jacobian(2).is_err());
    }

    #[test]
    fn mismatched_inputs() {
        let h = ConvexCost::quadratic(2).unwrap();
        let w = Weights::uniform(2).unwrap();
        assert!(solve_barycenter(&h, &w, &cfg1(&[0.0, 1.0]), 1e-10).is_err());
        let h1 = ConvexCost::quadratic(1).unwrap();
        assert!(solve_barycenter(&h1, &w, &cfg1(&[0.0, 1.0, 2.0]), 1e-10).is_err());
        assert!(solve_barycenter(&h1, &w, &cfg1(&[0.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn jacobians_sum_to_identity() {
        let h = ConvexCost::smoothed_power(2, 3.0, 0.2).unwrap();
        let w = Weights::new(vec![0.1, 0.6, 0.3]).unwrap();
        let x = Configuration::new(&[&[0.0, 1.0], &[2.0, -1.0], &[-1.0, 0.5]]).unwrap();
        let jet = solve_barycenter(&h, &w, &x, DEFAULT_TOL).unwrap();
        let mut sum = DMatrix::zeros(2, 2);
        for i in 0..3 {
            sum += jet.barycenter_jacobian(i).unwrap();
        }
        assert!((sum - DMatrix::identity(2, 2)).amax() < 1e-8);
        assert!(jet.lambda_min(0).unwrap() > 0.0);
    }
}
