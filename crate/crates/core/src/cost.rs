//! Admissible interaction costs `h : R^d -> R`.
//!
//! Every shipped kind is nonnegative, vanishes at the origin, is strictly
//! convex and coercive, twice differentiable, and has a positive definite
//! Hessian everywhere. Values, gradients and Hessians are exact closed forms.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

const INVERT_MAX_ITER: usize = 100;
const INVERT_MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `|z|^2`
    Quadratic,
    /// `z^T A z` with `A` symmetric positive definite.
    AnisotropicQuadratic { a: DMatrix<f64> },
    /// `delta^2 (sqrt(1 + |z|^2 / delta^2) - 1)`
    PseudoHuber { delta: f64 },
    /// `(|z|^2 + eps^2)^(p/2) - eps^p`
    SmoothedPower { p: f64, eps: f64 },
    /// `sum_k log cosh(z_k)`
    LogCosh,
}

/// A cost function together with its ambient dimension. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCost {
    kind: CostKind,
    dim: usize,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidCost("dimension must be positive".into()));
    }
    Ok(())
}

fn log_cosh(x: f64) -> f64 {
    let a = libm::fabs(x);
    a + libm::log1p(libm::exp(-2.0 * a)) - core::f64::consts::LN_2
}

fn sech2(x: f64) -> f64 {
    let t = libm::tanh(x);
    // 1 - tanh^2 loses everything for |x| > ~19; use the exponential form there.
    if libm::fabs(x) < 5.0 {
        1.0 - t * t
    } else {
        let e = libm::exp(-2.0 * libm::fabs(x));
        4.0 * e / ((1.0 + e) * (1.0 + e))
    }
}

impl ConvexCost {
    pub fn quadratic(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: CostKind::Quadratic, dim })
    }

    /// Rejects matrices that are not symmetric or not positive definite.
    pub fn anisotropic_quadratic(a: DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        check_dim(dim)?;
        if a.ncols() != dim {
            return Err(Error::InvalidCost(format!(
                "matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCost("matrix has non-finite entries".into()));
        }
        let scale = a.amax().max(1.0);
        for r in 0..dim {
            for c in 0..r {
                if libm::fabs(a[(r, c)] - a[(c, r)]) > 1e-12 * scale {
                    return Err(Error::InvalidCost("matrix is not symmetric".into()));
                }
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let min_eig = linalg::min_eigenvalue(&sym);
        if !(min_eig > 0.0) || sym.clone().cholesky().is_none() {
            return Err(Error::InvalidCost(format!(
                "matrix is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            kind: CostKind::AnisotropicQuadratic { a: sym },
            dim,
        })
    }

    pub fn anisotropic_from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::InvalidCost(format!(
                "expected {} matrix entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::anisotropic_quadratic(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn pseudo_huber(dim: usize, delta: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidCost(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            kind: CostKind::PseudoHuber { delta },
            dim,
        })
    }

    pub fn smoothed_power(dim: usize, p: f64, eps: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidCost(format!("exponent must exceed 1, got {p}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidCost(format!("eps must be positive, got {eps}")));
        }
        Ok(Self {
            kind: CostKind::SmoothedPower { p, eps },
            dim,
        })
    }

    pub fn log_cosh(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: CostKind::LogCosh, dim })
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Short snake_case name of the kind, as used in configuration files.
    pub fn name(&self) -> &'static str {
        match self.kind {
            CostKind::Quadratic => "quadratic",
            CostKind::AnisotropicQuadratic { .. } => "anisotropic_quadratic",
            CostKind::PseudoHuber { .. } => "pseudo_huber",
            CostKind::SmoothedPower { .. } => "smoothed_power",
            CostKind::LogCosh => "log_cosh",
        }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        Ok(self.value_unchecked(z))
    }

    pub fn gradient(&self, z: &[f64]) -> Result<DVector<f64>> {
        self.check(z)?;
        Ok(self.gradient_unchecked(z))
    }

    pub fn hessian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check(z)?;
        Ok(self.hessian_unchecked(z))
    }

    pub(crate) fn value_unchecked(&self, z: &[f64]) -> f64 {
        let n2 = linalg::norm2_sq(z);
        match &self.kind {
            CostKind::Quadratic => n2,
            CostKind::AnisotropicQuadratic { a } => {
                let v = DVector::from_column_slice(z);
                v.dot(&(a * &v))
            }
            CostKind::PseudoHuber { delta } => {
                let d2 = delta * delta;
                // d2 * (sqrt(1+u) - 1) = d2 * u / (sqrt(1+u) + 1), stable for small u
                let u = n2 / d2;
                d2 * u / (libm::sqrt(1.0 + u) + 1.0)
            }
            CostKind::SmoothedPower { p, eps } => {
                let e2 = eps * eps;
                // (e2 + n2)^(p/2) - e2^(p/2) = e2^(p/2) * expm1((p/2) ln(1 + n2/e2))
                libm::pow(e2, 0.5 * p) * libm::expm1(0.5 * p * libm::log1p(n2 / e2))
            }
            CostKind::LogCosh => z.iter().map(|&x| log_cosh(x)).sum(),
        }
    }

    pub(crate) fn gradient_unchecked(&self, z: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(z);
        match &self.kind {
            CostKind::Quadratic => v * 2.0,
            CostKind::AnisotropicQuadratic { a } => (a * v) * 2.0,
            CostKind::PseudoHuber { delta } => {
                let s = libm::sqrt(1.0 + v.norm_squared() / (delta * delta));
                v / s
            }
            CostKind::SmoothedPower { p, eps } => {
                let u = v.norm_squared() + eps * eps;
                let f = p * libm::pow(u, 0.5 * p - 1.0);
                v * f
            }
            CostKind::LogCosh => v.map(libm::tanh),
        }
    }

    pub(crate) fn hessian_unchecked(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.kind {
            CostKind::Quadratic => DMatrix::identity(d, d) * 2.0,
            CostKind::AnisotropicQuadratic { a } => a * 2.0,
            CostKind::PseudoHuber { delta } => {
                let v = DVector::from_column_slice(z);
                let d2 = delta * delta;
                let s2 = 1.0 + v.norm_squared() / d2;
                let s = libm::sqrt(s2);
                let mut m = DMatrix::identity(d, d);
                m -= (&v * v.transpose()) / (d2 * s2);
                m / s
            }
            CostKind::SmoothedPower { p, eps } => {
                let v = DVector::from_column_slice(z);
                let u = v.norm_squared() + eps * eps;
                let a = p * libm::pow(u, 0.5 * p - 1.0);
                let b = p * (p - 2.0) * libm::pow(u, 0.5 * p - 2.0);
                DMatrix::identity(d, d) * a + (&v * v.transpose()) * b
            }
            CostKind::LogCosh => {
                DMatrix::from_diagonal(&DVector::from_iterator(d, z.iter().map(|&x| sech2(x))))
            }
        }
    }

    /// Whether `g` lies in the (open) range of `Dh`.
    pub fn in_gradient_range(&self, g: &[f64]) -> bool {
        if g.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match &self.kind {
            CostKind::PseudoHuber { delta } => linalg::norm2_sq(g) < delta * delta,
            CostKind::LogCosh => g.iter().all(|x| libm::fabs(*x) < 1.0),
            _ => true,
        }
    }

    /// Solves `Dh(w) = g` for `w`.
    ///
    /// Quadratic costs are inverted in closed form. Every other kind runs
    /// damped Newton on the strictly convex function `h(w) - g.w`, whose
    /// gradient is `Dh(w) - g`, halving the step until the function decreases.
    pub fn invert_gradient(&self, g: &[f64], tol: f64) -> Result<DVector<f64>> {
        self.check(g)?;
        if !self.in_gradient_range(g) {
            return Err(Error::Range);
        }
        if let CostKind::Quadratic = self.kind {
            return Ok(DVector::from_column_slice(g) / 2.0);
        }
        let gv = DVector::from_column_slice(g);
        let objective = |w: &DVector<f64>| self.value_unchecked(w.as_slice()) - gv.dot(w);
        let mut w = DVector::zeros(self.dim);
        let mut f = objective(&w);
        let mut residual = gv.norm();
        for it in 0..INVERT_MAX_ITER {
            let r = self.gradient_unchecked(w.as_slice()) - &gv;
            residual = r.norm();
            if residual <= tol {
                return Ok(w);
            }
            let hess = self.hessian_unchecked(w.as_slice());
            let step = linalg::spd_solve(&hess, &r).ok_or(Error::NonConvergence {
                what: "gradient inversion",
                iterations: it,
                residual,
            })?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..INVERT_MAX_HALVINGS {
                let cand = &w - &step * t;
                let fc = objective(&cand);
                let slack = 1e-14 * (1.0 + libm::fabs(f));
                if fc < f
                    || (fc <= f + slack
                        && (self.gradient_unchecked(cand.as_slice()) - &gv).norm() < residual)
                {
                    w = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NonConvergence {
            what: "gradient inversion",
            iterations: INVERT_MAX_ITER,
            residual,
        })
    }

    /// Spot-checks the structural assumptions at seeded probe points.
    pub fn check_assumptions(&self, probe_radius: f64, n_probes: usize, seed: u64) -> AssumptionReport {
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probe = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d)
                .map(|_| rng.random_range(-probe_radius..=probe_radius))
                .collect()
        };
        let probes: Vec<Vec<f64>> = (0..n_probes.max(1)).map(|_| probe(&mut rng)).collect();
        let partners: Vec<Vec<f64>> = (0..n_probes.max(1)).map(|_| probe(&mut rng)).collect();

        // (A1) nonnegativity, plus normalization at the origin
        let mut a1 = AssumptionCheck::new("A1 nonnegativity");
        a1.observe(self.value_unchecked(&vec![0.0; d]), vec![0.0; d]);
        for z in &probes {
            a1.observe(self.value_unchecked(z), z.clone());
        }
        a1.passed = a1.worst_value >= 0.0 && libm::fabs(self.value_unchecked(&vec![0.0; d])) <= 1e-15;

        // (A2) strict convexity at midpoints
        let mut a2 = AssumptionCheck::new("A2 strict convexity");
        for (z, w) in probes.iter().zip(&partners) {
            let mid: Vec<f64> = z.iter().zip(w).map(|(a, b)| 0.5 * (a + b)).collect();
            let gap = 0.5 * (self.value_unchecked(z) + self.value_unchecked(w)) - self.value_unchecked(&mid);
            a2.observe(gap, mid);
        }
        a2.passed = a2.worst_value > 0.0;

        // (A3) coercivity along rays: h(2^k r u) strictly increasing
        let mut a3 = AssumptionCheck::new("A3 coercivity");
        for z in &probes {
            let n = libm::sqrt(linalg::norm2_sq(z));
            if n == 0.0 {
                continue;
            }
            let dir: Vec<f64> = z.iter().map(|x| x / n).collect();
            let mut prev = self.value_unchecked(&vec![0.0; d]);
            for k in 0..6 {
                let r = probe_radius * (1u64 << k) as f64;
                let pt: Vec<f64> = dir.iter().map(|x| x * r).collect();
                let v = self.value_unchecked(&pt);
                a3.observe(v - prev, pt);
                prev = v;
            }
        }
        a3.passed = a3.worst_value > 0.0;

        // (A4) C^2 regularity: analytic derivatives agree with central differences
        let mut a4 = AssumptionCheck::new("A4 regularity");
        for z in &probes {
            let err = self.derivative_mismatch(z);
            a4.observe(-err, z.clone());
        }
        a4.passed = -a4.worst_value <= 1e-4;

        // (A5) positive definite Hessian
        let mut a5 = AssumptionCheck::new("A5 non-degeneracy");
        for z in &probes {
            a5.observe(linalg::min_eigenvalue(&self.hessian_unchecked(z)), z.clone());
        }
        a5.passed = a5.worst_value > 0.0;

        AssumptionReport {
            checks: vec![a1, a2, a3, a4, a5],
        }
    }

    /// Largest relative central-difference mismatch of gradient and Hessian at `z`.
    fn derivative_mismatch(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let grad = self.gradient_unchecked(z);
        let hess = self.hessian_unchecked(z);
        let mut worst: f64 = 0.0;
        let mut zp = z.to_vec();
        for k in 0..d {
            let step = 1e-5 * (1.0 + libm::fabs(z[k]));
            zp[k] = z[k] + step;
            let fp = self.value_unchecked(&zp);
            let gp = self.gradient_unchecked(&zp);
            zp[k] = z[k] - step;
            let fm = self.value_unchecked(&zp);
            let gm = self.gradient_unchecked(&zp);
            zp[k] = z[k];
            let fd = (fp - fm) / (2.0 * step);
            let scale = 1.0 + grad.amax();
            worst = worst.max(libm::fabs(fd - grad[k]) / scale);
            let hscale = 1.0 + hess.amax();
            for r in 0..d {
                let fd2 = (gp[r] - gm[r]) / (2.0 * step);
                worst = worst.max(libm::fabs(fd2 - hess[(r, k)]) / hscale);
            }
        }
        worst
    }
}

/// Outcome of one assumption spot-check.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Smallest observed value of the checked quantity (larger is better).
    pub worst_value: f64,
    pub worst_point: Vec<f64>,
}

impl AssumptionCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: false,
            worst_value: f64::INFINITY,
            worst_point: Vec::new(),
        }
    }

    fn observe(&mut self, value: f64, point: Vec<f64>) {
        if value < self.worst_value || value.is_nan() {
            self.worst_value = value;
            self.worst_point = point;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, prefix: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name.starts_with(prefix))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{}: {} (worst {:e})\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.worst_value
            ));
        }
        s
    }
}
