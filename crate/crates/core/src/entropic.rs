//! Entropic multi-marginal transport by alternating log-domain scaling.
//!
//! The plan has the form `P_t = prod_i mu_i(t_i) * exp((sum_i f_i(t_i) - c_t) / eps)`
//! and each sweep updates `f_i` so that the `i`-th marginal is matched
//! exactly. Result plans are dense and not vertices of the transport
//! polytope.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::plan::{PlanAtom, Potentials, TransportPlan};
use crate::tensor::{advance, CostTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EntropicSolution {
    pub plan: TransportPlan,
    /// The scaling potentials `f_i`.
    pub potentials: Potentials,
    pub iterations: usize,
    /// Largest per-atom marginal deviation at exit.
    pub marginal_error: f64,
}

fn log_sum_exp(acc: &mut (f64, f64), v: f64) {
    // acc = (running max, sum of exp(x - max))
    if v == f64::NEG_INFINITY {
        return;
    }
    if v > acc.0 {
        acc.1 = acc.1 * libm::exp(acc.0 - v) + 1.0;
        acc.0 = v;
    } else {
        acc.1 += libm::exp(v - acc.0);
    }
}

/// Regularized multi-marginal transport with strength `eps`.
pub fn solve_mmot_entropic(
    tensor: &CostTensor,
    measures: &[DiscreteMeasure],
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<EntropicSolution> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(alloc::format!("eps must be positive, got {eps}")));
    }
    let dims = tensor.shape().dims().to_vec();
    if measures.len() != dims.len() || measures.iter().zip(&dims).any(|(m, &n)| m.len() != n) {
        return Err(Error::Validation("marginals do not match tensor shape".into()));
    }
    let n = dims.len();
    let log_mu: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| m.masses().iter().map(|v| libm::log(*v)).collect())
        .collect();
    let mut f: Vec<Vec<f64>> = dims.iter().map(|&k| vec![0.0; k]).collect();

    // exponent of P_t
    let exponent = |f: &[Vec<f64>], tuple: &[usize], c: f64| -> f64 {
        let mut s = -c / eps;
        for i in 0..n {
            s += log_mu[i][tuple[i]] + f[i][tuple[i]] / eps;
        }
        s
    };

    let marginal_error = |f: &[Vec<f64>]| -> f64 {
        let mut marg: Vec<Vec<f64>> = dims.iter().map(|&k| vec![0.0; k]).collect();
        let mut tuple = vec![0usize; n];
        for &c in tensor.values() {
            let p = libm::exp(exponent(f, &tuple, c));
            for i in 0..n {
                marg[i][tuple[i]] += p;
            }
            advance(&mut tuple, &dims);
        }
        let mut worst: f64 = 0.0;
        for (mg, m) in marg.iter().zip(measures) {
            for (a, b) in mg.iter().zip(m.masses()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    };

    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let mut acc: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); dims[i]];
            let mut tuple = vec![0usize; n];
            for &c in tensor.values() {
                let e = exponent(&f, &tuple, c) - f[i][tuple[i]] / eps;
                log_sum_exp(&mut acc[tuple[i]], e);
                advance(&mut tuple, &dims);
            }
            // marginal_i(j) = exp(f_i(j)/eps) * S_j must equal mu_i(j) = exp(log_mu)
            for j in 0..dims[i] {
                let (mx, s) = acc[j];
                let log_s = mx + libm::log(s);
                f[i][j] = eps * (log_mu[i][j] - log_s);
            }
        }
        err = marginal_error(&f);
        if err <= tol {
            break;
        }
    }
    if !(err <= tol) {
        return Err(Error::NonConvergence {
            what: "entropic scaling",
            iterations,
            residual: err,
        });
    }
    let mut atoms = Vec::new();
    let mut tuple = vec![0usize; n];
    for &c in tensor.values() {
        let p = libm::exp(exponent(&f, &tuple, c));
        if p > 0.0 {
            atoms.push(PlanAtom {
                index: tuple.clone(),
                mass: p,
            });
        }
        advance(&mut tuple, &dims);
    }
    let mut plan = TransportPlan::new(atoms, tensor)?;
    plan.vertex = false;
    let masses: Vec<&[f64]> = measures.iter().map(|m| m.masses()).collect();
    plan.check_marginals(&masses, tol + 1e-14)?;
    Ok(EntropicSolution {
        plan,
        potentials: Potentials::new(f, &masses),
        iterations,
        marginal_error: err,
    })
}
