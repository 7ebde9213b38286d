//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver paths it is used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Central difference of a scalar function along coordinate `k`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], k: usize, step: f64) -> f64 {
    let mut p = x.to_vec();
    p[k] = x[k] + step;
    let fp = f(&p);
    p[k] = x[k] - step;
    let fm = f(&p);
    (fp - fm) / (2.0 * step)
}

/// Central-difference Jacobian of a vector function: column `k` is the
/// derivative along coordinate `k`.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut p = x.to_vec();
        p[k] = x[k] + step;
        let fp = f(&p);
        p[k] = x[k] - step;
        let fm = f(&p);
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect());
    }
    cols
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / (1.0 + want.abs())
}

/// Grid scan followed by golden-section refinement of a unimodal function on `[lo, hi]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let n = 2000;
    let mut best = lo;
    let mut fbest = f(lo);
    for k in 0..=n {
        let z = lo + (hi - lo) * k as f64 / n as f64;
        let v = f(z);
        if v < fbest {
            fbest = v;
            best = z;
        }
    }
    let h = (hi - lo) / n as f64;
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let z = 0.5 * (a + b);
    (z, f(z))
}

/// Minimum over all permutations `s` of `sum_k cost[k][s(k)] / n`.
pub fn best_permutation(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    fn rec(k: usize, perm: &mut Vec<usize>, cost: &[Vec<f64>], best: &mut (f64, Vec<usize>)) {
        let n = perm.len();
        if k == n {
            let v: f64 = (0..n).map(|i| cost[i][perm[i]]).sum::<f64>() / n as f64;
            if v < best.0 {
                *best = (v, perm.clone());
            }
            return;
        }
        for j in k..n {
            perm.swap(k, j);
            rec(k + 1, perm, cost, best);
            perm.swap(k, j);
        }
    }
    rec(0, &mut perm, cost, &mut best);
    best
}

/// Dense two-phase tableau simplex with Bland's rule for
/// `min c.x  s.t.  A x = b, x >= 0` (with `b >= 0`). Returns the optimal value.
pub fn tableau_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    // columns: n structural, m artificial, rhs
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for r in 0..m {
        t[r][..n].copy_from_slice(&a[r]);
        t[r][n + r] = 1.0;
        t[r][width - 1] = b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: usize| -> bool {
        // objective row = reduced costs
        let mut z = vec![0.0; width];
        z[..obj.len()].copy_from_slice(obj);
        for r in 0..m {
            let cb = obj.get(basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for col in 0..width {
                    z[col] -= cb * t[r][col];
                }
            }
        }
        t[m] = z;
        for _ in 0..100_000 {
            let Some(q) = (0..allowed).find(|&col| t[m][col] < -1e-11) else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if t[r][q] > 1e-11 {
                    let ratio = t[r][width - 1] / t[r][q];
                    leave = match leave {
                        Some((lr, lv)) if lv < ratio - 1e-13 || ((lv - ratio).abs() <= 1e-13 && basis[lr] < basis[r]) => Some((lr, lv)),
                        _ => Some((r, ratio)),
                    };
                }
            }
            let Some((p, _)) = leave else { return false };
            let piv = t[p][q];
            for col in 0..width {
                t[p][col] /= piv;
            }
            for r in 0..=m {
                if r != p {
                    let f = t[r][q];
                    if f != 0.0 {
                        for col in 0..width {
                            t[r][col] -= f * t[p][col];
                        }
                    }
                }
            }
            basis[p] = q;
        }
        false
    };
    // phase one: minimize the sum of artificials
    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    if !run(&mut t, &mut basis, &phase1, n + m) {
        return None;
    }
    if -t[m][width - 1] > 1e-9 {
        return None;
    }
    // phase two over structural columns only; artificials stuck in the basis sit at zero
    let mut obj = c.to_vec();
    obj.extend(std::iter::repeat_n(0.0, m));
    if !run(&mut t, &mut basis, &obj, n) {
        return None;
    }
    Some(-t[m][width - 1])
}

/// Builds the transportation constraints for `dims` and solves with [`tableau_lp`].
pub fn transport_oracle(dims: &[usize], costs: &[f64], masses: &[Vec<f64>]) -> Option<f64> {
    let total: usize = dims.iter().product();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, mu) in masses.iter().enumerate() {
        for (j, &m) in mu.iter().enumerate() {
            let mut row = vec![0.0; total];
            for (t, slot) in row.iter_mut().enumerate() {
                // decode lexicographic tuple coordinate i
                let stride: usize = dims[i + 1..].iter().product();
                if (t / stride) % dims[i] == j {
                    *slot = 1.0;
                }
            }
            a.push(row);
            b.push(m);
        }
    }
    tableau_lp(&a, &b, costs)
}

/// The 1-D monotone (sorted) coupling of two measures given as (point, mass)
/// lists, as a list of (x, y, mass) triples.
pub fn sorted_coupling(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64, f64)> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    b.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut out = Vec::new();
    loop {
        let m = ra.min(rb);
        if m > 1e-14 {
            out.push((a[i].0, b[j].0, m));
        }
        ra -= m;
        rb -= m;
        if ra <= 1e-14 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-14 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    out
}

/// Seeded problem with `sizes[i]` atoms per marginal in `[-2, 2]^d`; masses
/// are uniform or drawn from `[0.5, 1.5]` and normalized.
pub fn random_problem(
    seed: u64,
    cost: hbary_core::ConvexCost,
    sizes: &[usize],
    uniform: bool,
) -> hbary_core::Problem {
    let mut r = rng(seed);
    let d = cost.dim();
    let marginals = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let coords = random_vec(&mut r, n * d, -2.0, 2.0);
            let masses = if uniform {
                vec![1.0 / n as f64; n]
            } else {
                let raw = random_vec(&mut r, n, 0.5, 1.5);
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            };
            hbary_core::DiscreteMeasure::new(d, coords, masses, format!("mu{}", i + 1)).unwrap()
        })
        .collect();
    let w = hbary_core::Weights::new(random_vec(&mut r, sizes.len(), 0.5, 1.5)).unwrap();
    hbary_core::Problem::new(cost, w, marginals).unwrap()
}
