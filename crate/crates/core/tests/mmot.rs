mod common;

use common::{best_permutation, random_problem, sorted_coupling, transport_oracle};
use hbary_core::lp::{solve_transport_lp, LpOptions};
use hbary_core::tensor::DEFAULT_BUDGET;
use hbary_core::{
    assemble_cost_tensor, push_forward_barycenter, solve_mmot_entropic, solve_mmot_lp, ConvexCost,
    DiscreteMeasure, Problem, Weights,
};
use proptest::prelude::*;

fn cost_of(kind: usize, d: usize) -> ConvexCost {
    match kind % 5 {
        0 => ConvexCost::quadratic(d).unwrap(),
        1 => ConvexCost::anisotropic_from_row_major(
            d,
            &(0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 + 0.5 * (k / (d + 1)) as f64 } else { 0.0 }).collect::<Vec<_>>(),
        )
        .unwrap(),
        2 => ConvexCost::pseudo_huber(d, 0.7).unwrap(),
        3 => ConvexCost::smoothed_power(d, 1.5, 0.1).unwrap(),
        _ => ConvexCost::log_cosh(d).unwrap(),
    }
}

#[test]
fn lp_matches_dense_tableau_oracle() {
    let cases: &[&[usize]] = &[&[3, 4], &[5, 5], &[8, 6], &[3, 3, 3], &[4, 2, 5], &[6, 6, 6], &[2, 3, 2, 3]];
    let mut seed = 100;
    for sizes in cases {
        for kind in 0..5 {
            for uniform in [true, false] {
                seed += 1;
                let p = random_problem(seed, cost_of(kind, 2), sizes, uniform);
                let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
                let (plan, pot) = solve_mmot_lp(&t, &p.marginals).unwrap();
                let masses: Vec<Vec<f64>> = p.marginals.iter().map(|m| m.masses().to_vec()).collect();
                let want = transport_oracle(sizes, t.values(), &masses).unwrap();
                assert!(
                    (plan.value - want).abs() <= 1e-9 * (1.0 + want.abs()),
                    "{sizes:?} kind {kind}: {} vs {want}",
                    plan.value
                );
                assert!((pot.dual_value - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn lp_matches_oracle_on_a_4096_entry_tensor() {
    let p = random_problem(7, cost_of(2, 1), &[16, 16, 16], false);
    let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
    let (plan, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
    let masses: Vec<Vec<f64>> = p.marginals.iter().map(|m| m.masses().to_vec()).collect();
    let want = transport_oracle(&[16, 16, 16], t.values(), &masses).unwrap();
    assert!((plan.value - want).abs() <= 1e-9 * (1.0 + want.abs()));
}

#[test]
fn two_marginal_uniform_is_an_assignment() {
    for kind in 0..5 {
        for s in 0..10u64 {
            let n = 2 + (s as usize % 5);
            let p = random_problem(200 + s + 17 * kind as u64, cost_of(kind, 2), &[n, n], true);
            let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
            let (plan, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
            let cost: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| t.at(&[a, b])).collect()).collect();
            let (want, _) = best_permutation(&cost);
            assert!((plan.value - want).abs() <= 1e-10, "{} vs {want}", plan.value);
        }
    }
}

#[test]
fn vertex_support_and_duality() {
    for s in 0..30u64 {
        let sizes: Vec<usize> = match s % 3 {
            0 => vec![5, 7],
            1 => vec![4, 5, 6],
            _ => vec![3, 3, 4, 3],
        };
        let p = random_problem(300 + s, cost_of(s as usize, 1 + (s as usize % 3)), &sizes, s % 2 == 0);
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        let (plan, pot) = solve_mmot_lp(&t, &p.marginals).unwrap();
        let bound: usize = sizes.iter().sum::<usize>() - sizes.len() + 1;
        assert!(plan.support_size() <= bound);
        assert!(plan.vertex && plan.marginals_checked);
        assert!((plan.value - pot.dual_value).abs() <= 1e-8 * (1.0 + plan.value.abs()));
        assert!(pot.feasibility_margin(&t) >= -1e-9);
        assert!(pot.slackness_max(&plan, &t) <= 1e-8);
        assert!(plan.marginal_error(&p.marginal_masses()) <= 1e-9);
        assert!(plan.atoms.iter().all(|a| a.mass > 0.0));
    }
}

#[test]
fn conjugation_of_optimal_duals_is_idempotent() {
    for s in 0..10u64 {
        let p = random_problem(400 + s, cost_of(s as usize, 2), &[4, 5, 3], false);
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        let (plan, pot) = solve_mmot_lp(&t, &p.marginals).unwrap();
        let masses = p.marginal_masses();
        let (conj, passes) = pot.c_conjugate(&t, &masses, 1e-12, 10);
        assert_eq!(passes, 1);
        for (a, b) in conj.phi.iter().flatten().zip(pot.phi.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!((conj.dual_value - plan.value).abs() <= 1e-8 * (1.0 + plan.value.abs()));
    }
}

#[test]
fn permuting_atoms_leaves_the_value_unchanged() {
    let p = random_problem(500, cost_of(2, 2), &[5, 4, 6], false);
    let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
    let (base, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
    let perms: [&[usize]; 3] = [&[4, 2, 0, 1, 3], &[3, 0, 2, 1], &[5, 4, 3, 2, 1, 0]];
    let marginals: Vec<DiscreteMeasure> = p.marginals.iter().zip(perms).map(|(m, q)| m.permuted(q).unwrap()).collect();
    let q = Problem::new(p.cost.clone(), p.weights.clone(), marginals).unwrap();
    let tq = assemble_cost_tensor(&q, DEFAULT_BUDGET).unwrap();
    let (other, _) = solve_mmot_lp(&tq, &q.marginals).unwrap();
    assert!((base.value - other.value).abs() <= 1e-10);

    // swapping the order of the marginals together with their weights
    let rev: Vec<DiscreteMeasure> = p.marginals.iter().rev().cloned().collect();
    let w = Weights::new(p.weights.as_slice().iter().rev().copied().collect()).unwrap();
    let r = Problem::new(p.cost.clone(), w, rev).unwrap();
    let tr = assemble_cost_tensor(&r, DEFAULT_BUDGET).unwrap();
    let (third, _) = solve_mmot_lp(&tr, &r.marginals).unwrap();
    assert!((base.value - third.value).abs() <= 1e-10);
}

#[test]
fn dirac_marginals_give_the_single_tuple() {
    let h = ConvexCost::log_cosh(2).unwrap();
    let a = DiscreteMeasure::dirac(&[0.0, 1.0], "a").unwrap();
    let b = DiscreteMeasure::dirac(&[2.0, -1.0], "b").unwrap();
    let p = Problem::new(h.clone(), Weights::uniform(2).unwrap(), vec![a, b]).unwrap();
    let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
    let (plan, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
    assert_eq!(plan.support_size(), 1);
    // symmetric cost with two equal weights: barycenter is the midpoint
    // each point sits at offset (+-1, -+1) from it
    let want = 2.0 * (1.0f64).cosh().ln();
    assert!((plan.value - want).abs() <= 1e-12);
}

#[test]
fn entropic_plans_approach_the_lp_value() {
    let p = random_problem(600, cost_of(0, 1), &[5, 4, 4], false);
    let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
    let (lp, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
    let mut gaps = Vec::new();
    for eps in [0.5, 0.1, 0.02] {
        let sol = solve_mmot_entropic(&t, &p.marginals, eps, 20_000, 1e-10).unwrap();
        assert!(!sol.plan.vertex);
        assert!(sol.plan.marginal_error(&p.marginal_masses()) <= 1e-10 + 1e-14);
        assert!(sol.plan.value >= lp.value - 1e-12);
        gaps.push(sol.plan.value - lp.value);
    }
    assert!(gaps.windows(2).all(|g| g[1] <= g[0]), "{gaps:?}");
    assert!(gaps[2] <= 0.05 * (1.0 + lp.value));
}

#[test]
fn one_dimensional_quadratic_barycenter_is_the_displacement_interpolant() {
    // two 1-D marginals under |z|^2: the barycenter is the push-forward of the
    // sorted coupling under (x, y) -> w1 x + w2 y
    for s in 0..10u64 {
        let p = random_problem(700 + s, ConvexCost::quadratic(1).unwrap(), &[6, 5], false);
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        let (plan, _) = solve_mmot_lp(&t, &p.marginals).unwrap();
        let nu = push_forward_barycenter(&plan, &t, 1e-12).unwrap();
        let pts = |m: &DiscreteMeasure| -> Vec<(f64, f64)> { m.points().map(|q| q[0]).zip(m.masses().iter().copied()).collect() };
        let (w1, w2) = (p.weights.get(0), p.weights.get(1));
        let mut want: Vec<(f64, f64)> = sorted_coupling(&pts(&p.marginals[0]), &pts(&p.marginals[1]))
            .into_iter()
            .map(|(x, y, m)| (w1 * x + w2 * y, m))
            .collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut got = pts(&nu);
        got.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g.0 - w.0).abs() <= 1e-9 && (g.1 - w.1).abs() <= 1e-9, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn rejects_mismatched_marginals() {
    let p = random_problem(800, cost_of(0, 1), &[3, 3], true);
    let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
    let r = solve_transport_lp(&t, &[&[0.5, 0.5, 0.0], &[0.2, 0.2, 0.2]], &LpOptions::default());
    assert!(r.is_err());
    assert!(solve_mmot_lp(&t, &p.marginals[..1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn lp_agrees_with_oracle(seed in 0u64..100_000, n1 in 1usize..5, n2 in 1usize..5, n3 in 1usize..4, kind in 0usize..5) {
        let sizes = [n1, n2, n3];
        let p = random_problem(seed, cost_of(kind, 1), &sizes, false);
        let t = assemble_cost_tensor(&p, DEFAULT_BUDGET).unwrap();
        let (plan, pot) = solve_mmot_lp(&t, &p.marginals).unwrap();
        let masses: Vec<Vec<f64>> = p.marginals.iter().map(|m| m.masses().to_vec()).collect();
        let want = transport_oracle(&sizes, t.values(), &masses).unwrap();
        prop_assert!((plan.value - want).abs() <= 1e-9 * (1.0 + want.abs()));
        prop_assert!(plan.support_size() <= n1 + n2 + n3 - 2);
        prop_assert!(pot.feasibility_margin(&t) >= -1e-9);
    }
}
