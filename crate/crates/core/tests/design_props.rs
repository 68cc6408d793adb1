use forge::constraints::LinearConstraintSet;
use forge::design::{
    brute_force_design, convex_hull_relax_with, greedy_fiedler, sdp_relax_with, DesignProblem, DesignResult,
};
use forge::experiment::gen_random_graph;
use forge::graph::Graph;
use forge::relaxation::{extract_from_lift, lift_point, x_to_y, y_to_x, RelaxationKind, WeightedRelaxation, RANK_TOL};
use forge::sdp::{gram_factor, SolverSettings};
use proptest::prelude::*;

/// Small design instance on K_n, optionally with a forbidden edge and a
/// degree cap.
fn instance() -> impl Strategy<Value = DesignProblem> {
    (4usize..=6, any::<u64>(), 1usize..=3, any::<bool>()).prop_map(|(n, seed, k, constrained)| {
        let max = n * (n - 1) / 2;
        let m0 = n - 1 + (seed as usize % (max - n - 1));
        let g0 = gen_random_graph(n, m0, seed).unwrap();
        let kn = Graph::complete(n).unwrap();
        let idx: Vec<usize> = g0.edges().iter().map(|&(i, j)| kn.edge_index(i, j).unwrap()).collect();
        let mut x = LinearConstraintSet::unit_box(kn.m());
        if constrained {
            let absent = (0..kn.m()).find(|l| !idx.contains(l)).unwrap();
            x = x.with_forbidden([absent]).unwrap();
            let deg0 = g0.edges().iter().filter(|&&(i, _)| i == 0).count();
            let caps = [(0usize, deg0 as f64 + 1.0)].into_iter().collect();
            x = x.with_degree_caps(&kn, &caps).unwrap();
        }
        DesignProblem::new(n, &idx, k, x).unwrap()
    })
}

fn check_result(dp: &DesignProblem, r: &DesignResult) -> Result<(), TestCaseError> {
    let start = dp.lambda2_of(&dp.initial_indicator()).unwrap();
    let mut prev = start;
    for &v in &r.lambda2_trace {
        prop_assert!(v >= prev - 1e-9, "trace decreased: {:?}", r.lambda2_trace);
        prev = v;
    }
    let x = r.final_indicator(dp);
    prop_assert!(dp.x_set().contains_binary(&x).unwrap());
    prop_assert!(r.added_edges.len() <= dp.k());
    prop_assert!(x.iter().map(|&b| b as usize).sum::<usize>() <= dp.budget());
    prop_assert!((dp.lambda2_of(&x).unwrap() - r.final_lambda2).abs() < 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn strategies_are_monotone_feasible_and_dominated(dp in instance()) {
        let settings = SolverSettings::default();
        let oracle = brute_force_design(&dp).unwrap();
        check_result(&dp, &oracle)?;
        let greedy = greedy_fiedler(&dp).unwrap();
        let hull = convex_hull_relax_with(&dp, &settings).unwrap();
        let sdp = sdp_relax_with(&dp, &settings).unwrap();
        for r in [&greedy, &hull.result, &sdp.result] {
            check_result(&dp, r)?;
            prop_assert!(r.final_lambda2 <= oracle.final_lambda2 + 1e-9);
        }
        // sandwich: the first relaxed bound covers the optimum, and every
        // later bound covers the design finally reached from it
        prop_assert!(sdp.relaxed_values[0] >= oracle.final_lambda2 - 1e-6);
        for &bound in &sdp.relaxed_values {
            prop_assert!(bound >= sdp.result.final_lambda2 - 1e-6);
        }
        for (&primal, &dual) in sdp.relaxed_values.iter().zip(&sdp.dual_bounds) {
            prop_assert!(dual >= primal - 1e-6);
        }
    }

    #[test]
    fn binary_lift_extracts_exactly(bits in proptest::collection::vec(0u8..=1, 1..12)) {
        let x: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        let y = x_to_y(&x);
        prop_assert_eq!(y_to_x(&y), x.clone());
        let lift = lift_point(&y);
        let u = gram_factor(&lift, RANK_TOL).unwrap();
        prop_assert_eq!(u.nrows(), 1);
        let got = extract_from_lift(&lift, RANK_TOL).unwrap();
        prop_assert!(got.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12), "{:?} vs {:?}", got, y);
    }
}

#[test]
fn gram_factor_reproduces_solver_lift() {
    let settings = SolverSettings::default();
    for seed in 0..6 {
        let g0 = gen_random_graph(6, 7, seed).unwrap();
        let dp = DesignProblem::free(6, g0.edges(), 2).unwrap();
        let mut set = dp.x_set().clone();
        set = set.with_budget(dp.budget() as f64);
        let out = WeightedRelaxation::indicator(dp.graph(), &set, None)
            .solve(RelaxationKind::Lifted, &settings, 0)
            .unwrap();
        let lift = out.lift.expect("lifted variant returns Ỹ");
        let u = gram_factor(&lift, 1e-12).unwrap();
        let err = (u.transpose() * &u - &lift).norm();
        assert!(err < 1e-6, "seed {seed}: ‖UᵀU − Ỹ‖ = {err:e}");
    }
}

#[test]
fn relaxation_is_tight_when_every_edge_fits() {
    // budget covers every absent edge: the optimum is the complete graph
    let settings = SolverSettings::default();
    for seed in 0..5 {
        let g0 = gen_random_graph(5, 6, seed).unwrap();
        let dp = DesignProblem::free(5, g0.edges(), 4).unwrap();
        let oracle = brute_force_design(&dp).unwrap();
        assert!((oracle.final_lambda2 - 5.0).abs() < 1e-9);
        let run = sdp_relax_with(&dp, &settings).unwrap();
        assert!((run.relaxed_values[0] - oracle.final_lambda2).abs() < 1e-5);
        assert!((run.result.final_lambda2 - 5.0).abs() < 1e-9);
    }
}

#[test]
fn zero_budget_leaves_every_strategy_at_the_start() {
    let g0 = gen_random_graph(7, 9, 3).unwrap();
    let dp = DesignProblem::free(7, g0.edges(), 0).unwrap();
    let start = dp.lambda2_of(&dp.initial_indicator()).unwrap();
    let settings = SolverSettings::default();
    for r in [
        greedy_fiedler(&dp).unwrap(),
        convex_hull_relax_with(&dp, &settings).unwrap().result,
        sdp_relax_with(&dp, &settings).unwrap().result,
        brute_force_design(&dp).unwrap(),
    ] {
        assert!(r.added_edges.is_empty());
        assert_eq!(r.final_lambda2, start);
    }
}
