use forge::constraints::LinearConstraintSet;
use forge::graph::Graph;
use forge::spectral::{alpha, fiedler, grad_alpha_p, grad_alpha_s};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        proptest::collection::vec(any::<bool>(), pairs).prop_map(move |mask| {
            let kn = Graph::complete(n).unwrap();
            Graph::new(n, (0..pairs).filter(|&l| mask[l]).map(|l| kn.edge(l))).unwrap()
        })
    })
}

fn weighted(max_n: usize) -> impl Strategy<Value = (Graph, Vec<f64>)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let m = g.m();
        (Just(g), proptest::collection::vec(0.0..3.0f64, m))
    })
}

/// Connected graph with s ∈ [0,1]^m and p ∈ (0,1)^m, two of each.
fn game_point() -> impl Strategy<Value = (Graph, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (4usize..=7, any::<u64>()).prop_flat_map(|(n, seed)| {
        let g = forge::experiment::gen_random_graph(n, n + 2, seed).unwrap();
        let m = g.m();
        (
            Just(g),
            proptest::collection::vec(0.0..1.0f64, m),
            proptest::collection::vec(0.0..1.0f64, m),
            proptest::collection::vec(0.05..0.95f64, m),
            proptest::collection::vec(0.05..0.95f64, m),
        )
    })
}

fn dot(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b.iter().zip(c)).map(|(g, (x2, x1))| g * (x2 - x1)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn laplacian_is_symmetric_psd_with_zero_row_sums((g, w) in weighted(9)) {
        let lap = g.laplacian(&w).unwrap();
        prop_assert!((&lap - lap.transpose()).amax() == 0.0);
        for r in 0..g.n() {
            prop_assert!(lap.row(r).sum().abs() < 1e-12);
        }
        prop_assert!(lap.symmetric_eigenvalues().min() >= -1e-9);
    }

    #[test]
    fn fiedler_matches_dense_eigensolve((g, w) in weighted(10)) {
        let lap = g.laplacian(&w).unwrap();
        let mut ev: Vec<f64> = lap.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let res = fiedler(&lap).unwrap();
        prop_assert!((res.lambda2 - ev[1]).abs() < 1e-8);
        let v = DVector::from_vec(res.vector.clone());
        prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        prop_assert!(v.sum().abs() < 1e-8 || res.is_degenerate());
        prop_assert!((&lap * &v - &v * res.lambda2).norm() < 1e-7);
    }

    #[test]
    fn first_order_concavity((g, s1, s2, p1, p2) in game_point()) {
        let gs = grad_alpha_s(&g, &s1, &p1).unwrap();
        prop_assume!(!gs.degenerate);
        let a1 = alpha(&g, &s1, &p1).unwrap();
        prop_assert!(alpha(&g, &s2, &p1).unwrap() <= a1 + dot(&gs.values, &s2, &s1) + 1e-7);
        let gp = grad_alpha_p(&g, &s1, &p1).unwrap();
        prop_assert!(alpha(&g, &s1, &p2).unwrap() <= a1 + dot(&gp.values, &p2, &p1) + 1e-7);
    }

    #[test]
    fn gradient_signs((g, s, _s2, p, _p2) in game_point()) {
        prop_assert!(grad_alpha_s(&g, &s, &p).unwrap().values.iter().all(|&x| x >= 0.0));
        prop_assert!(grad_alpha_p(&g, &s, &p).unwrap().values.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn enumerated_points_are_members(m in 1usize..=6, lo in 0.0..0.5f64, width in 0.1..0.5f64, slack in 0.0..1.0f64) {
        let hi = lo + width;
        let budget = m as f64 * lo + slack * m as f64 * width;
        let cs = LinearConstraintSet::uniform_box(m, lo, hi).unwrap().with_budget(budget);
        let verts = cs.enumerate_vertices().unwrap();
        for v in &verts.vertices {
            prop_assert!(cs.contains(v).unwrap());
        }
        for a in &verts.vertices {
            for b in &verts.vertices {
                let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
                prop_assert!(cs.contains(&mid).unwrap());
            }
        }
        let binary = LinearConstraintSet::unit_box(m).with_budget(budget.floor());
        for z in binary.enumerate_binary().unwrap() {
            prop_assert!(binary.contains_binary(&z).unwrap());
        }
    }

    #[test]
    fn vertices_match_active_set_enumeration(m in 1usize..=3, lo in 0.0..0.5f64, width in 0.1..0.5f64, slack in 0.0..1.0f64) {
        let hi = lo + width;
        let budget = m as f64 * lo + slack * m as f64 * width;
        let cs = LinearConstraintSet::uniform_box(m, lo, hi).unwrap().with_budget(budget);
        let ours = cs.enumerate_vertices().unwrap().vertices;
        let oracle = active_set_vertices(m, lo, hi, budget);
        prop_assert_eq!(ours.len(), oracle.len());
        for v in &oracle {
            prop_assert!(ours.iter().any(|w| w.iter().zip(v).all(|(x, y)| (x - y).abs() < 1e-9)), "missing {:?}", v);
        }
    }
}

/// Every basic feasible point of {lo ≤ z ≤ hi, Σz ≤ budget}: solve each
/// m-subset of the 2m + 1 constraints at equality and keep feasible,
/// distinct solutions.
fn active_set_vertices(m: usize, lo: f64, hi: f64, budget: f64) -> Vec<Vec<f64>> {
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for l in 0..m {
        let mut e = vec![0.0; m];
        e[l] = 1.0;
        rows.push((e.clone(), lo));
        rows.push((e, hi));
    }
    rows.push((vec![1.0; m], budget));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << rows.len()) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let chosen: Vec<&(Vec<f64>, f64)> = (0..rows.len()).filter(|&i| mask >> i & 1 == 1).map(|i| &rows[i]).collect();
        let a = DMatrix::from_fn(m, m, |r, c| chosen[r].0[c]);
        let b = DVector::from_iterator(m, chosen.iter().map(|r| r.1));
        let Some(z) = a.lu().solve(&b) else { continue };
        let z: Vec<f64> = z.iter().copied().collect();
        let feasible = z.iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9) && z.iter().sum::<f64>() <= budget + 1e-9;
        if feasible && !out.iter().any(|v| v.iter().zip(&z).all(|(x, y)| (x - y).abs() < 1e-9)) {
            out.push(z);
        }
    }
    out
}

#[test]
fn connectivity_equivalence_on_small_graphs() {
    for n in 2..=6 {
        let kn = Graph::complete(n).unwrap();
        let m = kn.m().min(10);
        let base = Graph::new(n, (0..m).map(|l| kn.edge(l))).unwrap();
        for mask in 0u32..(1 << m) {
            let x: Vec<u8> = (0..m).map(|l| (mask >> l & 1) as u8).collect();
            let keep: Vec<bool> = x.iter().map(|&b| b == 1).collect();
            let l2 = fiedler(&base.indicator_laplacian(&x).unwrap()).unwrap().lambda2;
            assert_eq!(l2 > 1e-9, base.is_connected_with(&keep), "n={n} x={x:?}");
        }
    }
}
