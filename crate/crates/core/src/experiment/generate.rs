use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Connected random graph: a uniform spanning tree decoded from a random
/// Prüfer sequence, plus distinct extra edges sampled uniformly up to
/// `m_target`.
pub fn gen_random_graph(n: usize, m_target: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    let max = n * (n - 1) / 2;
    if m_target + 1 < n || m_target > max {
        return Err(Error::Domain(format!("m_target = {m_target} outside [{}, {max}]", n - 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prufer: Vec<usize> = (0..n.saturating_sub(2)).map(|_| rng.gen_range(0..n)).collect();
    let mut tree = prufer_decode(n, &prufer);
    tree.sort_unstable();

    let rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| tree.binary_search(e).is_err())
        .collect();
    let extra = m_target - (n - 1);
    let mut picked: Vec<usize> = sample(&mut rng, rest.len(), extra).into_vec();
    picked.sort_unstable();
    tree.extend(picked.into_iter().map(|i| rest[i]));
    Graph::new(n, tree)
}

fn prufer_decode(n: usize, seq: &[usize]) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    seq.iter().for_each(|&v| degree[v] += 1);
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).expect("a leaf exists");
        edges.push((leaf.min(v), leaf.max(v)));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let last: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((last[0], last[1]));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_is_the_only_option() {
        let g = gen_random_graph(3, 3, 7).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn fourteen_node_instance_is_connected() {
        for seed in 0..20 {
            let g = gen_random_graph(14, 28, seed).unwrap();
            assert_eq!(g.m(), 28);
            assert!(g.is_connected());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_random_graph(10, 20, 3).unwrap(), gen_random_graph(10, 20, 3).unwrap());
        assert_ne!(gen_random_graph(10, 20, 3).unwrap(), gen_random_graph(10, 20, 4).unwrap());
    }

    #[test]
    fn trees_and_bounds() {
        let g = gen_random_graph(8, 7, 1).unwrap();
        assert!(g.is_connected());
        assert!(gen_random_graph(5, 3, 0).is_err());
        assert!(gen_random_graph(5, 11, 0).is_err());
        assert!(gen_random_graph(1, 0, 0).is_err());
    }

    #[test]
    fn prufer_known_tree() {
        // sequence (3, 3, 3) on 5 nodes is the star centered at node 4 (0-based 3)
        let mut e = prufer_decode(5, &[3, 3, 3]);
        e.sort_unstable();
        assert_eq!(e, vec![(0, 3), (1, 3), (2, 3), (3, 4)]);
    }
}
