//! Undirected simple graphs over a canonical, lexicographically ordered edge list.
//!
//! Every length-m vector in the crate (edge indicators, protection strategies,
//! attack probabilities, weights) is indexed by the position of an edge in
//! [`Graph::edges`]. Node indices are 0-based in memory and 1-based on disk.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from 0-based pairs. Pairs may be given in any order and
    /// orientation; they are normalized to `i < j` and sorted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("graph needs at least 2 nodes, got {n}")));
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Domain(format!("self-loop at node {}", a + 1)));
            }
            if a >= n || b >= n {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!(
                "duplicate edge ({}, {})",
                w[0].0 + 1,
                w[0].1 + 1
            )));
        }
        Ok(Self { n, edges: list })
    }

    /// The complete graph K_n; its edge order is the candidate order used by
    /// topology design.
    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, l: usize) -> (usize, usize) {
        self.edges[l]
    }

    /// Index of the edge {i, j} (0-based nodes), if present.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    /// Edge indices incident to node `i`.
    pub fn incident(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == i || b == i)
            .map(|(l, _)| l)
            .collect()
    }

    /// Subgraph on the same node set keeping edges where `keep[l]` is true.
    pub fn subgraph(&self, keep: &[bool]) -> Result<Graph> {
        check_len(self.m(), keep.len())?;
        Ok(Graph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&e, _)| e)
                .collect(),
        })
    }

    /// Union-find connectivity of the spanning subgraph selected by `keep`.
    pub fn is_connected_with(&self, keep: &[bool]) -> bool {
        let mut dsu = DisjointSets::new(self.n);
        let mut components = self.n;
        for (&(i, j), &k) in self.edges.iter().zip(keep) {
            if k && dsu.union(i, j) {
                components -= 1;
            }
        }
        components == 1
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_with(&vec![true; self.m()])
    }

    /// n×m oriented incidence matrix: column l has -1 at row i and +1 at row j
    /// for edge l = (i, j), i < j.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n, self.m());
        for (l, &(i, j)) in self.edges.iter().enumerate() {
            e[(i, l)] = -1.0;
            e[(j, l)] = 1.0;
        }
        e
    }

    /// Weighted Laplacian E diag(w) Eᵀ, assembled edge by edge.
    pub fn laplacian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.m(), w.len())?;
        let mut lap = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &wl) in self.edges.iter().zip(w) {
            lap[(i, i)] += wl;
            lap[(j, j)] += wl;
            lap[(i, j)] -= wl;
            lap[(j, i)] -= wl;
        }
        Ok(lap)
    }

    /// Laplacian of the subgraph selected by a 0/1 indicator.
    pub fn indicator_laplacian(&self, x: &[u8]) -> Result<DMatrix<f64>> {
        let w: Vec<f64> = x.iter().map(|&b| f64::from(b)).collect();
        self.laplacian(&w)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        file.into_graph()
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }
}

/// On-disk graph: `{"n": int, "edges": [[i, j], ...]}` with 1-based `i < j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    /// Strict reader: rejects zero indices, reversed pairs, self-loops and
    /// duplicates rather than normalizing them.
    pub fn into_graph(self) -> Result<Graph> {
        let mut pairs = Vec::with_capacity(self.edges.len());
        for [i, j] in self.edges {
            if i == 0 || j == 0 {
                return Err(Error::Domain("graph file node indices are 1-based".into()));
            }
            if i == j {
                return Err(Error::Domain(format!("self-loop at node {i}")));
            }
            if i > j {
                return Err(Error::Domain(format!("edge [{i}, {j}] must satisfy i < j")));
            }
            pairs.push((i - 1, j - 1));
        }
        Graph::new(self.n, pairs)
    }
}

/// Effective edge weights (s_l - 1) p_l + 1 of the expected Laplacian under
/// protection `s` and independent failure probabilities `p`.
pub fn expected_weights(s: &[u8], p: &[f64]) -> Result<Vec<f64>> {
    check_len(s.len(), p.len())?;
    for (l, (&sl, &pl)) in s.iter().zip(p).enumerate() {
        if sl > 1 {
            return Err(Error::Domain(format!("s[{}] = {sl} is not binary", l + 1)));
        }
        if !(0.0..=1.0).contains(&pl) {
            return Err(Error::Domain(format!("p[{}] = {pl} outside [0, 1]", l + 1)));
        }
    }
    Ok(s
        .iter()
        .zip(p)
        .map(|(&sl, &pl)| effective_weight(f64::from(sl), pl))
        .collect())
}

/// Weight formula for a (possibly relaxed) protection level.
#[inline]
pub fn effective_weight(s: f64, p: f64) -> f64 {
    (s - 1.0) * p + 1.0
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two sets were distinct.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::complete(3).unwrap()
    }

    #[test]
    fn incidence_single_edge() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let e = g.incidence_matrix();
        assert_eq!(e.shape(), (2, 1));
        assert_eq!(e[(0, 0)], -1.0);
        assert_eq!(e[(1, 0)], 1.0);
    }

    #[test]
    fn incidence_triangle() {
        let e = triangle().incidence_matrix();
        let expected = DMatrix::from_row_slice(3, 3, &[-1., -1., 0., 1., 0., -1., 0., 1., 1.]);
        assert_eq!(e, expected);
    }

    #[test]
    fn incidence_empty_edge_set() {
        let g = Graph::new(4, []).unwrap();
        assert_eq!(g.incidence_matrix().shape(), (4, 0));
    }

    #[test]
    fn laplacian_matches_incidence_product() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 4), (0, 3), (3, 4), (1, 4)]).unwrap();
        let w = [0.5, 1.0, 0.25, 2.0, 0.0, 1.5];
        let e = g.incidence_matrix();
        let dense = &e * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&w)) * e.transpose();
        assert!((g.laplacian(&w).unwrap() - dense).amax() < 1e-15);
    }

    #[test]
    fn laplacian_triangle_and_path() {
        let l = triangle().laplacian(&[1.0; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
        let path = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let l = path.laplacian(&[1.0, 1.0]).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]));
        assert_eq!(triangle().laplacian(&[0.0; 3]).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_length_mismatch() {
        assert!(matches!(
            triangle().laplacian(&[1.0, 1.0]),
            Err(Error::Dimension { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn expected_weight_cases() {
        assert_eq!(expected_weights(&[1, 1], &[0.3, 0.9]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(expected_weights(&[0, 0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(expected_weights(&[0, 0], &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(expected_weights(&[0], &[1.5]), Err(Error::Domain(_))));
        assert!(matches!(expected_weights(&[0], &[-0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn edge_order_is_lexicographic() {
        let g = Graph::new(4, [(2, 3), (0, 2), (1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (2, 3)]);
        assert_eq!(g.edge_index(3, 2), Some(2));
        assert_eq!(g.edge_index(1, 2), None);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(1, []).is_err());
    }

    #[test]
    fn json_reader_is_strict() {
        let g = Graph::from_json_str(r#"{"n": 3, "edges": [[1, 2], [2, 3]]}"#).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(Graph::from_json_str(r#"{"n": 3, "edges": [[1, 2], [1, 2]]}"#).is_err());
        assert!(Graph::from_json_str(r#"{"n": 3, "edges": [[2, 2]]}"#).is_err());
        assert!(Graph::from_json_str(r#"{"n": 3, "edges": [[2, 1]]}"#).is_err());
        assert!(Graph::from_json_str(r#"{"n": 3, "edges": [[0, 1]]}"#).is_err());
        let back = serde_json::to_string(&g.to_file()).unwrap();
        assert_eq!(back, r#"{"n":3,"edges":[[1,2],[2,3]]}"#);
    }

    #[test]
    fn connectivity() {
        let g = Graph::complete(4).unwrap();
        assert!(g.is_connected());
        assert!(!g.is_connected_with(&[true, false, false, false, false, true]));
        assert!(g.is_connected_with(&[true, true, true, false, false, false]));
    }
}
