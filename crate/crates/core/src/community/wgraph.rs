//! Working representation for the detection algorithms: weighted undirected
//! adjacency with self-loops, which appear once nodes are aggregated.

use crate::graph::FeatureGraph;

#[derive(Debug, Clone)]
pub(crate) struct WGraph {
    /// Neighbours other than the node itself.
    pub adj: Vec<Vec<(usize, f64)>>,
    /// `A_ii`: twice the weight of edges collapsed into the node.
    pub self_loop: Vec<f64>,
    pub degree: Vec<f64>,
    /// Sum of degrees, `2m`.
    pub m2: f64,
}

impl WGraph {
    pub fn from_graph(graph: &FeatureGraph, weighted: bool) -> Self {
        let n = graph.n_nodes();
        let mut adj = vec![Vec::new(); n];
        for (i, j, w) in graph.indexed_edges() {
            let w = if weighted { w } else { 1.0 };
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        Self::from_parts(adj, vec![0.0; n])
    }

    fn from_parts(adj: Vec<Vec<(usize, f64)>>, self_loop: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(nbrs, &s)| nbrs.iter().fold(s, |acc, &(_, w)| acc + w))
            .collect();
        let m2 = degree.iter().sum();
        Self {
            adj,
            self_loop,
            degree,
            m2,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    /// Collapses every community of `comm` (dense ids `0..n_comm`) into one
    /// node.
    pub fn aggregate(&self, comm: &[usize], n_comm: usize) -> Self {
        let mut self_loop = vec![0.0; n_comm];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_comm];
        for (i, nbrs) in self.adj.iter().enumerate() {
            let ci = comm[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in nbrs {
                let cj = comm[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    rows[ci].push((cj, w));
                }
            }
        }
        let adj = rows
            .into_iter()
            .map(|mut row| {
                row.sort_by_key(|&(c, _)| c);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (c, w) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += w,
                        _ => merged.push((c, w)),
                    }
                }
                merged
            })
            .collect();
        Self::from_parts(adj, self_loop)
    }

    /// Modularity of `comm` with resolution `gamma`; 0 for edgeless graphs.
    pub fn modularity(&self, comm: &[usize], gamma: f64) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
        let mut inside = vec![0.0; n_comm];
        let mut total = vec![0.0; n_comm];
        for (i, nbrs) in self.adj.iter().enumerate() {
            let c = comm[i];
            // same summation order as the degree, so a community holding
            // every neighbour of i gets exactly k_i
            let internal = nbrs.iter().fold(
                self.self_loop[i],
                |acc, &(j, w)| if comm[j] == c { acc + w } else { acc },
            );
            inside[c] += internal;
            total[c] += self.degree[i];
        }
        inside
            .iter()
            .zip(&total)
            .map(|(&a, &t)| {
                let frac = t / self.m2;
                a / self.m2 - gamma * frac * frac
            })
            .sum()
    }
}

/// Renumbers community ids to `0..n` in order of first appearance.
pub(crate) fn renumber(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len().max(comm.iter().max().map_or(0, |&c| c + 1))];
    let mut next = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    next
}

/// Splits every community into its connected components. Never lowers
/// modularity: no edge weight is lost and total degrees only shrink.
pub(crate) fn split_disconnected(g: &WGraph, comm: &mut [usize]) -> usize {
    let n = g.len();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if out[start] != usize::MAX {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(j, _) in &g.adj[v] {
                if out[j] == usize::MAX && comm[j] == comm[start] {
                    out[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comm.copy_from_slice(&out);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_pair() -> WGraph {
        // two triangles joined by one edge 2-3
        let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
        let mut adj = vec![Vec::new(); 6];
        for (i, j) in edges {
            adj[i].push((j, 1.0));
            adj[j].push((i, 1.0));
        }
        WGraph::from_parts(adj, vec![0.0; 6])
    }

    #[test]
    fn aggregation_preserves_modularity() {
        let g = triangle_pair();
        let comm = vec![0, 0, 0, 1, 1, 1];
        let q = g.modularity(&comm, 1.0);
        let agg = g.aggregate(&comm, 2);
        assert_eq!(agg.m2, g.m2);
        assert_eq!(agg.self_loop, vec![6.0, 6.0]);
        assert!((agg.modularity(&[0, 1], 1.0) - q).abs() < 1e-15);
        assert_eq!(agg.modularity(&[0, 0], 1.0), 0.0);
    }

    #[test]
    fn splitting_separates_components() {
        let mut adj = vec![Vec::new(); 4];
        adj[0].push((1, 1.0));
        adj[1].push((0, 1.0));
        adj[2].push((3, 1.0));
        adj[3].push((2, 1.0));
        let g = WGraph::from_parts(adj, vec![0.0; 4]);
        let mut comm = vec![0, 0, 0, 0];
        let before = g.modularity(&comm, 1.0);
        assert_eq!(split_disconnected(&g, &mut comm), 2);
        assert_eq!(comm, vec![0, 0, 1, 1]);
        assert!(g.modularity(&comm, 1.0) >= before);
    }
}
