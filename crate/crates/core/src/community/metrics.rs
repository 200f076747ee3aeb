use std::collections::HashMap;

use super::Partition;
use crate::graph::FeatureGraph;
use crate::Result;

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same items. Two identical
/// trivial labelings (where the index is 0/0) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n).max(1.0);
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return if index == max { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Ids of communities whose members do not induce a connected subgraph.
pub fn disconnected_communities(graph: &FeatureGraph, partition: &Partition) -> Result<Vec<u32>> {
    let labels = partition.labels_for(graph)?;
    let n = graph.n_nodes();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in graph.indexed_edges() {
        if labels[i] == labels[j] {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut seen_community = vec![false; partition.n_communities as usize];
    let mut visited = vec![false; n];
    let mut bad = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let c = labels[start];
        if seen_community[c] {
            // a second component of a community already traversed
            if !bad.contains(&(c as u32)) {
                bad.push(c as u32);
            }
        }
        seen_community[c] = true;
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(v) = stack.pop() {
            for &j in &adj[v] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    bad.sort_unstable();
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pair-counting oracle: Rand index adjusted with the hypergeometric
    /// expectation, computed over all item pairs.
    fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += f64::from(u8::from(sa && sb));
                in_a += f64::from(u8::from(sa));
                in_b += f64::from(u8::from(sb));
            }
        }
        let total = (n * (n - 1) / 2) as f64;
        let expected = in_a * in_b / total;
        (both - expected) / ((in_a + in_b) / 2.0 - expected)
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]), 1.0);
        let a = [0, 0, 0, 1, 1, 1, 2, 2];
        let b = [0, 0, 1, 1, 2, 2, 2, 0];
        assert!((adjusted_rand_index(&a, &b) - ari_oracle(&a, &b)).abs() < 1e-12);
        assert!(adjusted_rand_index(&a, &b) < 0.5);
    }
}
