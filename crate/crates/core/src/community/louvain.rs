use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::wgraph::{renumber, WGraph};

/// Relative slack below which two gains count as equal.
pub(crate) const GAIN_EPS: f64 = 1e-12;

/// Weights from `v` to each neighbouring community, in ascending community
/// order. `scratch` must be all zero on entry and is left that way.
pub(crate) fn community_weights(g: &WGraph, v: usize, comm: &[usize], scratch: &mut [f64], touched: &mut Vec<usize>) {
    touched.clear();
    for &(j, w) in &g.adj[v] {
        let c = comm[j];
        if scratch[c] == 0.0 {
            touched.push(c);
        }
        scratch[c] += w;
    }
    touched.sort_unstable();
    touched.dedup();
}

/// One Louvain level: sweeps nodes in `order` until a full sweep moves
/// nothing. Returns whether any node moved.
fn local_moving(g: &WGraph, comm: &mut [usize], gamma: f64, order: &[usize], max_sweeps: usize) -> bool {
    let n = g.len();
    let mut tot = vec![0.0; n];
    for v in 0..n {
        tot[comm[v]] += g.degree[v];
    }
    let mut scratch = vec![0.0; n];
    let mut touched = Vec::new();
    let mut moved_any = false;
    for _ in 0..max_sweeps {
        let mut moved = false;
        for &v in order {
            let k = g.degree[v];
            let cur = comm[v];
            community_weights(g, v, comm, &mut scratch, &mut touched);
            tot[cur] -= k;
            let gain = |c: usize, w: f64| w - gamma * k * tot[c] / g.m2;
            let stay = gain(cur, scratch[cur]);
            let (mut best, mut best_gain) = (cur, stay);
            for &c in &touched {
                let g_c = gain(c, scratch[c]);
                if c != cur && g_c > best_gain + GAIN_EPS * (1.0 + best_gain.abs()) {
                    best = c;
                    best_gain = g_c;
                }
            }
            tot[best] += k;
            if best != cur {
                comm[v] = best;
                moved = true;
            }
            for &c in &touched {
                scratch[c] = 0.0;
            }
        }
        moved_any |= moved;
        if !moved {
            break;
        }
    }
    moved_any
}

/// Community of every node of `g`.
pub(crate) fn louvain(g: &WGraph, gamma: f64, rng: &mut ChaCha8Rng, max_levels: usize) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..g.len()).collect();
    if g.m2 == 0.0 {
        return membership;
    }
    let mut level = g.clone();
    for _ in 0..max_levels {
        let mut comm: Vec<usize> = (0..level.len()).collect();
        let mut order = comm.clone();
        order.shuffle(rng);
        if !local_moving(&level, &mut comm, gamma, &order, 1000) {
            break;
        }
        let n_comm = renumber(&mut comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        if n_comm == level.len() {
            break;
        }
        level = level.aggregate(&comm, n_comm);
    }
    membership
}
