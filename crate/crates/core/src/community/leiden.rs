//! Leiden: fast local moving, randomized refinement within each community,
//! aggregation on the refined partition.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::louvain::{community_weights, GAIN_EPS};
use super::wgraph::{renumber, WGraph};

/// Randomness of the refinement merge; smaller is greedier.
pub(crate) const REFINE_THETA: f64 = 0.01;

fn fast_local_moving(g: &WGraph, comm: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) {
    let n = g.len();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[comm[v]] += g.degree[v];
        size[comm[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into_iter().collect();
    let mut queued = vec![true; n];
    let mut scratch = vec![0.0; n];
    let mut touched = Vec::new();
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let k = g.degree[v];
        let cur = comm[v];
        community_weights(g, v, comm, &mut scratch, &mut touched);
        tot[cur] -= k;
        size[cur] -= 1;
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
        // an empty community has gain 0
        if size[cur] > 0 && best_gain < -GAIN_EPS * (1.0 + best_gain.abs()) {
            if let Some(&c) = empty.last() {
                best = c;
            }
        }
        for &c in &touched {
            scratch[c] = 0.0;
        }
        if size[cur] == 0 && best != cur {
            empty.push(cur);
        }
        if empty.last() == Some(&best) {
            empty.pop();
        }
        tot[best] += k;
        size[best] += 1;
        if best != cur {
            comm[v] = best;
            for &(j, _) in &g.adj[v] {
                if !queued[j] && comm[j] != best {
                    queued[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
}

/// Refines each community of `comm` by merging singletons into
/// well-connected sub-communities. Returns the refined assignment.
fn refine(g: &WGraph, comm: &[usize], n_comm: usize, gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.len();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    for v in 0..n {
        members[comm[v]].push(v);
    }
    let mut r_tot = g.degree.clone();
    let mut r_size = vec![1usize; n];
    // weight from each refined community to the rest of its parent
    let mut r_ext = vec![0.0; n];
    let mut w_to_parent = vec![0.0; n];
    for v in 0..n {
        let w: f64 = g.adj[v]
            .iter()
            .filter(|&&(j, _)| comm[j] == comm[v])
            .map(|&(_, w)| w)
            .sum();
        w_to_parent[v] = w;
        r_ext[v] = w;
    }
    let mut scratch = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for (parent, nodes) in members.iter().enumerate() {
        if nodes.len() < 2 {
            continue;
        }
        let tot_parent: f64 = nodes.iter().map(|&v| g.degree[v]).sum();
        let mut order = nodes.clone();
        order.shuffle(rng);
        for v in order {
            let k = g.degree[v];
            if r_size[refined[v]] != 1 || w_to_parent[v] < gamma * k * (tot_parent - k) / g.m2 {
                continue;
            }
            touched.clear();
            for &(j, w) in &g.adj[v] {
                if comm[j] == parent {
                    let r = refined[j];
                    if scratch[r] == 0.0 {
                        touched.push(r);
                    }
                    scratch[r] += w;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            let own = refined[v];
            candidates.clear();
            candidates.push((own, 0.0));
            for &r in &touched {
                if r == own || r_ext[r] < gamma * r_tot[r] * (tot_parent - r_tot[r]) / g.m2 {
                    continue;
                }
                let gain = scratch[r] - gamma * k * r_tot[r] / g.m2;
                if gain >= 0.0 {
                    candidates.push((r, gain));
                }
            }
            let max_gain = candidates.iter().fold(0.0f64, |m, &(_, x)| m.max(x));
            let weights: Vec<f64> = candidates
                .iter()
                .map(|&(_, x)| ((x - max_gain) / REFINE_THETA).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = candidates[candidates.len() - 1].0;
            for (&(r, _), &w) in candidates.iter().zip(&weights) {
                if pick < w {
                    chosen = r;
                    break;
                }
                pick -= w;
            }
            if chosen != own {
                let w_vr = scratch[chosen];
                refined[v] = chosen;
                r_size[own] = 0;
                r_size[chosen] += 1;
                r_tot[chosen] += k;
                r_ext[chosen] += w_to_parent[v] - 2.0 * w_vr;
            }
            for &r in &touched {
                scratch[r] = 0.0;
            }
        }
    }
    refined
}

/// Community of every node of `g`, before the final connectivity split.
pub(crate) fn leiden(g: &WGraph, gamma: f64, rng: &mut ChaCha8Rng, max_levels: usize) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..g.len()).collect();
    if g.m2 == 0.0 {
        return membership;
    }
    let mut level = g.clone();
    let mut comm: Vec<usize> = (0..level.len()).collect();
    for _ in 0..max_levels {
        fast_local_moving(&level, &mut comm, gamma, rng);
        let n_comm = renumber(&mut comm);
        if n_comm == level.len() {
            break;
        }
        let mut refined = refine(&level, &comm, n_comm, gamma, rng);
        let n_refined = renumber(&mut refined);
        let (collapse, next_comm): (Vec<usize>, Vec<usize>) = if n_refined == level.len() {
            // refinement made no progress; aggregate the unrefined partition
            (comm.clone(), (0..n_comm).collect())
        } else {
            let mut parent = vec![0; n_refined];
            for v in 0..level.len() {
                parent[refined[v]] = comm[v];
            }
            (refined, parent)
        };
        let n_next = next_comm.len();
        for m in membership.iter_mut() {
            *m = collapse[*m];
        }
        level = level.aggregate(&collapse, n_next);
        comm = next_comm;
    }
    for m in membership.iter_mut() {
        *m = comm[*m];
    }
    membership
}
