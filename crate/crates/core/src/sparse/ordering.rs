//! Fill-reducing minimum degree ordering on the elimination graph.
//!
//! The graph is kept explicitly: eliminating a node turns its remaining
//! neighbourhood into a clique. Ties are broken by the smallest index, so the
//! ordering is a pure function of the sparsity pattern.

use std::collections::BTreeSet;

/// Returns `perm` with `perm[k]` = original index eliminated at step `k`.
///
/// `adj[i]` lists the neighbours of `i` (any order, self loops ignored).
pub fn minimum_degree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut graph: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut v: Vec<usize> = nb.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut eliminated = vec![false; n];
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (graph[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut graph[v]);
        for &u in &nbrs {
            debug_assert!(!eliminated[u]);
            queue.remove(&(graph[u].len(), u));
            let merged = merge_excluding(&graph[u], &nbrs, u, v);
            graph[u] = merged;
            queue.insert((graph[u].len(), u));
        }
    }
    perm
}

/// Sorted union of `a` and `b` without `skip_self` and `skip_pivot`.
fn merge_excluding(a: &[usize], b: &[usize], skip_self: usize, skip_pivot: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if next != skip_self && next != skip_pivot {
            out.push(next);
        }
    }
    out
}
