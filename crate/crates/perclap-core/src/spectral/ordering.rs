//! Fill-reducing elimination orderings.
//!
//! Orderings change the cost of a factorization, never its result: the
//! inertia count and the triangular solves are exact up to roundoff for any
//! permutation.  Box lattices get a geometric nested dissection; operators
//! without geometry fall back to reverse Cuthill-McKee on the sparsity
//! pattern.

use crate::lattice::{BoxGeometry, Topology};
use crate::operators::SparseSymmetricOperator;

/// Below this region volume (or when no axis extends past 2 cells) the
/// dissection stops splitting and emits cells directly.
const DISSECTION_LEAF_VOLUME: usize = 24;

/// Nested-dissection order for the edge graph of `geom`: `order[k]` is the
/// vertex eliminated at step k.  Wrapped axes of a torus are cut first (one
/// slab per axis turns the remainder into a free box), then the free region
/// is bisected along its longest axis; separators are eliminated after both
/// halves.
pub fn dissection_order(geom: &BoxGeometry) -> Vec<u32> {
    let d = geom.d();
    let lo = vec![0usize; d];
    let hi = vec![geom.side(); d];
    // A side-2 torus is the same graph as the side-2 free box.
    let wrapped = vec![geom.topology() == Topology::Periodic && geom.side() >= 3; d];
    let mut out = Vec::with_capacity(geom.vertices());
    dissect(geom, lo, hi, wrapped, &mut out);
    debug_assert_eq!(out.len(), geom.vertices());
    out
}

fn dissect(
    geom: &BoxGeometry,
    lo: Vec<usize>,
    hi: Vec<usize>,
    wrapped: Vec<bool>,
    out: &mut Vec<u32>,
) {
    if let Some(axis) = wrapped.iter().position(|&w| w) {
        // Remove the top slab of the wrapped axis; what remains is free
        // along it.  The slab is a separator, so it is eliminated last.
        let mut inner_hi = hi.clone();
        inner_hi[axis] -= 1;
        let mut unwrapped = wrapped.clone();
        unwrapped[axis] = false;
        dissect(geom, lo.clone(), inner_hi, unwrapped, out);
        let mut slab_lo = lo;
        slab_lo[axis] = hi[axis] - 1;
        emit_cells(geom, &slab_lo, &hi, out);
        return;
    }
    let d = lo.len();
    let volume: usize = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let (axis, extent) = (0..d)
        .map(|a| (a, hi[a] - lo[a]))
        .max_by_key(|&(a, e)| (e, std::cmp::Reverse(a)))
        .unwrap();
    if volume <= DISSECTION_LEAF_VOLUME || extent <= 2 {
        emit_cells(geom, &lo, &hi, out);
        return;
    }
    let mid = lo[axis] + extent / 2;
    let mut left_hi = hi.clone();
    left_hi[axis] = mid;
    let mut right_lo = lo.clone();
    right_lo[axis] = mid + 1;
    let no_wrap = vec![false; d];
    dissect(geom, lo.clone(), left_hi, no_wrap.clone(), out);
    dissect(geom, right_lo, hi.clone(), no_wrap, out);
    let mut sep_lo = lo;
    let mut sep_hi = hi;
    sep_lo[axis] = mid;
    sep_hi[axis] = mid + 1;
    emit_cells(geom, &sep_lo, &sep_hi, out);
}

/// All cells of the sub-box [lo, hi) in lexicographic coordinate order.
fn emit_cells(geom: &BoxGeometry, lo: &[usize], hi: &[usize], out: &mut Vec<u32>) {
    let d = lo.len();
    let mut coords = lo.to_vec();
    loop {
        out.push(geom.index(&coords) as u32);
        let mut axis = d;
        while axis > 0 {
            axis -= 1;
            coords[axis] += 1;
            if coords[axis] < hi[axis] {
                break;
            }
            coords[axis] = lo[axis];
            if axis == 0 {
                return;
            }
        }
    }
}

/// Reverse Cuthill-McKee order of the off-diagonal pattern of `op`:
/// breadth-first from a pseudo-peripheral root per connected component,
/// neighbours visited by increasing degree, whole order reversed.
pub fn rcm_order(op: &SparseSymmetricOperator) -> Vec<u32> {
    let n = op.n();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for e in op.off_diagonal() {
        adj[e.i as usize].push(e.j);
        adj[e.j as usize].push(e.i);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(start, &adj, &degree);
        visited[root] = true;
        queue.push_back(root as u32);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<u32> = adj[v as usize]
                .iter()
                .copied()
                .filter(|&u| !visited[u as usize])
                .collect();
            next.sort_by_key(|&u| (degree[u as usize], u));
            for u in next {
                visited[u as usize] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// George-Liu heuristic: walk to a deepest level set while the eccentricity
/// of the chosen root keeps growing.
fn pseudo_peripheral(start: usize, adj: &[Vec<u32>], degree: &[usize]) -> usize {
    let mut root = start;
    let mut depth = 0usize;
    loop {
        let (levels, max_level) = bfs_levels(root, adj);
        if max_level <= depth {
            return root;
        }
        depth = max_level;
        root = levels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == Some(max_level))
            .map(|(v, _)| v)
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
    }
}

fn bfs_levels(root: usize, adj: &[Vec<u32>]) -> (Vec<Option<usize>>, usize) {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = std::collections::VecDeque::from([root]);
    let mut max_level = 0;
    while let Some(v) = queue.pop_front() {
        let next = level[v].unwrap() + 1;
        for &u in &adj[v] {
            if level[u as usize].is_none() {
                level[u as usize] = Some(next);
                max_level = max_level.max(next);
                queue.push_back(u as usize);
            }
        }
    }
    (level, max_level)
}
