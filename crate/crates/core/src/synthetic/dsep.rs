//! d-separation by reachability (the "Bayes ball" traversal).

use std::collections::{BTreeSet, VecDeque};

use super::LatentGraph;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Dir {
    /// Arrived from a child.
    Up,
    /// Arrived from a parent.
    Down,
}

/// True when `x` and `y` are d-separated given `z`.
pub fn d_separated(graph: &LatentGraph, x: usize, y: usize, z: &[usize]) -> bool {
    let z: BTreeSet<usize> = z.iter().copied().collect();
    if z.contains(&x) || z.contains(&y) {
        return true;
    }
    // ancestors of the conditioning set, inclusive
    let mut anc = BTreeSet::new();
    let mut stack: Vec<usize> = z.iter().copied().collect();
    while let Some(n) = stack.pop() {
        if anc.insert(n) {
            stack.extend(graph.parents[n].iter().copied());
        }
    }
    let mut visited = BTreeSet::new();
    let mut queue = VecDeque::from([(x, Dir::Up)]);
    while let Some((n, dir)) = queue.pop_front() {
        if !visited.insert((n, dir)) {
            continue;
        }
        if n == y && !z.contains(&n) {
            return false;
        }
        match dir {
            Dir::Up if !z.contains(&n) => {
                queue.extend(graph.parents[n].iter().map(|&p| (p, Dir::Up)));
                queue.extend(graph.children(n).into_iter().map(|c| (c, Dir::Down)));
            }
            Dir::Up => {}
            Dir::Down => {
                if !z.contains(&n) {
                    queue.extend(graph.children(n).into_iter().map(|c| (c, Dir::Down)));
                }
                if anc.contains(&n) {
                    queue.extend(graph.parents[n].iter().map(|&p| (p, Dir::Up)));
                }
            }
        }
    }
    true
}

/// Whether `z_t` depends on `z_j` given `z_{t-1}`.
pub fn oracle_ci(graph: &LatentGraph, j: usize, t: usize) -> bool {
    assert!(j < t && t < graph.len(), "need j < t < n");
    if j + 1 == t {
        return true;
    }
    !d_separated(graph, j, t, &[t - 1])
}
