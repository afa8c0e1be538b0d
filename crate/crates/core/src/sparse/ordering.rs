use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

/// Minimum-degree elimination order on an undirected graph.
///
/// Returns the order (position → vertex) and, for each position, the
/// ascending positions of the later vertices it is coupled to after
/// elimination; this is the column structure of the Cholesky factor.
/// Ties go to the lower vertex index.
pub fn minimum_degree(neighbors: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = neighbors.len();
    let mut adj: Vec<Vec<usize>> = neighbors
        .iter()
        .enumerate()
        .map(|(v, nb)| {
            let mut a: Vec<usize> = nb.iter().copied().filter(|&u| u != v).collect();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut done = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut reach: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut scratch = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != adj[v].len() {
            continue;
        }
        done[v] = true;
        order.push(v);
        let clique = core::mem::take(&mut adj[v]);
        for &u in &clique {
            // adj[u] ← (adj[u] ∪ clique) \ {u, v}
            scratch.clear();
            let (a, b) = (&adj[u], &clique);
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
                if next != u && next != v {
                    scratch.push(next);
                }
            }
            core::mem::swap(&mut adj[u], &mut scratch);
            heap.push(Reverse((adj[u].len(), u)));
        }
        reach.push(clique);
    }

    let mut position = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    let structure = reach
        .into_iter()
        .map(|c| {
            let mut s: Vec<usize> = c.into_iter().map(|u| position[u]).collect();
            s.sort_unstable();
            s
        })
        .collect();
    (order, structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn path_graph_has_no_fill() {
        let nb = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let (order, s) = minimum_degree(&nb);
        assert_eq!(order.len(), 4);
        let fill: usize = s.iter().map(|c| c.len()).sum();
        assert_eq!(fill, 3);
    }

    #[test]
    fn structure_points_forward() {
        let nb = vec![vec![1, 2, 3], vec![0, 2], vec![0, 1, 3], vec![0, 2]];
        let (_, s) = minimum_degree(&nb);
        for (p, col) in s.iter().enumerate() {
            assert!(col.iter().all(|&q| q > p));
        }
    }
}
