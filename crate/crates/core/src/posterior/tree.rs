//! Bounding-box kd-tree for windowed nearest-neighbour sums.

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    /// Child indices, `None` for leaves.
    children: Option<(usize, usize)>,
}

/// Points in `dim` dimensions, reordered so every node owns a contiguous
/// range. `index[i]` is the original position of stored point `i`.
#[derive(Debug, Clone)]
pub(crate) struct PointTree {
    dim: usize,
    points: Vec<f64>,
    index: Vec<usize>,
    nodes: Vec<Node>,
    /// `2 dim` bounds (lower then upper) per node.
    bounds: Vec<f64>,
}

impl PointTree {
    /// Builds the tree over `points` (stride `dim`).
    pub(crate) fn new(dim: usize, points: &[f64]) -> Self {
        let n = points.len() / dim;
        let mut tree = PointTree {
            dim,
            points: Vec::with_capacity(points.len()),
            index: (0..n).collect(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if n > 0 {
            tree.split(points, 0, n);
        }
        let mut reordered = Vec::with_capacity(points.len());
        for &i in &tree.index {
            reordered.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        tree.points = reordered;
        tree
    }

    fn split(&mut self, points: &[f64], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            children: None,
        });
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.index[start..end] {
            for k in 0..dim {
                let v = points[i * dim + k];
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);
        if end - start > LEAF_SIZE {
            let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
            let mid = start + (end - start) / 2;
            self.index[start..end]
                .select_nth_unstable_by(mid - start, |&a, &b| points[a * dim + axis].total_cmp(&points[b * dim + axis]));
            let left = self.split(points, start, mid);
            let right = self.split(points, mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn box_distance(&self, node: usize, q: &[f64]) -> f64 {
        let b = &self.bounds[2 * self.dim * node..2 * self.dim * (node + 1)];
        let (lo, hi) = b.split_at(self.dim);
        let mut d = 0.0;
        for k in 0..self.dim {
            let e = if q[k] < lo[k] {
                lo[k] - q[k]
            } else if q[k] > hi[k] {
                q[k] - hi[k]
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }

    /// Calls `visit(original_index, d²)` for every point with
    /// `d² ≤ min d² + window`, nearest subtrees first. Points farther than
    /// the final bound may also be visited when they precede the minimum.
    pub(crate) fn for_each_within<F: FnMut(usize, f64)>(&self, q: &[f64], window: f64, mut visit: F) {
        if self.nodes.is_empty() {
            return;
        }
        let dim = self.dim;
        let mut best = f64::INFINITY;
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((node, bound)) = stack.pop() {
            if bound > best + window {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                None => {
                    for i in n.start..n.end {
                        let p = &self.points[i * dim..(i + 1) * dim];
                        let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d <= best + window {
                            best = best.min(d);
                            visit(self.index[i], d);
                        }
                    }
                }
                Some((l, r)) => {
                    let dl = self.box_distance(l, q);
                    let dr = self.box_distance(r, q);
                    let (near, far) = if dl <= dr { ((l, dl), (r, dr)) } else { ((r, dr), (l, dl)) };
                    stack.push(far);
                    stack.push(near);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[f64], dim: usize, q: &[f64]) -> Vec<f64> {
        points
            .chunks_exact(dim)
            .map(|p| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }

    proptest! {
        #[test]
        fn window_contains_every_close_point(
            dim in 1usize..5,
            n in 1usize..300,
            window in 0.0f64..3.0,
            seed in 0u64..10_000,
        ) {
            let mut r = crate::rng::stream(seed, 31, 0);
            let pts = crate::rng::standard_normal_matrix(&mut r, dim, n);
            let q = crate::rng::standard_normal_matrix(&mut r, dim, 1);
            let tree = PointTree::new(dim, pts.as_slice());
            let mut visits = Vec::new();
            tree.for_each_within(q.as_slice(), window, |i, d| visits.push((i, d)));
            let mut seen = vec![false; n];
            for (i, d) in visits {
                prop_assert!(!seen[i]);
                seen[i] = true;
                let exact = brute(&pts.as_slice()[i * dim..(i + 1) * dim], dim, q.as_slice())[0];
                prop_assert!((d - exact).abs() < 1e-12);
            }
            let all = brute(pts.as_slice(), dim, q.as_slice());
            let min = all.iter().copied().fold(f64::INFINITY, f64::min);
            for (i, d) in all.iter().enumerate() {
                if *d <= min + window {
                    prop_assert!(seen[i], "missed point {i}");
                }
            }
        }
    }

    #[test]
    fn infinite_window_visits_all() {
        let pts: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let tree = PointTree::new(2, &pts);
        let mut count = 0;
        tree.for_each_within(&[3.0, 4.0], f64::INFINITY, |_, _| count += 1);
        assert_eq!(count, 50);
    }
}
