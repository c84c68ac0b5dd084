//! A static kd-tree over points of runtime dimension.
use crate::linalg::dist_sq;
use crate::prelude::*;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Nearest-neighbour and range index over a flat `len * n` coordinate buffer.
#[derive(Debug, Clone)]
pub struct KdTree {
    n: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[f64], n: usize) -> Self {
        assert!(n > 0 && points.len().is_multiple_of(n));
        let len = points.len() / n;
        let mut tree = KdTree {
            n,
            points: points.to_vec(),
            order: (0..len).collect(),
            nodes: Vec::new(),
        };
        if len > 0 {
            tree.build(0, len);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let n = self.n;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for &i in &self.order[start..end] {
            for d in 0..n {
                let v = self.points[i * n + d];
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let dim = (0..n)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap().then(b.cmp(&a)))
            .unwrap();
        if hi[dim] - lo[dim] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * n + dim]
                .partial_cmp(&pts[b * n + dim])
                .unwrap()
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] * n + dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// smaller index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        self.nearest_filtered(q, |_, _| true)
    }

    /// Nearest point at strictly positive distance from `q`.
    pub fn nearest_distinct(&self, q: &[f64]) -> Option<(usize, f64)> {
        self.nearest_filtered(q, |_, d2| d2 > 0.0)
    }

    pub fn nearest_filtered<F: Fn(usize, f64) -> bool>(&self, q: &[f64], accept: F) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &accept, &mut best);
        (best.0 != usize::MAX).then_some(best)
    }

    fn nearest_rec<F: Fn(usize, f64) -> bool>(&self, node: usize, q: &[f64], accept: &F, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = dist_sq(self.point(i), q);
                    if (d2 < best.1 || (d2 == best.1 && i < best.0)) && accept(i, d2) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, accept, best);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, accept, best);
                }
            }
        }
    }

    /// Indices of all points within the closed ball `B_r(q)`, ascending.
    pub fn within(&self, q: &[f64], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.within_rec(0, q, r * r, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if dist_sq(self.point(i), q) <= r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.within_rec(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.within_rec(right, q, r2, out);
                }
            }
        }
    }

    /// Whether any point lies within the open ball of radius `r` around `q`.
    pub fn any_within(&self, q: &[f64], r: f64) -> bool {
        !self.is_empty() && self.any_rec(0, q, r * r)
    }

    fn any_rec(&self, node: usize, q: &[f64], r2: f64) -> bool {
        match self.nodes[node] {
            Node::Leaf { start, end } => self.order[start..end]
                .iter()
                .any(|&i| dist_sq(self.point(i), q) < r2),
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.any_rec(near, q, r2) || (diff * diff < r2 && self.any_rec(far, q, r2))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(pts: &[f64], n: usize, q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..pts.len() / n {
            let d = dist_sq(&pts[i * n..(i + 1) * n], q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 5] {
            let pts: Vec<f64> = (0..300 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tree = KdTree::new(&pts, n);
            for _ in 0..100 {
                let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.2..1.2)).collect();
                let (i, d) = tree.nearest(&q).unwrap();
                let (j, e) = brute_nearest(&pts, n, &q);
                assert_eq!(d, e);
                assert_eq!(i, j);
                let r = 0.3;
                let got = tree.within(&q, r);
                let want: Vec<usize> = (0..300)
                    .filter(|&i| dist_sq(&pts[i * n..(i + 1) * n], &q) <= r * r)
                    .collect();
                assert_eq!(got, want);
                assert_eq!(tree.any_within(&q, r), want.iter().any(|&i| dist_sq(&pts[i * n..(i + 1) * n], &q) < r * r));
            }
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = vec![0.5; 40];
        let tree = KdTree::new(&pts, 2);
        assert_eq!(tree.nearest(&[0.5, 0.5]).unwrap().1, 0.0);
        assert!(tree.nearest_distinct(&[0.5, 0.5]).is_none());
        let empty = KdTree::new(&[], 3);
        assert!(empty.nearest(&[0.0, 0.0, 0.0]).is_none());
        assert!(!empty.any_within(&[0.0; 3], 1.0));
    }
}
