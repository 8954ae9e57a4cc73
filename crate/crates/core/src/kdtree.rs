//! Static 3-d tree for exact nearest-neighbour and radius queries.
//!
//! All queries are exact and deterministic: candidates are ordered by
//! squared distance, ties broken by the lower point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
pub fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(positions: &[Vector3<f64>]) -> Self {
        let points: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build(&points, &mut order, 0, n, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points as `(index, squared distance)`, closest first.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist2)).collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let c = Candidate {
                        dist2: squared_distance(q, &self.points[idx]),
                        index: idx,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().expect("non-empty").dist2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest point and its Euclidean distance.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<(usize, f64)> {
        self.knn(query, 1).first().map(|&(i, d2)| (i, d2.sqrt()))
    }

    /// Indices of all points with `|p − query| ≤ radius`, in increasing
    /// index order.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.points.is_empty() || radius < 0.0 {
            return out;
        }
        let q = [query.x, query.y, query.z];
        self.radius_rec(0, &q, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    if squared_distance(q, &self.points[idx]) <= r2 {
                        out.push(idx);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let plane = diff * diff;
                if diff <= 0.0 {
                    self.radius_rec(left, q, r2, out);
                    if plane <= r2 {
                        self.radius_rec(right, q, r2, out);
                    }
                } else {
                    self.radius_rec(right, q, r2, out);
                    if plane <= r2 {
                        self.radius_rec(left, q, r2, out);
                    }
                }
            }
        }
    }
}

fn build(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[start + mid]][axis];
    // everything left of `mid` is <= value, everything right is >= value
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Median nearest-neighbour distance, the cloud "resolution".
/// Returns `None` for fewer than two points.
pub fn median_nn_distance(tree: &KdTree, positions: &[Vector3<f64>]) -> Option<f64> {
    if positions.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tree.knn(p, 2)
                .into_iter()
                .find(|&(j, _)| j != i)
                .map(|(_, d2)| d2.sqrt())
                .unwrap_or(0.0)
        })
        .collect();
    d.sort_by(|a, b| a.total_cmp(b));
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}
