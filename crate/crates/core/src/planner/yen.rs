//! Loopless k-shortest paths over vertex-weighted graphs.
//!
//! Paths are ordered by total vertex cost, then by vertex count, then
//! lexicographically by vertex ids. Costs are always summed from the root
//! forward so that equal paths produce bit-identical totals.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use super::CandidatePath;

/// Minimal view of a graph for ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGraph {
    pub costs: Vec<f64>,
    pub successors: Vec<Vec<usize>>,
    pub root: usize,
    pub goals: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    vertices: Vec<usize>,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.vertices.len().cmp(&other.vertices.len()))
            .then_with(|| self.vertices.cmp(&other.vertices))
    }
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.key_cmp(self)
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best path from the last vertex of `prefix` to any goal, extending
/// `prefix`. `banned_vertices` may not be entered; `banned_edges` lists
/// forbidden `(from, to)` moves where `to = None` is the step into the
/// virtual sink behind the goals.
fn best_extension(
    g: &VertexGraph,
    prefix: &[usize],
    prefix_cost: f64,
    banned_vertices: &[bool],
    banned_edges: &BTreeSet<(usize, Option<usize>)>,
    is_goal: &[bool],
) -> Option<Label> {
    let n = g.costs.len();
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        cost: prefix_cost,
        vertices: prefix.to_vec(),
    });
    let mut sink_best: Option<Label> = None;
    while let Some(label) = heap.pop() {
        if let Some(best) = &sink_best {
            if best.key_cmp(&label) != Ordering::Greater {
                break;
            }
        }
        let v = *label.vertices.last().expect("labels are non-empty");
        if settled[v] {
            continue;
        }
        settled[v] = true;
        if is_goal[v] && !banned_edges.contains(&(v, None)) {
            let better = sink_best
                .as_ref()
                .is_none_or(|b| label.key_cmp(b) == Ordering::Less);
            if better {
                sink_best = Some(label.clone());
            }
        }
        for &w in &g.successors[v] {
            if settled[w]
                || banned_vertices[w]
                || !g.costs[w].is_finite()
                || banned_edges.contains(&(v, Some(w)))
                || label.vertices.contains(&w)
            {
                continue;
            }
            let mut vertices = label.vertices.clone();
            vertices.push(w);
            heap.push(Label {
                cost: label.cost + g.costs[w],
                vertices,
            });
        }
    }
    sink_best
}

fn prefix_cost(g: &VertexGraph, vertices: &[usize]) -> f64 {
    vertices.iter().fold(0.0, |acc, &v| acc + g.costs[v])
}

/// Up to `m` loopless root-to-goal paths in increasing order. Vertices with
/// infinite cost are never used.
pub fn k_shortest_paths(g: &VertexGraph, m: usize) -> Vec<CandidatePath> {
    let n = g.costs.len();
    if m == 0 || n == 0 || !g.costs[g.root].is_finite() {
        return Vec::new();
    }
    let mut is_goal = vec![false; n];
    for &v in &g.goals {
        is_goal[v] = true;
    }
    let no_vertices = vec![false; n];
    let first = best_extension(
        g,
        &[g.root],
        g.costs[g.root],
        &no_vertices,
        &BTreeSet::new(),
        &is_goal,
    );
    let Some(first) = first else {
        return Vec::new();
    };
    let mut accepted: Vec<Label> = vec![first];
    let mut candidates: Vec<Label> = Vec::new();
    while accepted.len() < m {
        let last = accepted.last().expect("non-empty").vertices.clone();
        for i in 0..last.len() {
            let root_path = &last[..=i];
            let mut banned_edges = BTreeSet::new();
            for p in &accepted {
                if p.vertices.len() > i && p.vertices[..=i] == *root_path {
                    banned_edges.insert((p.vertices[i], p.vertices.get(i + 1).copied()));
                }
            }
            let mut banned_vertices = vec![false; n];
            for &v in &root_path[..i] {
                banned_vertices[v] = true;
            }
            let cost = prefix_cost(g, root_path);
            if let Some(label) =
                best_extension(g, root_path, cost, &banned_vertices, &banned_edges, &is_goal)
            {
                let known = accepted.iter().chain(candidates.iter()).any(|p| p.vertices == label.vertices);
                if !known {
                    candidates.push(label);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = (0..candidates.len())
            .min_by(|&a, &b| candidates[a].key_cmp(&candidates[b]))
            .expect("non-empty");
        accepted.push(candidates.swap_remove(best));
    }
    accepted
        .into_iter()
        .map(|l| CandidatePath {
            vertices: l.vertices,
            cost: l.cost,
        })
        .collect()
}

/// Exhaustive enumeration of all loopless root-to-goal paths through
/// finite-cost vertices, ranked like [`k_shortest_paths`]. Exponential; for
/// tests and small graphs.
pub fn brute_force_paths(g: &VertexGraph, m: usize) -> Vec<CandidatePath> {
    let n = g.costs.len();
    let mut out = Vec::new();
    if n == 0 || !g.costs[g.root].is_finite() {
        return out;
    }
    let mut is_goal = vec![false; n];
    for &v in &g.goals {
        is_goal[v] = true;
    }
    fn walk(
        g: &VertexGraph,
        is_goal: &[bool],
        path: &mut Vec<usize>,
        cost: f64,
        out: &mut Vec<Label>,
    ) {
        let v = *path.last().expect("non-empty");
        if is_goal[v] {
            out.push(Label {
                cost,
                vertices: path.clone(),
            });
        }
        for &w in &g.successors[v] {
            if g.costs[w].is_finite() && !path.contains(&w) {
                path.push(w);
                walk(g, is_goal, path, cost + g.costs[w], out);
                path.pop();
            }
        }
    }
    let mut labels = Vec::new();
    walk(g, &is_goal, &mut vec![g.root], g.costs[g.root], &mut labels);
    labels.sort_by(|a, b| a.key_cmp(b));
    labels.dedup_by(|a, b| a.vertices == b.vertices);
    out.extend(labels.into_iter().take(m).map(|l| CandidatePath {
        vertices: l.vertices,
        cost: l.cost,
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_graph(rng: &mut ChaCha8Rng) -> VertexGraph {
        let n = rng.random_range(1..=7);
        let levels = [0.0, 0.1, 0.25, 0.5, 1.0, f64::INFINITY];
        let costs: Vec<f64> = (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect();
        let density = rng.random_range(0.2..0.8);
        let successors = (0..n)
            .map(|v| (0..n).filter(|&w| w != v && rng.random_bool(density)).collect())
            .collect();
        let goals = (0..n).filter(|_| rng.random_bool(0.3)).collect();
        VertexGraph {
            costs,
            successors,
            root: 0,
            goals,
        }
    }

    #[test]
    fn single_path_is_the_shortest() {
        let g = VertexGraph {
            costs: vec![0.0, 1.0, 0.5, 0.0],
            successors: vec![vec![1, 2], vec![3], vec![3], vec![]],
            root: 0,
            goals: vec![3],
        };
        let p = k_shortest_paths(&g, 1);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].vertices, vec![0, 2, 3]);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let g = random_graph(&mut rng);
            let m = rng.random_range(1..=5);
            assert_eq!(k_shortest_paths(&g, m), brute_force_paths(&g, m), "{g:?}");
        }
    }

    proptest! {
        #[test]
        fn ranked_paths_are_simple_and_sorted(seed in any::<u64>(), m in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng);
            let paths = k_shortest_paths(&g, m);
            prop_assert!(paths.len() <= m);
            for p in &paths {
                let mut s = p.vertices.clone();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), p.vertices.len());
                prop_assert!(p.cost.is_finite());
            }
            for w in paths.windows(2) {
                prop_assert!(w[0].cost <= w[1].cost);
            }
        }
    }
}
