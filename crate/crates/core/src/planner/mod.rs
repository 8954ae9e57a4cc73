//! Multi-hypothesis planning: node costs, graph growth and path ranking.

mod grow;
mod tree;
mod yen;

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::{aggregate_safety, ClassCatalog, SafetyLabel, SafetyParams, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::geometry::Pose6D;
use crate::terrain::{MotionPrimitive, TrajectoryNode};

pub use grow::{grow_hypothesis_graph, GrowthReport, PlannerParams, PlanningInputs};
pub use tree::{RrtTree, TreeNode};
pub use yen::{brute_force_paths, k_shortest_paths, VertexGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Unsafe support points at which a vertex becomes impassable.
    pub phi_v: usize,
    pub start_relax_radius: f64,
    /// Mean margin below which a vertex near the start counts as free.
    pub relax_threshold: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            phi_v: 5,
            start_relax_radius: 1.0,
            relax_threshold: 0.05,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.phi_v == 0 {
            return Err(Error::InvalidParameter("phi_v must be >= 1".into()));
        }
        if !(self.start_relax_radius >= 0.0 && self.relax_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "start relaxation radius and threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a vertex cost depends on.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a> {
    pub cloud: &'a SemanticPointCloud,
    pub catalog: &'a ClassCatalog,
    pub partition: &'a SafetyPartition,
    pub safety: &'a SafetyParams,
    pub cost: &'a CostParams,
    /// When false every vertex costs zero (geometry-only planning).
    pub semantic: bool,
}

/// Semantic cost of a vertex with support `support` standing at
/// `position`, the root standing at `root`.
pub fn node_cost(
    support: &[usize],
    position: &Vector3<f64>,
    root: &Vector3<f64>,
    ctx: &CostContext,
) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::InvalidInput("vertex has an empty support set".into()));
    }
    if !ctx.semantic {
        return Ok(0.0);
    }
    let near_start = (position - root).norm() <= ctx.cost.start_relax_radius;
    let mut unsafe_count = 0;
    let mut all_safe = true;
    let mut margin = 0.0;
    // near the start only observed points count toward the relaxed test;
    // the ground under and behind the robot is never in view
    let mut observed_margin = 0.0;
    let mut observed = 0usize;
    for &i in support {
        match ctx.partition.label(i) {
            SafetyLabel::Safe => {}
            SafetyLabel::Unsafe => {
                unsafe_count += 1;
                all_safe = false;
            }
            SafetyLabel::Unclear => all_safe = false,
        }
        let agg = aggregate_safety(ctx.cloud.probs(i), ctx.cloud.uncert(i), ctx.catalog);
        let m = (ctx.safety.theta_s - agg.p_safe + ctx.safety.w_sigma * agg.sigma).clamp(0.0, 1.0);
        margin += m;
        if ctx.cloud.measurement_count(i) > 0 {
            observed_margin += m;
            observed += 1;
        }
    }
    if unsafe_count >= ctx.cost.phi_v {
        return Ok(f64::INFINITY);
    }
    if all_safe {
        return Ok(0.0);
    }
    if near_start
        && unsafe_count == 0
        && (observed == 0 || observed_margin / (observed as f64) < ctx.cost.relax_threshold)
    {
        return Ok(0.0);
    }
    Ok(margin / support.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: Pose6D,
    pub radius: f64,
}

impl GoalRegion {
    pub fn new(center: Pose6D, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter("goal radius must be > 0".into()));
        }
        Ok(Self { center, radius })
    }

    /// Horizontal distance test; orientation is ignored.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let c = self.center.position();
        (p.x - c.x).hypot(p.y - c.y) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub node: TrajectoryNode,
    pub cost: f64,
    pub is_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphArc {
    pub from: usize,
    pub to: usize,
    pub primitive: MotionPrimitive,
}

/// Directed graph of terrain-attached poses with per-vertex costs.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGraph {
    pub vertices: Vec<Vertex>,
    pub arcs: Vec<GraphArc>,
    pub root: usize,
    pub goal_vertices: Vec<usize>,
    successors: Vec<Vec<usize>>,
}

impl HypothesisGraph {
    pub fn with_root(root: TrajectoryNode) -> Self {
        Self {
            vertices: vec![Vertex {
                node: root,
                cost: 0.0,
                is_goal: false,
            }],
            arcs: Vec::new(),
            root: 0,
            goal_vertices: Vec::new(),
            successors: vec![Vec::new()],
        }
    }

    pub fn add_vertex(&mut self, node: TrajectoryNode, is_goal: bool) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            node,
            cost: 0.0,
            is_goal,
        });
        self.successors.push(Vec::new());
        if is_goal {
            self.goal_vertices.push(id);
        }
        id
    }

    /// Adds an arc unless the same arc is already present.
    pub fn add_arc(&mut self, from: usize, to: usize, primitive: MotionPrimitive) {
        if self.successors[from].contains(&to) {
            return;
        }
        self.successors[from].push(to);
        self.arcs.push(GraphArc {
            from,
            to,
            primitive,
        });
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.successors[v]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn cost(&self, v: usize) -> f64 {
        self.vertices[v].cost
    }

    /// Recomputes every vertex cost against the current cloud state.
    pub fn recost(&mut self, ctx: &CostContext) -> Result<()> {
        let root = self.vertices[self.root].node.pose.position();
        for v in &mut self.vertices {
            v.cost = node_cost(&v.node.support, &v.node.pose.position(), &root, ctx)?;
        }
        // the robot already stands on the root
        self.vertices[self.root].cost = 0.0;
        Ok(())
    }

    pub fn vertex_graph(&self) -> VertexGraph {
        VertexGraph {
            costs: self.vertices.iter().map(|v| v.cost).collect(),
            successors: self.successors.clone(),
            root: self.root,
            goals: self.goal_vertices.clone(),
        }
    }

    /// Whether some goal vertex is reachable from the root through
    /// finite-cost vertices only.
    pub fn goal_reachable(&self) -> bool {
        if !self.cost(self.root).is_finite() {
            return false;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(v) = queue.pop_front() {
            if self.vertices[v].is_goal {
                return true;
            }
            for &w in &self.successors[v] {
                if !seen[w] && self.cost(w).is_finite() {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }

    pub fn path_nodes<'a>(&'a self, path: &'a CandidatePath) -> impl Iterator<Item = &'a TrajectoryNode> + 'a {
        path.vertices.iter().map(|&v| &self.vertices[v].node)
    }

    /// Plain-text edge list:
    /// `v id x y z roll pitch yaw cost goal` and `a from to` records.
    pub fn write_edge_list<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# v id x y z roll pitch yaw cost goal")?;
        writeln!(w, "# a from to")?;
        for (i, v) in self.vertices.iter().enumerate() {
            let p = v.node.pose.position();
            let (r, pi, y) = v.node.pose.roll_pitch_yaw();
            let cost = if v.cost.is_finite() {
                v.cost.to_string()
            } else {
                "inf".to_string()
            };
            writeln!(
                w,
                "v {i} {} {} {} {r} {pi} {y} {cost} {}",
                p.x,
                p.y,
                p.z,
                u8::from(v.is_goal)
            )?;
        }
        for a in &self.arcs {
            writeln!(w, "a {} {}", a.from, a.to)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePath {
    pub vertices: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathStatus {
    ConfirmedSafe(CandidatePath),
    ConfirmedUnsafe,
    Undecided,
}

/// Three-way decision over ranked paths of `graph`.
pub fn path_status(graph: &HypothesisGraph, paths: &[CandidatePath]) -> PathStatus {
    if let Some(p) = paths.iter().find(|p| p.cost == 0.0) {
        return PathStatus::ConfirmedSafe(p.clone());
    }
    if !graph.goal_reachable() {
        return PathStatus::ConfirmedUnsafe;
    }
    PathStatus::Undecided
}

/// Vertices with `0 < c(v) < ∞` on the given paths, ascending and unique.
pub fn unclear_vertices(graph: &HypothesisGraph, paths: &[CandidatePath]) -> Vec<usize> {
    let mut out: Vec<usize> = paths
        .iter()
        .flat_map(|p| p.vertices.iter().copied())
        .filter(|&v| {
            let c = graph.cost(v);
            c > 0.0 && c.is_finite()
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
