//! Growth of the multi-hypothesis graph.
//!
//! A single tree grows from the start while sampling cloud points outside
//! the forbidden set `F` (initially the unsafe points). Whenever it reaches
//! the goal, the unclear regions crossed by the path (except those around
//! start and goal) become removal candidates; the largest one joins `F`,
//! tree vertices standing on it are deleted and the search continues,
//! trying to reconnect the vertices cut off by the deletion. A path that
//! crosses no candidate region ends the run; the search may then restart
//! with a fresh seed. Every path found along the way becomes part of the
//! graph.

use std::collections::{BTreeSet, HashMap};

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::RrtTree;
use super::{CostContext, CostParams, GoalRegion, HypothesisGraph};
use crate::cloud::{ClassCatalog, SafetyLabel, SafetyParams, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::geometry::Pose6D;
use crate::regions::{regions_traversed, RegionSet};
use crate::rng::stream;
use crate::terrain::{
    attach, connect_states, integrate_with_steps, project_to_surface, PlanarState, PrimitiveParams,
    TraversabilityParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Expansion iterations per run.
    pub budget: usize,
    pub goal_bias: f64,
    pub heading_weight: f64,
    pub max_restarts: usize,
    pub goal_radius: f64,
    /// Cut-off vertices closer than this to a new vertex are candidates
    /// for reconnection.
    pub connect_radius: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            budget: 1500,
            goal_bias: 0.15,
            heading_weight: 0.5,
            max_restarts: 3,
            goal_radius: 0.5,
            connect_radius: 1.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidParameter("goal_bias must lie in [0, 1]".into()));
        }
        if !(self.goal_radius > 0.0 && self.heading_weight >= 0.0 && self.connect_radius >= 0.0) {
            return Err(Error::InvalidParameter(
                "goal_radius must be > 0, heading_weight and connect_radius >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs shared by graph growth and re-costing.
#[derive(Debug, Clone, Copy)]
pub struct PlanningInputs<'a> {
    pub cloud: &'a SemanticPointCloud,
    pub catalog: &'a ClassCatalog,
    pub partition: &'a SafetyPartition,
    pub regions: &'a RegionSet,
    pub safety: &'a SafetyParams,
    pub cost: &'a CostParams,
    pub terrain: &'a TraversabilityParams,
    pub primitives: &'a PrimitiveParams,
    pub semantic: bool,
}

impl<'a> PlanningInputs<'a> {
    pub fn cost_context(&self) -> CostContext<'a> {
        CostContext {
            cloud: self.cloud,
            catalog: self.catalog,
            partition: self.partition,
            safety: self.safety,
            cost: self.cost,
            semantic: self.semantic,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GrowthReport {
    pub runs: usize,
    pub paths_found: usize,
    /// Region ids moved into the forbidden set, in removal order.
    pub regions_removed: Vec<usize>,
    pub reconnections: usize,
    pub iterations: usize,
}

struct RunState<'a> {
    inputs: &'a PlanningInputs<'a>,
    params: &'a PlannerParams,
    goal: &'a GoalRegion,
    goal_point: usize,
    protected: &'a BTreeSet<usize>,
}

/// Grows the hypothesis graph and costs its vertices.
pub fn grow_hypothesis_graph(
    inputs: &PlanningInputs,
    start: &Pose6D,
    goal: &GoalRegion,
    params: &PlannerParams,
    seed: u64,
) -> Result<(HypothesisGraph, GrowthReport)> {
    let cloud = inputs.cloud;
    let root = attach(cloud, start, 0.0, inputs.terrain).ok_or(Error::StartUnprojectable)?;
    let goal_pos = project_to_surface(cloud, &goal.center, inputs.terrain)
        .map(|c| c.pose.position())
        .unwrap_or_else(|| goal.center.position());
    let (goal_point, _) = cloud
        .nearest(&goal_pos)
        .ok_or_else(|| Error::InvalidInput("empty cloud".into()))?;
    let k = inputs.terrain.k;
    let mut protected = inputs.regions.regions_of(&cloud.knn(&root.pose.position(), k));
    protected.extend(inputs.regions.regions_of(&cloud.knn(&goal_pos, k)));

    let mut graph = HypothesisGraph::with_root(root.clone());
    let mut report = GrowthReport::default();
    let state = RunState {
        inputs,
        params,
        goal,
        goal_point,
        protected: &protected,
    };
    for run in 0..=params.max_restarts {
        report.runs += 1;
        let clean = run_once(&state, &root, &mut graph, &mut report, seed, run as u64);
        if !clean {
            break;
        }
    }
    graph.recost(&inputs.cost_context())?;
    Ok((graph, report))
}

/// One tree from the root. Returns true when it ended with a path that
/// crosses no removable region.
fn run_once(
    st: &RunState,
    root: &crate::terrain::TrajectoryNode,
    graph: &mut HypothesisGraph,
    report: &mut GrowthReport,
    seed: u64,
    run: u64,
) -> bool {
    let inputs = st.inputs;
    let cloud = inputs.cloud;
    let mut rng = stream(seed, "rrt-run", run);
    let mut forbidden: Vec<bool> = if inputs.semantic {
        inputs
            .partition
            .labels
            .iter()
            .map(|&l| l == SafetyLabel::Unsafe)
            .collect()
    } else {
        vec![false; cloud.len()]
    };
    let mut pool: Vec<usize> = (0..cloud.len()).filter(|&i| !forbidden[i]).collect();
    if pool.is_empty() {
        return false;
    }
    let mut tree = RrtTree::new(root.clone(), st.params.heading_weight);
    let mut orphans: Vec<usize> = Vec::new();
    // tree index -> graph vertex for this run
    let mut in_graph: HashMap<usize, usize> = HashMap::from([(0, graph.root)]);

    for _ in 0..st.params.budget {
        report.iterations += 1;
        let target_idx = if rng.random_bool(st.params.goal_bias) {
            st.goal_point
        } else {
            pool[rng.random_range(0..pool.len())]
        };
        let target = cloud.position(target_idx);
        let Some(near) = tree.nearest_active(&target) else {
            return false;
        };
        let free = |n: &crate::terrain::TrajectoryNode| n.support.iter().all(|&i| !forbidden[i]);
        let Some(new) = tree.expand_toward(near, &target, cloud, inputs.terrain, inputs.primitives, free)
        else {
            continue;
        };
        let mut fresh = vec![new];
        if let Some(o) = try_reconnect(st, &mut tree, &orphans, new, &forbidden) {
            report.reconnections += 1;
            orphans.retain(|&x| x != o);
            fresh.extend(reactivate(&mut tree, o, &forbidden, &mut orphans));
        }
        let Some(&goal_node) = fresh
            .iter()
            .find(|&&i| st.goal.contains(&tree.nodes[i].node.pose.position()))
        else {
            continue;
        };

        let path = tree.path_to_root(goal_node);
        add_path(graph, &tree, &path, &mut in_graph, st.goal);
        report.paths_found += 1;
        if !inputs.semantic {
            return true;
        }
        let supports = path.iter().map(|&i| tree.nodes[i].node.support.as_slice());
        let candidates: Vec<usize> = regions_traversed(supports, inputs.regions)
            .into_iter()
            .filter(|r| !st.protected.contains(r))
            .collect();
        // largest region, lower id on ties
        let Some(removed) = candidates
            .iter()
            .copied()
            .max_by(|&a, &b| {
                inputs.regions.regions[a]
                    .len()
                    .cmp(&inputs.regions.regions[b].len())
                    .then(b.cmp(&a))
            })
        else {
            return true;
        };
        report.regions_removed.push(removed);
        for &i in &inputs.regions.regions[removed].point_indices {
            forbidden[i] = true;
        }
        pool.retain(|&i| !forbidden[i]);
        if pool.is_empty() {
            return false;
        }
        remove_forbidden(&mut tree, &forbidden, &mut orphans);
    }
    false
}

fn add_path(
    graph: &mut HypothesisGraph,
    tree: &RrtTree,
    path: &[usize],
    in_graph: &mut HashMap<usize, usize>,
    goal: &GoalRegion,
) {
    let mut prev = graph.root;
    for &t in &path[1..] {
        let v = *in_graph.entry(t).or_insert_with(|| {
            let node = tree.nodes[t].node.clone();
            let is_goal = goal.contains(&node.pose.position());
            graph.add_vertex(node, is_goal)
        });
        let prim = tree.nodes[t].primitive.expect("non-root nodes have a segment");
        graph.add_arc(prev, v, prim);
        prev = v;
    }
}

/// Deletes active nodes whose support touches `forbidden`; their surviving
/// descendants are cut off and remembered as orphans.
fn remove_forbidden(tree: &mut RrtTree, forbidden: &[bool], orphans: &mut Vec<usize>) {
    let touched: Vec<usize> = (1..tree.len())
        .filter(|&i| {
            !tree.nodes[i].deleted && tree.nodes[i].node.support.iter().any(|&p| forbidden[p])
        })
        .collect();
    for &i in &touched {
        tree.nodes[i].deleted = true;
        tree.nodes[i].active = false;
    }
    for &i in &touched {
        for c in tree.nodes[i].children.clone() {
            if !tree.nodes[c].deleted {
                for s in tree.subtree(c) {
                    tree.nodes[s].active = false;
                }
                if !orphans.contains(&c) {
                    orphans.push(c);
                }
            }
        }
    }
    orphans.retain(|&o| !tree.nodes[o].deleted);
    orphans.sort_unstable();
}

/// Re-activates the subtree under `o`, stopping at deleted nodes whose
/// children become orphans in turn. Returns the re-activated nodes.
fn reactivate(tree: &mut RrtTree, o: usize, forbidden: &[bool], orphans: &mut Vec<usize>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![o];
    while let Some(i) = stack.pop() {
        let blocked = tree.nodes[i].deleted || tree.nodes[i].node.support.iter().any(|&p| forbidden[p]);
        if blocked {
            tree.nodes[i].deleted = true;
            tree.nodes[i].active = false;
            for &c in &tree.nodes[i].children {
                if !tree.nodes[c].deleted && !orphans.contains(&c) {
                    orphans.push(c);
                }
            }
            continue;
        }
        tree.nodes[i].active = true;
        out.push(i);
        stack.extend(tree.nodes[i].children.iter().rev().copied());
    }
    orphans.retain(|x| *x != o);
    orphans.sort_unstable();
    out.sort_unstable();
    out
}

/// Tries an ad-hoc segment from `new` to the closest orphan within reach.
fn try_reconnect(
    st: &RunState,
    tree: &mut RrtTree,
    orphans: &[usize],
    new: usize,
    forbidden: &[bool],
) -> Option<usize> {
    let inputs = st.inputs;
    let base = tree.nodes[new].node.clone();
    let mut near: Vec<(f64, usize)> = orphans
        .iter()
        .map(|&o| ((tree.nodes[o].node.pose.position() - base.pose.position()).norm(), o))
        .filter(|(d, _)| *d <= st.params.connect_radius)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, o) in near {
        let target = &tree.nodes[o].node;
        if target.support.iter().any(|&p| forbidden[p]) {
            continue;
        }
        let local = base.pose.inverse_transform_point(&target.pose.position());
        let heading = base.pose.rotation.transpose() * target.pose.x_axis();
        let start = PlanarState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            kappa: base.kappa,
        };
        let goal = PlanarState {
            x: local.x,
            y: local.y,
            theta: heading.y.atan2(heading.x),
            kappa: target.kappa,
        };
        let Some(prim) = connect_states(&start, &goal, inputs.primitives.kappa_max) else {
            continue;
        };
        let grounded = (1..8).all(|k| {
            let mut part = prim;
            part.length = prim.length * k as f64 / 8.0;
            integrate_with_steps(&start, &part, f64::INFINITY, 25)
                .ok()
                .and_then(|s| {
                    let p = base.pose.transform_point(&Vector3::new(s.x, s.y, 0.0));
                    inputs.cloud.nearest(&p)
                })
                .is_some_and(|(_, gap)| gap <= inputs.terrain.max_support_gap)
        });
        if !grounded {
            continue;
        }
        tree.reattach(o, new, prim);
        return Some(o);
    }
    None
}
