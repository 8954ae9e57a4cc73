//! Rapidly-exploring random tree over terrain-attached poses.

use nalgebra::Vector3;

use crate::cloud::SemanticPointCloud;
use crate::geometry::wrap_angle;
use crate::terrain::{
    extend, integrate_primitive, MotionPrimitive, PlanarState, PrimitiveParams, TrajectoryNode,
    TraversabilityParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub node: TrajectoryNode,
    pub parent: Option<usize>,
    /// Segment from the parent.
    pub primitive: Option<MotionPrimitive>,
    pub children: Vec<usize>,
    /// Connected to the root and usable for expansion.
    pub active: bool,
    /// Removed for good (its support touches a forbidden region).
    pub deleted: bool,
}

#[derive(Debug, Clone)]
pub struct RrtTree {
    pub nodes: Vec<TreeNode>,
    pub heading_weight: f64,
}

impl RrtTree {
    pub fn new(root: TrajectoryNode, heading_weight: f64) -> Self {
        Self {
            nodes: vec![TreeNode {
                node: root,
                parent: None,
                primitive: None,
                children: Vec::new(),
                active: true,
                deleted: false,
            }],
            heading_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Distance used to pick the vertex to expand: Euclidean distance plus
    /// `heading_weight` metres per radian of heading change needed to face
    /// the target.
    pub fn metric(&self, node: &TrajectoryNode, target: &Vector3<f64>) -> f64 {
        let p = node.pose.position();
        let d = target - p;
        let turn = if d.x.hypot(d.y) > 1e-12 {
            wrap_angle(d.y.atan2(d.x) - node.pose.heading()).abs()
        } else {
            0.0
        };
        d.norm() + self.heading_weight * turn
    }

    pub fn nearest_active(&self, target: &Vector3<f64>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.nodes.iter().enumerate() {
            if !t.active {
                continue;
            }
            let d = self.metric(&t.node, target);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn add_child(&mut self, parent: usize, node: TrajectoryNode, primitive: MotionPrimitive) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            node,
            parent: Some(parent),
            primitive: Some(primitive),
            children: Vec::new(),
            active: true,
            deleted: false,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Tries the primitive library from `from`, closest planar endpoint to
    /// `target` first, and adds the first resulting node that `accept`
    /// allows.
    #[allow(clippy::too_many_arguments)]
    pub fn expand_toward(
        &mut self,
        from: usize,
        target: &Vector3<f64>,
        cloud: &SemanticPointCloud,
        terrain: &TraversabilityParams,
        primitives: &PrimitiveParams,
        accept: impl Fn(&TrajectoryNode) -> bool,
    ) -> Option<usize> {
        let base = &self.nodes[from].node;
        let start = PlanarState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            kappa: base.kappa,
        };
        let mut ranked: Vec<(f64, usize, MotionPrimitive)> = primitives
            .library(base.kappa)
            .into_iter()
            .enumerate()
            .filter_map(|(k, prim)| {
                let end = integrate_primitive(&start, &prim, primitives.kappa_max).ok()?;
                let p = base.pose.transform_point(&Vector3::new(end.x, end.y, 0.0));
                Some(((p - target).norm(), k, prim))
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, _, prim) in ranked {
            let base = &self.nodes[from].node;
            if let Some(node) = extend(base, &prim, cloud, terrain, primitives.kappa_max) {
                if accept(&node) {
                    return Some(self.add_child(from, node, prim));
                }
            }
        }
        None
    }

    /// Node indices from the root to `idx`.
    pub fn path_to_root(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// All nodes of the subtree under `idx`, `idx` first.
    pub fn subtree(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![idx];
        let mut k = 0;
        while k < out.len() {
            out.extend(self.nodes[out[k]].children.iter().copied());
            k += 1;
        }
        out
    }

    /// Moves `child` (with its subtree) under `parent`.
    pub fn reattach(&mut self, child: usize, parent: usize, primitive: MotionPrimitive) {
        if let Some(old) = self.nodes[child].parent {
            self.nodes[old].children.retain(|&c| c != child);
        }
        self.nodes[child].parent = Some(parent);
        self.nodes[child].primitive = Some(primitive);
        self.nodes[parent].children.push(child);
    }
}
