//! Next-best-view candidates, visibility and reward.

mod render;

use std::io::Write;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use render::{render_points, vertex_visibility, VisibilityImage};

use crate::cloud::{SafetyLabel, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::geometry::{CameraMount, Intrinsics, Pose6D};
use crate::planner::{HypothesisGraph, RrtTree};
use crate::rng::stream;
use crate::terrain::{attach, PrimitiveParams, TraversabilityParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbvWeights {
    pub beta_d: f64,
    pub beta_gamma: f64,
    pub beta_vis: f64,
    pub beta_q: f64,
    pub alpha_i: f64,
    pub alpha_sigma: f64,
}

impl Default for NbvWeights {
    fn default() -> Self {
        Self {
            beta_d: 0.4,
            beta_gamma: 0.05,
            beta_vis: 0.25,
            beta_q: 0.3,
            alpha_i: 0.5,
            alpha_sigma: 0.5,
        }
    }
}

impl NbvWeights {
    pub fn validate(&self) -> Result<()> {
        let betas = [self.beta_d, self.beta_gamma, self.beta_vis, self.beta_q];
        let alphas = [self.alpha_i, self.alpha_sigma];
        if betas.iter().chain(&alphas).any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("NBV weights must be >= 0".into()));
        }
        if (betas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("beta weights must sum to 1".into()));
        }
        if (alphas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("alpha weights must sum to 1".into()));
        }
        Ok(())
    }

    /// Weights used by `selector`; `None` for random selection.
    pub fn for_selector(&self, selector: Selector) -> Option<Self> {
        match selector {
            Selector::Full => Some(*self),
            Selector::Random => None,
            Selector::GeometryOnly => {
                let s = self.beta_d + self.beta_gamma + self.beta_vis;
                let mut w = *self;
                w.beta_q = 0.0;
                if s > 0.0 {
                    w.beta_d /= s;
                    w.beta_gamma /= s;
                    w.beta_vis /= s;
                } else {
                    w.beta_d = 1.0;
                }
                Some(w)
            }
            Selector::UncertaintyOnly => Some(Self {
                beta_d: 0.0,
                beta_gamma: 0.0,
                beta_vis: 0.0,
                beta_q: 1.0,
                ..*self
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Selector {
    Full,
    Random,
    GeometryOnly,
    UncertaintyOnly,
}

impl Selector {
    pub const ALL: [Selector; 4] = [
        Selector::Full,
        Selector::Random,
        Selector::GeometryOnly,
        Selector::UncertaintyOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Selector::Full => "full",
            Selector::Random => "random",
            Selector::GeometryOnly => "geometry",
            Selector::UncertaintyOnly => "uncertainty",
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown selector '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbvParams {
    pub weights: NbvWeights,
    /// A vertex is visible when its support covers more pixels than this.
    pub pixel_threshold: u64,
    pub image_width: usize,
    pub image_height: usize,
    pub hfov: f64,
    pub mount: CameraMount,
    /// Candidates kept from the candidate tree.
    pub candidates: usize,
    /// Candidate tree radius around the start.
    pub radius: f64,
    pub tree_budget: usize,
    /// Footprint width for the straight return corridor of fixed
    /// candidate lists.
    pub footprint: f64,
}

impl Default for NbvParams {
    fn default() -> Self {
        Self {
            weights: NbvWeights::default(),
            pixel_threshold: 10,
            image_width: 256,
            image_height: 256,
            hfov: std::f64::consts::FRAC_PI_2,
            mount: CameraMount::default(),
            candidates: 12,
            radius: 3.0,
            tree_budget: 300,
            footprint: 0.6,
        }
    }
}

impl NbvParams {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidParameter("image size must be positive".into()));
        }
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(Error::InvalidParameter("hfov must lie in (0, pi)".into()));
        }
        if self.candidates == 0 || !(self.radius > 0.0) || !(self.footprint > 0.0) {
            return Err(Error::InvalidParameter(
                "candidate count, radius and footprint must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.image_width, self.image_height, self.hfov)
    }
}

/// Renders the cloud from a camera pose with splats of half the cloud
/// resolution.
pub fn render_visibility(
    cloud: &SemanticPointCloud,
    camera: &Pose6D,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> VisibilityImage {
    render_points(cloud.positions(), cloud.resolution() / 2.0, camera, k, width, height)
}

/// Mean over the support of the per-point summed class uncertainty.
pub fn vertex_uncertainty(support: &[usize], cloud: &SemanticPointCloud) -> f64 {
    if support.is_empty() {
        return 0.0;
    }
    support.iter().map(|&i| cloud.uncertainty_sum(i)).sum::<f64>() / support.len() as f64
}

pub fn info_gain(i_norm: f64, sigma_norm: f64, weights: &NbvWeights) -> f64 {
    weights.alpha_i * i_norm + weights.alpha_sigma * sigma_norm
}

/// Min-max normalisation; a constant input maps to 1.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Raw, pre-normalisation reward inputs of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTerms {
    pub visible: Vec<usize>,
    pub mean_distance: f64,
    pub mean_neg_cos: f64,
    /// Visibility of each entry of `visible`.
    pub pixels: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbvCandidate {
    /// Robot pose.
    pub pose: Pose6D,
    /// Visible vertices (graph ids).
    pub visible: Vec<usize>,
    pub d: f64,
    pub gamma: f64,
    pub n_vis: f64,
    pub q_bar: f64,
    pub j: f64,
}

/// Visible vertices and raw geometry terms for one candidate.
pub fn raw_terms(
    cloud: &SemanticPointCloud,
    graph: &HypothesisGraph,
    v_nbv: &[usize],
    candidate: &Pose6D,
    start: &Vector3<f64>,
    params: &NbvParams,
) -> RawTerms {
    let camera = params.mount.camera_pose(candidate);
    let image = render_visibility(cloud, &camera, &params.intrinsics(), params.image_width, params.image_height);
    let mut visible = Vec::new();
    let mut pixels = Vec::new();
    let mut dist = 0.0;
    let mut neg_cos = 0.0;
    let c = candidate.position();
    for &v in v_nbv {
        let (i, vis) = vertex_visibility(&graph.vertices[v].node.support, &image, params.pixel_threshold);
        if !vis {
            continue;
        }
        let p = graph.vertices[v].node.pose.position();
        visible.push(v);
        pixels.push(i);
        dist += (p - c).norm();
        let (a, b) = (p - start, p - c);
        let denom = a.norm() * b.norm();
        neg_cos += if denom > 1e-12 { -a.dot(&b) / denom } else { 0.0 };
    }
    let n = visible.len().max(1) as f64;
    RawTerms {
        visible,
        mean_distance: dist / n,
        mean_neg_cos: neg_cos / n,
        pixels,
    }
}

/// Weighted reward of every candidate. Terms are min-max normalised
/// over candidates that see at least one vertex; the others score 0.
pub fn score_candidates(
    raws: &[RawTerms],
    poses: &[Pose6D],
    cloud: &SemanticPointCloud,
    graph: &HypothesisGraph,
    v_nbv: &[usize],
    weights: &NbvWeights,
) -> Vec<NbvCandidate> {
    // vertex uncertainty normalised over V_NBV, pixel counts over all
    // visible (vertex, candidate) pairs
    let sigmas: Vec<f64> = v_nbv
        .iter()
        .map(|&v| vertex_uncertainty(&graph.vertices[v].node.support, cloud))
        .collect();
    let sigma_norm = min_max(&sigmas);
    let all_pixels: Vec<f64> = raws.iter().flat_map(|r| r.pixels.iter().map(|&p| p as f64)).collect();
    let (plo, phi) = all_pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let norm_px = |p: u64| if phi > plo { (p as f64 - plo) / (phi - plo) } else { 1.0 };

    let seen: Vec<usize> = (0..raws.len()).filter(|&j| !raws[j].visible.is_empty()).collect();
    let q_bars: Vec<f64> = seen
        .iter()
        .map(|&j| {
            let r = &raws[j];
            r.visible
                .iter()
                .zip(&r.pixels)
                .map(|(v, &px)| {
                    let k = v_nbv.binary_search(v).expect("visible vertices come from V_NBV");
                    info_gain(norm_px(px), sigma_norm[k], weights)
                })
                .sum::<f64>()
                / r.visible.len() as f64
        })
        .collect();
    let raw_d: Vec<f64> = seen.iter().map(|&j| raws[j].mean_distance).collect();
    let dist = min_max(&raw_d);
    let degenerate_d = raw_d.iter().all(|&x| x == raw_d[0]);
    let gamma = min_max(&seen.iter().map(|&j| raws[j].mean_neg_cos).collect::<Vec<_>>());
    let nvis = min_max(&seen.iter().map(|&j| raws[j].visible.len() as f64).collect::<Vec<_>>());
    let qn = min_max(&q_bars);

    let mut out: Vec<NbvCandidate> = poses
        .iter()
        .zip(raws)
        .map(|(pose, r)| NbvCandidate {
            pose: *pose,
            visible: r.visible.clone(),
            d: 0.0,
            gamma: 0.0,
            n_vis: 0.0,
            q_bar: 0.0,
            j: 0.0,
        })
        .collect();
    for (k, &j) in seen.iter().enumerate() {
        let c = &mut out[j];
        c.d = if degenerate_d { 1.0 } else { 1.0 - dist[k] };
        c.gamma = gamma[k];
        c.n_vis = nvis[k];
        c.q_bar = qn[k];
        c.j = weighted_reward(c.d, c.gamma, c.n_vis, c.q_bar, weights);
    }
    out
}

pub fn weighted_reward(d: f64, gamma: f64, n_vis: f64, q_bar: f64, w: &NbvWeights) -> f64 {
    w.beta_d * d + w.beta_gamma * gamma + w.beta_vis * n_vis + w.beta_q * q_bar
}

/// Scores candidates in parallel; the result order follows `poses`.
pub fn evaluate_candidates(
    cloud: &SemanticPointCloud,
    graph: &HypothesisGraph,
    v_nbv: &[usize],
    poses: &[Pose6D],
    start: &Pose6D,
    params: &NbvParams,
    weights: &NbvWeights,
) -> Vec<NbvCandidate> {
    let mut v_nbv = v_nbv.to_vec();
    v_nbv.sort_unstable();
    v_nbv.dedup();
    let s = start.position();
    let raws: Vec<RawTerms> = poses
        .par_iter()
        .map(|p| raw_terms(cloud, graph, &v_nbv, p, &s, params))
        .collect();
    score_candidates(&raws, poses, cloud, graph, &v_nbv, weights)
}

/// Index of the best qualifying candidate; ties go to the lower index.
pub fn select_best(candidates: &[NbvCandidate], qualifies: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !qualifies[i] {
            continue;
        }
        if best.is_none_or(|b| c.j > candidates[b].j) {
            best = Some(i);
        }
    }
    best
}

/// Selection under any selector. `seed` is only used by random selection.
pub fn select_nbv(
    candidates: &[NbvCandidate],
    qualifies: &[bool],
    selector: Selector,
    seed: u64,
) -> Option<usize> {
    match selector {
        Selector::Random => {
            let pool: Vec<usize> = (0..candidates.len()).filter(|&i| qualifies[i]).collect();
            if pool.is_empty() {
                return None;
            }
            let mut rng = stream(seed, "nbv-random", 0);
            Some(pool[rng.random_range(0..pool.len())])
        }
        _ => select_best(candidates, qualifies),
    }
}

/// Candidate view poses from a Safe-only tree grown within `radius` of the
/// start, oriented toward `goal`. Unobserved points within `relax_radius`
/// of the start count as safe. Returns an empty list when the start
/// cannot stand on safe ground.
#[allow(clippy::too_many_arguments)]
pub fn generate_candidates(
    cloud: &SemanticPointCloud,
    partition: &SafetyPartition,
    start: &Pose6D,
    goal: &Vector3<f64>,
    params: &NbvParams,
    terrain: &TraversabilityParams,
    primitives: &PrimitiveParams,
    relax_radius: f64,
    seed: u64,
) -> Vec<Pose6D> {
    let Some(root) = attach(cloud, start, 0.0, terrain) else {
        return Vec::new();
    };
    let s = root.pose.position();
    let horiz = |p: &Vector3<f64>| (p.x - s.x).hypot(p.y - s.y);
    // ground never seen near the start (under and behind the robot) is
    // walkable; everything else must be Safe
    let walkable = |i: usize| match partition.label(i) {
        SafetyLabel::Safe => true,
        SafetyLabel::Unsafe => false,
        SafetyLabel::Unclear => cloud.measurement_count(i) == 0 && horiz(&cloud.position(i)) <= relax_radius,
    };
    let pool: Vec<usize> = (0..cloud.len())
        .filter(|&i| partition.label(i) == SafetyLabel::Safe && horiz(&cloud.position(i)) <= params.radius)
        .collect();
    if pool.is_empty() || !root.support.iter().all(|&i| walkable(i)) {
        return Vec::new();
    }
    let mut tree = RrtTree::new(root, 0.5);
    let mut rng = stream(seed, "nbv-tree", 0);
    let accept = |n: &crate::terrain::TrajectoryNode| {
        horiz(&n.pose.position()) <= params.radius && n.support.iter().all(|&i| walkable(i))
    };
    for _ in 0..params.tree_budget {
        let target = cloud.position(pool[rng.random_range(0..pool.len())]);
        if let Some(near) = tree.nearest_active(&target) {
            tree.expand_toward(near, &target, cloud, terrain, primitives, accept);
        }
    }
    let n = tree.len();
    let picks: Vec<usize> = if n <= params.candidates {
        (0..n).collect()
    } else {
        (0..params.candidates).map(|i| i * n / params.candidates).collect()
    };
    picks
        .into_iter()
        .map(|i| face_toward(&tree.nodes[i].node.pose, goal))
        .collect()
}

/// Re-orients a terrain pose toward `target` about its surface normal.
pub fn face_toward(pose: &Pose6D, target: &Vector3<f64>) -> Pose6D {
    let p = pose.position();
    let dir = Vector3::new(target.x - p.x, target.y - p.y, 0.0);
    Pose6D::from_normal_and_heading(&pose.z_axis(), &dir, p).unwrap_or(*pose)
}

/// Straight return corridor check for fixed candidate lists: every cloud
/// point within half the footprint of the segment (horizontally) must be
/// Safe, and the segment must have ground under it.
pub fn corridor_is_safe(
    cloud: &SemanticPointCloud,
    partition: &SafetyPartition,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
    footprint: f64,
) -> bool {
    let half = footprint / 2.0;
    let step = (cloud.resolution().max(1e-3)) / 2.0;
    let len = (to - from).norm();
    let n = (len / step).ceil().max(1.0) as usize;
    for k in 0..=n {
        let p = from + (to - from) * (k as f64 / n as f64);
        let near = cloud.tree().within_radius(&p, half.max(step));
        if near.is_empty() {
            return false;
        }
        if near.iter().any(|&i| partition.label(i) != SafetyLabel::Safe) {
            return false;
        }
    }
    true
}

/// Diagnostics CSV:
/// `candidate,x,y,z,yaw,d,gamma,n_vis,q_bar,j,selected`.
pub fn write_diagnostics<W: Write>(
    w: &mut W,
    iteration: usize,
    candidates: &[NbvCandidate],
    selected: Option<usize>,
    header: bool,
) -> Result<()> {
    if header {
        writeln!(w, "iteration,candidate,x,y,z,yaw,d,gamma,n_vis,q_bar,j,selected")?;
    }
    for (i, c) in candidates.iter().enumerate() {
        let p = c.pose.position();
        writeln!(
            w,
            "{iteration},{i},{},{},{},{},{},{},{},{},{},{}",
            p.x,
            p.y,
            p.z,
            c.pose.heading(),
            c.d,
            c.gamma,
            c.n_vis,
            c.q_bar,
            c.j,
            u8::from(selected == Some(i))
        )?;
    }
    Ok(())
}
