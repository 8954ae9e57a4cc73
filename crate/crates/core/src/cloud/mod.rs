//! Semantic point cloud: positions with per-class probability and
//! uncertainty vectors, safety classification and view fusion.

mod fusion;
mod io;
mod safety;
mod view;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kdtree::{median_nn_distance, KdTree};

pub use fusion::{fuse_class_measurements, FusionMode, Measurement, SIGMA_FLOOR};
pub use io::{load_cloud, read_cloud, save_cloud, write_cloud, CLOUD_MAGIC};
pub use safety::{
    aggregate_safety, classify, classify_point, ClassCatalog, SafetyAggregate, SafetyLabel,
    SafetyParams, SafetyPartition,
};
pub use view::{backproject_pixel, IntegrationReport, ViewMeasurement};

/// Probability assigned to every class of a fresh point is `1 / C`.
/// Standard deviation of a fresh point, the largest possible for a
/// quantity confined to `[0, 1]`.
pub const INITIAL_SIGMA: f64 = 0.5;

/// Owned copy of one point's state.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPoint {
    pub position: Vector3<f64>,
    pub probs: Vec<f64>,
    pub uncert: Vec<f64>,
    pub measurement_count: u32,
}

#[derive(Debug, Clone)]
enum FusionState {
    /// Per point and class: Σσ⁻² and Σσ⁻²p, including the prior.
    Running { precision: Vec<f64>, weighted: Vec<f64> },
    /// Full measurement list per point, the prior first.
    History(Vec<Vec<Measurement>>),
}

/// Struct-of-arrays point cloud. Geometry and the spatial index are shared
/// between clones; semantic state is owned.
#[derive(Debug, Clone)]
pub struct SemanticPointCloud {
    positions: Arc<Vec<Vector3<f64>>>,
    tree: Arc<KdTree>,
    resolution: f64,
    num_classes: usize,
    mode: FusionMode,
    probs: Vec<f64>,
    uncert: Vec<f64>,
    counts: Vec<u32>,
    fusion: FusionState,
}

impl SemanticPointCloud {
    /// Fresh cloud: uniform probabilities and maximal uncertainty.
    pub fn new(positions: Vec<Vector3<f64>>, num_classes: usize, mode: FusionMode) -> Result<Self> {
        let n = positions.len();
        let probs = vec![1.0 / num_classes as f64; n * num_classes];
        let uncert = vec![INITIAL_SIGMA; n * num_classes];
        Self::from_parts(positions, num_classes, mode, probs, uncert, vec![0; n])
    }

    pub(crate) fn from_parts(
        positions: Vec<Vector3<f64>>,
        num_classes: usize,
        mode: FusionMode,
        probs: Vec<f64>,
        uncert: Vec<f64>,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("point cloud needs at least one point".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput("point cloud needs at least two classes".into()));
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        let n = positions.len();
        debug_assert_eq!(probs.len(), n * num_classes);
        debug_assert_eq!(uncert.len(), n * num_classes);
        let tree = KdTree::new(&positions);
        let resolution = median_nn_distance(&tree, &positions).unwrap_or(0.0);
        let fusion = match mode {
            FusionMode::MeasurementNormalized => {
                let mut precision = Vec::with_capacity(n * num_classes);
                let mut weighted = Vec::with_capacity(n * num_classes);
                for (&p, &s) in probs.iter().zip(&uncert) {
                    let w = fusion::floored(s).powi(-2);
                    precision.push(w);
                    weighted.push(w * p);
                }
                FusionState::Running {
                    precision,
                    weighted,
                }
            }
            FusionMode::LiteralPaper => FusionState::History(
                (0..n)
                    .map(|i| {
                        let r = i * num_classes..(i + 1) * num_classes;
                        vec![Measurement {
                            probs: probs[r.clone()].to_vec(),
                            uncert: uncert[r].to_vec(),
                        }]
                    })
                    .collect(),
            ),
        };
        Ok(Self {
            positions: Arc::new(positions),
            tree: Arc::new(tree),
            resolution,
            num_classes,
            mode,
            probs,
            uncert,
            counts,
            fusion,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn fusion_mode(&self) -> FusionMode {
        self.mode
    }

    /// Median nearest-neighbour distance; zero for a single point.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        self.positions[i]
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn probs(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn uncert(&self, i: usize) -> &[f64] {
        &self.uncert[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn measurement_count(&self, i: usize) -> u32 {
        self.counts[i]
    }

    pub fn point(&self, i: usize) -> SemanticPoint {
        SemanticPoint {
            position: self.positions[i],
            probs: self.probs(i).to_vec(),
            uncert: self.uncert(i).to_vec(),
            measurement_count: self.counts[i],
        }
    }

    /// Index of the most likely class, ties to the lower index.
    pub fn argmax_class(&self, i: usize) -> usize {
        let p = self.probs(i);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }

    /// Nearest point to `q`, ties to the lower index.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        self.tree.nearest(q)
    }

    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Vec<usize> {
        self.tree.knn(q, k).into_iter().map(|(i, _)| i).collect()
    }

    pub fn aggregate(&self, i: usize, catalog: &ClassCatalog) -> SafetyAggregate {
        aggregate_safety(self.probs(i), self.uncert(i), catalog)
    }

    pub fn classify(&self, i: usize, catalog: &ClassCatalog, params: &SafetyParams) -> SafetyLabel {
        classify(&self.aggregate(i, catalog), params)
    }

    /// Sum of the per-class standard deviations of point `i`.
    pub fn uncertainty_sum(&self, i: usize) -> f64 {
        self.uncert(i).iter().sum()
    }

    /// Adds one measurement to point `i` and refreshes its fused state.
    pub fn add_measurement(&mut self, i: usize, probs: &[f64], uncert: &[f64]) {
        let c = self.num_classes;
        debug_assert_eq!(probs.len(), c);
        let r = i * c..(i + 1) * c;
        match &mut self.fusion {
            FusionState::Running {
                precision,
                weighted,
            } => {
                for k in 0..c {
                    let w = fusion::floored(uncert[k]).powi(-2);
                    precision[r.start + k] += w;
                    weighted[r.start + k] += w * probs[k];
                }
                let p = &mut self.probs[r.clone()];
                for k in 0..c {
                    p[k] = weighted[r.start + k] / precision[r.start + k];
                }
                fusion::normalize(p);
                for k in 0..c {
                    self.uncert[r.start + k] = precision[r.start + k].sqrt().recip();
                }
            }
            FusionState::History(history) => {
                history[i].push(Measurement {
                    probs: probs.to_vec(),
                    uncert: uncert.to_vec(),
                });
                let (p, s) = fuse_class_measurements(&history[i], FusionMode::LiteralPaper)
                    .expect("history holds at least the prior");
                self.probs[r.clone()].copy_from_slice(&p);
                self.uncert[r].copy_from_slice(&s);
            }
        }
        self.counts[i] = self.counts[i].saturating_add(1);
    }

    pub fn partition(&self, catalog: &ClassCatalog, params: &SafetyParams) -> SafetyPartition {
        SafetyPartition {
            labels: (0..self.len())
                .map(|i| self.classify(i, catalog, params))
                .collect(),
        }
    }
}

/// Fresh cloud over `positions` in the default fusion mode.
pub fn init_cloud(positions: Vec<Vector3<f64>>, catalog: &ClassCatalog) -> Result<SemanticPointCloud> {
    SemanticPointCloud::new(positions, catalog.num_classes(), FusionMode::default())
}

pub fn partition_cloud(
    cloud: &SemanticPointCloud,
    catalog: &ClassCatalog,
    params: &SafetyParams,
) -> SafetyPartition {
    cloud.partition(catalog, params)
}
