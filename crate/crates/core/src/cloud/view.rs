//! Camera measurements and their fusion into the cloud.

use nalgebra::Vector3;

use super::SemanticPointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose6D};

/// A semantic image with depth. Pixels are stored row-major; class vectors
/// are contiguous per pixel. A depth that is not a positive finite number
/// marks the pixel invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMeasurement {
    pub intrinsics: Intrinsics,
    /// Camera optical frame to map.
    pub pose: Pose6D,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub depth: Vec<f64>,
    pub probs: Vec<f64>,
    pub uncerts: Vec<f64>,
}

impl ViewMeasurement {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        intrinsics: Intrinsics,
        pose: Pose6D,
        width: usize,
        height: usize,
        num_classes: usize,
        depth: Vec<f64>,
        probs: Vec<f64>,
        uncerts: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height;
        if depth.len() != n || probs.len() != n * num_classes || uncerts.len() != n * num_classes
        {
            return Err(Error::InvalidInput("view buffers do not match image size".into()));
        }
        let view = Self {
            intrinsics,
            pose,
            width,
            height,
            num_classes,
            depth,
            probs,
            uncerts,
        };
        for px in 0..n {
            if !view.is_valid(px) {
                continue;
            }
            let sum: f64 = view.pixel_probs(px).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "pixel {px} probabilities sum to {sum}"
                )));
            }
            if view.pixel_uncert(px).iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::InvalidInput(format!("pixel {px} has a negative std")));
            }
        }
        Ok(view)
    }

    pub fn is_valid(&self, px: usize) -> bool {
        let d = self.depth[px];
        d > 0.0 && d.is_finite()
    }

    pub fn pixel_probs(&self, px: usize) -> &[f64] {
        &self.probs[px * self.num_classes..(px + 1) * self.num_classes]
    }

    pub fn pixel_uncert(&self, px: usize) -> &[f64] {
        &self.uncerts[px * self.num_classes..(px + 1) * self.num_classes]
    }
}

/// Map-frame point seen at pixel `(u, v)` with the given depth, or `None`
/// for an invalid depth.
pub fn backproject_pixel(
    u: f64,
    v: f64,
    depth: f64,
    k: &Intrinsics,
    pose: &Pose6D,
) -> Option<Vector3<f64>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return None;
    }
    let ray = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    Some(pose.transform_point(&(ray * depth)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationReport {
    pub merged: usize,
    /// Valid pixels with no cloud point within the merge radius.
    pub discarded: usize,
    pub invalid: usize,
}

impl SemanticPointCloud {
    /// Merges every valid pixel into its nearest cloud point when that
    /// point lies within `merge_radius`.
    pub fn integrate_view(
        &mut self,
        view: &ViewMeasurement,
        merge_radius: f64,
    ) -> Result<IntegrationReport> {
        if view.num_classes != self.num_classes() {
            return Err(Error::InvalidInput(format!(
                "view has {} classes, cloud has {}",
                view.num_classes,
                self.num_classes()
            )));
        }
        let mut report = IntegrationReport::default();
        for row in 0..view.height {
            for col in 0..view.width {
                let px = row * view.width + col;
                let Some(m) = backproject_pixel(
                    col as f64,
                    row as f64,
                    view.depth[px],
                    &view.intrinsics,
                    &view.pose,
                ) else {
                    report.invalid += 1;
                    continue;
                };
                match self.nearest(&m) {
                    Some((i, d)) if d <= merge_radius => {
                        self.add_measurement(i, view.pixel_probs(px), view.pixel_uncert(px));
                        report.merged += 1;
                    }
                    _ => report.discarded += 1,
                }
            }
        }
        Ok(report)
    }
}
