//! Point splatting into a depth buffer.
//!
//! Each point is drawn as a screen-aligned square whose world side length
//! is projected at the point's depth. A pixel (centre at integer
//! coordinates) belongs to a splat when its centre lies inside the
//! projected square; a splat too small to contain any pixel centre still
//! covers the pixel nearest its own centre. The nearest splat wins every
//! pixel, ties going to the lower point index.

use nalgebra::Vector3;

use crate::geometry::{Intrinsics, Pose6D};

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityImage {
    pub width: usize,
    pub height: usize,
    /// Winning point per pixel, row-major.
    pub owner: Vec<Option<usize>>,
    /// Depth of the winning splat; infinite where empty.
    pub depth: Vec<f64>,
    /// Pixels won per point.
    pub coverage: Vec<u32>,
}

impl VisibilityImage {
    pub fn covered_pixels(&self) -> usize {
        self.owner.iter().filter(|o| o.is_some()).count()
    }

    /// Summed coverage of a set of points.
    pub fn coverage_of(&self, points: &[usize]) -> u64 {
        points.iter().map(|&i| u64::from(self.coverage[i])).sum()
    }
}

/// Inclusive pixel span `[lo, hi]` of a splat along one image axis, before
/// clipping. `centre` is the projected centre, `half` the half side in
/// pixels.
pub(crate) fn splat_span(centre: f64, half: f64) -> (i64, i64) {
    let lo = (centre - half).ceil();
    let hi = (centre + half).floor();
    if lo > hi {
        let c = centre.round();
        (c as i64, c as i64)
    } else {
        (lo as i64, hi as i64)
    }
}

/// Renders `positions` seen from the camera `pose` (optical frame to map)
/// with splats of world side `side`.
pub fn render_points(
    positions: &[Vector3<f64>],
    side: f64,
    pose: &Pose6D,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> VisibilityImage {
    let n_px = width * height;
    let mut owner: Vec<Option<usize>> = vec![None; n_px];
    let mut depth = vec![f64::INFINITY; n_px];
    let mut coverage = vec![0u32; positions.len()];
    let half_world = side / 2.0;
    for (i, p) in positions.iter().enumerate() {
        let c = pose.inverse_transform_point(p);
        if !(c.z > 0.0) {
            continue;
        }
        let (u, v, z) = k.project(&c);
        if !(u.is_finite() && v.is_finite()) {
            continue;
        }
        let (c0, c1) = splat_span(u, k.fx * half_world / z);
        let (r0, r1) = splat_span(v, k.fy * half_world / z);
        let c0 = c0.max(0);
        let r0 = r0.max(0);
        let c1 = c1.min(width as i64 - 1);
        let r1 = r1.min(height as i64 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let px = row as usize * width + col as usize;
                if z < depth[px] {
                    if let Some(prev) = owner[px] {
                        coverage[prev] -= 1;
                    }
                    owner[px] = Some(i);
                    depth[px] = z;
                    coverage[i] += 1;
                }
            }
        }
    }
    VisibilityImage {
        width,
        height,
        owner,
        depth,
        coverage,
    }
}

/// Pixel coverage of a vertex's support and whether it exceeds
/// `pixel_threshold`.
pub fn vertex_visibility(support: &[usize], image: &VisibilityImage, pixel_threshold: u64) -> (u64, bool) {
    let i = image.coverage_of(support);
    (i, i > pixel_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> (Pose6D, Intrinsics) {
        (Pose6D::identity(), Intrinsics::from_fov(64, 64, 1.2))
    }

    #[test]
    fn point_behind_the_camera_is_invisible() {
        let (pose, k) = camera();
        let img = render_points(&[Vector3::new(0.0, 0.0, -1.0)], 0.05, &pose, &k, 64, 64);
        assert_eq!(img.coverage[0], 0);
        assert_eq!(img.covered_pixels(), 0);
    }

    #[test]
    fn nearer_square_hides_the_farther_one() {
        let (pose, k) = camera();
        let pts = [Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0)];
        let img = render_points(&pts, 0.05, &pose, &k, 64, 64);
        assert_eq!(img.coverage[0], 0);
        assert!(img.coverage[1] > 0);
        assert_eq!(img.coverage[1] as usize, img.covered_pixels());
    }

    #[test]
    fn tiny_splat_still_covers_its_pixel() {
        let (pose, k) = camera();
        let img = render_points(&[Vector3::new(0.0, 0.0, 2.0)], 1e-6, &pose, &k, 64, 64);
        assert_eq!(img.coverage[0], 1);
        let px = img.owner.iter().position(|o| o.is_some()).unwrap();
        assert_eq!(img.depth[px], 2.0);
    }

    #[test]
    fn threshold_is_strict() {
        let img = VisibilityImage {
            width: 1,
            height: 1,
            owner: vec![None],
            depth: vec![f64::INFINITY],
            coverage: vec![6, 4, 0],
        };
        assert_eq!(vertex_visibility(&[0, 1, 2], &img, 10), (10, false));
        assert_eq!(vertex_visibility(&[0, 1], &img, 9), (10, true));
        assert_eq!(vertex_visibility(&[2], &img, 0), (0, false));
    }
}
