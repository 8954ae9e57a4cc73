//! Terrain-attached poses, static traversability and motion primitives.

use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::SemanticPointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose6D;

/// Tolerance of the curvature continuity check between segments.
pub const CURVATURE_TOLERANCE: f64 = 1e-9;

/// Integration steps per primitive.
pub const INTEGRATION_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversabilityParams {
    pub max_roll: f64,
    pub max_pitch: f64,
    pub max_residual: f64,
    /// Support set size.
    pub k: usize,
    /// A pose whose nearest cloud point is farther than this hangs over a
    /// gap and is rejected.
    pub max_support_gap: f64,
}

impl Default for TraversabilityParams {
    fn default() -> Self {
        Self {
            max_roll: 0.35,
            max_pitch: 0.35,
            max_residual: 0.05,
            k: 20,
            max_support_gap: 0.3,
        }
    }
}

impl TraversabilityParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.max_roll, self.max_pitch, self.max_residual, self.max_support_gap]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok || self.k < 3 {
            return Err(Error::InvalidParameter(
                "traversability bounds must be positive and k >= 3".into(),
            ));
        }
        Ok(())
    }
}

/// Least-squares plane through a set of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub centroid: Vector3<f64>,
    /// Unit normal with a positive z component.
    pub normal: Vector3<f64>,
    /// RMS distance of the points to the plane.
    pub residual: f64,
}

/// Fits a plane; `None` when the points do not span a plane or the plane
/// is vertical.
pub fn fit_plane(points: &[Vector3<f64>]) -> Option<PlaneFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= 1e-9 * largest {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.z.abs() < 1e-9 {
        return None;
    }
    if normal.z < 0.0 {
        normal = -normal;
    }
    let residual = (points
        .iter()
        .map(|p| (p - centroid).dot(&normal).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(PlaneFit {
        centroid,
        normal,
        residual,
    })
}

impl PlaneFit {
    /// Height of the plane above `(x, y)`.
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        let n = &self.normal;
        self.centroid.z - (n.x * (x - self.centroid.x) + n.y * (y - self.centroid.y)) / n.z
    }
}

/// A pose attached to the terrain with the points that support it.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceContact {
    pub pose: Pose6D,
    pub support: Vec<usize>,
    pub residual: f64,
}

/// Attaches `pose` to the surface below or above it.
pub fn project_to_surface(
    cloud: &SemanticPointCloud,
    pose: &Pose6D,
    params: &TraversabilityParams,
) -> Option<SurfaceContact> {
    project_with_fallback(cloud, pose, None, params)
}

fn project_with_fallback(
    cloud: &SemanticPointCloud,
    pose: &Pose6D,
    fallback_heading: Option<&Vector3<f64>>,
    params: &TraversabilityParams,
) -> Option<SurfaceContact> {
    let q = pose.position();
    let support = cloud.knn(&q, params.k);
    let pts: Vec<Vector3<f64>> = support.iter().map(|&i| cloud.position(i)).collect();
    let plane = fit_plane(&pts)?;
    let position = Vector3::new(q.x, q.y, plane.z_at(q.x, q.y));
    let pose = Pose6D::from_normal_and_heading(&plane.normal, &pose.x_axis(), position)
        .or_else(|| {
            fallback_heading.and_then(|h| Pose6D::from_normal_and_heading(&plane.normal, h, position))
        })?;
    // the support must actually lie under the robot
    let (_, gap) = cloud.nearest(&position)?;
    if gap > params.max_support_gap {
        return None;
    }
    let support = if (position - q).norm() > 1e-12 {
        cloud.knn(&position, params.k)
    } else {
        support
    };
    Some(SurfaceContact {
        pose,
        support,
        residual: plane.residual,
    })
}

/// Static traversability of a terrain-attached pose; zero at or beyond any
/// of the bounds.
pub fn traversability(pose: &Pose6D, residual: f64, params: &TraversabilityParams) -> f64 {
    let (roll, pitch, _) = pose.roll_pitch_yaw();
    let terms = [
        1.0 - roll.abs() / params.max_roll,
        1.0 - pitch.abs() / params.max_pitch,
        1.0 - residual / params.max_residual,
    ];
    if terms.iter().any(|t| *t <= 0.0) {
        return 0.0;
    }
    terms.iter().product::<f64>().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    fn sign(&self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }
}

/// Planar segment with curvature `κ(s) = a + b s + c s² + d s³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub coeffs: [f64; 4],
    pub length: f64,
    pub direction: Direction,
}

impl MotionPrimitive {
    pub fn curvature(&self, s: f64) -> f64 {
        let [a, b, c, d] = self.coeffs;
        a + s * (b + s * (c + s * d))
    }

    pub fn start_curvature(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn end_curvature(&self) -> f64 {
        self.curvature(self.length)
    }

    /// Largest `|κ(s)|` over `[0, L]`, from the endpoints and the interior
    /// stationary points of the cubic.
    pub fn max_abs_curvature(&self) -> f64 {
        let [_, b, c, d] = self.coeffs;
        let mut cands = vec![0.0, self.length];
        // κ'(s) = b + 2c s + 3d s²
        let (qa, qb, qc) = (3.0 * d, 2.0 * c, b);
        if qa.abs() > 1e-15 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let r = disc.sqrt();
                cands.push((-qb + r) / (2.0 * qa));
                cands.push((-qb - r) / (2.0 * qa));
            }
        } else if qb.abs() > 1e-15 {
            cands.push(-qc / qb);
        }
        cands
            .into_iter()
            .filter(|s| *s >= 0.0 && *s <= self.length)
            .map(|s| self.curvature(s).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, kappa_max: f64) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter("primitive length must be > 0".into()));
        }
        if self.max_abs_curvature() > kappa_max + CURVATURE_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "primitive curvature {} exceeds the bound {kappa_max}",
                self.max_abs_curvature()
            )));
        }
        Ok(())
    }

    /// Curvature ramping linearly from `k0` to `k1` over `length`.
    pub fn ramp(k0: f64, k1: f64, length: f64, direction: Direction) -> Self {
        Self {
            coeffs: [k0, (k1 - k0) / length, 0.0, 0.0],
            length,
            direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveParams {
    pub kappa_max: f64,
    pub length: f64,
    pub reverse: bool,
}

impl Default for PrimitiveParams {
    fn default() -> Self {
        Self {
            kappa_max: 1.0,
            length: 0.5,
            reverse: true,
        }
    }
}

impl PrimitiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_max > 0.0 && self.length > 0.0) {
            return Err(Error::InvalidParameter(
                "primitive kappa_max and length must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Expansion set for a node with curvature `k0`: five forward ramps to
    /// the curvature targets `{-κm, -κm/2, 0, κm/2, κm}` and two straightening
    /// reverse ramps of length `L` and `L/2`.
    pub fn library(&self, k0: f64) -> Vec<MotionPrimitive> {
        let km = self.kappa_max;
        let mut out: Vec<MotionPrimitive> = [-km, -km / 2.0, 0.0, km / 2.0, km]
            .into_iter()
            .map(|t| MotionPrimitive::ramp(k0, t, self.length, Direction::Forward))
            .collect();
        if self.reverse {
            for l in [self.length, self.length / 2.0] {
                out.push(MotionPrimitive::ramp(k0, 0.0, l, Direction::Reverse));
            }
        }
        out
    }
}

/// Position, heading and curvature in a plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
}

/// Integrates a primitive from `start` with a fixed-step RK4 scheme.
pub fn integrate_primitive(
    start: &PlanarState,
    primitive: &MotionPrimitive,
    kappa_max: f64,
) -> Result<PlanarState> {
    integrate_with_steps(start, primitive, kappa_max, INTEGRATION_STEPS)
}

pub fn integrate_with_steps(
    start: &PlanarState,
    primitive: &MotionPrimitive,
    kappa_max: f64,
    steps: usize,
) -> Result<PlanarState> {
    if (primitive.start_curvature() - start.kappa).abs() > CURVATURE_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "primitive starts at curvature {} but the state has {}",
            primitive.start_curvature(),
            start.kappa
        )));
    }
    primitive.validate(kappa_max)?;
    let sign = primitive.direction.sign();
    let h = primitive.length / steps as f64;
    let f = |s: f64, theta: f64| -> [f64; 3] {
        [sign * theta.cos(), sign * theta.sin(), sign * primitive.curvature(s)]
    };
    let (mut x, mut y, mut th) = (start.x, start.y, start.theta);
    for i in 0..steps {
        let s = i as f64 * h;
        let k1 = f(s, th);
        let k2 = f(s + h / 2.0, th + h / 2.0 * k1[2]);
        let k3 = f(s + h / 2.0, th + h / 2.0 * k2[2]);
        let k4 = f(s + h, th + h * k3[2]);
        x += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        th += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    }
    Ok(PlanarState {
        x,
        y,
        theta: th,
        kappa: primitive.end_curvature(),
    })
}

/// Forward cubic-curvature segment from `start` that ends at `goal`
/// (position, heading and curvature), found by Newton shooting on the
/// coefficients `b, c, d` and the length. `None` when the iteration does
/// not converge or the segment breaks the curvature bound.
pub fn connect_states(
    start: &PlanarState,
    goal: &PlanarState,
    kappa_max: f64,
) -> Option<MotionPrimitive> {
    let dist = ((goal.x - start.x).powi(2) + (goal.y - start.y).powi(2)).sqrt();
    if dist < 1e-9 {
        return None;
    }
    let make = |u: &[f64; 4]| MotionPrimitive {
        coeffs: [start.kappa, u[0], u[1], u[2]],
        length: u[3],
        direction: Direction::Forward,
    };
    let residual = |u: &[f64; 4]| -> Option<[f64; 4]> {
        if !(u[3] > 1e-6) {
            return None;
        }
        let e = integrate_with_steps(start, &make(u), f64::INFINITY, 50).ok()?;
        Some([
            e.x - goal.x,
            e.y - goal.y,
            crate::geometry::wrap_angle(e.theta - goal.theta),
            e.kappa - goal.kappa,
        ])
    };
    let norm = |r: &[f64; 4]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u = [0.0, 0.0, 0.0, dist];
    let mut r = residual(&u)?;
    for _ in 0..30 {
        if norm(&r) < 1e-10 {
            break;
        }
        let mut jac = nalgebra::Matrix4::zeros();
        for j in 0..4 {
            let step = 1e-7 * u[j].abs().max(1.0);
            let mut up = u;
            up[j] += step;
            let rp = residual(&up)?;
            for i in 0..4 {
                jac[(i, j)] = (rp[i] - r[i]) / step;
            }
        }
        let delta = jac.lu().solve(&nalgebra::Vector4::from(r))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = [
                u[0] - t * delta[0],
                u[1] - t * delta[1],
                u[2] - t * delta[2],
                u[3] - t * delta[3],
            ];
            if let Some(rc) = residual(&cand) {
                if norm(&rc) < norm(&r) {
                    u = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    if norm(&r) > 1e-8 || u[3] > 3.0 * dist {
        return None;
    }
    let prim = make(&u);
    prim.validate(kappa_max).ok()?;
    Some(prim)
}

/// A terrain-attached pose of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNode {
    pub pose: Pose6D,
    pub tau: f64,
    /// Curvature at this node, the start curvature of outgoing segments.
    pub kappa: f64,
    pub support: Vec<usize>,
}

/// Attaches a start pose to the terrain; `None` if it cannot stand there.
pub fn attach(
    cloud: &SemanticPointCloud,
    pose: &Pose6D,
    kappa: f64,
    params: &TraversabilityParams,
) -> Option<TrajectoryNode> {
    let contact = project_to_surface(cloud, pose, params)?;
    let tau = traversability(&contact.pose, contact.residual, params);
    (tau > 0.0).then_some(TrajectoryNode {
        pose: contact.pose,
        tau,
        kappa,
        support: contact.support,
    })
}

/// Follows `primitive` from `node` and attaches the endpoint to the terrain.
pub fn extend(
    node: &TrajectoryNode,
    primitive: &MotionPrimitive,
    cloud: &SemanticPointCloud,
    params: &TraversabilityParams,
    kappa_max: f64,
) -> Option<TrajectoryNode> {
    let start = PlanarState {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
        kappa: node.kappa,
    };
    let end = integrate_primitive(&start, primitive, kappa_max).ok()?;
    // intermediate points must have ground below them as well
    for frac in [0.25, 0.5, 0.75] {
        let mut partial = *primitive;
        partial.length = primitive.length * frac;
        let mid = integrate_with_steps(&start, &partial, f64::INFINITY, INTEGRATION_STEPS / 4).ok()?;
        let p = node.pose.transform_point(&Vector3::new(mid.x, mid.y, 0.0));
        let (_, gap) = cloud.nearest(&p)?;
        if gap > params.max_support_gap {
            return None;
        }
    }
    let position = node.pose.transform_point(&Vector3::new(end.x, end.y, 0.0));
    let heading = node.pose.rotation * Vector3::new(end.theta.cos(), end.theta.sin(), 0.0);
    let motion = position - node.pose.position();
    let guess = Pose6D::from_normal_and_heading(&node.pose.z_axis(), &heading, position)?;
    let contact = project_with_fallback(cloud, &guess, Some(&motion), params)?;
    let tau = traversability(&contact.pose, contact.residual, params);
    (tau > 0.0).then_some(TrajectoryNode {
        pose: contact.pose,
        tau,
        kappa: end.kappa,
        support: contact.support,
    })
}

/// CSV with header `node_index,x,y,z,roll,pitch,yaw,tau,kappa`.
pub fn write_path_csv<'a, W: Write>(
    w: &mut W,
    nodes: impl IntoIterator<Item = &'a TrajectoryNode>,
) -> Result<()> {
    writeln!(w, "node_index,x,y,z,roll,pitch,yaw,tau,kappa")?;
    for (i, n) in nodes.into_iter().enumerate() {
        let p = n.pose.position();
        let (r, pi, y) = n.pose.roll_pitch_yaw();
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{}",
            p.x, p.y, p.z, r, pi, y, n.tau, n.kappa
        )?;
    }
    Ok(())
}
