//! Built-in synthetic scenes with reference start and goal poses.

use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::ClassCatalog;
use crate::error::{Error, Result};
use crate::geometry::Pose6D;
use crate::sensor::GroundTruthScene;

pub const GRASS: usize = 0;
pub const GRAVEL: usize = 1;
pub const MUD: usize = 2;
pub const WATER: usize = 3;

/// grass and gravel are safe, mud and water unsafe.
pub fn default_catalog() -> ClassCatalog {
    ClassCatalog::new(
        ["grass", "gravel", "mud", "water"].map(String::from).to_vec(),
        &[GRASS, GRAVEL],
    )
    .expect("static catalog is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    FlatCorridor,
    TwoBridges,
    AnnulusTrap,
    InclinedField,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [
        SceneKind::FlatCorridor,
        SceneKind::TwoBridges,
        SceneKind::AnnulusTrap,
        SceneKind::InclinedField,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SceneKind::FlatCorridor => "flat-corridor",
            SceneKind::TwoBridges => "two-bridges",
            SceneKind::AnnulusTrap => "annulus-trap",
            SceneKind::InclinedField => "inclined-field",
        }
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scene '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Grid spacing of the generated points.
    pub resolution: f64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind) -> Self {
        Self {
            kind,
            resolution: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: GroundTruthScene,
    pub start: Pose6D,
    pub goal: Pose6D,
}

fn grid(
    res: f64,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    mut f: impl FnMut(f64, f64) -> Option<(f64, usize)>,
) -> (Vec<Vector3<f64>>, Vec<usize>) {
    let nx = ((x1 - x0) / res).round() as usize;
    let ny = ((y1 - y0) / res).round() as usize;
    let mut pts = Vec::new();
    let mut cls = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            let (x, y) = (x0 + i as f64 * res, y0 + j as f64 * res);
            if let Some((z, c)) = f(x, y) {
                pts.push(Vector3::new(x, y, z));
                cls.push(c);
            }
        }
    }
    (pts, cls)
}

fn facing(sx: f64, sy: f64, gx: f64, gy: f64, z: f64) -> (Pose6D, Pose6D) {
    let yaw = (gy - sy).atan2(gx - sx);
    (Pose6D::planar(sx, sy, z, yaw), Pose6D::planar(gx, gy, z, yaw))
}

pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene> {
    let r = spec.resolution;
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::InvalidParameter("scene resolution must lie in (0, 0.5]".into()));
    }
    let eps = 1e-9;
    let ((pts, cls), (start, goal)) = match spec.kind {
        SceneKind::FlatCorridor => (
            grid(r, (0.0, 6.0), (0.0, 2.0), |_, _| Some((0.0, GRASS))),
            facing(0.5, 1.0, 5.5, 1.0, 0.0),
        ),
        SceneKind::TwoBridges => (
            // near bank, river gap spanned by a marsh bridge (straight,
            // unsafe) and a gravel bridge (detour), far bank with a mud patch by the
            // goal and a pond on the near bank
            grid(r, (0.0, 8.5), (0.0, 7.0), |x, y| {
                let river = x > 3.5 + eps && x < 5.5 - eps;
                let class = if river {
                    if (3.0 - eps..=4.0 + eps).contains(&y) {
                        // marsh: mud with grass tufts
                        let cell = (x / 0.2 + eps).floor() as i64 + (y / 0.2 + eps).floor() as i64;
                        if cell.rem_euclid(2) == 0 { MUD } else { GRASS }
                    } else if (5.4 - eps..=6.6 + eps).contains(&y) {
                        GRAVEL
                    } else {
                        return None;
                    }
                } else if (x - 8.0).hypot(y - 2.6) <= 0.9 + eps {
                    MUD
                } else if (2.0..=3.0).contains(&x) && (0.2..=1.0).contains(&y) {
                    WATER
                } else {
                    GRASS
                };
                Some((0.0, class))
            }),
            facing(1.0, 3.5, 7.5, 3.5, 0.0),
        ),
        SceneKind::AnnulusTrap => (
            grid(r, (0.0, 6.0), (0.0, 6.0), |x, y| {
                let d = (x - 2.0).hypot(y - 3.0);
                let class = if (0.6 - eps..=1.2 + eps).contains(&d) { MUD } else { GRASS };
                Some((0.0, class))
            }),
            facing(2.0, 3.0, 5.0, 3.0, 0.0),
        ),
        SceneKind::InclinedField => {
            let slope = 0.15;
            let (pts, cls) = grid(r, (0.0, 6.0), (0.0, 3.0), |x, y| {
                let class = if (1.2..=1.8).contains(&y) { GRAVEL } else { GRASS };
                Some((slope * x, class))
            });
            let (s, g) = facing(0.5, 1.5, 5.5, 1.5, 0.0);
            let lift = |p: Pose6D| {
                let q = p.position();
                Pose6D::planar(q.x, q.y, slope * q.x, p.heading())
            };
            ((pts, cls), (lift(s), lift(g)))
        }
    };
    Ok(GeneratedScene {
        scene: GroundTruthScene::new(pts, cls, default_catalog())?,
        start,
        goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_satisfy_invariants() {
        for kind in SceneKind::ALL {
            let g = generate(&SceneSpec::new(kind)).unwrap();
            assert!(g.scene.len() > 500, "{kind:?}");
            assert_close!(g.scene.resolution, 0.1, 1e-9);
            assert!(g.scene.boundary_distance.iter().all(|&d| d >= 0.0));
            assert_eq!(kind.as_str().parse::<SceneKind>().unwrap(), kind);
        }
    }

    #[test]
    fn two_bridges_layout() {
        let g = generate(&SceneSpec::new(SceneKind::TwoBridges)).unwrap();
        let s = &g.scene;
        let in_river: Vec<usize> = (0..s.len())
            .filter(|&i| s.positions[i].x > 3.55 && s.positions[i].x < 5.45)
            .collect();
        let marsh: Vec<usize> = in_river.iter().copied().filter(|&i| s.positions[i].y < 4.5).collect();
        let bridge: Vec<usize> = in_river.iter().copied().filter(|&i| s.positions[i].y >= 4.5).collect();
        let mud = marsh.iter().filter(|&&i| s.classes[i] == MUD).count();
        assert!(mud * 3 > marsh.len() && mud < marsh.len());
        assert!(marsh.iter().all(|&i| s.classes[i] == MUD || s.classes[i] == GRASS));
        assert!(!bridge.is_empty() && bridge.iter().all(|&i| s.classes[i] == GRAVEL));
        assert!(s.classes.contains(&WATER));
    }
}
