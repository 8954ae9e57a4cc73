//! INI-style run configuration.
//!
//! Lines are `key = value`; a `[section]` header prefixes the keys that
//! follow with `section.`. Blank lines and lines starting with `#` or `;`
//! are ignored. Unknown and repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cloud::FusionMode;
use crate::error::{Error, Result};
use crate::geometry::Pose6D;
use crate::nbv::Selector;
use crate::pipeline::PipelineConfig;
use crate::scenes::{generate, GeneratedScene, SceneKind, SceneSpec};
use crate::sensor::GroundTruthScene;

/// Planar pose `x, y, z, yaw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose(pub [f64; 4]);

impl PlanarPose {
    pub fn pose(&self) -> Pose6D {
        let [x, y, z, yaw] = self.0;
        Pose6D::planar(x, y, z, yaw)
    }
}

impl FromStr for PlanarPose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("pose '{s}' is not four comma-separated numbers")))?;
        if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("pose '{s}' needs four finite numbers x,y,z,yaw")));
        }
        Ok(Self([v[0], v[1], v[2], v[3]]))
    }
}

impl std::fmt::Display for PlanarPose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [x, y, z, yaw] = self.0;
        write!(f, "{x},{y},{z},{yaw}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneKind,
    pub resolution: f64,
    /// Scene file replacing the built-in generator.
    pub scene_file: Option<PathBuf>,
    pub start: Option<PlanarPose>,
    pub goal: Option<PlanarPose>,
    pub out_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneKind::TwoBridges,
            resolution: 0.1,
            scene_file: None,
            start: None,
            goal: None,
            out_dir: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn show_pose(p: &Option<PlanarPose>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

type Setter = fn(&mut RunConfig, &str, &str) -> Result<()>;
type Getter = fn(&RunConfig) -> String;

macro_rules! plain_keys {
    ($( $key:literal => $($field:ident).+ ),* $(,)?) => {
        &[$(
            (
                $key,
                |c: &mut RunConfig, k: &str, v: &str| {
                    c.$($field).+ = parse(k, v)?;
                    Ok(())
                },
                |c: &RunConfig| c.$($field).+.to_string(),
            ),
        )*]
    };
}

const PLAIN: &[(&str, Setter, Getter)] = plain_keys! {
    "experiment.seed" => pipeline.seed,
    "experiment.trials" => pipeline.trials,
    "experiment.max_nbv" => pipeline.max_nbv,
    "experiment.ablation_nbv" => pipeline.ablation_nbv,
    "experiment.m" => pipeline.m,
    "experiment.n_unsafe" => pipeline.n_unsafe,
    "experiment.perturbation" => pipeline.perturbation,
    "experiment.initial_view" => pipeline.initial_view,
    "scene.resolution" => resolution,
    "safety.theta_s" => pipeline.safety.theta_s,
    "safety.theta_u" => pipeline.safety.theta_u,
    "safety.w_sigma" => pipeline.safety.w_sigma,
    "regions.eps_factor" => pipeline.regions.eps_factor,
    "regions.min_pts" => pipeline.regions.min_pts,
    "regions.stage2_eps_factor" => pipeline.regions.stage2_eps_factor,
    "regions.stage2_min_pts" => pipeline.regions.stage2_min_pts,
    "terrain.max_roll" => pipeline.terrain.max_roll,
    "terrain.max_pitch" => pipeline.terrain.max_pitch,
    "terrain.max_residual" => pipeline.terrain.max_residual,
    "terrain.k" => pipeline.terrain.k,
    "terrain.max_support_gap" => pipeline.terrain.max_support_gap,
    "primitives.kappa_max" => pipeline.primitives.kappa_max,
    "primitives.length" => pipeline.primitives.length,
    "primitives.reverse" => pipeline.primitives.reverse,
    "cost.phi_v" => pipeline.cost.phi_v,
    "cost.start_relax_radius" => pipeline.cost.start_relax_radius,
    "cost.relax_threshold" => pipeline.cost.relax_threshold,
    "planner.budget" => pipeline.planner.budget,
    "planner.goal_bias" => pipeline.planner.goal_bias,
    "planner.heading_weight" => pipeline.planner.heading_weight,
    "planner.max_restarts" => pipeline.planner.max_restarts,
    "planner.goal_radius" => pipeline.planner.goal_radius,
    "planner.connect_radius" => pipeline.planner.connect_radius,
    "nbv.beta_d" => pipeline.nbv.weights.beta_d,
    "nbv.beta_gamma" => pipeline.nbv.weights.beta_gamma,
    "nbv.beta_vis" => pipeline.nbv.weights.beta_vis,
    "nbv.beta_q" => pipeline.nbv.weights.beta_q,
    "nbv.alpha_i" => pipeline.nbv.weights.alpha_i,
    "nbv.alpha_sigma" => pipeline.nbv.weights.alpha_sigma,
    "nbv.pixel_threshold" => pipeline.nbv.pixel_threshold,
    "nbv.image_width" => pipeline.nbv.image_width,
    "nbv.image_height" => pipeline.nbv.image_height,
    "nbv.hfov" => pipeline.nbv.hfov,
    "nbv.camera_height" => pipeline.nbv.mount.height,
    "nbv.camera_pitch" => pipeline.nbv.mount.pitch_down,
    "nbv.candidates" => pipeline.nbv.candidates,
    "nbv.radius" => pipeline.nbv.radius,
    "nbv.tree_budget" => pipeline.nbv.tree_budget,
    "nbv.footprint" => pipeline.nbv.footprint,
    "nbv.merge_radius_factor" => pipeline.merge_radius_factor,
    "sensor.base_logit" => pipeline.noise.base_logit,
    "sensor.distance_coeff" => pipeline.noise.distance_coeff,
    "sensor.boundary_coeff" => pipeline.noise.boundary_coeff,
    "sensor.boundary_scale" => pipeline.noise.boundary_scale,
    "sensor.passes" => pipeline.noise.passes,
};

const SPECIAL: &[(&str, Setter, Getter)] = &[
    (
        "experiment.out",
        |c, _, v| {
            c.out_dir = opt_path(v);
            Ok(())
        },
        |c| show_path(&c.out_dir),
    ),
    (
        "experiment.selector",
        |c, k, v| {
            c.pipeline.selector = parse::<Selector>(k, v)?;
            Ok(())
        },
        |c| c.pipeline.selector.as_str().to_string(),
    ),
    (
        "experiment.fusion",
        |c, k, v| {
            c.pipeline.fusion = parse::<FusionMode>(k, v)?;
            Ok(())
        },
        |c| c.pipeline.fusion.as_str().to_string(),
    ),
    (
        "scene.name",
        |c, k, v| {
            c.scene = parse::<SceneKind>(k, v)?;
            Ok(())
        },
        |c| c.scene.as_str().to_string(),
    ),
    (
        "scene.file",
        |c, _, v| {
            c.scene_file = opt_path(v);
            Ok(())
        },
        |c| show_path(&c.scene_file),
    ),
    (
        "scene.start",
        |c, k, v| {
            c.start = if v.is_empty() { None } else { Some(parse_pose(k, v)?) };
            Ok(())
        },
        |c| show_pose(&c.start),
    ),
    (
        "scene.goal",
        |c, k, v| {
            c.goal = if v.is_empty() { None } else { Some(parse_pose(k, v)?) };
            Ok(())
        },
        |c| show_pose(&c.goal),
    ),
];

fn parse_pose(key: &str, v: &str) -> Result<PlanarPose> {
    v.parse()
        .map_err(|e: Error| Error::Config(format!("{key}: {e}")))
}

fn lookup(key: &str) -> Option<&'static (&'static str, Setter, Getter)> {
    SPECIAL.iter().chain(PLAIN).find(|(k, _, _)| *k == key)
}

/// All recognised keys in echo order.
pub fn known_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = SPECIAL.iter().chain(PLAIN).map(|(k, _, _)| *k).collect();
    let section = |k: &str| SECTIONS.iter().position(|s| k.starts_with(&format!("{s}.")[..]));
    keys.sort_by_key(|k| section(k));
    keys
}

const SECTIONS: [&str; 11] = [
    "experiment",
    "scene",
    "safety",
    "regions",
    "terrain",
    "primitives",
    "cost",
    "planner",
    "nbv",
    "sensor",
    "",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", no + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header '{line}'")))?
                    .trim();
                if !SECTIONS[..SECTIONS.len() - 1].contains(&name) {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let entry = lookup(&key).ok_or_else(|| at(format!("unknown key '{key}'")))?;
            if !seen.insert(key.clone()) {
                return Err(at(format!("duplicate key '{key}'")));
            }
            (entry.1)(&mut cfg, &key, v).map_err(|e| at(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Effective configuration with every key, grouped by section.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for key in known_keys() {
            let (section, name) = key.split_once('.').expect("keys are qualified");
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let getter = lookup(key).expect("listed key").2;
            let _ = writeln!(out, "{name} = {}", getter(self));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.scene_file.is_some() && (self.start.is_none() || self.goal.is_none()) {
            return Err(Error::Config(
                "scene.file requires scene.start and scene.goal".into(),
            ));
        }
        if !(self.resolution > 0.0 && self.resolution <= 0.5) {
            return Err(Error::Config("scene.resolution must lie in (0, 0.5]".into()));
        }
        Ok(())
    }

    /// Ground truth with start and goal; explicit poses override the
    /// generator's reference poses.
    pub fn build_scene(&self) -> Result<GeneratedScene> {
        let mut g = match &self.scene_file {
            Some(path) => {
                let scene = GroundTruthScene::load(path)?;
                let placeholder = Pose6D::identity();
                GeneratedScene {
                    scene,
                    start: placeholder,
                    goal: placeholder,
                }
            }
            None => generate(&SceneSpec {
                kind: self.scene,
                resolution: self.resolution,
            })?,
        };
        if let Some(p) = self.start {
            g.start = p.pose();
        }
        if let Some(p) = self.goal {
            g.goal = p.pose();
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_prefix_keys() {
        let cfg = RunConfig::parse(
            "# comment\n[experiment]\nseed = 9\nselector = random\n\n[safety]\ntheta_s = 0.8\nsensor.passes = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.pipeline.seed, 9);
        assert_eq!(cfg.pipeline.selector, Selector::Random);
        assert_eq!(cfg.pipeline.safety.theta_s, 0.8);
        assert_eq!(cfg.pipeline.noise.passes, 7);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[nope]\n"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::parse("[safety]\ntheta_s = 0.9\ntheta_s = 0.95\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::parse("[safety]\ntheta_s = high\n"), Err(Error::Config(_))));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.seed = 77;
        cfg.pipeline.noise.boundary_coeff = 0.123456789;
        cfg.start = Some(PlanarPose([1.0, 2.5, 0.0, 0.25]));
        cfg.out_dir = Some(PathBuf::from("runs/a"));
        let text = cfg.to_ini();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(text.lines().filter(|l| l.contains(" = ")).count(), known_keys().len());
    }

    #[test]
    fn threshold_constraint_surfaces_on_validate() {
        let cfg = RunConfig::parse("[safety]\ntheta_s = 0.9\ntheta_u = 0.05\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("1 - theta_s < theta_u"), "{err}");
    }

    #[test]
    fn scene_file_needs_poses() {
        let cfg = RunConfig::parse("[scene]\nfile = x.scene\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
