//! Simulated Bayesian semantic camera over a ground-truth scene.
//!
//! Each rendered pixel draws `T` softmax samples from logits
//! `base_logit * onehot(true class) + eps`, with zero-mean Gaussian `eps`
//! whose spread grows with depth and near class boundaries. The pixel
//! output is the sample mean and the unbiased sample standard deviation
//! per class.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{ClassCatalog, ViewMeasurement};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose6D};
use crate::kdtree::{median_nn_distance, KdTree};
use crate::nbv::render_points;
use crate::rng::stream;

pub const SCENE_MAGIC: &str = "SHPC-SCENE 1";

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    pub positions: Vec<Vector3<f64>>,
    pub classes: Vec<usize>,
    pub catalog: ClassCatalog,
    /// Distance to the nearest point of another class; infinite when the
    /// scene has a single class.
    pub boundary_distance: Vec<f64>,
    pub resolution: f64,
}

impl GroundTruthScene {
    pub fn new(positions: Vec<Vector3<f64>>, classes: Vec<usize>, catalog: ClassCatalog) -> Result<Self> {
        if positions.is_empty() || positions.len() != classes.len() {
            return Err(Error::InvalidInput(
                "scene needs one class per point and at least one point".into(),
            ));
        }
        if let Some(i) = classes.iter().position(|&c| c >= catalog.num_classes()) {
            return Err(Error::InvalidInput(format!("point {i} has an unknown class")));
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("scene has a non-finite coordinate".into()));
        }
        let per_class: Vec<Option<KdTree>> = (0..catalog.num_classes())
            .map(|c| {
                let pts: Vec<Vector3<f64>> = positions
                    .iter()
                    .zip(&classes)
                    .filter(|(_, &k)| k == c)
                    .map(|(p, _)| *p)
                    .collect();
                (!pts.is_empty()).then(|| KdTree::new(&pts))
            })
            .collect();
        let boundary_distance = positions
            .iter()
            .zip(&classes)
            .map(|(p, &c)| {
                per_class
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != c)
                    .filter_map(|(_, t)| t.as_ref()?.nearest(p).map(|(_, d)| d))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let tree = KdTree::new(&positions);
        let resolution = median_nn_distance(&tree, &positions).unwrap_or(0.0);
        Ok(Self {
            positions,
            classes,
            catalog,
            boundary_distance,
            resolution,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Whether each point belongs to an unsafe class.
    pub fn unsafe_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|&c| !self.catalog.is_safe(c)).collect()
    }

    /// Writes the scene file: magic line, class line
    /// (`classes name:safe name:unsafe ...`), then `x y z class_id` records.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{SCENE_MAGIC}")?;
        write!(w, "classes")?;
        for c in 0..self.catalog.num_classes() {
            let tag = if self.catalog.is_safe(c) { "safe" } else { "unsafe" };
            write!(w, " {}:{tag}", self.catalog.name(c))?;
        }
        writeln!(w)?;
        for (p, c) in self.positions.iter().zip(&self.classes) {
            writeln!(w, "{} {} {} {c}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
        if next()?.as_deref().map(str::trim) != Some(SCENE_MAGIC) {
            return Err(Error::Format(format!("missing '{SCENE_MAGIC}' header")));
        }
        let class_line = next()?.ok_or_else(|| Error::Format("missing class line".into()))?;
        let mut tokens = class_line.split_whitespace();
        if tokens.next() != Some("classes") {
            return Err(Error::Format("class line must start with 'classes'".into()));
        }
        let mut names = Vec::new();
        let mut safe = Vec::new();
        for (i, t) in tokens.enumerate() {
            let (name, tag) = t
                .rsplit_once(':')
                .ok_or_else(|| Error::Format(format!("class entry '{t}' lacks ':safe' or ':unsafe'")))?;
            match tag {
                "safe" => safe.push(i),
                "unsafe" => {}
                _ => return Err(Error::Format(format!("class entry '{t}' has an unknown tag"))),
            }
            names.push(name.to_string());
        }
        let catalog = ClassCatalog::new(names, &safe)?;
        let mut positions = Vec::new();
        let mut classes = Vec::new();
        let mut line_no = 2;
        while let Some(line) = next()? {
            line_no += 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("line {line_no}: expected 'x y z class_id'"));
            if f.len() != 4 {
                return Err(bad());
            }
            let xyz: Vec<f64> = f[..3]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            positions.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            classes.push(f[3].parse::<usize>().map_err(|_| bad())?);
        }
        Self::new(positions, classes, catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub base_logit: f64,
    /// Logit noise std per metre of depth.
    pub distance_coeff: f64,
    /// Extra logit noise std at a class boundary.
    pub boundary_coeff: f64,
    pub boundary_scale: f64,
    pub passes: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            base_logit: 5.0,
            distance_coeff: 0.4,
            boundary_coeff: 4.0,
            boundary_scale: 0.3,
            passes: 50,
        }
    }
}

impl NoiseModel {
    /// Noise-free sensor: one-hot outputs, zero spread.
    pub fn zero() -> Self {
        Self {
            base_logit: 40.0,
            distance_coeff: 0.0,
            boundary_coeff: 0.0,
            boundary_scale: 1.0,
            passes: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.passes < 2 {
            return Err(Error::InvalidParameter("sensor passes must be >= 2".into()));
        }
        if !(self.base_logit >= 0.0
            && self.distance_coeff >= 0.0
            && self.boundary_coeff >= 0.0
            && self.boundary_scale > 0.0)
        {
            return Err(Error::InvalidParameter(
                "noise coefficients must be >= 0 and boundary_scale > 0".into(),
            ));
        }
        Ok(())
    }

    /// Logit noise std at the given depth and boundary distance.
    pub fn logit_std(&self, depth: f64, boundary_distance: f64) -> f64 {
        self.distance_coeff * depth + self.boundary_coeff * (-boundary_distance / self.boundary_scale).exp()
    }
}

/// Ground-truth rendering: depth, class and scene point per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthImage {
    pub width: usize,
    pub height: usize,
    /// Infinite where empty.
    pub depth: Vec<f64>,
    pub class: Vec<Option<usize>>,
    pub point: Vec<Option<usize>>,
}

pub fn render_ground_truth(
    scene: &GroundTruthScene,
    camera: &Pose6D,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> GroundTruthImage {
    let img = render_points(&scene.positions, scene.resolution / 2.0, camera, k, width, height);
    GroundTruthImage {
        width,
        height,
        class: img.owner.iter().map(|o| o.map(|i| scene.classes[i])).collect(),
        depth: img.depth,
        point: img.owner,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub depth: Vec<f64>,
    pub true_class: Vec<Option<usize>>,
    /// Per-pixel class means, zero for empty pixels.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Random stream of one pixel.
pub fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    stream(seed, "pixel", pixel as u64)
}

/// The `passes × num_classes` softmax samples of one pixel, row per pass.
pub fn pixel_samples(
    true_class: usize,
    num_classes: usize,
    logit_std: f64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(noise.passes * num_classes);
    let mut logits = vec![0.0; num_classes];
    for _ in 0..noise.passes {
        for (c, l) in logits.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let base = if c == true_class { noise.base_logit } else { 0.0 };
            *l = base + logit_std * z;
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &l in &logits {
            let e = (l - m).exp();
            out.push(e);
            sum += e;
        }
        for e in &mut out[start..] {
            *e /= sum;
        }
    }
    out
}

/// Mean and unbiased standard deviation per class of row-major samples.
pub fn sample_statistics(samples: &[f64], num_classes: usize) -> (Vec<f64>, Vec<f64>) {
    let t = samples.len() / num_classes;
    let mut mean = vec![0.0; num_classes];
    for row in samples.chunks_exact(num_classes) {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    let mut var = vec![0.0; num_classes];
    for row in samples.chunks_exact(num_classes) {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / (t as f64 - 1.0)).sqrt()).collect();
    (mean, std)
}

/// Simulates the stochastic passes for every rendered pixel. Pixels draw
/// from independent streams keyed by pixel index.
pub fn simulate_passes(
    image: &GroundTruthImage,
    scene: &GroundTruthScene,
    noise: &NoiseModel,
    seed: u64,
) -> RenderedView {
    let c = scene.catalog.num_classes();
    let per_pixel: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..image.depth.len())
        .into_par_iter()
        .map(|px| {
            let point = image.point[px]?;
            let std = noise.logit_std(image.depth[px], scene.boundary_distance[point]);
            let mut rng = pixel_rng(seed, px);
            let samples = pixel_samples(scene.classes[point], c, std, noise, &mut rng);
            Some(sample_statistics(&samples, c))
        })
        .collect();
    let n = image.depth.len();
    let mut mean = vec![0.0; n * c];
    let mut std = vec![0.0; n * c];
    for (px, stats) in per_pixel.into_iter().enumerate() {
        if let Some((m, s)) = stats {
            mean[px * c..(px + 1) * c].copy_from_slice(&m);
            std[px * c..(px + 1) * c].copy_from_slice(&s);
        }
    }
    RenderedView {
        width: image.width,
        height: image.height,
        num_classes: c,
        depth: image.depth.clone(),
        true_class: image.class.clone(),
        mean,
        std,
    }
}

/// Renders, simulates and packages one camera measurement.
pub fn take_view(
    scene: &GroundTruthScene,
    camera: &Pose6D,
    k: &Intrinsics,
    width: usize,
    height: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ViewMeasurement> {
    let image = render_ground_truth(scene, camera, k, width, height);
    let view = simulate_passes(&image, scene, noise, seed);
    let depth = view
        .depth
        .iter()
        .map(|&d| if d.is_finite() { d } else { 0.0 })
        .collect();
    ViewMeasurement::new(*k, *camera, width, height, view.num_classes, depth, view.mean, view.std)
}
