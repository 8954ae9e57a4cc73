//! Closed-loop planning with simulated views, and the two evaluation
//! protocols (path safety against ground truth, NBV selector ablation).
//!
//! Per trial `t` the random streams are
//! `trial = derive_seed(master, "trial", t)` and below it `"perturb"`,
//! `"graph"`, `"view"` (index = views taken so far), `"candidates"` and
//! `"select"` (index = NBV iteration). Decisions for every NBV budget
//! come from one run with the largest budget, since the first `X`
//! iterations of that run are exactly the run with budget `X`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{ClassCatalog, FusionMode, SafetyParams, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::geometry::Pose6D;
use crate::nbv::{
    evaluate_candidates, generate_candidates, select_nbv, vertex_uncertainty, NbvCandidate, NbvParams, Selector,
};
use crate::planner::{
    grow_hypothesis_graph, k_shortest_paths, path_status, unclear_vertices, CandidatePath, CostParams, GoalRegion,
    GrowthReport, HypothesisGraph, PathStatus, PlannerParams, PlanningInputs,
};
use crate::regions::{two_stage_cluster, RegionParams};
use crate::rng::{derive_seed, stream};
use crate::sensor::{take_view, GroundTruthScene, NoiseModel};
use crate::terrain::{attach, PrimitiveParams, TraversabilityParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_nbv: usize,
    /// NBV iterations recorded by the selector ablation.
    pub ablation_nbv: usize,
    /// Promising paths ranked per iteration.
    pub m: usize,
    pub selector: Selector,
    pub fusion: FusionMode,
    pub seed: u64,
    pub trials: usize,
    /// Ground-truth unsafe support points a vertex may hold and still be
    /// judged safe.
    pub n_unsafe: usize,
    /// Start and goal perturbation radius.
    pub perturbation: f64,
    /// Take a first view from the start before growing the graph.
    pub initial_view: bool,
    /// View pixels merge into cloud points within this many resolutions.
    pub merge_radius_factor: f64,
    pub safety: SafetyParams,
    pub regions: RegionParams,
    pub terrain: TraversabilityParams,
    pub primitives: PrimitiveParams,
    pub cost: CostParams,
    pub planner: PlannerParams,
    pub nbv: NbvParams,
    pub noise: NoiseModel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_nbv: 5,
            ablation_nbv: 3,
            m: 4,
            selector: Selector::Full,
            fusion: FusionMode::MeasurementNormalized,
            seed: 1,
            trials: 100,
            n_unsafe: 4,
            perturbation: 1.0,
            initial_view: true,
            merge_radius_factor: 1.0,
            safety: SafetyParams::default(),
            regions: RegionParams::default(),
            terrain: TraversabilityParams::default(),
            primitives: PrimitiveParams::default(),
            cost: CostParams::default(),
            planner: PlannerParams::default(),
            nbv: NbvParams::default(),
            noise: NoiseModel::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.n_unsafe == 0 {
            return Err(Error::InvalidParameter("n_unsafe must be >= 1".into()));
        }
        if !(self.perturbation >= 0.0 && self.merge_radius_factor > 0.0) {
            return Err(Error::InvalidParameter(
                "perturbation must be >= 0 and merge_radius_factor > 0".into(),
            ));
        }
        self.safety.validate()?;
        self.regions.validate()?;
        self.terrain.validate()?;
        self.primitives.validate()?;
        self.cost.validate()?;
        self.planner.validate()?;
        self.nbv.validate()?;
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialOutcome {
    SelectedSafe,
    SelectedUnsafe,
    ConfirmedSafe,
    ConfirmedUnsafe,
}

/// What the planner would commit to with a given NBV budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub outcome: TrialOutcome,
    pub path: Option<Vec<usize>>,
    pub path_cost: Option<f64>,
    /// Ground-truth verdict of the path; absent when no path is chosen.
    pub path_safe: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub outcome: TrialOutcome,
    pub nbv_used: usize,
    pub path: Option<Vec<usize>>,
    pub path_safe: Option<bool>,
    /// Mean vertex uncertainty over the first iteration's unclear path
    /// vertices, after each iteration's views.
    pub uncertainty_trace: Vec<f64>,
}

/// Ground truth used to judge paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyOracle {
    pub unsafe_points: Vec<bool>,
    pub n_unsafe: usize,
}

impl SafetyOracle {
    pub fn new(scene: &GroundTruthScene, n_unsafe: usize) -> Result<Self> {
        if n_unsafe == 0 {
            return Err(Error::InvalidParameter("n_unsafe must be >= 1".into()));
        }
        Ok(Self {
            unsafe_points: scene.unsafe_mask(),
            n_unsafe,
        })
    }
}

/// A path is unsafe when one of its vertices has more than `n_unsafe`
/// ground-truth unsafe points in its support.
pub fn judge_path(graph: &HypothesisGraph, path: &[usize], oracle: &SafetyOracle) -> bool {
    path.iter().all(|&v| {
        let hits = graph.vertices[v]
            .node
            .support
            .iter()
            .filter(|&&i| oracle.unsafe_points[i])
            .count();
        hits <= oracle.n_unsafe
    })
}

/// One NBV iteration's candidates, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NbvIteration {
    pub iteration: usize,
    pub candidates: Vec<NbvCandidate>,
    pub selected: Option<usize>,
}

/// Mutable planning state of one trial.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    pub scene: &'a GroundTruthScene,
    pub config: &'a PipelineConfig,
    pub cloud: SemanticPointCloud,
    pub partition: SafetyPartition,
    pub graph: HypothesisGraph,
    pub growth: GrowthReport,
    pub goal: GoalRegion,
    pub seed: u64,
    pub views: u64,
}

impl<'a> Session<'a> {
    /// Optional first view from the start, then graph growth.
    pub fn new(
        scene: &'a GroundTruthScene,
        mut cloud: SemanticPointCloud,
        start: &Pose6D,
        goal: &Pose6D,
        config: &'a PipelineConfig,
        semantic: bool,
        seed: u64,
    ) -> Result<Self> {
        if cloud.len() != scene.len() {
            return Err(Error::InvalidInput("cloud and scene differ in size".into()));
        }
        let mut views = 0;
        if config.initial_view {
            let camera = config.nbv.mount.camera_pose(start);
            view_into(scene, &mut cloud, &camera, config, derive_seed(seed, "view", 0))?;
            views = 1;
        }
        let goal = GoalRegion::new(*goal, config.planner.goal_radius)?;
        let catalog = &scene.catalog;
        let partition = cloud.partition(catalog, &config.safety);
        let regions = two_stage_cluster(&cloud, &partition, &config.regions);
        let inputs = PlanningInputs {
            cloud: &cloud,
            catalog,
            partition: &partition,
            regions: &regions,
            safety: &config.safety,
            cost: &config.cost,
            terrain: &config.terrain,
            primitives: &config.primitives,
            semantic,
        };
        let (graph, growth) =
            grow_hypothesis_graph(&inputs, start, &goal, &config.planner, derive_seed(seed, "graph", 0))?;
        Ok(Self {
            scene,
            config,
            cloud,
            partition,
            graph,
            growth,
            goal,
            seed,
            views,
        })
    }

    fn catalog(&self) -> &ClassCatalog {
        &self.scene.catalog
    }

    pub fn ranked_paths(&self) -> Vec<CandidatePath> {
        k_shortest_paths(&self.graph.vertex_graph(), self.config.m)
    }

    /// Takes one NBV with `selector` and re-costs the graph. Returns the
    /// candidates considered, or `None` when no candidate exists.
    pub fn nbv_step(&mut self, iteration: usize, v_nbv: &[usize], selector: Selector) -> Result<NbvIteration> {
        let cfg = self.config;
        let root = self.graph.vertices[self.graph.root].node.pose;
        let goal = self.goal.center.position();
        let poses = generate_candidates(
            &self.cloud,
            &self.partition,
            &root,
            &goal,
            &cfg.nbv,
            &cfg.terrain,
            &cfg.primitives,
            cfg.cost.start_relax_radius,
            derive_seed(self.seed, "candidates", iteration as u64),
        );
        let weights = cfg.nbv.weights.for_selector(selector).unwrap_or(cfg.nbv.weights);
        let candidates = evaluate_candidates(&self.cloud, &self.graph, v_nbv, &poses, &root, &cfg.nbv, &weights);
        let qualifies = vec![true; candidates.len()];
        let selected = select_nbv(
            &candidates,
            &qualifies,
            selector,
            derive_seed(self.seed, "select", iteration as u64),
        );
        if let Some(s) = selected {
            let camera = cfg.nbv.mount.camera_pose(&candidates[s].pose);
            let seed = derive_seed(self.seed, "view", self.views);
            view_into(self.scene, &mut self.cloud, &camera, cfg, seed)?;
            self.views += 1;
            self.recost()?;
        }
        Ok(NbvIteration {
            iteration,
            candidates,
            selected,
        })
    }

    pub fn recost(&mut self) -> Result<()> {
        self.partition = self.cloud.partition(self.catalog(), &self.config.safety);
        let ctx = crate::planner::CostContext {
            cloud: &self.cloud,
            catalog: &self.scene.catalog,
            partition: &self.partition,
            safety: &self.config.safety,
            cost: &self.config.cost,
            semantic: true,
        };
        self.graph.recost(&ctx)
    }

    pub fn mean_uncertainty(&self, vertices: &[usize]) -> Option<f64> {
        if vertices.is_empty() {
            return None;
        }
        let sum: f64 = vertices
            .iter()
            .map(|&v| vertex_uncertainty(&self.graph.vertices[v].node.support, &self.cloud))
            .sum();
        Some(sum / vertices.len() as f64)
    }

    fn decide(&self, paths: &[CandidatePath], status: &PathStatus, oracle: &SafetyOracle) -> Decision {
        let chosen = match status {
            PathStatus::ConfirmedUnsafe => None,
            PathStatus::ConfirmedSafe(p) => Some(p),
            PathStatus::Undecided => paths.first(),
        };
        let Some(p) = chosen else {
            return Decision {
                outcome: TrialOutcome::ConfirmedUnsafe,
                path: None,
                path_cost: None,
                path_safe: None,
            };
        };
        let safe = judge_path(&self.graph, &p.vertices, oracle);
        let outcome = match (status, safe) {
            (PathStatus::ConfirmedSafe(_), _) => TrialOutcome::ConfirmedSafe,
            (_, true) => TrialOutcome::SelectedSafe,
            (_, false) => TrialOutcome::SelectedUnsafe,
        };
        Decision {
            outcome,
            path: Some(p.vertices.clone()),
            path_cost: Some(p.cost),
            path_safe: Some(safe),
        }
    }
}

fn view_into(
    scene: &GroundTruthScene,
    cloud: &mut SemanticPointCloud,
    camera: &Pose6D,
    config: &PipelineConfig,
    seed: u64,
) -> Result<()> {
    let nbv = &config.nbv;
    let view = take_view(
        scene,
        camera,
        &nbv.intrinsics(),
        nbv.image_width,
        nbv.image_height,
        &config.noise,
        seed,
    )?;
    let radius = config.merge_radius_factor * cloud.resolution();
    cloud.integrate_view(&view, radius)?;
    Ok(())
}

/// Record of one closed-loop run.
#[derive(Debug, Clone)]
pub struct LoopRecord {
    /// Decision with budget `b` at index `b`.
    pub decisions: Vec<Decision>,
    pub nbv_used: usize,
    pub trace: Vec<f64>,
    pub iterations: Vec<NbvIteration>,
}

/// Runs up to `max_nbv` NBV iterations. With `early_stop` the loop ends
/// as soon as the ranked paths confirm a safe path or rule out every
/// path; otherwise it always takes `max_nbv` views (ablation mode).
pub fn run_loop(
    session: &mut Session,
    selector: Selector,
    max_nbv: usize,
    early_stop: bool,
    oracle: &SafetyOracle,
) -> Result<LoopRecord> {
    let mut decisions = Vec::with_capacity(max_nbv + 1);
    let mut trace = Vec::new();
    let mut iterations = Vec::new();
    let mut tracked: Option<Vec<usize>> = None;
    let mut nbv_used = 0;
    for it in 0..=max_nbv {
        let paths = session.ranked_paths();
        let status = path_status(&session.graph, &paths);
        let v_nbv = unclear_vertices(&session.graph, &paths);
        let tracked = tracked.get_or_insert_with(|| v_nbv.clone());
        if let Some(u) = session.mean_uncertainty(tracked) {
            trace.push(u);
        }
        let decision = session.decide(&paths, &status, oracle);
        let confirmed = !matches!(status, PathStatus::Undecided);
        decisions.push(decision);
        if early_stop && confirmed {
            let last = decisions.last().expect("just pushed").clone();
            decisions.resize(max_nbv + 1, last);
            break;
        }
        if it == max_nbv {
            break;
        }
        let step = session.nbv_step(it, &v_nbv, selector)?;
        if step.selected.is_some() {
            nbv_used += 1;
        }
        iterations.push(step);
    }
    Ok(LoopRecord {
        decisions,
        nbv_used,
        trace,
        iterations,
    })
}

/// Full run of one planning problem.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub result: TrialResult,
    pub graph: HypothesisGraph,
    pub growth: GrowthReport,
    pub cloud: SemanticPointCloud,
    pub iterations: Vec<NbvIteration>,
}

pub fn run_pipeline(
    scene: &GroundTruthScene,
    cloud: SemanticPointCloud,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
) -> Result<PipelineRun> {
    config.validate()?;
    let oracle = SafetyOracle::new(scene, config.n_unsafe)?;
    let mut session = Session::new(scene, cloud, start, goal, config, true, config.seed)?;
    let record = run_loop(&mut session, config.selector, config.max_nbv, true, &oracle)?;
    let last = record.decisions.last().expect("at least one decision").clone();
    Ok(PipelineRun {
        result: TrialResult {
            outcome: last.outcome,
            nbv_used: record.nbv_used,
            path: last.path,
            path_safe: last.path_safe,
            uncertainty_trace: record.trace,
        },
        graph: session.graph,
        growth: session.growth,
        cloud: session.cloud,
        iterations: record.iterations,
    })
}

/// Fresh cloud over the scene's points.
pub fn fresh_cloud(scene: &GroundTruthScene, mode: FusionMode) -> Result<SemanticPointCloud> {
    SemanticPointCloud::new(scene.positions.clone(), scene.catalog.num_classes(), mode)
}

/// Start and goal of trial `seed`: uniform within `config.perturbation`
/// of the references, redrawn until both stand on the terrain (100
/// attempts). The start faces the goal.
pub fn perturb_endpoints(
    cloud: &SemanticPointCloud,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
    seed: u64,
) -> Option<(Pose6D, Pose6D)> {
    let mut rng = stream(seed, "perturb", 0);
    let jitter = |p: &Pose6D, rng: &mut rand_chacha::ChaCha8Rng| {
        let r = config.perturbation * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let q = p.position();
        (q.x + r * a.cos(), q.y + r * a.sin(), q.z)
    };
    for _ in 0..100 {
        let (sx, sy, sz) = jitter(start, &mut rng);
        let (gx, gy, gz) = jitter(goal, &mut rng);
        let yaw = (gy - sy).atan2(gx - sx);
        let s = Pose6D::planar(sx, sy, sz, yaw);
        let g = Pose6D::planar(gx, gy, gz, yaw);
        if attach(cloud, &s, 0.0, &config.terrain).is_some() && attach(cloud, &g, 0.0, &config.terrain).is_some() {
            return Some((s, g));
        }
    }
    None
}

/// One safety-experiment trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyTrial {
    pub trial: usize,
    pub seed: u64,
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub skipped: bool,
    /// Geometry-only planning.
    pub b1: Option<Decision>,
    /// Decision per NBV budget, budget 0 first.
    pub budgets: Vec<Decision>,
    pub nbv_used: usize,
    pub uncertainty_trace: Vec<f64>,
}

fn xyz(p: &Pose6D) -> [f64; 3] {
    let q = p.position();
    [q.x, q.y, q.z]
}

pub fn run_safety_trial(
    scene: &GroundTruthScene,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
    trial: usize,
) -> Result<SafetyTrial> {
    let seed = derive_seed(config.seed, "trial", trial as u64);
    let oracle = SafetyOracle::new(scene, config.n_unsafe)?;
    let cloud = fresh_cloud(scene, config.fusion)?;
    let Some((s, g)) = perturb_endpoints(&cloud, start, goal, config, seed) else {
        return Ok(SafetyTrial {
            trial,
            seed,
            start: xyz(start),
            goal: xyz(goal),
            skipped: true,
            b1: None,
            budgets: Vec::new(),
            nbv_used: 0,
            uncertainty_trace: Vec::new(),
        });
    };
    let mut session = Session::new(scene, cloud, &s, &g, config, true, seed)?;
    let b1 = {
        let geo_config = no_initial_view(config);
        let geo = Session::new(scene, session.cloud.clone(), &s, &g, &geo_config, false, seed)?;
        let paths = k_shortest_paths(&geo.graph.vertex_graph(), 1);
        let status = if paths.is_empty() {
            PathStatus::ConfirmedUnsafe
        } else {
            PathStatus::Undecided
        };
        geo.decide(&paths, &status, &oracle)
    };
    let record = run_loop(&mut session, config.selector, config.max_nbv, true, &oracle)?;
    Ok(SafetyTrial {
        trial,
        seed,
        start: xyz(&s),
        goal: xyz(&g),
        skipped: false,
        b1: Some(b1),
        budgets: record.decisions,
        nbv_used: record.nbv_used,
        uncertainty_trace: record.trace,
    })
}

fn no_initial_view(config: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        initial_view: false,
        ..config.clone()
    }
}

/// Outcome percentages of one table column.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ColumnStats {
    pub safe: f64,
    pub unsafe_: f64,
    pub confirmed_safe: f64,
    pub confirmed_unsafe: f64,
}

fn column(decisions: &[&Decision]) -> ColumnStats {
    let n = decisions.len().max(1) as f64;
    let pct = |f: &dyn Fn(&Decision) -> bool| 100.0 * decisions.iter().filter(|d| f(d)).count() as f64 / n;
    ColumnStats {
        safe: pct(&|d| d.path_safe == Some(true)),
        unsafe_: pct(&|d| d.path_safe == Some(false)),
        confirmed_safe: pct(&|d| d.outcome == TrialOutcome::ConfirmedSafe && d.path_safe == Some(true)),
        confirmed_unsafe: pct(&|d| d.outcome == TrialOutcome::ConfirmedUnsafe),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyTable {
    /// B1, B2, 1N, ..., XN.
    pub columns: Vec<(String, ColumnStats)>,
    pub trials_used: usize,
    pub trials_skipped: usize,
}

impl SafetyTable {
    pub fn from_trials(trials: &[SafetyTrial], max_nbv: usize) -> Self {
        let used: Vec<&SafetyTrial> = trials.iter().filter(|t| !t.skipped).collect();
        let mut columns = vec![(
            "B1".to_string(),
            column(&used.iter().filter_map(|t| t.b1.as_ref()).collect::<Vec<_>>()),
        )];
        for b in 0..=max_nbv {
            let name = if b == 0 { "B2".to_string() } else { format!("{b}N") };
            columns.push((name, column(&used.iter().map(|t| &t.budgets[b]).collect::<Vec<_>>())));
        }
        Self {
            columns,
            trials_used: used.len(),
            trials_skipped: trials.len() - used.len(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Rows `Safe%`, `Unsafe%`, `CS%`, `CN%`; one column per budget.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "metric")?;
        for (name, _) in &self.columns {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        let rows: [(&str, fn(&ColumnStats) -> f64); 4] = [
            ("Safe%", |c| c.safe),
            ("Unsafe%", |c| c.unsafe_),
            ("CS%", |c| c.confirmed_safe),
            ("CN%", |c| c.confirmed_unsafe),
        ];
        for (label, f) in rows {
            write!(w, "{label}")?;
            for (_, c) in &self.columns {
                write!(w, ",{:.4}", f(c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs every trial (in parallel when `parallel`); results are in trial
/// order and identical either way.
pub fn run_safety_experiment(
    scene: &GroundTruthScene,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
    parallel: bool,
) -> Result<(SafetyTable, Vec<SafetyTrial>)> {
    config.validate()?;
    let run = |t| run_safety_trial(scene, start, goal, config, t);
    let trials: Vec<SafetyTrial> = if parallel {
        (0..config.trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.trials).map(run).collect::<Result<_>>()?
    };
    Ok((SafetyTable::from_trials(&trials, config.max_nbv), trials))
}

/// One ablation trial: uncertainty traces per selector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTrial {
    pub trial: usize,
    pub seed: u64,
    pub skipped: bool,
    /// Unclear path vertices tracked by the traces.
    pub tracked_vertices: usize,
    pub traces: Vec<(Selector, Vec<f64>)>,
}

impl AblationTrial {
    pub fn trace(&self, selector: Selector) -> Option<&[f64]> {
        self.traces.iter().find(|(s, _)| *s == selector).map(|(_, t)| t.as_slice())
    }
}

pub fn run_ablation_trial(
    scene: &GroundTruthScene,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
    trial: usize,
) -> Result<AblationTrial> {
    let seed = derive_seed(config.seed, "trial", trial as u64);
    let oracle = SafetyOracle::new(scene, config.n_unsafe)?;
    let cloud = fresh_cloud(scene, config.fusion)?;
    let skipped = |tracked| AblationTrial {
        trial,
        seed,
        skipped: true,
        tracked_vertices: tracked,
        traces: Vec::new(),
    };
    let Some((s, g)) = perturb_endpoints(&cloud, start, goal, config, seed) else {
        return Ok(skipped(0));
    };
    let base = Session::new(scene, cloud, &s, &g, config, true, seed)?;
    let tracked = unclear_vertices(&base.graph, &base.ranked_paths()).len();
    if tracked == 0 {
        return Ok(skipped(0));
    }
    let mut traces = Vec::new();
    for selector in Selector::ALL {
        let mut session = base.clone();
        let record = run_loop(&mut session, selector, config.ablation_nbv, false, &oracle)?;
        traces.push((selector, record.trace));
    }
    Ok(AblationTrial {
        trial,
        seed,
        skipped: false,
        tracked_vertices: tracked,
        traces,
    })
}

/// Mean trace per selector over the trials that were not skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCurves {
    pub curves: Vec<(Selector, Vec<f64>)>,
    pub trials_used: usize,
}

impl AblationCurves {
    pub fn from_trials(trials: &[AblationTrial], nbv: usize) -> Self {
        let used: Vec<&AblationTrial> = trials.iter().filter(|t| !t.skipped).collect();
        let curves = Selector::ALL
            .into_iter()
            .map(|s| {
                let curve = (0..=nbv)
                    .map(|i| {
                        let sum: f64 = used.iter().map(|t| t.trace(s).expect("all selectors run")[i]).sum();
                        sum / used.len().max(1) as f64
                    })
                    .collect();
                (s, curve)
            })
            .collect();
        Self {
            curves,
            trials_used: used.len(),
        }
    }

    pub fn curve(&self, selector: Selector) -> &[f64] {
        &self.curves.iter().find(|(s, _)| *s == selector).expect("all selectors").1
    }

    /// `iteration,full,random,geometry,uncertainty`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "iteration")?;
        for (s, _) in &self.curves {
            write!(w, ",{}", s.as_str())?;
        }
        writeln!(w)?;
        let n = self.curves.first().map_or(0, |c| c.1.len());
        for i in 0..n {
            write!(w, "{i}")?;
            for (_, c) in &self.curves {
                write!(w, ",{:.9}", c[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn run_nbv_ablation(
    scene: &GroundTruthScene,
    start: &Pose6D,
    goal: &Pose6D,
    config: &PipelineConfig,
    parallel: bool,
) -> Result<(AblationCurves, Vec<AblationTrial>)> {
    config.validate()?;
    let run = |t| run_ablation_trial(scene, start, goal, config, t);
    let trials: Vec<AblationTrial> = if parallel {
        (0..config.trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.trials).map(run).collect::<Result<_>>()?
    };
    Ok((AblationCurves::from_trials(&trials, config.ablation_nbv), trials))
}

/// Paired t statistic of `a - b` and the one-sided p-value of the
/// alternative mean(a - b) < 0. `None` with fewer than two pairs or zero
/// spread.
pub fn paired_t_less(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return None;
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    Some((t, dist.cdf(t)))
}

/// Per-trial uncertainty of `selector` at `iteration` over the used trials.
pub fn ablation_samples(trials: &[AblationTrial], selector: Selector, iteration: usize) -> Vec<f64> {
    trials
        .iter()
        .filter(|t| !t.skipped)
        .filter_map(|t| t.trace(selector).and_then(|tr| tr.get(iteration).copied()))
        .collect()
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}
