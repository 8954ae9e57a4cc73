use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semhppc::cloud::{load_cloud, partition_cloud, save_cloud};
use semhppc::config::RunConfig;
use semhppc::export::{write_ply, ColorMode};
use semhppc::nbv::{write_diagnostics, Selector};
use semhppc::pipeline::{
    fresh_cloud, run_nbv_ablation, run_pipeline, run_safety_experiment, write_jsonl,
};
use semhppc::regions::two_stage_cluster;
use semhppc::terrain::write_path_csv;
use semhppc::Error;

#[derive(Parser)]
#[command(name = "semhppc", version, about = "Semantic hypothesis-based path planning with next-best-view selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// INI configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `experiment.out`, else `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// NBV budget of plan and safety-eval, iterations of nbv-ablation.
    #[arg(long, global = true)]
    nbv: Option<usize>,
    /// full, random, geometry or uncertainty.
    #[arg(long, global = true)]
    selector: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured built-in scene as a scene file.
    GenScene,
    /// Single closed-loop planning run from the scene's start and goal.
    Plan,
    /// Path-safety experiment over perturbed start/goal trials.
    SafetyEval {
        /// Run trials on the rayon pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Uncertainty traces of the four NBV selectors.
    NbvAblation {
        #[arg(long)]
        parallel: bool,
    },
    /// ASCII PLY of a cloud file.
    ExportPly {
        /// Cloud file (default: OUT/cloud.shpc written by plan).
        #[arg(long)]
        cloud: Option<PathBuf>,
        /// class or safety.
        #[arg(long, default_value = "class")]
        color: String,
    },
    /// Check the configuration and print the effective values.
    ValidateConfig,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidPose(_) => 2,
            Error::Io(_) | Error::Format(_) => 4,
            Error::InvalidInput(_) | Error::StartUnprojectable => 3,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(4, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            return report(Failure::new(2, format!("usage: {first}")));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let message = f.message.replace('\n', " ");
    eprintln!("error: code={} {message}", f.code);
    ExitCode::from(f.code)
}

fn load_config(cli: &Cli) -> Result<(RunConfig, Option<String>), Failure> {
    let (mut cfg, source) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))?;
            (RunConfig::parse(&text)?, Some(text))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(s) = cli.seed {
        cfg.pipeline.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.pipeline.trials = t;
    }
    if let Some(n) = cli.nbv {
        cfg.pipeline.max_nbv = n;
        cfg.pipeline.ablation_nbv = n;
    }
    if let Some(s) = &cli.selector {
        cfg.pipeline.selector = s.parse::<Selector>()?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok((cfg, source))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::new(4, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))
}

/// Effective config, plus the source text verbatim when one was given.
fn echo_config(dir: &Path, cfg: &RunConfig, source: &Option<String>) -> Outcome {
    fs::write(dir.join("config.effective.ini"), cfg.to_ini())?;
    if let Some(text) = source {
        fs::write(dir.join("config.ini"), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let (cfg, source) = load_config(&cli)?;
    match &cli.command {
        Command::ValidateConfig => {
            print!("{}", cfg.to_ini());
            Ok(())
        }
        Command::GenScene => {
            let dir = out_dir(&cfg)?;
            let g = cfg.build_scene()?;
            let path = dir.join("scene.shpc");
            g.scene.save(&path)?;
            println!("{} points -> {}", g.scene.len(), path.display());
            Ok(())
        }
        Command::Plan => plan(&cfg, &source),
        Command::SafetyEval { parallel } => {
            let dir = out_dir(&cfg)?;
            echo_config(&dir, &cfg, &source)?;
            let g = cfg.build_scene()?;
            let (table, trials) = run_safety_experiment(&g.scene, &g.start, &g.goal, &cfg.pipeline, *parallel)?;
            let mut w = create(&dir.join("safety.csv"))?;
            table.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&dir.join("safety_trials.jsonl"))?;
            write_jsonl(&mut w, &trials)?;
            w.flush()?;
            table.write_csv(&mut std::io::stdout())?;
            Ok(())
        }
        Command::NbvAblation { parallel } => {
            let dir = out_dir(&cfg)?;
            echo_config(&dir, &cfg, &source)?;
            let g = cfg.build_scene()?;
            let (curves, trials) = run_nbv_ablation(&g.scene, &g.start, &g.goal, &cfg.pipeline, *parallel)?;
            let mut w = create(&dir.join("ablation.csv"))?;
            curves.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&dir.join("ablation_trials.jsonl"))?;
            write_jsonl(&mut w, &trials)?;
            w.flush()?;
            curves.write_csv(&mut std::io::stdout())?;
            Ok(())
        }
        Command::ExportPly { cloud, color } => {
            let dir = out_dir(&cfg)?;
            let mode: ColorMode = color.parse()?;
            let path = cloud.clone().unwrap_or_else(|| dir.join("cloud.shpc"));
            let (names, cloud) = load_cloud(&path, cfg.pipeline.fusion).map_err(|e| {
                let f = Failure::from(e);
                Failure::new(f.code, format!("{}: {}", path.display(), f.message))
            })?;
            let g = cfg.build_scene()?;
            let catalog = &g.scene.catalog;
            if catalog.names() != names.as_slice() {
                return Err(Failure::new(2, "cloud classes differ from the scene catalog"));
            }
            let partition = partition_cloud(&cloud, catalog, &cfg.pipeline.safety);
            let regions = two_stage_cluster(&cloud, &partition, &cfg.pipeline.regions);
            let out = dir.join("cloud.ply");
            let mut w = create(&out)?;
            write_ply(&mut w, &cloud, &partition, &regions, mode)?;
            w.flush()?;
            println!("{} points -> {}", cloud.len(), out.display());
            Ok(())
        }
    }
}

fn plan(cfg: &RunConfig, source: &Option<String>) -> Outcome {
    let dir = out_dir(cfg)?;
    echo_config(&dir, cfg, source)?;
    let g = cfg.build_scene()?;
    let cloud = fresh_cloud(&g.scene, cfg.pipeline.fusion)?;
    let run = run_pipeline(&g.scene, cloud, &g.start, &g.goal, &cfg.pipeline)?;

    let json = serde_json::to_string_pretty(&run.result).map_err(|e| Failure::new(4, e.to_string()))?;
    fs::write(dir.join("result.json"), json + "\n")?;
    let mut w = create(&dir.join("path.csv"))?;
    let nodes = run.result.path.iter().flatten().map(|&v| &run.graph.vertices[v].node);
    write_path_csv(&mut w, nodes)?;
    w.flush()?;
    let mut w = create(&dir.join("graph.txt"))?;
    run.graph.write_edge_list(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("nbv_diagnostics.csv"))?;
    if run.iterations.is_empty() {
        write_diagnostics(&mut w, 0, &[], None, true)?;
    }
    for (k, it) in run.iterations.iter().enumerate() {
        write_diagnostics(&mut w, it.iteration, &it.candidates, it.selected, k == 0)?;
    }
    w.flush()?;
    save_cloud(&dir.join("cloud.shpc"), &run.cloud, g.scene.catalog.names())?;

    println!(
        "outcome {:?} nbv {} path_vertices {}",
        run.result.outcome,
        run.result.nbv_used,
        run.result.path.as_ref().map_or(0, Vec::len)
    );
    if run.graph.goal_vertices.is_empty() {
        return Err(Failure::new(3, "planning failed: the graph holds no goal vertex"));
    }
    Ok(())
}
