use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use threedp::harness::{
    evaluate_suite, generate_hidden, generate_seeded, infer_hidden, infer_scene, load_hidden, load_samples, load_scene,
    poses_from_json, render_scene_file, write_hidden, write_samples, write_scene, Category, HiddenSetup, RunConfig, SamplesFile,
    SceneResult, HIDDEN_CATEGORY, OCCLUDER_WIDTHS,
};
use threedp::renderer::{load_depth, save_depth};
use threedp::scenegraph::Camera;
use threedp::shape_learning::{learn_shape, learning_camera, LearningContext, PoseBeliefParticles, PoseParticle, SceneMap};
use threedp::shapes::save_vox;
use threedp::{Error, Result};

#[derive(Parser)]
#[command(name = "threedp", version, about = "Scene-graph inference from depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a voxel shape belief from depth views with known camera poses.
    LearnShapes {
        #[arg(long)]
        views: PathBuf,
        /// Camera poses, or weighted particles of camera poses.
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Object grid size in cells.
        #[arg(long, value_delimiter = ',', default_values_t = [12, 12, 12])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        res: f64,
        /// Camera intrinsics as JSON (defaults to a 128x128 camera).
        #[arg(long)]
        camera: Option<PathBuf>,
    },
    /// Generate a synthetic scene directory.
    Generate {
        /// single, stacked, partial_view, partially_occluded or hidden.
        #[arg(long)]
        category: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Wall width for hidden scenes (cm); picked from the seed if unset.
        #[arg(long)]
        occluder_width: Option<f64>,
    },
    /// Infer poses and contact structure for a scene.
    Infer {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Disable structure moves.
        #[arg(long)]
        ablate_structure: bool,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Infer presence and pose of possibly hidden objects.
    InferExistence {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the pose samples here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score sample files against ground truth.
    Evaluate {
        /// Directory of scene directories, each holding `samples*.json` files.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Render the ground truth of a scene file.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("THREEDP_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Error::InvalidInput(format!("THREEDP_SEED={s:?} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed_override()? {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    v.sort();
    Ok(v)
}

/// Reads `{"poses": [...]}` as one exact particle, or
/// `{"particles": [{"weight": w, "poses": [...]}, ...]}`.
fn read_particles(path: &Path, map: &SceneMap) -> Result<PoseBeliefParticles> {
    let text = fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)?;
    let particle = |camera_poses, weight| PoseParticle { map: map.clone(), camera_poses, weight };
    let Some(list) = v.get("particles") else {
        return Ok(PoseBeliefParticles { particles: vec![particle(poses_from_json(&text)?, 1.0)] });
    };
    let list = list.as_array().ok_or_else(|| Error::Parse("particles must be an array".into()))?;
    let particles = list
        .iter()
        .map(|p| {
            let w = p.get("weight").and_then(Value::as_f64).ok_or_else(|| Error::Parse("particle without weight".into()))?;
            let poses = p.get("poses").ok_or_else(|| Error::Parse("particle without poses".into()))?;
            Ok(particle(poses_from_json(&json!({ "poses": poses }).to_string())?, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PoseBeliefParticles { particles })
}

fn learn_shapes(views: &Path, poses: &Path, out: &Path, dims: &[usize], res: f64, camera: Option<&Path>) -> Result<()> {
    let dims: [usize; 3] = dims.try_into().map_err(|_| Error::InvalidInput("--dims needs three sizes".into()))?;
    let camera: Camera = match camera {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => learning_camera(),
    };
    camera.validate()?;
    let images = sorted_entries(views)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "dpt"))
        .map(|p| load_depth(&p))
        .collect::<Result<Vec<_>>>()?;
    let map = SceneMap::room(dims, res);
    let belief = read_particles(poses, &map)?;
    let ctx = LearningContext { camera, ..LearningContext::default() };
    let learned = learn_shape(&images, &belief, &ctx)?;
    save_vox(out, &learned.belief)?;
    println!("{}", json!({ "views": images.len(), "occupied_mode_cells": learned.belief.mode_shape().occupied_count() }));
    Ok(())
}

fn generate(category: &str, seed: u64, out: &Path, config: Option<&Path>, width: Option<f64>) -> Result<()> {
    let cfg = load_config(config)?;
    let seed = seed_override()?.unwrap_or(seed);
    if category == HIDDEN_CATEGORY {
        use rand::SeedableRng;
        let width = width.unwrap_or(OCCLUDER_WIDTHS[(seed % OCCLUDER_WIDTHS.len() as u64) as usize]);
        let mut setup = HiddenSetup::new(width);
        if let Some(c) = cfg.camera {
            setup.camera = c;
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scene = generate_hidden(setup, seed, &mut rng)?;
        write_hidden(out, &scene)?;
        println!("{}", json!({ "id": format!("hidden_{seed}"), "occluder_width": width, "hidden_truth": scene.truth.is_some() }));
        return Ok(());
    }
    let category: Category = category.parse()?;
    let setup = cfg.setup();
    let spec = generate_seeded(category, &setup, seed)?;
    write_scene(out, &spec, &setup, None)?;
    println!("{}", json!({ "id": spec.id, "types": spec.types }));
    Ok(())
}

fn infer(scene: &Path, config: Option<&Path>, ablate: bool, samples: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let loaded = load_scene(scene)?;
    let r = infer_scene(&loaded, &cfg, ablate)?;
    let method = if ablate { "ablated" } else { "full" };
    write_samples(samples, &SamplesFile::new(method, cfg.seed, &r)?)?;
    println!("{}", json!({ "scene": loaded.spec.id, "method": method, "samples": r.samples.len(), "best_score": r.best_score }));
    Ok(())
}

fn infer_existence(scene: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let hidden = load_hidden(scene)?;
    let r = infer_hidden(&hidden, &cfg)?;
    if let Some(out) = out {
        fs::write(out, serde_json::to_string_pretty(&r)?)?;
    }
    println!("{}", json!({ "presence": r.presence, "presence_se": r.presence_se }));
    Ok(())
}

fn evaluate(results: &Path, report: &Path) -> Result<()> {
    let setup = RunConfig::default().setup();
    let mut scenes = Vec::new();
    for dir in sorted_entries(results)?.into_iter().filter(|d| d.join("scene.json").is_file()) {
        let scene = load_scene(&dir)?;
        let mut estimates = Vec::new();
        for f in sorted_entries(&dir)? {
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.starts_with("samples") && name.ends_with(".json") {
                let s = load_samples(&f)?;
                estimates.push((s.method.clone(), s.best_graph()?));
            }
        }
        scenes.push((scene, estimates));
    }
    let results: Vec<SceneResult> = scenes
        .iter()
        .flat_map(|(scene, ests)| {
            ests.iter().map(move |(m, g)| SceneResult { scene: &scene.spec, estimate: g, method: m.clone() })
        })
        .collect();
    let thresholds = [0.5, 1.0, 2.0];
    let rep = evaluate_suite(&results, &setup, &thresholds)?;
    fs::write(report, rep.to_csv())?;
    let curve: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    fs::write(report.with_extension("curve.csv"), rep.curve_csv(&curve))?;
    let summary: serde_json::Map<String, Value> =
        rep.accuracy.iter().map(|(m, acc)| (m.clone(), json!({ "accuracy": acc, "median_add_s_cm": rep.median(m) }))).collect();
    println!("{}", json!({ "thresholds_cm": thresholds, "methods": summary }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LearnShapes { views, poses, out, dims, res, camera } => {
            learn_shapes(&views, &poses, &out, &dims, res, camera.as_deref())
        }
        Command::Generate { category, seed, out, config, occluder_width } => {
            generate(&category, seed, &out, config.as_deref(), occluder_width)
        }
        Command::Infer { scene, config, ablate_structure, samples } => {
            infer(&scene, config.as_deref(), ablate_structure, &samples)
        }
        Command::InferExistence { scene, config, out } => infer_existence(&scene, config.as_deref(), out.as_deref()),
        Command::Evaluate { results, report } => evaluate(&results, &report),
        Command::Render { scene, out } => render_scene_file(&scene).and_then(|img| save_depth(&out, &img)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
