//! `meshfeat`: multi-resolution vertex features for neural fields on
//! meshes. Subcommands cover scene synthesis, mesh simplification,
//! training, evaluation, rendering, and the inference benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use meshfeat::encoding::FeatureSet;
use meshfeat::mesh::Mesh;
use meshfeat::nn::{Mlp, OutputActivation, RffEncoder};
use meshfeat::pipeline::checkpoint::{load_checkpoint, read_config, Checkpoint, LoadedCheckpoint};
use meshfeat::pipeline::dataset::{load_scene_mesh, load_train_views};
use meshfeat::pipeline::eval::gamma_image;
use meshfeat::pipeline::{
    benchmark_inference, evaluate, prepare_samples, random_surface_batch, render_model_view,
    train, Precision, Task, TrainConfig,
};
use meshfeat::render::bvh::Bvh;
use meshfeat::render::camera::load_view;
use meshfeat::simplify::{build_hierarchy, Hierarchy};
use meshfeat::synth::{generate_scene, SceneKind, SceneSpec};
use meshfeat::{Error, Scalar};

#[derive(Parser)]
#[command(name = "meshfeat", version, about = "Neural fields on meshes with multi-resolution vertex features")]
struct Cli {
    /// Worker thread cap (1 = deterministic); falls back to MESHFEAT_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Texture,
    Brdf,
}

impl From<TaskArg> for Task {
    fn from(value: TaskArg) -> Task {
        match value {
            TaskArg::Texture => Task::Texture,
            TaskArg::Brdf => Task::Brdf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth {
        /// checker-sphere | two-material-sphere | deform-pair
        #[arg(long)]
        scene: String,
        #[arg(long)]
        out: PathBuf,
        /// Training view count.
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        test_views: Option<usize>,
        /// Square image resolution in pixels.
        #[arg(long)]
        res: Option<usize>,
        /// Training lights per view (BRDF scene only).
        #[arg(long)]
        lights: Option<usize>,
        #[arg(long)]
        test_lights: Option<usize>,
        /// Icosphere subdivision level.
        #[arg(long)]
        subdiv: Option<u32>,
    },
    /// Decimate a mesh to a resolution sequence and write the hierarchy
    /// sidecar.
    Simplify {
        #[arg(long)]
        mesh: PathBuf,
        /// Comma-separated descending ratios starting at 1, e.g.
        /// 1,0.1,0.05,0.01.
        #[arg(long)]
        resolutions: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a scene directory.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        /// JSON config; CLI flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda_reg: Option<f64>,
        #[arg(long)]
        lr_mlp: Option<f64>,
        #[arg(long)]
        lr_features: Option<f64>,
        #[arg(long)]
        l2_mlp: Option<f64>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        hidden_layers: Option<usize>,
        #[arg(long)]
        resolutions: Option<String>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
        /// Shade with interpolated vertex normals instead of face normals
        /// (BRDF task).
        #[arg(long)]
        smooth_normals: bool,
    },
    /// Evaluate a checkpoint against a view directory.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// View subdirectory of the scene (default: views_test).
        #[arg(long, default_value = "views_test")]
        views_dir: String,
        /// Report JSON path (default: alongside the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for rendered images of every evaluated view.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        /// Shade with interpolated vertex normals instead of face normals
        /// (BRDF task).
        #[arg(long)]
        smooth_normals: bool,
    },
    /// Render one view through a checkpoint.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// View JSON path.
        #[arg(long)]
        view: PathBuf,
        /// Output image (.png or .pfm).
        #[arg(long)]
        out: PathBuf,
        /// Use only the N coarsest resolutions (progressive unlock).
        #[arg(long)]
        levels: Option<usize>,
        /// Shade with interpolated vertex normals instead of face normals
        /// (BRDF task).
        #[arg(long)]
        smooth_normals: bool,
    },
    /// Inference speed of the checkpointed model versus the RFF baseline.
    Bench {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1 << 15)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 300)]
        reps: usize,
        /// Fourier frequency count of the baseline encoder.
        #[arg(long, default_value_t = 128)]
        rff_frequencies: usize,
        #[arg(long, default_value_t = 12.0)]
        rff_sigma: f64,
        /// Report JSON path (optional).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}

fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("MESHFEAT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }

    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalFailure { .. } | Error::NonConvergence { .. } => 3,
                _ => 2,
            }
        }
    }
}

fn parse_resolutions(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad resolution {tok:?}")))
        })
        .collect()
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth {
            scene,
            out,
            views,
            test_views,
            res,
            lights,
            test_lights,
            subdiv,
        } => {
            let kind: SceneKind = scene.parse()?;
            let mut spec = SceneSpec::defaults(kind);
            if let Some(v) = views {
                spec.views = v;
            }
            if let Some(v) = test_views {
                spec.test_views = v;
            }
            if let Some(v) = res {
                spec.image_size = v;
            }
            if let Some(v) = lights {
                spec.lights = v;
            }
            if let Some(v) = test_lights {
                spec.test_lights = v;
            }
            if let Some(v) = subdiv {
                spec.subdivisions = v;
            }
            let written = generate_scene(&spec, &out)?;
            println!(
                "wrote scene to {} ({} training images, {} test views)",
                out.display(),
                written,
                spec.test_views
            );
            Ok(())
        }
        Command::Simplify {
            mesh,
            resolutions,
            out,
        } => {
            let mesh = Mesh::load_obj(&mesh)?;
            let ratios = parse_resolutions(&resolutions)?;
            let hierarchy = build_hierarchy(&mesh, &ratios)?;
            hierarchy.save(&out)?;
            println!("{:<8} {:>12} {:>12} {:>10}", "level", "vertices", "faces", "ratio");
            for level in 0..hierarchy.level_count() {
                println!(
                    "{:<8} {:>12} {:>12} {:>10.4}",
                    level,
                    hierarchy.mesh(level).vertex_count(),
                    hierarchy.mesh(level).face_count(),
                    hierarchy.resolutions()[level]
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Train {
            scene,
            task,
            config,
            out,
            epochs,
            batch,
            seed,
            lambda_reg,
            lr_mlp,
            lr_features,
            l2_mlp,
            feature_dim,
            hidden_dim,
            hidden_layers,
            resolutions,
            precision,
            smooth_normals,
        } => {
            let mut cfg = match (&config, task) {
                (Some(path), _) => TrainConfig::from_json_file(path)?,
                (None, Some(task)) => TrainConfig::for_task(task.into()),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "either --task or --config is required".into(),
                    ))
                }
            };
            if let Some(task) = task {
                cfg.task = task.into();
            }
            if let Some(v) = epochs {
                cfg.epochs = Some(v);
            }
            if let Some(v) = batch {
                cfg.batch_size = Some(v);
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = lambda_reg {
                cfg.lambda_reg = v;
            }
            if let Some(v) = lr_mlp {
                cfg.lr_mlp = v;
            }
            if let Some(v) = lr_features {
                cfg.lr_features = v;
            }
            if let Some(v) = l2_mlp {
                cfg.l2_mlp = v;
            }
            if let Some(v) = feature_dim {
                cfg.feature_dim = v;
            }
            if let Some(v) = hidden_dim {
                cfg.hidden_dim = v;
            }
            if let Some(v) = hidden_layers {
                cfg.hidden_layers = v;
            }
            if let Some(text) = resolutions {
                cfg.resolutions = parse_resolutions(&text)?;
            }
            if let Some(p) = precision {
                cfg.precision = match p {
                    PrecisionArg::F32 => Precision::F32,
                    PrecisionArg::F64 => Precision::F64,
                };
            }
            cfg.validate()?;
            run_training(&cfg, &scene, &out, smooth_normals)
        }
        Command::Eval {
            scene,
            checkpoint,
            views_dir,
            out,
            dump_dir,
            smooth_normals,
        } => {
            let mesh = load_scene_mesh(&scene)?;
            let (loaded, _) = open_checkpoint(&checkpoint, &mesh)?;
            let bvh = Bvh::build(&mesh);
            let views =
                meshfeat::render::camera::load_views_dir(scene.join(&views_dir))?;
            let normals = smooth_normals.then(|| mesh.vertex_normals());
            let (report, images) = match &loaded {
                LoadedCheckpoint::F32(c) => eval_with_images(c, &mesh, &bvh, &views, normals.as_deref())?,
                LoadedCheckpoint::F64(c) => eval_with_images(c, &mesh, &bvh, &views, normals.as_deref())?,
            };
            println!(
                "{:<8} {:>12} {:>12} {:>12}",
                "view", "psnr dB", "dssim", "dssim x100"
            );
            for (i, v) in report.views.iter().enumerate() {
                println!(
                    "{:<8} {:>12.3} {:>12.5} {:>12.3}",
                    i, v.psnr_db, v.dssim, v.dssim_x100
                );
            }
            println!(
                "mean: psnr {:.3} dB, dssim x100 {:.3} ({} params{})",
                report.mean_psnr_db,
                report.mean_dssim_x100,
                report.param_count,
                if report.gamma_space { ", gamma space" } else { "" }
            );
            let out = out.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join("report.json")
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)
                .map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
            if let Some(dir) = dump_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (i, img) in images.iter().enumerate() {
                    let path = dir.join(format!("render_{i:03}.png"));
                    img.save_png(&path)?;
                }
                println!("wrote {} renders to {}", images.len(), dir.display());
            }
            Ok(())
        }
        Command::Render {
            scene,
            checkpoint,
            view,
            out,
            levels,
            smooth_normals,
        } => {
            let mesh = load_scene_mesh(&scene)?;
            let (loaded, config) = open_checkpoint(&checkpoint, &mesh)?;
            let bvh = Bvh::build(&mesh);
            let view = load_view(&view)?;
            let normals = smooth_normals.then(|| mesh.vertex_normals());
            let image = match loaded {
                LoadedCheckpoint::F32(mut c) => {
                    if let Some(k) = levels {
                        c.features.zero_finest_levels(k);
                    }
                    render_model_view(
                        &c.features, &c.mlp, &mesh, &bvh, &view, config.task, [0.0; 3],
                        normals.as_deref(),
                    )?
                    .0
                }
                LoadedCheckpoint::F64(mut c) => {
                    if let Some(k) = levels {
                        c.features.zero_finest_levels(k);
                    }
                    render_model_view(
                        &c.features, &c.mlp, &mesh, &bvh, &view, config.task, [0.0; 3],
                        normals.as_deref(),
                    )?
                    .0
                }
            };
            match out.extension().and_then(|e| e.to_str()) {
                Some("pfm") => image.save_pfm(&out)?,
                Some("png") => match config.task {
                    // BRDF renders are linear radiance; tone-map for PNG.
                    Task::Brdf => gamma_image(&image).save_png(&out)?,
                    Task::Texture => image.save_png(&out)?,
                },
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unsupported output extension {other:?}"
                    )))
                }
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Bench {
            scene,
            checkpoint,
            batch,
            warmup,
            reps,
            rff_frequencies,
            rff_sigma,
            out,
        } => {
            let mesh = load_scene_mesh(&scene)?;
            let (loaded, config) = open_checkpoint(&checkpoint, &mesh)?;
            let (features, mlp) = match loaded {
                LoadedCheckpoint::F32(c) => (c.features, c.mlp),
                LoadedCheckpoint::F64(c) => (features_to_f32(&c.features), mlp_to_f32(&c.mlp)),
            };
            let rff: RffEncoder<f32> =
                RffEncoder::new(rff_frequencies, rff_sigma, config.seed.wrapping_add(7));
            let mut baseline_sizes = vec![rff.output_dim()];
            baseline_sizes.extend([128usize; 6]);
            baseline_sizes.push(config.output_dim());
            let baseline: Mlp<f32> = Mlp::new(
                &baseline_sizes,
                OutputActivation::Sigmoid,
                config.seed.wrapping_add(8),
            );
            let (samples, points) = random_surface_batch(&mesh, batch, config.seed);
            let report = benchmark_inference(
                &features,
                &mlp,
                &rff,
                &baseline,
                &samples,
                points.view(),
                warmup,
                reps,
            )?;
            print!("{}", report.table());
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                    .map_err(|e| Error::io(&path, e))?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Load a checkpoint, rebuilding the hierarchy from the sidecar next to it
/// or from the mesh and the stored resolution list.
fn open_checkpoint(
    path: &Path,
    mesh: &Mesh,
) -> Result<(LoadedCheckpoint, TrainConfig), Error> {
    let config = read_config(path)?;
    let sidecar = path.parent().map(|d| d.join("hierarchy.mfh"));
    let hierarchy = match sidecar {
        Some(p) if p.exists() => Hierarchy::load(&p)?,
        _ => build_hierarchy(mesh, &config.resolutions)?,
    };
    let loaded = load_checkpoint(path, Arc::new(hierarchy))?;
    Ok((loaded, config))
}

fn eval_with_images<T: Scalar>(
    c: &Checkpoint<T>,
    mesh: &Mesh,
    bvh: &Bvh,
    views: &[meshfeat::render::camera::View],
    vertex_normals: Option<&[meshfeat::nalgebra::Vector3<f64>]>,
) -> Result<(meshfeat::pipeline::EvalReport, Vec<meshfeat::render::ImageBuf>), Error> {
    let report = evaluate(&c.features, &c.mlp, mesh, bvh, views, c.config.task, vertex_normals)?;
    let mut images = Vec::with_capacity(views.len());
    for view in views {
        let (img, _) = render_model_view(
            &c.features, &c.mlp, mesh, bvh, view, c.config.task, [0.0; 3], vertex_normals,
        )?;
        images.push(match c.config.task {
            Task::Brdf => gamma_image(&img),
            Task::Texture => img,
        });
    }
    Ok((report, images))
}

fn features_to_f32(features: &FeatureSet<f64>) -> FeatureSet<f32> {
    FeatureSet::from_levels(
        features.hierarchy().clone(),
        features
            .levels()
            .iter()
            .map(|z| z.mapv(|v| v as f32))
            .collect(),
    )
    .expect("shapes preserved by casting")
}

fn mlp_to_f32(mlp: &Mlp<f64>) -> Mlp<f32> {
    Mlp::from_parts(
        mlp.weights().iter().map(|w| w.mapv(|v| v as f32)).collect(),
        mlp.biases().iter().map(|b| b.mapv(|v| v as f32)).collect(),
        mlp.output_activation(),
    )
    .expect("shapes preserved by casting")
}

fn run_training(
    config: &TrainConfig,
    scene: &Path,
    out: &Path,
    smooth_normals: bool,
) -> Result<(), Error> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mesh = load_scene_mesh(scene)?;
    let views = load_train_views(scene)?;
    println!(
        "scene: {} vertices, {} faces, {} views",
        mesh.vertex_count(),
        mesh.face_count(),
        views.len()
    );
    let hierarchy = Arc::new(build_hierarchy(&mesh, &config.resolutions)?);
    hierarchy.save(out.join("hierarchy.mfh"))?;
    let counts = hierarchy.vertex_counts();
    println!("hierarchy levels: {counts:?}");
    let bvh = Bvh::build(&mesh);
    let normals = smooth_normals.then(|| mesh.vertex_normals());
    let dataset = prepare_samples(&mesh, &bvh, &views, config.task, normals.as_deref())?;
    println!("dataset: {} records", dataset.len());

    match config.precision {
        Precision::F32 => finish_training::<f32>(config, hierarchy, &dataset, out),
        Precision::F64 => finish_training::<f64>(config, hierarchy, &dataset, out),
    }
}

fn finish_training<T: Scalar>(
    config: &TrainConfig,
    hierarchy: Arc<Hierarchy>,
    dataset: &meshfeat::pipeline::Dataset,
    out: &Path,
) -> Result<(), Error> {
    let result = train::<T>(config, hierarchy.clone(), dataset)?;

    let mut csv = String::from("epoch,data_loss,reg_loss,lr,wall_time\n");
    for row in &result.log {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.data_loss, row.reg_loss, row.lr, row.wall_time
        ));
    }
    let log_path = out.join("log.csv");
    std::fs::write(&log_path, csv).map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = Checkpoint {
        config: config.clone(),
        epoch: config.epochs(),
        hierarchy_hash: hierarchy.sha256(),
        features: result.features,
        mlp: result.mlp,
        adam: result.adam,
    };
    checkpoint.save(out.join("checkpoint.mfc"))?;

    let last = result.log.last().expect("at least one epoch");
    let report = serde_json::json!({
        "task": config.task,
        "epochs": config.epochs(),
        "records": dataset.len(),
        "skipped_views": dataset.skipped_views,
        "final_data_loss": last.data_loss,
        "final_reg_loss": last.reg_loss,
        "wall_time": last.wall_time,
        "param_count_features": checkpoint.features.param_count(),
        "param_count_mlp": checkpoint.mlp.param_count(),
        "param_count_total":
            checkpoint.features.param_count() + checkpoint.mlp.param_count(),
    });
    let report_path = out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .map_err(|e| Error::io(&report_path, e))?;
    println!(
        "trained {} epochs: data loss {:.6}, wrote {}",
        config.epochs(),
        last.data_loss,
        out.join("checkpoint.mfc").display()
    );
    Ok(())
}
