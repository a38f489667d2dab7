use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sse_core::generator::Checkpoint;
use sse_core::maskgen::MaskKind;
use sse_core::metrics::{evaluate, EvalOptions};
use sse_core::shapeworld::pngio::rgb_png_bytes;
use sse_core::shapeworld::{ClassCatalog, CorpusManifest};
use sse_core::training::{latest_checkpoint, TrainConfig};
use sse_core::ModelTrainer;
use sse_service::edit::{edit, EditRequest};
use sse_service::http::{router, AppState};
use sse_service::panorama::panorama;
use sse_service::store::{load_dataset, write_dataset, LoadedModel, SceneStore};

#[derive(Parser)]
#[command(name = "sse", version, about = "Semantic scene editing with per-region styles")]
struct Cli {
    /// Default seed for every command that draws random numbers.
    #[arg(long, global = true, env = "SSE_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
    Smoke,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic scene corpora.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Train a model; resumes from the latest checkpoint in --out.
    Train {
        /// TrainConfig JSON; overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start over even if --out holds checkpoints.
        #[arg(long)]
        fresh: bool,
    },
    /// Desk-FID, mIoU, accuracy and diversity per mask protocol.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of freeform, extension, outpainting, addobj.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one EditRequest JSON.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        request: PathBuf,
        /// Scenes that request ids refer to; the validation corpus by default.
        #[arg(long)]
        data: Option<PathBuf>,
        /// EditResult JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the output image.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Extend a scene to the right by repeated outpainting.
    Panorama {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// HTTP service for the editor.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Write a manifest and scene files.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
}

fn scenes_for(data: Option<&Path>, model: &LoadedModel) -> Result<SceneStore> {
    Ok(match data {
        Some(p) => SceneStore::new(load_dataset(p)?),
        None => SceneStore::validation(model.resolution())?,
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn train(config: Option<PathBuf>, preset: Preset, data: &Path, out: &Path, fresh: bool, seed: Option<u64>) -> Result<()> {
    let classes = ClassCatalog::default().len();
    let mut config = match config {
        Some(p) => serde_json::from_slice(&std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?)?,
        None => match preset {
            Preset::Full => TrainConfig::full(classes),
            Preset::Desk => TrainConfig::desk(classes),
            Preset::Smoke => TrainConfig::smoke(classes),
        },
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut scenes = load_dataset(data)?;
    if scenes.len() < config.scenes {
        bail!("config asks for {} scenes but {} has {}", config.scenes, data.display(), scenes.len());
    }
    scenes.truncate(config.scenes);
    let mut trainer = match (fresh, latest_checkpoint(out)?) {
        (false, Some(p)) => {
            log::info!("resuming from {}", p.display());
            let t = ModelTrainer::from_checkpoint(&Checkpoint::load(&p)?)?;
            if t.config != config {
                bail!("{} was written with a different config; pass --fresh to start over", p.display());
            }
            t
        }
        _ => ModelTrainer::new(config)?,
    };
    trainer.run(&scenes, Some(out), |s| {
        if s.step % 50 == 0 {
            log::info!("step {} epoch {} L_1 {:.4} L_P {:.4} L_adv {:.4} L_D {:.4}", s.step, s.epoch, s.l_1, s.l_p, s.l_adv, s.l_d);
        }
    })?;
    Ok(())
}

async fn serve(host: &str, port: u16, checkpoint: &Path, data: Option<&Path>) -> Result<()> {
    let model = LoadedModel::load(checkpoint)?;
    let scenes = scenes_for(data, &model)?;
    log::info!("model {} with {} scenes", model.fingerprint, scenes.len());
    let app = router(AppState::new(model, scenes));
    let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    match cli.command {
        Command::Dataset { action: DatasetAction::Gen { out, count, resolution } } => {
            let manifest = CorpusManifest::new(seed.unwrap_or(0), count, resolution);
            write_dataset(&out, &manifest)?;
            eprintln!("wrote {count} scenes to {}", out.display());
        }
        Command::Train { config, preset, data, out, fresh } => train(config, preset, &data, &out, fresh, seed)?,
        Command::Eval { checkpoint, data, kinds, out } => {
            let model = LoadedModel::load(&checkpoint)?;
            let scenes = load_dataset(&data)?;
            let mut opts = EvalOptions { seed: seed.unwrap_or(0), ..EvalOptions::default() };
            if !kinds.is_empty() {
                opts.kinds = kinds.iter().map(|k| serde_json::from_value::<MaskKind>(k.clone().into())).collect::<Result<_, _>>()?;
            }
            write_json(out.as_deref(), &evaluate(&model.model, &scenes, &opts)?)?;
        }
        Command::Edit { checkpoint, request, data, out, png } => {
            let model = LoadedModel::load(&checkpoint)?;
            let scenes = scenes_for(data.as_deref(), &model)?;
            let mut req: EditRequest = serde_json::from_slice(&std::fs::read(&request)?)?;
            if let (Some(s), 0) = (seed, req.seed) {
                req.seed = s;
            }
            let started = Instant::now();
            let output = edit(&model, &scenes, &req)?;
            eprintln!("edit took {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
            if let Some(p) = png {
                std::fs::write(&p, rgb_png_bytes(output.scene.width, output.scene.height, &output.image)?)?;
            }
            write_json(out.as_deref(), &output.result)?;
        }
        Command::Panorama { checkpoint, data, scene, steps, fraction, out } => {
            let model = LoadedModel::load(&checkpoint)?;
            let scenes = scenes_for(data.as_deref(), &model)?;
            let pano = panorama(&model, scenes.get(scene)?, steps, fraction)?;
            std::fs::write(&out, rgb_png_bytes(pano.width, pano.height, &pano.image)?)?;
            eprintln!("wrote {}×{} panorama to {}", pano.width, pano.height, out.display());
        }
        Command::Serve { port, host, checkpoint, data } => {
            tokio::runtime::Runtime::new()?.block_on(serve(&host, port, &checkpoint, data.as_deref()))?;
        }
    }
    Ok(())
}
