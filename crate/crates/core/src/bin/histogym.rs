use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use histogym::annotations::AnnotationSet;
use histogym::env::{ActionMode, Complexity, Env, EnvConfig, ObservationMode, RewardMode};
use histogym::featurepack::FeaturePack;
use histogym::protocol::{serve, EnvFactory, Transport};
use histogym::pyramid::VirtualSlide;
use histogym::rollout::{generate_to_dir, run_rollouts, PolicyKind};
use histogym::trace::{read_trace, render_episode, DEFAULT_RENDER_DIM};
use histogym::{Error, Result};

#[derive(Parser)]
#[command(name = "histogym", version, about = "Whole-slide navigation environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic slide as a DZI pyramid plus ASAP annotation XML.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 4096)]
        base_dim: u32,
        #[arg(long, default_value_t = 128)]
        tile_size: u32,
        #[arg(long, default_value_t = 1)]
        lesions: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run scripted episodes and print a summary table.
    Rollout {
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 10)]
        episodes: u32,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Serve the line-delimited JSON protocol on stdio or TCP.
    Serve {
        #[command(flatten)]
        scenario: Scenario,
        /// Listen on 127.0.0.1:PORT instead of stdio.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Render a trace file over the slide thumbnail as PNG.
    Render {
        #[command(flatten)]
        slide: SlideArgs,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RENDER_DIM)]
        out_dim: u32,
    },
}

#[derive(Args, Clone)]
struct SlideArgs {
    /// DZI descriptor; a synthetic slide is generated when omitted.
    #[arg(long)]
    slide: Option<PathBuf>,
    /// ASAP annotation XML for --slide.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    synthetic_seed: u64,
    #[arg(long, default_value_t = 4096)]
    synthetic_dim: u32,
    #[arg(long, default_value_t = 1)]
    synthetic_lesions: usize,
    #[arg(long, default_value_t = 128)]
    tile_size: u32,
}

/// Env flags mirror the EnvConfig JSON fields and override `--config`.
#[derive(Args, Clone)]
struct Scenario {
    #[command(flatten)]
    slide: SlideArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    complexity: Option<String>,
    #[arg(long, value_enum)]
    observation_mode: Option<ObservationMode>,
    #[arg(long)]
    feature_pack: Option<PathBuf>,
    #[arg(long, value_enum)]
    action_mode: Option<ActionMode>,
    #[arg(long, value_enum)]
    reward_mode: Option<RewardMode>,
    #[arg(long)]
    success_threshold: Option<f64>,
    #[arg(long)]
    step_penalty: Option<f64>,
    #[arg(long)]
    success_bonus: Option<f64>,
    #[arg(long)]
    max_step: Option<u32>,
    #[arg(long)]
    normalize: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pan_gain: Option<f64>,
    #[arg(long)]
    random_start: bool,
}

impl SlideArgs {
    fn load(&self) -> Result<(VirtualSlide, AnnotationSet)> {
        match &self.slide {
            Some(path) => {
                let slide = VirtualSlide::open_dzi(path)?;
                let ann = match &self.annotations {
                    Some(xml) => AnnotationSet::from_path(xml)?,
                    None => AnnotationSet::empty(),
                };
                Ok((slide, ann))
            }
            None => VirtualSlide::generate_synthetic(
                self.synthetic_seed,
                self.synthetic_dim,
                self.tile_size,
                self.synthetic_lesions,
            ),
        }
    }
}

impl Scenario {
    fn config(&self) -> Result<EnvConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: Some(path.clone()),
                    source: e,
                })?;
                EnvConfig::from_json(&text)?
            }
            None => EnvConfig {
                tile_size: self.slide.tile_size,
                ..EnvConfig::default()
            },
        };
        if let Some(v) = &self.complexity {
            c.complexity = v.parse::<Complexity>()?;
        }
        if let Some(v) = self.observation_mode {
            c.observation_mode = v;
        }
        if let Some(v) = &self.feature_pack {
            c.feature_pack = Some(v.clone());
        }
        if let Some(v) = self.action_mode {
            c.action_mode = v;
        }
        if let Some(v) = self.reward_mode {
            c.reward_mode = v;
        }
        if let Some(v) = self.success_threshold {
            c.success_threshold = v;
        }
        if let Some(v) = self.step_penalty {
            c.step_penalty = v;
        }
        if let Some(v) = self.success_bonus {
            c.success_bonus = v;
        }
        if let Some(v) = self.max_step {
            c.max_step = v;
        }
        if let Some(v) = &self.normalize {
            c.normalize = serde_json::from_value(serde_json::Value::String(v.clone()))
                .map_err(|_| Error::Config(format!("unknown normalize '{v}'")))?;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.pan_gain {
            c.pan_gain = v;
        }
        c.random_start |= self.random_start;
        c.validate()?;
        Ok(c)
    }

    fn factory(&self) -> Result<EnvFactory> {
        let config = self.config()?;
        let (slide, ann) = self.slide.load()?;
        let (slide, ann) = (Arc::new(slide), Arc::new(ann));
        let pack = match (&config.observation_mode, &config.feature_pack) {
            (ObservationMode::Features, Some(p)) => Some(Arc::new(FeaturePack::open(p)?)),
            _ => None,
        };
        // fail fast on a bad scenario before serving anything
        Env::new(slide.clone(), ann.clone(), pack.clone(), config.clone())?;
        Ok(Arc::new(move || {
            Env::new(slide.clone(), ann.clone(), pack.clone(), config.clone())
        }))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            seed,
            base_dim,
            tile_size,
            lesions,
            out_dir,
        } => {
            let (paths, _, ann) = generate_to_dir(seed, base_dim, tile_size, lesions, &out_dir)?;
            println!("slide       {}", paths.descriptor.display());
            println!("annotations {} ({} polygons)", paths.annotations.display(), ann.len());
        }
        Command::Rollout {
            scenario,
            policy,
            episodes,
            trace_dir,
        } => {
            let mut env = scenario.factory()?()?;
            let summary = run_rollouts(&mut env, policy, episodes, trace_dir.as_deref())?;
            println!("{summary}");
        }
        Command::Serve { scenario, port } => {
            let transport = port.map_or(Transport::Stdio, Transport::Tcp);
            serve(scenario.factory()?, transport)?;
        }
        Command::Render {
            slide,
            trace,
            out,
            out_dim,
        } => {
            let (slide, ann) = slide.load()?;
            let records = read_trace(&trace)?;
            render_episode(&slide, &ann, &records, &out, out_dim)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HISTOGYM_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
