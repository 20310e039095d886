use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::env::{Env, EpisodeReturn};
use crate::error::{Error, Result};
use crate::policy::{OraclePolicy, Policy, RandomPolicy};
use crate::pyramid::{write_dzi, VirtualSlide};
use crate::trace::{TraceRecord, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub episode_return: f64,
    pub steps: u32,
    pub success: bool,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutSummary {
    pub fn success_rate(&self) -> f64 {
        self.mean(|e| if e.success { 1.0 } else { 0.0 })
    }

    pub fn mean_return(&self) -> f64 {
        self.mean(|e| e.episode_return)
    }

    pub fn mean_steps(&self) -> f64 {
        self.mean(|e| e.steps as f64)
    }

    fn mean(&self, f: impl Fn(&EpisodeSummary) -> f64) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(f).sum::<f64>() / self.episodes.len() as f64
    }
}

impl fmt::Display for RolloutSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>12} {:>6} {:>8}", "episode", "return", "steps", "success")?;
        for e in &self.episodes {
            writeln!(
                f,
                "{:>8} {:>12.4} {:>6} {:>8}",
                e.episode, e.episode_return, e.steps, e.success
            )?;
        }
        write!(
            f,
            "mean return {:.4}, mean steps {:.2}, success rate {:.1}%",
            self.mean_return(),
            self.mean_steps(),
            100.0 * self.success_rate()
        )
    }
}

/// Run one episode from a fresh reset, optionally logging every step.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: Option<u64>,
    trace: Option<&Path>,
) -> Result<(EpisodeSummary, Vec<TraceRecord>)> {
    env.reset(seed)?;
    let mut sink = trace.map(TraceSink::create).transpose()?;
    let mut ret = EpisodeReturn::new();
    let mut records = Vec::new();
    let success = loop {
        let action = policy.act(env);
        let started = Instant::now();
        let result = env.step(action)?;
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        ret.add(result.reward);
        let record = TraceRecord::from_step(action, &result, elapsed);
        if let Some(sink) = sink.as_mut() {
            sink.log_step(&record)?;
        }
        records.push(record);
        if result.done || result.truncated {
            break result.done;
        }
    };
    if let Some(sink) = sink.as_mut() {
        sink.flush()?;
    }
    Ok((
        EpisodeSummary {
            episode: 0,
            episode_return: ret.total(),
            steps: ret.steps(),
            success,
            trace: trace.map(Path::to_path_buf),
        },
        records,
    ))
}

/// Run `episodes` episodes with a built-in policy; traces go to `trace_dir/episode_NNNN.jsonl`.
pub fn run_rollouts(
    env: &mut Env,
    policy: PolicyKind,
    episodes: u32,
    trace_dir: Option<&Path>,
) -> Result<RolloutSummary> {
    let seed = env.config().seed;
    let mut policy: Box<dyn Policy> = match policy {
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::Oracle => Box::new(OraclePolicy::new(env.annotations())?),
    };
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    }
    let mut out = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        let path = trace_dir.map(|d| d.join(format!("episode_{ep:04}.jsonl")));
        let (mut summary, _) =
            run_episode(env, policy.as_mut(), Some(seed.wrapping_add(ep as u64)), path.as_deref())?;
        summary.episode = ep;
        out.push(summary);
    }
    Ok(RolloutSummary { episodes: out })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSlide {
    pub descriptor: PathBuf,
    pub annotations: PathBuf,
}

/// Write a synthetic slide as `slide.dzi` + `slide_files/` and its lesions as `slide.xml`.
pub fn generate_to_dir(
    seed: u64,
    base_dim: u32,
    tile_size: u32,
    lesion_count: usize,
    out_dir: impl AsRef<Path>,
) -> Result<(GeneratedSlide, VirtualSlide, AnnotationSet)> {
    let out_dir = out_dir.as_ref();
    let (slide, ann) = VirtualSlide::generate_synthetic(seed, base_dim, tile_size, lesion_count)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
    let descriptor = out_dir.join("slide.dzi");
    write_dzi(&slide, &descriptor)?;
    let annotations = out_dir.join("slide.xml");
    std::fs::write(&annotations, ann.to_asap_xml()).map_err(|e| Error::io_at(&annotations, e))?;
    Ok((
        GeneratedSlide {
            descriptor,
            annotations,
        },
        slide,
        ann,
    ))
}
