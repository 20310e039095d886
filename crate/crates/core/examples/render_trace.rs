//! Log an oracle episode to JSONL, read it back and render it as a PNG overview.
//!
//! `cargo run --release --example render_trace -- [out_dir]`

use std::path::PathBuf;
use std::sync::Arc;

use histogym::env::{Env, EnvConfig};
use histogym::policy::OraclePolicy;
use histogym::pyramid::VirtualSlide;
use histogym::rollout::run_episode;
use histogym::trace::{read_trace, render_episode};

fn main() -> histogym::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "trace_demo".into()));
    std::fs::create_dir_all(&out)?;
    let (slide, lesions) = VirtualSlide::generate_synthetic(42, 4096, 128, 1)?;
    let mut env = Env::new(Arc::new(slide), Arc::new(lesions), None, EnvConfig::default())?;
    let mut policy = OraclePolicy::new(env.annotations())?;

    let trace_path = out.join("oracle.jsonl");
    let (summary, _) = run_episode(&mut env, &mut policy, Some(0), Some(&trace_path))?;
    let records = read_trace(&trace_path)?;
    println!("{} steps, success {}, trace {}", records.len(), summary.success, trace_path.display());

    let png = out.join("oracle.png");
    let img = render_episode(env.slide(), env.annotations(), &records, &png, 1024)?;
    println!("{}x{} overview -> {}", img.width(), img.height(), png.display());
    Ok(())
}
