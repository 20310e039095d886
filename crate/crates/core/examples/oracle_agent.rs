//! Ground-truth navigation on each difficulty preset, with a trajectory printout.

use std::sync::Arc;

use histogym::env::{Complexity, Env, EnvConfig};
use histogym::policy::OraclePolicy;
use histogym::pyramid::VirtualSlide;
use histogym::rollout::run_episode;

fn main() -> histogym::Result<()> {
    let (slide, lesions) = VirtualSlide::generate_synthetic(42, 8192, 128, 1)?;
    let (slide, lesions) = (Arc::new(slide), Arc::new(lesions));
    let mut policy = OraclePolicy::new(&lesions)?;
    println!("target centroid {:?}", policy.target());

    for complexity in [Complexity::Easy, Complexity::Medium, Complexity::Hard] {
        let config = EnvConfig { complexity, ..EnvConfig::default() };
        let mut env = Env::new(slide.clone(), lesions.clone(), None, config)?;
        let (summary, records) = run_episode(&mut env, &mut policy, Some(0), None)?;
        println!(
            "\n{complexity:?} levels {:?}: success {} in {} steps, return {:.3}",
            env.selected_levels(),
            summary.success,
            summary.steps,
            summary.episode_return
        );
        for r in &records {
            println!(
                "  {:>2} {:<20} pos {:?} ratio {:.3} reward {:+.3}",
                r.step,
                format!("{:?}", r.action),
                r.agent_pos,
                r.overlap_ratio,
                r.reward
            );
        }
    }
    Ok(())
}
