//! The familiar reset / step loop with a uniform random policy.

use std::sync::Arc;

use histogym::env::{Env, EnvConfig};
use histogym::policy::{Policy, RandomPolicy};
use histogym::pyramid::VirtualSlide;

fn main() -> histogym::Result<()> {
    let (slide, lesions) = VirtualSlide::generate_synthetic(42, 2048, 128, 1)?;
    let mut env = Env::new(Arc::new(slide), Arc::new(lesions), None, EnvConfig::default())?;
    println!("action space {:?}", env.action_space());
    println!("observation space {:?}", env.observation_space());

    let mut policy = RandomPolicy::new(1);
    for episode in 0..5 {
        let (_obs, info) = env.reset(Some(episode))?;
        let mut total = 0.0;
        let mut best: f64 = info.overlap_ratio;
        let outcome = loop {
            let step = env.step(policy.act(&env))?;
            total += step.reward;
            best = best.max(step.info.overlap_ratio);
            if step.done {
                break "success";
            }
            if step.truncated {
                break "truncated";
            }
        };
        println!(
            "episode {episode}: {outcome:<9} after {:>3} steps, return {total:>8.3}, best overlap {best:.3}",
            env.state().count
        );
    }
    Ok(())
}
