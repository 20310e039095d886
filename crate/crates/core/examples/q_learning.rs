//! Tabular Q-learning over `[z, x, y]` states on the easy and medium presets.
//!
//! Run with `cargo run --release --example q_learning -- [episodes]`.

use std::collections::HashMap;
use std::sync::Arc;

use histogym::env::{Action, Complexity, DiscreteAction, Env, EnvConfig};
use histogym::geometry::AgentPos;
use histogym::pyramid::VirtualSlide;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.5;
const GAMMA: f64 = 0.9;
const EPSILON: f64 = 0.1;
/// Above any discounted return the env can pay, so untried actions look best.
const OPTIMISTIC_Q: f64 = 15.0;

struct QTable {
    q: HashMap<AgentPos, [f64; DiscreteAction::COUNT]>,
    rng: ChaCha8Rng,
}

impl QTable {
    fn row(&mut self, s: AgentPos) -> &mut [f64; DiscreteAction::COUNT] {
        self.q.entry(s).or_insert([OPTIMISTIC_Q; DiscreteAction::COUNT])
    }

    fn choose(&mut self, s: AgentPos) -> usize {
        if self.rng.random::<f64>() < EPSILON {
            return self.rng.random_range(0..DiscreteAction::COUNT);
        }
        let q = *self.row(s);
        (0..q.len()).fold(0, |best, a| if q[a] > q[best] { a } else { best })
    }
}

fn train(env: &mut Env, episodes: u32) -> Vec<bool> {
    let mut table = QTable {
        q: HashMap::new(),
        rng: ChaCha8Rng::seed_from_u64(7),
    };
    (0..episodes)
        .map(|_| {
            env.reset(None).unwrap();
            let mut s = env.agent_pos();
            loop {
                let a = table.choose(s);
                let r = env.step(Action::Discrete(DiscreteAction::ALL[a])).unwrap();
                let next = env.agent_pos();
                let future = if r.done { 0.0 } else { table.row(next).iter().copied().fold(f64::MIN, f64::max) };
                let q = &mut table.row(s)[a];
                *q += ALPHA * (r.reward + GAMMA * future - *q);
                s = next;
                if r.done || r.truncated {
                    break r.done;
                }
            }
        })
        .collect()
}

fn rate(xs: &[bool]) -> f64 {
    xs.iter().filter(|&&x| x).count() as f64 / xs.len() as f64
}

fn main() {
    let episodes: u32 = std::env::args().nth(1).map_or(5000, |a| a.parse().expect("episode count"));
    let (slide, ann) = VirtualSlide::generate_synthetic(42, 4096, 128, 1).unwrap();
    let (slide, ann) = (Arc::new(slide), Arc::new(ann));
    println!("{:>8} {:>18} {:>8} {:>10} {:>10}", "preset", "levels", "states", "overall", "last 500");
    for complexity in [Complexity::Easy, Complexity::Medium] {
        let config = EnvConfig {
            complexity,
            ..EnvConfig::default()
        };
        let mut env = Env::new(slide.clone(), ann.clone(), None, config).unwrap();
        let outcomes = train(&mut env, episodes);
        let states: u32 = env
            .selected_levels()
            .iter()
            .map(|&l| {
                let (c, r) = env.geometry().level_tiles(l);
                c * r
            })
            .sum();
        println!(
            "{:>8} {:>18} {:>8} {:>10.3} {:>10.3}",
            format!("{complexity:?}").to_lowercase(),
            format!("{:?}", env.selected_levels()),
            states,
            rate(&outcomes),
            rate(&outcomes[outcomes.len().saturating_sub(500)..])
        );
    }
}
