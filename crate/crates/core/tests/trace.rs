use std::sync::Arc;

use histogym::env::{Action, DiscreteAction, Env, EnvConfig};
use histogym::policy::{OraclePolicy, RandomPolicy};
use histogym::pyramid::VirtualSlide;
use histogym::rollout::{run_episode, run_rollouts, PolicyKind};
use histogym::trace::{read_trace, rect_pixels, render_episode, render_overview, FINAL_COLOR};
use sha2::{Digest, Sha256};

fn env(seed: u64, dim: u32, config: EnvConfig) -> Env {
    let (s, a) = VirtualSlide::generate_synthetic(seed, dim, 128, 1).unwrap();
    Env::new(Arc::new(s), Arc::new(a), None, config).unwrap()
}

#[test]
fn every_step_is_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stay.jsonl");
    let mut e = env(1, 1024, EnvConfig::default());
    let (summary, records) = run_episode(&mut e, &mut Stay, Some(1), Some(&path)).unwrap();
    assert_eq!(summary.steps, 100);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 100);
    let back = read_trace(&path).unwrap();
    assert_eq!(back, records);
    assert!(back.last().unwrap().truncated);
    assert!(back[..99].iter().all(|r| !r.done && !r.truncated));
}

#[test]
fn replaying_a_trace_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("random.jsonl");
    let mut e = env(6, 2048, EnvConfig::default());
    let mut policy = RandomPolicy::new(3);
    run_episode(&mut e, &mut policy, Some(9), Some(&path)).unwrap();
    let recorded = read_trace(&path).unwrap();

    let mut fresh = env(6, 2048, EnvConfig::default());
    fresh.reset(Some(9)).unwrap();
    for rec in &recorded {
        let r = fresh.step(rec.action).unwrap();
        assert_eq!(r.info.agent_pos, rec.agent_pos);
        assert_eq!(r.info.base_rect, rec.base_rect);
        assert_eq!(r.reward.to_bits(), rec.reward.to_bits());
        assert_eq!(r.info.overlap_ratio.to_bits(), rec.overlap_ratio.to_bits());
        assert_eq!((r.done, r.truncated), (rec.done, rec.truncated));
    }
}

#[test]
fn rollout_writes_one_trace_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = env(2, 1024, EnvConfig { max_step: 20, ..EnvConfig::default() });
    let summary = run_rollouts(&mut e, PolicyKind::Random, 10, Some(dir.path())).unwrap();
    assert_eq!(summary.episodes.len(), 10);
    let mut files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|f| f.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files.len(), 10);
    assert_eq!(files[0], "episode_0000.jsonl");
    for (ep, name) in summary.episodes.iter().zip(&files) {
        let lines = read_trace(dir.path().join(name)).unwrap();
        assert_eq!(lines.len() as u32, ep.steps);
    }
}

#[test]
fn one_step_trace_draws_one_rectangle() {
    let mut e = env(4, 1024, EnvConfig::default());
    let (_, mut records) = run_episode(&mut e, &mut Stay, Some(0), None).unwrap();
    records.truncate(1);
    let img = render_overview(e.slide(), &histogym::annotations::AnnotationSet::empty(), &records, 256).unwrap();
    let yellow = img.pixels().filter(|p| **p == FINAL_COLOR).count();
    // a 2 px frame around the whole 256 x 256 thumbnail
    assert_eq!(yellow, 4 * 255 + 4 * 253);
    let grads = img.pixels().filter(|p| p[2] == 255 && p[0] == 40).count();
    assert_eq!(grads, 0);
}

#[test]
fn oracle_final_rectangle_surrounds_the_lesion_centroid() {
    let mut e = env(42, 4096, EnvConfig::default());
    let ann = e.annotations().clone();
    let mut policy = OraclePolicy::new(&ann).unwrap();
    let (summary, records) = run_episode(&mut e, &mut policy, Some(0), None).unwrap();
    assert!(summary.success);
    let img = render_overview(e.slide(), &ann, &records, 1024).unwrap();
    let scale = 1024.0 / 4096.0;
    let (x0, y0, x1, y1) = rect_pixels(&records.last().unwrap().rect(), scale, scale);
    for (x, y) in [(x0, y0), (x1, y1), (x0, y1), (x1, y0)] {
        assert_eq!(*img.get_pixel(x as u32, y as u32), FINAL_COLOR);
    }
    // success may fire on a tile next to the centroid's, so allow one tile of slack
    let (cx, cy) = policy.target();
    let (px, py) = ((cx * scale) as i64, (cy * scale) as i64);
    let slack = (128.0 * scale) as i64;
    assert!(x0 - slack <= px && px <= x1 + slack && y0 - slack <= py && py <= y1 + slack);
    let probe = *img.get_pixel(px as u32, py as u32);
    assert!(probe[1] < 120 && probe != FINAL_COLOR, "centroid pixel {probe:?} is not lesion tissue");
    assert!(records.last().unwrap().overlap_ratio >= 0.5);
}

#[test]
fn rendering_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = env(8, 2048, EnvConfig::default());
    let mut policy = RandomPolicy::new(8);
    let (_, records) = run_episode(&mut e, &mut policy, Some(8), None).unwrap();
    let digest = |name: &str| {
        let path = dir.path().join(name);
        render_episode(e.slide(), e.annotations(), &records, &path, 512).unwrap();
        format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
    };
    assert_eq!(digest("a.png"), digest("b.png"));
}

struct Stay;

impl histogym::policy::Policy for Stay {
    fn act(&mut self, _: &Env) -> Action {
        Action::Discrete(DiscreteAction::Stay)
    }
}
