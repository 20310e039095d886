use std::sync::Arc;

use histogym::annotations::AnnotationSet;
use histogym::env::{
    make_env, Action, ActionMode, Complexity, DiscreteAction, Env, EnvConfig, ObservationMode,
};
use histogym::featurepack::{build_pack, FeaturePack};
use histogym::geometry::BaseRect;
use histogym::policy::{OraclePolicy, Policy, RandomPolicy};
use histogym::pyramid::{TileAddress, VirtualSlide};
use histogym::Error;
use proptest::prelude::*;

fn slide(seed: u64, dim: u32) -> (Arc<VirtualSlide>, Arc<AnnotationSet>) {
    let (s, a) = VirtualSlide::generate_synthetic(seed, dim, 128, 1).unwrap();
    (Arc::new(s), Arc::new(a))
}

fn pack_for(slide: &VirtualSlide, levels: &[u32], dim: usize) -> Vec<(TileAddress, Vec<f32>)> {
    let g = *slide.geometry();
    levels
        .iter()
        .flat_map(|&level| {
            let (cols, rows) = g.level_tiles(level);
            (0..rows).flat_map(move |row| (0..cols).map(move |col| TileAddress::new(level, col, row)))
        })
        .map(|a| (a, (0..dim).map(|i| (a.level * 1000 + a.row * 37 + a.col) as f32 + i as f32 * 0.5).collect()))
        .collect()
}

#[test]
fn feature_mode_serves_pack_vectors() {
    let (s, a) = slide(4, 2048);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("slide.hfp");
    let probe = Env::new(s.clone(), a.clone(), None, EnvConfig::default()).unwrap();
    // leave the finest level out so missing lookups are exercised
    let levels = &probe.selected_levels()[..2];
    build_pack(&path, pack_for(&s, levels, 8), 8, &s.identity_hash().unwrap(), "test").unwrap();
    let config = EnvConfig {
        observation_mode: ObservationMode::Features,
        feature_pack: Some(path),
        ..EnvConfig::default()
    };
    let mut env = make_env(s, a, config).unwrap();
    let (obs, info) = env.reset(None).unwrap();
    assert_eq!(obs.shape(), vec![8]);
    assert!(!info.missing_feature);
    assert_eq!(obs.normalized()[1], (info.level * 1000) as f32 + 0.5);
    env.step(Action::Discrete(DiscreteAction::ZoomIn)).unwrap();
    let r = env.step(Action::Discrete(DiscreteAction::ZoomIn)).unwrap();
    assert!(r.info.missing_feature);
    assert!(r.observation.normalized().iter().all(|&x| x == 0.0));
}

#[test]
fn feature_pack_for_another_slide_is_rejected() {
    let (s, a) = slide(4, 2048);
    let (other, _) = slide(5, 2048);
    let levels = [other.geometry().coarsest_usable_level()];
    let pack = FeaturePack::build(pack_for(&other, &levels, 4), 4, &other.identity_hash().unwrap(), "x").unwrap();
    let config = EnvConfig {
        observation_mode: ObservationMode::Features,
        ..EnvConfig::default()
    };
    let err = Env::new(s, a, Some(Arc::new(pack)), config).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn too_many_levels_is_a_config_error() {
    let (s, a) = slide(1, 1024);
    let config = EnvConfig {
        complexity: Complexity::Hard,
        ..EnvConfig::default()
    };
    assert_eq!(Env::new(s, a, None, config).unwrap_err().code(), "ConfigError");
}

#[test]
fn single_level_is_pan_only() {
    let (s, a) = slide(1, 1024);
    let config = EnvConfig {
        complexity: Complexity::Custom(1),
        ..EnvConfig::default()
    };
    let mut env = Env::new(s, a, None, config).unwrap();
    assert_eq!(env.selected_levels(), &[env.geometry().finest_level()]);
    env.reset(None).unwrap();
    assert!(env.step(Action::Discrete(DiscreteAction::ZoomIn)).unwrap().info.bumped);
    assert!(!env.step(Action::Discrete(DiscreteAction::Right)).unwrap().info.bumped);
}

#[test]
fn oracle_terminal_reward_formula() {
    let (s, a) = slide(42, 4096);
    let mut policy = OraclePolicy::new(&a).unwrap();
    let config = EnvConfig::default();
    let mut env = Env::new(s, a, None, config.clone()).unwrap();
    env.reset(None).unwrap();
    let (mut zooms, mut pans) = (0, 0);
    let last = loop {
        let action = policy.act(&env);
        match action {
            Action::Discrete(DiscreteAction::ZoomIn) => zooms += 1,
            Action::Discrete(DiscreteAction::Stay) => {}
            _ => pans += 1,
        }
        let r = env.step(action).unwrap();
        if r.done || r.truncated {
            break r;
        }
    };
    assert!(last.done);
    assert_eq!(zooms, env.selected_levels().len() - 1);
    assert_eq!(last.info.count, zooms as u32 + pans);
    let expected = config.success_bonus + last.info.overlap_ratio - config.step_penalty;
    assert_eq!(last.reward, expected);
}

#[test]
fn continuous_mode_episode_stays_in_bounds() {
    let (s, a) = slide(3, 2048);
    let config = EnvConfig {
        action_mode: ActionMode::Continuous,
        pan_gain: 0.37,
        ..EnvConfig::default()
    };
    let mut env = Env::new(s, a, None, config).unwrap();
    let mut policy = RandomPolicy::new(11);
    env.reset(None).unwrap();
    let full = BaseRect::full(env.geometry());
    for _ in 0..300 {
        if env.is_over() {
            env.reset(None).unwrap();
        }
        let r = env.step(policy.act(&env)).unwrap();
        assert_eq!(r.observation.shape(), vec![128, 128, 3]);
        let [x0, y0, x1, y1] = r.info.base_rect;
        assert!(x0 >= full.x0 && y0 >= full.y0 && x1 <= full.x1 && y1 <= full.y1);
        assert!(r.info.overlap_ratio >= 0.0 && r.info.overlap_ratio <= 1.0);
    }
}

#[test]
fn config_json_round_trip_and_rejects_unknown_fields() {
    let config = EnvConfig {
        complexity: Complexity::Custom(4),
        seed: 9,
        ..EnvConfig::default()
    };
    assert_eq!(EnvConfig::from_json(&config.to_json()).unwrap(), config);
    assert!(EnvConfig::from_json(r#"{"complexity":"medium","max_steps":3}"#).is_err());
    let c = EnvConfig::from_json(r#"{"complexity":"medium","reward_mode":"sparse"}"#).unwrap();
    assert_eq!(c.complexity, Complexity::Medium);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fuzzed_actions_keep_the_agent_in_bounds(seed in 0u64..500, k in 1u32..5, actions in prop::collection::vec(0usize..7, 1..250)) {
        let (s, a) = slide(seed, 2048);
        let config = EnvConfig { complexity: Complexity::Custom(k), max_step: 60, ..EnvConfig::default() };
        let mut env = Env::new(s, a, None, config).unwrap();
        env.reset(None).unwrap();
        for i in actions {
            if env.is_over() {
                prop_assert_eq!(env.step(Action::Discrete(DiscreteAction::Stay)).unwrap_err().code(), "EpisodeOver");
                env.reset(None).unwrap();
            }
            let r = env.step(Action::Discrete(DiscreteAction::ALL[i])).unwrap();
            let pos = r.info.agent_pos;
            prop_assert!((pos.z as usize) < env.selected_levels().len());
            let (cols, rows) = env.geometry().level_tiles(r.info.level);
            prop_assert!(pos.x < cols && pos.y < rows);
            prop_assert!(r.info.count <= 60);
            prop_assert!(!(r.done && r.truncated));
            prop_assert!((0.0..=1.0).contains(&r.info.overlap_ratio));
        }
    }
}
