mod common;

use common::{unit_grid, Bowl, Flat};
use memes_core::emitters::{exploit_count, stagnation_step, ExploreOperator};
use memes_core::es::EsConfig;
use memes_core::metrics::emitter_lifespans;
use memes_core::novelty::{NoveltyBackend, NoveltyConfig};
use memes_core::{EmitterMode, GenerationReport, Memes, MemesConfig, QdAlgorithm, ResetPolicy};

fn small(n_emitters: usize, samples: usize) -> MemesConfig {
    MemesConfig {
        n_emitters,
        es: EsConfig { sample_count: samples, ..Default::default() },
        novelty: NoveltyConfig { k_nearest: 3, ..Default::default() },
        ..Default::default()
    }
}

fn run(algo: &mut dyn QdAlgorithm, task: &dyn memes_core::Task, generations: u64) -> Vec<GenerationReport> {
    let mut out = vec![algo.initialize(task).unwrap()];
    for _ in 0..generations {
        out.push(algo.step(task).unwrap());
    }
    out
}

#[test]
fn exploit_split() {
    assert_eq!(exploit_count(32, 0.5), 16);
    assert_eq!(exploit_count(5, 0.5), 3);
    assert_eq!(exploit_count(4, 0.0), 0);
    assert_eq!(exploit_count(4, 1.0), 4);
    let cfg = small(32, 4);
    let mut m = Memes::new(cfg, unit_grid(10), 1).unwrap();
    m.initialize(&Bowl::new(4, 0.0)).unwrap();
    let exploit = m.emitters().iter().filter(|e| e.mode == EmitterMode::Exploit).count();
    assert_eq!(exploit, 16);
}

#[test]
fn scripted_rejections_trigger_reset_after_budget_plus_one() {
    let policy = ResetPolicy::Adaptive { budget: 32 };
    let mut s = 0;
    for i in 1..=32 {
        assert!(!stagnation_step(policy, &mut s, i, false), "reset after {i} rejections");
    }
    assert!(stagnation_step(policy, &mut s, 33, false));
    let mut s = 0;
    for i in 1..=32 {
        stagnation_step(policy, &mut s, i, false);
    }
    assert!(!stagnation_step(policy, &mut s, 33, true));
    assert_eq!(s, 0);
}

#[test]
fn stagnant_emitters_reset_on_generation_after_budget() {
    // nothing is ever accepted after seeding, so resets happen every 33 steps
    let task = Flat::new(3);
    let mut cfg = small(2, 4);
    cfg.reset = ResetPolicy::Adaptive { budget: 32 };
    let mut m = Memes::new(cfg, unit_grid(4), 9).unwrap();
    let reports = run(&mut m, &task, 100);
    for r in &reports[1..] {
        for e in &r.emitters {
            assert!(!e.added);
            assert_eq!(
                e.reset,
                r.generation == 34 || r.generation == 67 || r.generation == 100,
                "gen {}",
                r.generation
            );
            assert!(e.lifespan <= 33);
        }
    }
    assert_eq!(m.archive().len(), 1);
}

#[test]
fn reset_mean_is_bit_equal_to_an_elite() {
    let task = Bowl::new(6, 0.0);
    let mut cfg = small(4, 8);
    cfg.reset = ResetPolicy::Fixed { period: 3 };
    let mut m = Memes::new(cfg, unit_grid(5), 2).unwrap();
    m.initialize(&task).unwrap();
    for _ in 0..3 {
        m.step(&task).unwrap();
    }
    assert!(m.emitters().iter().all(|e| e.require_reset));
    let before: Vec<Vec<f64>> = m.archive().elites().map(|(_, e)| e.eval.feature.clone()).collect();
    let report = m.step(&task).unwrap();
    assert!(report.emitters.iter().all(|e| e.reset && e.lifespan == 1));
    // every restarted emitter stepped from an elite present before the step
    assert_eq!(report.lineage.len(), 4);
    for l in &report.lineage {
        assert!(before.contains(&l.parent_feature));
    }
    for e in m.emitters() {
        assert_eq!(e.lifespan, 1);
        assert_eq!(e.optimizer.step_count, 1);
    }
}

#[test]
fn fixed_period_lifespans() {
    let task = Bowl::new(4, 0.0);
    let mut cfg = small(4, 6);
    cfg.reset = ResetPolicy::Fixed { period: 10 };
    let mut m = Memes::new(cfg, unit_grid(10), 3).unwrap();
    let reports = run(&mut m, &task, 200);
    let s = emitter_lifespans(&reports);
    assert_eq!(s.exploit, Some(10.0));
    assert_eq!(s.explore, Some(10.0));
    assert_eq!(s.exploit_episodes, 2 * 20);
}

#[test]
fn never_reset_lifespan_grows() {
    let task = Bowl::new(4, 0.0);
    let mut cfg = small(2, 6);
    cfg.reset = ResetPolicy::Never;
    let mut m = Memes::new(cfg, unit_grid(10), 3).unwrap();
    let reports = run(&mut m, &task, 200);
    assert!(reports[1..].iter().all(|r| r.emitters.iter().all(|e| !e.reset)));
    assert_eq!(emitter_lifespans(&reports).exploit, Some(200.0));
}

#[test]
fn sequential_emitters_swap_together_every_period() {
    let task = Bowl::new(4, 0.0);
    let mut m = memes_core::baselines::memes_sequential(small(3, 6), 10, unit_grid(10), 4).unwrap();
    let reports = run(&mut m, &task, 45);
    for r in &reports[1..] {
        let expected = if ((r.generation - 1) / 10) % 2 == 0 { EmitterMode::Explore } else { EmitterMode::Exploit };
        for e in &r.emitters {
            assert_eq!(e.mode, expected, "gen {}", r.generation);
            assert_eq!(e.reset, r.generation > 1 && (r.generation - 1) % 10 == 0);
            assert!(e.lifespan <= 10);
        }
    }
}

#[test]
fn evaluation_accounting() {
    let task = Bowl::new(4, 0.0);
    let mut m = Memes::new(small(5, 7), unit_grid(10), 5).unwrap();
    let reports = run(&mut m, &task, 12);
    assert_eq!(reports[0].evaluations, 5);
    assert!(reports[1..].iter().all(|r| r.evaluations == 5 * 8));

    let mut cfg = small(5, 7);
    cfg.add_all_samples = true;
    let mut m = Memes::new(cfg, unit_grid(10), 5).unwrap();
    let reports = run(&mut m, &task, 3);
    assert!(reports[1..].iter().all(|r| r.evaluations == 5 * 8));
}

#[test]
fn novelty_archive_gets_seeds_and_offspring_only() {
    let task = Bowl::new(4, 0.0);
    let mut m = Memes::new(small(6, 9), unit_grid(10), 6).unwrap();
    run(&mut m, &task, 7);
    assert_eq!(m.novelty_archive().total_inserted(), 6 + 6 * 7);

    let mut cfg = small(6, 9);
    cfg.novelty.insert_samples = true;
    let mut m = Memes::new(cfg, unit_grid(10), 6).unwrap();
    run(&mut m, &task, 7);
    assert_eq!(m.novelty_archive().total_inserted(), 6 + 6 * 7 * 10);
}

#[test]
fn add_all_offers_samples() {
    let task = Bowl::new(4, 0.0);
    let mut cfg = small(4, 16);
    cfg.add_all_samples = true;
    let mut all = Memes::new(cfg, unit_grid(20), 7).unwrap();
    let reports = run(&mut all, &task, 20);
    let added: u64 = reports.iter().map(|r| r.added.total()).sum();
    assert!(added >= all.archive().len() as u64);
    assert!(reports[1..].iter().any(|r| r.added.total() > 4));
}

#[test]
fn ga_explore_slots() {
    let task = Bowl::new(4, 0.0);
    let mut cfg = small(4, 7);
    cfg.explore_operator = ExploreOperator::Ga;
    cfg.novelty.backend = NoveltyBackend::None;
    let mut m = Memes::new(cfg, unit_grid(10), 8).unwrap();
    let reports = run(&mut m, &task, 10);
    for r in &reports[1..] {
        assert_eq!(r.evaluations, 4 * 8);
        // only exploit ES slots report as emitters
        assert_eq!(r.emitters.len(), 2);
    }
}

#[test]
fn archive_is_monotone_on_deterministic_task() {
    let task = Bowl::new(5, 0.0);
    let mut m = Memes::new(small(4, 10), unit_grid(10), 11).unwrap();
    m.initialize(&task).unwrap();
    let mut prev = m.archive().clone();
    for _ in 0..30 {
        m.step(&task).unwrap();
        for (cell, e) in prev.elites() {
            let now = m.archive().get(&prev.spec().unflatten(cell)).unwrap();
            assert!(now.eval.fitness >= e.eval.fitness);
        }
        prev = m.archive().clone();
    }
}

#[test]
fn wrong_genome_dimension_is_reported() {
    let mut m = Memes::new(small(2, 4), unit_grid(10), 1).unwrap();
    m.initialize(&Bowl::new(4, 0.0)).unwrap();
    let err = m.step(&Bowl::new(5, 0.0)).unwrap_err();
    assert!(err.to_string().contains("dimension"), "{err}");
}
