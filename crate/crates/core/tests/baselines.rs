mod common;

use common::{unit_grid, Bowl, Flat};
use memes_core::baselines::{EsFamily, EsFamilyConfig, EsVariant, IsoLineConfig, MapElites, MeEs, MeEsConfig};
use memes_core::es::EsConfig;
use memes_core::novelty::NoveltyConfig;
use memes_core::run::{drive, RunOptions};
use memes_core::{EmitterMode, Memes, MemesConfig, QdAlgorithm, ResetPolicy};

fn es(samples: usize) -> EsConfig {
    EsConfig { sample_count: samples, ..Default::default() }
}

#[test]
fn me_accounting_and_sampling_degenerate_case() {
    let task = Bowl::new(5, 0.02);
    let cfg = IsoLineConfig { batch_size: 16, ..Default::default() };
    let mut me = MapElites::new(cfg.clone(), unit_grid(10), 3).unwrap();
    let mut me1 = MapElites::with_sampling(cfg.clone(), 1, unit_grid(10), 3).unwrap();
    assert_eq!(me.initialize(&task).unwrap().evaluations, 16);
    me1.initialize(&task).unwrap();
    for _ in 0..25 {
        let a = me.step(&task).unwrap();
        let b = me1.step(&task).unwrap();
        assert_eq!(a.evaluations, 16);
        assert_eq!(a, b);
    }
    assert_eq!(me.archive(), me1.archive());

    let mut me8 = MapElites::with_sampling(cfg, 8, unit_grid(10), 3).unwrap();
    assert_eq!(me8.initialize(&task).unwrap().evaluations, 128);
    assert_eq!(me8.step(&task).unwrap().evaluations, 128);
}

#[test]
fn sampling_is_inert_on_deterministic_tasks() {
    let task = Bowl::new(5, 0.0);
    let cfg = IsoLineConfig { batch_size: 8, ..Default::default() };
    let mut a = MapElites::new(cfg.clone(), unit_grid(10), 4).unwrap();
    let mut b = MapElites::with_sampling(cfg, 5, unit_grid(10), 4).unwrap();
    a.initialize(&task).unwrap();
    b.initialize(&task).unwrap();
    for _ in 0..10 {
        a.step(&task).unwrap();
        b.step(&task).unwrap();
    }
    assert_eq!(a.archive(), b.archive());
}

#[test]
fn nsr_es_with_unit_weight_is_es() {
    let task = Bowl::new(6, 0.0);
    let mut plain =
        EsFamily::new(EsVariant::Es, EsFamilyConfig { es: es(12), ..Default::default() }, unit_grid(10), 5).unwrap();
    let nsr_cfg = EsFamilyConfig { es: es(12), population: Some(1), fitness_weight: Some(1.0), ..Default::default() };
    let mut nsr = EsFamily::new(EsVariant::NsrEs, nsr_cfg, unit_grid(10), 5).unwrap();
    plain.initialize(&task).unwrap();
    nsr.initialize(&task).unwrap();
    for _ in 0..40 {
        plain.step(&task).unwrap();
        nsr.step(&task).unwrap();
        assert_eq!(plain.means().collect::<Vec<_>>(), nsr.means().collect::<Vec<_>>());
    }
    assert_eq!(plain.archive(), nsr.archive());
}

#[test]
fn single_exploit_emitter_without_resets_is_es_with_archive() {
    let task = Bowl::new(6, 0.0);
    let cfg =
        MemesConfig { n_emitters: 1, p_exploit: 1.0, reset: ResetPolicy::Never, es: es(12), ..Default::default() };
    let mut memes = Memes::new(cfg, unit_grid(10), 6).unwrap();
    let mut plain =
        EsFamily::new(EsVariant::Es, EsFamilyConfig { es: es(12), ..Default::default() }, unit_grid(10), 6).unwrap();
    memes.initialize(&task).unwrap();
    plain.initialize(&task).unwrap();
    for _ in 0..40 {
        memes.step(&task).unwrap();
        plain.step(&task).unwrap();
        assert_eq!(&memes.emitters()[0].mean, plain.means().next().unwrap());
    }
    assert_eq!(memes.archive(), plain.archive());

    // an unreachable stagnation budget behaves like no reset at all
    let cfg = MemesConfig {
        n_emitters: 1,
        p_exploit: 1.0,
        reset: ResetPolicy::Adaptive { budget: u64::MAX },
        es: es(12),
        ..Default::default()
    };
    let mut huge = Memes::new(cfg, unit_grid(10), 6).unwrap();
    huge.initialize(&Flat::new(6)).unwrap();
    for _ in 0..50 {
        assert!(huge.step(&Flat::new(6)).unwrap().emitters.iter().all(|e| !e.reset));
    }
}

#[test]
fn nsra_weight_stays_clamped() {
    let task = Flat::new(4);
    let cfg =
        EsFamilyConfig { es: es(6), adapt_period: 2, adapt_amount: 0.3, population: Some(2), ..Default::default() };
    let mut nsra = EsFamily::new(EsVariant::NsraEs, cfg, unit_grid(10), 1).unwrap();
    nsra.initialize(&task).unwrap();
    assert_eq!(nsra.fitness_weight(), 1.0);
    let mut seen = vec![];
    for _ in 0..30 {
        nsra.step(&task).unwrap();
        let w = nsra.fitness_weight();
        assert!((0.0..=1.0).contains(&w));
        seen.push(w);
    }
    // flat fitness never improves, so the weight decays to the floor
    assert_eq!(*seen.last().unwrap(), 0.0);
}

#[test]
fn ns_es_coverage_never_drops() {
    let task = Bowl::new(4, 0.0);
    let cfg = EsFamilyConfig {
        es: es(10),
        novelty: NoveltyConfig { k_nearest: 3, ..Default::default() },
        ..Default::default()
    };
    let mut ns = EsFamily::new(EsVariant::NsEs, cfg, unit_grid(10), 2).unwrap();
    ns.initialize(&task).unwrap();
    let mut prev = ns.archive().len();
    for g in 1..=30 {
        let r = ns.step(&task).unwrap();
        assert_eq!(r.emitters[0].slot as u64, (g - 1) % 5);
        assert_eq!(r.emitters[0].mode, EmitterMode::Explore);
        assert_eq!(r.emitters[0].lifespan, (g - 1) / 5 + 1);
        assert!(ns.archive().len() >= prev);
        prev = ns.archive().len();
    }
}

#[test]
fn me_es_alternates_and_counts() {
    let task = Bowl::new(4, 0.0);
    let cfg = MeEsConfig {
        mode_length: 3,
        es: EsConfig { sample_count: 10, l2_coefficient: 0.01, ..Default::default() },
        ..Default::default()
    };
    let mut me_es = MeEs::new(cfg, unit_grid(10), 3).unwrap();
    assert_eq!(me_es.initialize(&task).unwrap().evaluations, 1);
    let mut modes = vec![];
    for _ in 0..12 {
        let r = me_es.step(&task).unwrap();
        assert_eq!(r.evaluations, 11);
        modes.push((r.emitters[0].mode, r.emitters[0].reset));
    }
    use EmitterMode::*;
    let expected = [
        (Explore, false),
        (Explore, false),
        (Exploit, true),
        (Exploit, false),
        (Exploit, false),
        (Explore, true),
        (Explore, false),
        (Explore, false),
        (Exploit, true),
        (Exploit, false),
        (Exploit, false),
        (Explore, true),
    ];
    assert_eq!(modes, expected);
}

#[test]
fn drive_emits_rows_on_cadence() {
    let task = Bowl::new(4, 0.0);
    let mut m = Memes::new(MemesConfig { n_emitters: 3, es: es(5), ..Default::default() }, unit_grid(10), 2).unwrap();
    let out = drive(&mut m, &task, RunOptions { generations: 25, metrics_every: 10 }, &mut ()).unwrap();
    let gens: Vec<u64> = out.log.rows.iter().map(|r| r.generation).collect();
    assert_eq!(gens, vec![0, 10, 20, 25]);
    assert_eq!(out.evaluations, 3 + 25 * 3 * 6);
    assert_eq!(out.log.rows[3].evaluations, out.evaluations);
    let added: u64 = out.log.rows.iter().map(|r| r.added_exploit + r.added_explore + r.added_other).sum();
    assert_eq!(added, out.added.total());
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let task = Bowl::new(6, 0.05);
            let cfg = MemesConfig { n_emitters: 6, es: es(16), add_all_samples: true, ..Default::default() };
            let mut m = Memes::new(cfg, unit_grid(8), 13).unwrap();
            let out = drive(&mut m, &task, RunOptions { generations: 30, metrics_every: 5 }, &mut ()).unwrap();
            (out.archive, out.log)
        })
    };
    let (a1, l1) = run(1);
    let (a4, l4) = run(4);
    assert_eq!(a1, a4);
    assert_eq!(l1, l4);
}
