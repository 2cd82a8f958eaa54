//! AIS estimates of `log Z` against enumeration.

mod common;

use ddtm::corpus::ThreadShape;
use ddtm::eval::{ais_log_z, exact_log_z, AisConfig, BetaSchedule};
use ddtm::model::{apply_variant, Variant};

fn quick(seed: u64) -> AisConfig {
    AisConfig {
        num_intermediate: 300,
        num_runs: 8,
        seed,
        ..AisConfig::default()
    }
}

#[test]
fn bias_only_models_are_exact() {
    let mut rng = common::rng(51);
    for _ in 0..10 {
        let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
        let mut p = apply_variant(&p, Variant::Unigram);
        p.variant = Variant::Ddtm;
        p.b.iter_mut().for_each(|x| *x = 0.4);
        p.c.iter_mut().for_each(|x| *x = -0.7);
        let r = ais_log_z(&t.shape(), &p, &quick(1)).unwrap();
        assert!((r.log_z - exact_log_z(&t.shape(), &p).unwrap()).abs() < 1e-10);
        assert!(r.log_weights.iter().all(|&w| w == 0.0));
    }
}

#[test]
fn estimates_track_enumeration_with_interactions() {
    let mut rng = common::rng(52);
    for i in 0..5 {
        let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
        let shape = t.shape();
        let r = ais_log_z(&shape, &p, &quick(i)).unwrap();
        let exact = exact_log_z(&shape, &p).unwrap();
        assert!(
            (r.log_z - exact).abs() <= f64::max(0.1, 3.0 * r.se),
            "{} vs {exact}",
            r.log_z
        );
    }
}

#[test]
fn geometric_schedule_also_tracks_enumeration() {
    let mut rng = common::rng(53);
    let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
    let cfg = AisConfig {
        schedule: BetaSchedule::Geometric,
        ..quick(3)
    };
    let r = ais_log_z(&t.shape(), &p, &cfg).unwrap();
    let exact = exact_log_z(&t.shape(), &p).unwrap();
    assert!((r.log_z - exact).abs() <= f64::max(0.1, 3.0 * r.se));
}

#[test]
fn same_seed_gives_identical_estimates() {
    let mut rng = common::rng(54);
    let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
    let a = ais_log_z(&t.shape(), &p, &quick(9)).unwrap();
    let b = ais_log_z(&t.shape(), &p, &quick(9)).unwrap();
    assert_eq!(a, b);
    let c = ais_log_z(&t.shape(), &p, &quick(10)).unwrap();
    assert_ne!(a.log_weights, c.log_weights);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut rng = common::rng(55);
    let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
    let run = |workers| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap()
            .install(|| ais_log_z(&t.shape(), &p, &quick(4)).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn one_run_has_zero_standard_error() {
    let mut rng = common::rng(56);
    let (t, p) = common::random_instance(&mut rng, common::Tiny::default());
    let r = ais_log_z(
        &t.shape(),
        &p,
        &AisConfig {
            num_runs: 1,
            ..quick(2)
        },
    )
    .unwrap();
    assert_eq!(r.se, 0.0);
    assert_eq!(r.log_weights.len(), 1);
}

#[test]
fn invalid_configurations_are_rejected() {
    let shape = ThreadShape::chain(vec![1]);
    let (_, p) = common::random_instance(&mut common::rng(57), common::Tiny::default());
    for cfg in [
        AisConfig {
            num_runs: 0,
            ..quick(0)
        },
        AisConfig {
            num_intermediate: 0,
            ..quick(0)
        },
        AisConfig {
            gibbs_sweeps: 0,
            ..quick(0)
        },
    ] {
        assert!(matches!(
            ais_log_z(&shape, &p, &cfg),
            Err(ddtm::Error::Config(_))
        ));
    }
}
