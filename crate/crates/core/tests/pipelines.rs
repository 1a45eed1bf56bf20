use proptest::prelude::*;
use scenery_core::cp::cp_scenery;
use scenery_core::experiment::{self, Experiment, RunConfig, SpliceConvergence};
use scenery_core::metric::distribution_distance;
use scenery_core::oracle::random_measure;
use scenery_core::par::stream_rng;
use scenery_core::splice::{coin_components, SpliceSchedule, SplicedMeasure};
use scenery_core::{CylinderMeasure, DigitLaw, DyadicMeasure, EmpiricalDistribution, Exec, Word};

#[test]
fn windows_inside_a_block_see_that_block_law() {
    let schedule = SpliceSchedule::periodic(vec![4, 4]).unwrap();
    let spliced = SplicedMeasure::new(coin_components(0.8, 0.3).unwrap(), schedule).unwrap();
    let mu = DyadicMeasure::new(1, 16, spliced.extension_masses(&[], 16).unwrap()).unwrap();
    let laws = [DigitLaw::coin(0.8).unwrap(), DigitLaw::coin(0.3).unwrap()];
    let p = 2;
    let mut rng = stream_rng(5, 0);
    let x = Word::from_index(1, 16, mu.leaf_sampler().unwrap().sample(&mut rng)).unwrap();
    let orbit = cp_scenery(&mu, &x, 12, p).unwrap();
    for (j, (_, atom)) in orbit.atoms().iter().enumerate() {
        let block_end = (j / 4 + 1) * 4;
        if j + p <= block_end {
            let expected = laws[(j / 4) % 2].to_measure(p).unwrap();
            let seen = atom.mu.coarsen(p).unwrap();
            assert!(seen.leafwise_eq(&expected, 1e-12), "window at {j}");
        }
    }
}

#[test]
fn distributions_survive_a_json_round_trip() {
    let mut rng = stream_rng(2, 0);
    let atoms: Vec<DyadicMeasure> = (0..5).map(|_| random_measure(&mut rng, 2, 3)).collect();
    let q = EmpiricalDistribution::uniform(atoms, 3).unwrap();
    let back = EmpiricalDistribution::<DyadicMeasure>::from_json(&q.to_json().unwrap()).unwrap();
    assert_eq!(distribution_distance(&q, &back, 3).unwrap(), 0.0);
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let experiment = Experiment::SpliceConvergence(SpliceConvergence { ns: vec![8], samples: 300, ..Default::default() });
    let mut config = RunConfig::new(3, experiment);
    let parallel = experiment::run(&config).unwrap();
    config.sequential = true;
    assert_eq!(config.exec(), Exec::Sequential);
    assert_eq!(experiment::run(&config).unwrap(), parallel);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn distribution_distance_is_a_metric(seed in 0u64..5_000) {
        let mut rng = stream_rng(seed, 0);
        let mut dist = |n: usize| {
            let atoms: Vec<DyadicMeasure> = (0..n).map(|_| random_measure(&mut rng, 1, 4)).collect();
            EmpiricalDistribution::uniform(atoms, 3).unwrap()
        };
        let (a, b, c) = (dist(3), dist(2), dist(4));
        let ab = distribution_distance(&a, &b, 3).unwrap();
        let ba = distribution_distance(&b, &a, 3).unwrap();
        let bc = distribution_distance(&b, &c, 3).unwrap();
        let ac = distribution_distance(&a, &c, 3).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        prop_assert_eq!(distribution_distance(&a, &a, 3).unwrap(), 0.0);
    }
}
