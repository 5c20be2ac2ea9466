mod common;

use proptest::prelude::*;

use gsp::baselines::{croston_fit, planned_passthrough};
use gsp::dataset::{read_dataset, write_dataset};
use gsp::rollout::{
    constrained_inference, fit_leadtime_from_snapshots, rollout_pass, InferenceConfig, LeadTimeConfig, RolloutSetup,
};
use gsp::synth::{generate_dataset, SynthConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollout_matches_the_event_oracle(seed in any::<u64>(), clip in any::<bool>()) {
        let inst = common::random_instance(seed);
        let got = rollout_pass(&inst.setup, &inst.timelines, clip).unwrap();
        let want = common::brute_force_rollout(
            inst.setup.nodes,
            &inst.setup.edges,
            &inst.setup.start_inventory,
            &inst.setup.demand,
            &inst.lead_days,
            &inst.timelines,
            clip,
        );
        for (g, w) in [(&got.inventory, &want.inventory), (&got.outgoing, &want.outgoing), (&got.timelines, &want.timelines)] {
            for (a, b) in g.iter().flatten().zip(w.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constrained_iterates_never_ship_beyond_capacity(seed in any::<u64>()) {
        let inst = common::random_instance(seed);
        let result = constrained_inference(&inst.setup, &inst.timelines, &InferenceConfig::default()).unwrap();
        prop_assert!(result.last().max_capacity_excess() <= 1e-9);
        for r in &result.iterations[1..] {
            prop_assert!(r.timelines.iter().flatten().all(|&q| q >= 0.0));
        }
        for (t, raw) in result.last().timelines.iter().zip(&inst.timelines) {
            for (&q, &p) in t.iter().zip(raw) {
                prop_assert!(q <= p + 1e-12);
            }
        }
    }

    #[test]
    fn croston_matches_the_recursion(series in prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => 1.0..500.0f64], 0..80), alpha in 0.05..=1.0f64) {
        let state = croston_fit(&series, alpha).unwrap();
        match common::croston_oracle(&series, alpha) {
            Some((size, interval)) => {
                prop_assert!(state.has_events);
                prop_assert_eq!(state.size, size);
                prop_assert_eq!(state.interval, interval);
            }
            None => prop_assert!(!state.has_events),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn synthetic_datasets_survive_a_disk_round_trip(seed in any::<u64>()) {
        let config = SynthConfig { skus: 2, weeks: 5, ..SynthConfig::default() };
        let snaps = generate_dataset(&config, seed).unwrap().snapshots;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &snaps).unwrap();
        prop_assert_eq!(read_dataset(dir.path()).unwrap(), snaps);
    }

    #[test]
    fn passthrough_on_planned_inventory_is_self_consistent(seed in any::<u64>()) {
        let config = SynthConfig { skus: 2, weeks: 5, ..SynthConfig::default() };
        let snaps = generate_dataset(&config, seed).unwrap().snapshots;
        let lead = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default()).unwrap();
        for snap in &snaps {
            let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap).unwrap()).unwrap();
            let r = rollout_pass(&setup, &planned_passthrough(snap), false).unwrap();
            for v in 0..setup.nodes {
                for w in 0..setup.weeks() {
                    let next = r.inventory[v][w] + r.incoming[v][w] - setup.demand[v][w] - r.outgoing[v][w];
                    prop_assert!((r.inventory[v][w + 1] - next).abs() <= 1e-9 * next.abs().max(1.0));
                }
            }
        }
    }
}
