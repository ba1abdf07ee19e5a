mod common;

use common::checks::{cumulative_sum_worst, minimal_window_cases, placement_postcondition};
use eenas::model::network::{aggregate_outputs, cumulative_confidences};
use eenas::model::spec::attach_points;
use eenas::model::{decode_genome, place_exits, EennSpec, Genome, MAX_EXITS};
use proptest::prelude::*;

#[test]
fn placement_keeps_exit_costs_ordered() {
    placement_postcondition(100, 41).unwrap();
}

#[test]
fn pooling_window_is_the_smallest_that_fixes_the_order() {
    let windows = minimal_window_cases(10).unwrap();
    assert_eq!(windows.len(), 10);
}

#[test]
fn cumulative_confidences_sum_to_one() {
    assert!(cumulative_sum_worst(10_000, 42) <= 1e-12);
}

#[test]
fn cumulative_confidences_by_hand() {
    let cr = cumulative_confidences(&[0.5, 0.4, 1.0]).unwrap();
    // 0.5, then 0.4·(1 − 0.5), then 1·(1 − 0.5)(1 − 0.4).
    for (got, want) in cr.iter().zip([0.5, 0.2, 0.3]) {
        assert!((got - want).abs() < 1e-15);
    }
    assert!(cumulative_confidences(&[1.5, 1.0]).is_err());
    let f = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
    assert_eq!(aggregate_outputs(&f, &cr, 2).unwrap(), vec![0.5, 0.2]);
}

#[test]
fn attach_points_follow_the_floor_rule() {
    // Twelve blocks, five exits: bit j sits after max(1, ⌊12j/5⌋) = 2, 4, 7, 9.
    assert_eq!(attach_points(&[1, 1, 1, 1], 12, 5), vec![2, 4, 7, 9]);
    assert_eq!(attach_points(&[0, 1, 0, 1], 12, 5), vec![4, 9]);
    // Four blocks: ⌊4j/5⌋ = 0, 1, 2, 3 → 1, then collisions push forward.
    assert_eq!(attach_points(&[1, 1, 1, 1], 4, 5), vec![1, 2, 3]);
    assert_eq!(attach_points(&[0, 0, 0, 0], 12, 5), Vec::<usize>::new());
}

#[test]
fn spec_round_trips_through_json() {
    let g = Genome::parse("2-5-24,1-3-16,3-3-32,2-5-32/1011").unwrap();
    let spec = place_exits(
        &decode_genome(&g, [3, 16, 16], 10).unwrap(),
        &g.theta,
        MAX_EXITS,
    )
    .unwrap();
    assert_eq!(EennSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
}

proptest! {
    #[test]
    fn genome_text_round_trips(seed in any::<u64>()) {
        use rand::SeedableRng;
        let g = Genome::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(Genome::parse(&g.to_string()).unwrap(), g);
    }

    #[test]
    fn adding_exit_bits_never_lowers_existing_costs(seed in any::<u64>()) {
        use rand::SeedableRng;
        let g = Genome::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let spec = place_exits(&decode_genome(&g, [3, 16, 16], 10).unwrap(), &g.theta, MAX_EXITS).unwrap();
        prop_assert!(spec.gamma.is_non_decreasing());
        prop_assert_eq!(spec.exits.last().unwrap().after_block, spec.blocks.len());
    }
}
