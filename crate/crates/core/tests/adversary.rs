use fairdiv_core::adversary::{
    bin_packing_witness, certify_ratio, check_cleanup, check_o1_o2, check_o1_o2_tree, greedy_bin_packing, play_game,
    Adversary, AdversaryN2, GameView, LevelLog, RecursiveAdversary,
};
use fairdiv_core::allocator::Policy;
use fairdiv_core::{Allocation, Instance, Rational};
use proptest::prelude::*;

fn q(a: i64, b: i64) -> Rational {
    Rational::ratio(a, b)
}

fn int(a: i64) -> Rational {
    Rational::from_integer(a)
}

/// Feeds a fixed sequence of winners (0-based) to an adversary.
fn drive<A: Adversary>(adv: &mut A, winners: &[usize]) -> Instance {
    let mut inst = Instance::empty(adv.n()).unwrap();
    for &w in winners {
        inst.push(adv.next_item().unwrap()).unwrap();
        adv.observe(w).unwrap();
    }
    inst
}

#[test]
fn agent_one_taking_twice_loses_half_the_ratio() {
    let mut adv = AdversaryN2::new(q(1, 2)).unwrap();
    let out = play_game(&mut adv, &Policy::External(vec![0, 0]), 2, &q(3, 2)).unwrap();
    assert_eq!(out.rounds, 2);
    assert!(out.won);
    assert_eq!(out.certificate.agent, 1);
    assert_eq!(out.certificate.ratio_lower, int(2));
    assert!(out.certificate.verify(&out.instance, &out.allocation));
}

#[test]
fn alternating_policy_is_caught_by_agent_two() {
    let eps = q(1, 2);
    let mut adv = AdversaryN2::new(eps.clone()).unwrap();
    let eps2 = adv.eps2().clone();
    let pattern: Vec<usize> = (0..40).map(|j| j % 2).collect();
    let target = int(2) - &eps;
    let out = play_game(&mut adv, &Policy::External(pattern), 40, &target).unwrap();
    assert!(out.won, "ratio {}", out.certificate.ratio_lower);
    assert!(out.certificate.ratio_lower >= int(2) / (Rational::one() + &eps2));
    assert!(out.certificate.verify(&out.instance, &out.allocation));
}

#[test]
fn n2_rejects_out_of_order_calls() {
    let mut adv = AdversaryN2::new(Rational::one()).unwrap();
    assert!(adv.observe(0).is_err());
    adv.next_item().unwrap();
    assert!(adv.next_item().is_err());
    assert!(adv.observe(2).is_err());
    assert!(AdversaryN2::new(int(0)).is_err());
    assert!(AdversaryN2::new(int(2)).is_err());
}

#[test]
fn certificates_survive_a_json_round_trip_and_detect_tampering() {
    let mut adv = AdversaryN2::new(q(1, 2)).unwrap();
    let out = play_game(&mut adv, &Policy::RoundRobin, 100, &q(3, 2)).unwrap();
    let back: fairdiv_core::adversary::RatioCertificate = serde_json::from_str(&out.certificate.to_json()).unwrap();
    assert_eq!(back, out.certificate);
    assert!(back.verify(&out.instance, &out.allocation));
    let mut bad = back.clone();
    bad.ratio_lower = &bad.ratio_lower + q(1, 1000);
    assert!(!bad.verify(&out.instance, &out.allocation));
    let mut bad = back;
    bad.witness.0.swap(0, 1);
    bad.witness.0[0].clear();
    assert!(!bad.verify(&out.instance, &out.allocation));
}

#[test]
fn bin_packing_witness_on_a_small_example() {
    // Own items 0..4 fit in two bins of capacity (1 + 2·1/4)·4 = 6;
    // items 4 and 5 go to the heavier bin.
    let values = vec![int(4), int(2), int(3), int(3), q(1, 2), q(1, 2)];
    let w = bin_packing_witness(&values, &[0, 1, 2, 3], 2, &q(1, 4)).unwrap();
    assert!(w.is_partition_of(2, 6));
    assert_eq!(w.0, vec![vec![0, 1, 4, 5], vec![2, 3]]);
    assert_eq!(w.max_bundle_of(&values), int(7));
    // Capacity 4 needs three bins.
    assert!(bin_packing_witness(&values, &[0, 1, 2, 3], 2, &int(0)).is_none());
}

#[test]
fn certify_ratio_uses_the_supplied_witness_when_it_is_best() {
    // 30 items keep the instance above the exact limit for n = 3.
    let n = 3;
    let rows: Vec<Vec<Rational>> = (0..30).map(|j| vec![int(1 + (j % 4) as i64); n]).collect();
    let inst = Instance::new(n, rows).unwrap();
    let alloc = Allocation::new((0..30).map(|j| j % n).collect());
    let certs = certify_ratio(&inst, &alloc, &[], Some(&q(1, 10))).unwrap();
    assert_eq!(certs.len(), n);
    for c in &certs {
        assert!(c.verify(&inst, &alloc));
        assert!(c.mms_lower <= c.mms_upper);
    }
    let bogus = fairdiv_core::Partition(vec![vec![0], vec![1]]);
    assert!(certify_ratio(&inst, &alloc, &[bogus], None).is_err());
}

#[test]
fn window_violation_is_reported_and_truncates_the_check() {
    // Top agent 1 takes item 0, then agent 0 takes three items with window 2.
    let log = LevelLog {
        depth: 2,
        start: 0,
        eps: Rational::one(),
        eps_top: q(1, 10),
        window: 2,
        emitted: vec![vec![int(1), int(1)], vec![int(1), q(1, 20)], vec![int(1), q(1, 20)], vec![int(1), int(5)]],
        winners: vec![1, 0, 0, 0],
        children: Vec::new(),
    };
    let rep = check_o1_o2(&log);
    assert_eq!(rep.window_violation, Some(3));
    // Item 3 would break O2 but lies past the violation.
    assert!(rep.o2_ok);
    assert_eq!(rep.o2_checked, 2);
}

#[test]
fn o2_breach_inside_the_window_fails() {
    let log = LevelLog {
        depth: 2,
        start: 0,
        eps: Rational::one(),
        eps_top: q(1, 10),
        window: 5,
        emitted: vec![vec![int(1), int(1)], vec![int(1), q(1, 5)]],
        winners: vec![1, 0],
        children: Vec::new(),
    };
    let rep = check_o1_o2(&log);
    assert!(!rep.o2_ok);
    assert!(!rep.pass());
}

#[test]
fn top_agent_taking_every_window_passes_the_observations() {
    for n in 2..=3usize {
        let eps = Rational::one();
        let mut adv = RecursiveAdversary::new(n, eps, n).unwrap();
        // Top agent n-1 takes every n-th item, the rest cycle over the others.
        let winners: Vec<usize> = (0..60).map(|j| if j % n == 0 { n - 1 } else { j % (n - 1) }).collect();
        drive(&mut adv, &winners);
        let log = adv.log();
        let reports = check_o1_o2_tree(&log);
        assert!(reports.iter().all(|r| r.window_violation.is_none()), "{reports:?}");
        assert!(reports.iter().all(|r| r.pass()), "{reports:?}");
        assert!(check_cleanup(&log, n).unwrap() > 0);
    }
}

#[test]
fn recursive_adversary_first_item_is_unit_for_every_agent() {
    let mut adv = RecursiveAdversary::new(4, q(1, 2), 8).unwrap();
    assert_eq!(adv.next_item().unwrap(), vec![Rational::one(); 4]);
    assert_eq!(adv.target(), &q(7, 2));
}

#[test]
fn recursive_certificates_verify() {
    let mut adv = RecursiveAdversary::new(3, Rational::one(), 3).unwrap();
    let target = adv.target().clone();
    let out = play_game(&mut adv, &Policy::DumpToOne, 50, &target).unwrap();
    assert!(out.won);
    assert_eq!(out.certificate.ratio_lower, int(3));
    assert!(out.certificate.verify(&out.instance, &out.allocation));
    assert!(!adv.events().is_empty());
}

#[test]
fn game_view_range_sum_matches_prefix_differences() {
    let inst = Instance::new(2, vec![vec![int(1), int(2)], vec![int(3), int(4)]]).unwrap();
    let prefix = vec![vec![int(0), int(1), int(4)], vec![int(0), int(2), int(6)]];
    let sums = vec![int(1), int(4)];
    let view = GameView { instance: &inst, assignment: &[0, 1], bundle_sums: &sums, prefix: &prefix };
    assert_eq!(view.range_sum(0, 1, 2), int(3));
    assert_eq!(view.range_sum(1, 0, 2), int(6));
}

proptest! {
    #[test]
    fn first_fit_respects_capacity_and_covers(vals in prop::collection::vec(1i64..50, 0..30), bins in 1usize..6, cap in 50i64..200) {
        let values: Vec<Rational> = vals.iter().map(|&v| int(v)).collect();
        let items: Vec<usize> = (0..values.len()).collect();
        let capacity = int(cap);
        if let Some(out) = greedy_bin_packing(&values, &items, bins, &capacity) {
            prop_assert_eq!(out.len(), bins);
            let mut seen: Vec<usize> = out.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, items);
            for b in &out {
                let load: Rational = b.iter().map(|&j| &values[j]).sum();
                prop_assert!(load <= capacity);
            }
        } else {
            // When first fit gives up, any two of its bins together overflow.
            let total: i64 = vals.iter().sum();
            prop_assert!(2 * total > bins as i64 * cap);
        }
    }

    #[test]
    fn n2_certificates_always_verify(seed in 0u64..40, eps_den in 1i64..5) {
        let mut adv = AdversaryN2::new(q(1, eps_den)).unwrap();
        let target = int(2) - q(1, eps_den);
        let out = play_game(&mut adv, &Policy::Mixture(seed), 30, &target).unwrap();
        prop_assert!(out.certificate.verify(&out.instance, &out.allocation));
        prop_assert_eq!(out.won, out.certificate.ratio_lower > target);
    }
}
