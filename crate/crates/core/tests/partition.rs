mod common;

use std::collections::{BTreeMap, BTreeSet};

use netdec::bundle::project_multipliers;
use netdec::case::NetworkCase;
use netdec::partition::{
    compute_cuts, load_partition, partition_greedy, partition_stats, Partition, PartitionError,
};
use proptest::prelude::*;

use common::*;

/// Cut lines recomputed straight from the definition: in-service branches whose endpoints
/// land in different parts, owner = part of the from-bus.
fn brute_force_cuts(case: &NetworkCase, p: &Partition) -> Vec<(usize, usize, usize)> {
    case.branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.in_service)
        .filter_map(|(l, b)| {
            let (f, t) = (p.part_of(b.from_bus)?, p.part_of(b.to_bus)?);
            (f != t).then_some((l, f, t))
        })
        .collect()
}

fn check_invariants(case: &NetworkCase, p: &Partition) {
    let k = p.num_parts();
    let buses: BTreeSet<usize> = case.active_bus_ids().into_iter().collect();
    assert_eq!(p.assignment().keys().copied().collect::<BTreeSet<_>>(), buses);
    assert_eq!(p.sizes().iter().sum::<usize>(), buses.len());
    assert!(p.sizes().iter().all(|&s| s > 0));

    // every in-service line is in some part; cut lines in exactly two
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for part in 0..k {
        for &l in p.part_lines(part) {
            *seen.entry(l).or_default() += 1;
        }
    }
    let cut_ids: BTreeSet<usize> = p.cut_lines().iter().map(|c| c.branch).collect();
    for l in case.active_branches() {
        let expect = if cut_ids.contains(&l) { 2 } else { 1 };
        assert_eq!(seen.get(&l).copied(), Some(expect), "line {l}");
    }
    for part in 0..k {
        for (_, c) in p.part_cuts(part) {
            assert!(p.part_lines(part).contains(&c.branch));
        }
    }
    let got: Vec<_> = p.cut_lines().iter().map(|c| (c.branch, c.plus, c.minus)).collect();
    assert_eq!(got, brute_force_cuts(case, p));
    assert_eq!(partition_stats(p).coupling_dimension, 4 * p.cut_lines().len());
}

#[test]
fn case5_two_way_split() {
    let case = pglib("case5_pjm");
    let p = partition_greedy(&case, 2, 0).unwrap();
    let mut sizes = p.sizes();
    sizes.sort();
    assert_eq!(sizes, vec![2, 3]);
    assert!(!p.cut_lines().is_empty());
    assert!(p.flags.disconnected_parts.is_empty());
    check_invariants(&case, &p);
}

#[test]
fn greedy_is_deterministic_per_seed() {
    let case = pglib("case30_ieee");
    for seed in 0..4 {
        let a = partition_greedy(&case, 3, seed).unwrap();
        let b = partition_greedy(&case, 3, seed).unwrap();
        assert_eq!(a, b);
        check_invariants(&case, &a);
    }
}

#[test]
fn two_bus_forced_split() {
    let case = load("cases/two_bus.m");
    let p = partition_greedy(&case, 2, 0).unwrap();
    assert_ne!(p.part_of(1), p.part_of(2));
    assert_eq!(p.cut_lines().len(), 1);
    assert_eq!(p.cut_lines()[0].branch, 0);
    check_invariants(&case, &p);
}

#[test]
fn single_part_has_no_coupling() {
    let case = pglib("case14_ieee__api");
    let p = partition_greedy(&case, 1, 0).unwrap();
    assert!(p.cut_lines().is_empty());
    assert_eq!(p.part_lines(0).len(), case.active_branches().len());
    assert_eq!(partition_stats(&p).coupling_dimension, 0);
}

#[test]
fn k_out_of_range() {
    let case = pglib("case5_pjm");
    assert!(matches!(partition_greedy(&case, 0, 0), Err(PartitionError::InvalidK { .. })));
    assert!(matches!(partition_greedy(&case, 6, 0), Err(PartitionError::InvalidK { k: 6, buses: 5 })));
    let p = partition_greedy(&case, 5, 0).unwrap();
    assert_eq!(p.cut_lines().len(), 6);
}

#[test]
fn document_round_trip() {
    for (name, k) in [("case5_pjm", 2), ("case14_ieee__api", 2), ("case30_ieee", 3), ("case118_ieee__api", 4)] {
        let case = pglib(name);
        let p = partition_greedy(&case, k, 7).unwrap();
        let q = load_partition(&p.to_document(), &case).unwrap();
        assert_eq!(q.assignment(), p.assignment());
        assert_eq!(q.cut_lines(), p.cut_lines());
        for part in 0..k {
            assert_eq!(q.part_lines(part), p.part_lines(part));
        }
    }
}

#[test]
fn document_errors() {
    let case = pglib("case5_pjm");
    let ok = "1 1\n2 1\n3 2\n4 2\n5 2\n";
    assert_eq!(load_partition(ok, &case).unwrap().num_parts(), 2);
    let missing = "1 1\n2 1\n3 2\n5 2\n";
    assert_eq!(load_partition(missing, &case), Err(PartitionError::MissingBus(4)));
    let unknown = "1 1\n2 1\n3 2\n4 2\n5 2\n99 1\n";
    assert_eq!(load_partition(unknown, &case), Err(PartitionError::UnknownBus(99)));
}

#[test]
fn explicit_assignment_matches_definition() {
    let case = pglib("case5_pjm");
    let a: BTreeMap<usize, usize> = BTreeMap::from([(1, 0), (2, 0), (3, 0), (4, 1), (5, 1)]);
    let p = compute_cuts(&case, &a);
    check_invariants(&case, &p);
    assert_eq!(p.cut_lines().len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_assignments_satisfy_invariants(parts in proptest::collection::vec(0usize..3, 14)) {
        let case = pglib("case14_ieee__api");
        let mut a: BTreeMap<usize, usize> =
            case.active_bus_ids().into_iter().zip(parts.iter().copied()).collect();
        // relabel so parts are 0..K with none empty
        let used: BTreeSet<usize> = a.values().copied().collect();
        let relabel: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        a.values_mut().for_each(|k| *k = relabel[k]);
        let p = compute_cuts(&case, &a);
        check_invariants(&case, &p);
    }

    #[test]
    fn projected_multipliers_cancel(seed in 0u64..1000, k in 2usize..5, mu_scale in 0.1f64..1e4) {
        use rand::{Rng, SeedableRng};
        let case = pglib("case30_ieee");
        let p = partition_greedy(&case, k, seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mu: Vec<f64> = (0..p.coupling_dimension()).map(|_| rng.gen_range(-mu_scale..mu_scale)).collect();
        let lambdas = project_multipliers(&mu, &p).unwrap();
        // sum per coupling slot across parts is exactly zero
        let mut sums = vec![0.0; mu.len()];
        for (part, lam) in lambdas.iter().enumerate() {
            for ((cut, _), chunk) in p.part_cuts(part).zip(lam.chunks(4)) {
                for (c, v) in chunk.iter().enumerate() {
                    sums[4 * cut + c] += v;
                }
            }
        }
        prop_assert!(sums.iter().all(|&s| s == 0.0));
    }
}
