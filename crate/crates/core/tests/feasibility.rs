use hybrid_bounds::scenario::{builtin_scenario, evaluate, SubsetSelector};

fn feasible(gnbs: &[usize], sats: &[usize]) -> (bool, usize) {
    let a = builtin_scenario("A").unwrap();
    let sel = SubsetSelector::explicit(gnbs.iter().copied(), sats.iter().copied());
    let r = &evaluate(&a, &sel).unwrap()[0];
    assert_eq!(r.feasible, r.peb_m.is_some());
    (r.feasible, r.rank)
}

#[test]
fn one_gnb_alone_is_infeasible() {
    assert!(!feasible(&[0], &[]).0);
    assert!(!feasible(&[1], &[]).0);
}

#[test]
fn two_gnbs_are_feasible() {
    assert!(feasible(&[0, 1], &[]).0);
}

#[test]
fn three_satellites_are_infeasible() {
    for sats in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        let (ok, rank) = feasible(&[], &sats);
        assert!(!ok);
        assert_eq!(rank, 6);
    }
}

#[test]
fn four_satellites_are_feasible_with_full_rank() {
    assert_eq!(feasible(&[], &[0, 1, 2, 3]), (true, 7));
}

#[test]
fn one_gnb_and_one_satellite_are_feasible() {
    for g in 0..2 {
        for s in 0..4 {
            assert!(feasible(&[g], &[s]).0, "g{g}+s{s}");
        }
    }
}
