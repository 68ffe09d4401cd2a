mod common;

use chrono::NaiveDate;
use placeconn::aggregate::{presence_to_days, shared_users, shared_users_with, unique_users, PairCountOptions};
use placeconn::connectivity::{build_matrix, pci_matrix};
use placeconn::movement::{person_day_movements, person_day_movements_with};
use placeconn::presence::{PresenceTable, PresenceTuple};
use placeconn::synth::{random_world, rng};
use placeconn::Exec;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn option_sets() -> Vec<PairCountOptions> {
    let sparse = PairCountOptions {
        dense_limit: 0,
        ..Default::default()
    };
    let spill = PairCountOptions {
        spill_threshold: Some(5),
        ..sparse.clone()
    };
    let seq = PairCountOptions {
        exec: Exec::Sequential,
        ..Default::default()
    };
    vec![PairCountOptions::default(), sparse, spill, seq]
}

fn check_against_oracle(tuples: &[PresenceTuple]) {
    let oracle = common::dedup(tuples);
    let table = PresenceTable::from_tuples(tuples.iter().cloned());
    assert_eq!(table.len(), oracle.len());

    let days: Vec<_> = presence_to_days(&table)
        .into_iter()
        .map(|r| ((r.place_code.to_string(), r.user), r.days))
        .collect();
    assert_eq!(days, common::days(&oracle).into_iter().collect::<Vec<_>>());

    let users: Vec<_> = unique_users(&table)
        .into_iter()
        .map(|r| (r.place_code.to_string(), r.users))
        .collect();
    assert_eq!(users, common::unique_users(&oracle).into_iter().collect::<Vec<_>>());

    let expected_shared: Vec<_> = common::shared_users(&oracle).into_iter().collect();
    let expected_moves: Vec<_> = common::movements(&oracle).into_iter().collect();
    let expected_pci = common::pci(&oracle);
    for opts in option_sets() {
        let shared: Vec<_> = shared_users_with(&table, &opts)
            .unwrap()
            .into_iter()
            .map(|r| ((r.place_i.to_string(), r.place_j.to_string()), r.shared))
            .collect();
        assert_eq!(shared, expected_shared);

        let moves: Vec<_> = person_day_movements_with(&table, &opts)
            .unwrap()
            .into_iter()
            .map(|r| ((r.place_i.to_string(), r.place_j.to_string()), r.person_days))
            .collect();
        assert_eq!(moves, expected_moves);

        let matrix = pci_matrix(&table, &opts, false).unwrap();
        assert_eq!(matrix.len(), expected_pci.len());
        for r in &matrix {
            let e = expected_pci[&(r.place_i.to_string(), r.place_j.to_string())];
            assert_eq!((r.users_i, r.users_j, r.shared), (e.0, e.1, e.2));
            assert!((r.pci - e.3).abs() <= 1e-12);
            assert!((r.pci_i_to_j - e.4).abs() <= 1e-12);
            assert!((r.pci_j_to_i - e.5).abs() <= 1e-12);
        }
    }
}

#[test]
fn seeded_worlds_match_brute_force() {
    for seed in 0..24 {
        let tuples = random_world(&mut rng(seed), 20, 1000, 90);
        check_against_oracle(&tuples);
    }
}

fn d(day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Duration::days(day as i64)
}

prop_compose! {
    fn small_world()(rows in prop::collection::vec((0u8..8, 0u16..60, 0u32..10), 0..300)) -> Vec<PresenceTuple> {
        rows.into_iter()
            .map(|(p, u, day)| PresenceTuple::new(format!("p{p}"), format!("u{u}"), d(day)))
            .collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pipeline_matches_oracle(tuples in small_world()) {
        check_against_oracle(&tuples);
    }

    #[test]
    fn input_order_and_sharding_do_not_matter(tuples in small_world(), seed in any::<u64>(), cut in 0usize..300) {
        let whole = PresenceTable::from_tuples(tuples.iter().cloned());
        let mut shuffled = tuples.clone();
        shuffled.shuffle(&mut rng(seed));
        let cut = cut.min(shuffled.len());
        let a = PresenceTable::from_tuples(shuffled[..cut].iter().cloned());
        let b = PresenceTable::from_tuples(shuffled[cut..].iter().cloned());
        let merged = a.union(&b);
        prop_assert_eq!(&merged, &whole);
        prop_assert_eq!(shared_users(&merged), shared_users(&whole));
        prop_assert_eq!(person_day_movements(&merged), person_day_movements(&whole));
    }

    #[test]
    fn one_user_day_over_k_places_gives_all_pairs(k in 1usize..25) {
        let tuples: Vec<_> = (0..k).map(|p| PresenceTuple::new(format!("q{p:02}"), "solo", d(0))).collect();
        let table = PresenceTable::from_tuples(tuples);
        let moves = person_day_movements(&table);
        prop_assert_eq!(moves.len(), k * (k - 1) / 2);
        prop_assert!(moves.iter().all(|m| m.person_days == 1));
        prop_assert_eq!(shared_users(&table).len(), k * (k - 1) / 2);
    }

    #[test]
    fn pci_properties(tuples in small_world()) {
        let table = PresenceTable::from_tuples(tuples);
        let records = pci_matrix(&table, &PairCountOptions::default(), true).unwrap();
        for r in &records {
            prop_assert!(r.pci > 0.0 && r.pci <= 1.0);
            prop_assert!(r.pci_i_to_j <= 1.0 && r.pci_j_to_i <= 1.0);
            prop_assert!((r.pci - (r.pci_i_to_j * r.pci_j_to_i).sqrt()).abs() <= 1e-12);
            prop_assert!(r.pci <= r.pci_i_to_j.max(r.pci_j_to_i) + 1e-15);
            prop_assert!(r.pci >= r.pci_i_to_j.min(r.pci_j_to_i) - 1e-15);
            prop_assert!(r.place_i <= r.place_j);
            if r.place_i == r.place_j {
                prop_assert_eq!(r.pci, 1.0);
            }
        }
        let mut sorted = records.clone();
        sorted.sort_by(|a, b| (&a.place_i, &a.place_j).cmp(&(&b.place_i, &b.place_j)));
        prop_assert_eq!(sorted, records);
    }

    #[test]
    fn sequential_and_parallel_agree(tuples in small_world()) {
        let table = PresenceTable::from_tuples(tuples);
        let seq = PairCountOptions {
            exec: Exec::Sequential,
            ..Default::default()
        };
        prop_assert_eq!(
            pci_matrix(&table, &seq, false).unwrap(),
            pci_matrix(&table, &PairCountOptions::default(), false).unwrap()
        );
    }
}

#[test]
fn matrix_from_count_tables_matches_fast_path() {
    let tuples = random_world(&mut rng(99), 15, 400, 30);
    let table = PresenceTable::from_tuples(tuples);
    let built = build_matrix(&shared_users(&table), &unique_users(&table), false).unwrap();
    assert_eq!(built, pci_matrix(&table, &PairCountOptions::default(), false).unwrap());
}

#[test]
fn empty_table_gives_empty_outputs() {
    let table = PresenceTable::from_tuples(Vec::new());
    assert!(shared_users(&table).is_empty());
    assert!(person_day_movements(&table).is_empty());
    assert!(pci_matrix(&table, &PairCountOptions::default(), true)
        .unwrap()
        .is_empty());
}
