use canonical_sup::{load_set, save_set, FiniteSet, Point};
use proptest::prelude::*;

fn coords() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        Just(0.0),
        Just(-0.0),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_round_trip(rows in (1usize..6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(coords(), d), 1..10))) {
        let points: Vec<Point> = rows.into_iter().map(|r| Point::new(r).unwrap()).collect();
        let (set, _) = FiniteSet::dedup("prop", points).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.set");
        save_set(&set, &path).unwrap();
        let back = load_set(&path).unwrap();
        prop_assert_eq!(back.content_hash(), set.content_hash());
        prop_assert_eq!(&back, &set);
    }
}
