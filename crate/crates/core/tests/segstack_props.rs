use proptest::prelude::*;
use segfuse::segstack::{
    aggregate_superclasses, shuffle_classes, ClassTable, MaskStack, SuperclassMap, FOREIGN_OBJECT_RANGE, PATHOLOGY_RANGE,
};
use sha2::{Digest, Sha256};

fn stack(max_cls: usize, max_side: usize) -> impl Strategy<Value = MaskStack> {
    (1..=max_cls, 1..=max_side, 1..=max_side).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(any::<bool>(), c * h * w).prop_map(move |bits| {
            let px: Vec<u8> = bits.iter().map(|&b| u8::from(b)).collect();
            MaskStack::from_pixels(c, h, w, &px).unwrap()
        })
    })
}

fn full_stack(side: usize) -> impl Strategy<Value = MaskStack> {
    prop::collection::vec(prop::bool::weighted(0.05), 212 * side * side).prop_map(move |bits| {
        let px: Vec<u8> = bits.iter().map(|&b| u8::from(b)).collect();
        MaskStack::from_pixels(212, side, side, &px).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sstk_round_trip_is_bit_exact(s in stack(24, 19)) {
        let bytes = s.encode();
        let back = MaskStack::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.encode(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aggregation_is_pixelwise_or(s in full_stack(6)) {
        let map = SuperclassMap::default_map();
        let agg = aggregate_superclasses(&s, &map).unwrap();
        prop_assert_eq!(agg.n_cls(), 20);
        for sc in 0..20 {
            for y in 0..6 {
                for x in 0..6 {
                    let expect = (0..212).any(|c| map.superclass_of(c).unwrap() == sc && s.get(c, y, x));
                    prop_assert_eq!(agg.get(sc, y, x), expect);
                }
            }
        }
    }

    #[test]
    fn shuffling_permutes_classes(s in full_stack(3), seed in any::<u64>()) {
        let t = shuffle_classes(&s, seed);
        let mut a: Vec<Vec<u8>> = (0..212).map(|c| s.class_bytes(c).to_vec()).collect();
        let mut b: Vec<Vec<u8>> = (0..212).map(|c| t.class_bytes(c).to_vec()).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn class_table_has_212_distinct_names() {
    let t = ClassTable::default_table();
    assert_eq!(t.len(), 212);
    let mut names = t.names().to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 212);
    // digest of the names in index order, one per line
    let digest = Sha256::digest(t.names().join("\n").as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "ce5fc9060dae7c1661eef2e0319739a79143906b2611a155d55127c8e0c65d54");
    assert_eq!(t.name(0), Some("spine"));
    assert_eq!(t.name(182), Some("Effusion"));
    assert_eq!(t.name(189), Some("Pneumothorax"));
    assert_eq!(t.name(211), Some("Foreign Object"));
}

#[test]
fn superclass_map_groups() {
    let map = SuperclassMap::default_map();
    assert_eq!(map.n_superclasses(), 20);
    let path = map.superclass_of(*PATHOLOGY_RANGE.start()).unwrap();
    assert_eq!(map.members(path), PATHOLOGY_RANGE.collect::<Vec<_>>());
    let fo = map.superclass_of(*FOREIGN_OBJECT_RANGE.start()).unwrap();
    assert_eq!(map.members(fo), FOREIGN_OBJECT_RANGE.collect::<Vec<_>>());
}

#[test]
fn disjoint_members_union_has_summed_area() {
    let map = SuperclassMap::default_map();
    let mut s = MaskStack::empty(212, 8, 8);
    let members = map.members(0);
    assert!(members.len() >= 2);
    s.set(members[0], 0, 0, true);
    s.set(members[0], 0, 1, true);
    s.set(members[1], 5, 5, true);
    let agg = aggregate_superclasses(&s, &map).unwrap();
    assert_eq!(agg.area(0), 3);
}
