use hiercubes::blocks::{Block, Geometry};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = Geometry> {
    (1usize..=3, 2u32..=4).prop_map(|(d, m)| Geometry::new(d, m).unwrap())
}

fn block_in(g: Geometry) -> impl Strategy<Value = Block> {
    (-6i64..6, proptest::collection::vec(0u128..500, g.dim())).prop_map(|(j, m)| Block::new(j, m))
}

fn geometry_and_blocks() -> impl Strategy<Value = (Geometry, Block, Block)> {
    geometry().prop_flat_map(|g| (Just(g), block_in(g), block_in(g)))
}

proptest! {
    #[test]
    fn children_partition_their_parent((g, b, _) in geometry_and_blocks()) {
        let kids = g.children(&b).unwrap();
        prop_assert_eq!(kids.len() as f64, g.branching());
        for k in &kids {
            prop_assert_eq!(&g.parent(k).unwrap(), &b);
            prop_assert!(g.contains(&b, k));
        }
        for (i, a) in kids.iter().enumerate() {
            for c in &kids[i + 1..] {
                prop_assert!(!g.overlaps(a, c));
            }
        }
    }

    #[test]
    fn overlap_means_nesting((g, a, b) in geometry_and_blocks()) {
        let overlap = g.overlaps(&a, &b);
        prop_assert_eq!(overlap, g.contains(&a, &b) || g.contains(&b, &a));
        // overlap of half-open cubes, straight from the corners
        let (sa, sb) = (g.side(a.scale), g.side(b.scale));
        let geometric = g
            .corner(&a)
            .iter()
            .zip(g.corner(&b))
            .all(|(&x, y)| x < y + sb && y < x + sa);
        prop_assert_eq!(overlap, geometric);
    }

    #[test]
    fn lowest_common_block_is_the_least_upper_bound((g, a, b) in geometry_and_blocks()) {
        let top = g.lowest_common_block(&a, &b).unwrap();
        prop_assert!(g.contains(&top, &a) && g.contains(&top, &b));
        prop_assert_eq!(g.lcs(&a, &b).unwrap(), top.scale);
        if top.scale > a.scale.max(b.scale) {
            let kids = g.children(&top).unwrap();
            prop_assert!(!kids.iter().any(|k| g.contains(k, &a) && g.contains(k, &b)));
        }
    }

    #[test]
    fn hierarchical_distance_is_an_ultrametric(
        (g, a, b, c) in geometry().prop_flat_map(|g| (Just(g), block_in(g), block_in(g), block_in(g)))
    ) {
        let d = |x: &Block, y: &Block| g.hierarchical_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0.0);
        if a != b {
            prop_assert!(d(&a, &b) > 0.0);
        }
        prop_assert!(d(&a, &c) <= d(&a, &b).max(d(&b, &c)));
    }

    #[test]
    fn notation_round_trips((_, a, _) in geometry_and_blocks()) {
        let text = a.to_string();
        prop_assert_eq!(text.parse::<Block>().unwrap(), a);
    }
}
