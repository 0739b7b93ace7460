//! Walk → range slice → generalized range → genealogy, end to end on E0.

use std::sync::Arc;

use treewalk::environment::EnvironmentLaw;
use treewalk::genealogy::{coalescent_times, first_full_split, Constraint};
use treewalk::par::Execution;
use treewalk::range::{general_range, pair_class_counts, pair_mrca_counts, pair_total_closed, sample_uniform_tuple, RangeOptions};
use treewalk::rng::stream;
use treewalk::tree::{MarkedTree, TreeOptions};
use treewalk::walk::{range_slice_band, run_excursions, RangeSlice, WalkTrace};

fn explored(seed: u64) -> Option<(MarkedTree, WalkTrace, RangeSlice)> {
    let law = Arc::new(EnvironmentLaw::reference());
    let mut tree = MarkedTree::lazy(law, seed, TreeOptions::with_depth(1_000_000)).unwrap();
    let mut rng = stream(seed, "pipeline", 0);
    let trace = run_excursions(&mut tree, 40, Some(400_000), &mut rng).ok()?;
    let slice = range_slice_band(&trace, &tree, 3, 7);
    (slice.size() >= 4).then_some((tree, trace, slice))
}

#[test]
fn pair_ranges_agree_across_routes() {
    let mut checked = 0;
    for seed in 0..20 {
        let Some((tree, trace, slice)) = explored(seed) else { continue };
        let opts = RangeOptions { exec: Execution::Sequential, ..RangeOptions::default() };
        let all = general_range(&tree, &trace, &slice, 2, &Constraint::One, opts).unwrap();
        let hist = pair_mrca_counts(&tree, &slice.vertices);
        assert_eq!(all.value, hist.iter().sum::<u64>() as f64);
        assert_eq!(all.value, pair_total_closed(&tree, &slice) as f64);

        let (total, distinct, same) = pair_class_counts(&tree, &trace, &slice);
        assert_eq!(total as f64, all.value);
        assert_eq!(all.classes.distinct, distinct as f64);
        assert_eq!(all.classes.same_single, same as f64);
        assert_eq!(all.classes.distinct + all.classes.same_single + all.classes.mixed, all.value);

        for m in 1..=8 {
            let split = general_range(&tree, &trace, &slice, 2, &Constraint::SplitBy(m), opts).unwrap();
            let cumulative: u64 = hist.iter().take(m as usize).sum();
            assert_eq!(split.value, cumulative as f64, "seed {seed}, m {m}");
        }
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} usable walks");
}

#[test]
fn sampled_tuples_have_consistent_genealogies() {
    let mut checked = 0;
    for seed in 0..20 {
        let Some((tree, _, slice)) = explored(seed) else { continue };
        let mut rng = stream(seed, "pipeline-tuples", 0);
        for k in 2..=3 {
            if slice.size() < 2 * k {
                continue;
            }
            for _ in 0..20 {
                let Ok(x) = sample_uniform_tuple(&tree, &slice, k, None, &mut rng) else { continue };
                let sig = coalescent_times(&tree, &x).unwrap();
                assert_eq!(sig.k(), k);
                assert_eq!(sig.first_full_split(), first_full_split(&tree, &x).unwrap());
                assert!(x.iter().all(|&u| slice.vertices.contains(&u)));
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "only {checked} tuples");
}
