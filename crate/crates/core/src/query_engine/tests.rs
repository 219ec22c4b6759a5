use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::page_mapper::Backend;
use crate::view_index::{IndexConfig, RoutingMode};

fn column(vpp: usize, pages: &[&[u64]]) -> PhysicalColumn {
    let mut col = PhysicalColumn::with_page_size(pages.len(), 8 + 8 * vpp, Backend::Sim).unwrap();
    col.fill_pages(|p, slots| slots.copy_from_slice(pages[p]));
    col
}

fn oracle(col: &PhysicalColumn, l: u64, u: u64) -> Vec<(RowId, u64)> {
    col.values()
        .enumerate()
        .filter(|&(_, v)| l <= v && v <= u)
        .map(|(i, v)| (RowId(i as u64), v))
        .collect()
}

fn sorted(mut r: Vec<(RowId, u64)>) -> Vec<(RowId, u64)> {
    r.sort_unstable();
    r
}

fn sync_engine() -> QueryEngine {
    QueryEngine::new(EngineConfig {
        async_mapper: false,
        ..EngineConfig::default()
    })
}

fn index(col: &PhysicalColumn, mode: RoutingMode) -> ViewIndex {
    ViewIndex::new(
        col,
        IndexConfig {
            mode,
            ..IndexConfig::default()
        },
    )
}

#[test]
fn range_query_validation() {
    assert!(RangeQuery::new(3, 3).is_ok());
    assert!(matches!(
        RangeQuery::new(4, 3),
        Err(Error::InvalidRange { lower: 4, upper: 3 })
    ));
}

#[test]
fn processed_pages_filter() {
    let mut f = ProcessedPagesFilter::new(130);
    assert!(f.insert(129));
    assert!(!f.insert(129));
    assert!(f.insert(0));
    assert!(f.contains(0) && f.contains(129) && !f.contains(64));
    assert_eq!(f.count(), 2);
    f.clear();
    assert_eq!(f.count(), 0);
}

#[test]
fn candidate_range_from_neighbouring_pages() {
    let col = column(
        3,
        &[&[10, 30, 45], &[48, 55, 48], &[58, 65, 65], &[70, 90, 90]],
    );
    for engine in [sync_engine(), QueryEngine::default()] {
        let mut idx = index(&col, RoutingMode::Single);
        let out = engine
            .answer_and_maintain(&col, &mut idx, RangeQuery::new(50, 60).unwrap())
            .unwrap();
        assert_eq!(sorted(out.result), vec![(RowId(4), 55), (RowId(6), 58)]);
        assert_eq!(out.scanned_pages, 4);
        assert_eq!(out.candidate, CandidateOutcome::Suggested(SuggestVerdict::Accepted));
        assert_eq!(out.candidate_range, Some(ValueRange::new(46, 69).unwrap()));
        let view = &idx.partials()[0];
        let pages: BTreeSet<_> = view.page_ids().into_iter().collect();
        assert_eq!(pages, BTreeSet::from([1, 2]));
        // brute force: every value in [46, 69] lives on P1 or P2
        for (i, v) in col.values().enumerate() {
            if (46..=69).contains(&v) {
                assert!(pages.contains(&(i / 3)), "value {v} on page {}", i / 3);
            }
        }
        // the next identical query is routed to the new view
        let again = engine
            .answer_and_maintain(&col, &mut idx, RangeQuery::new(50, 60).unwrap())
            .unwrap();
        assert_eq!(again.scanned_pages, 2);
        assert!(matches!(
            again.candidate,
            CandidateOutcome::Suggested(SuggestVerdict::DiscardedSubset { .. })
        ));
    }
}

#[test]
fn full_range_candidate_is_discarded() {
    let col = column(2, &[&[1, 2], &[3, 4], &[5, 6]]);
    let mut idx = index(&col, RoutingMode::Single);
    let out = sync_engine()
        .answer_and_maintain(&col, &mut idx, RangeQuery::new(0, u64::MAX).unwrap())
        .unwrap();
    assert_eq!(out.result.len(), 6);
    assert_eq!(
        out.candidate,
        CandidateOutcome::Suggested(SuggestVerdict::DiscardedLargerThanFull)
    );
    assert_eq!(out.candidate_range, Some(ValueRange::UNBOUNDED));
    assert!(idx.partials().is_empty());
}

#[test]
fn empty_match_discards_candidate() {
    let col = column(2, &[&[1, 2], &[30, 40]]);
    let mut idx = index(&col, RoutingMode::Single);
    let q = RangeQuery::new(10, 20).unwrap();
    let out = sync_engine().answer_and_maintain(&col, &mut idx, q).unwrap();
    assert!(out.result.is_empty());
    assert_eq!(out.candidate, CandidateOutcome::DiscardedEmpty);
    let full = answer_full_scan_only(&col, q);
    assert!(full.result.is_empty());
    assert_eq!(full.scanned_pages, 2);
}

#[test]
fn multi_view_scans_shared_pages_once() {
    let col = column(
        2,
        &[&[1, 1], &[5, 15], &[12, 12], &[18, 25], &[30, 30]],
    );
    let mut idx = index(&col, RoutingMode::Multi);
    let cfg = EngineConfig::default();
    let a = build_view(&col, ValueRange::new(0, 15).unwrap(), &cfg).unwrap();
    let b = build_view(&col, ValueRange::new(10, 27).unwrap(), &cfg).unwrap();
    let pa: BTreeSet<_> = a.page_ids().into_iter().collect();
    let pb: BTreeSet<_> = b.page_ids().into_iter().collect();
    assert_eq!(pa, BTreeSet::from([0, 1, 2]));
    assert_eq!(pb, BTreeSet::from([1, 2, 3]));
    idx.push_partial(a).unwrap();
    idx.push_partial(b).unwrap();

    let out = sync_engine()
        .answer_and_maintain(&col, &mut idx, RangeQuery::new(4, 20).unwrap())
        .unwrap();
    assert_eq!(out.views_used, 2);
    assert_eq!(out.scanned_pages, pa.union(&pb).count());
    assert_eq!(sorted(out.result), oracle(&col, 4, 20));
    // clamped to [0, 27]: page 4 was never scanned, page 0 narrows below
    assert_eq!(out.candidate_range, Some(ValueRange::new(2, 27).unwrap()));
}

#[test]
fn covering_interval_merges_adjacent_ranges() {
    let r = |l, u| ValueRange::new(l, u).unwrap();
    let ranges = [r(20, 30), r(0, 9), r(10, 15), r(40, 50)];
    assert_eq!(covering_interval(&ranges, 12), Some(r(0, 15)));
    assert_eq!(covering_interval(&ranges, 25), Some(r(20, 30)));
    assert_eq!(covering_interval(&ranges, 45), Some(r(40, 50)));
    assert_eq!(covering_interval(&ranges, 35), None);
    let open = [ValueRange::UNBOUNDED, r(5, 6)];
    assert_eq!(covering_interval(&open, 100), Some(ValueRange::UNBOUNDED));
    let tail = [ValueRange::from_bounds(Some(7), None).unwrap(), r(0, 6)];
    assert_eq!(
        covering_interval(&tail, 3),
        Some(ValueRange::from_bounds(Some(0), None).unwrap())
    );
}

#[test]
fn generation_stops_at_cap() {
    let col = column(2, &[&[1, 2], &[30, 40], &[50, 60]]);
    let mut idx = ViewIndex::new(
        &col,
        IndexConfig {
            max_views: 0,
            ..IndexConfig::default()
        },
    );
    let engine = sync_engine();
    let out = engine
        .answer_and_maintain(&col, &mut idx, RangeQuery::new(30, 40).unwrap())
        .unwrap();
    assert_eq!(
        out.candidate,
        CandidateOutcome::Suggested(SuggestVerdict::DiscardedCapReached)
    );
    let out = engine
        .answer_and_maintain(&col, &mut idx, RangeQuery::new(30, 40).unwrap())
        .unwrap();
    assert_eq!(out.candidate, CandidateOutcome::NotConstructed);
    assert_eq!(out.remaps, RemapStats::default());
    assert_eq!(sorted(out.result), oracle(&col, 30, 40));
}

#[test]
fn mapping_pipeline_applies_in_order() {
    let col = PhysicalColumn::create(32, Backend::Sim).unwrap();
    let region = Arc::new(VirtualRegion::reserve(col.physical(), 8).unwrap());
    let reqs = [RemapRequest::new(0, 10, 3), RemapRequest::new(3, 20, 1)];
    run_mapping_pipeline(&region, reqs, 1).unwrap();
    let snap = region.snapshot().unwrap();
    assert_eq!(
        snap.iter().collect::<Vec<_>>(),
        vec![(0, 10), (1, 11), (2, 12), (3, 20)]
    );

    let bad = [RemapRequest::new(0, 1, 1), RemapRequest::new(7, 31, 2)];
    assert!(run_mapping_pipeline(&region, bad, 1).is_err());
}

#[test]
fn pipeline_and_coalescing_do_not_change_the_view() {
    let mut col = PhysicalColumn::with_page_size(300, 64, Backend::Sim).unwrap();
    col.fill_pages(|p, s| {
        for (i, v) in s.iter_mut().enumerate() {
            *v = ((p * 37 + i * 11) % 500) as u64;
        }
    });
    let range = ValueRange::new(100, 104).unwrap();
    let mut snaps = Vec::new();
    let mut calls = Vec::new();
    for coalesce in [false, true] {
        for async_mapper in [false, true] {
            let cfg = EngineConfig {
                coalesce,
                async_mapper,
                queue_capacity: 4,
            };
            let v = build_view(&col, range, &cfg).unwrap();
            snaps.push(v.snapshot().unwrap());
            calls.push(v.region().remap_stats().calls);

            let mut idx = index(&col, RoutingMode::Single);
            let out = QueryEngine::new(cfg)
                .answer_and_maintain(&col, &mut idx, RangeQuery::new(100, 104).unwrap())
                .unwrap();
            snaps.push(idx.partials()[0].snapshot().unwrap());
            assert_eq!(out.remaps.calls, *calls.last().unwrap());
        }
    }
    assert!(snaps.windows(2).all(|w| w[0] == w[1]));
    assert!(calls[2] <= calls[0]);
}

#[test]
fn repeated_query_does_not_scan_more() {
    let n = 1000;
    let mut col = PhysicalColumn::with_page_size(n, 128, Backend::Sim).unwrap();
    col.fill_pages(|p, s| {
        for (i, v) in s.iter_mut().enumerate() {
            *v = if p % 10 == 3 { 1 + ((p * 7919 + i * 104729) % 1000) as u64 } else { 0 };
        }
    });
    let mut idx = index(&col, RoutingMode::Single);
    let engine = QueryEngine::default();
    let q = RangeQuery::new(400, 700).unwrap();
    let first = engine.answer_and_maintain(&col, &mut idx, q).unwrap();
    let second = engine.answer_and_maintain(&col, &mut idx, q).unwrap();
    assert!(second.scanned_pages <= first.scanned_pages);
    assert_eq!(second.scanned_pages, n / 10);
    assert_eq!(sorted(second.result), oracle(&col, 400, 700));
}

fn arb_column() -> impl Strategy<Value = (usize, Vec<u64>)> {
    (1usize..40, 1usize..6, 1u64..300).prop_flat_map(|(pages, vpp, hi)| {
        (Just(vpp), prop::collection::vec(0..=hi, pages * vpp))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queries_match_oracle_and_views_stay_sound(
        (vpp, values) in arb_column(),
        queries in prop::collection::vec((0u64..320, 0u64..80), 1..25),
        multi in any::<bool>(),
        max_views in 0usize..6,
        d in 0usize..3,
        r in 0usize..3,
        async_mapper in any::<bool>(),
    ) {
        let mut col = PhysicalColumn::with_page_size(values.len() / vpp, 8 + 8 * vpp, Backend::Sim).unwrap();
        col.fill_from_iter(values.iter().copied()).unwrap();
        let mut idx = ViewIndex::new(&col, IndexConfig {
            max_views,
            discard_tolerance: d,
            replace_tolerance: r,
            mode: if multi { RoutingMode::Multi } else { RoutingMode::Single },
        });
        let engine = QueryEngine::new(EngineConfig { async_mapper, ..EngineConfig::default() });
        for (l, w) in queries {
            let q = RangeQuery::new(l, l + w).unwrap();
            let out = engine.answer_and_maintain(&col, &mut idx, q).unwrap();
            prop_assert_eq!(sorted(out.result), oracle(&col, q.lower(), q.upper()));
            prop_assert!(out.scanned_pages <= col.num_pages());
            if let Some(range) = out.candidate_range {
                prop_assert!(range.covers_values(q.lower(), q.upper()));
            }
            for v in idx.partials() {
                prop_assert!(v.is_dense().unwrap());
                let pages: BTreeSet<_> = v.page_ids().into_iter().collect();
                for (i, x) in col.values().enumerate() {
                    if v.range().contains(x) {
                        prop_assert!(pages.contains(&(i / vpp)), "view {} misses value {} on page {}", v.range(), x, i / vpp);
                    }
                }
            }
        }
    }
}
