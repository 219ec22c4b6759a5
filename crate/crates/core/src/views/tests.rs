use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::page_mapper::Backend;

/// Column with `vpp` values per page; each page is padded by repeating its
/// last listed value.
fn column_with_pages(vpp: usize, pages: &[&[u64]]) -> PhysicalColumn {
    let mut col = PhysicalColumn::with_page_size(pages.len(), 8 + 8 * vpp, Backend::Sim).unwrap();
    col.fill_pages(|p, slots| {
        let src = pages[p];
        for (i, s) in slots.iter_mut().enumerate() {
            *s = src[i.min(src.len() - 1)];
        }
    });
    col
}

/// Independent linear-scan oracle for one page.
fn oracle_scan(values: &[u64], lower: u64, upper: u64) -> (Vec<u64>, Option<u64>, Option<u64>) {
    let matches = values.iter().copied().filter(|&v| lower <= v && v <= upper).collect();
    let below = values.iter().copied().filter(|&v| v < lower).max();
    let above = values.iter().copied().filter(|&v| v > upper).min();
    (matches, below, above)
}

fn full_view_copy(col: &PhysicalColumn, pages: &[usize]) -> VirtualView {
    let mut view = VirtualView::create_empty(col, ValueRange::UNBOUNDED).unwrap();
    let mut em = RemapEmitter::new(DirectSink::new(Arc::clone(view.region())), true);
    for &p in pages {
        view.add_page(p, &mut em).unwrap();
    }
    em.finish().unwrap();
    view
}

#[test]
fn empty_partial_view() {
    let col = PhysicalColumn::create(8, Backend::Sim).unwrap();
    let v = VirtualView::create_empty_partial(&col, 10, 20).unwrap();
    assert_eq!(v.range(), ValueRange::new(10, 20).unwrap());
    assert_eq!(v.num_pages(), 0);
    assert_eq!(v.region().num_slots(), 8);
    assert!(v.snapshot().unwrap().is_empty());
    assert!(!v.is_full());

    let w = VirtualView::create_empty_partial(&col, 10, 20).unwrap();
    assert_ne!(v.id(), w.id());
    v.region().remap_range(RemapRequest::new(0, 3, 1)).unwrap();
    assert!(w.snapshot().unwrap().is_empty());

    assert!(matches!(
        VirtualView::create_empty_partial(&col, 20, 10),
        Err(Error::InvalidRange { lower: 20, upper: 10 })
    ));
}

#[test]
fn scan_examples_match_oracle() {
    let col = column_with_pages(3, &[&[1, 5, 9], &[70, 90], &[10, 45, 70]]);
    let view = full_view_copy(&col, &[0, 1, 2]);

    let r = view.scan_and_filter_page(0, 4, 6).unwrap();
    assert_eq!(r.matches, vec![(RowId(1), 5)]);
    assert_eq!((r.largest_below, r.smallest_above), (Some(1), Some(9)));
    assert!(r.is_qualifying());

    for (slot, values) in [(1usize, &[70u64, 90, 90][..]), (2, &[10, 45, 70][..])] {
        let r = view.scan_and_filter_page(slot, 50, 60).unwrap();
        let (m, below, above) = oracle_scan(values, 50, 60);
        assert_eq!(r.matches.iter().map(|&(_, v)| v).collect::<Vec<_>>(), m);
        assert_eq!((r.largest_below, r.smallest_above), (below, above));
        assert!(!r.is_qualifying());
    }
    let r = view.scan_and_filter_page(1, 50, 60).unwrap();
    assert_eq!((r.largest_below, r.smallest_above), (None, Some(70)));
    let r = view.scan_and_filter_page(2, 50, 60).unwrap();
    assert_eq!((r.largest_below, r.smallest_above), (Some(45), Some(70)));

    assert!(matches!(
        view.scan_and_filter_page(3, 0, 1),
        Err(Error::OutOfBounds { .. })
    ));
}

#[test]
fn scattered_view_reconstructs_row_ids() {
    let col = column_with_pages(2, &[&[1, 2], &[3, 4], &[5, 6], &[7, 8]]);
    let view = full_view_copy(&col, &[3, 1]);
    let r = view.scan_and_filter_page(0, 0, 100).unwrap();
    assert_eq!(r.matches, vec![(RowId(6), 7), (RowId(7), 8)]);
    let r = view.scan_and_filter_page(1, 4, 4).unwrap();
    assert_eq!(r.matches, vec![(RowId(3), 4)]);
    assert_eq!(view.page_ids(), vec![3, 1]);
}

#[test]
fn coalescing_emitter() {
    let col = PhysicalColumn::create(32, Backend::Sim).unwrap();
    let mut view = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
    let mut em = RemapEmitter::new(Vec::new(), true);
    for p in [10, 11, 12, 20] {
        view.add_page(p, &mut em).unwrap();
    }
    let reqs = em.finish().unwrap();
    assert_eq!(
        reqs,
        vec![RemapRequest::new(0, 10, 3), RemapRequest::new(3, 20, 1)]
    );
    assert_eq!(view.num_pages(), 4);

    let mut single = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
    let mut em = RemapEmitter::new(Vec::new(), true);
    single.add_page(5, &mut em).unwrap();
    assert_eq!(em.emitted(), 0);
    assert_eq!(em.finish().unwrap(), vec![RemapRequest::new(0, 5, 1)]);
}

#[test]
fn ordered_run_is_one_request() {
    let col = PhysicalColumn::create(100, Backend::Sim).unwrap();
    let mut view = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
    let mut em = RemapEmitter::new(DirectSink::new(Arc::clone(view.region())), true);
    for p in 0..100 {
        view.add_page(p, &mut em).unwrap();
    }
    assert_eq!(em.emitted(), 0);
    em.finish().unwrap();
    assert_eq!(view.region().remap_stats(), crate::page_mapper::RemapStats { calls: 1, pages: 100 });
    assert!(view.is_dense().unwrap());

    let mut plain = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
    let mut em = RemapEmitter::new(DirectSink::new(Arc::clone(plain.region())), false);
    for p in 0..100 {
        plain.add_page(p, &mut em).unwrap();
    }
    em.finish().unwrap();
    assert_eq!(plain.region().remap_stats().calls, 100);
    assert_eq!(plain.snapshot().unwrap(), view.snapshot().unwrap());
}

#[test]
fn duplicate_add_is_rejected() {
    let col = PhysicalColumn::create(4, Backend::Sim).unwrap();
    let mut view = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
    let mut em = RemapEmitter::new(Vec::new(), true);
    view.add_page(2, &mut em).unwrap();
    assert!(matches!(view.add_page(2, &mut em), Err(Error::DuplicatePage(2))));
    assert!(matches!(view.add_page(4, &mut em), Err(Error::OutOfBounds { .. })));
    assert_eq!(view.num_pages(), 1);
}

#[test]
fn swap_remove_keeps_prefix_dense() {
    let col = PhysicalColumn::create(10, Backend::Sim).unwrap();
    let mut view = full_view_copy(&col, &[7, 9, 4]);
    let mut snap = view.snapshot().unwrap();
    view.remove_page(9, &mut snap).unwrap();
    assert_eq!(view.num_pages(), 2);
    assert_eq!(snap.iter().collect::<Vec<_>>(), vec![(0, 7), (1, 4)]);
    assert_eq!(view.snapshot().unwrap(), snap);
    assert_eq!(view.page_ids(), vec![7, 4]);

    assert!(matches!(view.remove_page(9, &mut snap), Err(Error::PageNotMapped(9))));
}

#[test]
fn remove_last_and_only_pages() {
    let col = PhysicalColumn::create(10, Backend::Sim).unwrap();
    let mut view = full_view_copy(&col, &[3, 8]);
    let mut snap = view.snapshot().unwrap();
    let before = view.region().remap_stats();
    view.remove_page(8, &mut snap).unwrap();
    assert_eq!(view.region().remap_stats(), before, "no swap remap for the last slot");
    assert_eq!(view.page_ids(), vec![3]);

    view.remove_page(3, &mut snap).unwrap();
    assert_eq!(view.num_pages(), 0);
    assert!(snap.is_empty());
    assert!(view.snapshot().unwrap().is_empty());
}

#[test]
fn update_range_validation() {
    let col = PhysicalColumn::create(2, Backend::Sim).unwrap();
    let mut view = VirtualView::create_empty_partial(&col, 50, 60).unwrap();
    view.update_range(Some(46), Some(69)).unwrap();
    assert_eq!(view.range(), ValueRange::new(46, 69).unwrap());
    view.update_range(Some(46), Some(69)).unwrap();
    assert_eq!(view.range(), ValueRange::new(46, 69).unwrap());
    assert!(view.update_range(Some(5), Some(3)).is_err());
    assert_eq!(view.range(), ValueRange::new(46, 69).unwrap());
    view.update_range(None, Some(3)).unwrap();
    assert_eq!(view.range().to_string(), "[-inf, 3]");
}

#[test]
fn range_containment() {
    let r = |l, u| ValueRange::new(l, u).unwrap();
    assert!(r(5, 25).covers(&r(10, 20)));
    assert!(r(10, 20).is_subset_of(&r(5, 25)));
    assert!(r(10, 20).covers(&r(10, 20)));
    assert!(!r(10, 20).covers(&r(9, 20)));
    assert!(ValueRange::UNBOUNDED.covers(&r(0, u64::MAX)));
    assert!(!r(0, u64::MAX).covers(&ValueRange::UNBOUNDED));
    assert!(r(0, 9).width_key() < r(0, 10).width_key());
    assert!(r(0, u64::MAX).width_key() < ValueRange::UNBOUNDED.width_key());
}

proptest! {
    #[test]
    fn page_scan_matches_oracle(
        values in prop::collection::vec(0u64..100, 1..16),
        a in 0u64..100,
        b in 0u64..100,
    ) {
        let (lower, upper) = (a.min(b), a.max(b));
        let mut words = vec![3u64];
        words.extend(&values);
        let mut out = Vec::new();
        let s = scan_page_into(&words, values.len(), lower, upper, &mut out);
        let (m, below, above) = oracle_scan(&values, lower, upper);
        prop_assert_eq!(out.iter().map(|&(_, v)| v).collect::<Vec<_>>(), m);
        prop_assert_eq!(s.matched, out.len());
        prop_assert_eq!((s.largest_below, s.smallest_above), (below, above));
        for &(row, v) in &out {
            prop_assert_eq!(values[(row.0 - 3 * values.len() as u64) as usize], v);
        }
    }

    #[test]
    fn emitter_emits_exactly_the_added_pairs(
        pages in prop::sample::subsequence((0usize..64).collect::<Vec<_>>(), 0..64)
            .prop_shuffle(),
        coalesce in any::<bool>(),
    ) {
        let col = PhysicalColumn::with_page_size(64, 16, Backend::Sim).unwrap();
        let mut view = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
        let mut em = RemapEmitter::new(Vec::new(), coalesce);
        for &p in &pages {
            view.add_page(p, &mut em).unwrap();
        }
        let reqs = em.finish().unwrap();
        let emitted: Vec<_> = reqs.iter().flat_map(|r| r.pairs()).collect();
        let expected: Vec<_> = pages.iter().copied().enumerate().collect();
        prop_assert_eq!(emitted, expected);
        if !coalesce {
            prop_assert_eq!(reqs.len(), pages.len());
        }
    }

    #[test]
    fn dense_prefix_survives_add_remove(ops in prop::collection::vec((any::<bool>(), 0usize..24), 0..80)) {
        let col = PhysicalColumn::with_page_size(24, 16, Backend::Sim).unwrap();
        let mut view = VirtualView::create_empty_partial(&col, 0, 1).unwrap();
        let mut model = BTreeSet::new();
        for (add, p) in ops {
            if add && !model.contains(&p) {
                let mut em = RemapEmitter::new(DirectSink::new(Arc::clone(view.region())), true);
                view.add_page(p, &mut em).unwrap();
                em.finish().unwrap();
                model.insert(p);
            } else if !add && model.contains(&p) {
                let mut snap = view.snapshot().unwrap();
                view.remove_page(p, &mut snap).unwrap();
                prop_assert_eq!(&snap, &view.snapshot().unwrap());
                model.remove(&p);
            }
            prop_assert!(view.is_dense().unwrap());
            prop_assert_eq!(view.page_ids().into_iter().collect::<BTreeSet<_>>(), model.clone());
        }
    }
}
