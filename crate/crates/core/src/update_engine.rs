//! Batched value overwrites and realignment of the partial views.
//!
//! A batch is applied to the column first. It is then collapsed to one record
//! per row (first old value, last new value) and grouped by page. Each partial
//! view `[a, b]` takes one mapping snapshot per batch and handles every
//! touched page `p`:
//!
//! | `p` mapped | some new in `[a, b]` | some old in `[a, b]` | action |
//! |---|---|---|---|
//! | no  | yes | - | add `p` |
//! | no  | no  | - | none |
//! | yes | yes | - | keep |
//! | yes | no  | no | keep |
//! | yes | no  | yes | scan `p`, remove it if no value is left in `[a, b]` |

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::page_mapper::PhysicalPageIndex;
use crate::physical_store::{PhysicalColumn, RowId};
use crate::query_engine::page_qualifies;
use crate::view_index::ViewIndex;
use crate::views::{DirectSink, RemapEmitter, ViewId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UpdateRecord {
    pub row: RowId,
    pub old: u64,
    pub new: u64,
}

impl UpdateRecord {
    pub fn new(row: u64, old: u64, new: u64) -> Self {
        Self {
            row: RowId(row),
            old,
            new,
        }
    }
}

/// One record per row: the first old and the last new value, in order of
/// first occurrence.
pub fn collapse_batch(batch: &[UpdateRecord]) -> Vec<UpdateRecord> {
    let mut out: Vec<UpdateRecord> = Vec::new();
    let mut pos: HashMap<RowId, usize> = HashMap::new();
    for rec in batch {
        match pos.get(&rec.row) {
            Some(&i) => out[i].new = rec.new,
            None => {
                pos.insert(rec.row, out.len());
                out.push(*rec);
            }
        }
    }
    out
}

/// Checks every record's old value against the column state it will meet,
/// without modifying the column.
pub fn validate_batch(col: &PhysicalColumn, batch: &[UpdateRecord]) -> Result<()> {
    let mut pending: HashMap<RowId, u64> = HashMap::new();
    for rec in batch {
        let found = match pending.get(&rec.row) {
            Some(&v) => v,
            None => col.read_value(rec.row)?,
        };
        if found != rec.old {
            return Err(Error::StaleOldValue {
                row: rec.row.0,
                expected: rec.old,
                found,
            });
        }
        pending.insert(rec.row, rec.new);
    }
    Ok(())
}

/// Validates and applies `batch` in order through the full view.
pub fn apply_batch(col: &mut PhysicalColumn, batch: &[UpdateRecord]) -> Result<()> {
    validate_batch(col, batch)?;
    for rec in batch {
        col.write_value(rec.row, rec.new)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewRealignStats {
    pub view: ViewId,
    pub pages_added: usize,
    pub pages_removed: usize,
    pub full_page_scans: usize,
    pub snapshot_parses: u64,
}

impl ViewRealignStats {
    /// Pages this view's realignment had to touch.
    pub fn touched_pages(&self) -> usize {
        self.pages_added + self.pages_removed + self.full_page_scans
    }
}

#[derive(Clone, Debug, Default)]
pub struct RealignStats {
    pub per_view: Vec<ViewRealignStats>,
    /// Records after collapsing, no-ops excluded.
    pub effective_records: usize,
    pub apply_time: Duration,
    pub parse_time: Duration,
    pub realign_time: Duration,
}

impl RealignStats {
    pub fn pages_added(&self) -> usize {
        self.per_view.iter().map(|s| s.pages_added).sum()
    }

    pub fn pages_removed(&self) -> usize {
        self.per_view.iter().map(|s| s.pages_removed).sum()
    }

    pub fn full_page_scans(&self) -> usize {
        self.per_view.iter().map(|s| s.full_page_scans).sum()
    }

    pub fn touched_pages(&self) -> usize {
        self.per_view.iter().map(|s| s.touched_pages()).sum()
    }

    pub fn snapshot_parses(&self) -> u64 {
        self.per_view.iter().map(|s| s.snapshot_parses).sum()
    }
}

/// Applies `batch` to the column, then realigns every partial view of `idx`.
pub fn apply_and_realign(
    col: &mut PhysicalColumn,
    idx: &mut ViewIndex,
    batch: &[UpdateRecord],
    coalesce: bool,
) -> Result<RealignStats> {
    let start = Instant::now();
    apply_batch(col, batch)?;
    let mut stats = RealignStats {
        apply_time: start.elapsed(),
        ..RealignStats::default()
    };

    let mut by_page: BTreeMap<PhysicalPageIndex, Vec<UpdateRecord>> = BTreeMap::new();
    for rec in collapse_batch(batch).into_iter().filter(|r| r.old != r.new) {
        let (page, _) = col.row_to_page(rec.row)?;
        by_page.entry(page).or_default().push(rec);
        stats.effective_records += 1;
    }
    if by_page.is_empty() {
        return Ok(stats);
    }

    let col = &*col;
    for view in idx.partials_mut() {
        let range = view.range();
        let parses_before = view.region().snapshot_count();
        let t = Instant::now();
        let mut snap = view.snapshot()?;
        stats.parse_time += t.elapsed();

        let t = Instant::now();
        let mut vs = ViewRealignStats {
            view: view.id(),
            pages_added: 0,
            pages_removed: 0,
            full_page_scans: 0,
            snapshot_parses: 0,
        };
        let mut to_add = Vec::new();
        let mut to_remove = Vec::new();
        for (&page, recs) in &by_page {
            let new_in = recs.iter().any(|r| range.contains(r.new));
            if !snap.contains_phys(page) {
                if new_in {
                    to_add.push(page);
                }
                continue;
            }
            if new_in || !recs.iter().any(|r| range.contains(r.old)) {
                continue;
            }
            vs.full_page_scans += 1;
            if !page_qualifies(col, page, &range) {
                to_remove.push(page);
            }
        }
        for &page in &to_remove {
            view.remove_page(page, &mut snap)?;
        }
        let mut emitter = RemapEmitter::new(DirectSink::new(Arc::clone(view.region())), coalesce);
        for &page in &to_add {
            view.add_page(page, &mut emitter)?;
        }
        emitter.finish()?;
        vs.pages_added = to_add.len();
        vs.pages_removed = to_remove.len();
        vs.snapshot_parses = view.region().snapshot_count() - parses_before;
        stats.realign_time += t.elapsed();
        stats.per_view.push(vs);
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RebuildStats {
    pub pages_scanned: usize,
    pub pages_mapped: usize,
    pub elapsed: Duration,
}

/// Recomputes every partial view from a full scan of the column.
pub fn rebuild_all_views(
    col: &PhysicalColumn,
    idx: &mut ViewIndex,
    coalesce: bool,
) -> Result<RebuildStats> {
    let start = Instant::now();
    let mut stats = RebuildStats::default();
    for view in idx.partials_mut() {
        let range = view.range();
        view.clear()?;
        let mut emitter = RemapEmitter::new(DirectSink::new(Arc::clone(view.region())), coalesce);
        for page in 0..col.num_pages() {
            if page_qualifies(col, page, &range) {
                view.add_page(page, &mut emitter)?;
            }
        }
        emitter.finish()?;
        stats.pages_scanned += col.num_pages();
        stats.pages_mapped += view.num_pages();
    }
    stats.elapsed = start.elapsed();
    Ok(stats)
}
