//! Range query processing with adaptive view creation.
//!
//! Every query is answered from the views the index routes it to. While the
//! scan runs, the qualifying pages are mapped into a fresh candidate view, and
//! the non-qualifying pages narrow the value range the candidate can claim:
//! a value `v` below the query that sits on a non-qualifying page pushes the
//! candidate's lower bound above `v` (symmetrically for the upper bound).
//! Remaps are coalesced into runs and optionally handed to a mapping worker
//! over a bounded queue; the candidate is suggested to the index only after
//! the worker has applied the last request.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::page_mapper::{PhysicalPageIndex, RemapRequest, RemapStats, VirtualRegion};
use crate::physical_store::{PhysicalColumn, RowId};
use crate::view_index::{SuggestVerdict, ViewIndex};
use crate::views::{
    scan_page_into, DirectSink, PageSummary, RemapEmitter, RemapSink, ValueRange, VirtualView,
};

/// A closed range predicate `l <= v <= u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RangeQuery {
    l: u64,
    u: u64,
}

impl RangeQuery {
    pub fn new(l: u64, u: u64) -> Result<Self> {
        if l > u {
            return Err(Error::InvalidRange { lower: l, upper: u });
        }
        Ok(Self { l, u })
    }

    pub fn lower(&self) -> u64 {
        self.l
    }

    pub fn upper(&self) -> u64 {
        self.u
    }

    pub fn contains(&self, v: u64) -> bool {
        self.l <= v && v <= self.u
    }
}

/// Marks the pages already scanned for the current query, by page id.
#[derive(Clone, Debug)]
pub struct ProcessedPagesFilter {
    bits: Vec<u64>,
    len: usize,
}

impl ProcessedPagesFilter {
    pub fn new(num_pages: usize) -> Self {
        Self {
            bits: vec![0; num_pages.div_ceil(64)],
            len: num_pages,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, page: usize) -> bool {
        self.bits[page / 64] & (1 << (page % 64)) != 0
    }

    /// Sets the bit of `page`; true if it was clear before.
    pub fn insert(&mut self, page: usize) -> bool {
        let word = &mut self.bits[page / 64];
        let bit = 1u64 << (page % 64);
        let fresh = *word & bit == 0;
        *word |= bit;
        fresh
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn clear(&mut self) {
        self.bits.fill(0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    /// Merge consecutive page runs into one remap request.
    pub coalesce: bool,
    /// Apply remaps on a separate mapping worker.
    pub async_mapper: bool,
    /// Bound of the request queue feeding the mapping worker.
    pub queue_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            coalesce: true,
            async_mapper: true,
            queue_capacity: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CandidateOutcome {
    /// View generation has stopped, or the query ran in full-scan-only mode.
    NotConstructed,
    /// No page qualified.
    DiscardedEmpty,
    /// Mapping the candidate failed; the query result is unaffected.
    Aborted(String),
    Suggested(SuggestVerdict),
}

impl CandidateOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            CandidateOutcome::NotConstructed => "not_constructed",
            CandidateOutcome::DiscardedEmpty => "discarded_empty",
            CandidateOutcome::Aborted(_) => "aborted",
            CandidateOutcome::Suggested(v) => v.label(),
        }
    }

    pub fn verdict(&self) -> Option<SuggestVerdict> {
        match self {
            CandidateOutcome::Suggested(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QueryOutcome {
    pub result: Vec<(RowId, u64)>,
    pub scanned_pages: usize,
    pub views_used: usize,
    pub candidate: CandidateOutcome,
    pub candidate_range: Option<ValueRange>,
    pub candidate_pages: usize,
    /// Remap work spent on the candidate.
    pub remaps: RemapStats,
    pub elapsed: Duration,
}

/// Tightest contiguous interval of the union of `ranges` containing `at`.
/// Adjacent integer ranges count as contiguous.
pub fn covering_interval(ranges: &[ValueRange], at: u64) -> Option<ValueRange> {
    let mut sorted = ranges.to_vec();
    sorted.sort_by_key(|r| (r.lower.is_some(), r.min_value()));
    let mut merged: Vec<ValueRange> = Vec::new();
    for r in sorted {
        if let Some(cur) = merged.last_mut() {
            let touches = cur
                .upper
                .is_none_or(|u| r.min_value() <= u.saturating_add(1));
            if touches {
                cur.upper = match (cur.upper, r.upper) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
                continue;
            }
        }
        merged.push(r);
    }
    merged.into_iter().find(|r| r.contains(at))
}

/// Running candidate range, narrowed by every non-qualifying page.
#[derive(Clone, Copy, Debug)]
struct Extension {
    lower: Option<u64>,
    upper: Option<u64>,
}

impl Extension {
    fn observe(&mut self, s: &PageSummary) {
        if s.matched > 0 {
            return;
        }
        if let Some(b) = s.largest_below {
            if self.lower.is_none_or(|l| b >= l) {
                self.lower = Some(b + 1);
            }
        }
        if let Some(a) = s.smallest_above {
            if self.upper.is_none_or(|u| a <= u) {
                self.upper = Some(a - 1);
            }
        }
    }
}

enum CandidateSink {
    Direct(DirectSink),
    Channel(SyncSender<RemapRequest>),
}

impl RemapSink for CandidateSink {
    fn submit(&mut self, req: RemapRequest) -> Result<()> {
        match self {
            CandidateSink::Direct(d) => d.submit(req),
            CandidateSink::Channel(tx) => tx.send(req).map_err(|_| Error::MapperStopped),
        }
    }
}

/// A view under construction. The first error poisons it.
struct Building {
    view: VirtualView,
    emitter: RemapEmitter<CandidateSink>,
    failed: Option<Error>,
}

impl Building {
    fn new(view: VirtualView, sink: CandidateSink, coalesce: bool) -> Self {
        Self {
            view,
            emitter: RemapEmitter::new(sink, coalesce),
            failed: None,
        }
    }

    fn add(&mut self, phys: PhysicalPageIndex) {
        if self.failed.is_none() {
            if let Err(e) = self.view.add_page(phys, &mut self.emitter) {
                self.failed = Some(e);
            }
        }
    }

    /// Flushes and releases the sink, which closes the worker's queue.
    fn finish(self) -> (VirtualView, Result<()>) {
        let res = match self.failed {
            Some(e) => Err(e),
            None => self.emitter.finish().map(drop),
        };
        (self.view, res)
    }
}

fn run_mapper(region: &VirtualRegion, rx: Receiver<RemapRequest>) -> Result<()> {
    for req in rx {
        region.remap_range(req)?;
    }
    Ok(())
}

/// Runs `produce` with a sink feeding `region`, either directly or through a
/// mapping worker. Returns once every request has been applied. `produce`
/// must drop the sink before returning.
fn with_mapping<T>(
    region: &Arc<VirtualRegion>,
    cfg: &EngineConfig,
    produce: impl FnOnce(CandidateSink) -> (T, Result<()>),
) -> (T, Result<()>) {
    if !cfg.async_mapper {
        return produce(CandidateSink::Direct(DirectSink::new(Arc::clone(region))));
    }
    thread::scope(|s| {
        let (tx, rx) = sync_channel(cfg.queue_capacity.max(1));
        let mapper = s.spawn(move || run_mapper(region, rx));
        let (out, produced) = produce(CandidateSink::Channel(tx));
        let mapped = mapper.join().unwrap_or(Err(Error::MapperStopped));
        // A worker failure explains a producer-side `MapperStopped`.
        let res = match (produced, mapped) {
            (_, Err(e)) => Err(e),
            (r, Ok(())) => r,
        };
        (out, res)
    })
}

/// Feeds `requests` to a mapping worker through a bounded queue and waits
/// until the last one has been applied.
pub fn run_mapping_pipeline(
    region: &Arc<VirtualRegion>,
    requests: impl IntoIterator<Item = RemapRequest>,
    queue_capacity: usize,
) -> Result<()> {
    let cfg = EngineConfig {
        async_mapper: true,
        queue_capacity,
        ..EngineConfig::default()
    };
    with_mapping(region, &cfg, |mut sink| {
        let res = requests.into_iter().try_for_each(|r| sink.submit(r));
        drop(sink);
        ((), res)
    })
    .1
}

struct Scan {
    result: Vec<(RowId, u64)>,
    scanned_pages: usize,
}

fn scan_views(
    views: &[&VirtualView],
    num_pages: usize,
    q: RangeQuery,
    mut building: Option<&mut Building>,
    ext: &mut Extension,
) -> Scan {
    let mut filter = ProcessedPagesFilter::new(num_pages);
    let mut result = Vec::new();
    let mut scanned_pages = 0;
    for view in views {
        let vpp = view.values_per_page();
        for slot in 0..view.num_pages() {
            let words = view.region().page_words(slot);
            let page = words[0] as usize;
            if !filter.insert(page) {
                continue;
            }
            scanned_pages += 1;
            let summary = scan_page_into(words, vpp, q.l, q.u, &mut result);
            if summary.matched > 0 {
                if let Some(b) = building.as_deref_mut() {
                    b.add(page);
                }
            } else {
                ext.observe(&summary);
            }
        }
    }
    Scan {
        result,
        scanned_pages,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct QueryEngine {
    config: EngineConfig,
}

impl QueryEngine {
    pub fn new(config: EngineConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Answers `q` and, while view generation is active, builds a candidate
    /// view from the scan and suggests it to `idx`.
    pub fn answer_and_maintain(
        &self,
        col: &PhysicalColumn,
        idx: &mut ViewIndex,
        q: RangeQuery,
    ) -> Result<QueryOutcome> {
        let start = Instant::now();
        let views = idx.optimal_views(col, q.l, q.u)?;
        let views_used = views.len();
        let ranges: Vec<ValueRange> = views.iter().map(|v| v.range()).collect();
        let init = covering_interval(&ranges, q.l).unwrap_or(ValueRange::UNBOUNDED);
        let mut ext = Extension {
            lower: init.lower,
            upper: init.upper,
        };

        if idx.generation_stopped() {
            let scan = scan_views(&views, col.num_pages(), q, None, &mut ext);
            return Ok(QueryOutcome {
                result: scan.result,
                scanned_pages: scan.scanned_pages,
                views_used,
                candidate: CandidateOutcome::NotConstructed,
                candidate_range: None,
                candidate_pages: 0,
                remaps: RemapStats::default(),
                elapsed: start.elapsed(),
            });
        }

        let cand = VirtualView::create_empty(col, ValueRange::UNBOUNDED)?;
        let region = Arc::clone(cand.region());
        let ((scan, mut cand), built) = with_mapping(&region, &self.config, |sink| {
            let mut b = Building::new(cand, sink, self.config.coalesce);
            let scan = scan_views(&views, col.num_pages(), q, Some(&mut b), &mut ext);
            let (view, res) = b.finish();
            ((scan, view), res)
        });
        drop(views);

        let remaps = region.remap_stats();
        let candidate_pages = cand.num_pages();
        let (candidate, candidate_range) = match built {
            Err(e) => (CandidateOutcome::Aborted(e.to_string()), None),
            Ok(()) if candidate_pages == 0 => (CandidateOutcome::DiscardedEmpty, None),
            Ok(()) => {
                cand.update_range(ext.lower, ext.upper)?;
                let range = cand.range();
                (
                    CandidateOutcome::Suggested(idx.suggest_candidate(cand)),
                    Some(range),
                )
            }
        };
        Ok(QueryOutcome {
            result: scan.result,
            scanned_pages: scan.scanned_pages,
            views_used,
            candidate,
            candidate_range,
            candidate_pages,
            remaps,
            elapsed: start.elapsed(),
        })
    }
}

/// Answers `q` by scanning the whole column.
pub fn answer_full_scan_only(col: &PhysicalColumn, q: RangeQuery) -> QueryOutcome {
    let start = Instant::now();
    let full = col.full_view();
    let result = scan_view(full, q);
    QueryOutcome {
        result,
        scanned_pages: full.num_pages(),
        views_used: 1,
        candidate: CandidateOutcome::NotConstructed,
        candidate_range: None,
        candidate_pages: 0,
        remaps: RemapStats::default(),
        elapsed: start.elapsed(),
    }
}

/// Scans every page of one view.
pub fn scan_view(view: &VirtualView, q: RangeQuery) -> Vec<(RowId, u64)> {
    let mut result = Vec::new();
    for slot in 0..view.num_pages() {
        scan_page_into(
            view.region().page_words(slot),
            view.values_per_page(),
            q.l,
            q.u,
            &mut result,
        );
    }
    result
}

/// Whether page `page` of `col` holds a value inside `range`.
pub fn page_qualifies(col: &PhysicalColumn, page: PhysicalPageIndex, range: &ValueRange) -> bool {
    col.page_values(page).iter().any(|&v| range.contains(v))
}

/// Builds a partial view over `range` from a full scan of the column.
pub fn build_view(col: &PhysicalColumn, range: ValueRange, cfg: &EngineConfig) -> Result<VirtualView> {
    let view = VirtualView::create_empty(col, range)?;
    let region = Arc::clone(view.region());
    let (view, res) = with_mapping(&region, cfg, |sink| {
        let mut b = Building::new(view, sink, cfg.coalesce);
        for p in 0..col.num_pages() {
            if page_qualifies(col, p, &range) {
                b.add(p);
            }
        }
        b.finish()
    });
    res.map(|()| view)
}

#[cfg(test)]
mod tests;
