//! Virtual views: reserved regions whose dense slot prefix maps the physical
//! pages holding values of a covered range.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::page_mapper::{
    MappingSnapshot, PhysicalPageIndex, PhysicalRegion, RemapRequest, VirtualRegion,
    VirtualSlotIndex,
};
use crate::physical_store::{PhysicalColumn, RowId};

static NEXT_VIEW_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ViewId(pub u64);

impl ViewId {
    fn fresh() -> Self {
        ViewId(NEXT_VIEW_ID.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A closed value interval. An absent endpoint is infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueRange {
    pub lower: Option<u64>,
    pub upper: Option<u64>,
}

impl ValueRange {
    pub const UNBOUNDED: ValueRange = ValueRange {
        lower: None,
        upper: None,
    };

    pub fn new(lower: u64, upper: u64) -> Result<Self> {
        Self::from_bounds(Some(lower), Some(upper))
    }

    pub fn from_bounds(lower: Option<u64>, upper: Option<u64>) -> Result<Self> {
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                return Err(Error::InvalidRange { lower: l, upper: u });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lower.is_none_or(|l| l <= v) && self.upper.is_none_or(|u| v <= u)
    }

    /// `other ⊆ self`. Infinite endpoints dominate finite ones.
    pub fn covers(&self, other: &ValueRange) -> bool {
        let lower_ok = match (self.lower, other.lower) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a <= b,
        };
        let upper_ok = match (self.upper, other.upper) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => b <= a,
        };
        lower_ok && upper_ok
    }

    pub fn is_subset_of(&self, other: &ValueRange) -> bool {
        other.covers(self)
    }

    pub fn covers_values(&self, lower: u64, upper: u64) -> bool {
        self.contains(lower) && self.contains(upper)
    }

    /// Ordering key for "narrower" ranges: the number of infinite endpoints
    /// first, then the finite span.
    pub fn width_key(&self) -> (u8, u128) {
        let infinite = self.lower.is_none() as u8 + self.upper.is_none() as u8;
        let span = self.upper.unwrap_or(u64::MAX) as u128 - self.lower.unwrap_or(0) as u128;
        (infinite, span)
    }

    pub fn min_value(&self) -> u64 {
        self.lower.unwrap_or(0)
    }

    pub fn max_value(&self) -> u64 {
        self.upper.unwrap_or(u64::MAX)
    }
}

impl fmt::Display for ValueRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lower {
            Some(l) => write!(f, "[{l}, ")?,
            None => write!(f, "[-inf, ")?,
        }
        match self.upper {
            Some(u) => write!(f, "{u}]"),
            None => write!(f, "+inf]"),
        }
    }
}

/// Filter result of a single page.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PageScanResult {
    pub matches: Vec<(RowId, u64)>,
    /// Largest page value below the query's lower bound.
    pub largest_below: Option<u64>,
    /// Smallest page value above the query's upper bound.
    pub smallest_above: Option<u64>,
}

impl PageScanResult {
    pub fn is_qualifying(&self) -> bool {
        !self.matches.is_empty()
    }
}

/// Per-page scan summary produced by [`scan_page_into`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PageSummary {
    pub page_id: u64,
    pub matched: usize,
    pub largest_below: Option<u64>,
    pub smallest_above: Option<u64>,
}

/// Filters one raw page (header word followed by `values_per_page` values)
/// against `[lower, upper]`, appending matches to `out`.
#[inline]
pub fn scan_page_into(
    words: &[u64],
    values_per_page: usize,
    lower: u64,
    upper: u64,
    out: &mut Vec<(RowId, u64)>,
) -> PageSummary {
    let page_id = words[0];
    let base = page_id * values_per_page as u64;
    let before = out.len();
    let mut below: Option<u64> = None;
    let mut above: Option<u64> = None;
    for (i, &v) in words[1..=values_per_page].iter().enumerate() {
        if v < lower {
            below = Some(below.map_or(v, |b| b.max(v)));
        } else if v > upper {
            above = Some(above.map_or(v, |a| a.min(v)));
        } else {
            out.push((RowId(base + i as u64), v));
        }
    }
    PageSummary {
        page_id,
        matched: out.len() - before,
        largest_below: below,
        smallest_above: above,
    }
}

/// Receives the remap requests produced by a [`RemapEmitter`].
pub trait RemapSink {
    fn submit(&mut self, req: RemapRequest) -> Result<()>;
}

impl RemapSink for Vec<RemapRequest> {
    fn submit(&mut self, req: RemapRequest) -> Result<()> {
        self.push(req);
        Ok(())
    }
}

/// Applies every request immediately on the calling thread.
pub struct DirectSink {
    region: Arc<VirtualRegion>,
}

impl DirectSink {
    pub fn new(region: Arc<VirtualRegion>) -> Self {
        Self { region }
    }
}

impl RemapSink for DirectSink {
    fn submit(&mut self, req: RemapRequest) -> Result<()> {
        self.region.remap_range(req)
    }
}

/// Turns a sequence of `(slot, physical page)` assignments into remap
/// requests. With coalescing enabled, consecutive slots mapping consecutive
/// physical pages are merged into one request; a run is flushed as soon as a
/// non-consecutive page arrives, and on [`RemapEmitter::finish`].
pub struct RemapEmitter<S> {
    sink: S,
    coalesce: bool,
    pending: Option<RemapRequest>,
    emitted: usize,
    seen: Vec<u64>,
}

impl<S: RemapSink> RemapEmitter<S> {
    pub fn new(sink: S, coalesce: bool) -> Self {
        Self {
            sink,
            coalesce,
            pending: None,
            emitted: 0,
            seen: Vec::new(),
        }
    }

    /// Records `phys` as added; false if it was added before.
    fn mark(&mut self, phys: PhysicalPageIndex) -> bool {
        let (word, bit) = (phys / 64, 1u64 << (phys % 64));
        if word >= self.seen.len() {
            self.seen.resize(word + 1, 0);
        }
        let fresh = self.seen[word] & bit == 0;
        self.seen[word] |= bit;
        fresh
    }

    pub fn push(&mut self, slot: VirtualSlotIndex, phys: PhysicalPageIndex) -> Result<()> {
        if let Some(run) = &mut self.pending {
            if self.coalesce
                && slot == run.virt_start_slot + run.run_length
                && phys == run.phys_start_page + run.run_length
            {
                run.run_length += 1;
                return Ok(());
            }
        }
        self.flush()?;
        self.pending = Some(RemapRequest::new(slot, phys, 1));
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(run) = self.pending.take() {
            self.emitted += 1;
            self.sink.submit(run)?;
        }
        Ok(())
    }

    /// Number of requests handed to the sink so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Flushes the pending run and returns the sink.
    pub fn finish(mut self) -> Result<S> {
        self.flush()?;
        Ok(self.sink)
    }
}

/// A contiguous virtual region mapping a subset of a column's pages.
///
/// Slots `[0, num_pages)` map distinct physical pages; the remaining slots of
/// the over-allocated region stay anonymous.
pub struct VirtualView {
    id: ViewId,
    range: ValueRange,
    num_pages: usize,
    full: bool,
    region: Arc<VirtualRegion>,
    values_per_page: usize,
}

impl fmt::Debug for VirtualView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VirtualView")
            .field("id", &self.id)
            .field("range", &format_args!("{}", self.range))
            .field("num_pages", &self.num_pages)
            .field("full", &self.full)
            .finish()
    }
}

impl VirtualView {
    /// Identity-mapped view over every page of `physical`.
    pub(crate) fn full(physical: &Arc<PhysicalRegion>, values_per_page: usize) -> Result<Self> {
        let n = physical.num_pages();
        let region = Arc::new(VirtualRegion::reserve(physical, n)?);
        region.remap_range(RemapRequest::new(0, 0, n))?;
        Ok(Self {
            id: ViewId::fresh(),
            range: ValueRange::UNBOUNDED,
            num_pages: n,
            full: true,
            region,
            values_per_page,
        })
    }

    /// An empty view over `[lower, upper]` with a reservation as large as
    /// the whole column.
    pub fn create_empty_partial(col: &PhysicalColumn, lower: u64, upper: u64) -> Result<Self> {
        Self::create_empty(col, ValueRange::new(lower, upper)?)
    }

    pub fn create_empty(col: &PhysicalColumn, range: ValueRange) -> Result<Self> {
        let region = VirtualRegion::reserve(col.physical(), col.num_pages())?;
        Ok(Self {
            id: ViewId::fresh(),
            range,
            num_pages: 0,
            full: false,
            region: Arc::new(region),
            values_per_page: col.values_per_page(),
        })
    }

    pub fn id(&self) -> ViewId {
        self.id
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn num_pages(&self) -> usize {
        self.num_pages
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn values_per_page(&self) -> usize {
        self.values_per_page
    }

    pub fn region(&self) -> &Arc<VirtualRegion> {
        &self.region
    }

    fn check_slot(&self, slot: VirtualSlotIndex) -> Result<()> {
        if slot >= self.num_pages {
            return Err(Error::OutOfBounds {
                what: "view slot",
                index: slot as u64,
                limit: self.num_pages as u64,
            });
        }
        Ok(())
    }

    /// Raw words (header + values) of the page at `slot`.
    pub fn page_words(&self, slot: VirtualSlotIndex) -> Result<&[u64]> {
        self.check_slot(slot)?;
        Ok(self.region.page_words(slot))
    }

    /// # Safety
    ///
    /// See [`VirtualRegion::page_words_mut`].
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn page_words_mut(&self, slot: VirtualSlotIndex) -> &mut [u64] {
        self.region.page_words_mut(slot)
    }

    pub fn scan_and_filter_page(
        &self,
        slot: VirtualSlotIndex,
        lower: u64,
        upper: u64,
    ) -> Result<PageScanResult> {
        if lower > upper {
            return Err(Error::InvalidRange { lower, upper });
        }
        let words = self.page_words(slot)?;
        let mut matches = Vec::new();
        let s = scan_page_into(words, self.values_per_page, lower, upper, &mut matches);
        Ok(PageScanResult {
            matches,
            largest_below: s.largest_below,
            smallest_above: s.smallest_above,
        })
    }

    /// Appends `phys` to the dense prefix, emitting the remap through
    /// `emitter`.
    pub fn add_page<S: RemapSink>(
        &mut self,
        phys: PhysicalPageIndex,
        emitter: &mut RemapEmitter<S>,
    ) -> Result<()> {
        if phys >= self.region.physical().num_pages() {
            return Err(Error::OutOfBounds {
                what: "physical page",
                index: phys as u64,
                limit: self.region.physical().num_pages() as u64,
            });
        }
        if self.num_pages >= self.region.num_slots() || !emitter.mark(phys) {
            return Err(Error::DuplicatePage(phys));
        }
        let slot = self.num_pages;
        self.num_pages += 1;
        emitter.push(slot, phys)
    }

    /// Removes `phys` from the view. The page in the last slot moves into
    /// the freed slot so the mapped prefix stays dense; `snap` is kept in
    /// sync with the region.
    pub fn remove_page(&mut self, phys: PhysicalPageIndex, snap: &mut MappingSnapshot) -> Result<()> {
        let slot = snap
            .slots_of(phys)
            .find(|&s| s < self.num_pages)
            .ok_or(Error::PageNotMapped(phys))?;
        let last = self.num_pages - 1;
        if slot != last {
            let moved = snap.phys_of(last).ok_or(Error::PageNotMapped(phys))?;
            self.region.remap_range(RemapRequest::new(slot, moved, 1))?;
            snap.insert(slot, moved);
        }
        self.region.unmap_to_anonymous(last, 1)?;
        snap.remove_slot(last);
        self.num_pages -= 1;
        Ok(())
    }

    pub fn update_range(&mut self, lower: Option<u64>, upper: Option<u64>) -> Result<()> {
        self.range = ValueRange::from_bounds(lower, upper)?;
        Ok(())
    }

    /// Drops every mapping of the view.
    pub fn clear(&mut self) -> Result<()> {
        self.region.unmap_to_anonymous(0, self.num_pages)?;
        self.num_pages = 0;
        Ok(())
    }

    pub fn snapshot(&self) -> Result<MappingSnapshot> {
        self.region.snapshot()
    }

    /// Physical pages of the view, read from the embedded page identifiers.
    pub fn page_ids(&self) -> Vec<PhysicalPageIndex> {
        (0..self.num_pages)
            .map(|s| self.region.page_words(s)[0] as usize)
            .collect()
    }

    /// Whether exactly the slots `[0, num_pages)` are mapped, to distinct
    /// physical pages.
    pub fn is_dense(&self) -> Result<bool> {
        let snap = self.snapshot()?;
        let prefix = snap.iter().map(|(s, _)| s).eq(0..self.num_pages);
        Ok(prefix && snap.physical_pages().len() == self.num_pages)
    }
}

#[cfg(test)]
mod tests;
