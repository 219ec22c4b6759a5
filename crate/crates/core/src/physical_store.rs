//! The physical column: fixed-size pages, each starting with an 8-byte page
//! identifier followed by unsigned 64-bit values.
//!
//! ```text
//! page p: [ pageID = p | v(p*vpp) | v(p*vpp + 1) | ... | v(p*vpp + vpp - 1) ]
//! ```
//!
//! With 4 KiB pages a page holds `vpp = 511` values. The page identifier lets
//! scans over partial views, whose slots map arbitrary physical pages,
//! recover the row number of every value they read.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::page_mapper::{Backend, PhysicalPageIndex, PhysicalRegion, DEFAULT_PAGE_SIZE};
use crate::views::VirtualView;

pub const PAGE_HEADER_BYTES: usize = 8;

/// Global row number of a value in the column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub u64);

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Values stored on a page of `page_size` bytes.
pub fn values_per_page(page_size: usize) -> usize {
    (page_size - PAGE_HEADER_BYTES) / 8
}

pub struct PhysicalColumn {
    physical: Arc<PhysicalRegion>,
    full_view: VirtualView,
    values_per_page: usize,
}

impl fmt::Debug for PhysicalColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhysicalColumn")
            .field("physical", &self.physical)
            .field("values_per_page", &self.values_per_page)
            .finish()
    }
}

impl PhysicalColumn {
    pub fn create(num_pages: usize, backend: Backend) -> Result<Self> {
        Self::with_page_size(num_pages, DEFAULT_PAGE_SIZE, backend)
    }

    pub fn with_page_size(num_pages: usize, page_size: usize, backend: Backend) -> Result<Self> {
        if !page_size.is_multiple_of(8) || page_size < PAGE_HEADER_BYTES + 8 {
            return Err(Error::InvalidPageSize {
                page_size,
                reason: "column pages need a multiple of 8 bytes and room for one value",
            });
        }
        let physical = PhysicalRegion::create(backend, num_pages, page_size)?;
        let vpp = values_per_page(page_size);
        let full_view = VirtualView::full(&physical, vpp)?;
        for p in 0..num_pages {
            // Safety: the column is not shared yet.
            unsafe { full_view.page_words_mut(p)[0] = p as u64 };
        }
        Ok(Self {
            physical,
            full_view,
            values_per_page: vpp,
        })
    }

    pub fn backend(&self) -> Backend {
        self.physical.backend()
    }

    pub fn physical(&self) -> &Arc<PhysicalRegion> {
        &self.physical
    }

    pub fn full_view(&self) -> &VirtualView {
        &self.full_view
    }

    pub fn num_pages(&self) -> usize {
        self.physical.num_pages()
    }

    pub fn page_size(&self) -> usize {
        self.physical.page_size()
    }

    pub fn values_per_page(&self) -> usize {
        self.values_per_page
    }

    pub fn num_rows(&self) -> u64 {
        self.num_pages() as u64 * self.values_per_page as u64
    }

    /// `(page, position within page)` of a row.
    pub fn row_to_page(&self, row: RowId) -> Result<(PhysicalPageIndex, usize)> {
        if row.0 >= self.num_rows() {
            return Err(Error::OutOfBounds {
                what: "row",
                index: row.0,
                limit: self.num_rows(),
            });
        }
        let vpp = self.values_per_page as u64;
        Ok(((row.0 / vpp) as usize, (row.0 % vpp) as usize))
    }

    pub fn page_to_row(&self, page: PhysicalPageIndex, slot_in_page: usize) -> RowId {
        RowId(page as u64 * self.values_per_page as u64 + slot_in_page as u64)
    }

    /// The embedded page identifier of physical page `page`.
    pub fn page_id(&self, page: PhysicalPageIndex) -> u64 {
        self.full_view.region().page_words(page)[0]
    }

    /// The values of physical page `page`, read through the full view.
    pub fn page_values(&self, page: PhysicalPageIndex) -> &[u64] {
        &self.full_view.region().page_words(page)[1..=self.values_per_page]
    }

    pub fn read_value(&self, row: RowId) -> Result<u64> {
        let (page, slot) = self.row_to_page(row)?;
        Ok(self.page_values(page)[slot])
    }

    /// Overwrites one value through the full view and returns the previous
    /// value.
    pub fn write_value(&mut self, row: RowId, value: u64) -> Result<u64> {
        let (page, slot) = self.row_to_page(row)?;
        // Safety: `&mut self` excludes readers of the full view; partial
        // views are not read while the column is being written.
        let words = unsafe { self.full_view.page_words_mut(page) };
        Ok(std::mem::replace(&mut words[1 + slot], value))
    }

    /// Fills the column page by page. `fill` receives the page index and the
    /// page's value slots (the header is not exposed).
    pub fn fill_pages(&mut self, mut fill: impl FnMut(PhysicalPageIndex, &mut [u64])) {
        let vpp = self.values_per_page;
        for p in 0..self.num_pages() {
            let words = unsafe { self.full_view.page_words_mut(p) };
            fill(p, &mut words[1..=vpp]);
        }
    }

    /// Fills the column in row order from `values`, which must yield exactly
    /// [`PhysicalColumn::num_rows`] values.
    pub fn fill_from_iter(&mut self, values: impl IntoIterator<Item = u64>) -> Result<()> {
        let expected = self.num_rows();
        let mut iter = values.into_iter();
        let mut got = 0u64;
        let mut short = false;
        self.fill_pages(|_, page| {
            for slot in page.iter_mut() {
                match iter.next() {
                    Some(v) => {
                        *slot = v;
                        got += 1;
                    }
                    None => {
                        short = true;
                        *slot = 0;
                    }
                }
            }
        });
        let extra = iter.count() as u64;
        if short || extra > 0 {
            return Err(Error::LengthMismatch {
                expected,
                got: got + extra,
            });
        }
        Ok(())
    }

    /// All values in row order.
    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.num_pages()).flat_map(move |p| self.page_values(p).iter().copied())
    }
}
