//! Explicit partial indexes over `[0, k]`, for comparison with virtual views.
//!
//! The explicit variants address pages by position, so their columns carry no
//! page identifier: a plain page holds 512 values, a zone-map page holds a
//! `[min, max]` header and 510 values. Row ids are the logical positions of
//! the values, identical across layouts; the last page may be partial.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::physical_store::RowId;
use crate::query_engine::RangeQuery;

pub const PAGE_WORDS: usize = 512;
pub const PLAIN_VALUES_PER_PAGE: usize = PAGE_WORDS;
pub const ZONE_MAP_VALUES_PER_PAGE: usize = PAGE_WORDS - 2;

#[derive(Clone, Copy)]
#[repr(C, align(4096))]
struct Page([u64; PAGE_WORDS]);

/// Fraction of pages holding at least one of `per_page` values drawn
/// uniformly from `[lo, hi]` that falls into `[lo, lo + k]`.
pub fn expected_qualifying_fraction(k: u64, lo: u64, hi: u64, per_page: usize) -> f64 {
    let p = ((k + 1) as f64 / (hi - lo + 1) as f64).min(1.0);
    1.0 - (1.0 - p).powi(per_page as i32)
}

/// Non-temporal read hint for `ptr`; a no-op where unsupported.
#[inline(always)]
fn prefetch(ptr: *const u64) {
    #[cfg(target_arch = "x86_64")]
    #[allow(unused_unsafe)]
    // Safety: prefetching never faults, whatever the address.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_NTA};
        _mm_prefetch::<_MM_HINT_NTA>(ptr as *const i8);
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = ptr;
}

/// A positional page layout with an optional two-word header.
#[derive(Clone)]
pub struct PagedColumn {
    pages: Vec<Page>,
    header_words: usize,
    num_values: usize,
}

impl fmt::Debug for PagedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PagedColumn")
            .field("pages", &self.pages.len())
            .field("header_words", &self.header_words)
            .field("num_values", &self.num_values)
            .finish()
    }
}

impl PagedColumn {
    fn with_header(values: &[u64], header_words: usize) -> Self {
        let vpp = PAGE_WORDS - header_words;
        let mut pages = vec![Page([0; PAGE_WORDS]); values.len().div_ceil(vpp)];
        for (page, chunk) in pages.iter_mut().zip(values.chunks(vpp)) {
            page.0[header_words..header_words + chunk.len()].copy_from_slice(chunk);
        }
        let mut col = Self {
            pages,
            header_words,
            num_values: values.len(),
        };
        if header_words == 2 {
            for p in 0..col.num_pages() {
                col.refresh_zone(p);
            }
        }
        col
    }

    /// 512 values per page.
    pub fn plain(values: &[u64]) -> Self {
        Self::with_header(values, 0)
    }

    /// `[min, max]` header and 510 values per page.
    pub fn zone_mapped(values: &[u64]) -> Self {
        Self::with_header(values, 2)
    }

    pub fn num_pages(&self) -> usize {
        self.pages.len()
    }

    pub fn num_values(&self) -> usize {
        self.num_values
    }

    pub fn values_per_page(&self) -> usize {
        PAGE_WORDS - self.header_words
    }

    pub fn has_zone_maps(&self) -> bool {
        self.header_words == 2
    }

    fn valid_in(&self, p: usize) -> usize {
        let vpp = self.values_per_page();
        (self.num_values - p * vpp).min(vpp)
    }

    pub fn page_values(&self, p: usize) -> &[u64] {
        let h = self.header_words;
        &self.pages[p].0[h..h + self.valid_in(p)]
    }

    /// `(min, max)` header of a zone-mapped page.
    pub fn zone(&self, p: usize) -> Option<(u64, u64)> {
        self.has_zone_maps()
            .then(|| (self.pages[p].0[0], self.pages[p].0[1]))
    }

    fn refresh_zone(&mut self, p: usize) {
        let values = self.page_values(p);
        let min = values.iter().copied().min().unwrap_or(u64::MAX);
        let max = values.iter().copied().max().unwrap_or(0);
        self.pages[p].0[0] = min;
        self.pages[p].0[1] = max;
    }

    fn locate(&self, row: RowId) -> Result<(usize, usize)> {
        if row.0 >= self.num_values as u64 {
            return Err(Error::OutOfBounds {
                what: "row",
                index: row.0,
                limit: self.num_values as u64,
            });
        }
        let vpp = self.values_per_page();
        let r = row.0 as usize;
        Ok((r / vpp, r % vpp))
    }

    pub fn read(&self, row: RowId) -> Result<u64> {
        let (p, i) = self.locate(row)?;
        Ok(self.pages[p].0[self.header_words + i])
    }

    /// Overwrites a value; zone headers are not refreshed.
    fn write(&mut self, row: RowId, value: u64) -> Result<usize> {
        let (p, i) = self.locate(row)?;
        self.pages[p].0[self.header_words + i] = value;
        Ok(p)
    }

    fn page_qualifies(&self, p: usize, k: u64) -> bool {
        self.page_values(p).iter().any(|&v| v <= k)
    }

    #[inline]
    fn scan_page(&self, p: usize, q: RangeQuery, out: &mut Vec<(RowId, u64)>) {
        let base = (p * self.values_per_page()) as u64;
        for (i, &v) in self.page_values(p).iter().enumerate() {
            if q.contains(v) {
                out.push((RowId(base + i as u64), v));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExplicitVariant {
    ZoneMap,
    Bitmap,
    AddressList,
}

impl ExplicitVariant {
    pub const ALL: [ExplicitVariant; 3] = [
        ExplicitVariant::ZoneMap,
        ExplicitVariant::Bitmap,
        ExplicitVariant::AddressList,
    ];
}

impl FromStr for ExplicitVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zone_map" => Ok(ExplicitVariant::ZoneMap),
            "bitmap" => Ok(ExplicitVariant::Bitmap),
            "address_list" => Ok(ExplicitVariant::AddressList),
            other => Err(Error::Config(format!("unknown explicit variant {other:?}"))),
        }
    }
}

impl fmt::Display for ExplicitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExplicitVariant::ZoneMap => "zone_map",
            ExplicitVariant::Bitmap => "bitmap",
            ExplicitVariant::AddressList => "address_list",
        })
    }
}

#[derive(Clone, Debug)]
enum Index {
    /// Lives in the page headers.
    ZoneMap,
    Bitmap(Vec<u64>),
    AddressList {
        pages: Vec<usize>,
        /// Position of each page in `pages`, `usize::MAX` if absent.
        pos: Vec<usize>,
    },
}

/// An explicitly maintained partial index over the pages holding a value in
/// `[0, k]`.
#[derive(Clone, Debug)]
pub struct ExplicitPartialView {
    k: u64,
    col: PagedColumn,
    index: Index,
}

impl ExplicitPartialView {
    pub fn build(values: &[u64], k: u64, variant: ExplicitVariant) -> Self {
        let col = match variant {
            ExplicitVariant::ZoneMap => PagedColumn::zone_mapped(values),
            _ => PagedColumn::plain(values),
        };
        let n = col.num_pages();
        let index = match variant {
            ExplicitVariant::ZoneMap => Index::ZoneMap,
            ExplicitVariant::Bitmap => {
                let mut bits = vec![0u64; n.div_ceil(64)];
                for p in (0..n).filter(|&p| col.page_qualifies(p, k)) {
                    bits[p / 64] |= 1 << (p % 64);
                }
                Index::Bitmap(bits)
            }
            ExplicitVariant::AddressList => {
                let pages: Vec<usize> = (0..n).filter(|&p| col.page_qualifies(p, k)).collect();
                let mut pos = vec![usize::MAX; n];
                for (i, &p) in pages.iter().enumerate() {
                    pos[p] = i;
                }
                Index::AddressList { pages, pos }
            }
        };
        Self { k, col, index }
    }

    pub fn variant(&self) -> ExplicitVariant {
        match self.index {
            Index::ZoneMap => ExplicitVariant::ZoneMap,
            Index::Bitmap(_) => ExplicitVariant::Bitmap,
            Index::AddressList { .. } => ExplicitVariant::AddressList,
        }
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn column(&self) -> &PagedColumn {
        &self.col
    }

    /// Indexed pages. For zone maps, the pages whose header admits `[0, k]`.
    pub fn qualifying_pages(&self) -> BTreeSet<usize> {
        let n = self.col.num_pages();
        match &self.index {
            Index::ZoneMap => (0..n)
                .filter(|&p| self.col.zone(p).is_some_and(|(min, _)| min <= self.k))
                .collect(),
            Index::Bitmap(bits) => (0..n).filter(|&p| bits[p / 64] >> (p % 64) & 1 == 1).collect(),
            Index::AddressList { pages, .. } => pages.iter().copied().collect(),
        }
    }

    /// Index order of the address list.
    pub fn address_order(&self) -> Option<&[usize]> {
        match &self.index {
            Index::AddressList { pages, .. } => Some(pages),
            _ => None,
        }
    }

    /// Answers `q`, which must lie inside `[0, k]`.
    pub fn scan(&self, q: RangeQuery) -> Result<Vec<(RowId, u64)>> {
        if q.upper() > self.k {
            return Err(Error::InvalidRange {
                lower: q.lower(),
                upper: q.upper(),
            });
        }
        let mut out = Vec::new();
        let col = &self.col;
        match &self.index {
            Index::ZoneMap => {
                for (p, page) in col.pages.iter().enumerate() {
                    let (min, max) = (page.0[0], page.0[1]);
                    if max < q.lower() || min > q.upper() {
                        continue;
                    }
                    col.scan_page(p, q, &mut out);
                }
            }
            Index::Bitmap(bits) => {
                for (w, &word) in bits.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let p = w * 64 + word.trailing_zeros() as usize;
                        word &= word - 1;
                        col.scan_page(p, q, &mut out);
                    }
                }
            }
            Index::AddressList { pages, .. } => {
                for (i, &p) in pages.iter().enumerate() {
                    if let Some(&next) = pages.get(i + 1) {
                        prefetch(col.pages[next].0.as_ptr());
                    }
                    col.scan_page(p, q, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Overwrites `(row, new value)` pairs and maintains the index for the
    /// touched pages. The address list appends newly qualifying pages and
    /// swap-removes disqualified ones.
    pub fn apply_updates(&mut self, updates: &[(RowId, u64)]) -> Result<()> {
        let mut touched = BTreeSet::new();
        for &(row, v) in updates {
            touched.insert(self.col.write(row, v)?);
        }
        let k = self.k;
        for p in touched {
            let qualifies = self.col.page_qualifies(p, k);
            match &mut self.index {
                Index::ZoneMap => self.col.refresh_zone(p),
                Index::Bitmap(bits) => {
                    if qualifies {
                        bits[p / 64] |= 1 << (p % 64);
                    } else {
                        bits[p / 64] &= !(1 << (p % 64));
                    }
                }
                Index::AddressList { pages, pos } => {
                    let present = pos[p] != usize::MAX;
                    if qualifies && !present {
                        pos[p] = pages.len();
                        pages.push(p);
                    } else if !qualifies && present {
                        let i = pos[p];
                        pages.swap_remove(i);
                        if let Some(&moved) = pages.get(i) {
                            pos[moved] = i;
                        }
                        pos[p] = usize::MAX;
                    }
                }
            }
        }
        Ok(())
    }
}
