//! Physical page regions, virtual reservations, and page-granular remapping.
//!
//! A [`PhysicalRegion`] is a handle on a fixed number of zero-initialized
//! pages. A [`VirtualRegion`] is a reservation of virtual page slots that
//! starts out fully anonymous; individual slots are rewired onto physical
//! pages with [`VirtualRegion::remap_range`] and released again with
//! [`VirtualRegion::unmap_to_anonymous`]. Content written to a physical page
//! is observable through every slot currently mapped to it.
//!
//! Two backends sit behind the same types:
//!
//! * [`Backend::Os`] (Linux only) backs the physical region by a file on a
//!   memory-backed filesystem and remaps with fixed-address `mmap`. Mapping
//!   snapshots are obtained by parsing `/proc/self/maps`.
//! * [`Backend::Sim`] keeps the physical pages in one heap allocation and
//!   resolves slots through a per-region indirection table.
//!
//! Linux limits the number of memory mappings per process
//! (`vm.max_map_count`, usually 65530). Views over scattered pages need one
//! mapping per run of consecutive pages, so large OS-backed experiments
//! should raise that limit. The library does not enforce it; a remap that
//! hits it fails with [`Error::RemapFailed`].

mod maps;
#[cfg(target_os = "linux")]
mod os;
mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use maps::{parse_maps, parse_maps_line, MapsEntry};

use crate::error::{Error, Result};

pub type PhysicalPageIndex = usize;
pub type VirtualSlotIndex = usize;

pub const DEFAULT_PAGE_SIZE: usize = 4096;

/// Environment variable naming the directory that holds memory files.
pub const SHM_DIR_ENV: &str = "ADAPTIVE_VIEWS_SHM_DIR";
pub const DEFAULT_SHM_DIR: &str = "/dev/shm";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Os,
    Sim,
}

impl Backend {
    /// Whether this backend can be used on the current platform.
    pub fn is_available(self) -> bool {
        match self {
            Backend::Sim => true,
            Backend::Os => cfg!(target_os = "linux"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Os => "os",
            Backend::Sim => "sim",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "os" => Ok(Backend::Os),
            "sim" => Ok(Backend::Sim),
            other => Err(Error::Config(format!(
                "unknown backend {other:?} (expected os or sim)"
            ))),
        }
    }
}

/// One remap operation: `run_length` consecutive slots starting at
/// `virt_start_slot` are pointed at consecutive physical pages starting at
/// `phys_start_page`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RemapRequest {
    pub virt_start_slot: VirtualSlotIndex,
    pub phys_start_page: PhysicalPageIndex,
    pub run_length: usize,
}

impl RemapRequest {
    pub fn new(
        virt_start_slot: VirtualSlotIndex,
        phys_start_page: PhysicalPageIndex,
        run_length: usize,
    ) -> Self {
        Self {
            virt_start_slot,
            phys_start_page,
            run_length,
        }
    }

    /// The `(slot, physical page)` pairs this request establishes.
    pub fn pairs(&self) -> impl Iterator<Item = (VirtualSlotIndex, PhysicalPageIndex)> {
        let (v, p) = (self.virt_start_slot, self.phys_start_page);
        (0..self.run_length).map(move |i| (v + i, p + i))
    }
}

/// Remap operation counters of a [`VirtualRegion`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RemapStats {
    pub calls: u64,
    pub pages: u64,
}

impl std::ops::Sub for RemapStats {
    type Output = RemapStats;

    fn sub(self, rhs: RemapStats) -> RemapStats {
        RemapStats {
            calls: self.calls - rhs.calls,
            pages: self.pages - rhs.pages,
        }
    }
}

impl std::ops::Add for RemapStats {
    type Output = RemapStats;

    fn add(self, rhs: RemapStats) -> RemapStats {
        RemapStats {
            calls: self.calls + rhs.calls,
            pages: self.pages + rhs.pages,
        }
    }
}

enum PhysicalMemory {
    Sim(sim::SimMemory),
    #[cfg(target_os = "linux")]
    Os(os::MemoryFile),
}

/// A fixed number of zero-initialized physical pages.
pub struct PhysicalRegion {
    num_pages: usize,
    page_size: usize,
    memory: PhysicalMemory,
}

impl fmt::Debug for PhysicalRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhysicalRegion")
            .field("backend", &self.backend())
            .field("num_pages", &self.num_pages)
            .field("page_size", &self.page_size)
            .finish()
    }
}

impl PhysicalRegion {
    pub fn create(backend: Backend, num_pages: usize, page_size: usize) -> Result<Arc<Self>> {
        if num_pages == 0 {
            return Err(Error::InvalidCount("a physical region needs at least one page"));
        }
        if page_size == 0 {
            return Err(Error::InvalidPageSize {
                page_size,
                reason: "page size must be positive",
            });
        }
        let bytes = num_pages.checked_mul(page_size).ok_or_else(|| {
            Error::ResourceExhausted(format!("{num_pages} pages of {page_size} bytes overflow"))
        })?;
        let memory = match backend {
            Backend::Sim => PhysicalMemory::Sim(sim::SimMemory::new(bytes)?),
            #[cfg(target_os = "linux")]
            Backend::Os => {
                let os_page = os::os_page_size();
                if !page_size.is_multiple_of(os_page) {
                    return Err(Error::InvalidPageSize {
                        page_size,
                        reason: "must be a multiple of the OS page size",
                    });
                }
                PhysicalMemory::Os(os::MemoryFile::create(bytes)?)
            }
            #[cfg(not(target_os = "linux"))]
            Backend::Os => {
                return Err(Error::BackendUnavailable(
                    "the os backend requires Linux; use the sim backend".into(),
                ))
            }
        };
        Ok(Arc::new(Self {
            num_pages,
            page_size,
            memory,
        }))
    }

    pub fn backend(&self) -> Backend {
        match self.memory {
            PhysicalMemory::Sim(_) => Backend::Sim,
            #[cfg(target_os = "linux")]
            PhysicalMemory::Os(_) => Backend::Os,
        }
    }

    pub fn num_pages(&self) -> usize {
        self.num_pages
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn size_bytes(&self) -> u64 {
        self.num_pages as u64 * self.page_size as u64
    }

    fn check_page(&self, page: PhysicalPageIndex) -> Result<()> {
        if page >= self.num_pages {
            return Err(Error::OutOfBounds {
                what: "physical page",
                index: page as u64,
                limit: self.num_pages as u64,
            });
        }
        Ok(())
    }

    /// Copies the current content of a physical page, bypassing every
    /// virtual mapping.
    pub fn read_page(&self, page: PhysicalPageIndex) -> Result<Vec<u8>> {
        self.check_page(page)?;
        let mut buf = vec![0u8; self.page_size];
        match &self.memory {
            PhysicalMemory::Sim(mem) => buf.copy_from_slice(unsafe {
                std::slice::from_raw_parts(mem.ptr().add(page * self.page_size), self.page_size)
            }),
            #[cfg(target_os = "linux")]
            PhysicalMemory::Os(file) => file.read_at(&mut buf, (page * self.page_size) as u64)?,
        }
        Ok(buf)
    }

    /// Writes `data` into a physical page at `offset`, bypassing every
    /// virtual mapping.
    ///
    /// # Safety
    ///
    /// No slice obtained from a [`VirtualRegion`] that maps this page may be
    /// alive, and no other thread may access the page concurrently.
    pub unsafe fn write_page(
        &self,
        page: PhysicalPageIndex,
        offset: usize,
        data: &[u8],
    ) -> Result<()> {
        self.check_page(page)?;
        if offset + data.len() > self.page_size {
            return Err(Error::OutOfBounds {
                what: "page byte offset",
                index: (offset + data.len()) as u64,
                limit: self.page_size as u64,
            });
        }
        let at = page * self.page_size + offset;
        match &self.memory {
            PhysicalMemory::Sim(mem) => {
                std::ptr::copy_nonoverlapping(data.as_ptr(), mem.ptr().add(at), data.len())
            }
            #[cfg(target_os = "linux")]
            PhysicalMemory::Os(file) => file.write_at(data, at as u64)?,
        }
        Ok(())
    }
}

enum SlotMapping {
    Sim(sim::SlotTable),
    #[cfg(target_os = "linux")]
    Os(os::Reservation),
}

/// A reservation of `num_slots` virtual page slots over one physical region.
pub struct VirtualRegion {
    physical: Arc<PhysicalRegion>,
    num_slots: usize,
    mapping: SlotMapping,
    remap_calls: AtomicU64,
    remapped_pages: AtomicU64,
    snapshots: AtomicU64,
}

impl fmt::Debug for VirtualRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VirtualRegion")
            .field("backend", &self.physical.backend())
            .field("num_slots", &self.num_slots)
            .field("remap", &self.remap_stats())
            .finish()
    }
}

impl VirtualRegion {
    pub fn reserve(physical: &Arc<PhysicalRegion>, num_slots: usize) -> Result<Self> {
        if num_slots == 0 {
            return Err(Error::InvalidCount("a virtual region needs at least one slot"));
        }
        let mapping = match &physical.memory {
            PhysicalMemory::Sim(_) => {
                SlotMapping::Sim(sim::SlotTable::new(num_slots, physical.page_size))
            }
            #[cfg(target_os = "linux")]
            PhysicalMemory::Os(_) => {
                let len = num_slots.checked_mul(physical.page_size).ok_or_else(|| {
                    Error::ResourceExhausted("virtual reservation size overflows".into())
                })?;
                SlotMapping::Os(os::Reservation::new(len)?)
            }
        };
        Ok(Self {
            physical: Arc::clone(physical),
            num_slots,
            mapping,
            remap_calls: AtomicU64::new(0),
            remapped_pages: AtomicU64::new(0),
            snapshots: AtomicU64::new(0),
        })
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn physical(&self) -> &Arc<PhysicalRegion> {
        &self.physical
    }

    pub fn page_size(&self) -> usize {
        self.physical.page_size
    }

    fn check_slots(&self, start: VirtualSlotIndex, count: usize) -> Result<()> {
        match start.checked_add(count) {
            Some(end) if end <= self.num_slots => Ok(()),
            _ => Err(Error::OutOfBounds {
                what: "virtual slot",
                index: start as u64 + count as u64,
                limit: self.num_slots as u64,
            }),
        }
    }

    /// Points `req.run_length` slots at consecutive physical pages. Existing
    /// mappings of those slots are replaced.
    pub fn remap_range(&self, req: RemapRequest) -> Result<()> {
        if req.run_length == 0 {
            return Err(Error::InvalidCount("remap run length must be at least 1"));
        }
        self.check_slots(req.virt_start_slot, req.run_length)?;
        match req.phys_start_page.checked_add(req.run_length) {
            Some(end) if end <= self.physical.num_pages => {}
            _ => {
                return Err(Error::OutOfBounds {
                    what: "physical page",
                    index: req.phys_start_page as u64 + req.run_length as u64,
                    limit: self.physical.num_pages as u64,
                })
            }
        }
        match &self.mapping {
            SlotMapping::Sim(table) => table.remap(req),
            #[cfg(target_os = "linux")]
            SlotMapping::Os(res) => {
                let PhysicalMemory::Os(file) = &self.physical.memory else {
                    unreachable!("os reservation over non-os memory")
                };
                res.remap(file, self.physical.page_size, req)?
            }
        }
        self.remap_calls.fetch_add(1, Ordering::Relaxed);
        self.remapped_pages
            .fetch_add(req.run_length as u64, Ordering::Relaxed);
        Ok(())
    }

    /// Returns `count` slots starting at `start` to the anonymous state.
    /// Physical pages are left untouched.
    pub fn unmap_to_anonymous(&self, start: VirtualSlotIndex, count: usize) -> Result<()> {
        self.check_slots(start, count)?;
        if count == 0 {
            return Ok(());
        }
        match &self.mapping {
            SlotMapping::Sim(table) => table.unmap(start, count),
            #[cfg(target_os = "linux")]
            SlotMapping::Os(res) => res.unmap(self.physical.page_size, start, count)?,
        }
        Ok(())
    }

    /// Lists every non-anonymous slot. Must not run concurrently with remaps
    /// of this region.
    pub fn snapshot(&self) -> Result<MappingSnapshot> {
        self.snapshots.fetch_add(1, Ordering::Relaxed);
        match &self.mapping {
            SlotMapping::Sim(table) => Ok(table.snapshot()),
            #[cfg(target_os = "linux")]
            SlotMapping::Os(res) => {
                let PhysicalMemory::Os(file) = &self.physical.memory else {
                    unreachable!("os reservation over non-os memory")
                };
                let maps = std::fs::read_to_string("/proc/self/maps")?;
                let entries = parse_maps(&maps)?;
                Ok(snapshot_from_maps(
                    &entries,
                    res.base() as u64,
                    self.num_slots,
                    self.physical.page_size,
                    file.inode(),
                ))
            }
        }
    }

    /// Raw pointer to the first byte visible through `slot`.
    pub fn page_ptr(&self, slot: VirtualSlotIndex) -> *const u8 {
        assert!(
            slot < self.num_slots,
            "slot {slot} out of bounds ({} slots)",
            self.num_slots
        );
        match &self.mapping {
            SlotMapping::Sim(table) => match table.get(slot) {
                Some(phys) => {
                    let PhysicalMemory::Sim(mem) = &self.physical.memory else {
                        unreachable!("sim table over non-sim memory")
                    };
                    unsafe { mem.ptr().add(phys * self.physical.page_size) }
                }
                None => table.zero_page(),
            },
            #[cfg(target_os = "linux")]
            SlotMapping::Os(res) => unsafe { res.base().add(slot * self.physical.page_size) },
        }
    }

    /// The bytes visible through `slot`. Anonymous slots read as zeros.
    pub fn page_bytes(&self, slot: VirtualSlotIndex) -> &[u8] {
        unsafe { std::slice::from_raw_parts(self.page_ptr(slot), self.physical.page_size) }
    }

    /// The page visible through `slot` as 64-bit words.
    ///
    /// Panics if the page size is not a multiple of 8 bytes.
    pub fn page_words(&self, slot: VirtualSlotIndex) -> &[u64] {
        let ps = self.physical.page_size;
        assert!(ps.is_multiple_of(8), "page size {ps} is not word aligned");
        unsafe { std::slice::from_raw_parts(self.page_ptr(slot) as *const u64, ps / 8) }
    }

    /// Mutable word view of a mapped slot.
    ///
    /// # Safety
    ///
    /// The slot must be mapped, and no other reference to the underlying
    /// physical page (through any region) may be alive or created while the
    /// returned slice is in use.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn page_words_mut(&self, slot: VirtualSlotIndex) -> &mut [u64] {
        let ps = self.physical.page_size;
        assert!(ps.is_multiple_of(8), "page size {ps} is not word aligned");
        std::slice::from_raw_parts_mut(self.page_ptr(slot) as *mut u64, ps / 8)
    }

    pub fn remap_stats(&self) -> RemapStats {
        RemapStats {
            calls: self.remap_calls.load(Ordering::Relaxed),
            pages: self.remapped_pages.load(Ordering::Relaxed),
        }
    }

    /// Number of [`VirtualRegion::snapshot`] calls made on this region.
    pub fn snapshot_count(&self) -> u64 {
        self.snapshots.load(Ordering::Relaxed)
    }
}

/// Builds a snapshot from parsed mapping entries: only entries backed by the
/// memory file with inode `file_inode` are considered, clipped to the
/// reserved range `[base, base + num_slots * page_size)`.
pub fn snapshot_from_maps(
    entries: &[MapsEntry],
    base: u64,
    num_slots: usize,
    page_size: usize,
    file_inode: u64,
) -> MappingSnapshot {
    let ps = page_size as u64;
    let end = base + num_slots as u64 * ps;
    let mut snap = MappingSnapshot::default();
    for e in entries.iter().filter(|e| e.inode == file_inode) {
        let lo = e.start.max(base);
        let hi = e.end.min(end);
        let mut addr = lo;
        while addr < hi {
            let slot = ((addr - base) / ps) as usize;
            let phys = ((e.offset + (addr - e.start)) / ps) as usize;
            snap.insert(slot, phys);
            addr += ps;
        }
    }
    snap
}

/// Bidirectional association between mapped slots and physical pages.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingSnapshot {
    slot_to_phys: BTreeMap<VirtualSlotIndex, PhysicalPageIndex>,
    phys_to_slots: BTreeMap<PhysicalPageIndex, BTreeSet<VirtualSlotIndex>>,
}

impl MappingSnapshot {
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (VirtualSlotIndex, PhysicalPageIndex)>,
    ) -> Self {
        let mut snap = Self::default();
        for (slot, phys) in pairs {
            snap.insert(slot, phys);
        }
        snap
    }

    /// Records `slot -> phys`, replacing any previous mapping of `slot`.
    pub fn insert(&mut self, slot: VirtualSlotIndex, phys: PhysicalPageIndex) {
        self.remove_slot(slot);
        self.slot_to_phys.insert(slot, phys);
        self.phys_to_slots.entry(phys).or_default().insert(slot);
    }

    pub fn remove_slot(&mut self, slot: VirtualSlotIndex) -> Option<PhysicalPageIndex> {
        let phys = self.slot_to_phys.remove(&slot)?;
        if let Some(slots) = self.phys_to_slots.get_mut(&phys) {
            slots.remove(&slot);
            if slots.is_empty() {
                self.phys_to_slots.remove(&phys);
            }
        }
        Some(phys)
    }

    pub fn phys_of(&self, slot: VirtualSlotIndex) -> Option<PhysicalPageIndex> {
        self.slot_to_phys.get(&slot).copied()
    }

    pub fn slots_of(&self, phys: PhysicalPageIndex) -> impl Iterator<Item = VirtualSlotIndex> + '_ {
        self.phys_to_slots.get(&phys).into_iter().flatten().copied()
    }

    pub fn contains_phys(&self, phys: PhysicalPageIndex) -> bool {
        self.phys_to_slots.contains_key(&phys)
    }

    pub fn len(&self) -> usize {
        self.slot_to_phys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_to_phys.is_empty()
    }

    /// `(slot, phys)` pairs in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (VirtualSlotIndex, PhysicalPageIndex)> + '_ {
        self.slot_to_phys.iter().map(|(&s, &p)| (s, p))
    }

    pub fn physical_pages(&self) -> BTreeSet<PhysicalPageIndex> {
        self.phys_to_slots.keys().copied().collect()
    }

    /// Checks that both directions describe the same relation.
    pub fn is_consistent(&self) -> bool {
        let forward = self
            .slot_to_phys
            .iter()
            .all(|(s, p)| self.phys_to_slots.get(p).is_some_and(|set| set.contains(s)));
        let backward_len: usize = self.phys_to_slots.values().map(BTreeSet::len).sum();
        forward && backward_len == self.slot_to_phys.len()
    }
}
