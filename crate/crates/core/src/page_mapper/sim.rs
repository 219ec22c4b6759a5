use std::alloc::{self, Layout};
use std::ptr::NonNull;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{MappingSnapshot, PhysicalPageIndex, RemapRequest, VirtualSlotIndex};
use crate::error::{Error, Result};

const ALIGN: usize = 64;

/// Heap-backed physical pages.
pub(super) struct SimMemory {
    ptr: NonNull<u8>,
    layout: Layout,
}

// The allocation is plain memory; synchronization is the caller's contract.
unsafe impl Send for SimMemory {}
unsafe impl Sync for SimMemory {}

impl SimMemory {
    pub(super) fn new(bytes: usize) -> Result<Self> {
        let layout = Layout::from_size_align(bytes, ALIGN)
            .map_err(|e| Error::ResourceExhausted(e.to_string()))?;
        let ptr = unsafe { alloc::alloc_zeroed(layout) };
        let ptr = NonNull::new(ptr).ok_or_else(|| {
            Error::ResourceExhausted(format!("allocating {bytes} bytes of physical pages"))
        })?;
        Ok(Self { ptr, layout })
    }

    pub(super) fn ptr(&self) -> *mut u8 {
        self.ptr.as_ptr()
    }
}

impl Drop for SimMemory {
    fn drop(&mut self) {
        unsafe { alloc::dealloc(self.ptr.as_ptr(), self.layout) }
    }
}

const ANONYMOUS: usize = usize::MAX;

/// Per-region indirection table: slot -> physical page or anonymous.
pub(super) struct SlotTable {
    slots: Box<[AtomicUsize]>,
    zero: Box<[u64]>,
}

impl SlotTable {
    pub(super) fn new(num_slots: usize, page_size: usize) -> Self {
        Self {
            slots: (0..num_slots).map(|_| AtomicUsize::new(ANONYMOUS)).collect(),
            zero: vec![0u64; page_size.div_ceil(8)].into_boxed_slice(),
        }
    }

    pub(super) fn get(&self, slot: VirtualSlotIndex) -> Option<PhysicalPageIndex> {
        match self.slots[slot].load(Ordering::Acquire) {
            ANONYMOUS => None,
            phys => Some(phys),
        }
    }

    pub(super) fn zero_page(&self) -> *const u8 {
        self.zero.as_ptr() as *const u8
    }

    pub(super) fn remap(&self, req: RemapRequest) {
        for (slot, phys) in req.pairs() {
            self.slots[slot].store(phys, Ordering::Release);
        }
    }

    pub(super) fn unmap(&self, start: VirtualSlotIndex, count: usize) {
        for slot in &self.slots[start..start + count] {
            slot.store(ANONYMOUS, Ordering::Release);
        }
    }

    pub(super) fn snapshot(&self) -> MappingSnapshot {
        MappingSnapshot::from_pairs(
            self.slots
                .iter()
                .enumerate()
                .filter_map(|(s, p)| match p.load(Ordering::Acquire) {
                    ANONYMOUS => None,
                    phys => Some((s, phys)),
                }),
        )
    }
}
