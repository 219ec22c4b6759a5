use std::fs::{File, OpenOptions};
use std::io;
use std::os::unix::fs::{FileExt, MetadataExt};
use std::os::unix::io::AsRawFd;
use std::path::PathBuf;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{RemapRequest, VirtualSlotIndex, DEFAULT_SHM_DIR, SHM_DIR_ENV};
use crate::error::{Error, Result};

pub(super) fn os_page_size() -> usize {
    let ps = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    if ps <= 0 {
        4096
    } else {
        ps as usize
    }
}

static FILE_SEQ: AtomicU64 = AtomicU64::new(0);

/// A main-memory file on a tmpfs-like mount acting as the physical pages.
pub(super) struct MemoryFile {
    file: File,
    path: PathBuf,
    inode: u64,
}

impl MemoryFile {
    pub(super) fn create(bytes: usize) -> Result<Self> {
        let dir = std::env::var_os(SHM_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_SHM_DIR));
        if !dir.is_dir() {
            return Err(Error::BackendUnavailable(format!(
                "memory file directory {} does not exist (set {SHM_DIR_ENV} or use the sim backend)",
                dir.display()
            )));
        }
        let path = dir.join(format!(
            "adaptive-views-{}-{}",
            std::process::id(),
            FILE_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::ResourceExhausted(format!("creating {}: {e}", path.display())))?;
        let sized = file.set_len(bytes as u64).and_then(|_| file.metadata());
        let meta = match sized {
            Ok(m) => m,
            Err(e) => {
                let _ = std::fs::remove_file(&path);
                return Err(Error::ResourceExhausted(format!(
                    "sizing {} to {bytes} bytes: {e}",
                    path.display()
                )));
            }
        };
        Ok(Self {
            file,
            path,
            inode: meta.ino(),
        })
    }

    pub(super) fn inode(&self) -> u64 {
        self.inode
    }

    pub(super) fn read_at(&self, buf: &mut [u8], offset: u64) -> io::Result<()> {
        self.file.read_exact_at(buf, offset)
    }

    pub(super) fn write_at(&self, data: &[u8], offset: u64) -> io::Result<()> {
        self.file.write_all_at(data, offset)
    }
}

impl Drop for MemoryFile {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// An anonymous, non-committed reservation of virtual address space.
pub(super) struct Reservation {
    base: NonNull<u8>,
    len: usize,
}

unsafe impl Send for Reservation {}
unsafe impl Sync for Reservation {}

const PROT: libc::c_int = libc::PROT_READ | libc::PROT_WRITE;
const ANON_FLAGS: libc::c_int = libc::MAP_PRIVATE | libc::MAP_ANONYMOUS | libc::MAP_NORESERVE;

impl Reservation {
    pub(super) fn new(len: usize) -> Result<Self> {
        let ptr = unsafe { libc::mmap(std::ptr::null_mut(), len, PROT, ANON_FLAGS, -1, 0) };
        if ptr == libc::MAP_FAILED {
            return Err(Error::ResourceExhausted(format!(
                "reserving {len} bytes of address space: {}",
                io::Error::last_os_error()
            )));
        }
        Ok(Self {
            base: NonNull::new(ptr as *mut u8).expect("mmap returned null"),
            len,
        })
    }

    pub(super) fn base(&self) -> *mut u8 {
        self.base.as_ptr()
    }

    pub(super) fn remap(&self, file: &MemoryFile, page_size: usize, req: RemapRequest) -> Result<()> {
        let addr = unsafe { self.base().add(req.virt_start_slot * page_size) };
        let ptr = unsafe {
            libc::mmap(
                addr as *mut libc::c_void,
                req.run_length * page_size,
                PROT,
                libc::MAP_SHARED | libc::MAP_FIXED,
                file.file.as_raw_fd(),
                (req.phys_start_page * page_size) as libc::off_t,
            )
        };
        if ptr == libc::MAP_FAILED {
            return Err(Error::RemapFailed(io::Error::last_os_error()));
        }
        Ok(())
    }

    pub(super) fn unmap(&self, page_size: usize, start: VirtualSlotIndex, count: usize) -> Result<()> {
        let addr = unsafe { self.base().add(start * page_size) };
        let ptr = unsafe {
            libc::mmap(
                addr as *mut libc::c_void,
                count * page_size,
                PROT,
                ANON_FLAGS | libc::MAP_FIXED,
                -1,
                0,
            )
        };
        if ptr == libc::MAP_FAILED {
            return Err(Error::RemapFailed(io::Error::last_os_error()));
        }
        Ok(())
    }
}

impl Drop for Reservation {
    fn drop(&mut self) {
        unsafe {
            libc::munmap(self.base() as *mut libc::c_void, self.len);
        }
    }
}
