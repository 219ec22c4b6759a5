//! Parser for the Linux per-process mappings file (`/proc/<pid>/maps`).

use crate::error::{Error, Result};

/// One line of a mappings file.
///
/// ```text
/// address           perms offset  dev   inode   pathname
/// 08048000-08056000 rw-s 00002000 03:0c 64593   /dev/shm/db
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapsEntry {
    /// First mapped address (inclusive).
    pub start: u64,
    /// End of the mapping (exclusive).
    pub end: u64,
    pub perms: String,
    /// Offset into the mapped file, in bytes.
    pub offset: u64,
    pub dev: String,
    pub inode: u64,
    pub pathname: Option<String>,
}

impl MapsEntry {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn is_shared(&self) -> bool {
        self.perms.as_bytes().get(3) == Some(&b's')
    }
}

fn next_field<'a>(rest: &mut &'a str) -> Option<&'a str> {
    let s = rest.trim_start();
    if s.is_empty() {
        return None;
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    let (field, tail) = s.split_at(end);
    *rest = tail;
    Some(field)
}

pub fn parse_maps_line(line: &str) -> Result<MapsEntry> {
    let bad = |reason| Error::MapsParse {
        line: line.to_string(),
        reason,
    };
    let mut rest = line;
    let address = next_field(&mut rest).ok_or_else(|| bad("missing address range"))?;
    let perms = next_field(&mut rest).ok_or_else(|| bad("missing permissions"))?;
    let offset = next_field(&mut rest).ok_or_else(|| bad("missing offset"))?;
    let dev = next_field(&mut rest).ok_or_else(|| bad("missing device"))?;
    let inode = next_field(&mut rest).ok_or_else(|| bad("missing inode"))?;

    let (start, end) = address
        .split_once('-')
        .ok_or_else(|| bad("address range lacks '-'"))?;
    let start = u64::from_str_radix(start, 16).map_err(|_| bad("bad start address"))?;
    let end = u64::from_str_radix(end, 16).map_err(|_| bad("bad end address"))?;
    if end < start {
        return Err(bad("end address below start address"));
    }
    if perms.len() != 4 {
        return Err(bad("permissions must have four characters"));
    }
    let offset = u64::from_str_radix(offset, 16).map_err(|_| bad("bad offset"))?;
    let inode = inode.parse::<u64>().map_err(|_| bad("bad inode"))?;
    let pathname = rest.trim();

    Ok(MapsEntry {
        start,
        end,
        perms: perms.to_string(),
        offset,
        dev: dev.to_string(),
        inode,
        pathname: (!pathname.is_empty()).then(|| pathname.to_string()),
    })
}

/// Parses every non-empty line of a mappings file.
pub fn parse_maps(content: &str) -> Result<Vec<MapsEntry>> {
    content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_maps_line)
        .collect()
}
