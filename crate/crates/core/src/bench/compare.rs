//! Accumulated-time comparison of an adaptive run against a full-scan run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::QueryRow;
use crate::error::{Error, Result};

/// Number of queries in the first and last phase.
pub const PHASE_LEN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseMedians {
    pub first: f64,
    pub last: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub queries: usize,
    pub adaptive_total_ns: f64,
    pub full_total_ns: f64,
    /// `full_total_ns / adaptive_total_ns`; above 1 means adaptive wins.
    pub ratio: f64,
    pub adaptive_ns: PhaseMedians,
    pub full_ns: PhaseMedians,
    pub adaptive_pages: PhaseMedians,
    pub full_pages: PhaseMedians,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries: {}", self.queries)?;
        writeln!(
            f,
            "accumulated adaptive: {:.3} ms, full scan: {:.3} ms, ratio {:.3}",
            self.adaptive_total_ns / 1e6,
            self.full_total_ns / 1e6,
            self.ratio
        )?;
        writeln!(
            f,
            "median ns     first {}: adaptive {:.0} / full {:.0}; last {}: adaptive {:.0} / full {:.0}",
            PHASE_LEN, self.adaptive_ns.first, self.full_ns.first, PHASE_LEN, self.adaptive_ns.last, self.full_ns.last
        )?;
        writeln!(
            f,
            "median pages  first {}: adaptive {:.0} / full {:.0}; last {}: adaptive {:.0} / full {:.0}",
            PHASE_LEN,
            self.adaptive_pages.first,
            self.full_pages.first,
            PHASE_LEN,
            self.adaptive_pages.last,
            self.full_pages.last
        )
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn phase_medians(xs: &[f64]) -> PhaseMedians {
    let n = xs.len().min(PHASE_LEN);
    PhaseMedians {
        first: median(&xs[..n]),
        last: median(&xs[xs.len() - n..]),
    }
}

struct PerQuery {
    bounds: (u64, u64),
    ns: f64,
    pages: f64,
}

/// Averages repetitions per query index.
fn per_query(rows: &[QueryRow]) -> Result<Vec<PerQuery>> {
    let mut groups: BTreeMap<usize, Vec<&QueryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.query_index).or_default().push(r);
    }
    for (expected, (&i, rs)) in groups.iter().enumerate() {
        if i != expected {
            return Err(Error::SequenceMismatch(format!("query index {expected} is missing")));
        }
        if rs.iter().any(|r| (r.l, r.u) != (rs[0].l, rs[0].u)) {
            return Err(Error::SequenceMismatch(format!(
                "repetitions disagree on the bounds of query {i}"
            )));
        }
    }
    Ok(groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            PerQuery {
                bounds: (rs[0].l, rs[0].u),
                ns: rs.iter().map(|r| r.elapsed_ns as f64).sum::<f64>() / n,
                pages: rs.iter().map(|r| r.scanned_pages as f64).sum::<f64>() / n,
            }
        })
        .collect())
}

/// Compares two runs over the same query sequence. Repetitions are averaged.
pub fn compare_outcomes(adaptive: &[QueryRow], full: &[QueryRow]) -> Result<CompareReport> {
    let a = per_query(adaptive)?;
    let f = per_query(full)?;
    if a.is_empty() {
        return Err(Error::SequenceMismatch("no queries to compare".into()));
    }
    if a.len() != f.len() {
        return Err(Error::SequenceMismatch(format!(
            "{} adaptive queries against {} full-scan queries",
            a.len(),
            f.len()
        )));
    }
    if let Some(i) = (0..a.len()).find(|&i| a[i].bounds != f[i].bounds) {
        return Err(Error::SequenceMismatch(format!(
            "query {i} is {:?} in one run and {:?} in the other",
            a[i].bounds, f[i].bounds
        )));
    }
    let col = |xs: &[PerQuery], g: fn(&PerQuery) -> f64| xs.iter().map(g).collect::<Vec<_>>();
    let (a_ns, f_ns) = (col(&a, |q| q.ns), col(&f, |q| q.ns));
    let adaptive_total_ns: f64 = a_ns.iter().sum();
    let full_total_ns: f64 = f_ns.iter().sum();
    Ok(CompareReport {
        queries: a.len(),
        adaptive_total_ns,
        full_total_ns,
        ratio: full_total_ns / adaptive_total_ns,
        adaptive_ns: phase_medians(&a_ns),
        full_ns: phase_medians(&f_ns),
        adaptive_pages: phase_medians(&col(&a, |q| q.pages)),
        full_pages: phase_medians(&col(&f, |q| q.pages)),
    })
}

pub fn read_query_rows(path: &Path) -> Result<Vec<QueryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Rows of `strategy` if the file has any, otherwise every row.
pub fn select_strategy(rows: Vec<QueryRow>, strategy: &str) -> Vec<QueryRow> {
    if rows.iter().any(|r| r.strategy == strategy) {
        rows.into_iter().filter(|r| r.strategy == strategy).collect()
    } else {
        rows
    }
}
