//! The set of views of one column: query routing and candidate adjudication.
//!
//! Routing:
//! * single-view mode picks the covering view with the fewest pages (ties:
//!   narrower range, then insertion order, the full view first);
//! * multi-view mode covers the query with partial views by greedy interval
//!   cover (take the view containing the leftmost uncovered value that
//!   reaches furthest right; ties: fewer pages, then insertion order) and
//!   falls back to the full view when the partials leave a gap.
//!
//! Candidate rules, in order: discard if not smaller than the full view;
//! then walk the partials in insertion order, where the first partial that
//! the candidate is a subset of (within discard tolerance) discards it and
//! the first partial it is a superset of (within replacement tolerance) is
//! replaced; otherwise insert, unless the view cap is reached, in which case
//! view generation stops for good.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::physical_store::PhysicalColumn;
use crate::views::{ValueRange, ViewId, VirtualView};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RoutingMode {
    #[default]
    Single,
    Multi,
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(RoutingMode::Single),
            "multi" => Ok(RoutingMode::Multi),
            other => Err(Error::Config(format!(
                "unknown routing mode {other:?} (expected single or multi)"
            ))),
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::Single => "single",
            RoutingMode::Multi => "multi",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexConfig {
    pub max_views: usize,
    /// Page slack under which a subset candidate is still discarded.
    pub discard_tolerance: usize,
    /// Page slack under which a superset candidate still replaces.
    pub replace_tolerance: usize,
    pub mode: RoutingMode,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            max_views: 100,
            discard_tolerance: 0,
            replace_tolerance: 0,
            mode: RoutingMode::Single,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SuggestVerdict {
    Accepted,
    DiscardedLargerThanFull,
    DiscardedSubset { of: ViewId },
    ReplacedExisting { old: ViewId },
    DiscardedCapReached,
}

impl SuggestVerdict {
    pub fn is_retained(&self) -> bool {
        matches!(
            self,
            SuggestVerdict::Accepted | SuggestVerdict::ReplacedExisting { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            SuggestVerdict::Accepted => "accepted",
            SuggestVerdict::DiscardedLargerThanFull => "discarded_larger_than_full",
            SuggestVerdict::DiscardedSubset { .. } => "discarded_subset",
            SuggestVerdict::ReplacedExisting { .. } => "replaced_existing",
            SuggestVerdict::DiscardedCapReached => "discarded_cap_reached",
        }
    }
}

/// The routing-relevant facts of a view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewMeta {
    pub range: ValueRange,
    pub num_pages: usize,
}

impl From<&VirtualView> for ViewMeta {
    fn from(v: &VirtualView) -> Self {
        Self {
            range: v.range(),
            num_pages: v.num_pages(),
        }
    }
}

/// Index of the smallest view covering `[lower, upper]`.
pub fn select_single(views: &[ViewMeta], lower: u64, upper: u64) -> Option<usize> {
    views
        .iter()
        .enumerate()
        .filter(|(_, v)| v.range.covers_values(lower, upper))
        .min_by_key(|&(i, v)| (v.num_pages, v.range.width_key(), i))
        .map(|(i, _)| i)
}

/// Greedy interval cover of `[lower, upper]`; `None` if the views leave a gap.
pub fn select_multi(views: &[ViewMeta], lower: u64, upper: u64) -> Option<Vec<usize>> {
    let reach = |r: &ValueRange| r.upper.map_or(u128::MAX, u128::from);
    let mut chosen = Vec::new();
    let mut cursor = lower;
    loop {
        let (i, v) = views
            .iter()
            .enumerate()
            .filter(|(_, v)| v.range.contains(cursor))
            .min_by_key(|&(i, v)| (Reverse(reach(&v.range)), v.num_pages, i))?;
        chosen.push(i);
        match v.range.upper {
            Some(u) if u < upper => cursor = u + 1,
            _ => return Some(chosen),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    DiscardLargerThanFull,
    DiscardSubset(usize),
    Replace(usize),
    Insert,
    DiscardCapReached,
}

/// Applies the candidate rules to plain metadata.
pub fn classify_candidate(
    full_pages: usize,
    partials: &[ViewMeta],
    cand: ViewMeta,
    cfg: &IndexConfig,
) -> Decision {
    if cand.num_pages >= full_pages {
        return Decision::DiscardLargerThanFull;
    }
    for (i, p) in partials.iter().enumerate() {
        if cand.range.is_subset_of(&p.range)
            && cand.num_pages >= p.num_pages.saturating_sub(cfg.discard_tolerance)
        {
            return Decision::DiscardSubset(i);
        }
        if cand.range.covers(&p.range) && cand.num_pages <= p.num_pages + cfg.replace_tolerance {
            return Decision::Replace(i);
        }
    }
    if partials.len() < cfg.max_views {
        Decision::Insert
    } else {
        Decision::DiscardCapReached
    }
}

pub struct ViewIndex {
    config: IndexConfig,
    full_pages: usize,
    partials: Vec<VirtualView>,
    generation_stopped: bool,
}

impl fmt::Debug for ViewIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ViewIndex")
            .field("config", &self.config)
            .field("partials", &self.partials)
            .field("generation_stopped", &self.generation_stopped)
            .finish()
    }
}

impl ViewIndex {
    pub fn new(col: &PhysicalColumn, config: IndexConfig) -> Self {
        Self {
            config,
            full_pages: col.num_pages(),
            partials: Vec::new(),
            generation_stopped: false,
        }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn mode(&self) -> RoutingMode {
        self.config.mode
    }

    pub fn partials(&self) -> &[VirtualView] {
        &self.partials
    }

    pub fn partials_mut(&mut self) -> &mut [VirtualView] {
        &mut self.partials
    }

    pub fn generation_stopped(&self) -> bool {
        self.generation_stopped
    }

    fn metas(&self) -> Vec<ViewMeta> {
        self.partials.iter().map(ViewMeta::from).collect()
    }

    /// The views a query over `[lower, upper]` is routed to. Never empty.
    pub fn optimal_views<'a>(
        &'a self,
        col: &'a PhysicalColumn,
        lower: u64,
        upper: u64,
    ) -> Result<Vec<&'a VirtualView>> {
        if lower > upper {
            return Err(Error::InvalidRange { lower, upper });
        }
        let full = col.full_view();
        match self.config.mode {
            RoutingMode::Single => {
                let mut all = Vec::with_capacity(self.partials.len() + 1);
                all.push(ViewMeta::from(full));
                all.extend(self.metas());
                let pick = select_single(&all, lower, upper).expect("the full view covers everything");
                Ok(vec![if pick == 0 { full } else { &self.partials[pick - 1] }])
            }
            RoutingMode::Multi => Ok(match select_multi(&self.metas(), lower, upper) {
                Some(picks) => picks.into_iter().map(|i| &self.partials[i]).collect(),
                None => vec![full],
            }),
        }
    }

    /// Decides whether a finished candidate joins the index.
    pub fn suggest_candidate(&mut self, cand: VirtualView) -> SuggestVerdict {
        let decision = classify_candidate(
            self.full_pages,
            &self.metas(),
            ViewMeta::from(&cand),
            &self.config,
        );
        match decision {
            Decision::DiscardLargerThanFull => SuggestVerdict::DiscardedLargerThanFull,
            Decision::DiscardSubset(i) => SuggestVerdict::DiscardedSubset {
                of: self.partials[i].id(),
            },
            Decision::Replace(i) => {
                let old = std::mem::replace(&mut self.partials[i], cand);
                SuggestVerdict::ReplacedExisting { old: old.id() }
            }
            Decision::Insert => {
                self.partials.push(cand);
                SuggestVerdict::Accepted
            }
            Decision::DiscardCapReached => {
                self.generation_stopped = true;
                SuggestVerdict::DiscardedCapReached
            }
        }
    }

    /// Adds a view without adjudication (used to set up experiments).
    pub fn push_partial(&mut self, view: VirtualView) -> Result<()> {
        if self.partials.len() >= self.config.max_views {
            return Err(Error::Config(format!(
                "view cap of {} reached",
                self.config.max_views
            )));
        }
        self.partials.push(view);
        Ok(())
    }
}
