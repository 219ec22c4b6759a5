//! Benchmark scenarios. Each scenario produces typed rows that are written as
//! CSV (header row, comma separated, timings in nanoseconds) plus a short
//! textual summary.
//!
//! Timing columns are informational, especially on the simulated backend.
//! The operation counters (`scanned_pages`, `remap_calls`, `remapped_pages`,
//! page add/remove counts) do not depend on the machine.

pub mod compare;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{expected_qualifying_fraction, ExplicitPartialView, ExplicitVariant};
use crate::error::{Error, Result};
use crate::page_mapper::Backend;
use crate::physical_store::{PhysicalColumn, RowId};
use crate::query_engine::{
    answer_full_scan_only, build_view, page_qualifies, scan_view, EngineConfig, QueryEngine,
    QueryOutcome, RangeQuery,
};
use crate::update_engine::{apply_and_realign, rebuild_all_views, UpdateRecord};
use crate::view_index::{IndexConfig, RoutingMode, ViewIndex};
use crate::views::ValueRange;
use crate::workload::{
    fill_column, generate_queries, DistributionKind, DistributionSpec, QueryKind,
    QuerySequenceSpec, DEFAULT_DOMAIN,
};

use self::compare::{compare_outcomes, CompareReport};

/// Runs are re-validated against full scans up to this column size.
pub const SELF_CHECK_MAX_PAGES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    ExplicitVsVirtual,
    AdaptiveSingle,
    AdaptiveMulti,
    ViewCreation,
    Updates,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::ExplicitVsVirtual,
        Scenario::AdaptiveSingle,
        Scenario::AdaptiveMulti,
        Scenario::ViewCreation,
        Scenario::Updates,
    ];
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::ExplicitVsVirtual => "explicit-vs-virtual",
            Scenario::AdaptiveSingle => "adaptive-single",
            Scenario::AdaptiveMulti => "adaptive-multi",
            Scenario::ViewCreation => "view-creation",
            Scenario::Updates => "updates",
        })
    }
}

/// View cap per routing mode and selectivity: 200 views at 1% and 20 at 10%
/// in multi-view mode, 100 otherwise.
pub fn default_max_views(mode: RoutingMode, kind: QueryKind) -> usize {
    match (mode, kind) {
        (RoutingMode::Multi, QueryKind::FixedSelectivity { selectivity }) if selectivity <= 0.01 => 200,
        (RoutingMode::Multi, QueryKind::FixedSelectivity { selectivity }) if selectivity >= 0.1 => 20,
        _ => 100,
    }
}

/// Value domain a scenario uses for a distribution.
pub fn default_domain(scenario: Scenario, kind: DistributionKind) -> (u64, u64) {
    match (scenario, kind) {
        (Scenario::Updates, _) | (Scenario::ViewCreation, DistributionKind::Sine) => (0, u64::MAX),
        _ => DEFAULT_DOMAIN,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub scenario: Scenario,
    pub num_pages: usize,
    pub backend: Backend,
    pub index: IndexConfig,
    pub engine: EngineConfig,
    pub data: DistributionSpec,
    pub queries: QuerySequenceSpec,
    pub reps: usize,
    pub seed: u64,
    pub self_check: bool,
    /// Updates scenario.
    pub batch_sizes: Vec<usize>,
    pub num_views: usize,
    /// Explicit-vs-virtual scenario.
    pub k_values: Vec<u64>,
    pub explicit_updates: usize,
    /// View-creation scenario; `None` picks a default from the domain.
    pub view_range: Option<ValueRange>,
}

impl BenchConfig {
    pub fn new(scenario: Scenario, num_pages: usize, seed: u64) -> Self {
        let kind = match scenario {
            Scenario::AdaptiveSingle | Scenario::AdaptiveMulti => DistributionKind::Sine,
            _ => DistributionKind::Uniform,
        };
        let query_kind = match scenario {
            Scenario::AdaptiveMulti => QueryKind::FixedSelectivity { selectivity: 0.01 },
            _ => QueryKind::STEPPED,
        };
        let mode = match scenario {
            Scenario::AdaptiveMulti => RoutingMode::Multi,
            _ => RoutingMode::Single,
        };
        let mut cfg = Self {
            scenario,
            num_pages,
            backend: Backend::Sim,
            index: IndexConfig {
                max_views: default_max_views(mode, query_kind),
                mode,
                ..IndexConfig::default()
            },
            engine: EngineConfig::default(),
            data: DistributionSpec::new(kind, seed),
            queries: QuerySequenceSpec::new(query_kind, seed.wrapping_add(1)),
            reps: 3,
            seed,
            self_check: num_pages <= SELF_CHECK_MAX_PAGES,
            batch_sizes: vec![100, 1_000, 10_000, 100_000],
            num_views: 5,
            k_values: (0..7).map(|i| 12_500 << i).collect(),
            explicit_updates: (10_000 * num_pages / 1_000_000).max(1),
            view_range: None,
        };
        cfg.set_distribution(kind);
        cfg
    }

    /// Switches the distribution and its scenario-specific domain.
    pub fn set_distribution(&mut self, kind: DistributionKind) {
        let (lo, hi) = default_domain(self.scenario, kind);
        self.data.kind = kind;
        self.data.lo = lo;
        self.data.hi = hi;
    }

    /// Range of the view built by the view-creation scenario.
    pub fn creation_range(&self) -> ValueRange {
        self.view_range.unwrap_or_else(|| {
            let (lo, hi) = (self.data.lo, self.data.hi);
            let upper = if self.data.kind == DistributionKind::Sine {
                lo + (hi - lo) / 2 + 1
            } else {
                lo + (hi - lo) / 1000
            };
            ValueRange {
                lower: Some(lo),
                upper: Some(upper),
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pages == 0 {
            return Err(Error::Config("--pages must be positive".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("--reps must be positive".into()));
        }
        if !self.backend.is_available() {
            return Err(Error::BackendUnavailable(format!(
                "the {} backend is not supported on this platform; use --backend sim",
                self.backend
            )));
        }
        self.data.validate()?;
        if self.scenario == Scenario::ExplicitVsVirtual && self.k_values.iter().any(|&k| k > self.data.hi) {
            return Err(Error::Config("k values must lie inside the domain".into()));
        }
        Ok(())
    }
}

fn make_column(cfg: &BenchConfig) -> Result<PhysicalColumn> {
    let mut col = PhysicalColumn::create(cfg.num_pages, cfg.backend)?;
    fill_column(&mut col, cfg.data)?;
    Ok(col)
}

fn nanos(d: std::time::Duration) -> u64 {
    d.as_nanos().min(u64::MAX as u128) as u64
}

fn sorted(mut r: Vec<(RowId, u64)>) -> Vec<(RowId, u64)> {
    r.sort_unstable();
    r
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRow {
    pub scenario: String,
    pub rep: usize,
    pub query_index: usize,
    pub l: u64,
    pub u: u64,
    /// `adaptive` or `full_scan`.
    pub strategy: String,
    pub elapsed_ns: u64,
    pub scanned_pages: usize,
    pub views_used: usize,
    pub candidate_outcome: String,
    pub candidate_pages: usize,
    pub remap_calls: u64,
    pub remapped_pages: u64,
    pub result_rows: usize,
}

impl QueryRow {
    fn new(cfg: &BenchConfig, rep: usize, i: usize, q: RangeQuery, strategy: &str, o: &QueryOutcome) -> Self {
        Self {
            scenario: cfg.scenario.to_string(),
            rep,
            query_index: i,
            l: q.lower(),
            u: q.upper(),
            strategy: strategy.to_string(),
            elapsed_ns: nanos(o.elapsed),
            scanned_pages: o.scanned_pages,
            views_used: o.views_used,
            candidate_outcome: o.candidate.label().to_string(),
            candidate_pages: o.candidate_pages,
            remap_calls: o.remaps.calls,
            remapped_pages: o.remaps.pages,
            result_rows: o.result.len(),
        }
    }
}

/// Adaptive query processing against full scans over the same sequence.
pub fn run_adaptive(cfg: &BenchConfig) -> Result<Vec<QueryRow>> {
    cfg.validate()?;
    let queries = generate_queries(&cfg.queries, cfg.data.lo, cfg.data.hi)?;
    let engine = QueryEngine::new(cfg.engine);
    let mut rows = Vec::with_capacity(2 * cfg.reps * queries.len());
    for rep in 0..cfg.reps {
        let col = make_column(cfg)?;
        for (i, &q) in queries.iter().enumerate() {
            let out = answer_full_scan_only(&col, q);
            rows.push(QueryRow::new(cfg, rep, i, q, "full_scan", &out));
        }
        let mut idx = ViewIndex::new(&col, cfg.index);
        for (i, &q) in queries.iter().enumerate() {
            let out = engine.answer_and_maintain(&col, &mut idx, q)?;
            rows.push(QueryRow::new(cfg, rep, i, q, "adaptive", &out));
            if cfg.self_check {
                let want = sorted(answer_full_scan_only(&col, q).result);
                if sorted(out.result) != want {
                    return Err(Error::CorrectnessFailure(format!(
                        "rep {rep}, query {i} [{}, {}] differs from the full scan",
                        q.lower(),
                        q.upper()
                    )));
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationRow {
    pub rep: usize,
    pub coalesce: bool,
    pub async_mapper: bool,
    pub elapsed_ns: u64,
    pub remap_calls: u64,
    pub remapped_pages: u64,
    pub view_pages: usize,
}

/// Builds one view with each combination of the two creation optimizations.
pub fn run_view_creation(cfg: &BenchConfig) -> Result<Vec<CreationRow>> {
    cfg.validate()?;
    let range = cfg.creation_range();
    let mut rows = Vec::new();
    for rep in 0..cfg.reps {
        let col = make_column(cfg)?;
        let truth: Option<Vec<usize>> = cfg
            .self_check
            .then(|| (0..col.num_pages()).filter(|&p| page_qualifies(&col, p, &range)).collect());
        for (coalesce, async_mapper) in [(false, false), (true, false), (false, true), (true, true)] {
            let engine = EngineConfig {
                coalesce,
                async_mapper,
                ..cfg.engine
            };
            let start = Instant::now();
            let view = build_view(&col, range, &engine)?;
            let elapsed = start.elapsed();
            if let Some(truth) = &truth {
                let mut pages = view.page_ids();
                pages.sort_unstable();
                if &pages != truth {
                    return Err(Error::CorrectnessFailure(format!(
                        "view over {range} maps the wrong pages"
                    )));
                }
            }
            let stats = view.region().remap_stats();
            rows.push(CreationRow {
                rep,
                coalesce,
                async_mapper,
                elapsed_ns: nanos(elapsed),
                remap_calls: stats.calls,
                remapped_pages: stats.pages,
                view_pages: view.num_pages(),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRow {
    pub rep: usize,
    pub batch_size: usize,
    pub indexed_pages: usize,
    pub apply_ns: u64,
    pub parse_ns: u64,
    pub realign_ns: u64,
    pub rebuild_ns: u64,
    pub pages_added: usize,
    pub pages_removed: usize,
    pub full_page_scans: usize,
    pub snapshot_parses: u64,
    pub touched_pages: usize,
    pub rebuild_scanned_pages: usize,
}

/// `count` random overwrites with old values tracked through the batch.
pub fn random_batch(col: &PhysicalColumn, count: usize, lo: u64, hi: u64, rng: &mut impl Rng) -> Result<Vec<UpdateRecord>> {
    let mut current: HashMap<u64, u64> = HashMap::new();
    let mut batch = Vec::with_capacity(count);
    for _ in 0..count {
        let row = rng.random_range(0..col.num_rows());
        let new = rng.random_range(lo..=hi);
        let old = match current.get(&row) {
            Some(&v) => v,
            None => col.read_value(RowId(row))?,
        };
        current.insert(row, new);
        batch.push(UpdateRecord::new(row, old, new));
    }
    Ok(batch)
}

/// Random ranges covering `1 / 1024` of the domain each.
pub fn random_view_ranges(lo: u64, hi: u64, count: usize, rng: &mut impl Rng) -> Vec<ValueRange> {
    let width = (hi - lo) / 1024;
    (0..count)
        .map(|_| {
            let l = rng.random_range(lo..=hi - width);
            ValueRange {
                lower: Some(l),
                upper: Some(l + width),
            }
        })
        .collect()
}

/// Realigns five partial views after batches of random updates and compares
/// with rebuilding them.
pub fn run_updates(cfg: &BenchConfig) -> Result<Vec<UpdateRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &batch_size in &cfg.batch_sizes {
        for rep in 0..cfg.reps {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(batch_size as u64);
            let mut col = make_column(cfg)?;
            let mut idx = ViewIndex::new(
                &col,
                IndexConfig {
                    max_views: cfg.num_views,
                    ..cfg.index
                },
            );
            for range in random_view_ranges(cfg.data.lo, cfg.data.hi, cfg.num_views, &mut rng) {
                idx.push_partial(build_view(&col, range, &cfg.engine)?)?;
            }
            let indexed_pages = idx.partials().iter().map(|v| v.num_pages()).sum();
            let batch = random_batch(&col, batch_size, cfg.data.lo, cfg.data.hi, &mut rng)?;
            let stats = apply_and_realign(&mut col, &mut idx, &batch, cfg.engine.coalesce)?;
            let realigned: Vec<BTreeSet<usize>> = idx
                .partials()
                .iter()
                .map(|v| v.page_ids().into_iter().collect())
                .collect();
            let rebuild = rebuild_all_views(&col, &mut idx, cfg.engine.coalesce)?;
            if cfg.self_check {
                for (view, before) in idx.partials().iter().zip(&realigned) {
                    let after: BTreeSet<usize> = view.page_ids().into_iter().collect();
                    if &after != before {
                        return Err(Error::CorrectnessFailure(format!(
                            "realigned view {} differs from its rebuild",
                            view.range()
                        )));
                    }
                }
            }
            rows.push(UpdateRow {
                rep,
                batch_size,
                indexed_pages,
                apply_ns: nanos(stats.apply_time),
                parse_ns: nanos(stats.parse_time),
                realign_ns: nanos(stats.realign_time),
                rebuild_ns: nanos(rebuild.elapsed),
                pages_added: stats.pages_added(),
                pages_removed: stats.pages_removed(),
                full_page_scans: stats.full_page_scans(),
                snapshot_parses: stats.snapshot_parses(),
                touched_pages: stats.touched_pages(),
                rebuild_scanned_pages: rebuild.pages_scanned,
            });
        }
    }
    Ok(rows)
}

/// One explicit variant or the virtual view. `total_values` is the same for
/// every variant; `ns_per_value` normalizes by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitRow {
    pub rep: usize,
    pub k: u64,
    pub variant: String,
    pub total_values: usize,
    pub layout_pages: usize,
    pub indexed_pages: usize,
    pub indexed_fraction: f64,
    pub expected_fraction: f64,
    pub elapsed_ns: u64,
    pub ns_per_value: f64,
    pub result_rows: usize,
}

/// Explicit partial indexes over `[0, k]` against a virtual view, each after
/// the same random updates, answering `[0, k / 2]`.
pub fn run_explicit_vs_virtual(cfg: &BenchConfig) -> Result<Vec<ExplicitRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for rep in 0..cfg.reps {
        for &k in &cfg.k_values {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            let mut col = make_column(cfg)?;
            let values: Vec<u64> = col.values().collect();
            let total = values.len();
            let batch = random_batch(&col, cfg.explicit_updates, cfg.data.lo, cfg.data.hi, &mut rng)?;
            let overwrites: Vec<(RowId, u64)> = batch.iter().map(|r| (r.row, r.new)).collect();
            let q = RangeQuery::new(cfg.data.lo, k / 2)?;
            let range = ValueRange::new(cfg.data.lo, k)?;
            let mut results: Vec<(String, Vec<(RowId, u64)>)> = Vec::new();

            for variant in ExplicitVariant::ALL {
                let mut idx = ExplicitPartialView::build(&values, k, variant);
                idx.apply_updates(&overwrites)?;
                let start = Instant::now();
                let result = idx.scan(q)?;
                let elapsed = start.elapsed();
                let layout_pages = idx.column().num_pages();
                let indexed = idx.qualifying_pages().len();
                let per_page = idx.column().values_per_page();
                rows.push(ExplicitRow {
                    rep,
                    k,
                    variant: variant.to_string(),
                    total_values: total,
                    layout_pages,
                    indexed_pages: indexed,
                    indexed_fraction: indexed as f64 / layout_pages as f64,
                    expected_fraction: expected_qualifying_fraction(k, cfg.data.lo, cfg.data.hi, per_page),
                    elapsed_ns: nanos(elapsed),
                    ns_per_value: elapsed.as_nanos() as f64 / total as f64,
                    result_rows: result.len(),
                });
                results.push((variant.to_string(), result));
            }

            let mut idx = ViewIndex::new(&col, IndexConfig::default());
            idx.push_partial(build_view(&col, range, &cfg.engine)?)?;
            apply_and_realign(&mut col, &mut idx, &batch, cfg.engine.coalesce)?;
            let view = &idx.partials()[0];
            let start = Instant::now();
            let result = scan_view(view, q);
            let elapsed = start.elapsed();
            rows.push(ExplicitRow {
                rep,
                k,
                variant: "virtual".into(),
                total_values: total,
                layout_pages: col.num_pages(),
                indexed_pages: view.num_pages(),
                indexed_fraction: view.num_pages() as f64 / col.num_pages() as f64,
                expected_fraction: expected_qualifying_fraction(
                    k,
                    cfg.data.lo,
                    cfg.data.hi,
                    col.values_per_page(),
                ),
                elapsed_ns: nanos(elapsed),
                ns_per_value: elapsed.as_nanos() as f64 / total as f64,
                result_rows: result.len(),
            });
            results.push(("virtual".into(), result));

            let check_full = cfg.self_check;
            let reference = sorted(std::mem::take(&mut results[0].1));
            for (name, r) in results.into_iter().skip(1) {
                let same = if check_full {
                    sorted(r) == reference
                } else {
                    r.len() == reference.len()
                };
                if !same {
                    return Err(Error::CorrectnessFailure(format!(
                        "{name} disagrees with zone_map for k = {k}"
                    )));
                }
            }
        }
    }
    Ok(rows)
}

/// Writes `rows` as CSV with a header row.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Report of an adaptive run: adaptive rows against full-scan rows.
pub fn adaptive_report(rows: &[QueryRow]) -> Result<CompareReport> {
    let pick = |s: &str| rows.iter().filter(|r| r.strategy == s).cloned().collect::<Vec<_>>();
    compare_outcomes(&pick("adaptive"), &pick("full_scan"))
}

/// Runs `cfg`'s scenario, writes its CSV to `out` and returns a summary.
pub fn run_scenario(cfg: &BenchConfig, out: impl Write) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} on {} pages, {} backend, {} distribution, {} rep(s)",
        cfg.scenario, cfg.num_pages, cfg.backend, cfg.data.kind, cfg.reps
    );
    match cfg.scenario {
        Scenario::AdaptiveSingle | Scenario::AdaptiveMulti => {
            let rows = run_adaptive(cfg)?;
            write_csv(&rows, out)?;
            let report = adaptive_report(&rows)?;
            let multi = rows
                .iter()
                .filter(|r| r.strategy == "adaptive" && r.views_used >= 2)
                .count();
            let _ = write!(s, "{report}");
            let _ = writeln!(
                s,
                "mode {}, view cap {}, adaptive queries using >= 2 views: {multi}",
                cfg.index.mode, cfg.index.max_views
            );
        }
        Scenario::ViewCreation => {
            let rows = run_view_creation(cfg)?;
            write_csv(&rows, out)?;
            let _ = writeln!(s, "view over {}", cfg.creation_range());
            for (c, a) in [(false, false), (true, false), (false, true), (true, true)] {
                let sel: Vec<_> = rows.iter().filter(|r| r.coalesce == c && r.async_mapper == a).collect();
                let _ = writeln!(
                    s,
                    "coalesce={c:<5} async={a:<5} mean {:>12.0} ns, {} remap calls for {} pages",
                    mean(sel.iter().map(|r| r.elapsed_ns as f64)),
                    sel[0].remap_calls,
                    sel[0].view_pages
                );
            }
        }
        Scenario::Updates => {
            let rows = run_updates(cfg)?;
            write_csv(&rows, out)?;
            let mut by_batch: BTreeMap<usize, Vec<&UpdateRow>> = BTreeMap::new();
            for r in &rows {
                by_batch.entry(r.batch_size).or_default().push(r);
            }
            for (b, rs) in by_batch {
                let _ = writeln!(
                    s,
                    "batch {b:>8}: parse {:>12.0} ns, realign {:>12.0} ns, rebuild {:>12.0} ns, +{} -{} pages",
                    mean(rs.iter().map(|r| r.parse_ns as f64)),
                    mean(rs.iter().map(|r| r.realign_ns as f64)),
                    mean(rs.iter().map(|r| r.rebuild_ns as f64)),
                    rs[0].pages_added,
                    rs[0].pages_removed
                );
            }
        }
        Scenario::ExplicitVsVirtual => {
            let rows = run_explicit_vs_virtual(cfg)?;
            write_csv(&rows, out)?;
            let mut by_k: BTreeMap<(u64, String), Vec<&ExplicitRow>> = BTreeMap::new();
            for r in &rows {
                by_k.entry((r.k, r.variant.clone())).or_default().push(r);
            }
            for ((k, v), rs) in by_k {
                let _ = writeln!(
                    s,
                    "k {k:>8} {v:<13} {:>6.2}% pages, mean {:>12.0} ns",
                    rs[0].indexed_fraction * 100.0,
                    mean(rs.iter().map(|r| r.elapsed_ns as f64))
                );
            }
        }
    }
    Ok(s)
}
