//! Deterministic data distributions and query sequences.
//!
//! Every page draws from its own ChaCha8 stream (`seed`, stream = page), so a
//! page's values depend only on the spec, the page number and the page
//! capacity. Distribution shapes:
//!
//! * `uniform`: i.i.d. over `[lo, hi]`;
//! * `linear`: page `p` of `n` draws from the `p`-th of `n` equal slices of
//!   the domain;
//! * `sine`: page `p` draws from a band of width `band_factor * (hi - lo) / n`
//!   centred on `lo + (hi - lo) * (1 + sin(2 pi p / period)) / 2`;
//! * `sparse`: `ceil(zero_fraction * n)` seeded pages hold only `lo`, the
//!   rest are uniform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::physical_store::PhysicalColumn;
use crate::query_engine::RangeQuery;

pub const DEFAULT_DOMAIN: (u64, u64) = (0, 100_000_000);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    Uniform,
    Linear,
    Sine,
    Sparse,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 4] = [
        DistributionKind::Uniform,
        DistributionKind::Linear,
        DistributionKind::Sine,
        DistributionKind::Sparse,
    ];
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DistributionKind::Uniform),
            "linear" => Ok(DistributionKind::Linear),
            "sine" => Ok(DistributionKind::Sine),
            "sparse" => Ok(DistributionKind::Sparse),
            other => Err(Error::Config(format!("unknown distribution {other:?}"))),
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistributionKind::Uniform => "uniform",
            DistributionKind::Linear => "linear",
            DistributionKind::Sine => "sine",
            DistributionKind::Sparse => "sparse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub lo: u64,
    pub hi: u64,
    pub sine_period_pages: usize,
    pub band_factor: f64,
    pub sparse_zero_fraction: f64,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, seed: u64) -> Self {
        Self {
            kind,
            lo: DEFAULT_DOMAIN.0,
            hi: DEFAULT_DOMAIN.1,
            sine_period_pages: 100,
            band_factor: 4.0,
            sparse_zero_fraction: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo > self.hi {
            return Err(Error::Config(format!(
                "value domain [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if self.sine_period_pages == 0 {
            return Err(Error::Config("sine period must be at least one page".into()));
        }
        if !(self.band_factor > 0.0 && self.band_factor.is_finite()) {
            return Err(Error::Config("band factor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sparse_zero_fraction) {
            return Err(Error::Config("zero fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Produces the values of one column layout for a [`DistributionSpec`].
#[derive(Clone, Debug)]
pub struct ValueGenerator {
    spec: DistributionSpec,
    num_pages: usize,
    values_per_page: usize,
    zero_pages: Vec<bool>,
}

impl ValueGenerator {
    pub fn new(spec: DistributionSpec, num_pages: usize, values_per_page: usize) -> Result<Self> {
        spec.validate()?;
        if values_per_page == 0 {
            return Err(Error::InvalidCount("values per page must be positive"));
        }
        let mut zero_pages = vec![false; num_pages];
        if spec.kind == DistributionKind::Sparse {
            let k = (spec.sparse_zero_fraction * num_pages as f64).ceil() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(u64::MAX);
            for p in rand::seq::index::sample(&mut rng, num_pages, k.min(num_pages)) {
                zero_pages[p] = true;
            }
        }
        Ok(Self {
            spec,
            num_pages,
            values_per_page,
            zero_pages,
        })
    }

    pub fn num_pages(&self) -> usize {
        self.num_pages
    }

    pub fn values_per_page(&self) -> usize {
        self.values_per_page
    }

    /// Whether page `p` is one of the sparse distribution's constant pages.
    pub fn is_zero_page(&self, p: usize) -> bool {
        self.zero_pages[p]
    }

    /// Inclusive value bounds page `p` draws from.
    pub fn page_bounds(&self, p: usize) -> (u64, u64) {
        let (lo, hi) = (self.spec.lo, self.spec.hi);
        let n = self.num_pages as u128;
        match self.spec.kind {
            DistributionKind::Uniform => (lo, hi),
            DistributionKind::Sparse if self.zero_pages[p] => (lo, lo),
            DistributionKind::Sparse => (lo, hi),
            DistributionKind::Linear => {
                let width = (hi - lo) as u128 + 1;
                let a = lo + (p as u128 * width / n) as u64;
                let b = lo + ((p as u128 + 1) * width / n) as u64;
                (a, b.saturating_sub(1).max(a))
            }
            DistributionKind::Sine => {
                let span = (hi - lo) as f64;
                let center = self.sine_center(p);
                let half = span / self.num_pages as f64 * self.spec.band_factor / 2.0;
                let a = (center - half).max(lo as f64).round() as u64;
                let b = (center + half).min(hi as f64).round() as u64;
                (a.clamp(lo, hi), b.clamp(lo, hi).max(a.clamp(lo, hi)))
            }
        }
    }

    /// Centre of the sine band of page `p`.
    pub fn sine_center(&self, p: usize) -> f64 {
        let period = self.spec.sine_period_pages;
        let phase = 2.0 * PI * (p % period) as f64 / period as f64;
        self.spec.lo as f64 + (self.spec.hi - self.spec.lo) as f64 * (1.0 + phase.sin()) / 2.0
    }

    pub fn fill_page(&self, p: usize, out: &mut [u64]) {
        let (a, b) = self.page_bounds(p);
        if a == b {
            out.fill(a);
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(p as u64);
        for v in out.iter_mut() {
            *v = rng.random_range(a..=b);
        }
    }

    pub fn page(&self, p: usize) -> Vec<u64> {
        let mut out = vec![0; self.values_per_page];
        self.fill_page(p, &mut out);
        out
    }

    /// Every value in row order.
    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.num_pages).flat_map(move |p| self.page(p))
    }
}

/// Creates a column of `num_pages` pages filled per `spec`.
pub fn fill_column(col: &mut PhysicalColumn, spec: DistributionSpec) -> Result<()> {
    let generator = ValueGenerator::new(spec, col.num_pages(), col.values_per_page())?;
    col.fill_pages(|p, out| generator.fill_page(p, out));
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QueryKind {
    /// Widths step geometrically from `width_max` down to `width_min`.
    SteppedShuffled { width_max: u64, width_min: u64 },
    /// Every query selects `selectivity` of the domain width.
    FixedSelectivity { selectivity: f64 },
}

impl QueryKind {
    pub const STEPPED: QueryKind = QueryKind::SteppedShuffled {
        width_max: 50_000_000,
        width_min: 5_000,
    };
}

/// `stepped` or `fixed:<percent>`.
impl FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stepped" {
            return Ok(QueryKind::STEPPED);
        }
        let pct = s
            .strip_prefix("fixed:")
            .and_then(|p| p.trim_end_matches('%').parse::<f64>().ok())
            .ok_or_else(|| {
                Error::Config(format!("bad query kind {s:?} (expected stepped or fixed:<pct>)"))
            })?;
        if !(pct > 0.0 && pct <= 100.0) {
            return Err(Error::Config(format!("selectivity {pct}% outside (0, 100]")));
        }
        Ok(QueryKind::FixedSelectivity {
            selectivity: pct / 100.0,
        })
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryKind::SteppedShuffled { .. } => f.write_str("stepped"),
            QueryKind::FixedSelectivity { selectivity } => write!(f, "fixed:{}", selectivity * 100.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuerySequenceSpec {
    pub kind: QueryKind,
    pub count: usize,
    pub seed: u64,
}

impl QuerySequenceSpec {
    pub fn new(kind: QueryKind, seed: u64) -> Self {
        Self {
            kind,
            count: 250,
            seed,
        }
    }

    /// Query widths (`u - l`) in generation order, before shuffling.
    pub fn widths(&self, lo: u64, hi: u64) -> Vec<u64> {
        let span = hi - lo;
        match self.kind {
            QueryKind::SteppedShuffled {
                width_max,
                width_min,
            } => {
                let (a, b) = (width_max as f64, width_min.max(1) as f64);
                let steps = self.count.saturating_sub(1).max(1) as f64;
                (0..self.count)
                    .map(|i| {
                        let w = a * (b / a).powf(i as f64 / steps);
                        (w.round() as u64).min(span)
                    })
                    .collect()
            }
            QueryKind::FixedSelectivity { selectivity } => {
                let w = ((span as f64) * selectivity).round() as u64;
                vec![w.min(span); self.count]
            }
        }
    }
}

/// Queries over `[lo, hi]`, each placed uniformly inside the domain. Stepped
/// sequences are shuffled afterwards.
pub fn generate_queries(spec: &QuerySequenceSpec, lo: u64, hi: u64) -> Result<Vec<RangeQuery>> {
    if lo > hi {
        return Err(Error::InvalidRange {
            lower: lo,
            upper: hi,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut queries = spec
        .widths(lo, hi)
        .into_iter()
        .map(|w| {
            let l = rng.random_range(lo..=hi - w);
            RangeQuery::new(l, l + w)
        })
        .collect::<Result<Vec<_>>>()?;
    if matches!(spec.kind, QueryKind::SteppedShuffled { .. }) {
        queries.shuffle(&mut rng);
    }
    Ok(queries)
}

/// Data and query parameters of one experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub data: DistributionSpec,
    pub queries: QuerySequenceSpec,
}

impl WorkloadSpec {
    /// Flat `key = value` text, one entry per line.
    pub fn to_config(&self) -> String {
        let d = &self.data;
        let mut out = format!(
            "dist = {}\nlo = {}\nhi = {}\nsine_period = {}\nband_factor = {}\nzero_fraction = {}\nseed = {}\n",
            d.kind, d.lo, d.hi, d.sine_period_pages, d.band_factor, d.sparse_zero_fraction, d.seed
        );
        out += &format!("queries = {}\n", self.queries.kind);
        if let QueryKind::SteppedShuffled {
            width_max,
            width_min,
        } = self.queries.kind
        {
            out += &format!("width_max = {width_max}\nwidth_min = {width_min}\n");
        }
        out += &format!(
            "query_count = {}\nquery_seed = {}\n",
            self.queries.count, self.queries.seed
        );
        out
    }

    /// Parses [`WorkloadSpec::to_config`] output. Missing keys keep their
    /// defaults; `#` starts a comment.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key = value, got {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn take<T: FromStr>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
            kv.remove(key)
                .map(|v| {
                    v.parse()
                        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
                })
                .transpose()
        }
        let kind = take(&mut kv, "dist")?.unwrap_or(DistributionKind::Uniform);
        let seed = take(&mut kv, "seed")?.unwrap_or(0);
        let mut data = DistributionSpec::new(kind, seed);
        if let Some(v) = take(&mut kv, "lo")? {
            data.lo = v;
        }
        if let Some(v) = take(&mut kv, "hi")? {
            data.hi = v;
        }
        if let Some(v) = take(&mut kv, "sine_period")? {
            data.sine_period_pages = v;
        }
        if let Some(v) = take(&mut kv, "band_factor")? {
            data.band_factor = v;
        }
        if let Some(v) = take(&mut kv, "zero_fraction")? {
            data.sparse_zero_fraction = v;
        }
        data.validate()?;

        let mut qkind = match kv.remove("queries") {
            Some(v) => v.parse()?,
            None => QueryKind::STEPPED,
        };
        if let QueryKind::SteppedShuffled {
            width_max,
            width_min,
        } = &mut qkind
        {
            if let Some(v) = take(&mut kv, "width_max")? {
                *width_max = v;
            }
            if let Some(v) = take(&mut kv, "width_min")? {
                *width_min = v;
            }
        }
        let mut queries = QuerySequenceSpec::new(qkind, take(&mut kv, "query_seed")?.unwrap_or(seed));
        if let Some(v) = take(&mut kv, "query_count")? {
            queries.count = v;
        }
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        Ok(Self { data, queries })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::page_mapper::Backend;

    fn spec(kind: DistributionKind) -> DistributionSpec {
        DistributionSpec::new(kind, 42)
    }

    #[test]
    fn sine_repeats_every_period() {
        let g = ValueGenerator::new(spec(DistributionKind::Sine), 1000, 511).unwrap();
        for p in 0..900 {
            assert_eq!(g.sine_center(p), g.sine_center(p + 100));
            assert_eq!(g.page_bounds(p), g.page_bounds(p + 100));
        }
        // per-page means follow the curve within the band
        for p in [0, 13, 25, 50, 75, 99] {
            let page = g.page(p);
            let mean = page.iter().map(|&v| v as f64).sum::<f64>() / page.len() as f64;
            let band = 100_000_000.0 / 1000.0 * 4.0;
            assert!((mean - g.sine_center(p)).abs() <= band / 2.0, "page {p}");
        }
    }

    #[test]
    fn sparse_has_exact_zero_page_count() {
        let g = ValueGenerator::new(spec(DistributionKind::Sparse), 1000, 511).unwrap();
        let zero = (0..1000).filter(|&p| g.page(p).iter().all(|&v| v == 0)).count();
        assert_eq!(zero, 900);
        let g = ValueGenerator::new(spec(DistributionKind::Sparse), 7, 3).unwrap();
        assert_eq!((0..7).filter(|&p| g.is_zero_page(p)).count(), 7);
    }

    #[test]
    fn linear_page_minimums_do_not_decrease() {
        let g = ValueGenerator::new(spec(DistributionKind::Linear), 500, 64).unwrap();
        let mins: Vec<u64> = (0..500).map(|p| *g.page(p).iter().min().unwrap()).collect();
        assert!(mins.windows(2).all(|w| w[0] <= w[1]));
        let means: Vec<f64> = (0..500)
            .map(|p| g.page(p).iter().map(|&v| v as f64).sum::<f64>() / 64.0)
            .collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(g.page_bounds(0).0, 0);
        assert_eq!(g.page_bounds(499).1, 100_000_000);
    }

    #[test]
    fn column_fill_matches_generator() {
        let mut col = PhysicalColumn::create(20, Backend::Sim).unwrap();
        fill_column(&mut col, spec(DistributionKind::Uniform)).unwrap();
        let g = ValueGenerator::new(spec(DistributionKind::Uniform), 20, 511).unwrap();
        assert!(col.values().eq(g.values()));
        assert_eq!(col.page_id(19), 19);
    }

    #[test]
    fn stepped_widths() {
        let q = QuerySequenceSpec::new(QueryKind::STEPPED, 1);
        let w = q.widths(0, 100_000_000);
        assert_eq!(w.len(), 250);
        assert_eq!(w[0], 50_000_000);
        assert_eq!(w[249], 5_000);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let qs = generate_queries(&q, 0, 100_000_000).unwrap();
        let mut got: Vec<u64> = qs.iter().map(|q| q.upper() - q.lower()).collect();
        let mut want = w.clone();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want);
        let in_order: Vec<u64> = qs.iter().map(|q| q.upper() - q.lower()).collect();
        assert_ne!(in_order, w, "sequence is shuffled");
    }

    #[test]
    fn fixed_selectivity_widths() {
        let kind: QueryKind = "fixed:1".parse().unwrap();
        let q = QuerySequenceSpec::new(kind, 3);
        let qs = generate_queries(&q, 0, 1_000_000_000).unwrap();
        assert!(qs.iter().all(|q| q.upper() - q.lower() == 10_000_000));
        assert!("fixed:0".parse::<QueryKind>().is_err());
        assert!("fixed:x".parse::<QueryKind>().is_err());
        assert!("random".parse::<QueryKind>().is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut w = WorkloadSpec {
            data: spec(DistributionKind::Sine),
            queries: QuerySequenceSpec::new(QueryKind::STEPPED, 9),
        };
        w.data.band_factor = 2.5;
        w.queries.count = 10;
        assert_eq!(WorkloadSpec::from_config(&w.to_config()).unwrap(), w);
        w.queries.kind = "fixed:10".parse().unwrap();
        assert_eq!(WorkloadSpec::from_config(&w.to_config()).unwrap(), w);

        let parsed = WorkloadSpec::from_config("# comment\ndist = sparse\n\nseed=5\n").unwrap();
        assert_eq!(parsed.data.kind, DistributionKind::Sparse);
        assert_eq!(parsed.queries.seed, 5);
        assert!(WorkloadSpec::from_config("nonsense = 1").is_err());
        assert!(WorkloadSpec::from_config("lo = 5\nhi = 4").is_err());
        assert!(WorkloadSpec::from_config("dist").is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(DistributionKind::Sine);
        s.sine_period_pages = 0;
        assert!(ValueGenerator::new(s, 10, 10).is_err());
        let mut s = spec(DistributionKind::Sparse);
        s.sparse_zero_fraction = 1.5;
        assert!(ValueGenerator::new(s, 10, 10).is_err());
        assert!(ValueGenerator::new(spec(DistributionKind::Uniform), 10, 0).is_err());
    }

    fn arb_kind() -> impl Strategy<Value = DistributionKind> {
        prop::sample::select(DistributionKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn generation_is_deterministic_and_in_domain(
            kind in arb_kind(),
            seed in any::<u64>(),
            lo in 0u64..1000,
            span in 0u64..1_000_000,
            pages in 1usize..60,
            vpp in 1usize..40,
        ) {
            let mut s = DistributionSpec::new(kind, seed);
            s.lo = lo;
            s.hi = lo + span;
            let a: Vec<u64> = ValueGenerator::new(s, pages, vpp).unwrap().values().collect();
            let b: Vec<u64> = ValueGenerator::new(s, pages, vpp).unwrap().values().collect();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), pages * vpp);
            prop_assert!(a.iter().all(|&v| s.lo <= v && v <= s.hi));
        }

        #[test]
        fn queries_are_deterministic_and_in_domain(seed in any::<u64>(), count in 1usize..300, pct in 1u32..100) {
            for kind in [QueryKind::STEPPED, QueryKind::FixedSelectivity { selectivity: pct as f64 / 100.0 }] {
                let spec = QuerySequenceSpec { kind, count, seed };
                let a = generate_queries(&spec, 0, 100_000_000).unwrap();
                prop_assert_eq!(&a, &generate_queries(&spec, 0, 100_000_000).unwrap());
                prop_assert_eq!(a.len(), count);
                prop_assert!(a.iter().all(|q| q.upper() <= 100_000_000));
            }
        }
    }
}
