use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adaptive_views::bench::compare::{compare_outcomes, read_query_rows, select_strategy};
use adaptive_views::bench::{default_max_views, run_scenario, BenchConfig, Scenario};
use adaptive_views::page_mapper::Backend;
use adaptive_views::view_index::RoutingMode;
use adaptive_views::views::ValueRange;
use adaptive_views::workload::{DistributionKind, QueryKind, WorkloadSpec};
use adaptive_views::Error;

#[derive(Parser)]
#[command(name = "adaptive-views", version, about = "Adaptive virtual-view benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and emit CSV rows.
    Run(RunArgs),
    /// Compare an adaptive run against a full-scan run.
    Compare {
        adaptive: PathBuf,
        full_scan: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// explicit-vs-virtual, adaptive-single, adaptive-multi, view-creation or updates
    scenario: Scenario,
    #[arg(long, default_value_t = 10_000)]
    pages: usize,
    #[arg(long)]
    max_views: Option<usize>,
    #[arg(long, default_value_t = 0)]
    discard_tolerance: usize,
    #[arg(long, default_value_t = 0)]
    replace_tolerance: usize,
    /// single or multi
    #[arg(long)]
    mode: Option<RoutingMode>,
    /// uniform, linear, sine or sparse
    #[arg(long)]
    dist: Option<DistributionKind>,
    /// stepped or fixed:<pct>
    #[arg(long)]
    queries: Option<QueryKind>,
    #[arg(long, default_value = "sim")]
    backend: Backend,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// CSV destination; stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Workload file of key = value lines; flags given explicitly win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Update batch sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    /// View range for view-creation, as <lower>:<upper>.
    #[arg(long, value_parser = parse_range)]
    view_range: Option<ValueRange>,
    #[arg(long)]
    no_coalesce: bool,
    #[arg(long)]
    sync_mapper: bool,
    /// Skip the full-scan self-check even on small columns.
    #[arg(long)]
    no_check: bool,
}

fn parse_range(s: &str) -> Result<ValueRange, String> {
    let (l, u) = s.split_once(':').ok_or("expected <lower>:<upper>")?;
    let l = l.parse().map_err(|e| format!("{e}"))?;
    let u = u.parse().map_err(|e| format!("{e}"))?;
    ValueRange::new(l, u).map_err(|e| e.to_string())
}

fn build_config(a: &RunArgs) -> Result<BenchConfig, Error> {
    let mut cfg = BenchConfig::new(a.scenario, a.pages, a.seed);
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path)?;
        let w = WorkloadSpec::from_config(&text)?;
        cfg.set_distribution(w.data.kind);
        cfg.data = w.data;
        cfg.queries = w.queries;
    }
    if let Some(kind) = a.dist {
        cfg.set_distribution(kind);
    }
    if let Some(q) = a.queries {
        cfg.queries.kind = q;
    }
    if let Some(m) = a.mode {
        cfg.index.mode = m;
    }
    cfg.index.max_views = a
        .max_views
        .unwrap_or_else(|| default_max_views(cfg.index.mode, cfg.queries.kind));
    cfg.index.discard_tolerance = a.discard_tolerance;
    cfg.index.replace_tolerance = a.replace_tolerance;
    cfg.backend = a.backend;
    cfg.reps = a.reps;
    cfg.engine.coalesce = !a.no_coalesce;
    cfg.engine.async_mapper = !a.sync_mapper;
    if let Some(b) = &a.batch_sizes {
        cfg.batch_sizes = b.clone();
    }
    cfg.view_range = a.view_range;
    if a.no_check {
        cfg.self_check = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs) -> Result<(), Error> {
    let cfg = build_config(a)?;
    let summary = match &a.out {
        Some(path) => run_scenario(&cfg, BufWriter::new(File::create(path)?))?,
        None => run_scenario(&cfg, io::stdout().lock())?,
    };
    eprint!("{summary}");
    Ok(())
}

fn compare(adaptive: &Path, full: &Path) -> Result<(), Error> {
    let a = select_strategy(read_query_rows(adaptive)?, "adaptive");
    let f = select_strategy(read_query_rows(full)?, "full_scan");
    print!("{}", compare_outcomes(&a, &f)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a),
        Command::Compare {
            adaptive,
            full_scan,
        } => compare(adaptive, full_scan),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::CorrectnessFailure(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
