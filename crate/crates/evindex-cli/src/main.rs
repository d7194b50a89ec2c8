use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use evindex::directory::{fetch, select, FlagExpr};
use evindex::filestore::{Namespace, PoolConfig};
use evindex::query::parse_query;
use evindex::store::{open_store, StoreSet};
use evindex::tagdb::Federation;

use evindex_cli::dataset::{generate, rebuild_directory, rebuild_tagdb, Dataset, DatasetSpec};
use evindex_cli::report::{emit_report, parse_csv, ReportFormat};
use evindex_cli::scenario::{
    run_scenario_best_of, sweep_query_variables, Scenario, ScenarioResult,
};

/// Event indexing toolkit: generate synthetic event stores, build and
/// query event directories and the tag database, and benchmark the
/// access paths against each other.
#[derive(Parser)]
#[command(name = "evindex", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset: store, directory, tag federation, filestore.
    Generate(GenerateArgs),
    /// Rebuild the event directory text from the store.
    BuildDir {
        #[arg(long)]
        dataset: PathBuf,
        /// Output file (defaults to <dataset>/events.zed).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the tag federation from the store.
    BuildTagdb {
        #[arg(long)]
        dataset: PathBuf,
        /// Database file size cap in bytes (defaults to the spec's).
        #[arg(long)]
        size_cap: Option<u64>,
    },
    /// Select events through the event directory by flag expression.
    Select {
        #[arg(long)]
        dataset: PathBuf,
        /// Flag expression, e.g. "flag(3) and not flag(0)".
        #[arg(long)]
        expr: String,
        /// Read the selected events instead of listing them.
        #[arg(long)]
        fetch: bool,
        /// Scan the directory file with bounded memory instead of
        /// parsing it whole (for very large directories).
        #[arg(long)]
        stream: bool,
        /// Print at most this many lines.
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Query the tag database by value and flag predicates.
    Query(QueryArgs),
    /// Run benchmark scenarios and report their counts and CPU times.
    Bench(BenchArgs),
    /// Re-render a saved CSV results file in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Filestore namespace maintenance.
    Fs(FsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    first_run: Option<u32>,
    #[arg(long)]
    payload_bytes: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    filler_fraction: Option<f64>,
    #[arg(long)]
    filler_size_factor: Option<f64>,
    #[arg(long)]
    et_mean: Option<f64>,
    #[arg(long)]
    size_cap: Option<u64>,
    /// Override one flag probability, e.g. --flag-prob 3=0.44.
    #[arg(long = "flag-prob", value_name = "IDX=P")]
    flag_probs: Vec<String>,
    /// Start from the small profile (5000 events of 5 KB).
    #[arg(long)]
    small: bool,
    /// Replace an existing dataset directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Query text, e.g. "ET_TOTAL > 30 and flag(OFFLINE, 3)".
    #[arg(long)]
    query: Option<String>,
    /// File with one query per line ('#' comments).
    #[arg(long)]
    query_file: Option<PathBuf>,
    /// Read the matching events instead of listing them.
    #[arg(long)]
    fetch: bool,
    /// Export these variables (comma separated) as delimited text.
    #[arg(long)]
    export: Option<String>,
    /// Restrict to an inclusive run range, e.g. 35762:35790.
    #[arg(long)]
    run_range: Option<String>,
    /// Print at most this many hit lines.
    #[arg(long, default_value_t = 20)]
    limit: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Scenario names; see --list.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    /// Run every canned scenario.
    #[arg(long)]
    all: bool,
    /// Query-rate sweep over 0..=6 query variables.
    #[arg(long)]
    sweep_vars: bool,
    /// Query text for tag-query-fetch / tag-query-only.
    #[arg(long)]
    query: Option<String>,
    /// Repetitions per scenario; the fastest run is kept.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
    #[arg(long, default_value = "table")]
    format: String,
    /// Also write the CSV results here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// List the canned scenario names and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct FsArgs {
    /// Namespace manifest file.
    #[arg(long)]
    manifest: PathBuf,
    /// Fast-tier pool directory.
    #[arg(long)]
    pool: PathBuf,
    /// Pool capacity in bytes.
    #[arg(long)]
    capacity: Option<u64>,
    /// Eviction age in days.
    #[arg(long)]
    age_days: Option<f64>,
    /// Artificial staging latency per file, in milliseconds.
    #[arg(long)]
    latency_ms: Option<u64>,
    #[command(subcommand)]
    action: FsAction,
}

#[derive(Subcommand)]
enum FsAction {
    /// Register a name for a slow-tier file.
    Register {
        name: String,
        path: PathBuf,
        #[arg(long)]
        pin: bool,
    },
    /// List registered names.
    List,
    /// Evict unpinned files idle past the eviction age.
    Sweep,
    /// Stage a name into the pool and print its fast path.
    Request { name: String },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::BuildDir { dataset, out } => {
            let target = rebuild_directory(&dataset, out.as_deref())?;
            println!("directory written to {}", target.display());
            Ok(())
        }
        Command::BuildTagdb { dataset, size_cap } => {
            rebuild_tagdb(&dataset, size_cap)?;
            println!(
                "tag federation rebuilt under {}",
                dataset.join("tagdb").display()
            );
            Ok(())
        }
        Command::Select {
            dataset,
            expr,
            fetch: do_fetch,
            stream,
            limit,
        } => cmd_select(&dataset, &expr, do_fetch, stream, limit),
        Command::Query(args) => cmd_query(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let results = parse_csv(&text)?;
            print!("{}", emit_report(&results, ReportFormat::parse(&format)?)?);
            Ok(())
        }
        Command::Fs(args) => cmd_fs(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let mut spec = if args.small {
        DatasetSpec::small()
    } else {
        DatasetSpec::default()
    };
    if let Some(v) = args.events {
        spec.events = v;
    }
    if let Some(v) = args.runs {
        spec.runs = v;
    }
    if let Some(v) = args.first_run {
        spec.first_run = v;
    }
    if let Some(v) = args.payload_bytes {
        spec.payload_bytes = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.filler_fraction {
        spec.filler_fraction = v;
    }
    if let Some(v) = args.filler_size_factor {
        spec.filler_size_factor = v;
    }
    if let Some(v) = args.et_mean {
        spec.et_mean = v;
    }
    if let Some(v) = args.size_cap {
        spec.size_cap = v;
    }
    for kv in &args.flag_probs {
        let (idx, p) = kv
            .split_once('=')
            .with_context(|| format!("--flag-prob wants IDX=P, got {kv:?}"))?;
        let idx: usize = idx.parse().context("bad flag index")?;
        if idx >= 128 {
            bail!("flag index {idx} out of range (0..=127)");
        }
        spec.flag_probs[idx] = p.parse().context("bad flag probability")?;
    }

    if args.out.exists() {
        if !args.force {
            bail!(
                "{} already exists (use --force to replace it)",
                args.out.display()
            );
        }
        std::fs::remove_dir_all(&args.out)?;
    }
    let t0 = std::time::Instant::now();
    generate(&spec, &args.out)?;
    println!(
        "generated {} events across {} runs under {} in {:.1} s",
        spec.events,
        spec.runs,
        args.out.display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_select(
    dataset: &std::path::Path,
    expr: &str,
    do_fetch: bool,
    stream: bool,
    limit: usize,
) -> anyhow::Result<()> {
    let ds = Dataset::load(dataset)?;
    let expr = FlagExpr::parse(expr)?;
    let hits = if stream {
        evindex::directory::select_file(&ds.paths.directory, &expr)?
    } else {
        select(&ds.directory, &expr)
    };
    println!(
        "{} of {} entries match",
        hits.len(),
        ds.directory.entries.len()
    );
    if do_fetch {
        let reader = open_store(&ds.store_path)?;
        let mut bytes = 0u64;
        let mut errors = 0u64;
        for record in fetch(&hits, &reader) {
            match record {
                Ok(r) => bytes += r.payload.len() as u64,
                Err(e) => {
                    errors += 1;
                    eprintln!("fetch: {e}");
                }
            }
        }
        println!("read {bytes} payload bytes, {errors} stale entries");
    } else {
        for e in hits.iter().take(limit) {
            println!("run {:>6} event {:>6} offset {}", e.run, e.event, e.offset);
        }
        if hits.len() > limit {
            println!("... {} more", hits.len() - limit);
        }
    }
    Ok(())
}

fn parse_run_range(text: &str) -> anyhow::Result<(u32, u32)> {
    let (a, b) = text
        .split_once(':')
        .with_context(|| format!("--run-range wants A:B, got {text:?}"))?;
    Ok((a.parse()?, b.parse()?))
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<()> {
    let ds = Dataset::load(&args.dataset)?;
    let schema = ds.federation.schema();
    let run_range = args.run_range.as_deref().map(parse_run_range).transpose()?;

    let queries: Vec<String> = match (&args.query, &args.query_file) {
        (Some(q), None) => vec![q.clone()],
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            evindex::query::parse_query_file(&text, schema)
                .map_err(|(line, e)| anyhow::anyhow!("{} line {line}: {e}", path.display()))?
                .into_iter()
                .map(|(_, ast)| ast.to_string())
                .collect()
        }
        _ => bail!("exactly one of --query or --query-file is required"),
    };

    for query in &queries {
        let ast = parse_query(query, schema)?;
        if let Some(vars) = &args.export {
            let vars: Vec<&str> = vars.split(',').map(str::trim).collect();
            let table = ds.federation.export_columns(&vars, &ast)?;
            let mut stdout = std::io::stdout().lock();
            table.write_delimited(&mut stdout, ',')?;
            continue;
        }
        let (hits, stats) = ds.federation.query_stats(&ast, run_range)?;
        println!(
            "query: {query}\n  scanned {} records, matched {}",
            stats.scanned, stats.matched
        );
        if args.fetch {
            let mut stores = StoreSet::new();
            stores.open(&ds.store_path)?;
            let mut bytes = 0u64;
            let mut errors = 0u64;
            for record in Federation::fetch_events(&hits, &stores) {
                match record {
                    Ok(r) => bytes += r.payload.len() as u64,
                    Err(e) => {
                        errors += 1;
                        eprintln!("fetch: {e}");
                    }
                }
            }
            println!("  read {bytes} payload bytes, {errors} stale hits");
        } else {
            for h in hits.iter().take(args.limit) {
                println!(
                    "  run {:>6} event {:>6} at {}:{}",
                    h.run, h.event, h.location.file_id, h.location.offset
                );
            }
            if hits.len() > args.limit {
                println!("  ... {} more", hits.len() - args.limit);
            }
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.list {
        for name in Scenario::all_names() {
            println!("{name}");
        }
        println!("tag-query-fetch (needs --query)");
        println!("tag-query-only (needs --query)");
        return Ok(());
    }
    let ds = Dataset::load(&args.dataset)?;
    let mut results: Vec<ScenarioResult> = Vec::new();

    let names: Vec<String> = if args.all {
        Scenario::all_names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        args.scenarios.clone()
    };
    for name in &names {
        let scenario = Scenario::from_name(name, &ds.spec, args.query.as_deref())?;
        results.push(run_scenario_best_of(&ds, &scenario, args.repeat)?);
    }
    if args.sweep_vars {
        results.extend(sweep_query_variables(
            &ds,
            args.repeat.max(3),
            std::time::Duration::from_millis(300),
        )?);
    }
    if results.is_empty() {
        bail!("nothing to run: pass --scenario, --all, or --sweep-vars");
    }

    if let Some(out) = &args.out {
        std::fs::write(out, emit_report(&results, ReportFormat::Csv)?)?;
    }
    print!(
        "{}",
        emit_report(&results, ReportFormat::parse(&args.format)?)?
    );
    Ok(())
}

fn cmd_fs(args: FsArgs) -> anyhow::Result<()> {
    let mut config = PoolConfig::default();
    if let Some(cap) = args.capacity {
        config.capacity = cap;
    }
    if let Some(days) = args.age_days {
        config.eviction_age = Duration::from_secs_f64(days * 24.0 * 3600.0);
    }
    if let Some(ms) = args.latency_ms {
        config.stage_latency = Duration::from_millis(ms);
    }

    let mut ns = if args.manifest.exists() {
        Namespace::load(&args.manifest, &args.pool, config)?
    } else {
        Namespace::new(&args.pool, config)?
    };

    match args.action {
        FsAction::Register { name, path, pin } => {
            ns.register(&name, &path, pin)?;
            ns.save(&args.manifest)?;
            println!("registered {name}");
        }
        FsAction::List => {
            let mut stdout = std::io::stdout().lock();
            for name in ns.names() {
                let e = ns.get(name).unwrap();
                writeln!(
                    stdout,
                    "{name}\t{}\tpinned={}\tstaged={}",
                    e.slow_path.display(),
                    e.pinned,
                    e.is_staged()
                )?;
            }
        }
        FsAction::Sweep => {
            let evicted = ns.sweep(std::time::SystemTime::now())?;
            ns.save(&args.manifest)?;
            println!("evicted {} files", evicted.len());
            for name in evicted {
                println!("  {name}");
            }
        }
        FsAction::Request { name } => {
            let path = ns.request(&name)?;
            ns.save(&args.manifest)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
