//! `decaymap`: run the mining pipeline against an on-disk workspace.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use decaymap_core::graph::{LayerWeights, DEFAULT_MAX_FILES_PER_DIFF};
use decaymap_core::ingest::{DEFAULT_FLOOR_MINUTES, DEFAULT_GAP_MINUTES};
use decaymap_core::prioritizer::{
    Filter, TableFormat, DEFAULT_COCHANGE_THRESHOLD, DEFAULT_SNAPSHOTS, DEFAULT_WINDOW_DAYS,
};
use decaymap_core::synthgen::{generate, ScenarioSpec};
use decaymap_core::workspace::{self, Workspace};

/// Exit code when a report was produced but some hypotheses could not be evaluated.
const EXIT_WARNINGS: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "decaymap",
    version,
    about = "Find and evaluate code-improvement targets in a commit history"
)]
struct Cli {
    /// Workspace directory holding all artifacts.
    #[arg(long, global = true, env = "DECAYMAP_WORKSPACE", default_value = ".decaymap")]
    workspace: PathBuf,

    /// Accept stale prerequisite artifacts instead of refusing to run.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a commit log, resolve renames and sessionize author activity.
    Ingest(IngestArgs),
    /// Build the dependency, co-change and authorship layers.
    Graph(GraphArgs),
    /// Score files and authors with Katz centrality and PageRank.
    Centrality(CentralityArgs),
    /// Measure SLOC and cyclomatic complexity of a source tree.
    Metrics(MetricsArgs),
    /// Assemble, filter and sort the per-file prioritization table.
    Rank(RankArgs),
    /// Label commit titles with improvement categories.
    Classify(ClassifyArgs),
    /// Evaluate an intervention against matched controls.
    Impact(ImpactArgs),
    /// Write a synthetic repository with a planted intervention.
    DemoGen(DemoGenArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Commit log in JSON Lines format.
    log: PathBuf,
    /// CSV of authors with their departure timestamps.
    #[arg(long)]
    roster: Option<PathBuf>,
    /// CSV of commits that triggered outages.
    #[arg(long)]
    outages: Option<PathBuf>,
    /// Abort when more than this percentage of lines is malformed.
    #[arg(long, default_value_t = 10.0)]
    max_malformed_pct: f64,
    /// Inactivity gap in minutes that ends a session.
    #[arg(long, default_value_t = DEFAULT_GAP_MINUTES)]
    gap_minutes: f64,
    /// Minutes added to every diff's authoring time.
    #[arg(long, default_value_t = DEFAULT_FLOOR_MINUTES)]
    floor_minutes: f64,
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Trailing window in days, ending at the last commit.
    #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
    window: i64,
    /// Diffs touching more files are left out of the co-change layer.
    #[arg(long, default_value_t = DEFAULT_MAX_FILES_PER_DIFF)]
    max_files_per_diff: usize,
    /// CSV of `src,dst` file dependencies.
    #[arg(long, conflicts_with = "import_root")]
    deps: Option<PathBuf>,
    /// Source tree scanned for imports when no dependency CSV is given.
    #[arg(long)]
    import_root: Option<PathBuf>,
    /// Multiplier of the dependency layer.
    #[arg(long, default_value_t = 1.0)]
    dependency_weight: f64,
    /// Multiplier of the co-change layer.
    #[arg(long, default_value_t = 1.0)]
    cochange_weight: f64,
    /// Multiplier of the authorship layer.
    #[arg(long, default_value_t = 1.0)]
    authorship_weight: f64,
    /// Combine raw layer weights without scaling each layer to unit maximum.
    #[arg(long)]
    raw_layers: bool,
}

#[derive(Debug, Args)]
struct CentralityArgs {
    /// Katz attenuation as a fraction of the inverse spectral radius.
    #[arg(long, default_value_t = 0.5)]
    alpha_frac: f64,
    /// PageRank damping factor.
    #[arg(long, default_value_t = 0.85)]
    damping: f64,
    /// Number of cumulative snapshots used for the trend columns.
    #[arg(long, default_value_t = DEFAULT_SNAPSHOTS)]
    snapshots: usize,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Root of the source tree.
    source: PathBuf,
    /// CSV adding or overriding language definitions.
    #[arg(long)]
    language_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Column to sort by, descending.
    #[arg(long, default_value = "katz")]
    sort: String,
    /// Row filter such as `nDiff2Y>=5`; repeatable.
    #[arg(long = "filter")]
    filters: Vec<Filter>,
    /// Co-change fraction above which a file counts as a frequent partner.
    #[arg(long, default_value_t = DEFAULT_COCHANGE_THRESHOLD)]
    cochange_threshold: f64,
    /// Output format: csv or json.
    #[arg(long, default_value = "csv")]
    format: TableFormat,
    /// Also write the ranked table here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rows printed to stdout.
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// CSV of `category,regex` patterns replacing the defaults.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImpactArgs {
    /// Intervention spec in JSON.
    spec: PathBuf,
    /// Comma-separated SLOC stratum edges; defaults to powers of 4.
    #[arg(long, value_delimiter = ',')]
    strata: Vec<u64>,
    /// Source tree before the intervention.
    #[arg(long)]
    pre_source: Option<PathBuf>,
    /// Source tree after the intervention.
    #[arg(long)]
    post_source: Option<PathBuf>,
    /// CSV adding or overriding language definitions.
    #[arg(long)]
    language_config: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemoGenArgs {
    /// Scenario spec in JSON; omitted fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_caveats(caveats: &[String]) {
    for c in caveats {
        eprintln!("note: {c}");
    }
}

fn demo_gen(args: &DemoGenArgs) -> Result<()> {
    let mut spec: ScenarioSpec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let repo = generate(&spec)?;
    repo.write_to(&args.out)?;
    // The effective spec, seed included, so the corpus can be regenerated.
    write_json(&args.out.join("scenario.json"), &spec)?;
    println!(
        "wrote {} commits over {} files to {}",
        repo.commits.len(),
        repo.source_post.len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    if let Command::DemoGen(args) = &cli.command {
        demo_gen(args)?;
        return Ok(0);
    }
    let mut ws = Workspace::open(&cli.workspace, cli.force)?;
    match cli.command {
        Command::Ingest(a) => {
            let s = workspace::ingest(
                &mut ws,
                &a.log,
                a.roster.as_deref(),
                a.outages.as_deref(),
                &workspace::IngestOptions {
                    max_malformed_pct: a.max_malformed_pct,
                    gap_minutes: a.gap_minutes,
                    floor_minutes: a.floor_minutes,
                },
            )?;
            println!(
                "ingested {} commits, {} file identities, {} outage triggers",
                s.records, s.identities, s.outages
            );
            print_caveats(&s.caveats);
        }
        Command::Graph(a) => {
            let g = workspace::graph(
                &mut ws,
                &workspace::GraphOptions {
                    window_days: a.window,
                    max_files_per_diff: a.max_files_per_diff,
                    dependencies: a.deps,
                    import_root: a.import_root,
                    multipliers: LayerWeights {
                        dependency: a.dependency_weight,
                        cochange: a.cochange_weight,
                        authorship: a.authorship_weight,
                    },
                    normalize_layers: !a.raw_layers,
                },
            )?;
            println!(
                "graph over [{}, {}): {} dependency edges, {} co-change pairs, {} authorship edges",
                g.window.start,
                g.window.end,
                g.dependency.edges.len(),
                g.cochange.weights.len(),
                g.authorship.weights.len()
            );
        }
        Command::Centrality(a) => {
            let s = workspace::centrality(
                &mut ws,
                &workspace::CentralityOptions {
                    alpha_frac: a.alpha_frac,
                    damping: a.damping,
                    snapshots: a.snapshots,
                },
            )?;
            println!(
                "scored {} files and {} authors (katz alpha {:.4e})",
                s.scores.full.file_katz.len(),
                s.scores.full.author_katz.len(),
                s.scores.full.alpha
            );
        }
        Command::Metrics(a) => {
            let m = workspace::metrics(&mut ws, &a.source, a.language_config.as_deref())?;
            println!("measured {} files", m.by_identity.len());
        }
        Command::Rank(a) => {
            let out = workspace::rank(
                &mut ws,
                &workspace::RankOptions {
                    sort_key: a.sort.clone(),
                    filters: a.filters,
                    cochange_threshold: a.cochange_threshold,
                    format: a.format,
                    out: a.out,
                },
            )?;
            let mut text = format!("{} rows ranked by {}\n", out.rows.len(), a.sort);
            for (i, r) in out.rows.iter().take(a.top).enumerate() {
                text.push_str(&format!("{:>4}  {:.6}  {}\n", i + 1, r.katz, r.current_path));
            }
            emit(&text)?;
            print_caveats(&out.caveats);
        }
        Command::Classify(a) => {
            let report = workspace::classify(&mut ws, a.patterns.as_deref())?;
            if let Some(out) = &a.out {
                write_json(out, &report)?;
            }
            emit(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Command::Impact(a) => {
            let run = workspace::impact(
                &mut ws,
                &a.spec,
                &workspace::ImpactOptions {
                    strata: a.strata,
                    pre_source: a.pre_source,
                    post_source: a.post_source,
                    language_config: a.language_config,
                },
            )?;
            if let Some(out) = &a.out {
                write_json(out, &run)?;
            }
            emit(&run.report.to_table())?;
            if run.report.has_warnings() {
                eprintln!("warning: some hypotheses could not be evaluated");
                return Ok(EXIT_WARNINGS);
            }
        }
        Command::DemoGen(_) => unreachable!("handled above"),
    }
    Ok(0)
}

/// Writes to stdout, treating a reader that hung up early (`| head`) as success.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
