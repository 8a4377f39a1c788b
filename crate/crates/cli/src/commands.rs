//! Headless subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};

use dse_core::agent::{AutomationOutcome, Mode, Session};
use dse_core::design_space::{CostRange, Mission};
use dse_core::dsdb::{Dsdb, FrontierPoint, Record};
use dse_core::experiment::{ground_truth, render_report, run_matrix, ExperimentSpec};

use crate::config::{build_backend, load_jobspec, load_space, BackendChoice, LlmConfig};

/// Process exit status when the GEN cap forced the session to stop.
pub const EXIT_FORCED: i32 = 2;

#[derive(Debug, Clone, clap::Args)]
pub struct RunAutoArgs {
    /// Design space file (.dse).
    #[arg(long)]
    pub space: PathBuf,
    /// Cost range as LO:HI, in watts.
    #[arg(long)]
    pub range: CostRange,
    /// Simulations per GEN batch (1 to 20).
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    #[arg(long)]
    pub no_rr: bool,
    #[arg(long)]
    pub no_bp: bool,
    #[arg(long, default_value_t = dse_core::agent::DEFAULT_MAX_GENS)]
    pub max_gens: usize,
    #[arg(long, default_value_t = dse_core::agent::DEFAULT_RETRY_LIMIT)]
    pub retry_limit: usize,
    /// mock:SCRIPT or http:MODEL@BASE_URL (key read from $DSE_LLM_API_KEY).
    #[arg(long)]
    pub llm: String,
    #[arg(long, value_enum, default_value_t = BackendChoice::Synthetic)]
    pub backend: BackendChoice,
    /// gem5 job spec (TOML), required by the gem5 backend.
    #[arg(long)]
    pub jobspec: Option<PathBuf>,
    /// DSDB file; results are appended to it. Required by dsdb-replay.
    #[arg(long)]
    pub dsdb: Option<PathBuf>,
    /// Output directory for transcript.json and final_point.json.
    #[arg(long)]
    pub out: PathBuf,
}

fn open_dsdb(path: Option<&Path>) -> Result<Arc<Dsdb>> {
    Ok(Arc::new(match path {
        Some(p) => Dsdb::open(p).with_context(|| format!("opening DSDB {}", p.display()))?,
        None => Dsdb::in_memory(),
    }))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Runs one automation session. Returns the process exit status.
pub fn run_auto(args: &RunAutoArgs) -> Result<i32> {
    let space = load_space(&args.space)?;
    let mission = Mission::new(args.range, args.concurrency)?.with_strategies(!args.no_rr, !args.no_bp);
    let client = LlmConfig::from_flag(&args.llm)?.client()?;
    let dsdb = open_dsdb(args.dsdb.as_deref())?;
    let jobspec = args.jobspec.as_deref().map(load_jobspec).transpose()?;
    let backend = build_backend(args.backend, &space, &dsdb, jobspec.as_ref())?;

    let mut session = Session::new(mission, space)
        .with_retry_limit(args.retry_limit)
        .with_mode(Mode::Automation);
    let outcome = session.run_automation(client.as_ref(), backend.as_ref(), &dsdb, args.max_gens);

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("transcript.json"), &session.transcript())?;
    let outcome = outcome?;
    let (point, code) = match &outcome {
        AutomationOutcome::Exited(p) => (p, 0),
        AutomationOutcome::ForcedExit(p) => (p, EXIT_FORCED),
        AutomationOutcome::Paused => unreachable!("mode never leaves automation here"),
    };
    write_json(&args.out.join("final_point.json"), &Record::from(point))?;
    let in_range = session.mission().range.contains(point.cost());
    println!(
        "{} after {} GENs ({} simulations): perf {} cost {} {} {}",
        if code == 0 { "exited" } else { "forced exit" },
        session.gen_count(),
        session.sims_run(),
        point.perf(),
        point.cost(),
        if in_range { "in" } else { "outside" },
        session.mission().range,
    );
    Ok(code)
}

pub fn run_experiment(spec_path: &Path, out: &Path) -> Result<usize> {
    let spec = ExperimentSpec::load(spec_path)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let rows = run_matrix(&spec, base)?;
    let report = render_report(&rows);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("report.txt"), &report.table)?;
    std::fs::write(out.join("rows.jsonl"), &report.records)?;
    print!("{}", report.table);
    Ok(rows.len())
}

/// Frontier of the whole DSDB, restricted to points whose cost is in
/// `range` when one is given. Ascending by cost.
pub fn frontier_points(db: &Dsdb, range: Option<CostRange>) -> Vec<FrontierPoint> {
    db.frontier()
        .into_iter()
        .filter(|f| range.is_none_or(|r| r.contains(f.cost)))
        .collect()
}

/// Opens a DSDB that must already exist.
fn open_existing(dsdb: &Path) -> Result<Dsdb> {
    if !dsdb.is_file() {
        anyhow::bail!("DSDB {} does not exist", dsdb.display());
    }
    Dsdb::open(dsdb).with_context(|| format!("opening DSDB {}", dsdb.display()))
}

pub fn frontier(dsdb: &Path, range: Option<CostRange>, out: &mut impl Write) -> Result<usize> {
    let db = open_existing(dsdb)?;
    let points = frontier_points(&db, range);
    for p in &points {
        writeln!(out, "{}\t{}\t{}", p.cost, p.perf, p.key)?;
    }
    Ok(points.len())
}

pub fn populate(space: &Path, dsdb: &Path) -> Result<usize> {
    let space = load_space(space)?;
    let db = Dsdb::open(dsdb).with_context(|| format!("opening DSDB {}", dsdb.display()))?;
    let points = ground_truth(&space)?;
    let n = points.len();
    db.put_all(points)?;
    Ok(n)
}

pub fn export_dsdb(dsdb: &Path, out: &Path) -> Result<usize> {
    let db = open_existing(dsdb)?;
    Ok(db.export(out)?)
}

pub fn import_dsdb(dsdb: &Path, from: &Path) -> Result<usize> {
    let db = Dsdb::open(dsdb).with_context(|| format!("opening DSDB {}", dsdb.display()))?;
    Ok(db.import(from)?)
}
