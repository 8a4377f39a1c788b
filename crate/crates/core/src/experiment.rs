//! Method × cost range × ablation experiment matrix and its reports.
//!
//! An experiment file (TOML) names the design space, the cost ranges, the
//! seeds and the methods. Co-Pilot cells are driven by scripted replies
//! located through a path template, so every row is reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AutomationOutcome, Mode, ScriptedClient, Session, DEFAULT_MAX_GENS, DEFAULT_RETRY_LIMIT};
use crate::baselines::{genetic_search, random_search, GaConfig, RsConfig, SearchTrace};
use crate::design_space::{parse_space, CostRange, DesignSpace, Mission, SpaceError};
use crate::dsdb::{best_under_cost, ratio_to, DesignPoint, Dsdb, DsdbError, REALISTIC_RATIO};
use crate::evaluator::{synthetic_eval, DsdbReplay, EvaluatorBackend, SyntheticBackend};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("malformed experiment file: {0}")]
    Spec(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Dsdb(#[from] DsdbError),
    #[error("ground truth: {0}")]
    Truth(String),
}

/// Prompt-strategy toggles of one Co-Pilot configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub rr: bool,
    pub bp: bool,
}

impl AblationFlags {
    pub const FULL: Self = AblationFlags { rr: true, bp: true };

    /// Identifier used in files and path templates.
    pub fn id(self) -> &'static str {
        match (self.rr, self.bp) {
            (true, true) => "full",
            (false, true) => "no-rr",
            (true, false) => "no-bp",
            (false, false) => "no-rr-no-bp",
        }
    }

    /// Row label suffix in rendered tables.
    pub fn label(self) -> &'static str {
        match (self.rr, self.bp) {
            (true, true) => "",
            (false, true) => "No RR",
            (true, false) => "No BP",
            (false, false) => "No RR+No BP",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Some(match id {
            "full" => AblationFlags { rr: true, bp: true },
            "no-rr" => AblationFlags { rr: false, bp: true },
            "no-bp" => AblationFlags { rr: true, bp: false },
            "no-rr-no-bp" | "neither" => AblationFlags { rr: false, bp: false },
            _ => return None,
        })
    }
}

impl Serialize for Ablation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.id())
    }
}

impl<'de> Deserialize<'de> for Ablation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let id = String::deserialize(d)?;
        AblationFlags::from_id(&id)
            .map(Ablation)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown ablation `{id}`")))
    }
}

/// [`AblationFlags`] in its textual file form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation(pub AblationFlags);

fn default_ablations() -> Vec<Ablation> {
    vec![Ablation(AblationFlags::FULL)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Rs {
        #[serde(default = "default_target")]
        target_ratio: f64,
        #[serde(default = "default_max_evals")]
        max_evals: usize,
    },
    Ga {
        #[serde(default, flatten)]
        config: GaParams,
    },
    Copilot {
        concurrency: usize,
        #[serde(default = "default_ablations")]
        ablations: Vec<Ablation>,
        /// Relative to the experiment file. Placeholders: `{concurrency}`,
        /// `{ablation}`, `{range}` (as `LO-HI`), `{repeat}` (1-based).
        scripts: String,
    },
}

/// GA hyperparameters as they appear in the experiment file; the seed
/// comes from the repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        let d = GaConfig::default();
        GaParams {
            population: d.population,
            generations: d.generations,
            crossover_rate: d.crossover_rate,
            mutation_rate: d.mutation_rate,
            tournament_size: d.tournament_size,
            elite_count: d.elite_count,
        }
    }
}

impl GaParams {
    fn with_seed(&self, seed: u64) -> GaConfig {
        GaConfig {
            population: self.population,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            tournament_size: self.tournament_size,
            elite_count: self.elite_count,
            seed,
        }
    }
}

fn default_target() -> f64 {
    REALISTIC_RATIO
}

fn default_max_evals() -> usize {
    10_000
}

fn default_repeats() -> usize {
    3
}

fn default_max_gens() -> usize {
    DEFAULT_MAX_GENS
}

fn default_retry_limit() -> usize {
    DEFAULT_RETRY_LIMIT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    DsdbReplay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// `.dse` file, relative to the experiment file.
    pub space: PathBuf,
    /// Ground-truth DSDB. Without it the space is enumerated through the
    /// synthetic model.
    #[serde(default)]
    pub dsdb: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendKind,
    pub ranges: Vec<CostRange>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_gens")]
    pub max_gens: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: usize,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        if spec.repeats == 0 {
            return Err(ExperimentError::Spec("repeats must be at least 1".into()));
        }
        if spec.seeds.is_empty() {
            spec.seeds = (1..=spec.repeats as u64).collect();
        }
        if spec.seeds.len() != spec.repeats {
            return Err(ExperimentError::Spec(format!(
                "{} seeds given for {} repeats",
                spec.seeds.len(),
                spec.repeats
            )));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::parse(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|e| ExperimentError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Rs,
    Ga,
    Copilot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: String,
    pub kind: MethodKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<String>,
    pub cost_lo: f64,
    pub cost_hi: f64,
    pub perf_ratio: f64,
    pub n_gens: usize,
    pub concurrency: usize,
    pub nsims: usize,
    pub repeats: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentRow {
    pub fn range(&self) -> CostRange {
        CostRange::new(self.cost_lo, self.cost_hi).expect("rows are built from valid ranges")
    }

    /// Row label in the rendered table.
    pub fn label(&self) -> String {
        match self.ablation.as_deref().and_then(AblationFlags::from_id) {
            Some(f) if !f.label().is_empty() => format!("{} {}", self.method, f.label()),
            _ => self.method.clone(),
        }
    }
}

/// Counters of one repeat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub perf_ratio: f64,
    pub n_gens: usize,
    pub nsims: usize,
    pub converged: bool,
}

impl RunOutcome {
    fn failed(n_gens: usize, nsims: usize) -> Self {
        RunOutcome {
            perf_ratio: 0.0,
            n_gens,
            nsims,
            converged: false,
        }
    }
}

/// Best of the repeats: highest perf_ratio, then fewest simulations, then
/// earliest. Errors only win when every repeat failed.
pub fn select_best(runs: &[Result<RunOutcome, String>]) -> Result<RunOutcome, String> {
    let mut best: Option<RunOutcome> = None;
    for r in runs.iter().flatten() {
        let better = match &best {
            None => true,
            Some(b) => r.perf_ratio > b.perf_ratio || (r.perf_ratio == b.perf_ratio && r.nsims < b.nsims),
        };
        if better {
            best = Some(*r);
        }
    }
    best.ok_or_else(|| {
        runs.iter()
            .filter_map(|r| r.as_ref().err())
            .last()
            .cloned()
            .unwrap_or_else(|| "no repeats".into())
    })
}

/// Everything a cell needs besides its own method parameters.
pub struct Context<'a> {
    pub space: &'a DesignSpace,
    pub backend: &'a dyn EvaluatorBackend,
    pub truth: &'a [DesignPoint],
    pub base_dir: &'a Path,
    pub max_gens: usize,
    pub retry_limit: usize,
}

/// P_Constraint_P perf for `range`.
fn target_perf(truth: &[DesignPoint], range: CostRange) -> Result<f64, String> {
    best_under_cost(truth, range)
        .first()
        .map(DesignPoint::perf)
        .ok_or_else(|| format!("no ground-truth design point has cost in {range}"))
}

fn trace_outcome(trace: &SearchTrace, target: f64, n_gens: usize, needs_target: Option<f64>) -> RunOutcome {
    let Some(best) = &trace.best else {
        return RunOutcome::failed(n_gens, trace.nsims);
    };
    let ratio = ratio_to(best.result.perf, target);
    if needs_target.is_some_and(|t| ratio <= t) {
        return RunOutcome::failed(n_gens, trace.nsims);
    }
    RunOutcome {
        perf_ratio: ratio,
        n_gens,
        nsims: trace.nsims,
        converged: true,
    }
}

pub fn range_label(range: CostRange) -> String {
    format!("{}-{}", range.lo(), range.hi())
}

pub fn script_path(
    base: &Path,
    template: &str,
    concurrency: usize,
    flags: AblationFlags,
    range: CostRange,
    repeat: usize,
) -> PathBuf {
    base.join(
        template
            .replace("{concurrency}", &concurrency.to_string())
            .replace("{ablation}", flags.id())
            .replace("{range}", &range_label(range))
            .replace("{repeat}", &repeat.to_string()),
    )
}

fn copilot_run(
    ctx: &Context<'_>,
    range: CostRange,
    concurrency: usize,
    flags: AblationFlags,
    script: &Path,
    target: f64,
) -> Result<RunOutcome, String> {
    let client = ScriptedClient::from_file(script).map_err(|e| e.to_string())?;
    let mission = Mission::new(range, concurrency)
        .map_err(|e| e.to_string())?
        .with_strategies(flags.rr, flags.bp);
    let mut session = Session::new(mission, ctx.space.clone())
        .with_retry_limit(ctx.retry_limit)
        .with_mode(Mode::Automation);
    let scratch = Dsdb::in_memory();
    let outcome = session
        .run_automation(&client, ctx.backend, &scratch, ctx.max_gens)
        .map_err(|e| e.to_string())?;
    let n_gens = session.gen_count();
    let nsims = n_gens * concurrency;
    Ok(match outcome {
        AutomationOutcome::Exited(p) if range.contains(p.cost()) => RunOutcome {
            perf_ratio: ratio_to(p.perf(), target),
            n_gens,
            nsims,
            converged: true,
        },
        _ => RunOutcome::failed(n_gens, nsims),
    })
}

/// One cell, before repeats are collapsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Rs { target_ratio: f64, max_evals: usize },
    Ga(GaParams),
    Copilot { concurrency: usize, flags: AblationFlags, scripts: String },
}

impl Cell {
    fn kind(&self) -> MethodKind {
        match self {
            Cell::Rs { .. } => MethodKind::Rs,
            Cell::Ga(_) => MethodKind::Ga,
            Cell::Copilot { .. } => MethodKind::Copilot,
        }
    }

    fn method_name(&self) -> String {
        match self {
            Cell::Rs { .. } => "RS".into(),
            Cell::Ga(_) => "GA".into(),
            Cell::Copilot { concurrency, .. } => format!("C-P-{concurrency}"),
        }
    }
}

/// Runs one cell `seeds.len()` times and keeps the best repeat.
pub fn run_cell(ctx: &Context<'_>, cell: &Cell, range: CostRange, seeds: &[u64]) -> ExperimentRow {
    let target = target_perf(ctx.truth, range);
    let runs: Vec<Result<RunOutcome, String>> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let target = target.clone()?;
            match cell {
                Cell::Rs { target_ratio, max_evals } => {
                    let cfg = RsConfig {
                        target_ratio: *target_ratio,
                        max_evals: *max_evals,
                        seed,
                    };
                    let trace = random_search(ctx.space, ctx.backend, range, ctx.truth, &cfg)
                        .map_err(|e| e.to_string())?;
                    Ok(trace_outcome(&trace, target, 0, Some(*target_ratio)))
                }
                Cell::Ga(params) => {
                    let cfg = params.with_seed(seed);
                    let trace = genetic_search(ctx.space, ctx.backend, range, &cfg)
                        .map_err(|e| e.to_string())?;
                    Ok(trace_outcome(&trace, target, cfg.generations, None))
                }
                Cell::Copilot {
                    concurrency,
                    flags,
                    scripts,
                } => {
                    let path = script_path(ctx.base_dir, scripts, *concurrency, *flags, range, i + 1);
                    copilot_run(ctx, range, *concurrency, *flags, &path, target)
                }
            }
        })
        .collect();

    let (concurrency, ablation) = match cell {
        Cell::Copilot {
            concurrency, flags, ..
        } => (*concurrency, Some(flags.id().to_string())),
        _ => (1, None),
    };
    let mut row = ExperimentRow {
        method: cell.method_name(),
        kind: cell.kind(),
        ablation,
        cost_lo: range.lo(),
        cost_hi: range.hi(),
        perf_ratio: 0.0,
        n_gens: 0,
        concurrency,
        nsims: 0,
        repeats: seeds.len(),
        converged: false,
        error: None,
    };
    match select_best(&runs) {
        Ok(best) => {
            row.perf_ratio = if best.converged { best.perf_ratio } else { 0.0 };
            row.n_gens = best.n_gens;
            row.nsims = best.nsims;
            row.converged = best.converged;
        }
        Err(e) => row.error = Some(e),
    }
    row
}

/// Loaded ground truth plus the backend the methods evaluate against.
pub struct Harness {
    pub space: DesignSpace,
    pub truth: Vec<DesignPoint>,
    pub backend: Box<dyn EvaluatorBackend>,
}

impl Harness {
    pub fn load(spec: &ExperimentSpec, base_dir: &Path) -> Result<Self, ExperimentError> {
        let space = parse_space(&read(&base_dir.join(&spec.space))?)?;
        let db = match &spec.dsdb {
            Some(p) => Arc::new(Dsdb::open(base_dir.join(p))?),
            None => {
                let db = Dsdb::in_memory();
                db.put_all(ground_truth(&space)?)?;
                Arc::new(db)
            }
        };
        let truth = db.snapshot();
        let backend: Box<dyn EvaluatorBackend> = match spec.backend {
            BackendKind::Synthetic => Box::new(SyntheticBackend::new(space.clone())),
            BackendKind::DsdbReplay => Box::new(DsdbReplay::new(db)),
        };
        Ok(Harness {
            space,
            truth,
            backend,
        })
    }
}

/// Every configuration of `space` through the synthetic model, with a
/// fixed timestamp so repeated builds are identical.
pub fn ground_truth(space: &DesignSpace) -> Result<Vec<DesignPoint>, ExperimentError> {
    space
        .enumerate()
        .map(|set| {
            let r = synthetic_eval(&set).map_err(|e| ExperimentError::Truth(e.to_string()))?;
            Ok(DesignPoint::at(set, r, chrono::DateTime::UNIX_EPOCH))
        })
        .collect()
}

/// Expands an experiment into cells: methods in order, then ablations, then
/// ranges.
pub fn cells(spec: &ExperimentSpec) -> Vec<(Cell, CostRange)> {
    let mut out = Vec::new();
    for m in &spec.methods {
        let variants: Vec<Cell> = match m {
            MethodSpec::Rs {
                target_ratio,
                max_evals,
            } => vec![Cell::Rs {
                target_ratio: *target_ratio,
                max_evals: *max_evals,
            }],
            MethodSpec::Ga { config } => vec![Cell::Ga(config.clone())],
            MethodSpec::Copilot {
                concurrency,
                ablations,
                scripts,
            } => ablations
                .iter()
                .map(|a| Cell::Copilot {
                    concurrency: *concurrency,
                    flags: a.0,
                    scripts: scripts.clone(),
                })
                .collect(),
        };
        for cell in variants {
            for &r in &spec.ranges {
                out.push((cell.clone(), r));
            }
        }
    }
    out
}

/// Runs every cell of the experiment in spec order.
pub fn run_matrix(spec: &ExperimentSpec, base_dir: &Path) -> Result<Vec<ExperimentRow>, ExperimentError> {
    let harness = Harness::load(spec, base_dir)?;
    let ctx = Context {
        space: &harness.space,
        backend: harness.backend.as_ref(),
        truth: &harness.truth,
        base_dir,
        max_gens: spec.max_gens,
        retry_limit: spec.retry_limit,
    };
    Ok(cells(spec)
        .iter()
        .map(|(cell, range)| run_cell(&ctx, cell, *range, &spec.seeds))
        .collect())
}

/// `ratio (nGENs×conc)` for Co-Pilot, `ratio (nsims)` for baselines and
/// `0.000 (∞)` for rows that never converged.
pub fn render_cell(row: &ExperimentRow) -> String {
    if !row.converged {
        return "0.000 (∞)".into();
    }
    match row.kind {
        MethodKind::Copilot => format!("{:.3} ({}×{})", row.perf_ratio, row.n_gens, row.concurrency),
        _ => format!("{:.3} ({})", row.perf_ratio, row.nsims),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Aligned table: one line per method/ablation, one column per range.
    pub table: String,
    /// One JSON object per row, newline separated.
    pub records: String,
}

pub fn render_report(rows: &[ExperimentRow]) -> Report {
    let mut ranges: Vec<CostRange> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), String> = BTreeMap::new();
    for row in rows {
        let r = row.range();
        let ci = ranges.iter().position(|x| *x == r).unwrap_or_else(|| {
            ranges.push(r);
            ranges.len() - 1
        });
        let label = row.label();
        let li = labels.iter().position(|x| *x == label).unwrap_or_else(|| {
            labels.push(label);
            labels.len() - 1
        });
        cells.insert((li, ci), render_cell(row));
    }

    let width = |s: &str| s.chars().count();
    let mut grid: Vec<Vec<String>> = Vec::with_capacity(labels.len() + 1);
    let mut header = vec!["Method".to_string()];
    header.extend(ranges.iter().map(ToString::to_string));
    grid.push(header);
    for (li, label) in labels.iter().enumerate() {
        let mut line = vec![label.clone()];
        line.extend((0..ranges.len()).map(|ci| cells.get(&(li, ci)).cloned().unwrap_or_else(|| "-".into())));
        grid.push(line);
    }
    let cols = ranges.len() + 1;
    let widths: Vec<usize> = (0..cols)
        .map(|c| grid.iter().map(|l| width(&l[c])).max().unwrap_or(0))
        .collect();

    let mut table = String::new();
    if !ranges.is_empty() {
        table.push_str("perf_ratio (simulations) by cost range (W)\n");
    }
    for line in &grid {
        if ranges.is_empty() {
            break;
        }
        let mut out = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            if c + 1 < cols {
                out.push_str(&" ".repeat(widths[c] - width(cell)));
            }
        }
        table.push_str(out.trim_end());
        table.push('\n');
    }

    let mut records = String::new();
    for row in rows {
        records.push_str(&serde_json::to_string(row).expect("rows always serialize"));
        records.push('\n');
    }
    Report { table, records }
}
