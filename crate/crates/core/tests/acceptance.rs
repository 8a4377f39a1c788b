//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{cfg, client, space, trajectory};
use dse_core::agent::*;
use dse_core::baselines::{genetic_search, random_search, GaConfig, RsConfig};
use dse_core::design_space::*;
use dse_core::dsdb::*;
use dse_core::evaluator::*;
use dse_core::experiment::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const RANGES: [f64; 4] = [0.12, 0.15, 0.2, 0.4];

fn ranges() -> Vec<CostRange> {
    RANGES.iter().map(|&hi| CostRange::new(0.0, hi).unwrap()).collect()
}

fn synthetic_point(i: usize, cost: f64, perf: f64) -> DesignPoint {
    let set = ParametersSet::new().with("id", Value::new(i.to_string()).unwrap());
    let result = EvalResult {
        perf,
        cost,
        components: Default::default(),
        source: ResultSource::Synthetic,
    };
    DesignPoint::at(set, result, chrono::DateTime::UNIX_EPOCH)
}

/// Keys of the points no other point dominates, in skyline order.
fn dominance_oracle(points: &[DesignPoint]) -> Vec<(f64, f64, String)> {
    let mut out: Vec<(f64, f64, String)> = points
        .iter()
        .filter(|p| {
            !points.iter().any(|q| {
                (q.cost() <= p.cost() && q.perf() >= p.perf())
                    && (q.cost() < p.cost() || q.perf() > p.perf())
            })
        })
        .map(|p| (p.cost(), p.perf(), p.key.clone()))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    out
}

fn linear_best(points: &[DesignPoint], range: CostRange) -> BTreeSet<String> {
    let mut best = f64::NEG_INFINITY;
    let mut keys = BTreeSet::new();
    for p in points {
        if p.cost() < range.lo() || p.cost() > range.hi() {
            continue;
        }
        if p.perf() > best {
            best = p.perf();
            keys.clear();
        }
        if p.perf() == best {
            keys.insert(p.key.clone());
        }
    }
    keys
}

fn skyline_correctness() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let n = rng.random_range(1..=500);
        let points: Vec<DesignPoint> = (0..n)
            .map(|j| {
                let (c, p) = if i % 2 == 0 {
                    (rng.random_range(0..20) as f64 / 20.0, rng.random_range(0..20) as f64 / 20.0)
                } else {
                    (rng.random::<f64>(), rng.random::<f64>())
                };
                synthetic_point(j, c, p)
            })
            .collect();
        total += n;
        let got: Vec<(f64, f64, String)> = skyline(&points)
            .into_iter()
            .map(|f| (f.cost, f.perf, f.key))
            .collect();
        ensure!(got == dominance_oracle(&points), "set {i} ({n} points) differs from oracle");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("100 sets, {total} points, {elapsed:.2?}"))
}

fn ground_truth_pipeline() -> Outcome {
    let space = space();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let points = ground_truth(&space).map_err(|e| e.to_string())?;
    let db = Dsdb::open(dir.path().join("truth.jsonl")).map_err(|e| e.to_string())?;
    db.put_all(points).map_err(|e| e.to_string())?;
    let enumerated = start.elapsed();
    ensure!(enumerated < Duration::from_secs(10), "enumeration took {enumerated:?}");
    ensure!(db.len() == 9450, "{} points stored", db.len());

    let reopened = Dsdb::open(dir.path().join("truth.jsonl")).map_err(|e| e.to_string())?;
    let all = reopened.snapshot();
    ensure!(all.len() == 9450, "{} points after reopen", all.len());

    let frontier = reopened.frontier();
    for f in &frontier {
        ensure!(
            !all.iter().any(|q| dominates(q.cost(), q.perf(), f.cost, f.perf)),
            "frontier point {} is dominated",
            f.key
        );
    }
    let oracle = dominance_oracle(&all);
    let got: Vec<(f64, f64, String)> = frontier.iter().map(|f| (f.cost, f.perf, f.key.clone())).collect();
    ensure!(got == oracle, "frontier differs from dominance oracle");

    let mut detail = Vec::new();
    for r in ranges() {
        let got: BTreeSet<String> = reopened.best_under_cost(r).into_iter().map(|p| p.key).collect();
        let want = linear_best(&all, r);
        ensure!(!want.is_empty() && got == want, "best_under_cost mismatch on {r}");
        detail.push(format!("{r}:{}", got.len()));
    }
    Ok(format!(
        "9450 points in {enumerated:.2?}, frontier {} points, optima {}",
        frontier.len(),
        detail.join(" ")
    ))
}

fn extraction_round_trip() -> Outcome {
    let stats = include_str!("../../../data/fixtures/stats.txt");
    let mcpat = include_str!("../../../data/fixtures/mcpat.txt");
    let miss = parse_gem5_stats(stats, DEFAULT_STATS_KEY).map_err(|e| e.to_string())?;
    let power = parse_mcpat(mcpat).map_err(|e| e.to_string())?;
    ensure!(miss == 0.1375, "miss rate {miss}");
    ensure!(
        (power.runtime_dynamic, power.gate_leakage, power.subthreshold_leakage) == (0.05, 0.01, 0.02),
        "power {power:?}"
    );

    let dir = tempfile::tempdir().unwrap();
    let space = space();
    let spec = Gem5JobSpec {
        binary_path: "gem5.opt".into(),
        config_script: "l2.py".into(),
        workload: "matmul".into(),
        flag_template: Gem5JobSpec::identity_flags(&space),
        stats_path: "stats.txt".into(),
        mcpat_output_path: "mcpat.txt".into(),
        stats_key: DEFAULT_STATS_KEY.into(),
        mcpat_command: None,
        runs_dir: dir.path().to_path_buf(),
        live: false,
    };
    let set = cfg("1MiB", "8", "32", "12", "LRURP");
    let work = spec.workdir(&set);
    std::fs::create_dir_all(&work).unwrap();
    std::fs::write(work.join("stats.txt"), stats).unwrap();
    std::fs::write(work.join("mcpat.txt"), mcpat).unwrap();
    let backend = Gem5Backend::new(spec, space).map_err(|e| e.to_string())?;
    let r = backend.evaluate(&set).map_err(|e| e.to_string())?;
    let perf = 1.0 - 0.1375;
    let cost = 0.05 + 0.01 + 0.02;
    ensure!(r.perf == perf, "perf {} != {perf}", r.perf);
    ensure!(r.cost == cost, "cost {} != {cost}", r.cost);

    let point = DesignPoint::new(set, r.clone());
    let back = decode_record(&encode_record(&point)).map_err(|e| e.to_string())?;
    ensure!(back == point, "DSDB record round trip changed the point");
    let again = parse_gem5_stats(&render_gem5_stats(miss), DEFAULT_STATS_KEY).map_err(|e| e.to_string())?;
    ensure!(again == miss, "render/parse changed the miss rate");
    ensure!(parse_mcpat(&render_mcpat(&power)).ok() == Some(power), "render/parse changed power");
    Ok(format!("perf {perf}, cost {cost}"))
}

fn ga_protocol() -> Outcome {
    let space = space();
    let truth = ground_truth(&space).map_err(|e| e.to_string())?;
    let backend = SyntheticBackend::new(space.clone());
    let mut detail = Vec::new();
    for r in ranges() {
        let target = best_under_cost(&truth, r)[0].perf();
        let start = Instant::now();
        let mut sims = Vec::new();
        for seed in 1..=3 {
            let cfg = GaConfig {
                seed,
                ..GaConfig::default()
            };
            ensure!(
                (cfg.population, cfg.generations, cfg.crossover_rate, cfg.mutation_rate)
                    == (50, 20, 0.8, 0.2),
                "unexpected defaults {cfg:?}"
            );
            let trace = genetic_search(&space, &backend, r, &cfg).map_err(|e| e.to_string())?;
            let best = trace.best.as_ref().ok_or(format!("no in-range point on {r}"))?;
            let ratio = perf_ratio(best.result.perf, &truth, r).map_err(|e| e.to_string())?;
            ensure!(ratio == 1.0, "seed {seed} on {r}: perf_ratio {ratio}");
            let unique: BTreeSet<String> =
                trace.evaluations.iter().map(|e| e.set.canonical_key()).collect();
            ensure!(trace.nsims == unique.len(), "nsims {} vs {} unique", trace.nsims, unique.len());
            ensure!(best.result.perf == target, "best perf differs from target");
            sims.push(trace.nsims.to_string());
        }
        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(30), "{r} took {elapsed:?}");
        detail.push(format!("{r} nsims {}", sims.join("/")));
    }
    Ok(format!("perf_ratio 1.000 everywhere; {}", detail.join(", ")))
}

fn rs_protocol() -> Outcome {
    let space = space();
    let truth = ground_truth(&space).map_err(|e| e.to_string())?;
    let backend = SyntheticBackend::new(space.clone());
    let range = CostRange::new(0.0, 0.4).unwrap();
    let target = best_under_cost(&truth, range)[0].perf();
    let mut sims = Vec::new();
    for seed in 0..20 {
        let trace = random_search(&space, &backend, range, &truth, &RsConfig { seed, ..RsConfig::default() })
            .map_err(|e| e.to_string())?;
        let hit = |e: &dse_core::baselines::Evaluation| range.contains(e.result.cost) && e.result.perf / target > 0.97;
        let (last, before) = trace.evaluations.split_last().ok_or("no evaluations")?;
        ensure!(hit(last), "seed {seed} stopped without reaching the target");
        ensure!(!before.iter().any(hit), "seed {seed} kept going after a hit");
        ensure!(trace.nsims == trace.evaluations.len(), "seed {seed}: nsims mismatch");
        sims.push(trace.nsims);
    }
    sims.sort_unstable();
    let median = (sims[9] + sims[10]) as f64 / 2.0;
    ensure!(median <= 30.0, "median nsims {median}");
    Ok(format!("median nsims {median} over 20 seeds (min {}, max {})", sims[0], sims[19]))
}

fn mission(hi: f64, c: usize) -> Mission {
    Mission::new(CostRange::new(0.0, hi).unwrap(), c).unwrap()
}

fn agent_loop() -> Outcome {
    let space = space();
    let backend = SyntheticBackend::new(space.clone());
    let exit = cfg("128KiB", "2", "16", "6", "LRURP");

    // (a)
    for c in 1..=4 {
        for gens in 1..=3 {
            let script = client(&trajectory(&space, gens, c, true, exit.clone()));
            let mut s = Session::new(mission(0.12, c), space.clone()).with_mode(Mode::Automation);
            s.run_automation(&script, &backend, &Dsdb::in_memory(), 20)
                .map_err(|e| format!("(a) {e}"))?;
            ensure!(s.sims_run() == s.gen_count() * c && s.gen_count() == gens, "(a) c={c} gens={gens}");
        }
    }

    // (b)
    let script = client(&trajectory(&space, 1, 2, true, exit.clone()));
    let mut s = Session::new(mission(0.12, 2), space.clone()).with_mode(Mode::Automation);
    s.run_automation(&script, &backend, &Dsdb::in_memory(), 20)
        .map_err(|e| format!("(b) {e}"))?;
    let sent: Vec<&str> = s
        .messages()
        .iter()
        .filter(|m| matches!(m.tag, MessageTag::Input(_)))
        .map(|m| m.content.as_str())
        .collect();
    let analyse = "Analyze all the simulation results so far (if we have them) and provide insights that would help better design.";
    let generate = "Based on the analysis, generate a new parameters batch for the mission.";
    let finish = "Provide the final parameters batch (the best one) (of size 1) for the mission and exit the program.";
    ensure!(sent == [analyse, generate, analyse, finish], "(b) prompts {sent:?}");
    ensure!(
        auto_prompt(AgentState::Qa) == "I have no more questions. Please go to ANA state.",
        "(b) QA prompt"
    );

    // (c)
    ensure!(transition_check(AgentState::Qa, AgentState::Gen).is_err(), "(c) QA->GEN allowed");
    ensure!(transition_check(AgentState::Qa, AgentState::Ana).is_ok(), "(c) QA->ANA refused");
    let qa_gen = StructuredReply {
        next_state: AgentState::Gen,
        ..StructuredReply::qa("yes", "q")
    };
    let script = client(&[
        qa_gen,
        StructuredReply::qa("yes", "q"),
        StructuredReply::ana(AgentState::Exit, "done"),
        StructuredReply::exit(exit.clone(), "x"),
    ]);
    let mut s = Session::new(mission(0.12, 1), space.clone());
    let db = Dsdb::in_memory();
    s.manual_step("question", &script, &backend, &db).map_err(|e| format!("(c) {e}"))?;
    ensure!(script.calls() == 2 && s.current_state() == AgentState::Ana, "(c) QA handling");
    s.manual_step("finish", &script, &backend, &db).map_err(|e| format!("(c) {e}"))?;
    s.manual_step("exit", &script, &backend, &db).map_err(|e| format!("(c) {e}"))?;
    ensure!(
        matches!(s.manual_step("again", &script, &backend, &db), Err(AgentError::Terminal)),
        "(c) EXIT not terminal"
    );
    ensure!(
        AgentState::ALL.iter().all(|&t| transition_check(AgentState::Exit, t).is_err()),
        "(c) EXIT has successors"
    );

    // (d)
    let mut two = StructuredReply::exit(exit.clone(), "x");
    two.batch.as_mut().unwrap().sets.push(cfg("256KiB", "2", "16", "6", "LRURP"));
    ensure!(parse_reply(&two.to_json()).is_err(), "(d) EXIT batch of 2 parsed");
    let script = client(&[StructuredReply::ana(AgentState::Exit, "x"), two, StructuredReply::exit(exit.clone(), "x")]);
    let mut s = Session::new(mission(0.12, 2), space.clone()).with_mode(Mode::Automation);
    s.run_automation(&script, &backend, &Dsdb::in_memory(), 20)
        .map_err(|e| format!("(d) {e}"))?;
    ensure!(script.calls() == 3, "(d) {} calls", script.calls());

    // (e)
    let script = ScriptedClient::new(["not json".to_string(), StructuredReply::ana(AgentState::Gen, "x").to_json()]);
    let mut s = Session::new(mission(0.12, 1), space.clone());
    s.step(analyse, InputOrigin::Automation, &script).map_err(|e| format!("(e) {e}"))?;
    ensure!(script.calls() == 2, "(e) {} calls", script.calls());

    // (f)
    let script = ScriptedClient::new(["{", "{", "{", "{", "{"]);
    let mut s = Session::new(mission(0.12, 1), space.clone());
    let r = s.step(analyse, InputOrigin::Automation, &script);
    ensure!(
        matches!(r, Err(AgentError::RetriesExhausted { attempts: 4, .. })) && script.calls() == 4,
        "(f) got {r:?}"
    );

    // (g)
    for rr in [false, true] {
        for bp in [false, true] {
            let s = Session::new(mission(0.12, 1).with_strategies(rr, bp), space.clone());
            let system = &s.messages()[0].content;
            ensure!(
                system.contains(RR_SENTENCE) == rr && system.contains(BP_SENTENCE) == bp,
                "(g) rr={rr} bp={bp}"
            );
        }
    }
    Ok("(a) (b) (c) (d) (e) (f) (g)".into())
}

/// Writes one script per ablation × range × repeat. Every ablation
/// converges except `no-rr-no-bp` on the tightest range, which keeps
/// proposing out-of-range designs until the GEN cap forces an exit.
fn write_ablation_scripts(dir: &Path, truth: &[DesignPoint], concurrency: usize, max_gens: usize) {
    let space = space();
    let mut too_costly: Vec<&DesignPoint> = truth.iter().filter(|p| p.cost() > 0.3).collect();
    too_costly.sort_by(|a, b| a.key.cmp(&b.key));
    for id in ["full", "no-rr", "no-bp", "no-rr-no-bp"] {
        let flags = AblationFlags::from_id(id).unwrap();
        for (ri, range) in ranges().into_iter().enumerate() {
            let mut inside: Vec<&DesignPoint> = truth.iter().filter(|p| range.contains(p.cost())).collect();
            inside.sort_by(|a, b| b.perf().total_cmp(&a.perf()).then(a.key.cmp(&b.key)));
            for repeat in 1..=3usize {
                let replies = if id == "no-rr-no-bp" && ri == 0 {
                    let mut out = vec![StructuredReply::ana(AgentState::Gen, "explore")];
                    for g in 0..max_gens {
                        let sets = (0..concurrency)
                            .map(|j| too_costly[(g * concurrency + j + repeat) % too_costly.len()].set.clone())
                            .collect();
                        out.push(StructuredReply::gen(sets, AgentState::Ana, flags.bp, "bigger"));
                        if g + 1 < max_gens {
                            out.push(StructuredReply::ana(AgentState::Gen, "still missing"));
                        }
                    }
                    out.push(StructuredReply::exit(too_costly[0].set.clone(), "largest"));
                    out
                } else {
                    let gens = 2 + usize::from(!flags.rr) + usize::from(!flags.bp) + (repeat - 1) % 2;
                    let best = if flags == AblationFlags::FULL { 0 } else { repeat };
                    let mut out = vec![StructuredReply::ana(AgentState::Gen, "start")];
                    let mut seen: Vec<&DesignPoint> = Vec::new();
                    for g in 0..gens {
                        let sets: Vec<ParametersSet> = (0..concurrency)
                            .map(|j| {
                                let idx = if g + 1 == gens && j == 0 {
                                    best
                                } else {
                                    (best + 1 + (g * 7 + j * 13 + repeat) % (inside.len() - best - 1)).min(inside.len() - 1)
                                };
                                seen.push(inside[idx]);
                                inside[idx].set.clone()
                            })
                            .collect();
                        out.push(StructuredReply::gen(sets, AgentState::Ana, flags.bp, "refine"));
                        let next = if g + 1 == gens { AgentState::Exit } else { AgentState::Gen };
                        out.push(StructuredReply::ana(next, "compare"));
                    }
                    let pick = seen
                        .iter()
                        .max_by(|a, b| a.perf().total_cmp(&b.perf()).then(b.key.cmp(&a.key)))
                        .unwrap();
                    out.push(StructuredReply::exit(pick.set.clone(), "best seen"));
                    out
                };
                let path = script_path(
                    dir,
                    "scripts/{ablation}/{range}/{repeat}.jsonl",
                    concurrency,
                    flags,
                    range,
                    repeat,
                );
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                let raw: Vec<String> = replies.iter().map(StructuredReply::to_json).collect();
                std::fs::write(path, render_script(&raw)).unwrap();
            }
        }
    }
    std::fs::write(dir.join("l2_large.dse"), space.to_dsl()).unwrap();
}

fn cell_is_well_formed(cell: &str) -> bool {
    if cell == "0.000 (∞)" {
        return true;
    }
    let Some((ratio, rest)) = cell.split_once(" (") else {
        return false;
    };
    let Some(inner) = rest.strip_suffix(')') else {
        return false;
    };
    let ratio_ok = ratio.len() == 5 && ratio.parse::<f64>().is_ok_and(|r| (0.0..=1.0).contains(&r));
    let counts_ok = match inner.split_once('×') {
        Some((g, c)) => g.parse::<usize>().is_ok() && c.parse::<usize>().is_ok(),
        None => inner.parse::<usize>().is_ok(),
    };
    ratio_ok && counts_ok
}

const ABLATION_SPEC: &str = r#"
space = "l2_large.dse"
ranges = [[0.0, 0.12], [0.0, 0.15], [0.0, 0.2], [0.0, 0.4]]
repeats = 3
max_gens = 6

[[methods]]
kind = "copilot"
concurrency = 3
ablations = ["full", "no-rr", "no-bp", "no-rr-no-bp"]
scripts = "scripts/{ablation}/{range}/{repeat}.jsonl"
"#;

fn ablation_matrix() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let truth = ground_truth(&space()).map_err(|e| e.to_string())?;
    write_ablation_scripts(dir.path(), &truth, 3, 6);
    let spec = ExperimentSpec::parse(ABLATION_SPEC).map_err(|e| e.to_string())?;
    let rows = run_matrix(&spec, dir.path()).map_err(|e| e.to_string())?;
    ensure!(rows.len() == 16, "{} rows", rows.len());
    for r in &rows {
        ensure!(r.error.is_none(), "{} {:?}: {:?}", r.label(), r.range(), r.error);
    }
    let report = render_report(&rows);
    let lines: Vec<&str> = report.table.lines().collect();
    ensure!(lines.len() == 6, "table has {} lines", lines.len());
    ensure!(
        ["[0,0.12]", "[0,0.15]", "[0,0.2]", "[0,0.4]"].iter().all(|h| lines[1].contains(h)),
        "header {}",
        lines[1]
    );
    let labels = ["C-P-3", "C-P-3 No RR", "C-P-3 No BP", "C-P-3 No RR+No BP"];
    for (line, label) in lines[2..].iter().zip(labels) {
        ensure!(line.starts_with(label), "row `{line}` should start with {label}");
    }
    for r in &rows {
        ensure!(cell_is_well_formed(&render_cell(r)), "malformed cell {}", render_cell(r));
    }
    let forced = rows
        .iter()
        .find(|r| r.ablation.as_deref() == Some("no-rr-no-bp") && r.cost_hi == 0.12)
        .unwrap();
    ensure!(
        !forced.converged && render_cell(forced) == "0.000 (∞)" && lines[5].contains("0.000 (∞)"),
        "forced cell rendered as {}",
        render_cell(forced)
    );
    ensure!(forced.n_gens == 6 && forced.nsims == 18, "forced cell counters {forced:?}");
    for r in rows.iter().filter(|r| r.ablation.as_deref() == Some("full")) {
        ensure!(render_cell(r) == "1.000 (2×3)", "full cell {}", render_cell(r));
    }
    let converged = rows.iter().filter(|r| r.converged).count();
    ensure!(converged == 15, "{converged} converged cells");
    Ok(format!("16 cells, 15 converged, forced cell `{}`", render_cell(forced)))
}

const MIXED_SPEC: &str = r#"
space = "l2_large.dse"
ranges = [[0.0, 0.12], [0.0, 0.4]]
repeats = 3
seeds = [11, 12, 13]
max_gens = 6

[[methods]]
kind = "rs"

[[methods]]
kind = "ga"
population = 20
generations = 6

[[methods]]
kind = "copilot"
concurrency = 3
ablations = ["full", "no-rr"]
scripts = "scripts/{ablation}/{range}/{repeat}.jsonl"
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let truth = ground_truth(&space()).map_err(|e| e.to_string())?;
    write_ablation_scripts(dir.path(), &truth, 3, 6);
    let spec = ExperimentSpec::parse(MIXED_SPEC).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for _ in 0..2 {
        let rows = run_matrix(&spec, dir.path()).map_err(|e| e.to_string())?;
        let r = render_report(&rows);
        reports.push(format!("{}{}", r.table, r.records).into_bytes());
    }
    ensure!(reports[0] == reports[1], "reports differ between runs");

    let transcript = || {
        let space = space();
        let backend = SyntheticBackend::new(space.clone());
        let script = client(&trajectory(&space, 3, 2, true, cfg("128KiB", "2", "16", "6", "LRURP")));
        let mut s = Session::new(mission(0.2, 2), space).with_mode(Mode::Automation);
        s.run_automation(&script, &backend, &Dsdb::in_memory(), 20).unwrap();
        serde_json::to_vec(&s.transcript()).unwrap()
    };
    ensure!(transcript() == transcript(), "transcripts differ between runs");
    Ok(format!("{} report bytes identical across runs", reports[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("skyline correctness", skyline_correctness),
        ("ground-truth pipeline", ground_truth_pipeline),
        ("stats/power extraction", extraction_round_trip),
        ("GA protocol", ga_protocol),
        ("RS protocol", rs_protocol),
        ("agent loop", agent_loop),
        ("ablation matrix", ablation_matrix),
        ("end-to-end determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
