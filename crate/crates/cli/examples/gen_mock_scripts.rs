//! Generates the replay scripts used by `data/experiment.toml`.
//!
//! The scripted "agent" is a greedy neighbourhood search over the
//! synthetic model: each GEN proposes neighbours of the best in-range
//! point seen so far and it exits once a GEN brings no improvement.
//! Disabling RR makes half of the proposals random jumps; disabling BP
//! starts from a random point instead of the smallest configuration.
//!
//!     cargo run -p dse-cli --example gen_mock_scripts -- data

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dse_core::agent::{render_script, AgentState, StructuredReply};
use dse_core::design_space::{CostRange, DesignSpace, ParametersSet};
use dse_core::evaluator::synthetic_eval;
use dse_core::experiment::{range_label, AblationFlags, ExperimentSpec, MethodSpec};

struct Best {
    set: ParametersSet,
    perf: f64,
}

fn neighbour(space: &DesignSpace, center: &ParametersSet, rng: &mut ChaCha8Rng) -> ParametersSet {
    let p = &space.params()[rng.random_range(0..space.params().len())];
    let values = p.values();
    let at = values.iter().position(|v| Some(v) == center.get(p.name())).unwrap_or(0);
    let next = match (at, rng.random_bool(0.5)) {
        (0, _) => 1.min(values.len() - 1),
        (i, _) if i + 1 == values.len() => i - 1,
        (i, true) => i + 1,
        (i, false) => i - 1,
    };
    let mut out = center.clone();
    out.insert(p.name(), values[next].clone());
    out
}

fn explore(
    space: &DesignSpace,
    range: CostRange,
    concurrency: usize,
    flags: AblationFlags,
    repeat: usize,
    max_gens: usize,
) -> Vec<StructuredReply> {
    let seed = (concurrency as u64) << 32 ^ (flags.rr as u64) << 24 ^ (flags.bp as u64) << 16
        ^ (range.hi() * 1000.0) as u64 * 16
        ^ repeat as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let baseline = if flags.bp {
        space.enumerate().next().unwrap()
    } else {
        space.sample_with(&mut rng)
    };

    let mut replies = vec![StructuredReply::ana(AgentState::Gen, "No results yet; start near the baseline.")];
    let mut best: Option<Best> = None;
    let mut seen: Vec<String> = Vec::new();
    for g in 0..max_gens {
        let center = best.as_ref().map_or(&baseline, |b| &b.set).clone();
        let mut batch: Vec<ParametersSet> = Vec::new();
        if g == 0 {
            batch.push(baseline.clone());
        }
        let mut tries = 0;
        while batch.len() < concurrency && tries < 200 {
            tries += 1;
            let cand = if flags.rr || rng.random_bool(0.5) {
                neighbour(space, &center, &mut rng)
            } else {
                space.sample_with(&mut rng)
            };
            let key = cand.canonical_key();
            if !seen.contains(&key) && !batch.iter().any(|b| b.canonical_key() == key) {
                batch.push(cand);
            }
        }
        let mut improved = false;
        for set in &batch {
            seen.push(set.canonical_key());
            let r = synthetic_eval(set).expect("generated sets are valid");
            if range.contains(r.cost) && best.as_ref().is_none_or(|b| r.perf > b.perf) {
                best = Some(Best { set: set.clone(), perf: r.perf });
                improved = true;
            }
        }
        replies.push(StructuredReply::gen(
            batch,
            AgentState::Ana,
            flags.bp,
            if g == 0 { "Baseline and first neighbours." } else { "Neighbours of the best point so far." },
        ));
        if g >= 1 && !improved && best.is_some() {
            replies.push(StructuredReply::ana(AgentState::Exit, "Last batch did not improve on the best point."));
            break;
        }
        if g + 1 < max_gens {
            let note = if improved { "Improved; keep going." } else { "No in-range improvement yet." };
            replies.push(StructuredReply::ana(AgentState::Gen, note));
        }
    }
    let (set, why) = match best {
        Some(b) => (b.set, "Best in-range point seen."),
        None => (baseline, "Nothing in range was found; returning the baseline."),
    };
    replies.push(StructuredReply::exit(set, why));
    replies
}

fn write(path: &Path, replies: &[StructuredReply]) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap())?;
    let raw: Vec<String> = replies.iter().map(StructuredReply::to_json).collect();
    std::fs::write(path, render_script(&raw)).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let data: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data".into()).into();
    let spec_path = data.join("experiment.toml");
    let spec = ExperimentSpec::load(&spec_path)?;
    let space: DesignSpace = std::fs::read_to_string(data.join(&spec.space))?.parse()?;
    let mut n = 0;
    for m in &spec.methods {
        let MethodSpec::Copilot { concurrency, ablations, scripts } = m else {
            continue;
        };
        for a in ablations {
            for &range in &spec.ranges {
                for repeat in 1..=spec.repeats {
                    let path = dse_core::experiment::script_path(&data, scripts, *concurrency, a.0, range, repeat);
                    write(&path, &explore(&space, range, *concurrency, a.0, repeat, spec.max_gens))?;
                    n += 1;
                }
            }
        }
    }
    let demo = explore(&space, CostRange::new(0.0, 0.12)?, 2, AblationFlags::FULL, 1, 20);
    write(&data.join("mock/run_auto.jsonl"), &demo)?;
    eprintln!("{n} experiment scripts written (ranges {})", spec.ranges.iter().map(|r| range_label(*r)).collect::<Vec<_>>().join(", "));
    Ok(())
}
