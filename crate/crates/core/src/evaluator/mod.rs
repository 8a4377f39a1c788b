//! Turning parameter sets into results.
//!
//! Three backends implement [`EvaluatorBackend`]: the closed-form
//! [`SyntheticBackend`], [`DsdbReplay`] over stored results, and the
//! [`Gem5Backend`] subprocess adapter. [`evaluate_batch`] fans a batch out
//! over a bounded pool of worker threads.

mod gem5;
mod synthetic;

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::design_space::{ParametersBatch, ParametersSet, Violation, MAX_CONCURRENCY};
use crate::dsdb::{Dsdb, EvalResult};

pub use gem5::{
    build_gem5_command, parse_gem5_stats, parse_mcpat, render_gem5_stats, render_mcpat,
    Gem5Backend, Gem5JobSpec, McpatPower, DEFAULT_STATS_KEY,
};
pub use synthetic::{policy_leakage, policy_penalty, synthetic_eval, SyntheticBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid parameters set: {}", join(.0))]
    InvalidSet(Vec<Violation>),
    #[error("parameter `{param}` has unusable value `{value}`")]
    BadValue { param: String, value: String },
    #[error("`{0}` is not in the DSDB")]
    NotInDsdb(String),
    #[error("stats key `{0}` not found")]
    StatsKeyMissing(String),
    #[error("stats value `{value}` for `{key}` is not a usable rate")]
    StatsValue { key: String, value: String },
    #[error("McPAT report has no `Total L2s` block")]
    McpatBlockMissing,
    #[error("McPAT `Total L2s` block is missing `{0}`")]
    McpatFieldMissing(&'static str),
    #[error("McPAT field `{field}` has unparsable value `{value}`")]
    McpatValue { field: &'static str, value: String },
    #[error("no command-line flag mapped for parameter `{0}`")]
    UnmappedParam(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("`{command}` failed: {message}")]
    Subprocess { command: String, message: String },
    #[error("batch of {len} exceeds concurrency {concurrency}")]
    BatchTooLarge { len: usize, concurrency: usize },
    #[error("concurrency must be in 1..={MAX_CONCURRENCY}, got {0}")]
    Concurrency(usize),
    #[error("evaluation panicked: {0}")]
    Panicked(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Anything that can score a parameter set. Implementations are called
/// from several worker threads at once.
pub trait EvaluatorBackend: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError>;
}

impl<T: EvaluatorBackend + ?Sized> EvaluatorBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError> {
        (**self).evaluate(set)
    }
}

impl<T: EvaluatorBackend + ?Sized> EvaluatorBackend for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError> {
        (**self).evaluate(set)
    }
}

/// Replays stored results. Never falls back to simulating.
pub struct DsdbReplay {
    db: Arc<Dsdb>,
}

impl DsdbReplay {
    pub fn new(db: Arc<Dsdb>) -> Self {
        DsdbReplay { db }
    }
}

impl EvaluatorBackend for DsdbReplay {
    fn name(&self) -> &str {
        "dsdb_replay"
    }

    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError> {
        let key = set.canonical_key();
        self.db
            .get(&key)
            .map(|p| p.result)
            .ok_or(EvalError::NotInDsdb(key))
    }
}

pub type SlotResult = Result<EvalResult, EvalError>;

/// Evaluates every set of `batch` with at most `concurrency` evaluations in
/// flight. `result[i]` belongs to `batch.sets[i]`. A failing slot yields an
/// error value and does not stop its siblings.
pub fn evaluate_batch(
    backend: &dyn EvaluatorBackend,
    batch: &ParametersBatch,
    concurrency: usize,
) -> Result<Vec<SlotResult>, EvalError> {
    if !(1..=MAX_CONCURRENCY).contains(&concurrency) {
        return Err(EvalError::Concurrency(concurrency));
    }
    if batch.len() > concurrency {
        return Err(EvalError::BatchTooLarge {
            len: batch.len(),
            concurrency,
        });
    }
    Ok(evaluate_pool(backend, &batch.sets, concurrency))
}

/// Like [`evaluate_batch`] but for any number of sets; the pool still never
/// runs more than `concurrency` at a time.
pub fn evaluate_pool(
    backend: &dyn EvaluatorBackend,
    sets: &[ParametersSet],
    concurrency: usize,
) -> Vec<SlotResult> {
    let workers = concurrency.clamp(1, MAX_CONCURRENCY).min(sets.len());
    if workers <= 1 {
        return sets.iter().map(|s| guarded(backend, s)).collect();
    }

    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<SlotResult>> = vec![None; sets.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(set) = sets.get(i) else { break };
                        done.push((i, guarded(backend, set)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panics are caught per slot") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot is claimed by exactly one worker"))
        .collect()
}

fn guarded(backend: &dyn EvaluatorBackend, set: &ParametersSet) -> SlotResult {
    panic::catch_unwind(AssertUnwindSafe(|| backend.evaluate(set))).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(EvalError::Panicked(msg))
    })
}
