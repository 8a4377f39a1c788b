//! Closed-form L2 cache model used as a deterministic ground truth.
//!
//! With S the cache size in bytes, A associativity, M MSHRs and T targets
//! per MSHR:
//!
//! ```text
//! miss   = clamp(0.45*sqrt(128KiB/S) + 0.10*sqrt(2/A) + 0.02*(16/M)
//!                + 0.01*(6/T) + penalty(policy), 0, 1)
//! P_dyn  = 0.012*(S/128KiB)^0.9 + 0.0020*A
//! P_gate = 0.008*(S/128KiB)
//! P_sub  = 0.0005*(M/16) + 0.0001*(T/6) + leakage(policy)
//! ```

use crate::design_space::{DesignSpace, ParametersSet};
use crate::dsdb::{EvalResult, ResultSource};

use super::{EvalError, EvaluatorBackend};

const BASE_SIZE: f64 = 131_072.0;

/// Additive miss-rate penalty of a replacement policy.
pub fn policy_penalty(policy: &str) -> Option<f64> {
    Some(match policy {
        "LRURP" => 0.0,
        "BRRIPRP" => 0.002,
        "BIPRP" => 0.004,
        "LFURP" => 0.005,
        "SecondChanceRP" => 0.008,
        "FIFO" | "FIFORP" => 0.010,
        "RandomRP" => 0.015,
        "MRURP" => 0.020,
        _ => return None,
    })
}

/// Policy-specific bookkeeping leakage in watts.
pub fn policy_leakage(policy: &str) -> Option<f64> {
    Some(match policy {
        "RandomRP" => 0.0,
        "FIFO" | "FIFORP" => 0.0005,
        "SecondChanceRP" => 0.0008,
        "BIPRP" | "MRURP" => 0.0010,
        "BRRIPRP" => 0.0012,
        "LRURP" => 0.0015,
        "LFURP" => 0.0020,
        _ => return None,
    })
}

fn required<'a>(set: &'a ParametersSet, name: &str) -> Result<&'a str, EvalError> {
    set.get(name).map(|v| v.as_str()).ok_or_else(|| {
        EvalError::InvalidSet(vec![crate::design_space::Violation::MissingParam(
            name.to_string(),
        )])
    })
}

fn bad(param: &str, value: &str) -> EvalError {
    EvalError::BadValue {
        param: param.to_string(),
        value: value.to_string(),
    }
}

fn positive(set: &ParametersSet, name: &str) -> Result<f64, EvalError> {
    let raw = required(set, name)?;
    match raw.parse::<u64>() {
        Ok(n) if n > 0 => Ok(n as f64),
        _ => Err(bad(name, raw)),
    }
}

/// Evaluates the closed-form model for one L2 configuration.
pub fn synthetic_eval(set: &ParametersSet) -> Result<EvalResult, EvalError> {
    let size_raw = required(set, "l2_size")?;
    let size = match crate::design_space::parse_size_bytes(size_raw) {
        Some(b) if b > 0 => b as f64,
        _ => return Err(bad("l2_size", size_raw)),
    };
    let assoc = positive(set, "l2_assoc")?;
    let mshrs = positive(set, "l2_mshrs")?;
    let targets = positive(set, "l2_mshr_tgts")?;
    let policy = required(set, "l2_policy")?;
    let penalty = policy_penalty(policy).ok_or_else(|| bad("l2_policy", policy))?;
    let leakage = policy_leakage(policy).ok_or_else(|| bad("l2_policy", policy))?;

    let miss = (0.45 * (BASE_SIZE / size).sqrt()
        + 0.10 * (2.0 / assoc).sqrt()
        + 0.02 * (16.0 / mshrs)
        + 0.01 * (6.0 / targets)
        + penalty)
        .clamp(0.0, 1.0);

    let scale = size / BASE_SIZE;
    let p_dyn = 0.012 * scale.powf(0.9) + 0.0020 * assoc;
    let p_gate = 0.008 * scale;
    let p_sub = 0.0005 * (mshrs / 16.0) + 0.0001 * (targets / 6.0) + leakage;

    Ok(EvalResult::from_components(
        miss,
        p_dyn,
        p_gate,
        p_sub,
        ResultSource::Synthetic,
    ))
}

/// The synthetic model bound to a design space; sets outside the space are
/// rejected before evaluation.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    space: DesignSpace,
}

impl SyntheticBackend {
    pub fn new(space: DesignSpace) -> Self {
        SyntheticBackend { space }
    }
}

impl EvaluatorBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError> {
        let violations = self.space.validate(set);
        if !violations.is_empty() {
            return Err(EvalError::InvalidSet(violations));
        }
        synthetic_eval(set)
    }
}
