//! Parsing and checking of structured agent replies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{transition_check, AgentState, InputOrigin};
use crate::design_space::{DesignSpace, ParametersBatch, ParametersSet, Value};

/// One parsed agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReply {
    pub state: AgentState,
    pub next_state: AgentState,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<ParametersBatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl StructuredReply {
    fn bare(state: AgentState, next_state: AgentState, reasoning: &str) -> Self {
        StructuredReply {
            state,
            next_state,
            reasoning: reasoning.to_string(),
            batch: None,
            baseline_index: None,
            answer: None,
        }
    }

    pub fn ana(next_state: AgentState, reasoning: &str) -> Self {
        Self::bare(AgentState::Ana, next_state, reasoning)
    }

    /// A GEN reply; `baseline_index` is set to 0 when `bp` is true.
    pub fn gen(sets: Vec<ParametersSet>, next_state: AgentState, bp: bool, reasoning: &str) -> Self {
        StructuredReply {
            batch: Some(ParametersBatch { sets }),
            baseline_index: bp.then_some(0),
            ..Self::bare(AgentState::Gen, next_state, reasoning)
        }
    }

    pub fn qa(answer: &str, reasoning: &str) -> Self {
        StructuredReply {
            answer: Some(answer.to_string()),
            ..Self::bare(AgentState::Qa, AgentState::Ana, reasoning)
        }
    }

    pub fn exit(set: ParametersSet, reasoning: &str) -> Self {
        StructuredReply {
            batch: Some(ParametersBatch { sets: vec![set] }),
            ..Self::bare(AgentState::Exit, AgentState::Exit, reasoning)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("replies always serialize")
    }
}

/// Why a raw reply was rejected. Sent back to the model verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed {
    pub reason: String,
}

impl Malformed {
    fn new(reason: impl Into<String>) -> Self {
        Malformed {
            reason: reason.into(),
        }
    }
}

impl std::fmt::Display for Malformed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    state: AgentState,
    next_state: AgentState,
    reasoning: String,
    #[serde(default)]
    batch: Option<Vec<BTreeMap<String, Json>>>,
    #[serde(default)]
    baseline_index: Option<usize>,
    #[serde(default)]
    answer: Option<String>,
}

fn literal(name: &str, v: &Json) -> Result<Value, Malformed> {
    let text = match v {
        Json::String(s) => s.clone(),
        Json::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
        other => {
            return Err(Malformed::new(format!(
                "value for `{name}` must be a string or integer, got {other}"
            )))
        }
    };
    Value::new(text.trim()).map_err(|e| Malformed::new(format!("value for `{name}`: {e}")))
}

/// Schema-level parse: one JSON object with the reply fields, the
/// batch/answer presence rules per state, and the size-1 EXIT batch.
pub fn parse_reply(raw: &str) -> Result<StructuredReply, Malformed> {
    let wire: Wire = serde_json::from_str(raw.trim())
        .map_err(|e| Malformed::new(format!("reply is not a valid reply object: {e}")))?;

    let batch = match wire.batch {
        None => None,
        Some(sets) => {
            let sets = sets
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    m.iter()
                        .map(|(k, v)| Ok((k.clone(), literal(k, v)?)))
                        .collect::<Result<ParametersSet, Malformed>>()
                        .map_err(|e| Malformed::new(format!("batch[{i}]: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(ParametersBatch::new(sets))
        }
    };

    let needs_batch = matches!(wire.state, AgentState::Gen | AgentState::Exit);
    match (&batch, needs_batch) {
        (None, true) => {
            return Err(Malformed::new(format!("a {} reply must carry a batch", wire.state)))
        }
        (Some(_), false) => {
            return Err(Malformed::new(format!("a {} reply must not carry a batch", wire.state)))
        }
        (Some(b), true) if b.is_empty() => {
            return Err(Malformed::new("batch must contain at least one parameters_set"))
        }
        _ => {}
    }
    if wire.state == AgentState::Exit && batch.as_ref().map(ParametersBatch::len) != Some(1) {
        return Err(Malformed::new("the EXIT batch must have exactly one parameters_set"));
    }
    if wire.state == AgentState::Exit && wire.next_state != AgentState::Exit {
        return Err(Malformed::new("an EXIT reply must have next_state EXIT"));
    }
    match (&wire.answer, wire.state == AgentState::Qa) {
        (None, true) => return Err(Malformed::new("a QA reply must carry an answer")),
        (Some(_), false) => {
            return Err(Malformed::new(format!("a {} reply must not carry an answer", wire.state)))
        }
        _ => {}
    }
    if wire.baseline_index.is_some() && batch.is_none() {
        return Err(Malformed::new("baseline_index given without a batch"));
    }

    Ok(StructuredReply {
        state: wire.state,
        next_state: wire.next_state,
        reasoning: wire.reasoning,
        batch,
        baseline_index: wire.baseline_index,
        answer: wire.answer,
    })
}

/// Session facts a reply is checked against.
#[derive(Debug, Clone, Copy)]
pub struct ReplyContext<'a> {
    pub space: &'a DesignSpace,
    pub concurrency: usize,
    pub bp_enabled: bool,
    pub current_state: AgentState,
    pub origin: InputOrigin,
}

/// Domain-level checks: the reply belongs to the current state (or enters
/// QA on a manual question), its transition is legal, and its batch fits
/// the space and the concurrency limit.
pub fn check_reply(reply: &StructuredReply, ctx: &ReplyContext<'_>) -> Result<(), Malformed> {
    let entering_qa = reply.state == AgentState::Qa
        && ctx.origin == InputOrigin::Manual
        && ctx.current_state != AgentState::Exit;
    if reply.state != ctx.current_state && !entering_qa {
        return Err(Malformed::new(format!(
            "reply claims state {} but the session is in {}{}",
            reply.state,
            ctx.current_state,
            if reply.state == AgentState::Qa {
                " (QA is only for answering a user's question)"
            } else {
                ""
            }
        )));
    }
    if reply.state != AgentState::Exit {
        transition_check(reply.state, reply.next_state)
            .map_err(|e| Malformed::new(e.to_string()))?;
    }

    if let Some(batch) = &reply.batch {
        if reply.state == AgentState::Gen && batch.len() > ctx.concurrency {
            return Err(Malformed::new(format!(
                "batch has {} parameters_set entries but at most {} simulations run concurrently",
                batch.len(),
                ctx.concurrency
            )));
        }
        for (i, set) in batch.sets.iter().enumerate() {
            let violations = ctx.space.validate(set);
            if !violations.is_empty() {
                let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
                return Err(Malformed::new(format!("batch[{i}]: {}", list.join("; "))));
            }
        }
        match reply.baseline_index {
            Some(0) => {}
            Some(i) => {
                return Err(Malformed::new(format!(
                    "baseline_index must be 0 (the first parameters_set), got {i}"
                )))
            }
            None if ctx.bp_enabled && reply.state == AgentState::Gen => {
                return Err(Malformed::new(
                    "baseline_index is required: put the best-known parameters_set first and set baseline_index to 0",
                ))
            }
            None => {}
        }
    }
    Ok(())
}
