#![allow(dead_code)]

use dse_core::agent::{AgentState, ScriptedClient, StructuredReply};
use dse_core::design_space::{parse_space, DesignSpace, ParametersSet, Value};

pub const L2_LARGE: &str = include_str!("../../../../data/l2_large.dse");

pub fn space() -> DesignSpace {
    parse_space(L2_LARGE).unwrap()
}

pub fn cfg(size: &str, assoc: &str, mshrs: &str, tgts: &str, policy: &str) -> ParametersSet {
    [
        ("l2_size", size),
        ("l2_assoc", assoc),
        ("l2_mshrs", mshrs),
        ("l2_mshr_tgts", tgts),
        ("l2_policy", policy),
    ]
    .into_iter()
    .map(|(k, v)| (k, Value::new(v).unwrap()))
    .collect()
}

/// `n` distinct valid sets, deterministic in `seed`.
pub fn sets(space: &DesignSpace, n: usize, seed: u64) -> Vec<ParametersSet> {
    let mut out: Vec<ParametersSet> = Vec::new();
    let mut s = seed.wrapping_mul(1_000_003);
    while out.len() < n {
        let set = space.sample_uniform(s);
        s += 1;
        if !out.contains(&set) {
            out.push(set);
        }
    }
    out
}

/// ANA, then `gens` rounds of GEN/ANA, then EXIT on `exit`.
pub fn trajectory(
    space: &DesignSpace,
    gens: usize,
    concurrency: usize,
    bp: bool,
    exit: ParametersSet,
) -> Vec<StructuredReply> {
    let mut out = vec![StructuredReply::ana(AgentState::Gen, "start from the smallest caches")];
    for g in 0..gens {
        out.push(StructuredReply::gen(
            sets(space, concurrency, g as u64 + 1),
            AgentState::Ana,
            bp,
            "sweep",
        ));
        let next = if g + 1 == gens { AgentState::Exit } else { AgentState::Gen };
        out.push(StructuredReply::ana(next, "compare hit rate against power"));
    }
    out.push(StructuredReply::exit(exit, "best in range"));
    out
}

pub fn client(replies: &[StructuredReply]) -> ScriptedClient {
    ScriptedClient::new(replies.iter().map(StructuredReply::to_json))
}
