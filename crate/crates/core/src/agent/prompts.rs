//! Prompt bank: system prompt, automation prompts and the reply schema.

use serde_json::{json, Value as Json};

use super::AgentState;
use crate::design_space::{DesignSpace, Mission};

/// Results-retrospection instruction for the ANA state.
pub const RR_SENTENCE: &str = "You should first retrospect on all history simulation results. They are in the chat history, you should read them and print them in batches in a timely manner.";

/// Baseline-preservation instruction for the GEN state.
pub const BP_SENTENCE: &str = "When the number of concurrent simulations is larger than 1, you should make the first parameters_set the best one you can figure out, and use other ones for exploration.";

pub const COT_SENTENCE: &str = "Reason step by step: state what the results so far imply about each parameter, weigh the performance gain of every change against its cost, and only then decide.";

/// Preset prompt sent at the end of `state` in automation mode.
pub fn auto_prompt(state: AgentState) -> &'static str {
    match state {
        AgentState::Ana => "Based on the analysis, generate a new parameters batch for the mission.",
        AgentState::Gen => "Analyze all the simulation results so far (if we have them) and provide insights that would help better design.",
        AgentState::Qa => "I have no more questions. Please go to ANA state.",
        AgentState::Exit => "Provide the final parameters batch (the best one) (of size 1) for the mission and exit the program.",
    }
}

pub fn build_system_prompt(mission: &Mission, space: &DesignSpace) -> String {
    let c = mission.concurrency();
    let mut out = String::new();
    out.push_str(
        "You are an expert computer architect running design space exploration (DSE) with the gem5 simulator.\n\n",
    );
    out.push_str(&format!("Mission: {}\n", mission.goal_description));
    out.push_str(&format!(
        "Goal: maximize {} (higher is better) while keeping {} (watts) inside the cost range {}. Designs outside the range do not count.\n\n",
        mission.perf_metric_key, mission.cost_metric_key, mission.range
    ));
    out.push_str("Design space. Every parameters_set must assign exactly one of the listed values to every parameter:\n");
    out.push_str(&space.to_dsl());
    out.push('\n');

    out.push_str("You operate as a state machine with the states ANA, GEN, QA and EXIT. The initial state is ANA.\n");
    out.push_str("- ANA: review the simulation results in the chat history, give a step-by-step analysis and conclusions, explain your reasoning, and choose the next state (ANA or GEN).\n");
    out.push_str(&format!(
        "- GEN: produce a parameters_batch of 1 to {c} parameters_set entries based on your analysis. Each entry must stay inside the design space. Choose the next state (ANA or GEN). Up to {c} simulations run concurrently.\n"
    ));
    out.push_str("- QA: answer the user's question from the history and known context, then go back to ANA.\n");
    out.push_str("- EXIT: output the final best parameters_batch of size 1. Enter it when no further improvement is expected.\n");
    out.push_str("Permitted transitions: ANA -> ANA, GEN or EXIT; GEN -> ANA, GEN or EXIT; QA -> ANA; EXIT is terminal. Enter QA only when the user asks a question.\n\n");

    if mission.rr_enabled {
        out.push_str("In every ANA state: ");
        out.push_str(RR_SENTENCE);
        out.push('\n');
    }
    if mission.bp_enabled {
        out.push_str("In every GEN state: ");
        out.push_str(BP_SENTENCE);
        out.push_str(" Set baseline_index to 0.\n");
    }
    out.push_str(COT_SENTENCE);
    out.push_str("\n\n");

    out.push_str("Every reply is one JSON object with the fields:\n");
    out.push_str("  state: the state this reply is produced in (ANA, GEN, QA or EXIT)\n");
    out.push_str("  next_state: the state to move to next (an EXIT reply uses EXIT)\n");
    out.push_str("  reasoning: your step-by-step analysis\n");
    out.push_str("  batch: list of parameters_set objects mapping parameter name to value; required in GEN and EXIT, null otherwise\n");
    out.push_str("  baseline_index: index of the best-known parameters_set in the batch (always 0), or null\n");
    out.push_str("  answer: your answer in QA, null otherwise\n");
    out
}

/// JSON schema handed to providers that support structured output.
pub fn reply_schema(space: &DesignSpace) -> Json {
    let mut props = serde_json::Map::new();
    for p in space.params() {
        let values: Vec<&str> = p.values().iter().map(|v| v.as_str()).collect();
        props.insert(p.name().to_string(), json!({ "type": "string", "enum": values }));
    }
    let names: Vec<&str> = space.params().iter().map(|p| p.name()).collect();
    let states = ["ANA", "GEN", "QA", "EXIT"];
    json!({
        "name": "dse_reply",
        "schema": {
            "type": "object",
            "additionalProperties": false,
            "required": ["state", "next_state", "reasoning", "batch", "baseline_index", "answer"],
            "properties": {
                "state": { "type": "string", "enum": states },
                "next_state": { "type": "string", "enum": states },
                "reasoning": { "type": "string" },
                "batch": {
                    "type": ["array", "null"],
                    "items": {
                        "type": "object",
                        "additionalProperties": false,
                        "required": names,
                        "properties": props,
                    }
                },
                "baseline_index": { "type": ["integer", "null"] },
                "answer": { "type": ["string", "null"] }
            }
        }
    })
}
