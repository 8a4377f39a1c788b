//! The LLM agent: a four-state machine (ANA, GEN, QA, EXIT) around a
//! pluggable [`LlmClient`].
//!
//! A [`Session`] owns the transcript and counters. One exchange is split in
//! two: [`Session::step`] sends an input and retries until the reply parses
//! and passes the state/transition/batch checks, then [`Session::apply`]
//! carries out the reply's effects (dispatching a GEN batch, recording the
//! EXIT choice). [`Session::run_automation`] loops both with the preset
//! automation prompts.

mod llm;
mod prompts;
mod reply;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::design_space::{parse_space, DesignSpace, Mission, ParametersSet, SpaceError};
use crate::dsdb::{DesignPoint, Dsdb, DsdbError, EvalResult};
use crate::evaluator::{evaluate_batch, EvalError, EvaluatorBackend};

pub use llm::{render_script, LlmClient, LlmError, ScriptedClient};
pub use prompts::{auto_prompt, build_system_prompt, reply_schema, BP_SENTENCE, COT_SENTENCE, RR_SENTENCE};
pub use reply::{check_reply, parse_reply, Malformed, ReplyContext, StructuredReply};

/// Consecutive malformed replies tolerated before a step gives up.
pub const DEFAULT_RETRY_LIMIT: usize = 3;
/// GEN cap after which automation forces the EXIT prompt.
pub const DEFAULT_MAX_GENS: usize = 20;
/// Applied replies per allowed GEN before automation forces EXIT, so a
/// model that never generates still terminates.
const STEPS_PER_GEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentState {
    #[serde(rename = "ANA")]
    Ana,
    #[serde(rename = "GEN")]
    Gen,
    #[serde(rename = "QA")]
    Qa,
    #[serde(rename = "EXIT")]
    Exit,
}

impl AgentState {
    pub const ALL: [AgentState; 4] = [Self::Ana, Self::Gen, Self::Qa, Self::Exit];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ana => "ANA",
            Self::Gen => "GEN",
            Self::Qa => "QA",
            Self::Exit => "EXIT",
        }
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: AgentState,
    pub to: AgentState,
}

/// Transitions a reply may request via `next_state`. Entering QA is not a
/// `next_state` transition; it happens when a manual question is answered
/// (see [`check_reply`]).
pub fn transition_check(from: AgentState, to: AgentState) -> Result<(), IllegalTransition> {
    use AgentState::*;
    let ok = match from {
        Ana | Gen => matches!(to, Ana | Gen | Exit),
        Qa => to == Ana,
        Exit => false,
    };
    if ok {
        Ok(())
    } else {
        Err(IllegalTransition { from, to })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// Where a user-side input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputOrigin {
    Automation,
    Manual,
    /// The EXIT prompt injected when the GEN cap is reached.
    ForcedExit,
}

/// Finer-grained message kind, kept so a transcript can be replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageTag {
    System,
    Input(InputOrigin),
    Correction,
    Reply,
    Rejected,
    Results,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub turn_index: usize,
    pub tag: MessageTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Manual,
    Automation,
}

/// Shared, thread-safe mode switch. Flipping it never interrupts a step;
/// the automation loop reads it between steps.
#[derive(Debug, Clone)]
pub struct ModeHandle(Arc<AtomicU8>);

impl ModeHandle {
    pub fn new(mode: Mode) -> Self {
        ModeHandle(Arc::new(AtomicU8::new(mode as u8)))
    }

    pub fn get(&self) -> Mode {
        match self.0.load(Ordering::SeqCst) {
            0 => Mode::Manual,
            _ => Mode::Automation,
        }
    }

    pub fn set(&self, mode: Mode) {
        self.0.store(mode as u8, Ordering::SeqCst);
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("session has exited")]
    Terminal,
    #[error("session is in automation mode")]
    Automation,
    #[error("gave up after {attempts} malformed replies; last: {last}")]
    RetriesExhausted { attempts: usize, last: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("reply rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dsdb(#[from] DsdbError),
    #[error("final design point could not be evaluated: {0}")]
    FinalPoint(EvalError),
    #[error("invalid transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// One evaluated slot of a GEN batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub index: usize,
    pub parameters_set: ParametersSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A point produced by one of this session's GEN steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPoint {
    /// 1-based GEN number.
    pub gen: usize,
    pub slot: usize,
    pub key: String,
    pub perf: f64,
    pub cost: f64,
}

/// What applying a reply did.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Transcript,
    Simulated(Vec<SlotReport>),
    Exited(DesignPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AutomationOutcome {
    /// The model chose EXIT on its own.
    Exited(DesignPoint),
    /// EXIT was forced at the GEN cap.
    ForcedExit(DesignPoint),
    /// Mode went back to manual; the session waits for user input.
    Paused,
}

/// Serializable view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub mission: Mission,
    pub space: String,
    pub messages: Vec<ChatMessage>,
    pub current_state: AgentState,
    pub mode: Mode,
    pub gen_count: usize,
    pub sims_run: usize,
    pub forced_exit: bool,
    pub final_set: Option<ParametersSet>,
    pub generated: Vec<GeneratedPoint>,
}

/// Counters rebuilt from a transcript's messages alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructed {
    pub current_state: AgentState,
    pub gen_count: usize,
    pub sims_run: usize,
    pub forced_exit: bool,
    pub final_set: Option<ParametersSet>,
}

pub struct Session {
    mission: Mission,
    space: DesignSpace,
    schema: serde_json::Value,
    messages: Vec<ChatMessage>,
    current_state: AgentState,
    last_state: Option<AgentState>,
    mode: ModeHandle,
    gen_count: usize,
    sims_run: usize,
    steps_applied: usize,
    forced_exit: bool,
    final_point: Option<DesignPoint>,
    generated: Vec<GeneratedPoint>,
    evaluated: HashMap<String, EvalResult>,
    retry_limit: usize,
}

impl Session {
    pub fn new(mission: Mission, space: DesignSpace) -> Self {
        let schema = reply_schema(&space);
        let mut s = Session {
            schema,
            messages: Vec::new(),
            current_state: AgentState::Ana,
            last_state: None,
            mode: ModeHandle::new(Mode::Manual),
            gen_count: 0,
            sims_run: 0,
            steps_applied: 0,
            forced_exit: false,
            final_point: None,
            generated: Vec::new(),
            evaluated: HashMap::new(),
            retry_limit: DEFAULT_RETRY_LIMIT,
            mission,
            space,
        };
        let prompt = build_system_prompt(&s.mission, &s.space);
        s.push(Role::System, prompt, MessageTag::System);
        s
    }

    pub fn with_retry_limit(mut self, retry_limit: usize) -> Self {
        self.retry_limit = retry_limit;
        self
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        self.mode.set(mode);
        self
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn current_state(&self) -> AgentState {
        self.current_state
    }

    pub fn gen_count(&self) -> usize {
        self.gen_count
    }

    pub fn sims_run(&self) -> usize {
        self.sims_run
    }

    pub fn forced_exit(&self) -> bool {
        self.forced_exit
    }

    pub fn final_point(&self) -> Option<&DesignPoint> {
        self.final_point.as_ref()
    }

    pub fn generated(&self) -> &[GeneratedPoint] {
        &self.generated
    }

    pub fn is_terminal(&self) -> bool {
        self.final_point.is_some()
    }

    pub fn mode(&self) -> Mode {
        self.mode.get()
    }

    /// Handle that other threads can use to flip the mode.
    pub fn mode_handle(&self) -> ModeHandle {
        self.mode.clone()
    }

    pub fn transcript(&self) -> SessionTranscript {
        SessionTranscript {
            mission: self.mission.clone(),
            space: self.space.to_dsl(),
            messages: self.messages.clone(),
            current_state: self.current_state,
            mode: self.mode(),
            gen_count: self.gen_count,
            sims_run: self.sims_run,
            forced_exit: self.forced_exit,
            final_set: self.final_point.as_ref().map(|p| p.set.clone()),
            generated: self.generated.clone(),
        }
    }

    fn push(&mut self, role: Role, content: String, tag: MessageTag) {
        let turn_index = self.messages.len();
        self.messages.push(ChatMessage {
            role,
            content,
            turn_index,
            tag,
        });
    }

    fn context(&self, origin: InputOrigin) -> ReplyContext<'_> {
        ReplyContext {
            space: &self.space,
            concurrency: self.mission.concurrency(),
            bp_enabled: self.mission.bp_enabled,
            current_state: self.current_state,
            origin,
        }
    }

    /// The preset prompt that moves the session into its current state.
    ///
    /// Entering ANA uses the GEN-state prompt (analyse results), entering
    /// GEN uses the ANA-state prompt (generate a batch), leaving QA uses the
    /// QA prompt and entering EXIT uses the EXIT prompt.
    pub fn automation_input(&self) -> &'static str {
        match (self.last_state, self.current_state) {
            (_, AgentState::Exit) => auto_prompt(AgentState::Exit),
            (Some(AgentState::Qa), _) => auto_prompt(AgentState::Qa),
            (_, AgentState::Gen) => auto_prompt(AgentState::Ana),
            (_, AgentState::Ana) => auto_prompt(AgentState::Gen),
            (_, AgentState::Qa) => auto_prompt(AgentState::Qa),
        }
    }

    /// Sends `input`, retrying malformed or illegal replies up to the retry
    /// limit. On success the reply is in the transcript but not yet applied.
    pub fn step(
        &mut self,
        input: &str,
        origin: InputOrigin,
        client: &dyn LlmClient,
    ) -> Result<StructuredReply, AgentError> {
        if self.is_terminal() {
            return Err(AgentError::Terminal);
        }
        self.push(Role::User, input.to_string(), MessageTag::Input(origin));

        let mut last = String::new();
        for _ in 0..=self.retry_limit {
            let raw = client.complete(&self.messages, &self.schema)?;
            let verdict = parse_reply(&raw).and_then(|r| {
                check_reply(&r, &self.context(origin))?;
                Ok(r)
            });
            match verdict {
                Ok(reply) => {
                    self.push(Role::Assistant, raw, MessageTag::Reply);
                    return Ok(reply);
                }
                Err(bad) => {
                    self.push(Role::Assistant, raw, MessageTag::Rejected);
                    self.push(
                        Role::User,
                        format!(
                            "Your previous reply was rejected: {}. Reply again with a single JSON object that follows the required format, still in state {}.",
                            bad.reason, self.current_state
                        ),
                        MessageTag::Correction,
                    );
                    last = bad.reason;
                }
            }
        }
        Err(AgentError::RetriesExhausted {
            attempts: self.retry_limit + 1,
            last,
        })
    }

    /// Carries out an accepted reply.
    pub fn apply(
        &mut self,
        reply: &StructuredReply,
        origin: InputOrigin,
        backend: &dyn EvaluatorBackend,
        dsdb: &Dsdb,
    ) -> Result<Applied, AgentError> {
        if self.is_terminal() {
            return Err(AgentError::Terminal);
        }
        check_reply(reply, &self.context(origin)).map_err(|m| AgentError::Rejected(m.reason))?;

        let applied = match reply.state {
            AgentState::Gen => {
                let batch = reply.batch.as_ref().expect("checked: GEN carries a batch");
                let results = evaluate_batch(backend, batch, self.mission.concurrency())?;
                self.gen_count += 1;
                self.sims_run += batch.len();

                let mut slots = Vec::with_capacity(batch.len());
                let mut points = Vec::new();
                for (i, (set, result)) in batch.sets.iter().zip(results).enumerate() {
                    let mut slot = SlotReport {
                        index: i,
                        parameters_set: set.clone(),
                        perf: None,
                        cost: None,
                        error: None,
                    };
                    match result {
                        Ok(r) => {
                            slot.perf = Some(r.perf);
                            slot.cost = Some(r.cost);
                            let key = set.canonical_key();
                            self.generated.push(GeneratedPoint {
                                gen: self.gen_count,
                                slot: i,
                                key: key.clone(),
                                perf: r.perf,
                                cost: r.cost,
                            });
                            self.evaluated.insert(key, r.clone());
                            points.push(DesignPoint::new(set.clone(), r));
                        }
                        Err(e) => slot.error = Some(e.to_string()),
                    }
                    slots.push(slot);
                }
                dsdb.put_all(points)?;
                let content = json!({ "gen": self.gen_count, "results_batch": slots });
                self.push(Role::Tool, content.to_string(), MessageTag::Results);
                Applied::Simulated(slots)
            }
            AgentState::Exit => {
                let set = reply.batch.as_ref().expect("checked: EXIT carries a batch").sets[0].clone();
                let key = set.canonical_key();
                let result = match self.evaluated.get(&key) {
                    Some(r) => r.clone(),
                    None => match dsdb.get(&key) {
                        Some(p) => p.result,
                        None => backend.evaluate(&set).map_err(AgentError::FinalPoint)?,
                    },
                };
                let point = DesignPoint::new(set, result);
                self.final_point = Some(point.clone());
                Applied::Exited(point)
            }
            AgentState::Ana | AgentState::Qa => Applied::Transcript,
        };

        self.steps_applied += 1;
        self.last_state = Some(reply.state);
        self.current_state = reply.next_state;
        Ok(applied)
    }

    /// One manual exchange: a user message, then the reply's effects.
    pub fn manual_step(
        &mut self,
        text: &str,
        client: &dyn LlmClient,
        backend: &dyn EvaluatorBackend,
        dsdb: &Dsdb,
    ) -> Result<(StructuredReply, Applied), AgentError> {
        if self.is_terminal() {
            return Err(AgentError::Terminal);
        }
        if self.mode() == Mode::Automation {
            return Err(AgentError::Automation);
        }
        let reply = self.step(text, InputOrigin::Manual, client)?;
        let applied = self.apply(&reply, InputOrigin::Manual, backend, dsdb)?;
        Ok((reply, applied))
    }

    fn force_exit(&mut self) {
        self.forced_exit = true;
        self.current_state = AgentState::Exit;
    }

    /// Drives the session with the preset prompts until it exits, the GEN
    /// cap forces an exit, or the mode is switched back to manual. A mode
    /// change is only observed between steps.
    pub fn run_automation(
        &mut self,
        client: &dyn LlmClient,
        backend: &dyn EvaluatorBackend,
        dsdb: &Dsdb,
        max_gens: usize,
    ) -> Result<AutomationOutcome, AgentError> {
        loop {
            if let Some(outcome) = self.automation_step(client, backend, dsdb, max_gens)? {
                return Ok(outcome);
            }
        }
    }

    /// One iteration of [`Session::run_automation`]: `Some` when the loop
    /// would stop here, otherwise performs one preset-prompt exchange.
    pub fn automation_step(
        &mut self,
        client: &dyn LlmClient,
        backend: &dyn EvaluatorBackend,
        dsdb: &Dsdb,
        max_gens: usize,
    ) -> Result<Option<AutomationOutcome>, AgentError> {
        if let Some(p) = &self.final_point {
            return Ok(Some(if self.forced_exit {
                AutomationOutcome::ForcedExit(p.clone())
            } else {
                AutomationOutcome::Exited(p.clone())
            }));
        }
        if self.mode() == Mode::Manual {
            return Ok(Some(AutomationOutcome::Paused));
        }

        let over_budget =
            self.gen_count >= max_gens || self.steps_applied >= STEPS_PER_GEN * max_gens.max(1);
        let origin = if over_budget && self.current_state != AgentState::Exit {
            self.force_exit();
            InputOrigin::ForcedExit
        } else {
            InputOrigin::Automation
        };
        let input = self.automation_input();
        let reply = self.step(input, origin, client)?;
        self.apply(&reply, origin, backend, dsdb)?;
        Ok(None)
    }

    /// Rebuilds counters and state from `messages` by re-checking every
    /// accepted reply in order.
    pub fn reconstruct(
        mission: &Mission,
        space: &DesignSpace,
        messages: &[ChatMessage],
    ) -> Result<Reconstructed, AgentError> {
        let mut out = Reconstructed {
            current_state: AgentState::Ana,
            gen_count: 0,
            sims_run: 0,
            forced_exit: false,
            final_set: None,
        };
        let mut origin = InputOrigin::Automation;
        for (i, m) in messages.iter().enumerate() {
            if m.turn_index != i {
                return Err(AgentError::Transcript(format!(
                    "message {i} has turn_index {}",
                    m.turn_index
                )));
            }
            match m.tag {
                MessageTag::Input(o) => {
                    origin = o;
                    if o == InputOrigin::ForcedExit {
                        out.forced_exit = true;
                        out.current_state = AgentState::Exit;
                    }
                }
                MessageTag::Reply => {
                    let reply = parse_reply(&m.content)
                        .map_err(|e| AgentError::Transcript(format!("message {i}: {e}")))?;
                    let ctx = ReplyContext {
                        space,
                        concurrency: mission.concurrency(),
                        bp_enabled: mission.bp_enabled,
                        current_state: out.current_state,
                        origin,
                    };
                    check_reply(&reply, &ctx)
                        .map_err(|e| AgentError::Transcript(format!("message {i}: {e}")))?;
                    match reply.state {
                        AgentState::Gen => {
                            out.gen_count += 1;
                            out.sims_run += reply.batch.as_ref().map_or(0, |b| b.len());
                        }
                        AgentState::Exit => {
                            out.final_set = reply.batch.map(|mut b| b.sets.swap_remove(0));
                        }
                        _ => {}
                    }
                    out.current_state = reply.next_state;
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

impl SessionTranscript {
    /// Re-derives the counters from the messages and compares them with the
    /// recorded ones.
    pub fn verify(&self) -> Result<Reconstructed, AgentError> {
        let space = parse_space(&self.space)?;
        let r = Session::reconstruct(&self.mission, &space, &self.messages)?;
        let recorded = (
            self.current_state,
            self.gen_count,
            self.sims_run,
            self.forced_exit,
            &self.final_set,
        );
        let rebuilt = (r.current_state, r.gen_count, r.sims_run, r.forced_exit, &r.final_set);
        if recorded != rebuilt {
            return Err(AgentError::Transcript(format!(
                "recorded {recorded:?} but messages give {rebuilt:?}"
            )));
        }
        Ok(r)
    }
}
