//! Per-turn interview pipeline and phase state machine.
//!
//! ```text
//! small_talk ──(career topic or fallback)──▶ interview ──(fill rate or turn cap)──▶ report_ready ──▶ closed
//!                                             │
//!                                             └─ each turn: fill → generate → terminate? → question
//! ```
//!
//! Every LLM step degrades on failure instead of aborting the session: a
//! failed fill keeps the previous slots, a failed generation is skipped, and
//! a failed question falls back to a canned probe for the first unfilled slot.

use crate::llm::{ChatMessage, CompletionRequest, GatewayError, LlmGateway, ModelSettings, Role};
use crate::prompts::{
    self, AbductionRecord, Bindings, ParseError, ParseWarning, PromptKind, TemplateRegistry,
};
use crate::questionnaire::{InvalidQuestionnaire, Questionnaire};
use crate::slots::{self, AddLog, DroppedDraft, FilledValue, SlotSet, DEFAULT_SLOT_CAP};
use crate::transcript::{grapheme_len, Utterance};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Baseline,
    Proposed1,
    Proposed2,
}

impl MethodId {
    pub const ALL: [MethodId; 3] = [MethodId::Baseline, MethodId::Proposed1, MethodId::Proposed2];

    pub fn label(self) -> &'static str {
        match self {
            MethodId::Baseline => "baseline",
            MethodId::Proposed1 => "proposed1",
            MethodId::Proposed2 => "proposed2",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MethodId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "base" => Ok(MethodId::Baseline),
            "proposed1" | "p1" => Ok(MethodId::Proposed1),
            "proposed2" | "p2" => Ok(MethodId::Proposed2),
            other => Err(format!("unknown method `{other}` (expected baseline, proposed1 or proposed2)")),
        }
    }
}

/// Which generation behavior a session uses. Only constructible from a [`MethodId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "MethodId", into = "MethodId")]
pub struct MethodPolicy {
    id: MethodId,
    generates_slots: bool,
    uses_abduction: bool,
}

impl From<MethodId> for MethodPolicy {
    fn from(id: MethodId) -> Self {
        let (generates_slots, uses_abduction) = match id {
            MethodId::Baseline => (false, false),
            MethodId::Proposed1 => (true, false),
            MethodId::Proposed2 => (true, true),
        };
        Self {
            id,
            generates_slots,
            uses_abduction,
        }
    }
}

impl From<MethodPolicy> for MethodId {
    fn from(policy: MethodPolicy) -> Self {
        policy.id
    }
}

impl MethodPolicy {
    pub fn id(&self) -> MethodId {
        self.id
    }

    pub fn generates_slots(&self) -> bool {
        self.generates_slots
    }

    pub fn uses_abduction(&self) -> bool {
        self.uses_abduction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub fill_threshold: f64,
    /// Cap on completed exchanges, small talk included.
    pub max_interview_turns: usize,
    pub small_talk_fallback_turns: usize,
    pub slot_cap_per_turn: usize,
    /// Soft limit; longer questions are logged, not truncated.
    pub max_question_chars: usize,
    pub locale: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fill_threshold: 0.8,
            max_interview_turns: 15,
            small_talk_fallback_turns: 2,
            slot_cap_per_turn: DEFAULT_SLOT_CAP,
            max_question_chars: 100,
            locale: "en".into(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.fill_threshold > 0.0 && self.fill_threshold <= 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "fill_threshold must be in (0, 1], got {}",
                self.fill_threshold
            )));
        }
        if self.max_interview_turns == 0 {
            return Err(EngineError::InvalidConfig(
                "max_interview_turns must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SmallTalk,
    Interview,
    ReportReady,
    Closed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::SmallTalk => "small_talk",
            Phase::Interview => "interview",
            Phase::ReportReady => "report_ready",
            Phase::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    phase: Phase,
    transcript: Vec<Utterance>,
    #[serde(with = "slots::persisted")]
    slots: SlotSet,
    abduction_history: Vec<AbductionRecord>,
    method: MethodPolicy,
    questionnaire: Questionnaire,
    config: EngineConfig,
    turn_index: usize,
    small_talk_turns: usize,
    termination: Option<TerminationDecision>,
}

impl DialogueState {
    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn transcript(&self) -> &[Utterance] {
        &self.transcript
    }

    pub fn slots(&self) -> &SlotSet {
        &self.slots
    }

    pub fn abduction_history(&self) -> &[AbductionRecord] {
        &self.abduction_history
    }

    pub fn method(&self) -> MethodPolicy {
        self.method
    }

    pub fn questionnaire(&self) -> &Questionnaire {
        &self.questionnaire
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Completed user/system exchanges, small talk included.
    pub fn turn_index(&self) -> usize {
        self.turn_index
    }

    pub fn small_talk_turns(&self) -> usize {
        self.small_talk_turns
    }

    /// The decision that ended the interview, once it has ended.
    pub fn termination(&self) -> Option<&TerminationDecision> {
        self.termination.as_ref()
    }

    /// Whether the engine accepts another user utterance.
    pub fn accepts_input(&self) -> bool {
        matches!(self.phase, Phase::SmallTalk | Phase::Interview)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    FillRate,
    TurnCap,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::FillRate => "fill_rate",
            TerminationReason::TurnCap => "turn_cap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationDecision {
    pub terminate: bool,
    pub reason: Option<TerminationReason>,
    pub fill_rate: f64,
    pub turn_index: usize,
}

/// Ends the interview once the fill rate reaches the threshold or the turn cap is hit.
/// The fill-rate reason wins when both hold.
pub fn evaluate_termination(slots: &SlotSet, turn_index: usize, config: &EngineConfig) -> TerminationDecision {
    let fill_rate = slots.fill_rate().unwrap_or(0.0);
    let reason = if fill_rate >= config.fill_threshold {
        Some(TerminationReason::FillRate)
    } else if turn_index >= config.max_interview_turns {
        Some(TerminationReason::TurnCap)
    } else {
        None
    };
    TerminationDecision {
        terminate: reason.is_some(),
        reason,
        fill_rate,
        turn_index,
    }
}

/// Free-function form of the termination check over a state.
pub fn should_terminate(state: &DialogueState) -> TerminationDecision {
    evaluate_termination(&state.slots, state.turn_index, &state.config)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("session is in phase {0} and accepts no more input")]
    PhaseClosed(Phase),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error(transparent)]
    InvalidQuestionnaire(#[from] InvalidQuestionnaire),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("operation requires phase {expected}, session is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillTrace {
    pub filled: Vec<FilledValue>,
    pub discarded: Vec<String>,
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    /// Drafts proposed by the model before dedup and capping.
    pub proposed: usize,
    pub admitted: Vec<String>,
    pub dropped: Vec<DroppedDraft>,
    pub abduction: Option<AbductionRecord>,
    pub warnings: Vec<ParseWarning>,
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub targets: Vec<String>,
    pub fallback: bool,
    pub over_length: bool,
    pub warnings: Vec<ParseWarning>,
    pub degraded: Option<String>,
}

/// Everything that happened in one exchange, for logging and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn: usize,
    pub method: MethodId,
    pub phase_before: Phase,
    pub phase_after: Phase,
    pub user_utterance: String,
    pub system_utterance: String,
    pub entered_interview: bool,
    pub probe: Option<bool>,
    pub fill: Option<FillTrace>,
    pub generation: Option<GenerationTrace>,
    pub termination: Option<TerminationDecision>,
    pub question: Option<QuestionTrace>,
    pub slot_count: usize,
    pub fill_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<RenderedPrompt>,
}

impl TurnTrace {
    /// Slots admitted by generation this turn.
    pub fn admitted_drafts(&self) -> &[String] {
        self.generation.as_ref().map(|g| g.admitted.as_slice()).unwrap_or(&[])
    }

    pub fn is_interview_turn(&self) -> bool {
        self.phase_before == Phase::Interview || self.entered_interview
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub system_utterance: String,
    pub phase: Phase,
    pub terminal: bool,
    pub trace: TurnTrace,
}

/// Stateless driver; sessions live in [`DialogueState`] values owned by the caller.
#[derive(Debug, Clone)]
pub struct Engine {
    gateway: LlmGateway,
    templates: Arc<TemplateRegistry>,
    model: ModelSettings,
}

enum StepError {
    Gateway(GatewayError),
    Parse(ParseError),
    Template(prompts::TemplateError),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Gateway(e) => write!(f, "gateway: {e}"),
            StepError::Parse(e) => write!(f, "parse: {e}"),
            StepError::Template(e) => write!(f, "template: {e}"),
        }
    }
}

impl Engine {
    pub fn new(gateway: LlmGateway, templates: Arc<TemplateRegistry>, model: ModelSettings) -> Self {
        Self {
            gateway,
            templates,
            model,
        }
    }

    /// English templates and default model settings.
    pub fn with_gateway(gateway: LlmGateway) -> Self {
        Self::new(gateway, Arc::new(TemplateRegistry::english()), ModelSettings::default())
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn shared_templates(&self) -> Arc<TemplateRegistry> {
        Arc::clone(&self.templates)
    }

    pub fn model(&self) -> &ModelSettings {
        &self.model
    }

    pub fn start_session(
        &self,
        config: EngineConfig,
        questionnaire: Questionnaire,
        method: MethodId,
    ) -> Result<(DialogueState, String), EngineError> {
        config.validate()?;
        questionnaire.validate()?;
        let opening = self.templates.phrases().opening.clone();
        let state = DialogueState {
            phase: Phase::SmallTalk,
            transcript: vec![Utterance::system(opening.clone())],
            slots: slots::make_initial_slot_set(),
            abduction_history: Vec::new(),
            method: method.into(),
            questionnaire,
            config,
            turn_index: 0,
            small_talk_turns: 0,
            termination: None,
        };
        Ok((state, opening))
    }

    /// Processes one user utterance and produces the system reply.
    ///
    /// On error the state is left untouched.
    pub fn advance(&self, state: &mut DialogueState, user_utterance: &str) -> Result<TurnOutcome, EngineError> {
        if !state.accepts_input() {
            return Err(EngineError::PhaseClosed(state.phase));
        }
        let utterance = user_utterance.trim();
        if utterance.is_empty() {
            return Err(EngineError::EmptyUtterance);
        }

        state.transcript.push(Utterance::user(utterance));
        state.turn_index += 1;
        let mut trace = TurnTrace {
            turn: state.turn_index,
            method: state.method.id(),
            phase_before: state.phase,
            phase_after: state.phase,
            user_utterance: utterance.to_owned(),
            system_utterance: String::new(),
            entered_interview: false,
            probe: None,
            fill: None,
            generation: None,
            termination: None,
            question: None,
            slot_count: 0,
            fill_rate: 0.0,
            prompts: Vec::new(),
        };

        let reply = if state.phase == Phase::SmallTalk && !self.transition_check(state, &mut trace) {
            state.small_talk_turns += 1;
            self.small_talk_reply(state, &mut trace)
        } else {
            if state.phase == Phase::SmallTalk {
                state.phase = Phase::Interview;
                trace.entered_interview = true;
            }
            self.interview_turn(state, &mut trace)
        };

        state.transcript.push(Utterance::system(reply.clone()));
        trace.phase_after = state.phase;
        trace.system_utterance = reply.clone();
        trace.slot_count = state.slots.len();
        trace.fill_rate = state.slots.fill_rate().unwrap_or(0.0);
        Ok(TurnOutcome {
            system_utterance: reply,
            phase: state.phase,
            terminal: state.phase == Phase::ReportReady,
            trace,
        })
    }

    /// Moves a finished session from `report_ready` to `closed`.
    pub fn close(&self, state: &mut DialogueState) -> Result<(), EngineError> {
        if state.phase != Phase::ReportReady {
            return Err(EngineError::WrongPhase {
                expected: Phase::ReportReady,
                actual: state.phase,
            });
        }
        state.phase = Phase::Closed;
        Ok(())
    }

    /// Whether the small-talk phase should hand over to the interview.
    pub fn detect_interview_transition(&self, state: &DialogueState) -> bool {
        let mut scratch = TurnTrace {
            turn: state.turn_index,
            method: state.method.id(),
            phase_before: state.phase,
            phase_after: state.phase,
            user_utterance: String::new(),
            system_utterance: String::new(),
            entered_interview: false,
            probe: None,
            fill: None,
            generation: None,
            termination: None,
            question: None,
            slot_count: 0,
            fill_rate: 0.0,
            prompts: Vec::new(),
        };
        self.transition_check(state, &mut scratch)
    }

    fn transition_check(&self, state: &DialogueState, trace: &mut TurnTrace) -> bool {
        if state.small_talk_turns >= state.config.small_talk_fallback_turns {
            return true;
        }
        let bindings = Bindings::new().history(&state.transcript);
        let verdict = self
            .run_step(PromptKind::TopicProbe, &bindings, trace, prompts::parse_topic_probe_output)
            .unwrap_or_else(|e| {
                tracing::warn!(error = %e, "topic probe failed; treating as no transition");
                false
            });
        trace.probe = Some(verdict);
        verdict
    }

    fn small_talk_reply(&self, state: &DialogueState, trace: &mut TurnTrace) -> String {
        let bindings = Bindings::new().history(&state.transcript);
        let text = self
            .render(PromptKind::SmallTalk, &bindings, trace)
            .and_then(|prompt| self.call(PromptKind::SmallTalk, vec![ChatMessage::new(Role::User, prompt)]));
        match text {
            Ok(text) if !text.trim().is_empty() => text.trim().to_owned(),
            Ok(_) => self.templates.phrases().fallback_small_talk.clone(),
            Err(e) => {
                tracing::warn!(error = %e, "small talk failed; using fallback");
                self.templates.phrases().fallback_small_talk.clone()
            }
        }
    }

    fn interview_turn(&self, state: &mut DialogueState, trace: &mut TurnTrace) -> String {
        self.fill_step(state, trace);
        if state.method.generates_slots() {
            self.generation_step(state, trace);
        }

        let decision = should_terminate(state);
        trace.termination = Some(decision.clone());
        if decision.terminate {
            state.phase = Phase::ReportReady;
            state.termination = Some(decision);
            return self.templates.phrases().closing.clone();
        }
        self.question_step(state, trace)
    }

    fn fill_step(&self, state: &mut DialogueState, trace: &mut TurnTrace) {
        let bindings = Bindings::new()
            .questionnaire(&state.questionnaire)
            .history(&state.transcript)
            .slots(&state.slots);
        let mut fill = FillTrace::default();
        match self.run_step(PromptKind::SlotFill, &bindings, trace, prompts::parse_slot_fill_output) {
            Ok(values) => {
                let (next, log) = state.slots.merge_fill(&values, state.turn_index);
                state.slots = next;
                fill.filled = log.filled;
                fill.discarded = log.discarded;
                if !fill.discarded.is_empty() {
                    tracing::debug!(discarded = ?fill.discarded, "fill proposed unknown slots");
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, turn = state.turn_index, "slot fill failed; keeping prior slots");
                fill.degraded = Some(e.to_string());
            }
        }
        trace.fill = Some(fill);
    }

    fn generation_step(&self, state: &mut DialogueState, trace: &mut TurnTrace) {
        let turn = state.turn_index;
        let cap = state.config.slot_cap_per_turn;
        let mut generation = GenerationTrace::default();
        if state.method.uses_abduction() {
            let bindings = Bindings::new()
                .questionnaire(&state.questionnaire)
                .history(&state.transcript)
                .slots(&state.slots)
                .abductions(&state.abduction_history);
            match self.run_step(PromptKind::SlotGenAbductive, &bindings, trace, |raw| {
                prompts::parse_slot_gen_abductive_output(raw, turn)
            }) {
                Ok((mut record, warnings)) => {
                    let (next, log) = state.slots.add_generated(&record.drafts, cap, turn);
                    state.slots = next;
                    generation.proposed = record.drafts.len();
                    // The history keeps only what entered the slot set.
                    let mut admitted: HashSet<String> =
                        log.admitted.iter().filter_map(|n| slots::normalize_name(n).ok()).collect();
                    record
                        .drafts
                        .retain(|d| slots::normalize_name(&d.name).is_ok_and(|k| admitted.remove(&k)));
                    apply_log(&mut generation, log);
                    generation.warnings = warnings;
                    generation.abduction = Some(record.clone());
                    state.abduction_history.push(record);
                }
                Err(e) => {
                    tracing::warn!(error = %e, turn, "abductive generation failed; skipping");
                    generation.degraded = Some(e.to_string());
                }
            }
        } else {
            let bindings = Bindings::new()
                .questionnaire(&state.questionnaire)
                .history(&state.transcript)
                .slots(&state.slots);
            match self.run_step(
                PromptKind::SlotGenDirect,
                &bindings,
                trace,
                prompts::parse_slot_gen_direct_output,
            ) {
                Ok((drafts, warnings)) => {
                    let (next, log) = state.slots.add_generated(&drafts, cap, turn);
                    state.slots = next;
                    generation.proposed = drafts.len();
                    apply_log(&mut generation, log);
                    generation.warnings = warnings;
                }
                Err(e) => {
                    tracing::warn!(error = %e, turn, "slot generation failed; skipping");
                    generation.degraded = Some(e.to_string());
                }
            }
        }
        trace.generation = Some(generation);
    }

    fn question_step(&self, state: &DialogueState, trace: &mut TurnTrace) -> String {
        let bindings = Bindings::new()
            .questionnaire(&state.questionnaire)
            .history(&state.transcript)
            .slots(&state.slots);
        let (text, mut qtrace) =
            match self.run_step(PromptKind::QuestionGen, &bindings, trace, prompts::parse_question_output) {
                Ok((result, warnings)) => (
                    result.question,
                    QuestionTrace {
                        targets: result.target_slots,
                        fallback: false,
                        over_length: false,
                        warnings,
                        degraded: None,
                    },
                ),
                Err(e) => {
                    tracing::warn!(error = %e, "question generation failed; using canned probe");
                    let phrases = self.templates.phrases();
                    let (text, targets) = match state.slots.first_unfilled() {
                        Some(slot) => (
                            phrases.fallback_question_for(slot.name()),
                            vec![slot.name().to_owned()],
                        ),
                        None => (phrases.fallback_open_question.clone(), Vec::new()),
                    };
                    (
                        text,
                        QuestionTrace {
                            targets,
                            fallback: true,
                            over_length: false,
                            warnings: Vec::new(),
                            degraded: Some(e.to_string()),
                        },
                    )
                }
            };
        let length = grapheme_len(&text);
        if length > state.config.max_question_chars {
            tracing::info!(length, limit = state.config.max_question_chars, "question exceeds soft length limit");
            qtrace.over_length = true;
        }
        trace.question = Some(qtrace);
        text
    }

    fn render(&self, kind: PromptKind, bindings: &Bindings<'_>, trace: &mut TurnTrace) -> Result<String, StepError> {
        let text = self.templates.render(kind, bindings).map_err(StepError::Template)?;
        trace.prompts.push(RenderedPrompt {
            kind,
            text: text.clone(),
        });
        Ok(text)
    }

    fn call(&self, kind: PromptKind, messages: Vec<ChatMessage>) -> Result<String, StepError> {
        let request = CompletionRequest {
            kind: kind.label().to_owned(),
            messages,
            temperature: self.model.temperature,
            model_id: self.model.model_id.clone(),
            max_output: self.model.max_output,
        };
        self.gateway
            .complete(&request)
            .map(|r| r.text)
            .map_err(StepError::Gateway)
    }

    /// Renders, completes and parses; retries once with a corrective
    /// instruction when the output is not valid JSON.
    fn run_step<T>(
        &self,
        kind: PromptKind,
        bindings: &Bindings<'_>,
        trace: &mut TurnTrace,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, StepError> {
        let prompt = self.render(kind, bindings, trace)?;
        let first = self.call(kind, vec![ChatMessage::new(Role::User, prompt.clone())])?;
        match parse(&first) {
            Ok(value) => Ok(value),
            Err(ParseError::Payload(_)) | Err(ParseError::NotAnObject) => {
                let corrective = self.templates.phrases().corrective_instruction.clone();
                let second = self.call(
                    kind,
                    vec![
                        ChatMessage::new(Role::User, prompt),
                        ChatMessage::new(Role::Assistant, first),
                        ChatMessage::new(Role::User, corrective),
                    ],
                )?;
                parse(&second).map_err(StepError::Parse)
            }
            Err(other) => Err(StepError::Parse(other)),
        }
    }
}

fn apply_log(generation: &mut GenerationTrace, log: AddLog) {
    generation.admitted = log.admitted;
    generation.dropped = log.dropped;
}
