//! Persona-driven simulated user and the automatic dialogue loop.

use crate::engine::{
    DialogueState, Engine, EngineConfig, EngineError, MethodId, TerminationDecision, TerminationReason, TurnTrace,
};
use crate::llm::{ChatMessage, CompletionRequest, GatewayError, LlmGateway, ModelSettings, Role};
use crate::persona::Persona;
use crate::prompts::{AbductionRecord, Bindings, PromptKind, TemplateError, TemplateRegistry};
use crate::slots::{self, SlotSet};
use crate::transcript::{grapheme_len, Speaker, Utterance};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Soft limit on simulated reply length, in graphemes.
pub const MAX_REPLY_CHARS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplyViolation {
    OverLength { graphemes: usize },
    AskedQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedReply {
    pub text: String,
    pub violations: Vec<ReplyViolation>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimulatorError {
    #[error("the simulator may only speak after the system")]
    NotUsersTurn,
    #[error("simulator returned an empty reply twice")]
    EmptyReply,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone)]
pub struct UserSimulator {
    gateway: LlmGateway,
    templates: Arc<TemplateRegistry>,
    model: ModelSettings,
}

impl UserSimulator {
    pub fn new(gateway: LlmGateway, templates: Arc<TemplateRegistry>, model: ModelSettings) -> Self {
        Self {
            gateway,
            templates,
            model,
        }
    }

    /// Shares the engine's backend, templates and model settings.
    pub fn for_engine(engine: &Engine) -> Self {
        Self::new(
            engine.gateway().clone(),
            engine.shared_templates(),
            engine.model().clone(),
        )
    }

    pub fn simulate_reply(&self, persona: &Persona, transcript: &[Utterance]) -> Result<SimulatedReply, SimulatorError> {
        if transcript.last().map(|u| u.speaker) != Some(Speaker::System) {
            return Err(SimulatorError::NotUsersTurn);
        }
        let setting = persona.render_setting();
        let prompt = self
            .templates
            .render(PromptKind::UserSim, &Bindings::new().persona(&setting).history(transcript))?;
        let request = CompletionRequest {
            kind: PromptKind::UserSim.label().to_owned(),
            messages: vec![ChatMessage::new(Role::User, prompt)],
            temperature: self.model.temperature,
            model_id: self.model.model_id.clone(),
            max_output: self.model.max_output,
        };
        let mut text = self.gateway.complete(&request)?.text.trim().to_owned();
        if text.is_empty() {
            tracing::warn!(persona = %persona.name, "empty simulated reply; retrying once");
            text = self.gateway.complete(&request)?.text.trim().to_owned();
            if text.is_empty() {
                return Err(SimulatorError::EmptyReply);
            }
        }
        let mut violations = Vec::new();
        let graphemes = grapheme_len(&text);
        if graphemes > MAX_REPLY_CHARS {
            violations.push(ReplyViolation::OverLength { graphemes });
        }
        if text.ends_with('?') || text.ends_with('？') {
            violations.push(ReplyViolation::AskedQuestion);
        }
        if !violations.is_empty() {
            tracing::info!(persona = %persona.name, ?violations, "simulated reply breaks prompt rules");
        }
        Ok(SimulatedReply { text, violations })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnViolation {
    pub turn: usize,
    pub violation: ReplyViolation,
}

/// Everything the evaluation harness needs from one simulated dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoDialogueResult {
    pub persona: String,
    pub method: MethodId,
    pub transcript: Vec<Utterance>,
    #[serde(with = "slots::persisted")]
    pub final_slots: SlotSet,
    pub abduction_history: Vec<AbductionRecord>,
    pub traces: Vec<TurnTrace>,
    pub termination: Option<TerminationDecision>,
    /// Why the dialogue stopped early, when it did.
    pub aborted: Option<String>,
    pub violations: Vec<TurnViolation>,
}

impl AutoDialogueResult {
    /// Completed user turns.
    pub fn turns(&self) -> usize {
        self.traces.len()
    }

    pub fn termination_reason(&self) -> Option<TerminationReason> {
        self.termination.as_ref().and_then(|t| t.reason)
    }

    pub fn termination_label(&self) -> String {
        match (&self.aborted, self.termination_reason()) {
            (Some(_), _) => "aborted".into(),
            (None, Some(reason)) => reason.to_string(),
            (None, None) => "incomplete".into(),
        }
    }

    /// Slots admitted by generation over the whole dialogue.
    pub fn slots_generated(&self) -> usize {
        self.traces.iter().map(|t| t.admitted_drafts().len()).sum()
    }

    pub fn from_state(persona: &str, state: &DialogueState, traces: Vec<TurnTrace>) -> Self {
        Self {
            persona: persona.to_owned(),
            method: state.method().id(),
            transcript: state.transcript().to_vec(),
            final_slots: state.slots().clone(),
            abduction_history: state.abduction_history().to_vec(),
            traces,
            termination: state.termination().cloned(),
            aborted: None,
            violations: Vec::new(),
        }
    }
}

/// Drives one session between the engine and the simulator until the
/// engine stops accepting input. Failures end the dialogue with an abort
/// marker and the partial transcript.
pub fn run_auto_dialogue(
    engine: &Engine,
    simulator: &UserSimulator,
    persona: &Persona,
    method: MethodId,
    config: &EngineConfig,
) -> Result<(AutoDialogueResult, DialogueState), EngineError> {
    let (mut state, _) = engine.start_session(config.clone(), persona.questionnaire.clone(), method)?;
    let mut traces = Vec::new();
    let mut violations = Vec::new();
    let mut aborted = None;
    // The engine enforces its own bound; this only guards against a broken config.
    let bound = config.small_talk_fallback_turns + config.max_interview_turns + 1;
    while state.accepts_input() {
        if traces.len() >= bound {
            aborted = Some(format!("exceeded {bound} exchanges"));
            break;
        }
        let reply = match simulator.simulate_reply(persona, state.transcript()) {
            Ok(reply) => reply,
            Err(e) => {
                tracing::warn!(persona = %persona.name, %method, error = %e, "simulator failed; aborting dialogue");
                aborted = Some(e.to_string());
                break;
            }
        };
        let turn = state.turn_index() + 1;
        violations.extend(reply.violations.into_iter().map(|violation| TurnViolation { turn, violation }));
        match engine.advance(&mut state, &reply.text) {
            Ok(outcome) => traces.push(outcome.trace),
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let mut result = AutoDialogueResult::from_state(&persona.name, &state, traces);
    result.aborted = aborted;
    result.violations = violations;
    Ok((result, state))
}
