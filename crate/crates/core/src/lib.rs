//! Slot-filling career interview engine with abduction-driven slot
//! generation, a persona-based user simulator and an evaluation harness.

pub mod engine;
pub mod eval;
pub mod llm;
pub mod persona;
pub mod prompts;
pub mod questionnaire;
pub mod report;
pub mod simulator;
pub mod slots;
pub mod transcript;

pub use engine::{
    evaluate_termination, should_terminate, DialogueState, Engine, EngineConfig, EngineError, MethodId,
    MethodPolicy, Phase, TerminationDecision, TerminationReason, TurnOutcome, TurnTrace,
};
pub use llm::{LlmGateway, OfflineBackend, ScriptEntry, ScriptedBackend};
pub use questionnaire::Questionnaire;
pub use slots::{make_initial_slot_set, Slot, SlotDraft, SlotSet, SlotValueMap};
pub use transcript::{Speaker, Utterance};
pub use persona::{load_persona, load_personas_dir, CheckItem, Persona};
pub use report::{apply_share_selection, build_report, render_report_markdown, Report, SharedReport};
pub use simulator::{run_auto_dialogue, AutoDialogueResult, UserSimulator};
