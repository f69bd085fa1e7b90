//! Prompt templates and the parsers for their outputs.
//!
//! Templates are plain UTF-8 text files with `< Placeholder >` markers. The
//! English set is compiled in; a locale directory with the same file names
//! overrides any subset of it at runtime.

mod parse;

pub use parse::{
    parse_coverage_judge_output, parse_question_output, parse_report_output,
    parse_slot_fill_output, parse_slot_gen_abductive_output, parse_slot_gen_direct_output,
    parse_topic_probe_output, parse_value_judge_output, ParseError, ParseWarning, QuestionResult,
};

use crate::questionnaire::Questionnaire;
use crate::slots::{SlotDraft, SlotSet};
use crate::transcript::{render_history, Utterance};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    SlotFill,
    SlotGenDirect,
    SlotGenAbductive,
    QuestionGen,
    UserSim,
    ReportGen,
    TopicProbe,
    SmallTalk,
    CoverageJudge,
    ValueJudge,
}

impl PromptKind {
    pub const ALL: [PromptKind; 10] = [
        PromptKind::SlotFill,
        PromptKind::SlotGenDirect,
        PromptKind::SlotGenAbductive,
        PromptKind::QuestionGen,
        PromptKind::UserSim,
        PromptKind::ReportGen,
        PromptKind::TopicProbe,
        PromptKind::SmallTalk,
        PromptKind::CoverageJudge,
        PromptKind::ValueJudge,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PromptKind::SlotFill => "slot_fill",
            PromptKind::SlotGenDirect => "slot_gen_direct",
            PromptKind::SlotGenAbductive => "slot_gen_abductive",
            PromptKind::QuestionGen => "question_gen",
            PromptKind::UserSim => "user_sim",
            PromptKind::ReportGen => "report_gen",
            PromptKind::TopicProbe => "topic_probe",
            PromptKind::SmallTalk => "small_talk",
            PromptKind::CoverageJudge => "coverage_judge",
            PromptKind::ValueJudge => "value_judge",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }

    /// Prompts issued on behalf of the interviewing system (not the simulator or judges).
    pub fn is_engine_side(self) -> bool {
        !matches!(
            self,
            PromptKind::UserSim | PromptKind::CoverageJudge | PromptKind::ValueJudge
        )
    }

    fn default_body(self) -> &'static str {
        match self {
            PromptKind::SlotFill => include_str!("../../templates/en/slot_fill.txt"),
            PromptKind::SlotGenDirect => include_str!("../../templates/en/slot_gen_direct.txt"),
            PromptKind::SlotGenAbductive => {
                include_str!("../../templates/en/slot_gen_abductive.txt")
            }
            PromptKind::QuestionGen => include_str!("../../templates/en/question_gen.txt"),
            PromptKind::UserSim => include_str!("../../templates/en/user_sim.txt"),
            PromptKind::ReportGen => include_str!("../../templates/en/report_gen.txt"),
            PromptKind::TopicProbe => include_str!("../../templates/en/topic_probe.txt"),
            PromptKind::SmallTalk => include_str!("../../templates/en/small_talk.txt"),
            PromptKind::CoverageJudge => include_str!("../../templates/en/coverage_judge.txt"),
            PromptKind::ValueJudge => include_str!("../../templates/en/value_judge.txt"),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placeholder {
    DialogueHistory,
    CurrentSlots,
    AbductionHistory,
    PersonaSetting,
    Questionnaire,
    CheckItem,
    CandidateValues,
}

impl Placeholder {
    const ALL: [Placeholder; 7] = [
        Placeholder::DialogueHistory,
        Placeholder::CurrentSlots,
        Placeholder::AbductionHistory,
        Placeholder::PersonaSetting,
        Placeholder::Questionnaire,
        Placeholder::CheckItem,
        Placeholder::CandidateValues,
    ];

    pub fn marker_name(self) -> &'static str {
        match self {
            Placeholder::DialogueHistory => "Dialogue History",
            Placeholder::CurrentSlots => "Current Slots",
            Placeholder::AbductionHistory => "Abduction History",
            Placeholder::PersonaSetting => "Each Persona's Setting",
            Placeholder::Questionnaire => "Questionnaire",
            Placeholder::CheckItem => "Check Item",
            Placeholder::CandidateValues => "Candidate Values",
        }
    }

    fn from_marker(inner: &str) -> Option<Self> {
        let inner = inner.trim();
        Self::ALL.into_iter().find(|p| p.marker_name() == inner)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{kind}` references unknown placeholder `<{marker}>`")]
    UnknownPlaceholder { kind: PromptKind, marker: String },
    #[error("template `{kind}` needs a binding for `<{}>`", .placeholder.marker_name())]
    MissingBinding {
        kind: PromptKind,
        placeholder: Placeholder,
    },
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid phrases file: {0}")]
    Phrases(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Text(String),
    Slot(Placeholder),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    kind: PromptKind,
    segments: Vec<Segment>,
}

/// Scans for `<...>` spans whose content looks like a placeholder name.
fn marker_spans(body: &str) -> Vec<(usize, usize, &str)> {
    let mut spans = Vec::new();
    let mut search = 0;
    while let Some(rel) = body[search..].find('<') {
        let start = search + rel;
        let rest = &body[start + 1..];
        let close = rest.find('>');
        let Some(close) = close else { break };
        let inner = &rest[..close];
        let looks_like_marker = !inner.trim().is_empty()
            && inner.len() <= 48
            && inner
                .chars()
                .all(|c| c.is_ascii_alphabetic() || c == ' ' || c == '\'' || c == '_');
        if looks_like_marker {
            spans.push((start, start + 1 + close + 1, inner));
            search = start + 1 + close + 1;
        } else {
            search = start + 1;
        }
    }
    spans
}

impl PromptTemplate {
    pub fn parse(kind: PromptKind, body: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut cursor = 0;
        for (start, end, inner) in marker_spans(body) {
            let placeholder =
                Placeholder::from_marker(inner).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    kind,
                    marker: inner.trim().to_owned(),
                })?;
            if start > cursor {
                segments.push(Segment::Text(body[cursor..start].to_owned()));
            }
            segments.push(Segment::Slot(placeholder));
            cursor = end;
        }
        if cursor < body.len() {
            segments.push(Segment::Text(body[cursor..].to_owned()));
        }
        Ok(Self { kind, segments })
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut out = Vec::new();
        for seg in &self.segments {
            if let Segment::Slot(p) = seg {
                if !out.contains(p) {
                    out.push(*p);
                }
            }
        }
        out
    }

    pub fn render(&self, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
        let mut rendered: HashMap<Placeholder, String> = HashMap::new();
        for p in self.placeholders() {
            let text = bindings.resolve(p).ok_or(TemplateError::MissingBinding {
                kind: self.kind,
                placeholder: p,
            })?;
            rendered.insert(p, text);
        }
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(p) => out.push_str(&rendered[p]),
            }
        }
        Ok(out)
    }
}

/// One abductive step: surprising fact C, suspected reason A, and the slots drafted from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbductionRecord {
    pub surprising_fact_c: Option<String>,
    pub suspected_reason_a: Option<String>,
    pub drafts: Vec<SlotDraft>,
    pub turn: usize,
}

/// Numbered `(C, A)` list. Records without a surprising fact carry nothing to repeat and are skipped.
pub fn render_abduction_history(history: &[AbductionRecord]) -> String {
    let lines: Vec<String> = history
        .iter()
        .filter_map(|r| {
            r.surprising_fact_c.as_ref().map(|c| {
                (c, r.suspected_reason_a.as_deref().unwrap_or("none"))
            })
        })
        .enumerate()
        .map(|(i, (c, a))| format!("{}. Surprising Fact C: {}; Reason to Suspect A: {}", i + 1, c, a))
        .collect();
    if lines.is_empty() {
        "(none)".to_owned()
    } else {
        lines.join("\n")
    }
}

/// Values available for substitution. Unset fields are unbound.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a> {
    pub history: Option<&'a [Utterance]>,
    pub slots: Option<&'a SlotSet>,
    pub abductions: Option<&'a [AbductionRecord]>,
    pub persona: Option<&'a str>,
    pub questionnaire: Option<&'a Questionnaire>,
    pub check_item: Option<&'a str>,
    pub candidate_values: Option<&'a str>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(mut self, history: &'a [Utterance]) -> Self {
        self.history = Some(history);
        self
    }

    pub fn slots(mut self, slots: &'a SlotSet) -> Self {
        self.slots = Some(slots);
        self
    }

    pub fn abductions(mut self, abductions: &'a [AbductionRecord]) -> Self {
        self.abductions = Some(abductions);
        self
    }

    pub fn persona(mut self, persona: &'a str) -> Self {
        self.persona = Some(persona);
        self
    }

    pub fn questionnaire(mut self, questionnaire: &'a Questionnaire) -> Self {
        self.questionnaire = Some(questionnaire);
        self
    }

    pub fn check_item(mut self, item: &'a str) -> Self {
        self.check_item = Some(item);
        self
    }

    pub fn candidate_values(mut self, values: &'a str) -> Self {
        self.candidate_values = Some(values);
        self
    }

    fn resolve(&self, placeholder: Placeholder) -> Option<String> {
        match placeholder {
            Placeholder::DialogueHistory => self.history.map(render_history),
            Placeholder::CurrentSlots => self.slots.map(SlotSet::to_prompt_json),
            Placeholder::AbductionHistory => self.abductions.map(render_abduction_history),
            Placeholder::PersonaSetting => self.persona.map(str::to_owned),
            Placeholder::Questionnaire => self.questionnaire.map(Questionnaire::render),
            Placeholder::CheckItem => self.check_item.map(str::to_owned),
            Placeholder::CandidateValues => self.candidate_values.map(str::to_owned),
        }
    }
}

/// Fixed system utterances and fallbacks for one locale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrases {
    pub opening: String,
    pub closing: String,
    /// Canned probe; `{slot}` is replaced with the lowercased slot name.
    pub fallback_question: String,
    pub fallback_open_question: String,
    pub fallback_small_talk: String,
    pub corrective_instruction: String,
}

impl Default for Phrases {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../templates/en/phrases.json"))
            .expect("bundled phrases parse")
    }
}

impl Phrases {
    pub fn fallback_question_for(&self, slot_name: &str) -> String {
        self.fallback_question
            .replace("{slot}", &slot_name.to_lowercase())
    }
}

/// Immutable set of templates and phrases for one locale.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    locale: String,
    templates: HashMap<PromptKind, PromptTemplate>,
    phrases: Phrases,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::english()
    }
}

impl TemplateRegistry {
    /// The bundled English templates.
    pub fn english() -> Self {
        let templates = PromptKind::ALL
            .into_iter()
            .map(|k| {
                let t = PromptTemplate::parse(k, k.default_body())
                    .expect("bundled templates are valid");
                (k, t)
            })
            .collect();
        Self {
            locale: "en".into(),
            templates,
            phrases: Phrases::default(),
        }
    }

    /// Loads `<kind>.txt` files and `phrases.json` from `dir`, keeping the
    /// English default for anything missing.
    pub fn load_dir(dir: &Path, locale: &str) -> Result<Self, TemplateError> {
        let mut registry = Self::english();
        registry.locale = locale.to_owned();
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{}.txt", kind.label()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            registry.templates.insert(kind, PromptTemplate::parse(kind, &body)?);
        }
        let phrases_path = dir.join("phrases.json");
        if phrases_path.exists() {
            let text = std::fs::read_to_string(&phrases_path).map_err(|e| TemplateError::Io {
                path: phrases_path.display().to_string(),
                message: e.to_string(),
            })?;
            registry.phrases =
                serde_json::from_str(&text).map_err(|e| TemplateError::Phrases(e.to_string()))?;
        }
        Ok(registry)
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn phrases(&self) -> &Phrases {
        &self.phrases
    }

    pub fn template(&self, kind: PromptKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: PromptKind, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
        self.template(kind).render(bindings)
    }
}

/// Convenience wrapper over the bundled English registry.
pub fn render(kind: PromptKind, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
    TemplateRegistry::english().render(kind, bindings)
}

/// Text following a `Header:` line up to the next blank-line-separated header,
/// or to the end of the prompt.
pub fn section_after<'p>(prompt: &'p str, header: &str) -> Option<&'p str> {
    let needle = format!("{header}:\n");
    let start = prompt.rfind(&needle)? + needle.len();
    let rest = &prompt[start..];
    let end = rest
        .match_indices("\n\n")
        .map(|(i, _)| i)
        .find(|&i| {
            let after = &rest[i + 2..];
            let line = after.lines().next().unwrap_or("");
            line.ends_with(':') && !line.contains('{') && !line.starts_with(char::is_whitespace)
        })
        .unwrap_or(rest.len());
    Some(rest[..end].trim_end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slots::make_initial_slot_set;

    fn questionnaire() -> Questionnaire {
        serde_json::from_str(
            r#"{"training_preference": {"venue": "In-hospital"}, "next_year_preferences": {"selected": ["Continue"]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn bundled_templates_use_known_placeholders() {
        let registry = TemplateRegistry::english();
        assert_eq!(
            registry.template(PromptKind::SlotGenAbductive).placeholders(),
            vec![
                Placeholder::Questionnaire,
                Placeholder::DialogueHistory,
                Placeholder::CurrentSlots,
                Placeholder::AbductionHistory
            ]
        );
        assert_eq!(
            registry.template(PromptKind::UserSim).placeholders(),
            vec![Placeholder::PersonaSetting, Placeholder::DialogueHistory]
        );
    }

    #[test]
    fn abductive_prompt_requires_history_binding() {
        let slots = make_initial_slot_set();
        let q = questionnaire();
        let partial = Bindings::new().history(&[]).slots(&slots).questionnaire(&q);
        assert_eq!(
            render(PromptKind::SlotGenAbductive, &partial),
            Err(TemplateError::MissingBinding {
                kind: PromptKind::SlotGenAbductive,
                placeholder: Placeholder::AbductionHistory
            })
        );
        let full = partial.abductions(&[]);
        let text = render(PromptKind::SlotGenAbductive, &full).unwrap();
        assert!(text.contains("repeat the same abduction as before"));
        assert!(!text.contains("< Abduction History >"));
    }

    #[test]
    fn user_sim_prompt_carries_length_rule() {
        let text = render(
            PromptKind::UserSim,
            &Bindings::new().history(&[]).persona("Name: Aoi Endo"),
        )
        .unwrap();
        assert!(text.contains("utterance in 50 characters or less"));
        assert!(text.contains("Name: Aoi Endo"));
    }

    #[test]
    fn slot_fill_slots_section_round_trips() {
        let slots = make_initial_slot_set();
        let q = questionnaire();
        let text = render(
            PromptKind::SlotFill,
            &Bindings::new().history(&[]).slots(&slots).questionnaire(&q),
        )
        .unwrap();
        let section = section_after(&text, "Current Slots").unwrap();
        let parsed: SlotSet = serde_json::from_str(section).unwrap();
        assert_eq!(parsed.len(), 8);
        assert!(marker_spans(&text).is_empty());
    }

    #[test]
    fn abduction_history_is_numbered() {
        let history = vec![
            AbductionRecord {
                surprising_fact_c: Some("interest in management".into()),
                suspected_reason_a: Some("fewer night shifts".into()),
                drafts: vec![],
                turn: 2,
            },
            AbductionRecord {
                surprising_fact_c: None,
                suspected_reason_a: None,
                drafts: vec![],
                turn: 3,
            },
            AbductionRecord {
                surprising_fact_c: Some("considering other hospitals".into()),
                suspected_reason_a: None,
                drafts: vec![],
                turn: 4,
            },
        ];
        assert_eq!(
            render_abduction_history(&history),
            "1. Surprising Fact C: interest in management; Reason to Suspect A: fewer night shifts\n\
             2. Surprising Fact C: considering other hospitals; Reason to Suspect A: none"
        );
        assert_eq!(render_abduction_history(&[]), "(none)");
    }

    #[test]
    fn unknown_placeholder_is_rejected() {
        let err = PromptTemplate::parse(PromptKind::SlotFill, "Hello < Mystery Field >").unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }));
        // Comparisons in prose are not markers.
        assert!(PromptTemplate::parse(PromptKind::SlotFill, "a < 3 and b > 2").is_ok());
    }

    #[test]
    fn locale_dir_overrides_subset() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("topic_probe.txt"), "キャリア?\n<Dialogue History>").unwrap();
        let registry = TemplateRegistry::load_dir(dir.path(), "ja").unwrap();
        let text = registry
            .render(PromptKind::TopicProbe, &Bindings::new().history(&[Utterance::user("はい")]))
            .unwrap();
        assert_eq!(text, "キャリア?\nUser: はい");
        assert_eq!(registry.locale(), "ja");
        assert!(registry
            .render(PromptKind::UserSim, &Bindings::new().history(&[]).persona("p"))
            .unwrap()
            .contains("50 characters"));
    }

    #[test]
    fn fallback_question_names_slot() {
        assert_eq!(
            Phrases::default().fallback_question_for("Job satisfaction"),
            "Could you tell me about your job satisfaction?"
        );
    }
}
