//! Post-interview report, share selection and markdown export.
//!
//! Entries are grouped by category. A slot with several categories is listed
//! once, under its first category; the other sections carry a cross-reference.

use crate::engine::{DialogueState, Engine, Phase};
use crate::llm::{ChatMessage, CompletionRequest, Role};
use crate::prompts::{parse_report_output, Bindings, PromptKind};
use crate::slots::{normalize_name, SlotSet};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const REPORT_TITLE: &str = "Career Interview Report";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub slot: String,
    pub value: String,
    pub summary: String,
    pub categories: Vec<String>,
    pub shared: bool,
}

/// Pointer from a secondary category to the section holding the entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossRef {
    pub slot: String,
    pub section: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub category: String,
    pub entries: Vec<ReportEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub see_also: Vec<CrossRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    Model,
    /// The model call failed; summaries are the raw slot values.
    RawValues,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub sections: Vec<ReportSection>,
    pub summary_source: SummarySource,
}

/// Slot name to whether the entry may be shown to the manager.
pub type ShareSelection = IndexMap<String, bool>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedEntry {
    pub slot: String,
    pub value: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedSection {
    pub category: String,
    pub entries: Vec<SharedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub see_also: Vec<CrossRef>,
}

/// The part of a report the nurse agreed to share.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedReport {
    pub sections: Vec<SharedSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("report requires phase report_ready or later, session is in {0}")]
    WrongPhase(Phase),
    #[error("no report entry named `{0}`")]
    UnknownEntry(String),
}

impl Report {
    /// Assembles a report from the filled slots. Slots missing from
    /// `summaries` fall back to their raw value.
    pub fn assemble(slots: &SlotSet, summaries: &IndexMap<String, String>, source: SummarySource) -> Report {
        let by_canonical: IndexMap<String, &String> = summaries
            .iter()
            .filter_map(|(k, v)| normalize_name(k).ok().map(|c| (c, v)))
            .collect();
        let mut sections: IndexMap<String, ReportSection> = IndexMap::new();
        for slot in slots.iter() {
            for category in slot.categories() {
                sections.entry(category.clone()).or_insert_with(|| ReportSection {
                    category: category.clone(),
                    entries: Vec::new(),
                    see_also: Vec::new(),
                });
            }
        }
        for slot in slots.iter() {
            let Some(value) = slot.value() else { continue };
            let summary = by_canonical
                .get(&slot.canonical_name())
                .map(|s| s.to_string())
                .unwrap_or_else(|| value.to_owned());
            let home = slot.categories()[0].clone();
            for other in &slot.categories()[1..] {
                if *other != home {
                    sections[other].see_also.push(CrossRef {
                        slot: slot.name().to_owned(),
                        section: home.clone(),
                    });
                }
            }
            sections[&home].entries.push(ReportEntry {
                slot: slot.name().to_owned(),
                value: value.to_owned(),
                summary,
                categories: slot.categories().to_vec(),
                shared: true,
            });
        }
        Report {
            sections: sections
                .into_values()
                .filter(|s| !s.entries.is_empty() || !s.see_also.is_empty())
                .collect(),
            summary_source: source,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReportEntry> {
        self.sections.iter().flat_map(|s| s.entries.iter())
    }

    pub fn entry_count(&self) -> usize {
        self.entries().count()
    }

    fn find_entry(&self, name: &str) -> Option<(usize, usize)> {
        let wanted = normalize_name(name).ok()?;
        self.sections.iter().enumerate().find_map(|(si, s)| {
            s.entries
                .iter()
                .position(|e| normalize_name(&e.slot).ok().as_deref() == Some(wanted.as_str()))
                .map(|ei| (si, ei))
        })
    }

    /// Returns a copy with the selection's share flags applied.
    pub fn with_selection(&self, selection: &ShareSelection) -> Result<Report, ReportError> {
        let mut next = self.clone();
        for (name, shared) in selection {
            let (si, ei) = next
                .find_entry(name)
                .ok_or_else(|| ReportError::UnknownEntry(name.clone()))?;
            next.sections[si].entries[ei].shared = *shared;
        }
        Ok(next)
    }

    /// Entries currently flagged as shared.
    pub fn shared_view(&self) -> SharedReport {
        let shared_names: Vec<&str> = self.entries().filter(|e| e.shared).map(|e| e.slot.as_str()).collect();
        let sections = self
            .sections
            .iter()
            .map(|s| SharedSection {
                category: s.category.clone(),
                entries: s
                    .entries
                    .iter()
                    .filter(|e| e.shared)
                    .map(|e| SharedEntry {
                        slot: e.slot.clone(),
                        value: e.value.clone(),
                        summary: e.summary.clone(),
                    })
                    .collect(),
                see_also: s
                    .see_also
                    .iter()
                    .filter(|r| shared_names.contains(&r.slot.as_str()))
                    .cloned()
                    .collect(),
            })
            .filter(|s| !s.entries.is_empty() || !s.see_also.is_empty())
            .collect();
        SharedReport { sections }
    }
}

/// Summarizes the filled slots through the report prompt. Only slot content
/// is sent; the dialogue history never enters the report.
pub fn build_report(engine: &Engine, state: &DialogueState) -> Result<Report, ReportError> {
    if state.phase() < Phase::ReportReady {
        return Err(ReportError::WrongPhase(state.phase()));
    }
    let filled = state.slots().filled_only();
    if filled.is_empty() {
        return Ok(Report::assemble(state.slots(), &IndexMap::new(), SummarySource::Model));
    }
    let summaries = engine
        .templates()
        .render(PromptKind::ReportGen, &Bindings::new().slots(&filled))
        .map_err(|e| e.to_string())
        .and_then(|prompt| {
            let model = engine.model();
            let request = CompletionRequest {
                kind: PromptKind::ReportGen.label().to_owned(),
                messages: vec![ChatMessage::new(Role::User, prompt)],
                temperature: model.temperature,
                model_id: model.model_id.clone(),
                max_output: model.max_output,
            };
            engine.gateway().complete(&request).map_err(|e| e.to_string())
        })
        .and_then(|done| parse_report_output(&done.text).map_err(|e| e.to_string()));
    Ok(match summaries {
        Ok(map) => Report::assemble(state.slots(), &map, SummarySource::Model),
        Err(reason) => {
            tracing::warn!(%reason, "report summaries failed; using raw slot values");
            Report::assemble(state.slots(), &IndexMap::new(), SummarySource::RawValues)
        }
    })
}

pub fn apply_share_selection(report: &Report, selection: &ShareSelection) -> Result<SharedReport, ReportError> {
    Ok(report.with_selection(selection)?.shared_view())
}

pub fn render_report_markdown(shared: &SharedReport) -> String {
    let mut out = format!("# {REPORT_TITLE}\n");
    for section in &shared.sections {
        let _ = write!(out, "\n## {}\n\n", section.category);
        for entry in &section.entries {
            let _ = writeln!(out, "- **{}**: {}", entry.slot, entry.summary);
        }
        for r in &section.see_also {
            let _ = writeln!(out, "- *{}*: see {}", r.slot, r.section);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slots::{make_initial_slot_set, SlotValueMap};

    fn filled(pairs: &[(&str, &str)]) -> SlotSet {
        let values: SlotValueMap = pairs.iter().copied().collect();
        make_initial_slot_set().merge_fill(&values, 1).0
    }

    #[test]
    fn empty_slots_give_empty_report() {
        let report = Report::assemble(&make_initial_slot_set(), &IndexMap::new(), SummarySource::Model);
        assert_eq!(report.entry_count(), 0);
        assert!(report.sections.is_empty());
        assert_eq!(render_report_markdown(&report.shared_view()), "# Career Interview Report\n");
    }

    #[test]
    fn multi_category_entry_listed_once_with_cross_reference() {
        let slots = filled(&[("Career development plan", "nursing management")]);
        let report = Report::assemble(&slots, &IndexMap::new(), SummarySource::RawValues);
        assert_eq!(report.entry_count(), 1);
        assert_eq!(report.sections[0].category, "Career");
        assert_eq!(report.sections[0].entries[0].summary, "nursing management");
        assert_eq!(report.sections[1].category, "Plan");
        assert_eq!(
            report.sections[1].see_also,
            vec![CrossRef {
                slot: "Career development plan".into(),
                section: "Career".into()
            }]
        );
    }

    #[test]
    fn sections_follow_slot_set_category_order() {
        let slots = filled(&[("Job satisfaction", "rewarding"), ("Training preferences", "online courses")]);
        let report = Report::assemble(&slots, &IndexMap::new(), SummarySource::Model);
        let order: Vec<_> = report.sections.iter().map(|s| s.category.as_str()).collect();
        assert_eq!(order, vec!["Preference", "Training", "Job", "Satisfaction"]);
    }

    #[test]
    fn summaries_matched_by_canonical_name() {
        let slots = filled(&[("Job satisfaction", "rewarding")]);
        let mut summaries = IndexMap::new();
        summaries.insert("job  SATISFACTION".to_owned(), "Finds the work rewarding.".to_owned());
        let report = Report::assemble(&slots, &summaries, SummarySource::Model);
        assert_eq!(report.entries().next().unwrap().summary, "Finds the work rewarding.");
    }

    #[test]
    fn share_selection_filters_without_mutating() {
        let slots = filled(&[("Job satisfaction", "rewarding"), ("Job dissatisfaction", "few promotions")]);
        let report = Report::assemble(&slots, &IndexMap::new(), SummarySource::Model);

        let all: ShareSelection = report.entries().map(|e| (e.slot.clone(), true)).collect();
        assert_eq!(apply_share_selection(&report, &all).unwrap(), report.shared_view());

        let mut one_off = ShareSelection::new();
        one_off.insert("Job dissatisfaction".into(), false);
        let shared = apply_share_selection(&report, &one_off).unwrap();
        let names: Vec<_> = shared.sections.iter().flat_map(|s| &s.entries).map(|e| e.slot.as_str()).collect();
        assert_eq!(names, vec!["Job satisfaction"]);
        assert!(report.entries().all(|e| e.shared));
        assert!(!render_report_markdown(&shared).contains("few promotions"));

        let mut unknown = ShareSelection::new();
        unknown.insert("Salary".into(), false);
        assert_eq!(
            apply_share_selection(&report, &unknown),
            Err(ReportError::UnknownEntry("Salary".into()))
        );
    }

    #[test]
    fn markdown_is_deterministic() {
        let slots = filled(&[("Career development plan", "nursing management"), ("Job satisfaction", "rewarding")]);
        let shared = Report::assemble(&slots, &IndexMap::new(), SummarySource::Model).shared_view();
        let a = render_report_markdown(&shared);
        assert_eq!(a, render_report_markdown(&shared.clone()));
        assert_eq!(
            a,
            "# Career Interview Report\n\n## Career\n\n- **Career development plan**: nursing management\n\n## Plan\n\n- *Career development plan*: see Career\n\n## Job\n\n- **Job satisfaction**: rewarding\n\n## Satisfaction\n\n- *Job satisfaction*: see Job\n"
        );
    }
}
