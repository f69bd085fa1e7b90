//! Self-assessment questionnaire completed before the interview.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CareerPlan {
    #[serde(rename = "Nursing management")]
    NursingManagement,
    #[serde(rename = "Generalist")]
    Generalist,
    #[serde(rename = "Clinical nurse educator")]
    ClinicalNurseEducator,
    #[serde(rename = "Nurse department faculty")]
    NurseDepartmentFaculty,
    #[serde(rename = "Specialized nursing area")]
    SpecializedNursingArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingVenue {
    #[serde(rename = "In-hospital")]
    InHospital,
    #[serde(rename = "Outside-hospital")]
    OutsideHospital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NextYearPreference {
    #[serde(rename = "Continue")]
    Continue,
    #[serde(rename = "Transfer")]
    Transfer,
    #[serde(rename = "Resignation")]
    Resignation,
    #[serde(rename = "Further education")]
    FurtherEducation,
}

fn label<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Multiple-choice answer with an optional free-form description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Choices<T> {
    #[serde(default = "Vec::new")]
    pub selected: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

impl<T> Default for Choices<T> {
    fn default() -> Self {
        Self {
            selected: Vec::new(),
            free_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPreference {
    pub venue: TrainingVenue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    #[serde(default)]
    pub career_development_plans: Choices<CareerPlan>,
    pub training_preference: TrainingPreference,
    pub next_year_preferences: Choices<NextYearPreference>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid questionnaire: {}", .issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidQuestionnaire {
    pub issues: Vec<FieldIssue>,
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, a)| items[..i].iter().any(|b| a == b))
}

impl Questionnaire {
    pub fn validate(&self) -> Result<(), InvalidQuestionnaire> {
        let mut issues = Vec::new();
        if self.next_year_preferences.selected.is_empty() {
            issues.push(FieldIssue {
                path: "next_year_preferences.selected".into(),
                message: "at least one preference is required".into(),
            });
        }
        if has_duplicates(&self.next_year_preferences.selected) {
            issues.push(FieldIssue {
                path: "next_year_preferences.selected".into(),
                message: "duplicate selection".into(),
            });
        }
        if has_duplicates(&self.career_development_plans.selected) {
            issues.push(FieldIssue {
                path: "career_development_plans.selected".into(),
                message: "duplicate selection".into(),
            });
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(InvalidQuestionnaire { issues })
        }
    }

    /// Plain-text rendering used in prompts.
    pub fn render(&self) -> String {
        fn list<T: Serialize>(choices: &Choices<T>) -> String {
            let mut out = if choices.selected.is_empty() {
                "(none selected)".to_owned()
            } else {
                choices.selected.iter().map(label).collect::<Vec<_>>().join(", ")
            };
            if let Some(text) = choices.free_text.as_deref().filter(|t| !t.trim().is_empty()) {
                out.push_str(&format!(" (notes: {})", text.trim()));
            }
            out
        }
        let mut training = label(&self.training_preference.venue);
        if let Some(name) = self
            .training_preference
            .training_name
            .as_deref()
            .filter(|t| !t.trim().is_empty())
        {
            training.push_str(&format!(" ({})", name.trim()));
        }
        format!(
            "What are your plans for future career development?: {}\nWhat kind of training would you like to attend?: {}\nYour preferences for next year: {}",
            list(&self.career_development_plans),
            training,
            list(&self.next_year_preferences),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> Questionnaire {
        Questionnaire {
            career_development_plans: Choices {
                selected: vec![CareerPlan::NursingManagement],
                free_text: Some("Leadership roles".into()),
            },
            training_preference: TrainingPreference {
                venue: TrainingVenue::OutsideHospital,
                training_name: Some("Certified nurse administrator course".into()),
            },
            next_year_preferences: Choices {
                selected: vec![NextYearPreference::Continue],
                free_text: None,
            },
        }
    }

    #[test]
    fn parses_option_labels() {
        let q: Questionnaire = serde_json::from_str(
            r#"{
                "career_development_plans": {"selected": ["Nursing management", "Generalist"], "free_text": "x"},
                "training_preference": {"venue": "In-hospital"},
                "next_year_preferences": {"selected": ["Continue"]}
            }"#,
        )
        .unwrap();
        assert_eq!(q.career_development_plans.selected.len(), 2);
        assert!(q.validate().is_ok());
    }

    #[test]
    fn rejects_empty_next_year_preferences() {
        let mut q = sample();
        q.next_year_preferences.selected.clear();
        let err = q.validate().unwrap_err();
        assert_eq!(err.issues[0].path, "next_year_preferences.selected");
    }

    #[test]
    fn rejects_unknown_option() {
        let res: Result<Questionnaire, _> = serde_json::from_str(
            r#"{"training_preference": {"venue": "Online"}, "next_year_preferences": {"selected": ["Continue"]}}"#,
        );
        assert!(res.is_err());
    }

    #[test]
    fn renders_all_answers() {
        let text = sample().render();
        assert!(text.contains("Nursing management (notes: Leadership roles)"));
        assert!(text.contains("Outside-hospital (Certified nurse administrator course)"));
        assert!(text.contains("Your preferences for next year: Continue"));
    }
}
