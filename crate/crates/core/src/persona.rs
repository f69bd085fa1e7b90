//! Simulated nurse character sheets.

use crate::questionnaire::Questionnaire;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckItem {
    pub label: String,
    /// Phrases whose presence in the dialogue counts as the item being elicited.
    pub keywords: Vec<String>,
}

/// A simulator character. Check items are evaluation-only and never reach
/// any engine-side prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub name: String,
    pub age: String,
    pub hometown: String,
    pub gender: String,
    pub personality: String,
    pub past_career: String,
    pub current_career: String,
    pub future_aspirations: String,
    pub thoughts: String,
    pub other_details: String,
    pub check_items: Vec<CheckItem>,
    pub questionnaire: Questionnaire,
    /// Whether the persona is concerned with transfer or resignation.
    #[serde(default)]
    pub job_change_concern: bool,
    /// Set on invented fixture personas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_note: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema error at `{path}`: {message}")]
    Schema {
        file: String,
        path: String,
        message: String,
    },
}

impl Persona {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, PersonaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let persona: Persona = serde_path_to_error::deserialize(de).map_err(|e| PersonaError::Schema {
            file: origin.to_owned(),
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        persona.validate(origin)?;
        Ok(persona)
    }

    fn validate(&self, origin: &str) -> Result<(), PersonaError> {
        let fail = |path: String, message: &str| {
            Err(PersonaError::Schema {
                file: origin.to_owned(),
                path,
                message: message.to_owned(),
            })
        };
        if self.name.trim().is_empty() {
            return fail("name".into(), "must not be empty");
        }
        if self.check_items.is_empty() {
            return fail("check_items".into(), "at least one check item is required");
        }
        for (i, item) in self.check_items.iter().enumerate() {
            if item.label.trim().is_empty() {
                return fail(format!("check_items[{i}].label"), "must not be empty");
            }
            if item.keywords.iter().all(|k| k.trim().is_empty()) {
                return fail(format!("check_items[{i}].keywords"), "at least one keyword is required");
            }
        }
        if let Err(invalid) = self.questionnaire.validate() {
            let issue = &invalid.issues[0];
            return fail(format!("questionnaire.{}", issue.path), &issue.message);
        }
        Ok(())
    }

    /// Character sheet as shown to the simulator. Check items are omitted.
    pub fn render_setting(&self) -> String {
        [
            ("Name", &self.name),
            ("Age", &self.age),
            ("Hometown", &self.hometown),
            ("Gender", &self.gender),
            ("Personality", &self.personality),
            ("Past Career", &self.past_career),
            ("Current Career", &self.current_career),
            ("Future Aspirations", &self.future_aspirations),
            ("Thoughts", &self.thoughts),
            ("Other Details", &self.other_details),
        ]
        .iter()
        .filter(|(_, v)| !v.trim().is_empty())
        .map(|(k, v)| format!("{k}: {}", v.trim()))
        .collect::<Vec<_>>()
        .join("\n")
    }
}

pub fn load_persona(path: &Path) -> Result<Persona, PersonaError> {
    let text = std::fs::read_to_string(path).map_err(|source| PersonaError::Io {
        path: path.to_owned(),
        source,
    })?;
    Persona::from_json(&text, &path.display().to_string())
}

/// Loads every `*.json` file in `dir`, sorted by file name.
pub fn load_personas_dir(dir: &Path) -> Result<Vec<Persona>, PersonaError> {
    let io = |source| PersonaError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_persona(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "Test Nurse", "age": "28 years old", "hometown": "Chiba", "gender": "Female",
        "personality": "Calm", "past_career": "Five years in surgery.", "current_career": "Works in surgery.",
        "future_aspirations": "Wants to specialize.", "thoughts": "Feels fine.", "other_details": "Likes tea.",
        "check_items": [{"label": "Intent to specialize", "keywords": ["specialize"]}],
        "questionnaire": {
            "career_development_plans": {"selected": ["Specialized nursing area"]},
            "training_preference": {"venue": "Outside-hospital"},
            "next_year_preferences": {"selected": ["Continue"]}
        }
    }"#;

    #[test]
    fn parses_minimal_persona() {
        let p = Persona::from_json(MINIMAL, "inline").unwrap();
        assert_eq!(p.check_items.len(), 1);
        assert!(!p.job_change_concern);
    }

    #[test]
    fn missing_check_items_is_schema_error() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v.as_object_mut().unwrap().remove("check_items");
        let err = Persona::from_json(&v.to_string(), "inline").unwrap_err();
        assert!(matches!(err, PersonaError::Schema { ref message, .. } if message.contains("check_items")), "{err}");

        v["check_items"] = serde_json::json!([]);
        let err = Persona::from_json(&v.to_string(), "inline").unwrap_err();
        assert!(matches!(err, PersonaError::Schema { ref path, .. } if path == "check_items"));
    }

    #[test]
    fn schema_error_reports_field_path() {
        let bad = MINIMAL.replace(r#""venue": "Outside-hospital""#, r#""venue": "Nowhere""#);
        match Persona::from_json(&bad, "inline").unwrap_err() {
            PersonaError::Schema { path, .. } => assert_eq!(path, "questionnaire.training_preference.venue"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn setting_hides_check_items() {
        let p = Persona::from_json(MINIMAL, "inline").unwrap();
        let text = p.render_setting();
        assert!(text.starts_with("Name: Test Nurse\nAge: 28 years old"));
        assert!(!text.contains("Intent to specialize"));
    }
}
