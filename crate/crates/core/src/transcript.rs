//! Speaker-tagged dialogue transcript.

use serde::{Deserialize, Serialize};
use std::fmt;
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::System => "System",
            Speaker::User => "User",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
        }
    }
}

/// Renders history as `System: ...` / `User: ...` lines.
pub fn render_history(transcript: &[Utterance]) -> String {
    if transcript.is_empty() {
        return "(no dialogue yet)".to_owned();
    }
    transcript
        .iter()
        .map(|u| format!("{}: {}", u.speaker, u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Length in extended grapheme clusters.
pub fn grapheme_len(text: &str) -> usize {
    text.graphemes(true).count()
}

/// True when speakers strictly alternate.
pub fn alternates(transcript: &[Utterance]) -> bool {
    transcript.windows(2).all(|w| w[0].speaker != w[1].speaker)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_speaker_lines() {
        let t = vec![Utterance::system("Have you been busy lately?"), Utterance::user("Yes.")];
        assert_eq!(render_history(&t), "System: Have you been busy lately?\nUser: Yes.");
        assert!(alternates(&t));
    }

    #[test]
    fn counts_graphemes() {
        assert_eq!(grapheme_len("最近忙しい？"), 6);
        assert_eq!(grapheme_len("e\u{301}"), 1);
    }
}
