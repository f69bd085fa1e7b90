//! Deterministic rule-based stand-in for a chat model.
//!
//! Reads the sections of the rendered prompt (dialogue history, current
//! slots, persona, abduction history) and answers each prompt kind with
//! output in the same JSON shapes a real model is asked for. Behavior is a
//! pure function of the request, so whole benchmark batches replay exactly.

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::prompts::section_after;
use serde_json::{json, Map, Value};
use std::collections::BTreeSet;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "how", "i", "i'm", "if", "in", "into",
    "is", "it", "it's", "its", "me", "more", "my", "of", "on", "or", "our", "she", "so", "some", "tell", "that",
    "the", "their", "there", "they", "this", "to", "was", "we", "were", "what", "when", "which", "who", "with",
    "would", "you", "you're", "your", "her", "his", "he", "like", "much", "very", "really", "just", "well", "yes",
    "no", "not", "now", "see", "specifically", "kind", "lately", "any", "other", "way", "by", "then",
];

const FALLBACK_REPLY: &str = "I don't have much else to add.";

struct Trigger {
    words: &'static [&'static str],
    fact: &'static str,
    reason: &'static str,
    /// Slots a surface-level generator proposes.
    surface: &'static [(&'static str, &'static str)],
    /// Slots proposed after reasoning about the cause.
    deep: &'static [(&'static str, &'static str)],
}

const TRIGGERS: &[Trigger] = &[
    Trigger {
        words: &["resign", "quit", "leave the hospital", "leaving", "other hospitals", "change jobs", "job change"],
        fact: "The nurse is considering leaving the current hospital.",
        reason: "The nurse may be dissatisfied with their nursing career or working conditions.",
        surface: &[("Job change plans", "Career,Plan"), ("Other hospitals of interest", "Career,Preference")],
        deep: &[
            ("Dissatisfaction with nursing career", "Career,Dissatisfaction"),
            ("Reasons for considering a job change", "Career,Concerns"),
            ("Desired working environment", "Job,Preference"),
        ],
    },
    Trigger {
        words: &["dissatisf", "unhappy", "frustrat", "not satisfied", "lack of"],
        fact: "The nurse expressed dissatisfaction despite describing the work positively.",
        reason: "Expectations about evaluation or advancement may not be met at the current workplace.",
        surface: &[("Workplace complaints", "Job,Dissatisfaction")],
        deep: &[
            ("Dissatisfaction with nursing career", "Career,Dissatisfaction"),
            ("Expectations toward the organization", "Career,Preference"),
        ],
    },
    Trigger {
        words: &["promotion", "management", "manager", "head nurse", "leader"],
        fact: "The nurse mentioned management or promotion.",
        reason: "The nurse may want more responsibility and recognition of their skills.",
        surface: &[("Management aspirations", "Career"), ("Leadership role", "Job")],
        deep: &[
            ("Motivation for a management role", "Career,Plan"),
            ("Support needed for promotion", "Career,Preference"),
            ("Leadership skills to develop", "Training,Preference"),
        ],
    },
    Trigger {
        words: &["transfer", "another department", "different department", "another ward", "rotation"],
        fact: "The nurse mentioned moving to a different department.",
        reason: "The nurse may seek new clinical experience or relief from the current unit.",
        surface: &[("Transfer request", "Career,Preference")],
        deep: &[
            ("Reasons for transfer request", "Career,Concerns"),
            ("Clinical experience sought", "Career,Plan"),
        ],
    },
    Trigger {
        words: &["son", "daughter", "child", "family", "husband", "wife", "parents", "childcare", "pregnan"],
        fact: "The nurse brought up family circumstances.",
        reason: "Family responsibilities may be constraining the nurse's working style.",
        surface: &[("Family situation", "Personal")],
        deep: &[
            ("Work-life balance concerns", "Personal,Concerns"),
            ("Shift preferences", "Job,Preference"),
        ],
    },
    Trigger {
        words: &["tired", "exhaust", "overtime", "workload", "stress", "busy", "night shift"],
        fact: "The nurse described a heavy workload.",
        reason: "Fatigue may be affecting the nurse's motivation to continue.",
        surface: &[("Workload", "Job")],
        deep: &[("Sources of fatigue", "Job,Concerns"), ("Desired workload adjustments", "Job,Preference")],
    },
    Trigger {
        words: &["qualification", "certified", "certification", "graduate", "study", "degree", "specialist"],
        fact: "The nurse mentioned obtaining qualifications or further study.",
        reason: "The nurse may be planning a specialized career path that needs institutional support.",
        surface: &[("Qualifications of interest", "Training")],
        deep: &[
            ("Further education plans", "Career,Plan"),
            ("Support needed for studying", "Training,Preference"),
        ],
    },
    Trigger {
        words: &["worried", "anxious", "anxiety", "unsure", "uncertain", "conflicted", "concern"],
        fact: "The nurse expressed worry or uncertainty.",
        reason: "An unresolved decision about the future may be weighing on the nurse.",
        surface: &[("Current worries", "Concerns")],
        deep: &[("Sources of career anxiety", "Career,Concerns"), ("Pending career decision", "Career,Plan")],
    },
    Trigger {
        words: &["colleague", "relationship", "boss", "senior", "junior", "team"],
        fact: "The nurse talked about people at work.",
        reason: "Workplace relationships may be a reason to stay or to leave.",
        surface: &[("Team relationships", "Job")],
        deep: &[("Workplace relationships", "Job,Satisfaction")],
    },
];

const CAREER_WORDS: &[&str] = &[
    "career", "nurse", "nursing", "job", "work", "department", "ward", "training", "promotion", "management",
    "transfer", "resign", "position", "hospital", "patient", "shift", "qualification", "future", "plan",
];

/// Rule-based backend that needs no network and no script.
#[derive(Debug, Default, Clone)]
pub struct OfflineBackend;

impl OfflineBackend {
    pub fn new() -> Self {
        Self
    }
}

impl CompletionBackend for OfflineBackend {
    fn label(&self) -> &str {
        "offline"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.content.contains("Dialogue History:") || m.content.contains("Slots:"))
            .or_else(|| request.messages.first())
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let out = match request.kind.as_str() {
            "topic_probe" => topic_probe(prompt),
            "small_talk" => small_talk(prompt),
            "slot_fill" => slot_fill(prompt),
            "slot_gen_direct" => slot_gen_direct(prompt),
            "slot_gen_abductive" => slot_gen_abductive(prompt),
            "question_gen" => question_gen(prompt),
            "user_sim" => user_sim(prompt),
            "report_gen" => report_gen(prompt),
            "coverage_judge" => coverage_judge(prompt),
            "value_judge" => value_judge(prompt),
            other => return Err(BackendError::BadResponse(format!("offline backend has no rule for `{other}`"))),
        };
        Ok(out)
    }
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(stem)
        .collect()
}

fn stem(word: &str) -> String {
    let w = word.trim_matches('\'');
    for suffix in ["ities", "ing", "ies", "es", "s", "ed"] {
        if let Some(root) = w.strip_suffix(suffix) {
            if root.chars().count() >= 4 {
                return root.to_owned();
            }
        }
    }
    w.to_owned()
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.intersection(b).count()
}

fn history(prompt: &str) -> Vec<(String, String)> {
    section_after(prompt, "Dialogue History")
        .unwrap_or("")
        .lines()
        .filter_map(|line| {
            let (speaker, text) = line.split_once(": ")?;
            Some((speaker.trim().to_owned(), text.trim().to_owned()))
        })
        .collect()
}

fn last_of(history: &[(String, String)], speaker: &str) -> Option<String> {
    history.iter().rev().find(|(s, _)| s == speaker).map(|(_, t)| t.clone())
}

struct PromptSlot {
    name: String,
    category: String,
    value: Option<String>,
}

fn current_slots(prompt: &str) -> Vec<PromptSlot> {
    let Some(section) = section_after(prompt, "Slots") else {
        return Vec::new();
    };
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(section) else {
        return Vec::new();
    };
    map.into_iter()
        .map(|(name, body)| PromptSlot {
            name,
            category: body.get("category").and_then(Value::as_str).unwrap_or("").to_owned(),
            value: body.get("value").and_then(Value::as_str).map(str::to_owned),
        })
        .collect()
}

/// Lowercased words separated by single spaces, padded so that `" word"`
/// only matches at a word start.
fn padded_words(text: &str) -> String {
    let words: Vec<String> = text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect();
    format!(" {} ", words.join(" "))
}

fn matching_triggers(text: &str) -> Vec<&'static Trigger> {
    let padded = padded_words(text);
    TRIGGERS
        .iter()
        .filter(|t| t.words.iter().any(|w| padded.contains(&format!(" {w}"))))
        .collect()
}

fn topic_probe(prompt: &str) -> String {
    let h = history(prompt);
    let last = padded_words(&last_of(&h, "User").unwrap_or_default());
    let career = CAREER_WORDS.iter().any(|w| last.contains(&format!(" {w}")));
    json!({ "career_topic": career }).to_string()
}

fn small_talk(prompt: &str) -> String {
    let turns = history(prompt).iter().filter(|(s, _)| s == "User").count();
    if turns % 2 == 1 {
        "I see, thank you for sharing that. How have things been at work recently?".into()
    } else {
        "That sounds nice. Is there anything on your mind about your work these days?".into()
    }
}

fn is_filler(utterance: &str) -> bool {
    utterance.trim() == FALLBACK_REPLY || tokens(utterance).len() < 2
}

fn slot_fill(prompt: &str) -> String {
    let h = history(prompt);
    let slots = current_slots(prompt);
    let mut out = Map::new();
    let Some(answer) = last_of(&h, "User") else {
        return "{}".into();
    };
    if is_filler(&answer) {
        return "{}".into();
    }
    let question = h
        .iter()
        .rev()
        .skip_while(|(s, _)| s != "User")
        .nth(1)
        .map(|(_, t)| t.to_lowercase())
        .unwrap_or_default();
    let q_tokens = tokens(&question);
    let a_tokens = tokens(&answer);
    let value = answer.trim_end_matches(['.', '!']).to_owned();

    let mut best: Option<(usize, &PromptSlot)> = None;
    for slot in slots.iter().filter(|s| s.value.is_none()) {
        let name_tokens = tokens(&slot.name);
        let named = question.contains(&slot.name.to_lowercase());
        let score = if named { 100 } else { 0 } + 2 * overlap(&name_tokens, &q_tokens) + overlap(&name_tokens, &a_tokens);
        if score > 0 && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, slot));
        }
    }
    if let Some((_, slot)) = best {
        out.insert(slot.name.clone(), json!({ "category": slot.category, "value": value }));
    }
    // A rich answer may also settle other slots it talks about directly.
    for slot in slots.iter().filter(|s| s.value.is_none()) {
        if out.contains_key(&slot.name) {
            continue;
        }
        let name_tokens = tokens(&slot.name);
        if !name_tokens.is_empty() && overlap(&name_tokens, &a_tokens) * 2 > name_tokens.len() {
            out.insert(slot.name.clone(), json!({ "category": slot.category, "value": value }));
        }
    }
    serde_json::to_string_pretty(&Value::Object(out)).expect("json")
}

fn draft_map(drafts: &[(&str, &str)], existing: &[PromptSlot]) -> Map<String, Value> {
    let mut out = Map::new();
    for (name, category) in drafts {
        if existing.iter().any(|s| s.name.eq_ignore_ascii_case(name)) {
            continue;
        }
        out.insert((*name).to_owned(), json!({ "category": category, "value": null }));
    }
    out
}

fn slot_gen_direct(prompt: &str) -> String {
    let h = history(prompt);
    let slots = current_slots(prompt);
    let last = last_of(&h, "User").unwrap_or_default();
    let drafts: Vec<(&str, &str)> = matching_triggers(&last)
        .into_iter()
        .flat_map(|t| t.surface.iter().copied())
        .collect();
    serde_json::to_string_pretty(&Value::Object(draft_map(&drafts, &slots))).expect("json")
}

fn slot_gen_abductive(prompt: &str) -> String {
    let h = history(prompt);
    let slots = current_slots(prompt);
    let last = last_of(&h, "User").unwrap_or_default();
    let seen = section_after(prompt, "Abduction History").unwrap_or("");
    let fresh = matching_triggers(&last).into_iter().find(|t| !seen.contains(t.fact));
    let body = match fresh {
        Some(t) => json!({
            "C": t.fact,
            "A": t.reason,
            "New Slot": Value::Object(draft_map(t.deep, &slots)),
        }),
        None => json!({ "C": null, "A": null, "New Slot": {} }),
    };
    serde_json::to_string_pretty(&body).expect("json")
}

fn question_gen(prompt: &str) -> String {
    let slots = current_slots(prompt);
    let asked: Vec<String> = history(prompt)
        .into_iter()
        .filter(|(s, _)| s == "System")
        .map(|(_, t)| t.to_lowercase())
        .collect();
    let unfilled: Vec<(usize, &PromptSlot)> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.value.is_none())
        .filter(|(_, s)| {
            let name = s.name.to_lowercase();
            !asked.iter().any(|q| q.contains(&name))
        })
        .collect();
    let target = unfilled
        .iter()
        .rev()
        .find(|(i, _)| *i >= crate::slots::INITIAL_SLOTS.len())
        .or_else(|| unfilled.first())
        .map(|(_, s)| *s);
    let body = match target {
        Some(slot) => json!({
            "Target Slot S": { slot.name.clone(): { "category": slot.category, "value": null } },
            "Question": format!("I see. Could you tell me more about your {}?", lower_first(&slot.name)),
        }),
        None => json!({
            "Target Slot S": {},
            "Question": "Is there anything else you'd like to share about your career?",
        }),
    };
    serde_json::to_string_pretty(&body).expect("json")
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Persona lines are `Field: text`; identity fields are never volunteered.
fn persona_statements(prompt: &str) -> Vec<(String, String)> {
    let section = section_after(prompt, "Your Persona").unwrap_or("");
    let mut out = Vec::new();
    for line in section.lines() {
        let Some((field, text)) = line.split_once(": ") else {
            continue;
        };
        if matches!(field.trim(), "Name" | "Age" | "Hometown" | "Gender" | "Personality") {
            continue;
        }
        for sentence in text.split(". ") {
            for clause in sentence.split(" but ") {
                let clause = clause.trim().trim_end_matches('.');
                if !clause.is_empty() {
                    out.push((field.trim().to_owned(), first_person(clause)));
                }
            }
        }
    }
    out
}

fn first_person(clause: &str) -> String {
    let mut words: Vec<String> = clause.split_whitespace().map(str::to_owned).collect();
    if matches!(words.first().map(String::as_str), Some("She" | "He" | "she" | "he")) && words.len() > 1 {
        words.remove(0);
    }
    for w in words.iter_mut() {
        *w = match w.as_str() {
            "her" | "his" | "their" => "my".into(),
            "Her" | "His" | "Their" => "My".into(),
            "she" | "he" | "She" | "He" => "I".into(),
            "herself" | "himself" => "myself".into(),
            _ => continue,
        };
    }
    let first = words.first().cloned().unwrap_or_default();
    let lower = first.to_lowercase();
    let body = if first == "I" || first == "My" {
        words.join(" ")
    } else if lower == "has" {
        format!("I have {}", words[1..].join(" "))
    } else if lower == "is" {
        format!("I am {}", words[1..].join(" "))
    } else if lower.ends_with("ed") || lower == "a" || lower == "an" || lower == "currently" {
        format!("I'm {lower} {}", words[1..].join(" "))
    } else if let Some(root) = lower.strip_suffix("shes").or_else(|| lower.strip_suffix("ches")) {
        let ending = &lower[root.len()..lower.len() - 2];
        format!("I {root}{ending} {}", words[1..].join(" "))
    } else if let Some(root) = lower.strip_suffix('s') {
        format!("I {root} {}", words[1..].join(" "))
    } else {
        words.join(" ")
    };
    format!("{}.", body.trim())
}

fn user_sim(prompt: &str) -> String {
    let h = history(prompt);
    let question = last_of(&h, "System").unwrap_or_default();
    let q_tokens = tokens(&question);
    let said: Vec<String> = h.iter().filter(|(s, _)| s == "User").map(|(_, t)| t.clone()).collect();
    let statements = persona_statements(prompt);
    let unused: Vec<&(String, String)> = statements.iter().filter(|(_, s)| !said.contains(s)).collect();
    let mut best: Option<(usize, &(String, String))> = None;
    for candidate in &unused {
        let mut known = tokens(&candidate.1);
        known.extend(tokens(&candidate.0));
        let score = overlap(&known, &q_tokens);
        if score > 0 && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, candidate));
        }
    }
    best.map(|(_, c)| c)
        .or_else(|| unused.first().copied())
        .map(|(_, s)| s.clone())
        .unwrap_or_else(|| FALLBACK_REPLY.to_owned())
}

fn report_gen(prompt: &str) -> String {
    let mut out = Map::new();
    for slot in current_slots(prompt) {
        if let Some(value) = slot.value {
            out.insert(slot.name.clone(), Value::String(format!("{}: {}.", slot.name, value.trim_end_matches('.'))));
        }
    }
    serde_json::to_string_pretty(&Value::Object(out)).expect("json")
}

fn coverage_judge(prompt: &str) -> String {
    let item = tokens(section_after(prompt, "Check Item").unwrap_or(""));
    let mut seen = tokens(section_after(prompt, "Dialogue History").unwrap_or(""));
    seen.extend(tokens(section_after(prompt, "Slots").unwrap_or("")));
    let covered = !item.is_empty() && overlap(&item, &seen) * 2 >= item.len();
    json!({ "covered": covered }).to_string()
}

fn value_judge(prompt: &str) -> String {
    let section = section_after(prompt, "Values").unwrap_or("");
    let values: Vec<BTreeSet<String>> = section
        .lines()
        .map(|l| l.split_once(": ").map_or(l, |(_, v)| v).trim())
        .filter(|l| !l.is_empty())
        .map(tokens)
        .collect();
    let equivalent = match values.as_slice() {
        [a, b] => {
            let union = a.union(b).count();
            union > 0 && overlap(a, b) * 2 >= union
        }
        _ => false,
    };
    json!({ "equivalent": equivalent }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::CompletionRequest;

    fn ask(kind: &str, prompt: &str) -> String {
        OfflineBackend.complete(&CompletionRequest::prompt(kind, prompt)).unwrap()
    }

    const SLOTS: &str = r#"Current Slots:
{
  "Career aspirations for next year": {"category": "Career", "value": null},
  "Job satisfaction": {"category": "Job,Satisfaction", "value": "rewarding"}
}"#;

    #[test]
    fn probe_detects_career_words() {
        let p = "Dialogue History:\nSystem: Have you been busy lately?\nUser: My job in the ward is hectic.";
        assert_eq!(ask("topic_probe", p), r#"{"career_topic":true}"#);
        let p = "Dialogue History:\nSystem: Have you been busy lately?\nUser: I went hiking.";
        assert_eq!(ask("topic_probe", p), r#"{"career_topic":false}"#);
    }

    #[test]
    fn fill_prefers_slot_named_in_question() {
        let p = format!(
            "Dialogue History:\nSystem: Could you tell me about your career aspirations for next year?\nUser: I aim to advance into nursing management.\n\n{SLOTS}"
        );
        let out: Value = serde_json::from_str(&ask("slot_fill", &p)).unwrap();
        assert_eq!(
            out["Career aspirations for next year"]["value"],
            "I aim to advance into nursing management"
        );
        assert!(out.get("Job satisfaction").is_none());
    }

    #[test]
    fn abduction_skips_known_facts() {
        let p = format!(
            "Dialogue History:\nUser: I'm dissatisfied with the lack of promotion opportunities.\n\n{SLOTS}\n\nAbduction History:\n(none)"
        );
        let out: Value = serde_json::from_str(&ask("slot_gen_abductive", &p)).unwrap();
        let fact = out["C"].as_str().unwrap().to_owned();
        assert!(out["A"].is_string());
        assert!(out["New Slot"].as_object().unwrap().len() <= 5);

        let p2 = format!(
            "Dialogue History:\nUser: I'm dissatisfied with the lack of promotion opportunities.\n\n{SLOTS}\n\nAbduction History:\n1. C: {fact}"
        );
        let out2: Value = serde_json::from_str(&ask("slot_gen_abductive", &p2)).unwrap();
        assert_ne!(out2["C"].as_str(), Some(fact.as_str()));
    }

    #[test]
    fn user_sim_answers_from_persona_without_repeating() {
        let persona = "Your Persona:\nName: Aoi Endo\nFuture Aspirations: Aims to advance into a nursing management position.\nThoughts: Wishes to continue working at the same hospital.\n\nDialogue History:\n";
        let first = ask("user_sim", &format!("{persona}System: What are your future aspirations?"));
        assert_eq!(first, "I aim to advance into a nursing management position.");
        let second = ask(
            "user_sim",
            &format!("{persona}System: What are your future aspirations?\nUser: {first}\nSystem: Anything else?"),
        );
        assert_eq!(second, "I wish to continue working at the same hospital.");
    }

    #[test]
    fn first_person_rewrites() {
        assert_eq!(first_person("Feels confident in her job"), "I feel confident in my job.");
        assert_eq!(first_person("Satisfied with good relationships"), "I'm satisfied with good relationships.");
        assert_eq!(first_person("She has one child"), "I have one child.");
        assert_eq!(first_person("Has one child"), "I have one child.");
    }

    #[test]
    fn report_summarizes_filled_only() {
        let out: Value = serde_json::from_str(&ask("report_gen", SLOTS)).unwrap();
        assert_eq!(out.as_object().unwrap().len(), 1);
        assert_eq!(out["Job satisfaction"], "Job satisfaction: rewarding.");
    }

    #[test]
    fn same_request_same_answer() {
        let p = format!("Dialogue History:\nSystem: Hi\nUser: I might quit.\n\n{SLOTS}");
        assert_eq!(ask("slot_gen_direct", &p), ask("slot_gen_direct", &p));
    }
}
