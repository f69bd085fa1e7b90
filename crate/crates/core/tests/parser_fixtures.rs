//! Hand-written malformed abductive generation outputs and how each one is classified.

use interview_core::llm::PayloadError;
use interview_core::prompts::{parse_slot_gen_abductive_output, ParseError, ParseWarning};

#[derive(Debug, PartialEq)]
enum Expect {
    NoJson,
    Malformed,
    Record {
        fact: bool,
        reason: bool,
        drafts: usize,
        warnings: &'static [W],
    },
}

#[derive(Debug, PartialEq, Clone, Copy)]
enum W {
    MissingNewSlot,
    ReasonWithoutFact,
    OrphanReason,
    IgnoredValue,
}

fn classify(w: &ParseWarning) -> W {
    match w {
        ParseWarning::MissingNewSlotKey => W::MissingNewSlot,
        ParseWarning::ReasonWithoutFact => W::ReasonWithoutFact,
        ParseWarning::OrphanReason => W::OrphanReason,
        ParseWarning::IgnoredValue { .. } => W::IgnoredValue,
        other => panic!("unexpected warning {other:?}"),
    }
}

const fn rec(fact: bool, reason: bool, drafts: usize, warnings: &'static [W]) -> Expect {
    Expect::Record { fact, reason, drafts, warnings }
}

const CASES: &[(&str, &str, Expect)] = &[
    (
        "fenced with info string",
        "```json\n{\"Surprising Fact C\": \"wants to manage\", \"Reason to Suspect A\": \"tired of night shifts\", \"New Slot\": {\"Night shift burden\": {\"category\": \"Job\", \"value\": null}}}\n```",
        rec(true, true, 1, &[]),
    ),
    (
        "chatter before and after",
        "Sure! Here it is:\n{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\", \"New Slot\": {}}\nHope this helps.",
        rec(true, true, 0, &[]),
    ),
    (
        "trailing commas",
        "{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\", \"New Slot\": {\"a\": {\"category\": \"Job\", \"value\": null,},},}",
        rec(true, true, 1, &[]),
    ),
    (
        "echoed hash comments",
        "{\n\"Surprising Fact C\": \"x\", # Surprising fact\n\"Reason to Suspect A\": \"y\", # Reason\n\"New Slot\": {\"a\": {\"category\": \"Job\", \"value\": null}} # slots\n}",
        rec(true, true, 1, &[]),
    ),
    (
        "fact without reason",
        "{\"Surprising Fact C\": \"mentions a child starting school\", \"Reason to Suspect A\": null, \"New Slot\": {\"Childcare needs\": {\"category\": \"Personal\", \"value\": null}}}",
        rec(true, false, 1, &[W::ReasonWithoutFact]),
    ),
    (
        "reason without fact",
        "{\"Surprising Fact C\": null, \"Reason to Suspect A\": \"burnout\", \"New Slot\": {\"Stress level\": {\"category\": \"Job\", \"value\": null}}}",
        rec(false, false, 1, &[W::OrphanReason]),
    ),
    (
        "missing New Slot key",
        "{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\"}",
        rec(true, true, 0, &[W::MissingNewSlot]),
    ),
    (
        "New Slot explicitly null",
        "{\"Surprising Fact C\": null, \"Reason to Suspect A\": null, \"New Slot\": null}",
        rec(false, false, 0, &[]),
    ),
    (
        "New Slot is a list",
        "{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\", \"New Slot\": [\"Night shifts\"]}",
        rec(true, true, 0, &[W::MissingNewSlot]),
    ),
    (
        "object wrapped in an array is recovered",
        "[{\"Surprising Fact C\": \"x\"}]",
        rec(true, false, 0, &[W::ReasonWithoutFact, W::MissingNewSlot]),
    ),
    (
        "prose only",
        "I could not find anything surprising in this dialogue.",
        Expect::NoJson,
    ),
    (
        "unbalanced braces",
        "{\"Surprising Fact C\": \"x\", \"New Slot\": {\"a\": {\"category\": \"Job\"}",
        Expect::Malformed,
    ),
    (
        "single-quoted keys",
        "{'Surprising Fact C': 'x', 'New Slot': {}}",
        Expect::Malformed,
    ),
    (
        "lowercase snake keys",
        "{\"surprising_fact_c\": \"x\", \"reason_to_suspect_a\": \"y\", \"new_slot\": {\"a\": {\"category\": \"Job\", \"value\": null}}}",
        rec(true, true, 1, &[]),
    ),
    (
        "none literals count as absent",
        "{\"Surprising Fact C\": \"None\", \"Reason to Suspect A\": \"n/a\", \"New Slot\": {\"a\": {\"category\": \"Job\", \"value\": null}}}",
        rec(false, false, 1, &[]),
    ),
    (
        "blank strings count as absent",
        "{\"Surprising Fact C\": \"  \", \"Reason to Suspect A\": \"\", \"New Slot\": {}}",
        rec(false, false, 0, &[]),
    ),
    (
        "draft carrying a value",
        "{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\", \"New Slot\": {\"Preferred ward\": {\"category\": \"Career\", \"value\": \"surgery\"}}}",
        rec(true, true, 1, &[W::IgnoredValue]),
    ),
    (
        "seven drafts are all parsed; capping happens on admission",
        "{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": \"y\", \"New Slot\": {\"a\": {}, \"b\": {}, \"c\": {}, \"d\": {}, \"e\": {}, \"f\": {}, \"g\": {}}}",
        rec(true, true, 7, &[]),
    ),
    (
        "abbreviated C and A keys",
        "{\"C\": \"x\", \"A\": \"y\", \"New Slots\": {\"a\": {\"category\": [\"Job\", \"Career\"], \"value\": null}}}",
        rec(true, true, 1, &[]),
    ),
    (
        "fence holding prose, object after it",
        "```\nno json here\n```\n{\"Surprising Fact C\": \"x\", \"Reason to Suspect A\": null}",
        rec(true, false, 0, &[W::ReasonWithoutFact, W::MissingNewSlot]),
    ),
];

#[test]
fn table_has_twenty_cases() {
    assert_eq!(CASES.len(), 20);
}

#[test]
fn malformed_outputs_are_classified() {
    let mut failures = Vec::new();
    for (name, raw, expected) in CASES {
        let actual = match parse_slot_gen_abductive_output(raw, 3) {
            Err(ParseError::Payload(PayloadError::NoJsonFound { .. })) => Expect::NoJson,
            Err(ParseError::Payload(PayloadError::MalformedJson { .. })) => Expect::Malformed,
            Err(other) => panic!("{name}: unexpected error {other:?}"),
            Ok((record, warnings)) => {
                // A is only meaningful as an explanation of C.
                assert!(
                    record.surprising_fact_c.is_some() || record.suspected_reason_a.is_none(),
                    "{name}: reason kept without a fact"
                );
                assert_eq!(record.turn, 3);
                assert!(record.drafts.iter().all(|d| !d.name.is_empty()), "{name}");
                let warnings: Vec<W> = warnings.iter().map(classify).collect();
                let leaked: &'static [W] = Box::leak(warnings.into_boxed_slice());
                rec(
                    record.surprising_fact_c.is_some(),
                    record.suspected_reason_a.is_some(),
                    record.drafts.len(),
                    leaked,
                )
            }
        };
        if &actual != expected {
            failures.push(format!("{name}: expected {expected:?}, got {actual:?}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
