use interview_core::slots::{make_initial_slot_set, normalize_name, DropReason, SlotDraft, SlotSet, SlotValueMap};
use proptest::prelude::*;
use std::collections::HashSet;

fn name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z][A-Za-z ]{0,20}",
        Just("Job satisfaction".to_owned()),
        Just("  JOB   satisfaction ".to_owned()),
        Just("Career development plan".to_owned()),
        Just("   ".to_owned()),
    ]
}

fn drafts() -> impl Strategy<Value = Vec<SlotDraft>> {
    prop::collection::vec(
        (name(), prop::collection::vec("[A-Za-z]{1,8}", 0..3)).prop_map(|(n, c)| SlotDraft::new(n, c)),
        0..12,
    )
}

fn values() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((name(), "[a-z ]{0,12}"), 0..10)
}

fn value_map(pairs: &[(String, String)]) -> SlotValueMap {
    let mut map = SlotValueMap::new();
    for (k, v) in pairs {
        map.insert(k, v);
    }
    map
}

/// Reference model of admission: walk drafts in order, skipping invalid and
/// already-present names, until `cap` are admitted.
fn expected_admitted(existing: &SlotSet, drafts: &[SlotDraft], cap: usize) -> Vec<String> {
    let mut seen: HashSet<String> = existing.iter().map(|s| s.canonical_name()).collect();
    let mut out = Vec::new();
    for d in drafts {
        let Ok(key) = normalize_name(&d.name) else { continue };
        if seen.contains(&key) || out.len() >= cap {
            continue;
        }
        seen.insert(key.clone());
        out.push(key);
    }
    out
}

proptest! {
    #[test]
    fn merge_never_changes_slot_names(pairs in values()) {
        let base = make_initial_slot_set();
        let (next, log) = base.merge_fill(&value_map(&pairs), 1);
        let before: Vec<_> = base.iter().map(|s| s.canonical_name()).collect();
        let after: Vec<_> = next.iter().map(|s| s.canonical_name()).collect();
        prop_assert_eq!(before, after);
        prop_assert!(next.filled_count() >= base.filled_count());
        for key in &log.discarded {
            prop_assert!(!base.contains(key));
        }
    }

    #[test]
    fn add_generated_honors_cap_and_dedup(batch in drafts(), cap in 0usize..7) {
        let base = make_initial_slot_set();
        let (next, log) = base.add_generated(&batch, cap, 3);
        prop_assert!(log.admitted.len() <= cap);
        prop_assert_eq!(next.len(), base.len() + log.admitted.len());
        prop_assert_eq!(log.admitted.len() + log.dropped.len(), batch.len());
        let admitted: Vec<String> = log.admitted.iter().map(|n| normalize_name(n).unwrap()).collect();
        prop_assert_eq!(admitted, expected_admitted(&base, &batch, cap));
        let unique: HashSet<_> = next.iter().map(|s| s.canonical_name()).collect();
        prop_assert_eq!(unique.len(), next.len());
        for d in &log.dropped {
            if d.reason == DropReason::InvalidName {
                prop_assert!(normalize_name(&d.name).is_err());
            }
        }
        for s in next.iter().skip(base.len()) {
            prop_assert!(!s.is_filled());
            prop_assert!(!s.categories().is_empty());
        }
    }

    #[test]
    fn fill_rate_stays_in_unit_interval(batch in drafts(), pairs in values()) {
        let (set, _) = make_initial_slot_set().add_generated(&batch, 5, 1);
        let (set, _) = set.merge_fill(&value_map(&pairs), 2);
        let rate = set.fill_rate().unwrap();
        prop_assert!((0.0..=1.0).contains(&rate));
        prop_assert_eq!(rate, set.filled_count() as f64 / set.len() as f64);
    }

    #[test]
    fn wire_json_round_trips(batch in drafts(), pairs in values()) {
        let (set, _) = make_initial_slot_set().add_generated(&batch, 5, 1);
        let (set, _) = set.merge_fill(&value_map(&pairs), 2);
        let json = serde_json::to_string(&set).unwrap();
        let back: SlotSet = serde_json::from_str(&json).unwrap();
        let view = |s: &SlotSet| s.iter().map(|x| (x.name().to_owned(), x.categories().to_vec(), x.value().map(str::to_owned))).collect::<Vec<_>>();
        prop_assert_eq!(view(&back), view(&set));
        let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(&json).unwrap()
            .as_object().unwrap().keys().cloned().collect();
        let names: Vec<String> = set.iter().map(|s| s.name().to_owned()).collect();
        prop_assert_eq!(keys, names);
    }

    #[test]
    fn normalize_is_idempotent(raw in "[ A-Za-z]{0,30}") {
        if let Ok(once) = normalize_name(&raw) {
            prop_assert_eq!(normalize_name(&once).unwrap(), once.clone());
            prop_assert!(!once.contains("  "));
            prop_assert_eq!(once.trim(), once.as_str());
        }
    }
}
