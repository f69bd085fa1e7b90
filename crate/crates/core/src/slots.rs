//! Slot data model and slot-set algebra.
//!
//! A [`SlotSet`] is the dialogue state of the interview: an insertion-ordered
//! collection of named, categorized cells whose values start out empty and are
//! filled as the user talks. Every operation here is a pure function that
//! returns a new set alongside a log of what was ignored, so callers can trace
//! exactly how an LLM proposal was applied.

use indexmap::IndexMap;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Category assigned when a generated slot arrives without one.
pub const DEFAULT_CATEGORY: &str = "Uncategorized";

/// Default number of generated slots admitted per generation call.
pub const DEFAULT_SLOT_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SlotError {
    #[error("slot name is empty after normalization")]
    NameEmpty,
    #[error("slot set is empty")]
    EmptySlotSet,
    #[error("slot `{0}` has no categories")]
    NoCategories(String),
    #[error("duplicate slot name `{0}`")]
    Duplicate(String),
}

/// Canonical form of a slot name: trimmed, inner whitespace collapsed, lowercased.
pub fn normalize_name(raw: &str) -> Result<String, SlotError> {
    let canonical = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    if canonical.is_empty() {
        Err(SlotError::NameEmpty)
    } else {
        Ok(canonical)
    }
}

/// Splits a comma-separated category field into trimmed, non-empty labels.
pub fn split_categories(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOrigin {
    Initial,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    name: String,
    categories: Vec<String>,
    value: Option<String>,
    origin: SlotOrigin,
    created_turn: usize,
}

impl Slot {
    fn new(
        name: &str,
        categories: Vec<String>,
        origin: SlotOrigin,
        created_turn: usize,
    ) -> Result<Self, SlotError> {
        normalize_name(name)?;
        let mut categories: Vec<String> = categories
            .into_iter()
            .map(|c| c.trim().to_owned())
            .filter(|c| !c.is_empty())
            .collect();
        if categories.is_empty() {
            categories.push(DEFAULT_CATEGORY.to_owned());
        }
        let created_turn = match origin {
            SlotOrigin::Initial => 0,
            SlotOrigin::Generated => created_turn,
        };
        Ok(Self {
            name: name.trim().to_owned(),
            categories,
            value: None,
            origin,
            created_turn,
        })
    }

    /// Display name, as first introduced.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn canonical_name(&self) -> String {
        // Construction guarantees a non-empty canonical form.
        normalize_name(&self.name).unwrap_or_default()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }

    pub fn is_filled(&self) -> bool {
        self.value.is_some()
    }

    pub fn origin(&self) -> SlotOrigin {
        self.origin
    }

    pub fn created_turn(&self) -> usize {
        self.created_turn
    }
}

/// A slot proposed by the generation step. Never carries a value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDraft {
    pub name: String,
    pub categories: Vec<String>,
}

impl SlotDraft {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            name: name.into(),
            categories,
        }
    }
}

/// Slot values proposed by the fill step, keyed by canonical name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValueMap {
    entries: IndexMap<String, String>,
}

impl SlotValueMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a value. Empty values and unnormalizable names are dropped;
    /// returns whether the entry was kept.
    pub fn insert(&mut self, name: &str, value: &str) -> bool {
        let value = value.trim();
        if value.is_empty() {
            return false;
        }
        match normalize_name(name) {
            Ok(key) => {
                self.entries.insert(key, value.to_owned());
                true
            }
            Err(_) => false,
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        normalize_name(name)
            .ok()
            .and_then(|k| self.entries.get(&k).map(String::as_str))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for SlotValueMap {
    fn from_iter<T: IntoIterator<Item = (&'a str, &'a str)>>(iter: T) -> Self {
        let mut map = Self::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledValue {
    pub slot: String,
    pub previous: Option<String>,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeLog {
    /// Slots whose value changed.
    pub filled: Vec<FilledValue>,
    /// Proposed names that match no existing slot.
    pub discarded: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    OverCap,
    InvalidName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDraft {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddLog {
    pub admitted: Vec<String>,
    pub dropped: Vec<DroppedDraft>,
}

/// Ordered collection of slots with unique canonical names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotSet {
    slots: IndexMap<String, Slot>,
}

/// Names and categories of the initial slot set, in order.
pub const INITIAL_SLOTS: [(&str, &[&str]); 8] = [
    ("Career aspirations for next year", &["Career"]),
    ("Career development plan", &["Career", "Plan"]),
    ("Future department preferences", &["Career", "Preference"]),
    ("Career-related concerns", &["Career", "Concerns"]),
    ("Training preferences", &["Training", "Preference"]),
    ("Current job duties", &["Job"]),
    ("Job satisfaction", &["Job", "Satisfaction"]),
    ("Job dissatisfaction", &["Job", "Dissatisfaction"]),
];

/// The eight slots every interview starts with, all unfilled.
pub fn make_initial_slot_set() -> SlotSet {
    let mut set = SlotSet::new();
    for (name, cats) in INITIAL_SLOTS {
        let slot = Slot::new(
            name,
            cats.iter().map(|c| (*c).to_owned()).collect(),
            SlotOrigin::Initial,
            0,
        )
        .expect("initial slot names are valid");
        set.slots.insert(slot.canonical_name(), slot);
    }
    set
}

impl SlotSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set of initial-origin slots from `(name, categories)` pairs.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, Vec<String>)>,
    ) -> Result<Self, SlotError> {
        let mut set = Self::new();
        for (name, cats) in pairs {
            let slot = Slot::new(name, cats, SlotOrigin::Initial, 0)?;
            let key = slot.canonical_name();
            if set.slots.contains_key(&key) {
                return Err(SlotError::Duplicate(key));
            }
            set.slots.insert(key, slot);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Slot> {
        self.slots.values()
    }

    pub fn get(&self, name: &str) -> Option<&Slot> {
        normalize_name(name).ok().and_then(|k| self.slots.get(&k))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn filled_count(&self) -> usize {
        self.slots.values().filter(|s| s.is_filled()).count()
    }

    pub fn first_unfilled(&self) -> Option<&Slot> {
        self.slots.values().find(|s| !s.is_filled())
    }

    /// Returns a copy containing only the filled slots.
    pub fn filled_only(&self) -> SlotSet {
        SlotSet {
            slots: self
                .slots
                .iter()
                .filter(|(_, s)| s.is_filled())
                .map(|(k, s)| (k.clone(), s.clone()))
                .collect(),
        }
    }

    /// Applies proposed values to existing slots. Never adds or removes slots.
    pub fn merge_fill(&self, proposed: &SlotValueMap, _turn: usize) -> (SlotSet, MergeLog) {
        let mut next = self.clone();
        let mut log = MergeLog::default();
        for (key, value) in proposed.iter() {
            match next.slots.get_mut(key) {
                Some(slot) => {
                    if slot.value.as_deref() != Some(value) {
                        log.filled.push(FilledValue {
                            slot: slot.name.clone(),
                            previous: slot.value.clone(),
                            value: value.to_owned(),
                        });
                        slot.value = Some(value.to_owned());
                    }
                }
                None => log.discarded.push(key.to_owned()),
            }
        }
        (next, log)
    }

    /// Admits up to `cap` drafts as new unfilled slots, skipping name collisions.
    pub fn add_generated(&self, drafts: &[SlotDraft], cap: usize, turn: usize) -> (SlotSet, AddLog) {
        let mut next = self.clone();
        let mut log = AddLog::default();
        for draft in drafts {
            let slot = match Slot::new(
                &draft.name,
                draft.categories.clone(),
                SlotOrigin::Generated,
                turn,
            ) {
                Ok(slot) => slot,
                Err(_) => {
                    log.dropped.push(DroppedDraft {
                        name: draft.name.clone(),
                        reason: DropReason::InvalidName,
                    });
                    continue;
                }
            };
            let key = slot.canonical_name();
            let reason = if next.slots.contains_key(&key) {
                Some(DropReason::Duplicate)
            } else if log.admitted.len() >= cap {
                Some(DropReason::OverCap)
            } else {
                None
            };
            match reason {
                Some(reason) => log.dropped.push(DroppedDraft {
                    name: slot.name.clone(),
                    reason,
                }),
                None => {
                    log.admitted.push(slot.name.clone());
                    next.slots.insert(key, slot);
                }
            }
        }
        (next, log)
    }

    /// Fraction of slots holding a value, over the current set.
    pub fn fill_rate(&self) -> Result<f64, SlotError> {
        if self.slots.is_empty() {
            return Err(SlotError::EmptySlotSet);
        }
        Ok(self.filled_count() as f64 / self.slots.len() as f64)
    }

    /// Pretty JSON in the prompt payload shape.
    pub fn to_prompt_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slot set serializes")
    }
}

/// Free-function form of [`SlotSet::fill_rate`].
pub fn fill_rate(slots: &SlotSet) -> Result<f64, SlotError> {
    slots.fill_rate()
}

#[derive(Serialize, Deserialize)]
struct WireSlot {
    category: String,
    value: Option<String>,
}

impl Serialize for SlotSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.slots.len()))?;
        for slot in self.slots.values() {
            map.serialize_entry(
                &slot.name,
                &WireSlot {
                    category: slot.categories.join(","),
                    value: slot.value.clone(),
                },
            )?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SlotSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SetVisitor;

        impl<'de> Visitor<'de> for SetVisitor {
            type Value = SlotSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of {category, value} entries keyed by slot name")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<SlotSet, A::Error> {
                let mut set = SlotSet::new();
                while let Some((name, wire)) = access.next_entry::<String, WireSlot>()? {
                    let mut slot = Slot::new(
                        &name,
                        split_categories(&wire.category),
                        SlotOrigin::Initial,
                        0,
                    )
                    .map_err(de::Error::custom)?;
                    slot.value = wire.value.filter(|v| !v.trim().is_empty());
                    let key = slot.canonical_name();
                    if set.slots.contains_key(&key) {
                        return Err(de::Error::custom(SlotError::Duplicate(key)));
                    }
                    set.slots.insert(key, slot);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_map(SetVisitor)
    }
}

/// Full-fidelity persisted form of a slot set (keeps origin and creation turn,
/// which the prompt payload shape drops).
pub mod persisted {
    use super::*;

    pub fn serialize<S: Serializer>(set: &SlotSet, serializer: S) -> Result<S::Ok, S::Error> {
        let slots: Vec<&Slot> = set.slots.values().collect();
        slots.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<SlotSet, D::Error> {
        let slots = Vec::<Slot>::deserialize(deserializer)?;
        let mut set = SlotSet::new();
        for slot in slots {
            let key = normalize_name(&slot.name).map_err(de::Error::custom)?;
            if slot.categories.is_empty() {
                return Err(de::Error::custom(SlotError::NoCategories(slot.name)));
            }
            if set.slots.contains_key(&key) {
                return Err(de::Error::custom(SlotError::Duplicate(key)));
            }
            set.slots.insert(key, slot);
        }
        Ok(set)
    }
}
