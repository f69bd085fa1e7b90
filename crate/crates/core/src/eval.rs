//! Evaluation metrics over simulated dialogues: check-item coverage,
//! slot-fill precision/recall/F1, generated slots per turn and dialogue
//! length, plus the batch runner and its exports.
//!
//! Standard deviations are population SDs (divide by n).

use crate::engine::{Engine, EngineConfig, EngineError, MethodId};
use crate::llm::{ChatMessage, CompletionRequest, Role};
use crate::persona::{CheckItem, Persona};
use crate::prompts::{parse_coverage_judge_output, parse_value_judge_output, Bindings, PromptKind};
use crate::simulator::{run_auto_dialogue, AutoDialogueResult, UserSimulator};
use crate::slots::{normalize_name, SlotSet, SlotValueMap};
use crate::transcript::Utterance;
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("turn alignment mismatch at position {position}: predicted turn {predicted:?}, gold turn {gold:?}")]
    Alignment {
        position: usize,
        predicted: Option<usize>,
        gold: Option<usize>,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("benchmark needs at least one persona and one method")]
    NothingToRun,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    #[default]
    Keyword,
    LlmJudge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCoverage {
    pub label: String,
    pub covered: bool,
    pub judge: CoverageMode,
}

fn keyword_hit(item: &CheckItem, haystack: &str) -> bool {
    item.keywords
        .iter()
        .map(|k| normalize_text(k))
        .any(|k| !k.is_empty() && haystack.contains(&k))
}

/// Keyword matcher over the transcript and filled slot values.
pub fn coverage_over(transcript: &[Utterance], slots: &SlotSet, items: &[CheckItem]) -> Vec<ItemCoverage> {
    let mut haystack = String::new();
    for u in transcript {
        haystack.push_str(&normalize_text(&u.text));
        haystack.push('\n');
    }
    for slot in slots.iter() {
        if let Some(value) = slot.value() {
            haystack.push_str(&normalize_text(value));
            haystack.push('\n');
        }
    }
    items
        .iter()
        .map(|item| ItemCoverage {
            label: item.label.clone(),
            covered: keyword_hit(item, &haystack),
            judge: CoverageMode::Keyword,
        })
        .collect()
}

pub fn check_item_coverage(result: &AutoDialogueResult, persona: &Persona) -> Vec<ItemCoverage> {
    coverage_over(&result.transcript, &result.final_slots, &persona.check_items)
}

/// Asks the judge prompt about each item. Items whose judge call fails are
/// decided by the keyword matcher and labeled as such.
pub fn check_item_coverage_judged(result: &AutoDialogueResult, persona: &Persona, engine: &Engine) -> Vec<ItemCoverage> {
    let filled = result.final_slots.filled_only();
    let fallback = check_item_coverage(result, persona);
    persona
        .check_items
        .iter()
        .zip(fallback)
        .map(|(item, keyword)| {
            let bindings = Bindings::new()
                .check_item(&item.label)
                .history(&result.transcript)
                .slots(&filled);
            match judge(engine, PromptKind::CoverageJudge, &bindings, parse_coverage_judge_output) {
                Some(covered) => ItemCoverage {
                    label: item.label.clone(),
                    covered,
                    judge: CoverageMode::LlmJudge,
                },
                None => keyword,
            }
        })
        .collect()
}

fn judge(
    engine: &Engine,
    kind: PromptKind,
    bindings: &Bindings<'_>,
    parse: fn(&str) -> Result<bool, crate::prompts::ParseError>,
) -> Option<bool> {
    let prompt = engine.templates().render(kind, bindings).ok()?;
    let model = engine.model();
    let request = CompletionRequest {
        kind: kind.label().to_owned(),
        messages: vec![ChatMessage::new(Role::User, prompt)],
        temperature: model.temperature,
        model_id: model.model_id.clone(),
        max_output: model.max_output,
    };
    let text = engine.gateway().complete(&request).ok()?.text;
    parse(&text).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedTurn {
    pub turn: usize,
    pub values: SlotValueMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldTurn {
    pub turn: usize,
    /// Canonical slot name to value.
    pub values: IndexMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub turns: Vec<GoldTurn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl F1Score {
    /// Zero denominators give zero scores.
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            correct,
            predicted,
            gold,
        }
    }
}

/// Values written by the fill step, one entry per user turn that ran it.
pub fn predicted_from_result(result: &AutoDialogueResult) -> Vec<PredictedTurn> {
    result
        .traces
        .iter()
        .filter_map(|t| {
            let fill = t.fill.as_ref()?;
            let mut values = SlotValueMap::new();
            for f in &fill.filled {
                values.insert(&f.slot, &f.value);
            }
            Some(PredictedTurn { turn: t.turn, values })
        })
        .collect()
}

/// Micro-averaged over (turn, slot, value) triples with normalized value equality.
pub fn slot_fill_f1(predicted: &[PredictedTurn], gold: &GoldAnnotation) -> Result<F1Score, EvalError> {
    slot_fill_f1_with(predicted, gold, |a, b| normalize_text(a) == normalize_text(b))
}

pub fn slot_fill_f1_with(
    predicted: &[PredictedTurn],
    gold: &GoldAnnotation,
    same_value: impl Fn(&str, &str) -> bool,
) -> Result<F1Score, EvalError> {
    let len = predicted.len().max(gold.turns.len());
    let (mut correct, mut n_pred, mut n_gold) = (0, 0, 0);
    for position in 0..len {
        let p = predicted.get(position);
        let g = gold.turns.get(position);
        let (p, g) = match (p, g) {
            (Some(p), Some(g)) if p.turn == g.turn => (p, g),
            _ => {
                return Err(EvalError::Alignment {
                    position,
                    predicted: p.map(|p| p.turn),
                    gold: g.map(|g| g.turn),
                })
            }
        };
        let gold_values: IndexMap<String, &str> = g
            .values
            .iter()
            .filter_map(|(k, v)| normalize_name(k).ok().map(|k| (k, v.as_str())))
            .collect();
        n_pred += p.values.len();
        n_gold += gold_values.len();
        correct += p
            .values
            .iter()
            .filter(|(slot, value)| {
                normalize_name(slot)
                    .ok()
                    .and_then(|k| gold_values.get(&k).copied())
                    .is_some_and(|gv| same_value(value, gv))
            })
            .count();
    }
    Ok(F1Score::from_counts(correct, n_pred, n_gold))
}

/// Value equality decided by the judge prompt; falls back to normalized equality.
pub fn llm_value_equality(engine: &Engine) -> impl Fn(&str, &str) -> bool + '_ {
    move |predicted, reference| {
        let values = format!("Predicted: {predicted}\nReference: {reference}");
        judge(
            engine,
            PromptKind::ValueJudge,
            &Bindings::new().candidate_values(&values),
            parse_value_judge_output,
        )
        .unwrap_or_else(|| normalize_text(predicted) == normalize_text(reference))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Streaming mean and population SD.
pub fn mean_sd(values: impl IntoIterator<Item = f64>) -> Option<MeanSd> {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    (n > 0).then(|| MeanSd {
        mean,
        sd: (m2 / n as f64).sqrt(),
        n,
    })
}

/// Admitted drafts per interview-phase user turn, pooled over the batch.
pub fn slots_per_turn_stats(results: &[AutoDialogueResult]) -> Result<MeanSd, EvalError> {
    pooled_slots_per_turn(results.iter())
}

fn pooled_slots_per_turn<'a>(results: impl Iterator<Item = &'a AutoDialogueResult>) -> Result<MeanSd, EvalError> {
    mean_sd(
        results
            .flat_map(|r| r.traces.iter())
            .filter(|t| t.is_interview_turn())
            .map(|t| t.admitted_drafts().len() as f64),
    )
    .ok_or(EvalError::EmptyBatch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

fn turn_stats(results: &[&AutoDialogueResult]) -> Option<TurnStats> {
    let turns: Vec<usize> = results.iter().map(|r| r.turns()).collect();
    Some(TurnStats {
        min: *turns.iter().min()?,
        max: *turns.iter().max()?,
        mean: mean_sd(turns.iter().map(|&t| t as f64))?.mean,
    })
}

/// One CSV row per dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub persona: String,
    pub method: MethodId,
    pub turns: usize,
    pub fill_rate_final: f64,
    pub items_total: usize,
    pub items_covered: usize,
    pub slots_generated: usize,
    pub termination_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueCoverage {
    pub persona: String,
    pub method: MethodId,
    pub items: Vec<ItemCoverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub personas: usize,
    pub items_total: usize,
    pub items_covered: usize,
    /// Covered items per persona.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodId,
    pub dialogues: usize,
    pub aborted: usize,
    pub coverage: CoverageSummary,
    /// Restricted to personas concerned with transfer or resignation.
    pub job_change_coverage: Option<CoverageSummary>,
    pub slots_per_turn: Option<MeanSd>,
    pub turns: Option<TurnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<BenchmarkRow>,
    pub coverage: Vec<DialogueCoverage>,
    pub methods: Vec<MethodSummary>,
    pub turns: Option<TurnStats>,
}

fn coverage_summary<'a>(entries: impl Iterator<Item = &'a DialogueCoverage>) -> Option<CoverageSummary> {
    let (mut personas, mut total, mut covered) = (0, 0, 0);
    for e in entries {
        personas += 1;
        total += e.items.len();
        covered += e.items.iter().filter(|i| i.covered).count();
    }
    (personas > 0).then(|| CoverageSummary {
        personas,
        items_total: total,
        items_covered: covered,
        mean: covered as f64 / personas as f64,
    })
}

/// Folds finished dialogues into the report. `coverage` must hold one entry
/// per result, in the same order.
pub fn aggregate(results: &[AutoDialogueResult], coverage: Vec<DialogueCoverage>, personas: &[Persona]) -> EvalReport {
    let job_change = |name: &str| personas.iter().any(|p| p.name == name && p.job_change_concern);
    let rows = results
        .iter()
        .zip(&coverage)
        .map(|(r, c)| BenchmarkRow {
            persona: r.persona.clone(),
            method: r.method,
            turns: r.turns(),
            fill_rate_final: r.final_slots.fill_rate().unwrap_or(0.0),
            items_total: c.items.len(),
            items_covered: c.items.iter().filter(|i| i.covered).count(),
            slots_generated: r.slots_generated(),
            termination_reason: r.termination_label(),
        })
        .collect();

    let mut methods: Vec<MethodId> = Vec::new();
    for r in results {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let summaries = methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&AutoDialogueResult> = results.iter().filter(|r| r.method == method).collect();
            MethodSummary {
                method,
                dialogues: mine.len(),
                aborted: mine.iter().filter(|r| r.aborted.is_some()).count(),
                coverage: coverage_summary(coverage.iter().filter(|c| c.method == method)).unwrap_or(CoverageSummary {
                    personas: 0,
                    items_total: 0,
                    items_covered: 0,
                    mean: 0.0,
                }),
                job_change_coverage: coverage_summary(
                    coverage.iter().filter(|c| c.method == method && job_change(&c.persona)),
                ),
                slots_per_turn: if method == MethodId::Baseline {
                    None
                } else {
                    pooled_slots_per_turn(mine.iter().copied()).ok()
                },
                turns: turn_stats(&mine),
            }
        })
        .collect();
    EvalReport {
        rows,
        coverage,
        methods: summaries,
        turns: turn_stats(&results.iter().collect::<Vec<_>>()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub engine: EngineConfig,
    pub coverage: CoverageMode,
    /// Worker threads; `None` uses one per CPU.
    pub workers: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            coverage: CoverageMode::Keyword,
            workers: None,
        }
    }
}

/// Runs every persona against every method. `make_engine` is called once per
/// dialogue so scripted backends can be fresh for each pair.
pub fn run_benchmark<F>(
    personas: &[Persona],
    methods: &[MethodId],
    config: &BenchmarkConfig,
    make_engine: F,
) -> Result<(EvalReport, Vec<AutoDialogueResult>), EvalError>
where
    F: Fn(&Persona, MethodId) -> Engine + Sync,
{
    if personas.is_empty() || methods.is_empty() {
        return Err(EvalError::NothingToRun);
    }
    let pairs: Vec<(&Persona, MethodId)> = personas
        .iter()
        .flat_map(|p| methods.iter().map(move |m| (p, *m)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| EvalError::Pool(e.to_string()))?;
    let done: Vec<Result<(AutoDialogueResult, DialogueCoverage), EngineError>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(persona, method)| {
                let engine = make_engine(persona, *method);
                let simulator = UserSimulator::for_engine(&engine);
                let (result, _) = run_auto_dialogue(&engine, &simulator, persona, *method, &config.engine)?;
                let items = match config.coverage {
                    CoverageMode::Keyword => check_item_coverage(&result, persona),
                    CoverageMode::LlmJudge => check_item_coverage_judged(&result, persona, &engine),
                };
                let coverage = DialogueCoverage {
                    persona: persona.name.clone(),
                    method: *method,
                    items,
                };
                Ok((result, coverage))
            })
            .collect()
    });
    let mut results = Vec::with_capacity(done.len());
    let mut coverage = Vec::with_capacity(done.len());
    for item in done {
        let (r, c) = item?;
        results.push(r);
        coverage.push(c);
    }
    Ok((aggregate(&results, coverage, personas), results))
}

fn method_title(method: MethodId) -> &'static str {
    match method {
        MethodId::Baseline => "Baseline",
        MethodId::Proposed1 => "Proposed 1",
        MethodId::Proposed2 => "Proposed 2",
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer.serialize(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn method(&self, method: MethodId) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Covered items per persona: mean (total covered / total items), by method.
    pub fn coverage_table(&self) -> String {
        let mut out = String::from("Collected check items per persona: mean (covered/total)\n");
        let _ = write!(out, "{:<28}", "Personas");
        for m in &self.methods {
            let _ = write!(out, "{:>18}", method_title(m.method));
        }
        out.push('\n');
        let cell = |c: Option<&CoverageSummary>| match c {
            Some(c) => format!("{:.1} ({}/{})", c.mean, c.items_covered, c.items_total),
            None => "-".into(),
        };
        let _ = write!(out, "{:<28}", "All");
        for m in &self.methods {
            let _ = write!(out, "{:>18}", cell(Some(&m.coverage)));
        }
        out.push('\n');
        let _ = write!(out, "{:<28}", "Transfer/resignation");
        for m in &self.methods {
            let _ = write!(out, "{:>18}", cell(m.job_change_coverage.as_ref()));
        }
        out.push('\n');
        out
    }

    /// Generated slots per interview turn: mean (SD), for generating methods.
    pub fn slots_table(&self) -> String {
        let mut out = String::from("Generated slots per turn: mean (SD)\n");
        for m in self.methods.iter().filter(|m| m.method != MethodId::Baseline) {
            let cell = match m.slots_per_turn {
                Some(s) => format!("{:.2} ({:.2})", s.mean, s.sd),
                None => "-".into(),
            };
            let _ = writeln!(out, "{:<12}{:>14}", method_title(m.method), cell);
        }
        out
    }

    pub fn turns_table(&self) -> String {
        let mut out = String::from("Dialogue length in user turns: min / mean / max\n");
        let fmt = |t: &Option<TurnStats>| match t {
            Some(t) => format!("{} / {:.1} / {}", t.min, t.mean, t.max),
            None => "-".into(),
        };
        for m in &self.methods {
            let _ = writeln!(out, "{:<12}{:>18}", method_title(m.method), fmt(&m.turns));
        }
        let _ = writeln!(out, "{:<12}{:>18}", "All", fmt(&self.turns));
        out
    }

    pub fn render_tables(&self) -> String {
        format!("{}\n{}\n{}", self.coverage_table(), self.slots_table(), self.turns_table())
    }
}
