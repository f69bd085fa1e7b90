//! Replays recorded model outputs and compares against frozen artifacts.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the report golden after an intended change.

use interview_core::engine::{Engine, EngineConfig, MethodId, Phase, TerminationReason};
use interview_core::llm::{LlmGateway, ScriptedBackend};
use interview_core::persona::{load_persona, Persona};
use interview_core::report::{apply_share_selection, build_report, render_report_markdown, ShareSelection};
use interview_core::simulator::{run_auto_dialogue, AutoDialogueResult, UserSimulator};
use interview_core::transcript::render_history;
use std::path::{Path, PathBuf};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn aoi_endo() -> Persona {
    load_persona(&fixtures().join("personas/01_aoi_endo.json")).unwrap()
}

fn scripted_engine(script: &str) -> Engine {
    let backend = ScriptedBackend::load(&fixtures().join("scripts").join(script)).unwrap();
    Engine::with_gateway(LlmGateway::from_backend(backend))
}

fn replay(script: &str, method: MethodId) -> (Engine, AutoDialogueResult, interview_core::engine::DialogueState) {
    let engine = scripted_engine(script);
    let sim = UserSimulator::for_engine(&engine);
    let (result, state) = run_auto_dialogue(&engine, &sim, &aoi_endo(), method, &EngineConfig::default()).unwrap();
    assert!(result.aborted.is_none(), "{script}: {:?}", result.aborted);
    (engine, result, state)
}

fn check_golden(name: &str, actual: &str) {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1 to create it", path.display()));
    assert_eq!(actual, expected, "{name} drifted from its golden copy");
}

#[test]
fn baseline_dialogue_is_byte_identical() {
    let (_, result, state) = replay("aoi_endo_baseline.json", MethodId::Baseline);
    let rendered = format!("{}\n", render_history(&result.transcript));
    let expected = std::fs::read_to_string(fixtures().join("golden/aoi_endo_baseline_transcript.txt")).unwrap();
    assert_eq!(rendered, expected);

    assert_eq!(result.termination_reason(), Some(TerminationReason::FillRate));
    assert_eq!(result.turns(), 7);
    assert_eq!(state.phase(), Phase::ReportReady);
    assert_eq!(state.slots().len(), 8);
    assert_eq!(state.slots().filled_count(), 7);
    assert_eq!(result.slots_generated(), 0);
}

#[test]
fn baseline_report_matches_golden() {
    let (engine, _, state) = replay("aoi_endo_baseline.json", MethodId::Baseline);
    let report = build_report(&engine, &state).unwrap();
    let shared = apply_share_selection(&report, &ShareSelection::new()).unwrap();
    check_golden("aoi_endo_baseline_report.md", &render_report_markdown(&shared));
}

#[test]
fn scenario_final_questions_differ_by_method() {
    let cases = [
        (MethodId::Baseline, "scenario_baseline.json", "future department preferences", 0),
        (MethodId::Proposed1, "scenario_proposed1.json", "interest in other occupations", 2),
        (MethodId::Proposed2, "scenario_proposed2.json", "dissatisfaction with nursing career", 3),
    ];
    for (method, script, target, generated) in cases {
        let engine = scripted_engine(script);
        let (mut state, _) = engine
            .start_session(EngineConfig::default(), aoi_endo().questionnaire.clone(), method)
            .unwrap();
        let answers = [
            "Yes, it's been hectic, but I'm managing.",
            "I work in the surgical ward, mostly post-operative care.",
            "Honestly, lately I sometimes wonder about jobs outside nursing.",
        ];
        let mut last = None;
        for answer in answers {
            last = Some(engine.advance(&mut state, answer).unwrap());
        }
        let last = last.unwrap();
        let targets: Vec<String> = last
            .trace
            .question
            .as_ref()
            .map(|q| q.targets.iter().map(|t| t.to_lowercase()).collect())
            .unwrap_or_default();
        assert_eq!(targets, vec![target.to_owned()], "{method}");
        assert_eq!(state.slots().len(), 8 + generated, "{method}");
        match method {
            MethodId::Proposed2 => {
                let last_record = state.abduction_history().last().unwrap();
                assert!(last_record.surprising_fact_c.is_some());
                assert!(last_record.suspected_reason_a.is_some());
            }
            _ => assert!(state.abduction_history().is_empty(), "{method}"),
        }
    }
}
