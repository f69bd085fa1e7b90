mod common;

use common::{http, questionnaire, ServerProcess};
use interview_core::Phase;
use interview_service::store::TurnLogEntry;
use interview_service::{FileStore, SessionId};
use serde_json::{json, Value};

fn committed_view(base: &str, id: &str) -> (Value, Value) {
    let (status, state) = http("GET", &format!("{base}/sessions/{id}"), None);
    assert_eq!(status, 200, "{state}");
    (state["transcript"].clone(), state["slots"].clone())
}

#[test]
fn killing_the_server_after_each_turn_loses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut server = ServerProcess::start(dir.path());
    let (status, created) = http(
        "POST",
        &format!("{}/sessions", server.base),
        Some(json!({ "questionnaire": questionnaire(), "config": { "max_interview_turns": 6 } })),
    );
    assert_eq!(status, 201, "{created}");
    let id = created["id"].as_str().unwrap().to_owned();

    let answers = [
        "Yes, it has been a hectic month.",
        "I work in the surgical ward on night shifts.",
        "I want to aim for a management position.",
        "I am worried about promotion at this hospital.",
        "I would like online training courses.",
        "I feel rewarded when patients recover.",
    ];
    for (turn, text) in answers.iter().enumerate() {
        let (status, reply) = http("POST", &format!("{}/sessions/{id}/utterances", server.base), Some(json!({ "text": text })));
        assert_eq!(status, 200, "{reply}");
        let before = committed_view(&server.base, &id);

        server.kill();
        server = ServerProcess::start(dir.path());

        let after = committed_view(&server.base, &id);
        assert_eq!(before, after, "state changed across restart after turn {}", turn + 1);
        let log = FileStore::open(dir.path()).unwrap().turn_log(&id.parse().unwrap()).unwrap();
        assert_eq!(log.len(), turn + 1);
        if reply["terminal"] == json!(true) {
            break;
        }
    }
    let (status, report) = http("GET", &format!("{}/sessions/{id}/report", server.base), None);
    assert_eq!(status, 200, "{report}");
}

#[test]
fn uncommitted_log_entries_are_trimmed_on_reload() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerProcess::start(dir.path());
    let (_, created) = http("POST", &format!("{}/sessions", server.base), Some(json!({ "questionnaire": questionnaire() })));
    let id = created["id"].as_str().unwrap().to_owned();
    http("POST", &format!("{}/sessions/{id}/utterances", server.base), Some(json!({ "text": "Busy, yes." })));
    server.kill();

    // Simulate a crash after the log append but before the snapshot rename,
    // followed by a torn half-written line.
    let store = FileStore::open(dir.path()).unwrap();
    let sid: SessionId = id.parse().unwrap();
    store
        .append_turn(
            &sid,
            &TurnLogEntry {
                turn: 2,
                at: chrono::Utc::now(),
                user: "never committed".into(),
                system: "never sent".into(),
                phase: Phase::SmallTalk,
                fill_rate: 0.0,
                admitted_slots: Vec::new(),
            },
        )
        .unwrap();
    let log_path = dir.path().join(format!("{id}.turns.jsonl"));
    let mut raw = std::fs::read_to_string(&log_path).unwrap();
    raw.push_str("{\"turn\": 3, \"at\": ");
    std::fs::write(&log_path, raw).unwrap();

    let server = ServerProcess::start(dir.path());
    let (status, state) = http("GET", &format!("{}/sessions/{id}", server.base), None);
    assert_eq!(status, 200);
    assert_eq!(state["turn_index"], 1);
    let log = store.turn_log(&sid).unwrap();
    assert_eq!(log.iter().map(|e| e.turn).collect::<Vec<_>>(), vec![1]);

    // The session continues with turn 2 and the log stays consistent.
    let (status, reply) = http("POST", &format!("{}/sessions/{id}/utterances", server.base), Some(json!({ "text": "Mostly night shifts." })));
    assert_eq!(status, 200, "{reply}");
    let log = store.turn_log(&sid).unwrap();
    assert_eq!(log.iter().map(|e| e.turn).collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(log[1].user, "Mostly night shifts.");
}
