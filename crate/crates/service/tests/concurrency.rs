mod common;

use common::{questionnaire, service_with};
use interview_core::llm::{BackendError, CompletionBackend, CompletionRequest, LlmGateway, OfflineBackend};
use interview_core::transcript::{alternates, Speaker};
use interview_core::{Engine, Questionnaire};
use interview_service::CreateSessionRequest;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::time::Duration;

/// Offline answers after a fixed delay, so turns overlap.
struct SlowBackend {
    inner: OfflineBackend,
    delay: Duration,
}

impl CompletionBackend for SlowBackend {
    fn label(&self) -> &str {
        "slow-offline"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        std::thread::sleep(self.delay);
        self.inner.complete(request)
    }
}

fn slow_engine(ms: u64) -> Engine {
    Engine::with_gateway(LlmGateway::from_backend(SlowBackend {
        inner: OfflineBackend::new(),
        delay: Duration::from_millis(ms),
    }))
}

fn request() -> CreateSessionRequest {
    let q: Questionnaire = serde_json::from_value(questionnaire()).unwrap();
    CreateSessionRequest::new(q)
}

#[test]
fn simultaneous_posts_to_one_session_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), slow_engine(20));
    let id = service.create_session(request()).unwrap().id.to_string();
    let barrier = Arc::new(Barrier::new(2));
    let texts = ["First message about my ward.", "Second message about my training."];
    let handles: Vec<_> = texts
        .iter()
        .map(|text| {
            let (service, barrier, id) = (service.clone(), barrier.clone(), id.clone());
            let text = text.to_string();
            std::thread::spawn(move || {
                barrier.wait();
                service.post_utterance(&id, &text).unwrap()
            })
        })
        .collect();
    let mut turns: Vec<usize> = handles.into_iter().map(|h| h.join().unwrap().turn).collect();
    turns.sort();
    assert_eq!(turns, vec![1, 2]);

    let state = service.get_state(&id).unwrap();
    assert_eq!(state.turn_index, 2);
    assert!(alternates(&state.transcript));
    for text in texts {
        let count = state
            .transcript
            .iter()
            .filter(|u| u.speaker == Speaker::User && u.text == text)
            .count();
        assert_eq!(count, 1, "{text}");
    }
    let log = service.turn_log(&id).unwrap();
    assert_eq!(log.iter().map(|e| e.turn).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn reads_see_last_committed_snapshot_during_a_turn() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), slow_engine(150));
    let id = service.create_session(request()).unwrap().id.to_string();
    let done = Arc::new(AtomicBool::new(false));
    let writer = {
        let (service, id, done) = (service.clone(), id.clone(), done.clone());
        std::thread::spawn(move || {
            service.post_utterance(&id, "Yes, quite busy.").unwrap();
            done.store(true, Ordering::SeqCst);
        })
    };
    std::thread::sleep(Duration::from_millis(40));
    let state = service.get_state(&id).unwrap();
    // Every turn makes at least two model calls, so the writer is still running.
    assert!(!done.load(Ordering::SeqCst), "turn finished before the read; timing assumption broken");
    assert_eq!(state.turn_index, 0);
    assert_eq!(state.transcript.len(), 1);
    writer.join().unwrap();
    assert_eq!(service.get_state(&id).unwrap().turn_index, 1);
}

#[test]
fn many_sessions_progress_independently() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), slow_engine(1));
    let ids: Vec<String> = (0..8).map(|_| service.create_session(request()).unwrap().id.to_string()).collect();
    let handles: Vec<_> = ids
        .iter()
        .enumerate()
        .map(|(n, id)| {
            let (service, id) = (service.clone(), id.clone());
            std::thread::spawn(move || {
                for k in 0..=n % 3 {
                    service.post_utterance(&id, &format!("session {n} message {k}")).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    for (n, id) in ids.iter().enumerate() {
        let state = service.get_state(id).unwrap();
        assert_eq!(state.turn_index, n % 3 + 1);
        assert!(state
            .transcript
            .iter()
            .filter(|u| u.speaker == Speaker::User)
            .all(|u| u.text.starts_with(&format!("session {n} "))));
    }
    assert_eq!(service.list_sessions().unwrap().len(), 8);
}
