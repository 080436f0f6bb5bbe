use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use bilevel_cli::service::{router, AppState, PendingView, PreferenceSummary, RunSummary};
use bilevel_core::feedback::{BackendConfig, HumanChannel, PromptKind};
use bilevel_core::orchestrator::{run, FixedClock, Mode, RunConfig, RunStatus};
use reqwest::blocking::Client;
use serde_json::{json, Value};

const POLL: Duration = Duration::from_millis(20);

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/scenario")
}

fn scenario_config() -> RunConfig {
    let dir = scenario();
    let mut config: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    config.resolve_paths(&dir);
    config
}

fn clock() -> Box<FixedClock> {
    Box::new(FixedClock("2026-01-01T00:00:00.000Z".into()))
}

/// Starts the service on an ephemeral port in a background thread.
fn start(root: &Path, human: Arc<HumanChannel>) -> String {
    let app = AppState::new(root, human, clock());
    let (tx, rx) = std::sync::mpsc::channel();
    thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(app)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn completed_run(root: &Path) -> String {
    let state = run(&scenario_config(), root, &*clock(), None).unwrap();
    assert_eq!(state.status, RunStatus::Completed);
    state.run_id
}

#[test]
fn read_endpoints() {
    let root = tempfile::tempdir().unwrap();
    let id = completed_run(root.path());
    let base = start(root.path(), HumanChannel::new());
    let client = Client::new();

    let runs: Value = client.get(format!("{base}/api/runs")).send().unwrap().json().unwrap();
    assert_eq!(runs.as_array().unwrap().len(), 1);
    assert_eq!(runs[0]["run_id"], id.as_str());

    let summary: RunSummary = client.get(format!("{base}/api/runs/{id}")).send().unwrap().json().unwrap();
    assert_eq!(summary.iterations.len(), 3);
    assert_eq!(summary.iterations[2].score.normalized, Some(1.0));
    assert!(summary.iterations[0].has_feedback);
    assert_eq!(summary.expert_frame_urls.len(), 21);

    let iteration: Value = client
        .get(format!("{base}/api/runs/{id}/iterations/1"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(iteration["feedback"]["problems"].as_str().unwrap().contains("tilts"));
    assert!(iteration["stats_summary"].as_str().unwrap().starts_with("checkpoints at epochs"));

    for url in [&summary.iterations[0].frame_urls[5], &summary.expert_frame_urls[3]] {
        let resp = client.get(format!("{base}{url}")).send().unwrap();
        assert_eq!(resp.status(), 200);
        assert_eq!(resp.headers()["content-type"], "image/png");
        assert_eq!(&resp.bytes().unwrap()[..8], b"\x89PNG\r\n\x1a\n");
    }

    for missing in [
        "/api/runs/nope".to_string(),
        format!("/api/runs/{id}/iterations/9"),
        format!("/api/runs/{id}/iterations/0/frames/999"),
        format!("/api/runs/{id}/expert/frames/21"),
    ] {
        let resp = client.get(format!("{base}{missing}")).send().unwrap();
        assert_eq!(resp.status(), 404, "{missing}");
        let body: Value = resp.json().unwrap();
        assert_eq!(body["code"], "not_found");
    }

    // GETs do not touch the run directory
    let before = std::fs::read(root.path().join(&id).join("report.json")).unwrap();
    client.get(format!("{base}/api/runs/{id}")).send().unwrap();
    assert_eq!(before, std::fs::read(root.path().join(&id).join("report.json")).unwrap());
}

#[test]
fn preferences_validate_and_aggregate() {
    let root = tempfile::tempdir().unwrap();
    let base = start(root.path(), HumanChannel::new());
    let client = Client::new();
    let post = |score: Value| {
        client
            .post(format!("{base}/api/preferences"))
            .json(&json!({"run": "r1", "iteration": 0, "rater": "a", "score": score}))
            .send()
            .unwrap()
    };
    assert_eq!(post(json!(6)).status(), 400);
    assert_eq!(post(json!(-1)).status(), 400);
    assert_eq!(post(json!("x")).status(), 400);
    let malformed = client
        .post(format!("{base}/api/preferences"))
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(malformed.status(), 400);
    for score in [3, 4, 5] {
        assert_eq!(post(json!(score)).status(), 200);
    }
    let summary: PreferenceSummary = client.get(format!("{base}/api/preferences")).send().unwrap().json().unwrap();
    assert_eq!(summary.count, 3);
    assert_eq!(summary.means["r1"], 4.0);
    let lines = std::fs::read_to_string(root.path().join("preferences.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
}

#[test]
fn feedback_without_pending_is_409() {
    let root = tempfile::tempdir().unwrap();
    let base = start(root.path(), HumanChannel::new());
    let resp = Client::new()
        .post(format!("{base}/api/runs/x/iterations/0/feedback"))
        .json(&json!({"problems": "slow"}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 409);
}

fn wait_pending(client: &Client, base: &str) -> bilevel_core::feedback::PendingFeedback {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let view: PendingView = client.get(format!("{base}/api/pending-feedback")).send().unwrap().json().unwrap();
        if let Some(p) = view.pending {
            return p;
        }
        assert!(Instant::now() < deadline, "no pending feedback appeared");
        thread::sleep(POLL);
    }
}

#[test]
fn human_mode_loop() {
    let root = tempfile::tempdir().unwrap();
    let human = HumanChannel::new();
    let base = start(root.path(), human.clone());
    let config = RunConfig {
        mode: Mode::Human,
        iterations: 2,
        run_id: Some("human".into()),
        upper: BackendConfig {
            timeout_secs: Some(60.0),
            ..BackendConfig::human()
        },
        ..scenario_config()
    };
    let runner = {
        let root = root.path().to_path_buf();
        thread::spawn(move || run(&config, &root, &FixedClock("t".into()), Some(human)).unwrap())
    };
    let client = Client::new();

    let first = wait_pending(&client, &base);
    assert_eq!(first.kind, Some(PromptKind::VlmInitial));
    assert_eq!(first.expert_frame_urls.len(), 16);
    let frame = client.get(format!("{base}{}", first.expert_frame_urls[0])).send().unwrap();
    assert_eq!(frame.status(), 200);
    // wrong iteration is refused
    let resp = client
        .post(format!("{base}/api/runs/human/iterations/3/feedback"))
        .json(&json!({"raw": "x"}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 409);
    let resp = client
        .post(format!("{base}/api/runs/human/iterations/0/feedback"))
        .json(&json!({"raw": "1. Task: hop forward."}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 200);

    let review = wait_pending(&client, &base);
    assert_eq!(review.kind, Some(PromptKind::VlmReview));
    assert_eq!(review.reward_text, "forward = vel_x");
    assert!(review.stats_summary.starts_with("checkpoints at epochs"));
    assert_eq!(review.learner_frame_urls.len(), 16);
    let frame = client.get(format!("{base}{}", review.learner_frame_urls[15])).send().unwrap();
    assert_eq!(frame.status(), 200);
    let posted = Instant::now();
    let resp = client
        .post(format!("{base}/api/runs/human/iterations/0/feedback"))
        .json(&json!({
            "problems": "It slides instead of hopping.",
            "rewrite_component": "None",
            "remove_component": "None",
            "new_component": "Reward upward speed while moving forward."
        }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 200);
    let view: PendingView = client.get(format!("{base}/api/pending-feedback")).send().unwrap().json().unwrap();
    assert!(view.pending.is_none());

    let state = runner.join().unwrap();
    assert!(posted.elapsed() < Duration::from_secs(30));
    assert_eq!(state.status, RunStatus::Completed);
    assert_eq!(state.description, "1. Task: hop forward.");
    let feedback = state.iterations[0].feedback.as_ref().unwrap();
    assert_eq!(feedback.problems.as_deref(), Some("It slides instead of hopping."));
    let llm_review = state
        .transcript
        .iter()
        .find(|e| e.kind == Some(PromptKind::LlmReview))
        .unwrap();
    assert!(llm_review.turns.last().unwrap().text.contains("4. New Component: Reward upward speed"));
}
