use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gridresponder::env::{EnvConfig, Scenario, StepRecord, VoltVarEnv};
use gridresponder::grid::{CaseId, ControlAction, PowerNetwork};
use gridresponder::responder::{FeedbackStore, ResponderConfig};
use gridresponder_service::{router, AppState, Live, Shared, StateView};

fn app_state(case: CaseId, scenario: Scenario, seed: u64, store: FeedbackStore) -> Shared {
    let env = VoltVarEnv::new(PowerNetwork::builtin(case), scenario, EnvConfig::default()).unwrap();
    let live = Live::new(env, format!("{case:?}"), seed, store, None, ResponderConfig::default()).unwrap();
    Arc::new(AppState::new(live))
}

async fn call(s: &Shared, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(s.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn state(s: &Shared) -> StateView {
    let (st, v) = call(s, "GET", "/api/state", None).await;
    assert_eq!(st, StatusCode::OK);
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn fresh_state_matches_a_reset_environment() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Normal, 11, FeedbackStore::in_memory());
    let view = state(&s).await;
    let mut env = VoltVarEnv::new(PowerNetwork::builtin(CaseId::Wscc9Augmented), Scenario::Normal, EnvConfig::default()).unwrap();
    let reset = env.reset_state(11).unwrap().clone();
    assert_eq!(view.hour, 0);
    assert_eq!(view.state, reset);
    assert_eq!(view.buses.len(), 9);
    assert_eq!(view.buses.iter().map(|b| b.vm).collect::<Vec<_>>(), reset.voltages);
    assert!(view.last_step.is_none());
}

#[tokio::test]
async fn capacitor_toggle_shows_up_in_state() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Normal, 1, FeedbackStore::in_memory());
    let before = state(&s).await.state.capacitors[0];
    let (st, v) = call(
        &s,
        "POST",
        "/api/actions",
        Some(json!({"commands": [{"device": "capacitor", "id": 1, "on": before == 0}]})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{v}");
    let after = state(&s).await;
    assert_eq!(after.state.capacitors[0], 1 - before);
    assert_eq!(after.hour, 1);
    assert_eq!(after.last_step.unwrap().hour, 0);
}

#[tokio::test]
async fn blocked_battery_is_refused_with_cyber_evidence() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Wscc9Dos, 1, FeedbackStore::in_memory());
    let soc = state(&s).await.state.soc.clone();
    let (st, v) = call(
        &s,
        "POST",
        "/api/actions",
        Some(json!({"commands": [{"device": "battery", "id": 1, "power": 0.5}]})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["evidence"]["channel"], "battery:1");
    assert_eq!(v["evidence"]["intensity"], 1.0);
    assert_eq!(v["evidence"]["attacks"].as_array().unwrap().len(), 1);
    let after = state(&s).await;
    assert_eq!(after.hour, 0, "a refused action must not advance time");
    assert_eq!(after.state.soc, soc);
    assert!(after.blocked_devices.iter().any(|k| k.to_string() == "battery 1"));
}

#[tokio::test]
async fn malformed_actions_are_bad_requests() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Normal, 1, FeedbackStore::in_memory());
    let (st, v) = call(&s, "POST", "/api/actions", Some(json!({"commands": [{"device": "capacitor", "id": 1, "on": 3}]}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    // tagged commands are buffered, so the path stops at the command
    assert_eq!(v["field"], "commands[0]");
    assert!(v["error"].as_str().unwrap().contains("boolean"), "{v}");
    let (st, _) = call(&s, "POST", "/api/actions", Some(json!({"commands": [{"device": "transformer", "id": 1, "tap": 99}]}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&s, "POST", "/api/actions", Some(json!({"commands": [{"device": "battery", "id": 42, "power": 0.0}]}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(state(&s).await.hour, 0);
}

#[tokio::test]
async fn reads_do_not_mutate() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Wscc9Dos, 2, FeedbackStore::in_memory());
    let a = state(&s).await;
    let (_, r1) = call(&s, "GET", "/api/recommendations", None).await;
    call(&s, "GET", "/api/assessment", None).await;
    let (_, r2) = call(&s, "GET", "/api/recommendations", None).await;
    let b = state(&s).await;
    assert_eq!(serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
    assert_eq!(r1, r2);
}

#[tokio::test]
async fn feedback_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("feedback.ndjson");
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Wscc9Dos, 1, FeedbackStore::open(&log).unwrap());
    // the DoS alert needs a few polls before the state turns abnormal
    let mut recs = Vec::new();
    for _ in 0..24 {
        let (_, v) = call(&s, "GET", "/api/recommendations", None).await;
        recs = v.as_array().unwrap().clone();
        if !recs.is_empty() {
            break;
        }
        call(&s, "POST", "/api/step", None).await;
    }
    assert!(!recs.is_empty(), "no recommendation was ever produced");
    let id = recs[0]["id"].as_u64().unwrap();
    let (_, a) = call(&s, "GET", "/api/assessment", None).await;
    assert_eq!(recs[0]["assessment"]["status"], "abnormal");
    assert!(a.get("status").is_some());

    let (st, _) = call(&s, "POST", "/api/recommendations/9999/feedback", Some(json!({"verdict": "approved"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, v) = call(&s, "POST", &format!("/api/recommendations/{id}/feedback"), Some(json!({"verdict": "maybe"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "verdict");

    let uri = format!("/api/recommendations/{id}/feedback");
    let (st, v) = call(&s, "POST", &uri, Some(json!({"verdict": "approved", "note": "fine"}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["created"], true);
    let (_, v) = call(&s, "POST", &uri, Some(json!({"verdict": "approved", "note": "fine"}))).await;
    assert_eq!(v["created"], false);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);

    let (_, v) = call(&s, "GET", "/api/recommendations", None).await;
    let rec = v.as_array().unwrap().iter().find(|r| r["id"] == id).unwrap().clone();
    assert_eq!(rec["verdict"], "approved");
    let replayed = FeedbackStore::open(&log).unwrap();
    assert_eq!(serde_json::to_value(replayed.get(id).unwrap()).unwrap(), rec);
}

#[tokio::test]
async fn episode_replay_streams_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = VoltVarEnv::new(PowerNetwork::builtin(CaseId::Wscc9Augmented), Scenario::Normal, EnvConfig::default()).unwrap();
    env.reset_state(0).unwrap();
    let steps: Vec<StepRecord> = (0..3).map(|_| env.step_action(&ControlAction::default()).unwrap().record).collect();
    let text: String = steps.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(dir.path().join("ep1.ndjson"), text).unwrap();

    let s = app_state(CaseId::Wscc9Augmented, Scenario::Normal, 0, FeedbackStore::in_memory());
    let mut st = AppState::new(Arc::try_unwrap(s).ok().unwrap().live.into_inner().unwrap());
    st.episodes_dir = Some(dir.path().to_path_buf());
    st.replay_step = Duration::from_millis(5);
    let s = Arc::new(st);

    let (code, v) = call(&s, "GET", "/api/episodes", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v, json!(["ep1"]));
    for bad in ["/api/episodes/nope", "/api/episodes/..%2Fetc"] {
        let (code, _) = call(&s, "GET", bad, None).await;
        assert_eq!(code, StatusCode::NOT_FOUND, "{bad}");
    }

    let resp = router(s.clone()).oneshot(Request::get("/api/episodes/ep1").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let body = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    let data: Vec<StepRecord> = body
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .filter(|d| d.starts_with('{'))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    assert_eq!(data, steps);
    assert!(body.contains("event: end"));
}

#[tokio::test]
async fn finished_episode_restarts_on_the_next_action() {
    let s = app_state(CaseId::Wscc9Augmented, Scenario::Normal, 4, FeedbackStore::in_memory());
    for _ in 0..24 {
        let (st, _) = call(&s, "POST", "/api/step", None).await;
        assert_eq!(st, StatusCode::OK);
    }
    let v = state(&s).await;
    assert!(v.done);
    assert_eq!(v.episode, 0);
    call(&s, "POST", "/api/step", None).await;
    let v = state(&s).await;
    assert_eq!((v.episode, v.hour, v.done), (1, 1, false));
}
