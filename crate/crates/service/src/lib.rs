//! HTTP API over one live simulation: state, assessment, recommendations,
//! operator feedback, manual actions and episode replay as server-sent events.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;

use gridresponder::cyber::{channel_id, CyberEvent, DosAttack};
use gridresponder::env::{GridState, StepRecord, VoltVarEnv};
use gridresponder::grid::{device_keys, ControlAction, DeviceKey};
use gridresponder::responder::{
    assess_env, respond, AssessLimits, FeedbackRecord, FeedbackStore, PolicyHandle, Recommendation, ResponderConfig,
    SystemAssessment, SystemStatus, Verdict,
};

/// Error body: `{"error": message, "field": path?, ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": msg.into() }) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<gridresponder::Error> for ApiError {
    fn from(e: gridresponder::Error) -> Self {
        use gridresponder::Error as E;
        let status = match e {
            E::UnknownRecommendation(_) => StatusCode::NOT_FOUND,
            E::UnknownDevice(_) | E::InvalidSetting { .. } | E::InvalidArgument(_) | E::Dimension(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

/// Parses a JSON body, reporting the offending field path on failure.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": e.inner().to_string(), "field": if field == "." { None } else { Some(field) } }),
        }
    })
}

/// The simulation and everything derived from it.
pub struct Live {
    pub env: VoltVarEnv,
    pub case: String,
    pub base_seed: u64,
    pub episode: u64,
    pub store: FeedbackStore,
    pub policy: Option<PolicyHandle>,
    pub responder: ResponderConfig,
    pub limits: AssessLimits,
    /// Steps of the current episode.
    pub history: Vec<StepRecord>,
    done: bool,
}

impl Live {
    pub fn new(
        env: VoltVarEnv,
        case: impl Into<String>,
        seed: u64,
        store: FeedbackStore,
        policy: Option<PolicyHandle>,
        responder: ResponderConfig,
    ) -> gridresponder::Result<Self> {
        let mut live = Self {
            env,
            case: case.into(),
            base_seed: seed,
            episode: 0,
            store,
            policy,
            responder,
            limits: AssessLimits::default(),
            history: Vec::new(),
            done: false,
        };
        live.env.reset_state(seed)?;
        live.refresh_recommendation()?;
        Ok(live)
    }

    pub fn assessment(&self) -> SystemAssessment {
        assess_env(&self.env, &self.limits)
    }

    /// Adds a recommendation for the present state when it is abnormal.
    fn refresh_recommendation(&mut self) -> gridresponder::Result<()> {
        let a = self.assessment();
        if a.status == SystemStatus::Abnormal {
            let id = self.store.next_id();
            let rec = respond(&a, &self.env, self.policy.as_ref(), &self.responder, id)?;
            self.store.insert(rec);
        }
        Ok(())
    }

    /// Applies one control step, starting a fresh episode after the last hour.
    pub fn apply(&mut self, action: &ControlAction) -> gridresponder::Result<StepRecord> {
        if self.done {
            self.episode += 1;
            self.env.reset_state(self.base_seed.wrapping_add(self.episode))?;
            self.history.clear();
            self.done = false;
        }
        let out = self.env.step_action(action)?;
        self.done = out.done;
        self.history.push(out.record.clone());
        self.refresh_recommendation()?;
        Ok(out.record)
    }

    /// Cyber evidence when a command to `key` cannot be delivered now.
    pub fn blocked_evidence(&self, key: DeviceKey) -> Option<serde_json::Value> {
        let ch = channel_id(key);
        let now = self.env.now();
        let blocked = self.env.contingency().blocked_devices.contains(&key) || self.env.cyber().is_blocked(&ch, now);
        if !blocked {
            return None;
        }
        let attacks: Vec<&DosAttack> = self.env.cyber().attacks().iter().filter(|a| a.targets.contains(&ch)).collect();
        let events: Vec<&CyberEvent> = self.env.cyber().events().iter().filter(|e| e.device == ch).collect();
        let alerts: Vec<&CyberEvent> =
            events.iter().copied().filter(|e| e.kind == gridresponder::cyber::EventKind::Alert).collect();
        let recent: Vec<&CyberEvent> = events.iter().rev().take(20).rev().copied().collect();
        Some(json!({
            "device": key,
            "channel": ch,
            "intensity": self.env.cyber().intensity(&ch, now),
            "attacks": attacks,
            "alerts": alerts,
            "recent_events": recent,
        }))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusValue {
    pub id: u32,
    pub vm: f64,
    pub va: f64,
}

/// Body of `GET /api/state`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateView {
    pub case: String,
    pub scenario: String,
    pub episode: u64,
    pub hour: usize,
    pub done: bool,
    pub state: GridState,
    pub buses: Vec<BusValue>,
    pub rtt_ms: f64,
    pub rtt_window: Vec<f64>,
    pub alerts: Vec<String>,
    pub blocked_devices: Vec<DeviceKey>,
    pub last_step: Option<StepRecord>,
}

pub struct AppState {
    pub live: Mutex<Live>,
    pub episodes_dir: Option<PathBuf>,
    /// Episode logs registered by id in addition to `episodes_dir`.
    pub episodes: BTreeMap<String, PathBuf>,
    pub replay_step: Duration,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(live: Live) -> Self {
        Self { live: Mutex::new(live), episodes_dir: None, episodes: BTreeMap::new(), replay_step: Duration::from_secs(1) }
    }

    fn episode_path(&self, id: &str) -> Option<PathBuf> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return None;
        }
        if let Some(p) = self.episodes.get(id) {
            return Some(p.clone());
        }
        let p = self.episodes_dir.as_ref()?.join(format!("{id}.ndjson"));
        p.exists().then_some(p)
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/assessment", get(get_assessment))
        .route("/api/recommendations", get(get_recommendations))
        .route("/api/recommendations/{id}/feedback", post(post_feedback))
        .route("/api/actions", post(post_action))
        .route("/api/step", post(post_step))
        .route("/api/episodes", get(list_episodes))
        .route("/api/episodes/{id}", get(replay_episode))
        .with_state(state)
}

fn lock(s: &AppState) -> std::sync::MutexGuard<'_, Live> {
    s.live.lock().unwrap_or_else(|p| p.into_inner())
}

async fn get_state(State(s): State<Shared>) -> Json<StateView> {
    let live = lock(&s);
    let env = &live.env;
    let sol = env.solution();
    let buses = env
        .network()
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| BusValue { id: b.id, vm: sol.vm[i], va: sol.va[i] })
        .collect();
    Json(StateView {
        case: live.case.clone(),
        scenario: env.scenario().to_string(),
        episode: live.episode,
        hour: env.state().hour,
        done: live.done,
        state: env.state().clone(),
        buses,
        rtt_ms: env.telemetry().rtt_ms,
        rtt_window: env.rtt_window().to_vec(),
        alerts: env.cyber().alarmed_devices(),
        blocked_devices: device_keys(env.network()).into_iter().filter(|k| live.blocked_evidence(*k).is_some()).collect(),
        last_step: live.history.last().cloned(),
    })
}

async fn get_assessment(State(s): State<Shared>) -> Json<SystemAssessment> {
    Json(lock(&s).assessment())
}

async fn get_recommendations(State(s): State<Shared>) -> Json<Vec<Recommendation>> {
    Json(lock(&s).store.recommendations().cloned().collect())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub verdict: Verdict,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub substitute: Option<ControlAction>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackReply {
    pub record: FeedbackRecord,
    /// False when the same verdict was already on file.
    pub created: bool,
}

async fn post_feedback(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<u64>,
    body: Bytes,
) -> Result<Json<FeedbackReply>, ApiError> {
    let b: FeedbackBody = parse_body(&body)?;
    let mut live = lock(&s);
    let net = live.env.network().clone();
    let (record, created) = live.store.record(id, b.verdict, b.note, b.substitute, &net)?;
    Ok(Json(FeedbackReply { record, created }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionReply {
    pub step: StepRecord,
    pub state: GridState,
}

async fn post_action(State(s): State<Shared>, body: Bytes) -> Result<Json<ActionReply>, ApiError> {
    let action: ControlAction = parse_body(&body)?;
    let mut live = lock(&s);
    action.validate(live.env.network())?;
    for c in &action.commands {
        if let Some(evidence) = live.blocked_evidence(c.device_key()) {
            return Err(ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": format!("{} is blocked by a denial-of-service attack", c.device_key()), "evidence": evidence }),
            });
        }
    }
    let step = live.apply(&action)?;
    Ok(Json(ActionReply { step, state: live.env.state().clone() }))
}

async fn post_step(State(s): State<Shared>) -> Result<Json<ActionReply>, ApiError> {
    let mut live = lock(&s);
    let step = live.apply(&ControlAction::default())?;
    Ok(Json(ActionReply { step, state: live.env.state().clone() }))
}

async fn list_episodes(State(s): State<Shared>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = s.episodes.keys().cloned().collect();
    if let Some(dir) = &s.episodes_dir {
        if let Ok(rd) = std::fs::read_dir(dir) {
            for e in rd.flatten() {
                let p = e.path();
                if p.extension().is_some_and(|x| x == "ndjson") {
                    if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
    }
    ids.sort();
    ids.dedup();
    Json(ids)
}

/// Reads and validates an episode log.
pub fn read_episode(path: &Path) -> gridresponder::Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| {
                gridresponder::Error::InvalidArgument(format!("{}:{}: {e}", path.display(), n + 1))
            })
        })
        .collect()
}

async fn replay_episode(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let path = s.episode_path(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no episode `{id}`")))?;
    let steps = read_episode(&path)?;
    let delay = s.replay_step;
    let total = steps.len();
    let events = stream::iter(steps.into_iter().enumerate())
        .then(move |(i, step)| async move {
            if i > 0 {
                tokio::time::sleep(delay).await;
            }
            Ok(Event::default().event("step").id(i.to_string()).json_data(step).expect("step serializes"))
        })
        .chain(stream::once(async move { Ok(Event::default().event("end").data(total.to_string())) }));
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Shared, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
