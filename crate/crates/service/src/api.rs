//! HTTP routes of the ingestion service.
//!
//! Train and test trials live under separate URL prefixes, so isolation is
//! enforced by routing: a pull from `/test` never sees a train trial and
//! vice versa.

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use sts_core::pipeline::resample_uniform;
use sts_core::plot::render_svg;
use sts_core::wire::{self, StoredTrial, TrialStatus, WireError};
use sts_core::{Calibration, ChannelId, Mode, PerChannel};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use uuid::Uuid;

use crate::device::{Device, DeviceError, SessionRequest, DEFAULT_CALIBRATION_SAMPLES};
use crate::live::{LiveHub, LiveMessage, Subscription};
use crate::store::{Store, StoreError, Submitted, TrialQuery};

const BODY_LIMIT_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub hub: Arc<LiveHub>,
    pub device: Arc<Device>,
}

impl AppState {
    pub fn new(store: Store, device: Device) -> Self {
        Self {
            store: Arc::new(store),
            hub: Arc::new(LiveHub::new()),
            device: Arc::new(device),
        }
    }
}

/// An error response: `{"error": kind, "detail": message}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            detail: detail.into(),
        }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", detail)
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "detail": self.detail}))).into_response()
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "SchemaViolation", e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, kind) = match &e {
            StoreError::ModeMismatch { .. } => (StatusCode::CONFLICT, "ModeMismatch"),
            StoreError::ConflictingResubmission(_) => (StatusCode::CONFLICT, "ConflictingResubmission"),
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "NotFound"),
            StoreError::TestTrialLabel(_) => (StatusCode::CONFLICT, "TestTrialLabel"),
            StoreError::EmptyLabel => (StatusCode::BAD_REQUEST, "SchemaViolation"),
            StoreError::Corrupt { .. } | StoreError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "StoreError"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl From<DeviceError> for ApiError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::Busy => Self::new(StatusCode::CONFLICT, "SessionActive", e.to_string()),
            DeviceError::Idle => Self::new(StatusCode::NOT_FOUND, "NoSession", e.to_string()),
            DeviceError::InvalidRequest(_) | DeviceError::Acquisition(_) => {
                Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string())
            }
            DeviceError::Store(e) => e.into(),
        }
    }
}

fn parse_mode(segment: &str) -> Result<Mode, ApiError> {
    Mode::parse(segment).ok_or_else(|| ApiError::not_found(format!("no service {segment:?}; use train or test")))
}

fn parse_id(segment: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(segment).map_err(|_| ApiError::bad_request(format!("{segment:?} is not a trial id")))
}

/// Canonical JSON response body.
fn canonical(status: StatusCode, value: &Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        wire::canonical_json(value),
    )
        .into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn submit_trial(State(st): State<AppState>, Path(mode): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let endpoint = parse_mode(&mode)?;
    let value: Value = serde_json::from_slice(&body).map_err(|e| WireError::Json(e.to_string()))?;
    let packet = wire::parse_envelope(&value)?;
    let id = packet.trial_id;
    let store = st.store.clone();
    let outcome = blocking(move || store.submit(endpoint, packet)).await?;
    let status = match outcome {
        Submitted::Created { .. } => StatusCode::CREATED,
        Submitted::Replayed { .. } => StatusCode::OK,
    };
    Ok(canonical(
        status,
        &json!({"trial_id": id.to_string(), "revision": outcome.revision()}),
    ))
}

/// Parses the pull query. Unknown keys and malformed values are rejected.
pub fn parse_query(params: &HashMap<String, String>) -> Result<TrialQuery, ApiError> {
    let mut q = TrialQuery::default();
    for (k, v) in params {
        match k.as_str() {
            "user_id" => q.user_id = Some(v.clone()),
            "label" => q.label = Some(v.clone()),
            "status" => {
                q.status = Some(match v.as_str() {
                    "unlabeled" => TrialStatus::Unlabeled,
                    "labeled" => TrialStatus::Labeled,
                    _ => return Err(ApiError::bad_request(format!("status {v:?}: expected labeled or unlabeled"))),
                })
            }
            "after" => {
                let t = chrono::DateTime::parse_from_rfc3339(v)
                    .map_err(|e| ApiError::bad_request(format!("after {v:?}: {e}")))?;
                q.after = Some(t.with_timezone(&chrono::Utc));
            }
            "limit" => {
                q.limit = v
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("limit {v:?}: expected a non-negative integer")))?
            }
            "offset" => {
                q.offset = v
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("offset {v:?}: expected a non-negative integer")))?
            }
            other => return Err(ApiError::bad_request(format!("unknown query parameter {other:?}"))),
        }
    }
    Ok(q)
}

async fn list_trials(
    State(st): State<AppState>,
    Path(mode): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mode = parse_mode(&mode)?;
    let q = parse_query(&params)?;
    let trials = st.store.query(mode, &q);
    let body = Value::Array(trials.iter().map(StoredTrial::to_value).collect());
    Ok(canonical(StatusCode::OK, &body))
}

fn lookup(st: &AppState, mode: &str, id: &str) -> Result<StoredTrial, ApiError> {
    let mode = parse_mode(mode)?;
    let id = parse_id(id)?;
    st.store
        .get(id)
        .filter(|t| t.packet.mode == mode)
        .ok_or_else(|| ApiError::not_found(format!("trial {id} not found in the {mode} service")))
}

async fn get_trial(State(st): State<AppState>, Path((mode, id)): Path<(String, String)>) -> Result<Response, ApiError> {
    let trial = lookup(&st, &mode, &id)?;
    Ok(canonical(StatusCode::OK, &trial.to_value()))
}

async fn trial_plot(State(st): State<AppState>, Path((mode, id)): Path<(String, String)>) -> Result<Response, ApiError> {
    let trial = lookup(&st, &mode, &id)?;
    let rate = f64::from(trial.packet.nominal_rate.hz());
    let at = resample_uniform(&trial.packet, rate)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "PipelineError", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_svg(&at)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    label: String,
}

async fn label_trial(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    let LabelBody { label } =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "SchemaViolation", e.to_string()))?;
    let store = st.store.clone();
    let trial = blocking(move || store.label(id, &label)).await?;
    Ok(canonical(StatusCode::OK, &trial.to_value()))
}

fn sample_event(ev: &crate::live::LiveEvent) -> Event {
    Event::default()
        .event("sample")
        .data(wire::canonical_json(&json!({"t_ms": ev.t_ms, "channel": ev.channel.key(), "kg": ev.kg})))
}

fn end_event(reason: &str) -> Event {
    Event::default()
        .event("end")
        .data(wire::canonical_json(&json!({"reason": reason})))
}

/// Server-sent events: `sample` events `{t_ms, channel, kg}` and one final
/// `end` event `{reason}`.
pub fn live_stream(hub: &LiveHub) -> impl Stream<Item = Result<Event, Infallible>> + Send + 'static {
    enum S {
        Backlog(std::vec::IntoIter<crate::live::LiveEvent>, tokio::sync::broadcast::Receiver<LiveMessage>),
        Tail(tokio::sync::broadcast::Receiver<LiveMessage>),
        Done,
    }
    let initial = match hub.subscribe() {
        Subscription::NoSession => {
            return stream::iter(vec![Ok(end_event("no-session"))]).left_stream();
        }
        Subscription::Active { backlog, rx } => S::Backlog(backlog.into_iter(), rx),
    };
    stream::unfold(initial, |state| async move {
        let mut state = state;
        loop {
            match state {
                S::Backlog(mut it, rx) => match it.next() {
                    Some(ev) => return Some((Ok(sample_event(&ev)), S::Backlog(it, rx))),
                    None => state = S::Tail(rx),
                },
                S::Tail(mut rx) => match rx.recv().await {
                    Ok(LiveMessage::Sample(ev)) => return Some((Ok(sample_event(&ev)), S::Tail(rx))),
                    Ok(LiveMessage::End(reason)) => return Some((Ok(end_event(&reason)), S::Done)),
                    Err(RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "live subscriber lagged");
                        state = S::Tail(rx);
                    }
                    Err(RecvError::Closed) => return Some((Ok(end_event("session-ended")), S::Done)),
                },
                S::Done => return None,
            }
        }
    })
    .right_stream()
}

async fn live(State(st): State<AppState>) -> impl IntoResponse {
    Sse::new(live_stream(&st.hub)).keep_alive(KeepAlive::default())
}

async fn start_session(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SessionRequest = if body.is_empty() {
        SessionRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let info = st.device.start(req, st.hub.clone(), st.store.clone())?;
    Ok(canonical(StatusCode::CREATED, &serde_json::to_value(info).expect("serializable")))
}

async fn session_status(State(st): State<AppState>) -> Response {
    let body = json!({
        "active": st.device.session(),
        "last": st.device.last_outcome(),
    });
    canonical(StatusCode::OK, &body)
}

async fn stop_session(State(st): State<AppState>) -> Result<Response, ApiError> {
    let outcome = st.device.stop(&st.hub)?;
    Ok(canonical(StatusCode::OK, &serde_json::to_value(outcome).expect("serializable")))
}

fn calibration_value(cal: &PerChannel<Calibration>) -> Value {
    let mut map = serde_json::Map::new();
    for (c, k) in cal.iter() {
        map.insert(
            c.key().into(),
            json!({"tare_counts": k.tare_counts, "scale_counts_per_kg": k.scale_counts_per_kg}),
        );
    }
    Value::Object(map)
}

async fn get_calibration(State(st): State<AppState>) -> Response {
    canonical(StatusCode::OK, &calibration_value(&st.device.calibration()))
}

async fn put_calibration(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let raw: HashMap<String, Calibration> =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut cal = st.device.calibration();
    for (key, k) in raw {
        let c = ChannelId::from_key(&key).ok_or_else(|| ApiError::bad_request(format!("unknown channel {key:?}")))?;
        cal[c] = Calibration::new(k.tare_counts, k.scale_counts_per_kg)
            .map_err(|e| ApiError::bad_request(format!("{key}: {e}")))?;
    }
    st.device.set_calibration(cal);
    Ok(canonical(StatusCode::OK, &calibration_value(&cal)))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TareBody {
    samples: usize,
    seed: u64,
}

impl Default for TareBody {
    fn default() -> Self {
        Self {
            samples: DEFAULT_CALIBRATION_SAMPLES,
            seed: 1,
        }
    }
}

async fn measure_tare(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: TareBody = if body.is_empty() {
        TareBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let tare = st.device.measure_tare(req.samples, req.seed).map_err(DeviceError::from)?;
    let mut map = serde_json::Map::new();
    for (c, t) in tare.iter() {
        map.insert(c.key().into(), json!(t));
    }
    Ok(canonical(StatusCode::OK, &json!({"tare_counts": map})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleBody {
    channel: ChannelId,
    tare_counts: i64,
    known_mass_kg: f64,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_samples() -> usize {
    DEFAULT_CALIBRATION_SAMPLES
}

fn default_seed() -> u64 {
    1
}

async fn measure_scale(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ScaleBody = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let scale = st
        .device
        .measure_scale(req.channel, req.tare_counts, req.known_mass_kg, req.samples, req.seed)
        .map_err(DeviceError::from)?;
    Ok(canonical(
        StatusCode::OK,
        &json!({"channel": req.channel.key(), "scale_counts_per_kg": scale}),
    ))
}

async fn request_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let started = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        path,
        status = resp.status().as_u16(),
        elapsed_ms = started.elapsed().as_secs_f64() * 1000.0,
        "request"
    );
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/{mode}/trials", post(submit_trial).get(list_trials))
        .route("/api/v1/{mode}/trials/{id}", get(get_trial))
        .route("/api/v1/{mode}/trials/{id}/plot.svg", get(trial_plot))
        .route("/api/v1/train/trials/{id}/label", put(label_trial))
        .route("/api/v1/live", get(live))
        .route(
            "/api/v1/device/session",
            get(session_status).post(start_session).delete(stop_session),
        )
        .route("/api/v1/device/calibration", get(get_calibration).put(put_calibration))
        .route("/api/v1/device/calibration/tare", post(measure_tare))
        .route("/api/v1/device/calibration/scale", post(measure_scale))
        .layer(DefaultBodyLimit::max(BODY_LIMIT_BYTES))
        .layer(middleware::from_fn(request_log))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in the background. Returns the bound address and
/// the server task; used by tests and by `device run --local`.
pub async fn spawn(addr: SocketAddr, state: AppState) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router(state)).await;
    });
    Ok((bound, task))
}
