//! Route table and handlers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use lap_core::math::corr::correlation_to_concordance;
use lap_core::models::{build_target, ConcordanceInput};
use lap_core::sampler::{kde_grid, quantiles, SamplerConfig, KDE_POINTS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex as AsyncMutex;

use crate::error::ApiError;
use crate::jobs::{engine_version, Job, JobResult, JobStatus, Provenance, Summary, Task, WorkerPool, SUMMARY_PROBS};
use crate::schema::api_schema;
use crate::session::{CoherencyState, CreateSession, JobRef, MarginalAnswer, Session, SessionInputs, SolvedHyper};
use crate::store::{Kind, Store, StoreError};

/// JSON body extractor whose rejections use the service error shape.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state).await.map(|Json(v)| ApiJson(v)).map_err(ApiError::from)
    }
}

type SessionCell = Arc<AsyncMutex<Session>>;

struct Inner {
    store: Arc<Store>,
    sessions: RwLock<HashMap<String, SessionCell>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<Job>>>>,
    results: Arc<Mutex<HashMap<String, Arc<JobResult>>>>,
    pool: WorkerPool,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: Store, workers: usize) -> Self {
        let store = Arc::new(store);
        let results: Arc<Mutex<HashMap<String, Arc<JobResult>>>> = Arc::default();
        let sink = Arc::clone(&results);
        let pool = WorkerPool::start(
            workers,
            Arc::clone(&store),
            Arc::new(move |r: JobResult| {
                if let Ok(mut m) = sink.lock() {
                    m.insert(r.job_id.clone(), Arc::new(r));
                }
            }),
        );
        Self(Arc::new(Inner { store, sessions: RwLock::default(), jobs: RwLock::default(), results, pool }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    /// Loads every stored session, returning the files that failed.
    pub fn preload(&self) -> Vec<StoreError> {
        let mut errors = Vec::new();
        for id in self.0.store.list(Kind::Session).unwrap_or_default() {
            if let Err(e) = self.session_from_store(&id) {
                errors.push(e);
            }
        }
        errors
    }

    fn session_from_store(&self, id: &str) -> Result<SessionCell, StoreError> {
        let s: Session = self.0.store.load(Kind::Session, id)?;
        let mut map = self.0.sessions.write().map_err(|_| poisoned())?;
        Ok(Arc::clone(map.entry(id.to_string()).or_insert_with(|| Arc::new(AsyncMutex::new(s)))))
    }

    fn session(&self, id: &str) -> Result<SessionCell, ApiError> {
        if let Some(c) = self.0.sessions.read().map_err(|_| ApiError::internal("lock poisoned"))?.get(id) {
            return Ok(Arc::clone(c));
        }
        Ok(self.session_from_store(id)?)
    }

    fn job(&self, id: &str) -> Result<Arc<Mutex<Job>>, ApiError> {
        if let Some(j) = self.0.jobs.read().map_err(|_| ApiError::internal("lock poisoned"))?.get(id) {
            return Ok(Arc::clone(j));
        }
        let mut job: Job = self.0.store.load(Kind::Job, id)?;
        // left unfinished by an earlier process
        if matches!(job.status, JobStatus::Queued | JobStatus::Running) {
            job.fail("interrupted before completion");
            self.0.store.save(Kind::Job, id, &job)?;
        }
        let mut map = self.0.jobs.write().map_err(|_| ApiError::internal("lock poisoned"))?;
        Ok(Arc::clone(map.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(job)))))
    }

    fn result(&self, id: &str) -> Result<Arc<JobResult>, ApiError> {
        if let Some(r) = self.0.results.lock().map_err(|_| ApiError::internal("lock poisoned"))?.get(id) {
            return Ok(Arc::clone(r));
        }
        let r: Arc<JobResult> = Arc::new(self.0.store.load(Kind::Result, id)?);
        if let Ok(mut m) = self.0.results.lock() {
            m.insert(id.to_string(), Arc::clone(&r));
        }
        Ok(r)
    }

    fn finished_result(&self, id: &str) -> Result<Arc<JobResult>, ApiError> {
        let job = self.job(id)?.lock().map_err(|_| ApiError::internal("lock poisoned"))?.clone();
        match job.status {
            JobStatus::Done => self.result(id),
            JobStatus::Failed => Err(ApiError::conflict("job_failed", job.message.unwrap_or_default())),
            _ => Err(ApiError::conflict("job_not_finished", format!("job {id} is {:?}", job.status).to_lowercase())),
        }
    }
}

fn poisoned() -> StoreError {
    StoreError::Io(std::io::Error::other("lock poisoned"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/marginals", put(put_marginals))
        .route("/sessions/{id}/concordances", put(put_concordances))
        .route("/sessions/{id}/coherency", get(get_coherency))
        .route("/sessions/{id}/jobs", post(post_job))
        .route("/sessions/{id}/preview", get(get_preview))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/results/summary", get(get_summary))
        .route("/jobs/{id}/results/density", get(get_density))
        .route("/api/schema", get(|| async { Json(api_schema()) }))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn create_session(
    State(st): State<AppState>,
    ApiJson(body): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let session = Session::new(uuid::Uuid::new_v4().simple().to_string(), body.into_inputs()?)?;
    st.store().save(Kind::Session, &session.id, &session)?;
    let cell = Arc::new(AsyncMutex::new(session.clone()));
    st.0.sessions.write().map_err(|_| ApiError::internal("lock poisoned"))?.insert(session.id.clone(), cell);
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    let cell = st.session(&id)?;
    let s = cell.lock().await.clone();
    Ok(Json(s))
}

/// Applies `edit` to a copy of the inputs, persists the new revision, then commits.
async fn mutate(st: &AppState, id: &str, change: &str, edit: impl FnOnce(&mut SessionInputs)) -> Result<Session, ApiError> {
    let cell = st.session(id)?;
    let mut guard = cell.lock().await;
    let mut inputs = guard.inputs.clone();
    edit(&mut inputs);
    let mut next = guard.clone();
    next.apply(change, inputs)?;
    st.store().save(Kind::Session, id, &next)?;
    *guard = next.clone();
    Ok(next)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginalsBody {
    marginals: Vec<MarginalAnswer>,
}

#[derive(Serialize)]
struct MarginalsResponse {
    session_id: String,
    revision: u64,
    hypers: Vec<SolvedHyper>,
}

async fn put_marginals(
    State(st): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<MarginalsBody>,
) -> Result<Json<MarginalsResponse>, ApiError> {
    let s = mutate(&st, &id, "marginals", |i| i.marginals = body.marginals).await?;
    Ok(Json(MarginalsResponse { session_id: s.id, revision: s.revision, hypers: s.hypers }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcordancesBody {
    concordances: Vec<ConcordanceInput>,
}

#[derive(Serialize)]
struct CoherencyResponse {
    session_id: String,
    revision: u64,
    coherency: CoherencyState,
}

async fn put_concordances(
    State(st): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<ConcordancesBody>,
) -> Result<Json<CoherencyResponse>, ApiError> {
    let s = mutate(&st, &id, "concordances", |i| i.concordances = body.concordances).await?;
    Ok(Json(CoherencyResponse { session_id: s.id, revision: s.revision, coherency: s.coherency }))
}

async fn get_coherency(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<CoherencyResponse>, ApiError> {
    let cell = st.session(&id)?;
    let s = cell.lock().await;
    Ok(Json(CoherencyResponse { session_id: s.id.clone(), revision: s.revision, coherency: s.coherency.clone() }))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    #[serde(default)]
    sampler: Option<SamplerConfig>,
}

#[derive(Serialize)]
struct JobView {
    #[serde(flatten)]
    job: Job,
    stale: bool,
}

async fn post_job(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<JobView>), ApiError> {
    let req: JobRequest = if body.iter().all(u8::is_ascii_whitespace) {
        JobRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.to_string()))?
    };
    let cell = st.session(&id)?;
    let mut session = cell.lock().await;
    let document = session.job_document()?;
    let sampler = req.sampler.or_else(|| document.sampler.clone()).unwrap_or_default();
    sampler.validate().map_err(|e| ApiError::field("sampler", e))?;
    let d = document.clone();
    tokio::task::spawn_blocking(move || build_target(&d, std::path::Path::new(".")).map(|_| ()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;

    let job = Job::new(uuid::Uuid::new_v4().simple().to_string(), id.clone(), session.revision, sampler.clone());
    let provenance = Provenance {
        engine_version: engine_version(),
        session_id: id.clone(),
        session_revision: session.revision,
        inputs: session.inputs.clone(),
        document,
        sampler,
    };
    let mut next = session.clone();
    next.jobs.push(JobRef { id: job.id.clone(), revision: session.revision });
    st.store().save(Kind::Job, &job.id, &job)?;
    st.store().save(Kind::Session, &id, &next)?;
    *session = next;
    drop(session);

    let view = JobView { job: job.clone(), stale: false };
    let cell = Arc::new(Mutex::new(job));
    st.0.jobs.write().map_err(|_| ApiError::internal("lock poisoned"))?.insert(view.job.id.clone(), Arc::clone(&cell));
    if !st.0.pool.submit(Task { job: cell, provenance }) {
        return Err(ApiError::internal("worker pool stopped"));
    }
    Ok((StatusCode::ACCEPTED, Json(view)))
}

async fn stale(st: &AppState, job: &Job) -> bool {
    match st.session(&job.session_id) {
        Ok(cell) => cell.lock().await.is_stale(job.revision),
        Err(_) => true,
    }
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<JobView>, ApiError> {
    let job = st.job(&id)?.lock().map_err(|_| ApiError::internal("lock poisoned"))?.clone();
    let stale = stale(&st, &job).await;
    Ok(Json(JobView { job, stale }))
}

#[derive(Serialize)]
struct ConcordanceComparison {
    pair: (usize, usize),
    elicited: f64,
    posterior_median: f64,
}

#[derive(Serialize)]
struct SummaryResponse {
    job_id: String,
    session_id: String,
    stale: bool,
    provenance: Provenance,
    n_chains: usize,
    draws_per_chain: usize,
    acceptance: Vec<f64>,
    warnings: Vec<String>,
    probs: Vec<f64>,
    summaries: Vec<Summary>,
    concordances: Vec<ConcordanceComparison>,
}

async fn get_summary(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SummaryResponse>, ApiError> {
    let result = st.finished_result(&id)?;
    let job = st.job(&id)?.lock().map_err(|_| ApiError::internal("lock poisoned"))?.clone();
    let stale = stale(&st, &job).await;
    let r = Arc::clone(&result);
    let (summaries, concordances) = tokio::task::spawn_blocking(move || {
        let comparisons = r
            .provenance
            .inputs
            .concordances
            .iter()
            .filter_map(|c| {
                let (i, j) = (c.pair.0.min(c.pair.1), c.pair.0.max(c.pair.1));
                let elicited = c.p.or_else(|| c.correlation().ok().and_then(|r| correlation_to_concordance(r).ok()))?;
                let col = r.batch.column(&format!("concordance[{i},{j}]"))?;
                Some(ConcordanceComparison { pair: (i, j), elicited, posterior_median: quantiles(&col, &[0.5])[0] })
            })
            .collect::<Vec<_>>();
        (r.summaries(), comparisons)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(SummaryResponse {
        job_id: id,
        session_id: job.session_id,
        stale,
        provenance: result.provenance.clone(),
        n_chains: result.batch.n_chains(),
        draws_per_chain: result.batch.n_samples(),
        acceptance: result.batch.acceptance.clone(),
        warnings: result.batch.warnings.clone(),
        probs: SUMMARY_PROBS.to_vec(),
        summaries,
        concordances,
    }))
}

#[derive(Deserialize)]
struct DensityQuery {
    name: Option<String>,
}

async fn get_density(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<DensityQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query?;
    let name = q.name.filter(|n| !n.is_empty()).ok_or_else(|| ApiError::field("name", "query parameter `name` is required"))?;
    let result = st.finished_result(&id)?;
    let Some(col) = result.batch.column(&name) else {
        return Err(ApiError::field("name", format!("unknown name `{name}`"))
            .with_details(json!({ "fields": [{ "field": "name", "message": "unknown name" }], "available": result.batch.names() })));
    };
    let grid = tokio::task::spawn_blocking(move || kde_grid(&col, KDE_POINTS))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(json!({ "job_id": id, "name": name, "bandwidth": grid.bandwidth, "x": grid.x, "pdf": grid.pdf })))
}

#[derive(Deserialize)]
struct PreviewQuery {
    component: Option<usize>,
}

pub const PREVIEW_POINTS: usize = 512;

async fn get_preview(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<PreviewQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query?;
    let cell = st.session(&id)?;
    let s = cell.lock().await.clone();
    let c = q.component.ok_or_else(|| ApiError::field("component", "query parameter `component` is required"))?;
    let h = s
        .hypers
        .iter()
        .find(|h| h.component == c)
        .ok_or_else(|| ApiError::field("component", format!("component {c} has no solved marginal")))?;
    let t = h.hyper.predictive()?;
    let (lo, hi) = (t.quantile(0.001)?, t.quantile(0.999)?);
    let step = (hi - lo) / (PREVIEW_POINTS - 1) as f64;
    let x: Vec<f64> = (0..PREVIEW_POINTS).map(|i| lo + step * i as f64).collect();
    let pdf: Vec<f64> = x.iter().map(|&v| t.pdf(v)).collect();
    Ok(Json(json!({ "session_id": id, "component": c, "hyper": h, "x": x, "pdf": pdf })))
}
