//! Sampling jobs and the FIFO worker pool that runs them.

use std::path::Path;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use lap_core::models::{build_target, ModelDocument};
use lap_core::sampler::{quantiles, run_chains_with_progress, SampleBatch, SamplerConfig};
use lap_core::ENGINE_VERSION;
use serde::{Deserialize, Serialize};

use crate::session::{now_ms, SessionInputs};
use crate::store::{Kind, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub session_id: String,
    /// Session revision the job was started from.
    pub revision: u64,
    pub config: SamplerConfig,
    pub status: JobStatus,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub created_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_ms: Option<u64>,
}

impl Job {
    pub fn new(id: String, session_id: String, revision: u64, config: SamplerConfig) -> Self {
        Self {
            id,
            session_id,
            revision,
            config,
            status: JobStatus::Queued,
            progress: 0.0,
            message: None,
            created_ms: now_ms(),
            finished_ms: None,
        }
    }

    /// Moves to `to` if that is a forward transition.
    pub fn advance(&mut self, to: JobStatus) -> bool {
        let ok = match (self.status, to) {
            (JobStatus::Queued, JobStatus::Running) => true,
            (JobStatus::Queued | JobStatus::Running, JobStatus::Done | JobStatus::Failed) => true,
            _ => false,
        };
        if ok {
            self.status = to;
            if matches!(to, JobStatus::Done | JobStatus::Failed) {
                self.finished_ms = Some(now_ms());
            }
        }
        ok
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        if self.advance(JobStatus::Failed) {
            self.message = Some(message.into());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub session_id: String,
    pub session_revision: u64,
    pub inputs: SessionInputs,
    pub document: ModelDocument,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job_id: String,
    pub provenance: Provenance,
    pub batch: SampleBatch,
}

pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// At [`SUMMARY_PROBS`].
    pub quantiles: Vec<f64>,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

impl JobResult {
    pub fn summaries(&self) -> Vec<Summary> {
        let diag = self.batch.diagnostics();
        self.batch
            .names()
            .into_iter()
            .map(|name| {
                let col = self.batch.column(&name).unwrap_or_default();
                let d = diag.get(&name);
                Summary {
                    quantiles: quantiles(&col, &SUMMARY_PROBS),
                    mean: d.map_or(f64::NAN, |d| d.mean),
                    sd: d.map_or(f64::NAN, |d| d.sd),
                    rhat: d.and_then(|d| d.rhat),
                    ess_bulk: d.and_then(|d| d.ess_bulk),
                    name,
                }
            })
            .collect()
    }
}

pub struct Task {
    pub job: Arc<Mutex<Job>>,
    pub provenance: Provenance,
}

/// Fixed set of threads taking jobs from one queue in submission order.
pub struct WorkerPool {
    tx: Mutex<Sender<Task>>,
}

impl WorkerPool {
    pub fn start(workers: usize, store: Arc<Store>, on_result: Arc<dyn Fn(JobResult) + Send + Sync>) -> Self {
        let (tx, rx) = channel::<Task>();
        let rx = Arc::new(Mutex::new(rx));
        for n in 0..workers.max(1) {
            let rx: Arc<Mutex<Receiver<Task>>> = Arc::clone(&rx);
            let store = Arc::clone(&store);
            let on_result = Arc::clone(&on_result);
            thread::Builder::new()
                .name(format!("lap-worker-{n}"))
                .spawn(move || loop {
                    let next = rx.lock().map(|r| r.recv());
                    match next {
                        Ok(Ok(task)) => run_task(task, &store, on_result.as_ref()),
                        _ => break,
                    }
                })
                .expect("spawn worker thread");
        }
        Self { tx: Mutex::new(tx) }
    }

    pub fn submit(&self, task: Task) -> bool {
        self.tx.lock().map(|tx| tx.send(task).is_ok()).unwrap_or(false)
    }
}

fn persist(store: &Store, job: &Mutex<Job>) {
    let snapshot = job.lock().map(|j| j.clone());
    if let Ok(j) = snapshot {
        if let Err(e) = store.save(Kind::Job, &j.id, &j) {
            tracing::error!(job = %j.id, "cannot persist job: {e}");
        }
    }
}

fn run_task(task: Task, store: &Store, on_result: &(dyn Fn(JobResult) + Send + Sync)) {
    let Task { job, provenance } = task;
    if let Ok(mut j) = job.lock() {
        j.advance(JobStatus::Running);
    }
    persist(store, &job);
    let job_id = job.lock().map(|j| j.id.clone()).unwrap_or_default();
    let outcome = build_target(&provenance.document, Path::new(".")).and_then(|target| {
        run_chains_with_progress(&target, &provenance.sampler, &|f| {
            if let Ok(mut j) = job.lock() {
                j.progress = f.min(1.0);
            }
        })
    });
    match outcome {
        Ok(batch) => {
            let result = JobResult { job_id: job_id.clone(), provenance, batch };
            match store.save(Kind::Result, &job_id, &result) {
                Ok(()) => {
                    on_result(result);
                    if let Ok(mut j) = job.lock() {
                        j.progress = 1.0;
                        j.advance(JobStatus::Done);
                    }
                }
                Err(e) => {
                    if let Ok(mut j) = job.lock() {
                        j.fail(format!("cannot store result: {e}"));
                    }
                }
            }
        }
        Err(e) => {
            tracing::warn!(job = %job_id, "sampling failed: {e}");
            if let Ok(mut j) = job.lock() {
                j.fail(e.to_string());
            }
        }
    }
    persist(store, &job);
}

/// Engine version string recorded with every result.
pub fn engine_version() -> String {
    ENGINE_VERSION.to_string()
}
