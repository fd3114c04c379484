//! Worker loop: one fresh ephemeral worker identity per task.

use std::time::Duration;

use rand::{CryptoRng, RngCore};

use morpheo_core::compute::{Worker, WorkerError};
use morpheo_core::orchestrator::OrchestratorError;
use morpheo_core::service::{Platform, ServiceError};
use morpheo_core::types::TaskId;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("task {task}: {error}")]
    Task { task: TaskId, error: WorkerError },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Takes one task and carries it through. `Ok(None)` when nothing is
/// queued. A failure after assignment hands the task back for requeue.
pub fn run_one<P, R>(platform: &mut P, rng: &mut R) -> Result<Option<TaskId>, RunError>
where
    P: Platform + ?Sized,
    R: RngCore + CryptoRng,
{
    let mut worker = Worker::spawn(rng);
    let task = match platform.next_task(&worker.public_key()) {
        Ok(t) => t,
        Err(ServiceError::Orchestrator(OrchestratorError::NoWork)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let task_id = task.task_id.clone();
    tracing::info!(task = %task_id, kind = ?task.kind, "assigned");
    let outcome = worker
        .provision(task, platform)
        .and_then(|_| worker.run())
        .and_then(|_| worker.report_and_destroy(platform, rng));
    match outcome {
        Ok(_) => {
            tracing::info!(task = %task_id, "reported");
            Ok(Some(task_id))
        }
        Err(error) => {
            if let Err(e) = worker.abandon(platform) {
                tracing::warn!(task = %task_id, "requeue failed: {e}");
            }
            Err(RunError::Task { task: task_id, error })
        }
    }
}

/// Polls forever, sleeping `idle` whenever the queue is empty or the
/// orchestrator is unreachable.
pub fn run_forever<P, R>(platform: &mut P, rng: &mut R, idle: Duration) -> !
where
    P: Platform + ?Sized,
    R: RngCore + CryptoRng,
{
    loop {
        match run_one(platform, rng) {
            Ok(Some(_)) => {}
            Ok(None) => std::thread::sleep(idle),
            Err(RunError::Service(e)) => {
                tracing::warn!("{e}");
                std::thread::sleep(idle);
            }
            Err(e) => tracing::warn!("{e}"),
        }
    }
}
