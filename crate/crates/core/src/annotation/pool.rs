//! In-memory task queue with time-limited leases.
//!
//! A task is handed out until it has `required` responses counting the
//! leases still outstanding on it. Expired leases are dropped lazily on the
//! next call. The caller supplies `now`, so tests can drive the clock.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AnnotationTask, AnnotatorResponse};

pub const REQUIRED_RESPONSES: usize = 3;
pub const DEFAULT_LEASE: Duration = Duration::from_secs(10 * 60);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LeaseError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("invalid response: {0}")]
    Invalid(String),
    #[error("worker {worker} already submitted a different response for {task_id}")]
    Conflict { task_id: String, worker: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmitOutcome {
    Accepted,
    /// Same response already stored; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: usize,
    pub complete: usize,
    pub responses: usize,
    pub active_leases: usize,
    pub required: usize,
}

#[derive(Debug)]
pub struct TaskPool {
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
    responses: Vec<Vec<AnnotatorResponse>>,
    leases: Vec<HashMap<String, Instant>>,
    required: usize,
    lease: Duration,
}

impl TaskPool {
    pub fn new(tasks: Vec<AnnotationTask>) -> Self {
        Self::with_settings(tasks, REQUIRED_RESPONSES, DEFAULT_LEASE)
    }

    pub fn with_settings(tasks: Vec<AnnotationTask>, required: usize, lease: Duration) -> Self {
        let index = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        let n = tasks.len();
        Self { tasks, index, responses: vec![Vec::new(); n], leases: vec![HashMap::new(); n], required, lease }
    }

    /// Preload stored responses, e.g. after a restart.
    pub fn restore(&mut self, responses: impl IntoIterator<Item = AnnotatorResponse>) -> Result<(), LeaseError> {
        let now = Instant::now();
        for r in responses {
            self.submit(r, now)?;
        }
        Ok(())
    }

    fn expire(&mut self, now: Instant) {
        for l in &mut self.leases {
            l.retain(|_, expiry| *expiry > now);
        }
    }

    /// Lease the next task for `worker`. A worker holding a live lease gets
    /// the same task back; tasks the worker already answered are skipped.
    pub fn next_task(&mut self, worker: &str, now: Instant) -> Option<&AnnotationTask> {
        self.expire(now);
        if let Some(i) = self.leases.iter().position(|l| l.contains_key(worker)) {
            return Some(&self.tasks[i]);
        }
        let i = (0..self.tasks.len()).find(|&i| {
            !self.responses[i].iter().any(|r| r.worker_id == worker)
                && self.responses[i].len() + self.leases[i].len() < self.required
        })?;
        self.leases[i].insert(worker.to_string(), now + self.lease);
        Some(&self.tasks[i])
    }

    pub fn submit(&mut self, response: AnnotatorResponse, now: Instant) -> Result<SubmitOutcome, LeaseError> {
        self.expire(now);
        response.validate().map_err(LeaseError::Invalid)?;
        let i = *self.index.get(&response.task_id).ok_or_else(|| LeaseError::UnknownTask(response.task_id.clone()))?;
        if let Some(prev) = self.responses[i].iter().find(|r| r.worker_id == response.worker_id) {
            return if *prev == response {
                Ok(SubmitOutcome::Duplicate)
            } else {
                Err(LeaseError::Conflict { task_id: response.task_id, worker: response.worker_id })
            };
        }
        self.leases[i].remove(&response.worker_id);
        self.responses[i].push(response);
        Ok(SubmitOutcome::Accepted)
    }

    pub fn progress(&mut self, now: Instant) -> Progress {
        self.expire(now);
        Progress {
            tasks: self.tasks.len(),
            complete: self.responses.iter().filter(|r| r.len() >= self.required).count(),
            responses: self.responses.iter().map(Vec::len).sum(),
            active_leases: self.leases.iter().map(HashMap::len).sum(),
            required: self.required,
        }
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn responses(&self) -> impl Iterator<Item = &AnnotatorResponse> {
        self.responses.iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{AnswerOption, Provenance, Reason, UnanswerableAnswer};
    use crate::data::PerturbationKind;

    fn task(id: &str) -> AnnotationTask {
        AnnotationTask {
            task_id: id.into(),
            source_id: "s".into(),
            kind: PerturbationKind::Negation,
            image: "i.png".into(),
            question: "q?".into(),
            exemplars: vec![],
            answer_options: Provenance::ALL.iter().map(|p| AnswerOption { text: p.as_str().into(), provenance: *p }).collect(),
            random_fallback: false,
        }
    }

    fn resp(t: &str, w: &str) -> AnnotatorResponse {
        AnnotatorResponse::unanswerable(t, w, Reason::R1, UnanswerableAnswer::A2, 4)
    }

    #[test]
    fn leases_fill_then_expire() {
        let t0 = Instant::now();
        let mut pool = TaskPool::with_settings(vec![task("a"), task("b")], 2, Duration::from_secs(600));
        assert_eq!(pool.next_task("w1", t0).unwrap().task_id, "a");
        assert_eq!(pool.next_task("w1", t0).unwrap().task_id, "a");
        assert_eq!(pool.next_task("w2", t0).unwrap().task_id, "a");
        assert_eq!(pool.next_task("w3", t0).unwrap().task_id, "b");
        assert_eq!(pool.next_task("w4", t0).unwrap().task_id, "b");
        assert!(pool.next_task("w5", t0).is_none());
        let later = t0 + Duration::from_secs(601);
        assert_eq!(pool.next_task("w5", later).unwrap().task_id, "a");
    }

    #[test]
    fn submit_is_idempotent() {
        let t0 = Instant::now();
        let mut pool = TaskPool::new(vec![task("a")]);
        pool.next_task("w1", t0);
        assert_eq!(pool.submit(resp("a", "w1"), t0), Ok(SubmitOutcome::Accepted));
        assert_eq!(pool.submit(resp("a", "w1"), t0), Ok(SubmitOutcome::Duplicate));
        assert_eq!(pool.progress(t0).responses, 1);
        assert_eq!(pool.progress(t0).active_leases, 0);
        assert!(pool.next_task("w1", t0).is_none());
        let mut other = resp("a", "w1");
        other.confidence = 2;
        assert!(matches!(pool.submit(other, t0), Err(LeaseError::Conflict { .. })));
        assert!(matches!(pool.submit(resp("zz", "w1"), t0), Err(LeaseError::UnknownTask(_))));
    }

    #[test]
    fn completes_after_required_responses() {
        let t0 = Instant::now();
        let mut pool = TaskPool::new(vec![task("a")]);
        for w in ["x", "y", "z"] {
            let t = pool.next_task(w, t0).unwrap().task_id.clone();
            pool.submit(resp(&t, w), t0).unwrap();
        }
        let p = pool.progress(t0);
        assert_eq!((p.complete, p.responses), (1, 3));
        assert!(pool.next_task("q", t0).is_none());
    }
}
