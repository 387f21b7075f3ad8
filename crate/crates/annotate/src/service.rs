//! Task queue with leases, server-side validation and re-annotation.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use cage_core::corpus::{Annotation, Example, Span};
use cage_core::quality::{validate_annotation, ValidationReport};
use cage_core::Result;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::store::Store;

pub const DEFAULT_LEASE: Duration = Duration::from_secs(15 * 60);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Accepted,
    /// Accepted once, then removed by a post-collection filter.
    Flagged,
}

/// What an annotator is shown: the question, its choices and the gold answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub question: String,
    pub choices: Vec<String>,
    pub answer: Option<String>,
}

/// Body of a submission.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub explanation: String,
    #[serde(default)]
    pub selected: Vec<Span>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub pending: usize,
    pub accepted: usize,
    pub flagged: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown task {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("malformed submission: {0}")]
    Malformed(String),
    #[error(transparent)]
    Store(#[from] cage_core::Error),
}

/// Result of a well-formed submission: accepted when the report passes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub accepted: bool,
    pub report: ValidationReport,
}

#[derive(Debug)]
struct Lease {
    session: String,
    expires: Instant,
}

#[derive(Debug)]
struct Task {
    example: Example,
    status: TaskStatus,
    lease: Option<Lease>,
}

impl Task {
    fn open(&self) -> bool {
        self.status != TaskStatus::Accepted
    }

    fn leased_by(&self, session: &str, now: Instant) -> bool {
        self.lease.as_ref().is_some_and(|l| l.session == session && l.expires > now)
    }

    fn leased_by_other(&self, session: &str, now: Instant) -> bool {
        self.lease.as_ref().is_some_and(|l| l.session != session && l.expires > now)
    }
}

#[derive(Debug)]
struct State {
    tasks: Vec<Task>,
    index: HashMap<String, usize>,
    store: Store,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub store: PathBuf,
    /// Defaults to the store path with a `.rejected.jsonl` suffix.
    pub rejected: Option<PathBuf>,
    pub lease: Duration,
}

impl ServiceConfig {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        ServiceConfig { store: store.into(), rejected: None, lease: DEFAULT_LEASE }
    }

    fn rejected_path(&self) -> PathBuf {
        self.rejected.clone().unwrap_or_else(|| self.store.with_extension("rejected.jsonl"))
    }
}

/// The annotation task queue. All mutations funnel through one lock, which
/// also serializes store writes.
#[derive(Debug)]
pub struct AnnotationService {
    state: Mutex<State>,
    lease: Duration,
}

impl AnnotationService {
    /// Loads the store, revalidates every record against the quality gates
    /// and moves failing or orphaned records to the rejected log.
    pub fn open(examples: Vec<Example>, config: ServiceConfig) -> Result<Self> {
        let mut store = Store::open(&config.store, config.rejected_path())?;
        let index: HashMap<String, usize> =
            examples.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        let mut tasks: Vec<Task> = examples
            .into_iter()
            .map(|example| Task { example, status: TaskStatus::Pending, lease: None })
            .collect();

        let mut seen = HashMap::new();
        let mut bad = Vec::new();
        for (pos, a) in store.records().iter().enumerate() {
            let ok = index.get(&a.example_id).is_some_and(|&i| {
                let ex = &tasks[i].example;
                a.check_bounds(ex).is_ok() && validate_annotation(ex, a).passed
            });
            if !ok || seen.insert(a.example_id.clone(), pos).is_some() {
                bad.push(pos);
            }
        }
        if !bad.is_empty() {
            warn!("{} stored records failed revalidation and were moved aside", bad.len());
            let mut pos = 0;
            store.remove_where(|_| {
                let hit = bad.contains(&pos);
                pos += 1;
                hit
            })?;
        }
        for a in store.records() {
            tasks[index[&a.example_id]].status = TaskStatus::Accepted;
        }
        Ok(AnnotationService { state: Mutex::new(State { tasks, index, store }), lease: config.lease })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The task this session already holds, else the first open task no
    /// other session holds. `None` when nothing is left to annotate.
    pub fn next_task(&self, session: &str) -> Option<TaskView> {
        let now = Instant::now();
        let mut state = self.lock();
        let pick = state
            .tasks
            .iter()
            .position(|t| t.open() && t.leased_by(session, now))
            .or_else(|| state.tasks.iter().position(|t| t.open() && !t.leased_by_other(session, now)))?;
        for t in state.tasks.iter_mut() {
            if t.lease.as_ref().is_some_and(|l| l.session == session) {
                t.lease = None;
            }
        }
        let task = &mut state.tasks[pick];
        task.lease = Some(Lease { session: session.to_string(), expires: now + self.lease });
        let e = &task.example;
        Some(TaskView {
            task_id: e.id.clone(),
            question: e.question.clone(),
            choices: e.choices.clone(),
            answer: e.answer().map(str::to_string),
        })
    }

    /// Validates and, on a pass, persists the annotation. Failing reports
    /// leave the task pending and leased.
    pub fn submit(&self, task_id: &str, session: &str, submission: Submission) -> Result<SubmitOutcome, SubmitError> {
        let now = Instant::now();
        let mut state = self.lock();
        let &i = state.index.get(task_id).ok_or_else(|| SubmitError::NotFound(task_id.to_string()))?;
        let task = &state.tasks[i];
        if !task.open() {
            return Err(SubmitError::Conflict(format!("task {task_id} is already accepted")));
        }
        if !task.leased_by(session, now) {
            return Err(SubmitError::Conflict(format!("task {task_id} is not leased by this session")));
        }
        let annotation = Annotation::new(task_id, submission.explanation, submission.selected)
            .map_err(|e| SubmitError::Malformed(e.to_string()))?;
        annotation
            .check_bounds(&task.example)
            .map_err(|e| SubmitError::Malformed(e.to_string()))?;
        let report = validate_annotation(&task.example, &annotation);
        if !report.passed {
            return Ok(SubmitOutcome { accepted: false, report });
        }
        state.store.append(annotation)?;
        let task = &mut state.tasks[i];
        task.status = TaskStatus::Accepted;
        task.lease = None;
        info!("accepted annotation for {task_id}");
        Ok(SubmitOutcome { accepted: true, report })
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let count = |s| state.tasks.iter().filter(|t| t.status == s).count();
        Progress {
            pending: count(TaskStatus::Pending),
            accepted: count(TaskStatus::Accepted),
            flagged: count(TaskStatus::Flagged),
        }
    }

    pub fn status(&self, task_id: &str) -> Option<TaskStatus> {
        let state = self.lock();
        state.index.get(task_id).map(|&i| state.tasks[i].status)
    }

    /// Stored annotations in acceptance order.
    pub fn accepted(&self) -> Vec<Annotation> {
        self.lock().store.records().to_vec()
    }

    /// Moves every stored annotation matching `predicate` to the rejected
    /// log and reopens its task. Returns how many were flagged.
    pub fn flag_for_reannotation(&self, mut predicate: impl FnMut(&Example, &Annotation) -> bool) -> Result<usize> {
        let mut guard = self.lock();
        let state = &mut *guard;
        let (tasks, index) = (&state.tasks, &state.index);
        let moved = state.store.remove_where(|a| predicate(&tasks[index[&a.example_id]].example, a))?;
        for a in &moved {
            let i = state.index[&a.example_id];
            state.tasks[i].status = TaskStatus::Flagged;
        }
        Ok(moved.len())
    }
}
