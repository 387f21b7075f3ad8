//! Annotation collection service: hands out multiple-choice questions to
//! annotators, applies the explanation quality gates server-side and keeps
//! accepted annotations in an append-only JSONL file that the rest of the
//! toolkit reads directly.

mod http;
mod service;
mod store;

pub use http::{router, serve, SESSION_HEADER};
pub use service::{
    AnnotationService, Progress, ServiceConfig, SubmitError, SubmitOutcome, Submission, TaskStatus, TaskView,
    DEFAULT_LEASE,
};
pub use store::Store;
