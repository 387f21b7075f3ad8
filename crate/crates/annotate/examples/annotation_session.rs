//! Start the annotation service on a free port and walk one annotator
//! through it over HTTP: fetch a task, submit a rejected and an accepted
//! explanation, then check progress and the store.

use std::sync::Arc;

use cage_annotate::{router, serve, AnnotationService, ServiceConfig};
use cage_core::corpus::{load_annotations, Example};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = dir.path().join("annotations.jsonl");
    let examples = vec![
        Example::new(
            "q1",
            "While eating a hamburger with friends, what are people trying to do?",
            vec!["have fun".into(), "tasty".into(), "indigestion".into()],
            Some(0),
        )?,
        Example::new(
            "q2",
            "Where would you put a plate after washing it?",
            vec!["cupboard".into(), "table".into(), "sink".into()],
            Some(0),
        )?,
    ];
    let service = Arc::new(AnnotationService::open(examples, ServiceConfig::new(&store))?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, router(service, None), async {
        let _ = stopped.await;
    }));
    println!("service at {base}");

    let client = reqwest::Client::new();
    let task: Value = client.get(format!("{base}/api/tasks/next")).header("X-Session", "ann-1").send().await?.json().await?;
    println!("task: {task}");
    let id = task["task_id"].as_str().unwrap_or_default().to_string();

    for explanation in ["have fun is the only option that is correct", "Usually a hamburger with friends indicates a good time."] {
        let response = client
            .post(format!("{base}/api/tasks/{id}"))
            .header("X-Session", "ann-1")
            .json(&json!({"explanation": explanation, "selected": [[15, 37]]}))
            .send()
            .await?;
        let status = response.status();
        let body: Value = response.json().await?;
        let failed: Vec<&Value> = body["report"]["rules"].as_array().into_iter().flatten().filter(|r| r["passed"] == false).collect();
        println!("{status} for {explanation:?}");
        for rule in failed {
            println!("    {}: {}", rule["rule"], rule["reason"]);
        }
    }

    let progress: Value = client.get(format!("{base}/api/progress")).send().await?.json().await?;
    println!("progress: {progress}");
    println!("stored: {:?}", load_annotations(&store)?.keys().collect::<Vec<_>>());
    let _ = stop.send(());
    server.await??;
    Ok(())
}
