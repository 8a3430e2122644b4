use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::{self, JoinHandle};

use ztnet_core::agents::{deterministic_plan, generate_plan, PlanRequest, PlannerConfig};
use ztnet_core::scenario::CASE1_TARGET;

/// Serves one request with `body`, returning the request body it received.
fn serve_once(status: &str, body: String) -> (String, JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/plan", listener.local_addr().unwrap());
    let status = status.to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
            }
        }
        let mut request = vec![0; length];
        reader.read_exact(&mut request).unwrap();
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        String::from_utf8(request).unwrap()
    });
    (url, handle)
}

fn generative(url: String) -> PlannerConfig {
    PlannerConfig::Generative { endpoint: Some(url) }
}

#[test]
fn valid_plan_passes_through() {
    let mut plan = deterministic_plan("t1", CASE1_TARGET).unwrap();
    plan.steps[0].goal = "pull one fresh batch from the management system".into();
    let (url, server) = serve_once("200 OK", serde_json::json!({ "plan": plan }).to_string());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "six sites").unwrap();
    assert_eq!(out.fallback, None);
    assert_eq!(out.plan, plan);
    assert_eq!(out.plan.steps.len(), 4);
    let req: PlanRequest = serde_json::from_str(&server.join().unwrap()).unwrap();
    assert_eq!((req.task_id.as_str(), req.task_target.as_str(), req.context.as_str()), ("t1", CASE1_TARGET, "six sites"));
    assert_eq!(req.templates.len(), 3);
}

#[test]
fn malformed_payload_falls_back() {
    let (url, server) = serve_once("200 OK", "{\"plan\": [1, 2".into());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "").unwrap();
    server.join().unwrap();
    assert_eq!(out.plan, deterministic_plan("t1", CASE1_TARGET).unwrap());
    assert!(out.fallback.unwrap().contains("schema-invalid"));
}

#[test]
fn plan_failing_validation_falls_back() {
    let mut plan = deterministic_plan("t1", CASE1_TARGET).unwrap();
    plan.steps[1].depends_on = vec!["s9".into()];
    let (url, server) = serve_once("200 OK", serde_json::json!({ "plan": plan }).to_string());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "").unwrap();
    server.join().unwrap();
    assert_eq!(out.plan, deterministic_plan("t1", CASE1_TARGET).unwrap());
    assert!(out.fallback.unwrap().contains("schema-invalid plan"));
}

#[test]
fn unknown_fields_and_foreign_task_ids_fall_back() {
    let plan = deterministic_plan("other", CASE1_TARGET).unwrap();
    let (url, server) = serve_once("200 OK", serde_json::json!({ "plan": plan }).to_string());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "").unwrap();
    server.join().unwrap();
    assert!(out.fallback.unwrap().contains("task id mismatch"));

    let mut v = serde_json::json!({ "plan": deterministic_plan("t1", CASE1_TARGET).unwrap() });
    v["plan"]["steps"][0]["shell"] = "rm -rf /".into();
    let (url, server) = serve_once("200 OK", v.to_string());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "").unwrap();
    server.join().unwrap();
    assert!(out.fallback.unwrap().contains("schema-invalid response"));
}

#[test]
fn http_errors_fall_back() {
    let (url, server) = serve_once("500 Internal Server Error", "{}".into());
    let out = generate_plan(&generative(url), "t1", CASE1_TARGET, "").unwrap();
    server.join().unwrap();
    assert!(out.fallback.is_some());
    assert_eq!(out.plan, deterministic_plan("t1", CASE1_TARGET).unwrap());
}

#[test]
fn unset_endpoint_makes_no_call() {
    let out = generate_plan(&PlannerConfig::Generative { endpoint: None }, "t1", CASE1_TARGET, "").unwrap();
    assert_eq!(out.fallback, None);
    assert_eq!(out.plan, deterministic_plan("t1", CASE1_TARGET).unwrap());
}
