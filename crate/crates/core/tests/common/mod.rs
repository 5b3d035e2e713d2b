//! Helpers shared by the integration tests: fixture paths, the CLI binary and
//! a minimal OpenAI-compatible HTTP server.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_str().expect("utf-8 path").to_owned()
}

pub fn karecoder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_karecoder"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("karecoder runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Captured>>>,
}

impl MockServer {
    /// `respond(index, body)` returns the status code and JSON text for the
    /// `index`-th request.
    pub fn spawn<F>(respond: F) -> Self
    where
        F: Fn(usize, &Value) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or_default().to_owned();
                let (mut length, mut authorization) = (0usize, None);
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((name, value)) = line.split_once(':') {
                        match name.to_ascii_lowercase().as_str() {
                            "content-length" => length = value.trim().parse().unwrap_or(0),
                            "authorization" => authorization = Some(value.trim().to_owned()),
                            _ => {}
                        }
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let index = {
                    let mut r = seen.lock().unwrap();
                    r.push(Captured {
                        path,
                        authorization,
                        body: body.clone(),
                    });
                    r.len() - 1
                };
                let (status, text) = respond(index, &body);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            }
        });
        Self { url, requests }
    }

    pub fn captured(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }
}

pub fn completion_body(texts: &[String]) -> String {
    let choices: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"index": i, "message": {"role": "assistant", "content": t}, "finish_reason": "stop"}))
        .collect();
    json!({"choices": choices, "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15}}).to_string()
}

/// Answers like a model: a plan for intermediate-stage requests, a fenced
/// program otherwise, `n` choices each.
pub fn scripted_model(_: usize, body: &Value) -> (u16, String) {
    let n = body["n"].as_u64().unwrap_or(1) as usize;
    let last = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default();
    let text = if last.ends_with("Do not write code.") {
        "1. Read the input.\n2. Compute the answer.".to_owned()
    } else {
        "```python\nprint(len(set(input().split())))\n```".to_owned()
    };
    (200, completion_body(&vec![text; n]))
}
