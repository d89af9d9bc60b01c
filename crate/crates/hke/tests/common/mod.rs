#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde_json::{json, Value};

pub struct Server {
    child: Child,
    pub base: String,
    pub http: Client,
}

impl Server {
    pub fn start(data_dir: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_hke"))
            .args(["serve", "--dataset", "shapes", "--port", "0", "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .expect("read banner");
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        Self {
            child,
            base,
            http: Client::builder().timeout(Duration::from_secs(60)).build().unwrap(),
        }
    }

    /// SIGKILL, no graceful shutdown.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status().as_u16(), r.json().unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        (r.status().as_u16(), r.json().unwrap_or(Value::Null))
    }

    pub fn create_session(&self, responder: &str) -> String {
        let (status, body) = self.post("/sessions", json!({ "responder": responder }));
        assert_eq!(status, 201, "{body}");
        body["session_id"].as_str().unwrap().to_owned()
    }

    /// Fetches a question and answers it with its first item. Returns the
    /// question id.
    pub fn answer_one(&self, session: &str) -> String {
        let (status, q) = self.get(&format!("/sessions/{session}/question"));
        assert_eq!(status, 200, "{q}");
        let qid = q["question_id"].as_str().unwrap().to_owned();
        let chosen = q["items"][0]["id"].as_u64().unwrap();
        let (status, ack) = self.post(
            &format!("/sessions/{session}/answers"),
            json!({ "question_id": qid, "chosen": chosen }),
        );
        assert_eq!(status, 200, "{ack}");
        assert_eq!(ack["recorded"], true, "{ack}");
        qid
    }

    pub fn wait_ready(&self, session: &str) -> Value {
        let start = Instant::now();
        loop {
            let (_, p) = self.get(&format!("/sessions/{session}/progress"));
            if p["phase"] != "training" {
                return p;
            }
            assert!(start.elapsed() < Duration::from_secs(120), "training did not finish");
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Scripted session: 25 answers with a training round after 10, a kill,
/// a restart, 25 more answers. Returns the served question ids and the final
/// progress report.
pub fn kill_restart_session(data_dir: &Path) -> (Vec<String>, Value) {
    let server = Server::start(data_dir);
    let session = server.create_session("annotator");
    let mut served = Vec::new();
    for i in 0..25 {
        if i == 10 {
            let (status, body) = server.post(&format!("/sessions/{session}/train"), json!({}));
            assert_eq!(status, 202, "{body}");
            let progress = server.wait_ready(&session);
            assert_eq!(progress["iteration"], 1, "{progress}");
        }
        served.push(server.answer_one(&session));
    }
    server.kill();

    let server = Server::start(data_dir);
    for _ in 0..25 {
        served.push(server.answer_one(&session));
    }
    let (_, progress) = server.get(&format!("/sessions/{session}/progress"));
    (served, progress)
}
