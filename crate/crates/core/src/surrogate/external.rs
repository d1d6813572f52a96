//! Adapter for out-of-process score predictors speaking newline-delimited
//! JSON: `{"op":"fit","pairs":[{"text","score"}],"seed"}`,
//! `{"op":"predict","texts":[...]}` and `{"op":"test_error"}`, each answered
//! by `{"ok":true,"values":[...]}` or `{"ok":false,"error":"..."}`.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Predictor, PredictorKind, SurrogateError, TrainedMember};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Program and arguments; one child process per member.
    Process(Vec<String>),
    /// `host:port`; one connection per member.
    Tcp(String),
}

#[derive(Debug, Clone)]
pub struct ExternalKind {
    pub transport: Transport,
    pub fit_timeout: Duration,
    pub predict_timeout: Duration,
}

impl ExternalKind {
    pub fn new(transport: Transport) -> Self {
        ExternalKind {
            transport,
            fit_timeout: Duration::from_secs(300),
            predict_timeout: Duration::from_secs(30),
        }
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

fn reader_thread<R: std::io::Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl Connection {
    fn open(transport: &Transport) -> Result<Self, SurrogateError> {
        match transport {
            Transport::Process(argv) => {
                let (program, args) = argv
                    .split_first()
                    .ok_or_else(|| SurrogateError::Adapter("empty command".into()))?;
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().ok_or_else(|| SurrogateError::Adapter("no stdin".into()))?;
                let stdout = child
                    .stdout
                    .take()
                    .ok_or_else(|| SurrogateError::Adapter("no stdout".into()))?;
                Ok(Connection {
                    writer: Box::new(stdin),
                    lines: reader_thread(stdout),
                    child: Some(child),
                })
            }
            Transport::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                let read = stream.try_clone()?;
                Ok(Connection {
                    writer: Box::new(stream),
                    lines: reader_thread(read),
                    child: None,
                })
            }
        }
    }

    fn call(&mut self, request: &Value, op: &'static str, timeout: Duration) -> Result<Vec<f64>, SurrogateError> {
        let mut line = request.to_string();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => return Err(SurrogateError::Timeout { op }),
            Err(RecvTimeoutError::Disconnected) => return Err(SurrogateError::Adapter(format!("predictor closed during {op}"))),
        };
        let value: Value = serde_json::from_str(&reply).map_err(|e| SurrogateError::Adapter(format!("bad {op} reply: {e}")))?;
        if value["ok"].as_bool() != Some(true) {
            let msg = value["error"].as_str().unwrap_or("no error message");
            return Err(SurrogateError::Adapter(format!("{op} failed: {msg}")));
        }
        Ok(value["values"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

struct ExternalPredictor {
    conn: Mutex<Connection>,
    timeout: Duration,
}

impl Predictor for ExternalPredictor {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>, SurrogateError> {
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| SurrogateError::Adapter("connection poisoned".into()))?;
        let values = conn.call(&json!({"op": "predict", "texts": texts}), "predict", self.timeout)?;
        if values.len() != texts.len() {
            return Err(SurrogateError::Adapter(format!(
                "asked for {} predictions, got {}",
                texts.len(),
                values.len()
            )));
        }
        Ok(values)
    }
}

impl PredictorKind for ExternalKind {
    fn train_member(&self, pairs: &[(String, f64)], seed: u64) -> Result<TrainedMember, SurrogateError> {
        let mut conn = Connection::open(&self.transport)?;
        let pairs: Vec<Value> = pairs
            .iter()
            .map(|(text, score)| json!({"text": text, "score": score}))
            .collect();
        conn.call(&json!({"op": "fit", "pairs": pairs, "seed": seed}), "fit", self.fit_timeout)?;
        let err = conn.call(&json!({"op": "test_error"}), "test_error", self.predict_timeout)?;
        let heldout_error = *err
            .first()
            .ok_or_else(|| SurrogateError::Adapter("test_error returned no value".into()))?;
        if !heldout_error.is_finite() || heldout_error < 0.0 {
            return Err(SurrogateError::Adapter(format!("invalid test error {heldout_error}")));
        }
        Ok(TrainedMember {
            predictor: Box::new(ExternalPredictor {
                conn: Mutex::new(conn),
                timeout: self.predict_timeout,
            }),
            heldout_error,
        })
    }
}
