//! Line-delimited JSON request/response protocol.
//!
//! On connect the server writes a hello line
//! `{"proto_version":1,"engine":"histogym","engine_version":"…"}`. Every
//! following request line `{"id":N,"cmd":"…","payload":{…}}` gets exactly one
//! response line `{"id":N,"ok":true,"result":…}` or
//! `{"id":N,"ok":false,"error":{"code":"…","message":"…"}}`.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::env::{Action, Env, Observation, StepInfo};
use crate::error::{Error, Result};
use crate::trace::{render_episode, TraceRecord, DEFAULT_RENDER_DIM};

pub const PROTO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Tcp(u16),
}

#[derive(Debug, Deserialize)]
struct Request {
    id: Option<i64>,
    cmd: String,
    #[serde(default)]
    payload: Value,
}

/// First line written on every session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub proto_version: u32,
    pub engine: String,
    pub engine_version: String,
}

pub fn hello() -> Hello {
    Hello {
        proto_version: PROTO_VERSION,
        engine: "histogym".into(),
        engine_version: env!("CARGO_PKG_VERSION").into(),
    }
}

/// Wire form of an observation: pixels as base64 of raw RGB bytes, features as a number array.
pub fn encode_observation(obs: &Observation) -> Value {
    match obs {
        Observation::Pixels(tile) => json!({
            "kind": "pixels",
            "shape": obs.shape(),
            "dtype": "uint8",
            "data": base64::engine::general_purpose::STANDARD.encode(tile.bytes()),
        }),
        Observation::Features(f) => json!({
            "kind": "features",
            "shape": obs.shape(),
            "dtype": "float32",
            "data": f.vector,
            "missing": f.missing,
        }),
    }
}

fn error_response(id: Option<i64>, code: &str, message: impl Into<String>) -> Value {
    json!({"id": id, "ok": false, "error": {"code": code, "message": message.into()}})
}

/// One environment driven by one request stream.
pub struct Session {
    env: Env,
    episode: Vec<TraceRecord>,
    closed: bool,
}

impl Session {
    pub fn new(env: Env) -> Self {
        Self {
            env,
            episode: Vec::new(),
            closed: false,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Handle one request line and produce its response.
    pub fn handle_line(&mut self, line: &str) -> Value {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_i64));
                return error_response(id, "ParseError", e.to_string());
            }
        };
        let Some(id) = request.id else {
            return error_response(None, "ParseError", "request lacks an integer id");
        };
        match self.dispatch(&request.cmd, &request.payload) {
            Ok(result) => json!({"id": id, "ok": true, "result": result}),
            Err(DispatchError::Env(e)) => error_response(Some(id), e.code(), e.to_string()),
            Err(DispatchError::Request(code, msg)) => error_response(Some(id), code, msg),
        }
    }

    fn dispatch(&mut self, cmd: &str, payload: &Value) -> std::result::Result<Value, DispatchError> {
        match cmd {
            "reset" => {
                let seed = match payload.get("seed") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(v.as_u64().ok_or_else(|| {
                        DispatchError::Request("BadRequest", format!("seed {v} is not an unsigned integer"))
                    })?),
                };
                let (obs, info) = self.env.reset(seed)?;
                self.episode.clear();
                Ok(json!({"obs": encode_observation(&obs), "info": info_value(&info)}))
            }
            "step" => {
                let raw = payload
                    .get("action")
                    .ok_or_else(|| DispatchError::Request("BadRequest", "step payload lacks 'action'".into()))?;
                let action = Action::from_json(raw)?;
                let started = Instant::now();
                let r = self.env.step(action)?;
                let ms = started.elapsed().as_secs_f64() * 1e3;
                self.episode.push(TraceRecord::from_step(action, &r, ms));
                Ok(json!({
                    "obs": encode_observation(&r.observation),
                    "reward": r.reward,
                    "done": r.done,
                    "truncated": r.truncated,
                    "info": info_value(&r.info),
                }))
            }
            "spaces" => Ok(json!({
                "action_space": self.env.action_space(),
                "observation_space": self.env.observation_space(),
            })),
            "render" => {
                let path = payload
                    .get("path")
                    .and_then(Value::as_str)
                    .map(PathBuf::from)
                    .ok_or_else(|| DispatchError::Request("BadRequest", "render payload lacks 'path'".into()))?;
                let out_dim = payload
                    .get("out_dim")
                    .and_then(Value::as_u64)
                    .map(|d| d as u32)
                    .unwrap_or(DEFAULT_RENDER_DIM);
                render_episode(self.env.slide(), self.env.annotations(), &self.episode, &path, out_dim)?;
                Ok(json!({"path": path}))
            }
            "close" => {
                self.closed = true;
                Ok(json!({}))
            }
            other => Err(DispatchError::Request("UnknownCommand", format!("unknown command '{other}'"))),
        }
    }

    /// Write the hello line, then answer requests until `close` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, mut output: W) -> io::Result<()> {
        write_line(&mut output, &hello())?;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let response = self.handle_line(&line);
            write_line(&mut output, &response)?;
            if self.closed {
                break;
            }
        }
        Ok(())
    }
}

enum DispatchError {
    Env(Error),
    Request(&'static str, String),
}

impl From<Error> for DispatchError {
    fn from(e: Error) -> Self {
        DispatchError::Env(e)
    }
}

fn info_value(info: &StepInfo) -> Value {
    serde_json::to_value(info).expect("info serializes")
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Builds a fresh environment for each session.
pub type EnvFactory = Arc<dyn Fn() -> Result<Env> + Send + Sync>;

pub fn serve(factory: EnvFactory, transport: Transport) -> Result<()> {
    match transport {
        Transport::Stdio => {
            let mut session = Session::new(factory()?);
            let stdin = io::stdin();
            session.run(stdin.lock(), io::stdout().lock())?;
            Ok(())
        }
        Transport::Tcp(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            log::info!("listening on {}", listener.local_addr()?);
            serve_listener(listener, factory)
        }
    }
}

/// Accept connections forever, one thread and one environment per connection.
pub fn serve_listener(listener: TcpListener, factory: EnvFactory) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let factory = factory.clone();
        std::thread::spawn(move || {
            if let Err(e) = serve_connection(stream, &factory) {
                log::warn!("session ended with error: {e}");
            }
        });
    }
    Ok(())
}

fn serve_connection(stream: TcpStream, factory: &EnvFactory) -> Result<()> {
    let mut writer = BufWriter::new(stream.try_clone()?);
    let env = match factory() {
        Ok(env) => env,
        Err(e) => {
            write_line(&mut writer, &error_response(None, e.code(), e.to_string()))?;
            return Err(e);
        }
    };
    Session::new(env).run(BufReader::new(stream), writer)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::pyramid::VirtualSlide;

    fn session() -> Session {
        let (slide, ann) = VirtualSlide::generate_synthetic(42, 1024, 128, 1).unwrap();
        let env = Env::new(Arc::new(slide), Arc::new(ann), None, EnvConfig::default()).unwrap();
        Session::new(env)
    }

    #[test]
    fn malformed_lines() {
        let mut s = session();
        let r = s.handle_line("{not json");
        assert_eq!(r["ok"], json!(false));
        assert_eq!(r["error"]["code"], json!("ParseError"));
        let r = s.handle_line(r#"{"id":3,"cmd":"fly"}"#);
        assert_eq!(r["id"], json!(3));
        assert_eq!(r["error"]["code"], json!("UnknownCommand"));
        let r = s.handle_line(r#"{"id":4,"cmd":"step","payload":{"action":9}}"#);
        assert_eq!(r["error"]["code"], json!("IllegalAction"));
        let r = s.handle_line(r#"{"id":5,"cmd":"step"}"#);
        assert_eq!(r["error"]["code"], json!("BadRequest"));
        let r = s.handle_line(r#"{"cmd":"spaces"}"#);
        assert_eq!(r["error"]["code"], json!("ParseError"));
    }

    #[test]
    fn pixels_decode_to_tile() {
        let mut s = session();
        let r = s.handle_line(r#"{"id":1,"cmd":"reset"}"#);
        let obs = &r["result"]["obs"];
        assert_eq!(obs["shape"], json!([128, 128, 3]));
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(obs["data"].as_str().unwrap())
            .unwrap();
        let (cur, _) = s.env().current().unwrap();
        let Observation::Pixels(tile) = cur else { panic!() };
        assert_eq!(bytes, tile.bytes());
    }
}
