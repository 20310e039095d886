//! Drive a TCP server the way an out-of-process client would.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use histogym::env::{Env, EnvConfig};
use histogym::protocol::{serve_listener, EnvFactory};
use histogym::pyramid::VirtualSlide;
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (slide, lesions) = VirtualSlide::generate_synthetic(42, 2048, 128, 1)?;
    let (slide, lesions) = (Arc::new(slide), Arc::new(lesions));
    let factory: EnvFactory =
        Arc::new(move || Env::new(slide.clone(), lesions.clone(), None, EnvConfig::default()));
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || serve_listener(listener, factory));

    let mut stream = TcpStream::connect(addr)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut read = || -> Result<Value, Box<dyn std::error::Error>> {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        Ok(serde_json::from_str(&line)?)
    };
    println!("hello {}", read()?);

    let requests = [
        json!({"id": 1, "cmd": "spaces"}),
        json!({"id": 2, "cmd": "reset", "payload": {"seed": 5}}),
        json!({"id": 3, "cmd": "step", "payload": {"action": 5}}),
        json!({"id": 4, "cmd": "step", "payload": {"action": 9}}),
        json!({"id": 5, "cmd": "render", "payload": {"path": std::env::temp_dir().join("histogym_session.png"), "out_dim": 512}}),
        json!({"id": 6, "cmd": "close"}),
    ];
    for req in requests {
        writeln!(stream, "{req}")?;
        let mut resp = read()?;
        if let Some(obs) = resp.pointer_mut("/result/obs/data") {
            let len = obs.as_str().map_or(0, str::len);
            *obs = json!(format!("<{len} base64 chars>"));
        }
        println!("{} -> {resp}", req["cmd"]);
    }
    Ok(())
}
