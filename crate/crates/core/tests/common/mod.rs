#![allow(dead_code)]

pub mod gen;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::json;

/// Minimal chat-completions stand-in on a local port. Each connection carries
/// one request and is closed after the reply.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<String>>>,
    pub auth: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

pub fn chat_body(content: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

/// `respond` gets the zero-based request number and returns status and body.
pub fn serve<F>(respond: F) -> MockServer
where
    F: Fn(usize) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let respond = Arc::new(respond);
    let (h, b, a) = (hits.clone(), bodies.clone(), auth.clone());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let (h, b, a, respond) = (h.clone(), b.clone(), a.clone(), respond.clone());
            thread::spawn(move || handle(stream, &h, &b, &a, &*respond));
        }
    });
    MockServer { url, hits, bodies, auth }
}

fn handle(
    stream: TcpStream,
    hits: &AtomicUsize,
    bodies: &Mutex<Vec<String>>,
    auth: &Mutex<Vec<String>>,
    respond: &(dyn Fn(usize) -> (u16, String) + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => auth.lock().unwrap().push(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    bodies.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let (status, payload) = respond(n);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}
