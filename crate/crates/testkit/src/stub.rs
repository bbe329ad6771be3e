//! A minimal HTTP/1.1 server standing in for a remote answering endpoint.
//! It listens on 127.0.0.1 only and serves one request per connection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use evidence_core::answerer::{Answerer, LexicalBaseline, RemoteRequest, RemoteResponse};

#[derive(Debug, Clone)]
pub enum StubReply {
    Json(serde_json::Value),
    Status(u16, String),
    /// A 200 response with an arbitrary body.
    Raw(String),
    Delay(Duration, Box<StubReply>),
}

type Handler = dyn Fn(&RemoteRequest) -> StubReply + Send + Sync;

#[derive(Default)]
struct Counters {
    hits: AtomicUsize,
    active: AtomicUsize,
    max_active: AtomicUsize,
}

pub struct StubServer {
    url: String,
    addr: std::net::SocketAddr,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> StubServer
    where
        F: Fn(&RemoteRequest) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().unwrap();
        let counters = Arc::new(Counters::default());
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let counters = counters.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let counters = counters.clone();
                    thread::spawn(move || serve(stream, &*handler, &counters));
                }
            });
        }
        StubServer {
            url: format!("http://{addr}/answer"),
            addr,
            counters,
            stop,
        }
    }

    /// Answers with the lexical baseline, so results equal local ones.
    pub fn lexical() -> StubServer {
        let baseline = LexicalBaseline::default();
        StubServer::start(move |req| match baseline.answer(&req.question, &req.context) {
            Ok(a) => StubReply::Json(
                serde_json::to_value(RemoteResponse {
                    answer: a.text,
                    score: a.score,
                    start: a.start_offset,
                    end: a.end_offset,
                    answerable: a.answerable,
                })
                .unwrap(),
            ),
            Err(e) => StubReply::Status(400, e.to_string()),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn hits(&self) -> usize {
        self.counters.hits.load(Ordering::SeqCst)
    }

    /// Highest number of requests that were being handled at the same time.
    pub fn max_concurrent(&self) -> usize {
        self.counters.max_active.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
    }
}

fn read_request(stream: &TcpStream) -> Option<Vec<u8>> {
    let mut reader = BufReader::new(stream);
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((name, value)) = trimmed.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).ok()?;
    Some(body)
}

fn serve(mut stream: TcpStream, handler: &Handler, counters: &Counters) {
    let Some(body) = read_request(&stream) else { return };
    counters.hits.fetch_add(1, Ordering::SeqCst);
    let now = counters.active.fetch_add(1, Ordering::SeqCst) + 1;
    counters.max_active.fetch_max(now, Ordering::SeqCst);

    let mut reply = match serde_json::from_slice::<RemoteRequest>(&body) {
        Ok(req) => handler(&req),
        Err(e) => StubReply::Status(400, e.to_string()),
    };
    while let StubReply::Delay(d, inner) = reply {
        thread::sleep(d);
        reply = *inner;
    }
    let (status, content_type, body) = match reply {
        StubReply::Json(v) => (200, "application/json", v.to_string()),
        StubReply::Raw(s) => (200, "application/json", s),
        StubReply::Status(code, msg) => (code, "text/plain", msg),
        StubReply::Delay(..) => unreachable!(),
    };
    counters.active.fetch_sub(1, Ordering::SeqCst);
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}
