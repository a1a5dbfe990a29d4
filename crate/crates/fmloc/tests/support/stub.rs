//! Minimal HTTP/1.1 server on a std listener, scripted per request.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Clone, Debug)]
pub struct Request {
    pub path: String,
    pub body: serde_json::Value,
    pub auth: Option<String>,
}

type Handler = dyn Fn(&Request, usize) -> (u16, String) + Send + Sync;

pub struct Stub {
    pub url: String,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<Request>>>,
}

impl Stub {
    /// `handler` gets each request and its zero-based arrival index.
    pub fn spawn(
        handler: impl Fn(&Request, usize) -> (u16, String) + Send + Sync + 'static,
    ) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, l) = (hits.clone(), log.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (h, l, handler) = (h.clone(), l.clone(), handler.clone());
                thread::spawn(move || serve(stream, &h, &l, &*handler));
            }
        });
        Self { url, hits, log }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, log: &Mutex<Vec<Request>>, handler: &Handler) {
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let (mut length, mut auth) = (0usize, None);
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header).unwrap_or(0) == 0 {
                return;
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                match name.trim().to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap_or(0),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let request = Request {
            path,
            body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            auth,
        };
        let index = hits.fetch_add(1, Ordering::SeqCst);
        log.lock().unwrap().push(request.clone());
        let (status, payload) = handler(&request, index);
        let response = format!(
            "HTTP/1.1 {status} Stub\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if writer.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}
