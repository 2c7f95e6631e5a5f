#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use idfra::gateway::{Gateway, ReplayStore};
use idfra::model::{parse_inventory, BlockInventory};
use idfra::orchestrator::RunConfig;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    repo_root().join("fixtures").join(name)
}

pub fn house_inventory() -> BlockInventory {
    parse_inventory(&std::fs::read_to_string(repo_root().join("blocks/house.json")).unwrap()).unwrap()
}

/// Configuration the golden transcript was recorded with.
pub fn house_config(runs_root: &Path) -> RunConfig {
    let mut cfg = RunConfig::new("house", "blocks/house.json");
    cfg.runs_root = runs_root.to_path_buf();
    cfg
}

pub fn golden_replay() -> Gateway {
    Gateway::replay(ReplayStore::load(&fixture("house.jsonl")).unwrap())
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

use std::sync::{Arc, Mutex};

use idfra::gateway::{ChatRequest, GatewayError, ScriptedModel};
use idfra::orchestrator::stub::StubDesigner;

pub type Calls = Arc<Mutex<Vec<(String, ChatRequest)>>>;

/// Stub designer with per-tag overrides; every request is captured.
/// An override returning `None` falls through to the stub.
pub fn stub_with(
    over: impl Fn(&str, &ChatRequest, &StubDesigner) -> Option<Result<String, GatewayError>> + Send + Sync + 'static,
) -> (Gateway, Calls) {
    let calls: Calls = Arc::default();
    let seen = calls.clone();
    let stub = StubDesigner::new("house");
    let gw = Gateway::scripted(move |tag: &str, req: &ChatRequest| {
        seen.lock().unwrap().push((tag.to_string(), req.clone()));
        over(tag, req, &stub).unwrap_or_else(|| stub.respond(tag, req))
    });
    (gw, calls)
}

pub fn request(calls: &Calls, tag: &str) -> ChatRequest {
    calls.lock().unwrap().iter().find(|(t, _)| t == tag).unwrap_or_else(|| panic!("no call {tag}")).1.clone()
}

pub fn request_text(req: &ChatRequest) -> String {
    req.messages.iter().map(|m| m.text()).collect::<Vec<_>>().join("\n")
}

/// Request captured by [`StubServer`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Single-threaded HTTP/1.1 server answering queued `(status, body)` pairs.
pub struct StubServer {
    pub base_url: String,
    pub captured: Arc<Mutex<Vec<Captured>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(replies: Vec<(u16, String)>) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let captured: Arc<Mutex<Vec<Captured>>> = Arc::default();
        let sink = captured.clone();
        let handle = std::thread::spawn(move || {
            for (status, reply) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut headers = Vec::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let (k, v) = line.split_once(':').unwrap();
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
                let len: usize = headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                    .map_or(0, |(_, v)| v.parse().unwrap());
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                sink.lock().unwrap().push(Captured {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8(body).unwrap(),
                });
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        });
        Self { base_url, captured, handle: Some(handle) }
    }

    /// Waits until every queued reply has been served.
    pub fn finish(mut self) -> Vec<Captured> {
        self.handle.take().unwrap().join().unwrap();
        self.captured.lock().unwrap().clone()
    }
}

pub fn completion(content: &str) -> (u16, String) {
    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

/// Live gateway pointed at `server`, with its own credential variable.
pub fn live_gateway(server: &StubServer, key_env: &str) -> Gateway {
    let mut cfg = idfra::gateway::LiveConfig::new(server.base_url.clone(), "");
    cfg.api_key_env = key_env.to_string();
    cfg.retry.base_delay_ms = 1;
    std::env::set_var(key_env, "sk-test");
    Gateway::new(idfra::gateway::Backend::Live(cfg))
}

pub fn png_request(text: &str) -> ChatRequest {
    let mut req = ChatRequest {
        model_id: "vision-model".into(),
        messages: vec![idfra::gateway::ChatMessage::system("sys"), idfra::gateway::ChatMessage::user(text)],
        temperature: 0.4,
        max_tokens: 256,
        expect_json: true,
    };
    let img = image::RgbImage::from_pixel(4, 3, image::Rgb([10, 200, 30]));
    req.last_user_mut().parts.push(idfra::gateway::Part::png(&idfra::render::encode_png(&img).unwrap()));
    req
}
