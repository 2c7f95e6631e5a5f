use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatRequest, GatewayError, DEFAULT_API_KEY_ENV};

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST interface so tests can count or refuse network use.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, GatewayError>;

    /// Requests attempted through this transport so far.
    fn attempts(&self) -> usize;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    attempts: AtomicUsize,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("http client");
        Self { client, attempts: AtomicUsize::new(0) }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, GatewayError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let mut rb = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string());
        for (k, v) in headers {
            rb = rb.header(k.as_str(), v.as_str());
        }
        let resp = rb
            .send()
            .map_err(|e| GatewayError::Transport { attempts: 1, message: e.to_string() })?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| GatewayError::Transport { attempts: 1, message: e.to_string() })?;
        Ok(HttpResponse { status, body })
    }

    fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay_ms: 500 }
    }
}

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model: model.into(), api_key_env: default_key_env(), retry: RetryPolicy::default() }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Sends one completion, retrying transport failures and 5xx with
/// exponential backoff. Client errors are returned immediately.
pub(super) fn complete_live(
    cfg: &LiveConfig,
    transport: &dyn HttpTransport,
    req: &ChatRequest,
) -> Result<String, GatewayError> {
    let key = std::env::var(&cfg.api_key_env).map_err(|_| GatewayError::MissingCredential(cfg.api_key_env.clone()))?;
    let mut body = req.wire_body();
    if !cfg.model.is_empty() {
        body["model"] = Value::String(cfg.model.clone());
    }
    let body = body.to_string();
    let headers = vec![("authorization".to_string(), format!("Bearer {key}"))];
    let attempts = cfg.retry.attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            let delay = cfg.retry.base_delay_ms.saturating_mul(1 << (attempt - 1));
            std::thread::sleep(Duration::from_millis(delay));
        }
        match transport.post_json(&cfg.endpoint(), &headers, &body) {
            Ok(resp) if (200..300).contains(&resp.status) => return parse_completion(&resp.body),
            Ok(resp) if resp.status >= 500 => {
                log::warn!("endpoint returned {} (attempt {})", resp.status, attempt + 1);
                last = format!("HTTP {}: {}", resp.status, resp.body);
            }
            Ok(resp) => return Err(GatewayError::Http { status: resp.status, body: resp.body }),
            Err(GatewayError::Transport { message, .. }) => {
                log::warn!("transport error (attempt {}): {message}", attempt + 1);
                last = message;
            }
            Err(e) => return Err(e),
        }
    }
    Err(GatewayError::Transport { attempts, message: last })
}

fn parse_completion(body: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(GatewayError::MalformedResponse("missing choices[0].message.content".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;
    use std::sync::Mutex;

    struct Canned {
        replies: Mutex<Vec<Result<HttpResponse, GatewayError>>>,
        count: AtomicUsize,
    }

    impl HttpTransport for Canned {
        fn post_json(&self, _url: &str, _h: &[(String, String)], _b: &str) -> Result<HttpResponse, GatewayError> {
            self.count.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().remove(0)
        }
        fn attempts(&self) -> usize {
            self.count.load(Ordering::SeqCst)
        }
    }

    fn ok(content: &str) -> Result<HttpResponse, GatewayError> {
        Ok(HttpResponse {
            status: 200,
            body: serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string(),
        })
    }

    fn cfg() -> LiveConfig {
        let mut c = LiveConfig::new("http://x", "m");
        c.api_key_env = "IDFRA_TEST_HTTP_KEY".into();
        c.retry.base_delay_ms = 1;
        c
    }

    fn req() -> ChatRequest {
        ChatRequest { model_id: "m".into(), messages: vec![ChatMessage::user("q")], temperature: 0.0, max_tokens: 8, expect_json: false }
    }

    #[test]
    fn retries_then_succeeds_then_gives_up() {
        std::env::set_var("IDFRA_TEST_HTTP_KEY", "k");
        let t = Canned {
            replies: Mutex::new(vec![
                Ok(HttpResponse { status: 503, body: "busy".into() }),
                Err(GatewayError::Transport { attempts: 1, message: "reset".into() }),
                ok("fine"),
            ]),
            count: AtomicUsize::new(0),
        };
        assert_eq!(complete_live(&cfg(), &t, &req()).unwrap(), "fine");
        assert_eq!(t.attempts(), 3);

        let t = Canned {
            replies: Mutex::new((0..3).map(|_| Ok(HttpResponse { status: 500, body: "x".into() })).collect()),
            count: AtomicUsize::new(0),
        };
        assert!(matches!(complete_live(&cfg(), &t, &req()), Err(GatewayError::Transport { attempts: 3, .. })));

        let t = Canned {
            replies: Mutex::new(vec![Ok(HttpResponse { status: 401, body: "no".into() })]),
            count: AtomicUsize::new(0),
        };
        assert!(matches!(complete_live(&cfg(), &t, &req()), Err(GatewayError::Http { status: 401, .. })));
        assert_eq!(t.attempts(), 1);
    }

    #[test]
    fn missing_key_is_reported() {
        let mut c = cfg();
        c.api_key_env = "IDFRA_TEST_UNSET_KEY_VAR".into();
        let t = Canned { replies: Mutex::new(vec![]), count: AtomicUsize::new(0) };
        assert!(matches!(complete_live(&c, &t, &req()), Err(GatewayError::MissingCredential(_))));
    }

    #[test]
    fn array_content_is_joined() {
        let body = serde_json::json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(parse_completion(&body.to_string()).unwrap(), "ab");
        assert!(parse_completion("{}").is_err());
    }
}
