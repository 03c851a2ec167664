use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, RoleCall};

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint (Ollama,
/// vLLM, llama.cpp server and hosted APIs all speak it).
pub struct RemoteChat {
    agent: ureq::Agent,
    url: String,
    slots: Mutex<usize>,
    freed: Condvar,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl RemoteChat {
    pub fn new(endpoint: &str, timeout: Duration, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/v1/chat/completions", endpoint.trim_end_matches('/')),
            slots: Mutex::new(max_in_flight.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut free = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.freed.notify_one();
    }

    fn post(&self, call: &RoleCall<'_>) -> Result<String, String> {
        let req = call.request;
        let body = WireRequest {
            model: &req.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
            stream: false,
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| format!("POST {}: {e}", self.url))?;
        let parsed: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("bad response body: {e}"))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "response carried no message content".to_owned())
    }
}

impl ChatBackend for RemoteChat {
    fn chat(&self, call: &RoleCall<'_>) -> Result<String, String> {
        self.acquire();
        let out = self.post(call);
        self.release();
        out
    }
}
