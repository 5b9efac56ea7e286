//! Live model provider speaking the OpenAI-style chat-completions protocol.

use std::fmt;
use std::time::Duration;

use cellx_core::agent::{Message, Provider, ProviderError, ProviderRequest, ProviderResponse, ToolSchema};
use serde_json::{json, Value};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

pub struct ChatCompletionsProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: String,
}

impl fmt::Debug for ChatCompletionsProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatCompletionsProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl ChatCompletionsProvider {
    /// Reads the credential from `api_key_env` and fails immediately when it
    /// is unset or empty.
    pub fn from_env(endpoint: &str, model: &str, api_key_env: &str, timeout: Duration) -> Result<Self, ProviderError> {
        let api_key = std::env::var(api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::Config(format!("environment variable {api_key_env} is not set")))?;
        Ok(Self::new(endpoint, model, api_key, timeout))
    }

    pub fn new(endpoint: &str, model: &str, api_key: String, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self {
            agent: config.into(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
        }
    }
}

/// Function names may not contain '.', so `station.start` travels as
/// `station_start`.
pub fn wire_name(tool: &str) -> String {
    tool.replace('.', "_")
}

fn system_content(req: &ProviderRequest) -> String {
    let mut s = req.system_prompt.clone();
    if !req.retrieved_context.is_empty() {
        s.push_str("\n\nRetrieved manual excerpts (cite by chunk_id):\n");
        for c in &req.retrieved_context {
            s.push_str(&format!("\n[{}] {}\n{}\n", c.chunk_id, c.heading_path.join(" > "), c.text));
        }
    }
    s
}

pub fn request_body(model: &str, req: &ProviderRequest) -> Value {
    let mut messages = vec![json!({"role": "system", "content": system_content(req)})];
    for m in &req.conversation {
        messages.push(match m {
            Message::User { content } => json!({"role": "user", "content": content}),
            Message::Assistant { content } => json!({"role": "assistant", "content": content}),
            Message::ToolCall { call_id, name, args } => json!({
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": call_id,
                    "type": "function",
                    "function": {"name": wire_name(name), "arguments": args.to_string()},
                }],
            }),
            Message::ToolResult { call_id, content, .. } => json!({
                "role": "tool",
                "tool_call_id": call_id,
                "content": content.to_string(),
            }),
        });
    }
    let tools: Vec<Value> = req
        .tool_schemas
        .iter()
        .map(|t| {
            json!({
                "type": "function",
                "function": {"name": wire_name(&t.name), "description": t.description, "parameters": t.parameters},
            })
        })
        .collect();
    json!({ "model": model, "messages": messages, "tools": tools })
}

/// Reads the first choice. A tool call wins over text; only the first tool
/// call is taken since the loop executes one call per iteration.
pub fn parse_response(body: &Value, schemas: &[ToolSchema]) -> Result<ProviderResponse, ProviderError> {
    let malformed = |m: &str| ProviderError::Malformed(m.to_string());
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| malformed("no choices[0].message"))?;
    if let Some(call) = message.get("tool_calls").and_then(Value::as_array).and_then(|a| a.first()) {
        let f = call.get("function").ok_or_else(|| malformed("tool call without function"))?;
        let name = f.get("name").and_then(Value::as_str).ok_or_else(|| malformed("tool call without name"))?;
        let args = match f.get("arguments") {
            None | Some(Value::Null) => json!({}),
            Some(Value::String(s)) if s.trim().is_empty() => json!({}),
            Some(Value::String(s)) => {
                serde_json::from_str(s).map_err(|e| ProviderError::Malformed(format!("tool arguments: {e}")))?
            }
            Some(v @ Value::Object(_)) => v.clone(),
            Some(_) => return Err(malformed("tool arguments are neither a string nor an object")),
        };
        let tool = schemas
            .iter()
            .find(|s| s.name == name || wire_name(&s.name) == name)
            .map(|s| s.name.clone())
            .unwrap_or_else(|| name.to_string());
        return Ok(ProviderResponse::ToolCall { name: tool, args });
    }
    match message.get("content").and_then(Value::as_str) {
        Some(text) if !text.trim().is_empty() => Ok(ProviderResponse::final_text(text)),
        _ => Err(malformed("neither a tool call nor text content")),
    }
}

impl Provider for ChatCompletionsProvider {
    fn ask(&mut self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let body = request_body(&self.model, request);
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(ProviderError::Timeout),
            Err(ureq::Error::StatusCode(code)) => return Err(ProviderError::Network(format!("HTTP status {code}"))),
            Err(e) => return Err(ProviderError::Network(e.to_string())),
        };
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Malformed(format!("response body: {e}")))?;
        parse_response(&value, &request.tool_schemas)
    }
}
