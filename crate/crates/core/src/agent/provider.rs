//! The boundary to the language model: one request in, exactly one of
//! "call this tool" or "here is the final answer" out.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Message {
    User { content: String },
    Assistant { content: String },
    ToolCall { call_id: String, name: String, args: Value },
    ToolResult { call_id: String, name: String, content: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    /// JSON Schema of the argument object.
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextChunk {
    pub chunk_id: String,
    pub heading_path: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub system_prompt: String,
    pub conversation: Vec<Message>,
    pub tool_schemas: Vec<ToolSchema>,
    pub retrieved_context: Vec<ContextChunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderResponse {
    ToolCall { name: String, args: Value },
    Final { text: String },
}

impl ProviderResponse {
    pub fn tool(name: &str, args: Value) -> Self {
        ProviderResponse::ToolCall {
            name: name.to_string(),
            args,
        }
    }

    pub fn final_text(text: &str) -> Self {
        ProviderResponse::Final { text: text.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

pub trait Provider: Send {
    fn ask(&mut self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn ask(&mut self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).ask(request)
    }
}

/// Deterministic stand-in for a model: replays a fixed list of responses.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    script: VecDeque<ProviderResponse>,
    served: usize,
    seen: Arc<Mutex<Vec<ProviderRequest>>>,
}

impl ScriptedProvider {
    pub fn new(script: impl IntoIterator<Item = ProviderResponse>) -> Self {
        Self {
            script: script.into_iter().collect(),
            served: 0,
            seen: Arc::default(),
        }
    }

    /// Handle to every request this provider has been shown, shared with
    /// clones so it stays readable after the provider is moved away.
    pub fn requests(&self) -> Arc<Mutex<Vec<ProviderRequest>>> {
        Arc::clone(&self.seen)
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl Provider for ScriptedProvider {
    fn ask(&mut self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.seen.lock().unwrap().push(request.clone());
        let next = self.script.pop_front().ok_or(ProviderError::ScriptExhausted(self.served))?;
        self.served += 1;
        Ok(next)
    }
}
