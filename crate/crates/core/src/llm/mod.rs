//! Language-model dialogue about an explanation: the system prompt, the
//! chat-completion wire format, and a deterministic offline responder.
//!
//! The network client lives in the service crate; this module stays free of
//! I/O so it also builds for the browser.

mod prompt;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{
    build_prompt, build_prompt_with_palette, contrastive_question, describe_scene_values, format_value,
    shallow_question, Message, PromptBundle, Role,
};
pub use stub::{classify_question, stub_answer, QuestionKind};

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("remote chat needs an endpoint URL")]
    MissingEndpoint,
    #[error("network error: {0}")]
    Network(String),
    #[error("chat endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed chat response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatMode {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatClientConfig {
    pub mode: ChatMode,
    /// Full URL of a chat-completion endpoint.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub timeout_secs: u64,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        Self {
            mode: ChatMode::Stub,
            endpoint: None,
            model: "gpt-4o-mini".to_string(),
            credential_env: "RDQMAP_LLM_API_KEY".to_string(),
            timeout_secs: 60,
        }
    }
}

impl ChatClientConfig {
    /// Remote mode needs an endpoint and a set credential variable; the
    /// credential is returned so callers never read the environment twice.
    pub fn remote_credential(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<(String, String), ChatError> {
        let endpoint = self.endpoint.clone().ok_or(ChatError::MissingEndpoint)?;
        let key = lookup(&self.credential_env)
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ChatError::MissingCredential(self.credential_env.clone()))?;
        Ok((endpoint, key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
}

impl ChatRequest {
    pub fn from_conversation(model: &str, conversation: &PromptBundle) -> Self {
        let messages = conversation
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.role {
                    Role::System => "system",
                    Role::Human => "user",
                    Role::Ai => "assistant",
                }
                .to_string(),
                content: m.text.clone(),
            })
            .collect();
        Self {
            model: model.to_string(),
            messages,
        }
    }
}

/// Content of the first choice's message in a chat-completion response.
pub fn parse_chat_response(body: &str) -> Result<String, ChatError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ChatError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| ChatError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Answer offline and append both turns to the conversation.
pub fn chat_stub(conversation: &mut PromptBundle, bundle: &crate::explain::ExplanationBundle, question: &str) -> String {
    let answer = stub_answer(bundle, conversation.scenario, question);
    conversation.push(Role::Human, question);
    conversation.push(Role::Ai, answer.clone());
    answer
}
