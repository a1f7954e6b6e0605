//! Chat-completion client. The API key is read from the environment variable
//! named in the config, and a missing key is reported before any network
//! activity.

use std::time::Duration;

use rdqmap_core::explain::ExplanationBundle;
use rdqmap_core::llm::{chat_stub, parse_chat_response, ChatClientConfig, ChatError, ChatMode, ChatRequest, PromptBundle, Role};

/// Send the conversation plus `question` to the remote endpoint. Both turns
/// are appended only when an answer arrives.
pub async fn chat_remote(
    config: &ChatClientConfig,
    conversation: &mut PromptBundle,
    question: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, ChatError> {
    let (endpoint, key) = config.remote_credential(lookup)?;
    let mut pending = conversation.clone();
    pending.push(Role::Human, question);
    let request = ChatRequest::from_conversation(&config.model, &pending);
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| ChatError::Network(e.to_string()))?;
    let response = client
        .post(&endpoint)
        .bearer_auth(key)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(serde_json::to_string(&request).expect("chat request serializes"))
        .send()
        .await
        .map_err(|e| ChatError::Network(e.to_string()))?;
    let status = response.status();
    let body = response.text().await.map_err(|e| ChatError::Network(e.to_string()))?;
    if !status.is_success() {
        return Err(ChatError::Status {
            status: status.as_u16(),
            body: truncate(&body, 512),
        });
    }
    let answer = parse_chat_response(&body)?;
    pending.push(Role::Ai, answer.clone());
    *conversation = pending;
    Ok(answer)
}

/// Answer with the configured backend.
pub async fn chat(
    config: &ChatClientConfig,
    mode: ChatMode,
    conversation: &mut PromptBundle,
    bundle: &ExplanationBundle,
    question: &str,
) -> Result<String, ChatError> {
    match mode {
        ChatMode::Stub => Ok(chat_stub(conversation, bundle, question)),
        ChatMode::Remote => chat_remote(config, conversation, question, |name| std::env::var(name).ok()).await,
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
