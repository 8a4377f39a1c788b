//! OpenAI-compatible chat completions client.

use std::time::Duration;

use serde_json::{json, Value as Json};

use dse_core::agent::{ChatMessage, LlmClient, LlmError, Role};

pub struct HttpLlmClient {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpLlmClient {
    pub fn new(base_url: &str, model: &str, api_key: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpLlmClient {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    /// Request body for one completion.
    pub fn request_body(&self, messages: &[ChatMessage], reply_schema: &Json) -> Json {
        let messages: Vec<Json> = messages
            .iter()
            .map(|m| {
                // Simulation results go back as user turns; the tool role
                // would need a matching tool call.
                let (role, content) = match m.role {
                    Role::System => ("system", m.content.clone()),
                    Role::User => ("user", m.content.clone()),
                    Role::Assistant => ("assistant", m.content.clone()),
                    Role::Tool => ("user", format!("Simulation results: {}", m.content)),
                };
                json!({ "role": role, "content": content })
            })
            .collect();
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": 0,
            "response_format": { "type": "json_schema", "json_schema": reply_schema },
        })
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, messages: &[ChatMessage], reply_schema: &Json) -> Result<String, LlmError> {
        let body = self.request_body(messages, reply_schema);
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(LlmError::Provider(format!("HTTP {status}: {text}")));
        }
        let value: Json = serde_json::from_str(&text)
            .map_err(|e| LlmError::Provider(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Provider(format!("no message content in response: {text}")))
    }
}
