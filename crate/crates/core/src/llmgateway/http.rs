//! OpenAI-compatible `/chat/completions` over HTTP.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, GatewayError, SamplingParams, Usage};

#[derive(Debug, Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: usize,
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn send(
        &self,
        messages: &[ChatMessage],
        params: &SamplingParams,
        n: u32,
    ) -> Result<(Vec<String>, Option<Usage>), GatewayError> {
        let body = RequestBody {
            model: &params.model_id,
            messages,
            temperature: params.temperature,
            top_p: params.top_p,
            n,
            max_tokens: params.max_tokens,
        };
        let mut req = self.client.post(&self.url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let payload = serde_json::to_vec(&body).expect("request serializes");
        let resp = req.body(payload).send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Api {
                status: status.as_u16(),
                body: text,
            });
        }
        let mut parsed: ResponseBody =
            serde_json::from_str(&text).map_err(|e| GatewayError::Transport(format!("malformed response: {e}")))?;
        parsed.choices.sort_by_key(|c| c.index);
        let completions = parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect();
        Ok((completions, parsed.usage))
    }
}
