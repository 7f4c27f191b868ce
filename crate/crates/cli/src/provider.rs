//! Remote providers speaking the OpenAI-compatible chat-completions API.

use std::sync::Arc;
use std::time::Duration;

use mgtd_core::genpipe::{MockProvider, ProviderClient, ProviderError};
use serde_json::{json, Value};

/// Name, default base URL and default model of each known remote provider.
pub const REMOTE_PROVIDERS: [(&str, &str, &str); 4] = [
    ("openai", "https://api.openai.com/v1", "gpt-4o-mini"),
    ("groq", "https://api.groq.com/openai/v1", "llama-3.1-8b-instant"),
    ("deepinfra", "https://api.deepinfra.com/v1/openai", "meta-llama/Meta-Llama-3.1-8B-Instruct"),
    ("gemini", "https://generativelanguage.googleapis.com/v1beta/openai", "gemini-2.0-flash"),
];

pub struct HttpProvider {
    name: String,
    base_url: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(name: &str, base_url: &str, model: &str, api_key: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider {
            name: name.to_string(),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    /// Credentials come from `<NAME>_API_KEY`; `<NAME>_BASE_URL` and
    /// `<NAME>_MODEL` override the defaults.
    pub fn from_env(name: &str, model: Option<&str>) -> Result<Self, String> {
        let (_, url, default_model) = REMOTE_PROVIDERS
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| format!("unknown provider {name:?}"))?;
        let upper = name.to_uppercase();
        let key_var = format!("{upper}_API_KEY");
        let key = std::env::var(&key_var).map_err(|_| format!("provider {name} needs {key_var} in the environment"))?;
        let base = std::env::var(format!("{upper}_BASE_URL")).unwrap_or_else(|_| url.to_string());
        let env_model = std::env::var(format!("{upper}_MODEL")).ok();
        let model = model.map(str::to_string).or(env_model).unwrap_or_else(|| default_model.to_string());
        Ok(HttpProvider::new(name, &base, &model, &key, Duration::from_secs(120)))
    }
}

fn transient_status(code: u16) -> bool {
    code == 408 || code == 429 || code >= 500
}

impl ProviderClient for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, max_words: usize) -> Result<String, ProviderError> {
        // Roughly 4 tokens per 3 words, plus slack for the preamble.
        let max_tokens = max_words * 4 / 3 + 64;
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "max_tokens": max_tokens,
        });
        let mut resp = self
            .agent
            .post(format!("{}/chat/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            let msg = format!("{}: HTTP {status}: {}", self.name, text.chars().take(200).collect::<String>());
            return Err(if transient_status(status) { ProviderError::Transient(msg) } else { ProviderError::Fatal(msg) });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("bad response: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))
    }
}

/// `mock` (deterministic, offline) or one of the remote providers.
pub fn make_provider(name: &str, model: Option<&str>, seed: u64) -> Result<Arc<dyn ProviderClient>, String> {
    match name {
        "mock" => Ok(Arc::new(MockProvider::new("mock", seed))),
        _ => Ok(Arc::new(HttpProvider::from_env(name, model)?)),
    }
}
