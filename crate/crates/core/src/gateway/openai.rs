//! OpenAI-compatible `/v1/chat/completions` provider.

use serde::Deserialize;

use super::{ChatProvider, ChatRequest, GatewayError, LlmConfig, ProviderReply, Usage};

/// Credentials come from the environment variable named by
/// `LlmConfig::api_key_env`, never from configuration files.
#[derive(Debug, Clone, Default)]
pub struct OpenAiChatProvider;

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct ApiUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
    usage: Option<ApiUsage>,
}

impl ChatProvider for OpenAiChatProvider {
    fn id(&self) -> &str {
        "openai"
    }

    fn chat(&self, request: &ChatRequest, config: &LlmConfig) -> Result<ProviderReply, GatewayError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/v1/chat/completions", config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut resp = agent.post(&url).header("Authorization", &format!("Bearer {key}")).send_json(body).map_err(
            |e| match e {
                ureq::Error::Timeout(_) => GatewayError::ProviderTimeout(config.timeout()),
                other => GatewayError::ProviderError { status: 0, message: other.to_string() },
            },
        )?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::ProviderError { status, message });
        }
        let parsed: Response = resp
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::ProviderError { status, message: format!("unreadable response: {e}") })?;
        let text = parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
        let usage = parsed
            .usage
            .map(|u| Usage { prompt_tokens: u.prompt_tokens, output_tokens: u.completion_tokens })
            .unwrap_or_default();
        Ok(ProviderReply { text, usage })
    }
}
