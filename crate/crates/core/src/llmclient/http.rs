use serde_json::{json, Value};

use super::{AttemptError, CompletionParams, Transport};

/// Chat-completion transport over HTTPS:
/// `POST {base_url}/chat/completions` with a bearer token, reading
/// `choices[0].message.content` from the response.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

/// Request body for one prompt.
pub(crate) fn request_body(prompt: &str, params: &CompletionParams) -> Value {
    json!({
        "model": params.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    })
}

/// Map a status code and body to the completion text or a classified error.
pub(crate) fn interpret_response(status: u16, body: &str) -> Result<String, AttemptError> {
    let snippet = || body.chars().take(200).collect::<String>();
    match status {
        200..=299 => {}
        401 | 403 => return Err(AttemptError::Auth(format!("HTTP {status}: {}", snippet()))),
        408 => return Err(AttemptError::Timeout(format!("HTTP 408: {}", snippet()))),
        429 => {
            return Err(AttemptError::RateLimited(format!(
                "HTTP 429: {}",
                snippet()
            )))
        }
        500..=599 => {
            return Err(AttemptError::Unavailable(format!(
                "HTTP {status}: {}",
                snippet()
            )))
        }
        _ => {
            return Err(AttemptError::Rejected(format!(
                "HTTP {status}: {}",
                snippet()
            )))
        }
    }
    let v: Value = serde_json::from_str(body)
        .map_err(|e| AttemptError::Malformed(format!("body is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| AttemptError::Malformed("missing choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(
        &self,
        prompt: &str,
        params: &CompletionParams,
        api_key: Option<&str>,
    ) -> Result<String, AttemptError> {
        let key = api_key.ok_or_else(|| AttemptError::Auth("no API key".into()))?;
        let result = self
            .agent
            .post(&self.endpoint())
            .config()
            .timeout_global(Some(params.timeout))
            .build()
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(request_body(prompt, params));
        let mut resp = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(AttemptError::Timeout(t.to_string())),
            Err(
                e
                @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound),
            ) => return Err(AttemptError::Unavailable(e.to_string())),
            Err(e) => return Err(AttemptError::Rejected(e.to_string())),
        };
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(t) => AttemptError::Timeout(t.to_string()),
            other => AttemptError::Unavailable(other.to_string()),
        })?;
        interpret_response(status, &body)
    }
}
