//! Blocking JSON-over-HTTP helper shared by the embedding, perplexity and chat providers.

use std::time::Duration;

use serde::Serialize;

/// Status code and raw body of an HTTP exchange. Non-2xx codes are returned, not raised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self { agent }
    }

    /// POSTs `body` as JSON. Errors are transport-level failures only.
    pub fn post_json<B: Serialize>(&self, url: &str, body: &B, bearer: Option<&str>) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url);
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.into_body().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}
