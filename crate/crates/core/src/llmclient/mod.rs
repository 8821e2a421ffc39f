//! Client for a chat-completion endpoint with bounded concurrency,
//! transient-failure retries and a deterministic offline mock.
//!
//! [`LlmClient`] owns the policy (retries, backoff, in-flight cap, optional
//! requests-per-minute cap); a [`Transport`] performs single attempts.
//! [`HttpTransport`] speaks the common `/chat/completions` JSON shape,
//! [`MockTransport`] never touches the network.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

pub use http::HttpTransport;
pub use mock::{MockReply, MockTransport};

/// Environment variable holding the API key. Keys are never taken from
/// flags or config files.
pub const API_KEY_ENV: &str = "LEDGERLM_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-4o-mini".into(),
            // Diversity across generated instructions matters more than
            // determinism of the remote model.
            temperature: 0.7,
            max_output_tokens: 4096,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientPolicy {
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
    pub max_inflight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for ClientPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(30),
            max_inflight: 4,
            requests_per_minute: None,
        }
    }
}

impl ClientPolicy {
    /// Delay before retry number `retry` (0-based): `base * 2^retry`,
    /// capped at `backoff_max`. Nondecreasing in `retry`.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.backoff_base
            .saturating_mul(factor)
            .min(self.backoff_max)
    }
}

/// Outcome of one attempt, as classified by the transport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    Auth(String),
    RateLimited(String),
    Timeout(String),
    /// 5xx or a dropped connection.
    Unavailable(String),
    /// The service answered but not with a usable completion envelope.
    Malformed(String),
    /// Other 4xx responses; retrying will not help.
    Rejected(String),
}

impl AttemptError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            AttemptError::RateLimited(_) | AttemptError::Timeout(_) | AttemptError::Unavailable(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("timed out after {attempts} attempts: {last}")]
    Timeout { attempts: u32, last: String },
    #[error("rate limited after {attempts} attempts: {last}")]
    RateLimited { attempts: u32, last: String },
    #[error("service unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// One attempt at a completion.
pub trait Transport: Send + Sync {
    /// Whether [`LlmClient::complete`] must refuse to run without a key.
    fn requires_credentials(&self) -> bool {
        true
    }

    fn send(
        &self,
        prompt: &str,
        params: &CompletionParams,
        api_key: Option<&str>,
    ) -> Result<String, AttemptError>;
}

/// Sleeping is injected so tests can record backoff delays without waiting.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        thread::sleep(d);
    }
}

/// Counting semaphore for in-flight requests.
#[derive(Debug)]
struct InflightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InflightLimiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InflightPermit<'_> {
        let mut cur = self.current.lock().expect("limiter lock");
        while *cur >= self.max {
            cur = self.freed.wait(cur).expect("limiter lock");
        }
        *cur += 1;
        InflightPermit { limiter: self }
    }
}

struct InflightPermit<'a> {
    limiter: &'a InflightLimiter,
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut cur = self.limiter.current.lock().expect("limiter lock");
        *cur -= 1;
        self.limiter.freed.notify_one();
    }
}

pub struct LlmClient<T: Transport> {
    transport: T,
    policy: ClientPolicy,
    api_key: Option<String>,
    limiter: InflightLimiter,
    next_slot: Mutex<Option<Instant>>,
    sleeper: Arc<dyn Sleeper>,
}

impl<T: Transport> LlmClient<T> {
    pub fn new(transport: T, policy: ClientPolicy, api_key: Option<String>) -> Self {
        let limiter = InflightLimiter::new(policy.max_inflight);
        Self {
            transport,
            policy,
            api_key: api_key.filter(|k| !k.is_empty()),
            limiter,
            next_slot: Mutex::new(None),
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(transport: T, policy: ClientPolicy) -> Self {
        Self::new(transport, policy, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn policy(&self) -> &ClientPolicy {
        &self.policy
    }

    /// Run one completion, retrying transient failures with exponential
    /// backoff. At most `max_retries + 1` attempts are made.
    pub fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if params.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_output_tokens must be at least 1".into(),
            ));
        }
        if self.transport.requires_credentials() && self.api_key.is_none() {
            return Err(LlmError::Auth(format!("no API key; set {API_KEY_ENV}")));
        }

        let mut attempts = 0u32;
        loop {
            self.wait_for_rate_slot();
            attempts += 1;
            let result = {
                let _permit = self.limiter.acquire();
                log::debug!(
                    "completion attempt {attempts}: model={} prompt_bytes={} key={}",
                    params.model_name,
                    prompt.len(),
                    if self.api_key.is_some() {
                        "<redacted>"
                    } else {
                        "<none>"
                    }
                );
                self.transport.send(prompt, params, self.api_key.as_deref())
            };
            let err = match result {
                Ok(text) => {
                    log::debug!(
                        "completion ok after {attempts} attempts, {} bytes",
                        text.len()
                    );
                    return Ok(text);
                }
                Err(e) => e,
            };
            log::debug!("completion attempt {attempts} failed: {err:?}");
            if !err.is_transient() || attempts > self.policy.max_retries {
                return Err(final_error(err, attempts));
            }
            self.sleeper.sleep(self.policy.backoff(attempts - 1));
        }
    }

    /// Complete every prompt using up to `max_inflight` worker threads.
    /// Results come back in prompt order.
    pub fn complete_all(
        &self,
        prompts: &[String],
        params: &CompletionParams,
    ) -> Vec<Result<String, LlmError>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<String, LlmError>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.policy.max_inflight.max(1).min(prompts.len().max(1));
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= prompts.len() {
                        break;
                    }
                    let r = self.complete(&prompts[i], params);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .expect("slot lock")
                    .expect("every prompt completed")
            })
            .collect()
    }

    fn wait_for_rate_slot(&self) {
        let Some(rpm) = self.policy.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let interval = Duration::from_secs(60) / rpm;
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate lock");
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            self.sleeper.sleep(wait);
        }
    }
}

fn final_error(err: AttemptError, attempts: u32) -> LlmError {
    match err {
        AttemptError::Auth(m) => LlmError::Auth(m),
        AttemptError::RateLimited(last) => LlmError::RateLimited { attempts, last },
        AttemptError::Timeout(last) => LlmError::Timeout { attempts, last },
        AttemptError::Unavailable(last) => LlmError::Unavailable { attempts, last },
        AttemptError::Malformed(m) => LlmError::Malformed(m),
        AttemptError::Rejected(m) => LlmError::Rejected(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct RecordingSleeper(Mutex<Vec<Duration>>);

    impl Sleeper for RecordingSleeper {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    fn params() -> CompletionParams {
        CompletionParams::default()
    }

    fn client(
        mock: MockTransport,
        retries: u32,
    ) -> (LlmClient<MockTransport>, Arc<RecordingSleeper>) {
        let sleeper = Arc::new(RecordingSleeper::default());
        let policy = ClientPolicy {
            max_retries: retries,
            backoff_base: Duration::from_millis(100),
            ..Default::default()
        };
        let c = LlmClient::new(mock, policy, Some("k".into())).with_sleeper(sleeper.clone());
        (c, sleeper)
    }

    #[test]
    fn canned_reply_returned_verbatim() {
        let reply = crate::selfinstruct::REFERENCE_FORMAT_EXAMPLE;
        let (c, _) = client(MockTransport::canned(reply), 3);
        assert_eq!(c.complete("p", &params()).unwrap(), reply);
    }

    #[test]
    fn two_transient_failures_then_success() {
        let mock = MockTransport::scripted(vec![
            MockReply::Fail(AttemptError::Unavailable("503".into())),
            MockReply::Fail(AttemptError::RateLimited("429".into())),
            MockReply::Text("ok".into()),
        ]);
        let (c, sleeper) = client(mock, 3);
        assert_eq!(c.complete("p", &params()).unwrap(), "ok");
        assert_eq!(c.transport().attempts(), 3);
        let delays = sleeper.0.lock().unwrap().clone();
        assert_eq!(
            delays,
            vec![Duration::from_millis(100), Duration::from_millis(200)]
        );
    }

    #[test]
    fn retries_exhausted() {
        let mock =
            MockTransport::scripted(vec![MockReply::Fail(AttemptError::Timeout("t".into())); 10]);
        let (c, sleeper) = client(mock, 2);
        assert_eq!(
            c.complete("p", &params()).unwrap_err(),
            LlmError::Timeout {
                attempts: 3,
                last: "t".into()
            }
        );
        assert_eq!(c.transport().attempts(), 3);
        assert_eq!(sleeper.0.lock().unwrap().len(), 2);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        for e in [
            AttemptError::Auth("401".into()),
            AttemptError::Malformed("no choices".into()),
            AttemptError::Rejected("400".into()),
        ] {
            let (c, _) = client(
                MockTransport::scripted(vec![MockReply::Fail(e), MockReply::Text("x".into())]),
                5,
            );
            assert!(c.complete("p", &params()).is_err());
            assert_eq!(c.transport().attempts(), 1);
        }
    }

    #[test]
    fn missing_key_fails_before_any_attempt() {
        let mock = MockTransport::canned("x").requiring_credentials();
        let c = LlmClient::new(mock, ClientPolicy::default(), None);
        assert!(matches!(c.complete("p", &params()), Err(LlmError::Auth(_))));
        assert_eq!(c.transport().attempts(), 0);
    }

    #[test]
    fn backoff_is_nondecreasing_and_capped() {
        let p = ClientPolicy {
            backoff_base: Duration::from_millis(300),
            backoff_max: Duration::from_secs(5),
            ..Default::default()
        };
        let delays: Vec<_> = (0..40).map(|i| p.backoff(i)).collect();
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*delays.last().unwrap(), Duration::from_secs(5));
    }

    #[test]
    fn inflight_cap_holds_under_load() {
        let mock = MockTransport::canned("r").with_latency(Duration::from_millis(5));
        let policy = ClientPolicy {
            max_inflight: 3,
            ..Default::default()
        };
        let c = LlmClient::new(mock, policy, None);
        let prompts: Vec<String> = (0..24).map(|i| format!("p{i}")).collect();
        // Extra outside threads compete with the pool for permits.
        thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..5 {
                        c.complete("x", &params()).unwrap();
                    }
                });
            }
            let out = c.complete_all(&prompts, &params());
            assert!(out.iter().all(|r| r.as_deref() == Ok("r")));
        });
        assert!(c.transport().peak_inflight() <= 3);
        assert!(c.transport().peak_inflight() >= 2);
        assert_eq!(c.transport().attempts(), 44);
    }

    #[test]
    fn rate_cap_spaces_requests() {
        let sleeper = Arc::new(RecordingSleeper::default());
        let policy = ClientPolicy {
            requests_per_minute: Some(60),
            ..Default::default()
        };
        let c =
            LlmClient::new(MockTransport::canned("r"), policy, None).with_sleeper(sleeper.clone());
        for _ in 0..3 {
            c.complete("p", &params()).unwrap();
        }
        // First request goes immediately; the next two wait for their slot.
        let waits = sleeper.0.lock().unwrap().clone();
        assert_eq!(waits.len(), 2);
        assert!(waits.iter().all(|w| *w > Duration::from_millis(900)));
    }

    #[test]
    fn empty_prompt_rejected() {
        let (c, _) = client(MockTransport::canned("x"), 1);
        assert!(matches!(
            c.complete("", &params()),
            Err(LlmError::InvalidRequest(_))
        ));
    }
}
