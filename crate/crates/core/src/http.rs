// SPDX-License-Identifier: Apache-2.0

//! Blocking JSON-over-HTTP calls with bounded retries, shared by the remote
//! embedding and generation clients.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cv.notify_one();
    }
}

/// Successful exchange: the parsed body plus raw request/response text.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub request: String,
    pub response: String,
    pub body: Value,
    pub attempts: u32,
}

pub struct JsonClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl JsonClient {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, retry }
    }

    /// POSTs `payload`, retrying transport errors, 429 and 5xx with exponential backoff.
    pub fn post(&self, url: &str, token: Option<&str>, payload: &Value) -> Result<Exchange> {
        let request = payload.to_string();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.try_once(url, token, &request) {
                Ok(response) => {
                    let body: Value = serde_json::from_str(&response).map_err(|e| Error::Transport {
                        attempts,
                        message: format!("invalid JSON from {url}: {e}"),
                    })?;
                    return Ok(Exchange {
                        request,
                        response,
                        body,
                        attempts,
                    });
                }
                Err(Failure::Fatal(message)) => return Err(Error::Transport { attempts, message }),
                Err(Failure::Retryable(message)) => {
                    if attempts > self.retry.max_retries {
                        return Err(Error::Transport { attempts, message });
                    }
                    thread::sleep(self.retry.backoff(attempts));
                }
            }
        }
    }

    fn try_once(&self, url: &str, token: Option<&str>, body: &str) -> Result<String, Failure> {
        let mut req = self.agent.post(url).header("content-type", "application/json");
        if let Some(token) = token {
            req = req.header("authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| Failure::Retryable(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(format!("{url}: reading body: {e}")))?;
        match status {
            200..=299 => Ok(text),
            429 | 500..=599 => Err(Failure::Retryable(format!("{url}: HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(format!("{url}: HTTP {status}: {text}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(350),
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(350));
        assert_eq!(p.backoff(40), Duration::from_millis(350));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let sem = Semaphore::new(2);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
