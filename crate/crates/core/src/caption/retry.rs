//! Exponential backoff with full jitter, shared by the remote providers.

use std::time::Duration;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

/// Result of one attempt at a remote call.
pub enum Attempt<T> {
    Done(T),
    /// 5xx status or timeout; worth another try.
    Retryable(String),
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetryError {
    Exhausted { attempts: u32, last: String },
    Fatal(String),
}

impl RetryPolicy {
    /// Upper bound of the sleep before retry number `attempt` (0-based):
    /// `base * 2^attempt`.
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(20)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }

    /// Full jitter: uniform in `[0, ceiling(attempt)]`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let ceiling = self.ceiling(attempt).as_millis() as u64;
        Duration::from_millis(rand::rng().random_range(0..=ceiling))
    }

    /// Runs `op` until it succeeds, fails fatally, or retries run out.
    /// `on_retry` sees the retry number and the reason before each sleep.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Attempt<T>,
        mut on_retry: impl FnMut(u32, &str),
    ) -> Result<T, RetryError> {
        let mut attempt = 0;
        loop {
            match op() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(msg) => return Err(RetryError::Fatal(msg)),
                Attempt::Retryable(msg) => {
                    if attempt >= self.max_retries {
                        return Err(RetryError::Exhausted {
                            attempts: attempt + 1,
                            last: msg,
                        });
                    }
                    on_retry(attempt + 1, &msg);
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
