use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: rate limits, timeouts, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}

/// A text-completion backend. Implementations must be interchangeable.
pub trait ProviderClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, max_words: usize) -> Result<String, ProviderError>;
}

/// FNV-1a, used to derive per-prompt seeds that are stable across platforms.
pub(crate) fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

const MOCK_PREAMBLES: [&str; 5] = [
    "Sure! Here is the rewritten text:",
    "Here is the paraphrased text:",
    "Sure, here is the rewritten text:",
    "Certainly!",
    "",
];

const MOCK_LEXICON: [&str; 24] = [
    "moreover", "overall", "significantly", "notably", "furthermore", "essentially", "various",
    "additionally", "ultimately", "crucial", "landscape", "comprehensive", "delve", "pivotal",
    "intricate", "seamless", "robust", "foster", "realm", "tapestry", "nuanced", "vital",
    "enhance", "insight",
];

/// Deterministic stand-in provider: echoes the prompt with seeded word-level
/// perturbation, pads with filler words up to a minimum length and usually
/// wraps the result in a chatty preamble and quotes so the cleaner has work.
#[derive(Debug)]
pub struct MockProvider {
    name: String,
    seed: u64,
    min_words: usize,
    exact_words: Option<usize>,
    swap_rate: f64,
    transient_failures: AtomicUsize,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        MockProvider {
            name: name.into(),
            seed,
            min_words: 60,
            exact_words: None,
            swap_rate: 0.1,
            transient_failures: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_min_words(mut self, n: usize) -> Self {
        self.min_words = n;
        self
    }

    /// Every response body has exactly `n` words (before the preamble).
    pub fn with_exact_words(mut self, n: usize) -> Self {
        self.exact_words = Some(n);
        self
    }

    /// The first `n` calls fail with a transient error.
    pub fn with_transient_failures(self, n: usize) -> Self {
        self.transient_failures.store(n, Ordering::SeqCst);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ProviderClient for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, _max_words: usize) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self
            .transient_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ProviderError::Transient("mock: simulated rate limit".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stable_hash(prompt.as_bytes()));
        let mut words: Vec<&str> = prompt.split_whitespace().filter(|w| !w.contains('"')).collect();
        let mut i = 0;
        while i + 1 < words.len() {
            if rng.random_bool(self.swap_rate) {
                words.swap(i, i + 1);
                i += 1;
            }
            i += 1;
        }
        let target = self.exact_words.unwrap_or_else(|| words.len().max(self.min_words));
        while words.len() < target {
            words.push(MOCK_LEXICON[rng.random_range(0..MOCK_LEXICON.len())]);
        }
        words.truncate(target);
        let body = words.join(" ");
        let preamble = MOCK_PREAMBLES[rng.random_range(0..MOCK_PREAMBLES.len())];
        Ok(if preamble.is_empty() { body } else { format!("{preamble} \"{body}\"") })
    }
}

type CompletionFn = dyn Fn(&str, usize) -> Result<String, ProviderError> + Send + Sync;

/// Provider backed by a closure; handy for scripted behavior.
pub struct FnProvider {
    name: String,
    f: Box<CompletionFn>,
}

impl FnProvider {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&str, usize) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        FnProvider { name: name.into(), f: Box::new(f) }
    }
}

impl ProviderClient for FnProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, max_words: usize) -> Result<String, ProviderError> {
        (self.f)(prompt, max_words)
    }
}

/// Token bucket: `capacity` tokens, refilled at `per_second`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_second: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        TokenBucket { capacity, per_second, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                if self.per_second <= 0.0 {
                    Duration::from_millis(100)
                } else {
                    Duration::from_secs_f64((1.0 - st.0) / self.per_second)
                }
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500), factor: 2.0 }
    }
}

impl RetryPolicy {
    pub fn no_delay(attempts: usize) -> Self {
        RetryPolicy { attempts, base_delay: Duration::ZERO, factor: 1.0 }
    }

    pub fn delay_before(&self, attempt: usize) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_per_prompt() {
        let p = MockProvider::new("mock", 5);
        let a = p.complete("Paraphrase the provided text. Text: one two three", 1500).unwrap();
        let b = p.complete("Paraphrase the provided text. Text: one two three", 1500).unwrap();
        assert_eq!(a, b);
        let c = p.complete("A different prompt entirely", 1500).unwrap();
        assert_ne!(a, c);
        assert_eq!(p.calls(), 3);
    }

    #[test]
    fn mock_exact_length_and_failures() {
        let p = MockProvider::new("mock", 1).with_exact_words(2000).with_transient_failures(2);
        assert!(matches!(p.complete("x", 10), Err(ProviderError::Transient(_))));
        assert!(matches!(p.complete("x", 10), Err(ProviderError::Transient(_))));
        let out = crate::genpipe::clean_generation(&p.complete("x", 10).unwrap());
        assert_eq!(crate::words::word_count(&out), 2000);
    }

    #[test]
    fn bucket_allows_burst_then_throttles() {
        let b = TokenBucket::new(1000.0, 3.0);
        let start = Instant::now();
        for _ in 0..6 {
            b.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(2));
    }

    #[test]
    fn backoff_grows() {
        let r = RetryPolicy::default();
        assert_eq!(r.delay_before(1), Duration::from_millis(500));
        assert_eq!(r.delay_before(2), Duration::from_millis(1000));
    }
}
