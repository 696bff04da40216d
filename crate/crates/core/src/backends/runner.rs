use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::transcript::now_ms;
use super::{Backend, BackendError, Endpoint, Request, Source, TranscriptLog, TranscriptRecord};
use crate::design::TupleSet;
use crate::parsing::{parse_response, Judgment, NotAcceptable};
use crate::prompting::PromptBundle;
use crate::scoring::JudgedTuple;

/// Token bucket with a burst of one: successive requests start at least
/// `1 / rps` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(rps: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rps),
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may send one request.
    pub fn acquire(&self) {
        let now = Instant::now();
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// The accepted answer for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub attempt: u32,
    pub backend_id: String,
    pub latency_ms: u64,
    pub from_fallback: bool,
}

/// A prompt that never produced an acceptable answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleFailure {
    pub tuple_index: usize,
    pub attempts: u32,
    pub reason: String,
    /// Every raw answer received, for audit.
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleOutcome {
    pub tuple_index: usize,
    pub result: Result<(RawResponse, Judgment), TupleFailure>,
    /// Calls that reached a live annotator.
    pub live_requests: u32,
    /// Attempts answered from a transcript.
    pub recorded_requests: u32,
    pub used_fallback: bool,
}

impl TupleOutcome {
    pub fn attempts(&self) -> u32 {
        match &self.result {
            Ok((raw, _)) => raw.attempt,
            Err(f) => f.attempts,
        }
    }

    pub fn judgment(&self) -> Option<&Judgment> {
        self.result.as_ref().ok().map(|(_, j)| j)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub tuples: usize,
    pub accepted: usize,
    pub failures: usize,
    /// Tuples that needed more than one attempt.
    pub retried_tuples: usize,
    pub fallback_uses: usize,
    pub live_requests: u64,
    pub recorded_requests: u64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub outcomes: Vec<TupleOutcome>,
    pub stats: BatchStats,
}

impl BatchResult {
    /// Accepted judgments paired with the ids their prompts showed.
    pub fn judged_tuples(&self, prompts: &[PromptBundle]) -> Vec<JudgedTuple> {
        self.outcomes
            .iter()
            .filter_map(|o| {
                o.judgment().map(|j| {
                    JudgedTuple::new(o.tuple_index, prompts[o.tuple_index].tuple_ids.clone(), j.clone())
                })
            })
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &TupleFailure> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().err())
    }
}

fn backoff(base: Duration, attempt: u32) -> Duration {
    base.saturating_mul(1u32 << (attempt - 1).min(16))
}

/// Requests answers for `prompt` until `accept` takes one or the attempt
/// budget runs out. Every attempt is written to `transcript`.
///
/// A content-filter refusal moves the remaining attempts to the fallback
/// annotator when there is one. Transport errors back off exponentially.
pub fn annotate(
    prompt: &PromptBundle,
    tuple_index: usize,
    backend: &Backend,
    accept: &(dyn Fn(&PromptBundle, &str) -> Result<Judgment, NotAcceptable> + Sync),
    transcript: &TranscriptLog,
) -> TupleOutcome {
    let prompt_hash = prompt.hash();
    let mut outcome = TupleOutcome {
        tuple_index,
        result: Err(TupleFailure {
            tuple_index,
            attempts: 0,
            reason: String::new(),
            responses: Vec::new(),
        }),
        live_requests: 0,
        recorded_requests: 0,
        used_fallback: false,
    };
    let mut responses = Vec::new();
    let mut reason = String::from("no attempts made");
    let mut on_fallback = false;
    let mut attempts = 0;

    for attempt in 1..=backend.max_retries {
        attempts = attempt;
        let endpoint: &Endpoint = match (&backend.fallback, on_fallback) {
            (Some(fb), true) => fb,
            _ => &backend.primary,
        };
        let request = Request {
            prompt,
            tuple_index,
            attempt,
        };
        let recorded = endpoint.annotator.recorded_source(request);
        if recorded.is_none() {
            if let Some(limiter) = &endpoint.limiter {
                limiter.acquire();
            }
            outcome.live_requests += 1;
        } else {
            outcome.recorded_requests += 1;
        }
        let started = Instant::now();
        let result = endpoint.annotator.complete(request);
        let latency_ms = started.elapsed().as_millis() as u64;
        let backend_id = endpoint.annotator.id();

        let mut rec = TranscriptRecord {
            tuple_index,
            attempt,
            prompt_hash: prompt_hash.clone(),
            response_text: String::new(),
            timestamp: now_ms(),
            backend_id: backend_id.clone(),
            latency_ms,
            from_fallback: on_fallback,
            accepted: false,
            error: None,
            content_filtered: false,
        };
        let source = match &result {
            Ok(c) => Some(c.source),
            Err(_) => recorded,
        };
        let verdict = match result {
            Ok(completion) => {
                let verdict = accept(prompt, &completion.text);
                rec.accepted = verdict.is_ok();
                rec.response_text = completion.text;
                Ok(verdict)
            }
            Err(e) => {
                rec.error = Some(e.to_string());
                rec.content_filtered = matches!(e, BackendError::ContentFiltered(_));
                Err(e)
            }
        };
        if source != Some(Source::Resumed) {
            if let Err(e) = transcript.record(rec.clone()) {
                reason = format!("cannot write transcript: {e}");
                break;
            }
        }

        match verdict {
            Ok(Ok(judgment)) => {
                let raw = RawResponse {
                    text: rec.response_text,
                    attempt,
                    backend_id,
                    latency_ms,
                    from_fallback: on_fallback,
                };
                outcome.result = Ok((raw, judgment));
                return outcome;
            }
            Ok(Err(not_acceptable)) => {
                log::debug!("tuple {tuple_index} attempt {attempt}: {not_acceptable}");
                reason = format!("not acceptable: {not_acceptable}");
                responses.push(rec.response_text);
            }
            Err(e) => {
                log::debug!("tuple {tuple_index} attempt {attempt}: {e}");
                reason = e.to_string();
                let filtered = matches!(e, BackendError::ContentFiltered(_));
                if filtered && backend.fallback.is_some() && !on_fallback {
                    on_fallback = true;
                    outcome.used_fallback = true;
                    continue;
                }
                if !e.is_retryable() {
                    break;
                }
                if recorded.is_none() && attempt < backend.max_retries {
                    std::thread::sleep(backoff(backend.backoff_base, attempt));
                }
            }
        }
    }
    outcome.result = Err(TupleFailure {
        tuple_index,
        attempts,
        reason,
        responses,
    });
    outcome
}

/// Annotates every prompt with at most `backend.max_in_flight` requests
/// outstanding. Outcomes come back in input order.
pub fn run_batch(prompts: &[PromptBundle], backend: &Backend, transcript: &TranscriptLog) -> BatchResult {
    run_batch_with(prompts, backend, &parse_response, transcript)
}

pub fn run_batch_with(
    prompts: &[PromptBundle],
    backend: &Backend,
    accept: &(dyn Fn(&PromptBundle, &str) -> Result<Judgment, NotAcceptable> + Sync),
    transcript: &TranscriptLog,
) -> BatchResult {
    let n = prompts.len();
    let slots: Mutex<Vec<Option<TupleOutcome>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = backend.max_in_flight.clamp(1, n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let outcome = annotate(&prompts[i], i, backend, accept, transcript);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(outcome);
            });
        }
    });
    let outcomes: Vec<TupleOutcome> = slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|o| o.expect("every index is claimed by a worker"))
        .collect();

    let mut stats = BatchStats {
        tuples: n,
        ..BatchStats::default()
    };
    for o in &outcomes {
        match &o.result {
            Ok(_) => stats.accepted += 1,
            Err(_) => stats.failures += 1,
        }
        if o.attempts() > 1 {
            stats.retried_tuples += 1;
        }
        if o.used_fallback {
            stats.fallback_uses += 1;
        }
        stats.live_requests += o.live_requests as u64;
        stats.recorded_requests += o.recorded_requests as u64;
    }
    if stats.failures > 0 {
        log::warn!("{} of {n} tuples got no acceptable answer", stats.failures);
    }
    BatchResult { outcomes, stats }
}

/// [`run_batch`] after checking that `prompts[i]` shows exactly the ids of tuple `i`.
pub fn run_tuple_set(
    tuples: &TupleSet,
    prompts: &[PromptBundle],
    backend: &Backend,
    transcript: &TranscriptLog,
) -> Result<BatchResult, BackendError> {
    if tuples.len() != prompts.len() {
        return Err(BackendError::Config(format!(
            "{} prompts for {} tuples",
            prompts.len(),
            tuples.len()
        )));
    }
    for (i, (t, p)) in tuples.tuples.iter().zip(prompts).enumerate() {
        if *t != p.tuple_ids {
            return Err(BackendError::Config(format!(
                "prompt {i} shows {:?} but tuple {i} is {:?}",
                p.tuple_ids, t
            )));
        }
    }
    Ok(run_batch(prompts, backend, transcript))
}
