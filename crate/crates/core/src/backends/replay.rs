use std::collections::HashMap;
use std::path::Path;

use super::{read_transcript, Annotator, BackendError, Completion, Request, Source, TranscriptRecord};

type Index = HashMap<(usize, u32), TranscriptRecord>;

fn index(records: impl IntoIterator<Item = TranscriptRecord>) -> Index {
    records
        .into_iter()
        .map(|r| ((r.tuple_index, r.attempt), r))
        .collect()
}

fn answer(rec: &TranscriptRecord, request: Request<'_>, source: Source) -> Result<Completion, BackendError> {
    let current = request.prompt.hash();
    if !rec.prompt_hash.is_empty() && rec.prompt_hash != current {
        return Err(BackendError::PromptMismatch {
            tuple_index: request.tuple_index,
            recorded: rec.prompt_hash.clone(),
            current,
        });
    }
    match &rec.error {
        Some(msg) if rec.content_filtered => Err(BackendError::ContentFiltered(msg.clone())),
        Some(msg) => Err(BackendError::Transport(msg.clone())),
        None => Ok(Completion {
            text: rec.response_text.clone(),
            source,
        }),
    }
}

/// Serves responses from a recorded transcript, keyed by (tuple index, attempt).
pub struct ReplayAnnotator {
    records: Index,
}

impl ReplayAnnotator {
    pub fn new(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ReplayAnnotator {
            records: index(records),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl Annotator for ReplayAnnotator {
    fn id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, request: Request<'_>) -> Result<Completion, BackendError> {
        let rec = self
            .records
            .get(&(request.tuple_index, request.attempt))
            .ok_or(BackendError::MissingResponse {
                tuple_index: request.tuple_index,
                attempt: request.attempt,
            })?;
        answer(rec, request, Source::Replayed)
    }

    fn recorded_source(&self, _request: Request<'_>) -> Option<Source> {
        Some(Source::Replayed)
    }
}

/// Replays attempts from an interrupted run and forwards the rest.
pub struct ResumingAnnotator {
    inner: Box<dyn Annotator>,
    records: Index,
}

impl ResumingAnnotator {
    pub fn new(inner: Box<dyn Annotator>, records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ResumingAnnotator {
            inner,
            records: index(records),
        }
    }
}

impl Annotator for ResumingAnnotator {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: Request<'_>) -> Result<Completion, BackendError> {
        match self.records.get(&(request.tuple_index, request.attempt)) {
            Some(rec) => answer(rec, request, Source::Resumed),
            None => self.inner.complete(request),
        }
    }

    fn recorded_source(&self, request: Request<'_>) -> Option<Source> {
        match self.records.contains_key(&(request.tuple_index, request.attempt)) {
            true => Some(Source::Resumed),
            false => self.inner.recorded_source(request),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Protocol;
    use crate::prompting::render_prompt;

    fn prompt() -> crate::prompting::PromptBundle {
        let texts: Vec<(String, String)> =
            ["a", "b"].iter().map(|s| (s.to_string(), format!("post {s}"))).collect();
        render_prompt(Protocol::Pc, &texts, "joy", None).unwrap()
    }

    fn rec(attempt: u32, text: &str, hash: &str) -> TranscriptRecord {
        TranscriptRecord {
            tuple_index: 3,
            attempt,
            prompt_hash: hash.into(),
            response_text: text.into(),
            timestamp: 0,
            backend_id: "http_chat:m".into(),
            latency_ms: 10,
            from_fallback: false,
            accepted: false,
            error: None,
            content_filtered: false,
        }
    }

    #[test]
    fn replays_exact_text() {
        let p = prompt();
        let text = "  Most joy Speaker: 2 \r\nLeast joy Speaker: 1\n";
        let replay = ReplayAnnotator::new([rec(1, text, &p.hash())]);
        let req = Request {
            prompt: &p,
            tuple_index: 3,
            attempt: 1,
        };
        let c = replay.complete(req).unwrap();
        assert_eq!(c.text, text);
        assert_eq!(c.source, Source::Replayed);
        let missing = Request { attempt: 2, ..req };
        assert!(matches!(
            replay.complete(missing),
            Err(BackendError::MissingResponse { tuple_index: 3, attempt: 2 })
        ));
    }

    #[test]
    fn detects_changed_prompt() {
        let p = prompt();
        let replay = ReplayAnnotator::new([rec(1, "x", "deadbeef")]);
        let req = Request {
            prompt: &p,
            tuple_index: 3,
            attempt: 1,
        };
        assert!(matches!(replay.complete(req), Err(BackendError::PromptMismatch { .. })));
    }

    #[test]
    fn recorded_errors_come_back_as_errors() {
        let p = prompt();
        let mut filtered = rec(1, "", &p.hash());
        filtered.error = Some("content_filter".into());
        filtered.content_filtered = true;
        let mut broken = rec(2, "", &p.hash());
        broken.error = Some("connection reset".into());
        let replay = ReplayAnnotator::new([filtered, broken]);
        let req = Request {
            prompt: &p,
            tuple_index: 3,
            attempt: 1,
        };
        assert!(matches!(replay.complete(req), Err(BackendError::ContentFiltered(_))));
        assert!(matches!(
            replay.complete(Request { attempt: 2, ..req }),
            Err(BackendError::Transport(_))
        ));
    }
}
