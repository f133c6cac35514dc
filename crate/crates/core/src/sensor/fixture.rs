//! Replay of recorded sensor transcripts.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render_request, BackendKind, SensorBackend, SensorError, SensorQuery, SensorRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRecord {
    pub request_hash: String,
    pub raw_response: String,
}

impl FixtureRecord {
    /// Records what `backend` answers for `query`.
    pub fn capture<B: SensorBackend + ?Sized>(query: &SensorQuery, backend: &mut B) -> Result<Self, SensorError> {
        let request = render_request(query);
        Ok(FixtureRecord {
            request_hash: request.hash(),
            raw_response: backend.complete(&request)?,
        })
    }
}

/// Serves recorded responses by request hash.
///
/// Several records with the same hash are served in file order; the last one
/// then repeats.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    responses: HashMap<String, (Vec<String>, usize)>,
}

impl FixtureBackend {
    pub fn new(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut responses: HashMap<String, (Vec<String>, usize)> = HashMap::new();
        for r in records {
            responses.entry(r.request_hash).or_default().0.push(r.raw_response);
        }
        FixtureBackend { responses }
    }

    pub fn from_json(text: &str) -> Result<Self, SensorError> {
        let records: Vec<FixtureRecord> =
            serde_json::from_str(text).map_err(|e| SensorError::Config(format!("fixture file: {e}")))?;
        Ok(Self::new(records))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SensorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SensorError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.responses.values().map(|(v, _)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SensorBackend for FixtureBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Fixture
    }

    fn complete(&mut self, request: &SensorRequest) -> Result<String, SensorError> {
        let hash = request.hash();
        let (list, cursor) = self
            .responses
            .get_mut(&hash)
            .ok_or(SensorError::FixtureMiss(hash))?;
        let raw = list[(*cursor).min(list.len() - 1)].clone();
        *cursor += 1;
        Ok(raw)
    }
}
