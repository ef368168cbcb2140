use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BeliefSource, Direction, OrientationAnswer, OrientationQuery};
use crate::error::{Error, Result};

pub trait OrientationProvider: Send + Sync {
    fn query(&self, q: &OrientationQuery) -> Result<OrientationAnswer>;

    fn source(&self) -> BeliefSource;

    fn max_concurrency(&self) -> usize {
        1
    }
}

/// `{"A|B": {"direction": "a_to_b", "confidence": 0.8, "rationale": "..."}}`
pub type FilePriors = BTreeMap<String, OrientationAnswer>;

/// Offline provider backed by a JSON map of pairwise priors. A key `A|B` also
/// answers the query `B|A` with the direction mirrored.
#[derive(Clone, Debug, Default)]
pub struct FileProvider {
    priors: FilePriors,
}

impl FileProvider {
    pub fn new(priors: FilePriors) -> Self {
        FileProvider { priors }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let priors: FilePriors = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Ok(FileProvider::new(priors))
    }

    pub fn priors(&self) -> &FilePriors {
        &self.priors
    }
}

impl OrientationProvider for FileProvider {
    fn query(&self, q: &OrientationQuery) -> Result<OrientationAnswer> {
        let [a, b] = &q.pair;
        if let Some(ans) = self.priors.get(&format!("{a}|{b}")) {
            return Ok(ans.clone());
        }
        if let Some(ans) = self.priors.get(&format!("{b}|{a}")) {
            let direction = match ans.direction {
                Direction::AToB => Direction::BToA,
                Direction::BToA => Direction::AToB,
                Direction::Unknown => Direction::Unknown,
            };
            return Ok(OrientationAnswer {
                direction,
                ..ans.clone()
            });
        }
        Ok(OrientationAnswer::unknown(format!("no prior for {a}|{b}")))
    }

    fn source(&self) -> BeliefSource {
        BeliefSource::File
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_concurrency: usize,
}

impl HttpProviderConfig {
    /// Reads `ORIENTATION_TOKEN`, `ORIENTATION_TIMEOUT_SECS` (default 30) and
    /// `ORIENTATION_CONCURRENCY` (default 4).
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        let timeout = std::env::var("ORIENTATION_TIMEOUT_SECS")
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .unwrap_or(30.0);
        let max_concurrency = std::env::var("ORIENTATION_CONCURRENCY")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(4);
        HttpProviderConfig {
            endpoint: endpoint.into(),
            token: std::env::var("ORIENTATION_TOKEN").ok().filter(|t| !t.is_empty()),
            timeout: Duration::from_secs_f64(timeout),
            max_concurrency,
        }
    }
}

/// POSTs each [`OrientationQuery`] as JSON to `<endpoint>/orient`.
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Internal(format!("http client: {e}")))?;
        Ok(HttpProvider { config, client })
    }

    fn url(&self) -> String {
        format!("{}/orient", self.config.endpoint.trim_end_matches('/'))
    }
}

impl OrientationProvider for HttpProvider {
    fn query(&self, q: &OrientationQuery) -> Result<OrientationAnswer> {
        let mut req = self.client.post(self.url()).json(q);
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::ProviderUnavailable(format!("status {}", resp.status())));
        }
        resp.json::<OrientationAnswer>()
            .map_err(|e| Error::ProviderUnavailable(format!("bad answer: {e}")))
    }

    fn source(&self) -> BeliefSource {
        BeliefSource::Provider
    }

    fn max_concurrency(&self) -> usize {
        self.config.max_concurrency.max(1)
    }
}
