//! Append-only session log with content-addressed artifacts, an assumptions
//! ledger and trackback.
//!
//! On disk a session is `<root>/<id>/log.jsonl` plus `<root>/<id>/blobs/<sha256>`.
//! Each log line is either a step (with the assumptions it introduced) or a
//! head move produced by trackback. Steps record their parent, so a step
//! recorded after a trackback starts a new branch and older branches stay in
//! the log.

mod hash;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use hash::{canonical_json, content_hash};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Ingest,
    Discover,
    Orient,
    Adjust,
    Estimate,
    UserDecision,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Ingest => "ingest",
            StepKind::Discover => "discover",
            StepKind::Orient => "orient",
            StepKind::Adjust => "adjust",
            StepKind::Estimate => "estimate",
            StepKind::UserDecision => "user_decision",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub step_id: u64,
    pub parent: Option<u64>,
    pub kind: StepKind,
    pub inputs: Value,
    pub inputs_hash: String,
    pub outputs_ref: String,
    pub timestamp_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionName {
    NoInterference,
    #[serde(rename = "ignorability_given_Z")]
    IgnorabilityGivenZ,
    Positivity,
    Consistency,
    ParametricModel,
    DiscoveryFaithfulness,
    OrientationBelief,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionStatus {
    Asserted,
    Warned,
    UserOverridden,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRecord {
    pub name: AssumptionName,
    pub status: AssumptionStatus,
    pub evidence: String,
    pub source_step: u64,
}

/// An assumption before it is attached to a step.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionDraft {
    pub name: AssumptionName,
    pub status: AssumptionStatus,
    pub evidence: String,
}

impl AssumptionDraft {
    pub fn new(name: AssumptionName, status: AssumptionStatus, evidence: impl Into<String>) -> Self {
        AssumptionDraft {
            name,
            status,
            evidence: evidence.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Step {
        step: Step,
        #[serde(default)]
        assumptions: Vec<AssumptionRecord>,
    },
    Trackback {
        head: u64,
        timestamp_ms: u64,
    },
    Close {
        timestamp_ms: u64,
    },
}

#[derive(Clone, Debug)]
pub struct SessionState {
    id: String,
    dir: Option<PathBuf>,
    steps: Vec<Step>,
    assumptions: Vec<AssumptionRecord>,
    head: Option<u64>,
    closed: bool,
    blobs: BTreeMap<String, Arc<Value>>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionState {
    /// A session that lives only in memory.
    pub fn in_memory(id: impl Into<String>) -> Self {
        SessionState {
            id: id.into(),
            dir: None,
            steps: Vec::new(),
            assumptions: Vec::new(),
            head: None,
            closed: false,
            blobs: BTreeMap::new(),
        }
    }

    pub fn create(root: impl AsRef<Path>, id: &str) -> Result<Self> {
        if !valid_id(id) {
            return Err(Error::InvalidInput(format!("invalid session id `{id}`")));
        }
        let dir = root.as_ref().join(id);
        if dir.join("log.jsonl").exists() {
            return Err(Error::DuplicateName(id.to_string()));
        }
        std::fs::create_dir_all(dir.join("blobs"))?;
        File::create(dir.join("log.jsonl"))?;
        let mut s = Self::in_memory(id);
        s.dir = Some(dir);
        Ok(s)
    }

    pub fn open(root: impl AsRef<Path>, id: &str) -> Result<Self> {
        if !valid_id(id) {
            return Err(Error::UnknownSession(id.to_string()));
        }
        let dir = root.as_ref().join(id);
        let log = dir.join("log.jsonl");
        if !log.exists() {
            return Err(Error::UnknownSession(id.to_string()));
        }
        let mut s = Self::in_memory(id);
        s.dir = Some(dir);
        for (lineno, line) in BufReader::new(File::open(&log)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("log.jsonl line {}: {e}", lineno + 1)))?;
            s.apply(parsed)?;
        }
        Ok(s)
    }

    pub fn open_or_create(root: impl AsRef<Path>, id: &str) -> Result<Self> {
        match Self::open(root.as_ref(), id) {
            Err(Error::UnknownSession(_)) => Self::create(root, id),
            other => other,
        }
    }

    fn apply(&mut self, line: LogLine) -> Result<()> {
        match line {
            LogLine::Step { step, assumptions } => {
                if self.steps.last().is_some_and(|s| s.step_id >= step.step_id) {
                    return Err(Error::Parse(format!("step ids not increasing at {}", step.step_id)));
                }
                self.head = Some(step.step_id);
                self.steps.push(step);
                self.assumptions.extend(assumptions);
            }
            LogLine::Trackback { head, .. } => {
                self.step(head)?;
                self.head = Some(head);
            }
            LogLine::Close { .. } => self.closed = true,
        }
        Ok(())
    }

    fn append_line(&self, line: &LogLine) -> Result<()> {
        if let Some(dir) = &self.dir {
            let mut f = OpenOptions::new().append(true).open(dir.join("log.jsonl"))?;
            let mut text = serde_json::to_string(line)?;
            text.push('\n');
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn head(&self) -> Option<u64> {
        self.head
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn step(&self, id: u64) -> Result<&Step> {
        self.steps
            .binary_search_by_key(&id, |s| s.step_id)
            .map(|i| &self.steps[i])
            .map_err(|_| Error::UnknownStep(id))
    }

    /// Stores a JSON artifact under the hash of its canonical form.
    pub fn put_blob(&mut self, value: &Value) -> Result<String> {
        let text = canonical_json(value);
        let h = hash::sha256_hex(text.as_bytes());
        if !self.blobs.contains_key(&h) {
            if let Some(dir) = &self.dir {
                let path = dir.join("blobs").join(&h);
                if !path.exists() {
                    std::fs::write(path, text.as_bytes())?;
                }
            }
            self.blobs.insert(h.clone(), Arc::new(value.clone()));
        }
        Ok(h)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Arc<Value>> {
        if let Some(v) = self.blobs.get(hash) {
            return Ok(v.clone());
        }
        if let Some(dir) = &self.dir {
            if hash.len() == 64 && hash.chars().all(|c| c.is_ascii_hexdigit()) {
                let path = dir.join("blobs").join(hash);
                if path.exists() {
                    let v: Value = serde_json::from_slice(&std::fs::read(path)?)?;
                    return Ok(Arc::new(v));
                }
            }
        }
        Err(Error::Internal(format!("missing blob {hash}")))
    }

    pub fn has_blob(&self, hash: &str) -> bool {
        self.get_blob(hash).is_ok()
    }

    /// Appends a step whose parent is the current head and moves the head to it.
    pub fn record_step(
        &mut self,
        kind: StepKind,
        inputs: Value,
        outputs: &Value,
        assumptions: Vec<AssumptionDraft>,
    ) -> Result<&Step> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        let outputs_ref = self.put_blob(outputs)?;
        let step_id = self.steps.last().map_or(1, |s| s.step_id + 1);
        let step = Step {
            step_id,
            parent: self.head,
            kind,
            inputs_hash: content_hash(&inputs),
            inputs,
            outputs_ref,
            timestamp_ms: now_ms(),
        };
        let records: Vec<AssumptionRecord> = assumptions
            .into_iter()
            .map(|a| AssumptionRecord {
                name: a.name,
                status: a.status,
                evidence: a.evidence,
                source_step: step_id,
            })
            .collect();
        let line = LogLine::Step {
            step: step.clone(),
            assumptions: records.clone(),
        };
        self.append_line(&line)?;
        self.steps.push(step);
        self.assumptions.extend(records);
        self.head = Some(step_id);
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Moves the head back to `step_id`; later steps stay in the log but
    /// leave the active chain. Trackback to the current head is a no-op.
    pub fn trackback(&mut self, step_id: u64) -> Result<()> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        self.step(step_id)?;
        if self.head == Some(step_id) {
            return Ok(());
        }
        self.append_line(&LogLine::Trackback {
            head: step_id,
            timestamp_ms: now_ms(),
        })?;
        self.head = Some(step_id);
        Ok(())
    }

    pub fn close(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.append_line(&LogLine::Close { timestamp_ms: now_ms() })?;
        self.closed = true;
        Ok(())
    }

    /// Step ids from the root to `from` following parent links.
    pub fn chain(&self, from: Option<u64>) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = from;
        while let Some(id) = cur {
            out.push(id);
            cur = self.step(id).ok().and_then(|s| s.parent);
        }
        out.reverse();
        out
    }

    pub fn active_chain(&self) -> Vec<u64> {
        self.chain(self.head)
    }

    pub fn active_set(&self) -> BTreeSet<u64> {
        self.active_chain().into_iter().collect()
    }

    pub fn all_assumptions(&self) -> &[AssumptionRecord] {
        &self.assumptions
    }

    /// Assumptions introduced by steps on the active chain, in source order.
    pub fn list_assumptions(&self) -> Vec<AssumptionRecord> {
        let active = self.active_set();
        self.assumptions
            .iter()
            .filter(|a| active.contains(&a.source_step))
            .cloned()
            .collect()
    }

    /// Generic export: every step with its outputs and active flag, every
    /// assumption with its active flag, and (optionally) every blob the
    /// steps reference.
    pub fn export(&self, include_blobs: bool, skip_outputs: &dyn Fn(&Step) -> bool) -> Result<Value> {
        let active = self.active_set();
        let mut steps = Vec::new();
        let mut blobs = serde_json::Map::new();
        for s in &self.steps {
            let mut v = serde_json::to_value(s)?;
            v["active"] = Value::Bool(active.contains(&s.step_id));
            if !skip_outputs(s) {
                v["outputs"] = (*self.get_blob(&s.outputs_ref)?).clone();
            }
            steps.push(v);
            if include_blobs {
                blobs.insert(s.outputs_ref.clone(), (*self.get_blob(&s.outputs_ref)?).clone());
                for r in blob_refs(&s.inputs) {
                    if let Ok(b) = self.get_blob(&r) {
                        blobs.insert(r, (*b).clone());
                    }
                }
            }
        }
        let assumptions: Vec<Value> = self
            .assumptions
            .iter()
            .map(|a| {
                let mut v = serde_json::to_value(a).expect("plain data");
                v["active"] = Value::Bool(active.contains(&a.source_step));
                v
            })
            .collect();
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "session_id": self.id,
            "head": self.head,
            "closed": self.closed,
            "steps": steps,
            "assumptions": assumptions,
        });
        if include_blobs {
            doc["blobs"] = Value::Object(blobs);
        }
        Ok(doc)
    }

    /// Rebuilds an in-memory session from an exported document. Embedded
    /// outputs and blobs are restored and checked against their hashes.
    pub fn import(doc: &Value) -> Result<Self> {
        let version = doc["schema_version"].as_u64().unwrap_or(0);
        if version != SCHEMA_VERSION as u64 {
            return Err(Error::Parse(format!("unsupported schema_version {version}")));
        }
        let id = doc["session_id"].as_str().unwrap_or("imported");
        let mut s = Self::in_memory(id);
        if let Some(blobs) = doc["blobs"].as_object() {
            for (h, v) in blobs {
                let got = s.put_blob(v)?;
                if &got != h {
                    return Err(Error::Parse(format!("blob {h} does not match its content")));
                }
            }
        }
        for sv in doc["steps"].as_array().cloned().unwrap_or_default() {
            let step: Step = serde_json::from_value(sv.clone())
                .map_err(|e| Error::Parse(format!("report step: {e}")))?;
            if let Some(out) = sv.get("outputs") {
                let got = s.put_blob(out)?;
                if got != step.outputs_ref {
                    return Err(Error::Parse(format!("outputs of step {} do not match outputs_ref", step.step_id)));
                }
            }
            if content_hash(&step.inputs) != step.inputs_hash {
                return Err(Error::Parse(format!("inputs of step {} do not match inputs_hash", step.step_id)));
            }
            s.apply(LogLine::Step {
                step,
                assumptions: Vec::new(),
            })?;
        }
        for av in doc["assumptions"].as_array().cloned().unwrap_or_default() {
            let a: AssumptionRecord =
                serde_json::from_value(av).map_err(|e| Error::Parse(format!("report assumption: {e}")))?;
            s.assumptions.push(a);
        }
        s.head = match doc["head"].as_u64() {
            Some(h) => {
                s.step(h)?;
                Some(h)
            }
            None => None,
        };
        s.closed = doc["closed"].as_bool().unwrap_or(false);
        Ok(s)
    }

    /// The same in-memory session under another id.
    pub fn renamed(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    /// Persists an imported session under `root`.
    pub fn persist(&self, root: impl AsRef<Path>) -> Result<SessionState> {
        let mut out = SessionState::create(root, &self.id)?;
        for (h, v) in &self.blobs {
            let got = out.put_blob(v)?;
            debug_assert_eq!(&got, h);
        }
        let mut by_step: BTreeMap<u64, Vec<AssumptionRecord>> = BTreeMap::new();
        for a in &self.assumptions {
            by_step.entry(a.source_step).or_default().push(a.clone());
        }
        for st in &self.steps {
            let line = LogLine::Step {
                step: st.clone(),
                assumptions: by_step.remove(&st.step_id).unwrap_or_default(),
            };
            out.append_line(&line)?;
            out.apply(line)?;
        }
        if let Some(h) = self.head {
            if out.head != Some(h) {
                out.append_line(&LogLine::Trackback {
                    head: h,
                    timestamp_ms: now_ms(),
                })?;
                out.head = Some(h);
            }
        }
        if self.closed {
            out.close()?;
        }
        Ok(out)
    }
}

/// Values under keys ending in `_ref` inside step inputs name blobs.
pub fn blob_refs(inputs: &Value) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    if k.ends_with("_ref") {
                        if let Some(s) = x.as_str() {
                            out.push(s.to_string());
                        }
                    }
                    walk(x, out);
                }
            }
            Value::Array(a) => a.iter().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    walk(inputs, &mut out);
    out
}
