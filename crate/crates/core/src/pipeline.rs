//! The analysis state machine: ingest → discover → orient → adjust → estimate,
//! recorded step by step in a [`SessionState`].
//!
//! Every step kind has a pure executor over `(inputs, artifacts of the parent
//! chain)`. Recording and replay go through the same executors, so replaying a
//! log reproduces every `outputs_ref`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adjustment::{find_muas, AdjustmentOptions, CostAggregator, MuasReport, DEFAULT_MAX_SIZE};
use crate::datasets::{read_csv, validate_admissibility, AdmissibilityWarning, Column, Dataset};
use crate::discovery::DiscoveryRegistry;
use crate::error::{ApiError, Error, Result};
use crate::estimation::runner::{learner_from_options, DEFAULT_N_RUNS};
use crate::estimation::{positivity_check, run_estimator, EstimationResult, EstimatorRegistry, PositivityReport, DEFAULT_TRIM};
use crate::graph::{CausalGraph, Edge};
use crate::options::Options;
use crate::orientation::{
    apply_beliefs, override_edge, propose_orientations, uncertainty_map, ApplyReport, EdgeBelief,
    OrientationProvider,
};
use crate::session::{
    content_hash, AssumptionDraft, AssumptionName as A, AssumptionStatus as S, SessionState, Step, StepKind,
    SCHEMA_VERSION,
};

/// Plugin registries shared by every analysis.
pub struct Engine {
    pub discovery: DiscoveryRegistry,
    pub estimators: EstimatorRegistry,
}

impl Default for Engine {
    fn default() -> Self {
        Engine {
            discovery: DiscoveryRegistry::with_builtins(),
            estimators: EstimatorRegistry::with_builtins(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestInputs {
    pub csv_ref: String,
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOutputs {
    pub dataset_ref: String,
    pub columns: Vec<Column>,
    pub n_rows: usize,
    pub dropped_rows: usize,
    pub treatment: String,
    pub outcome: String,
    pub warnings: Vec<AdmissibilityWarning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverInputs {
    pub method: String,
    #[serde(default)]
    pub options: Options,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphOutputs {
    pub graph: CausalGraph,
    #[serde(default)]
    pub notes: BTreeMap<String, Value>,
    #[serde(default)]
    pub unresolved: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientInputs {
    pub beliefs: Vec<EdgeBelief>,
    #[serde(default)]
    pub provider: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientOutputs {
    pub graph: CausalGraph,
    pub report: ApplyReport,
    pub unresolved: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    Muas,
    All,
    Selected,
}

/// Which adjustment set to use: a mode or explicit covariate names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZSpec {
    Mode(ZMode),
    Names(Vec<String>),
}

impl ZSpec {
    pub fn parse(s: &str) -> ZSpec {
        match s {
            "muas" => ZSpec::Mode(ZMode::Muas),
            "all" => ZSpec::Mode(ZMode::All),
            "selected" => ZSpec::Mode(ZMode::Selected),
            "" | "none" => ZSpec::Names(Vec::new()),
            list => ZSpec::Names(list.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Decision {
    OverrideEdge { from: String, to: String, confidence: f64 },
    SelectAdjustment { z: ZSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `all` or `explicit`.
    pub mode: String,
    pub z: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustInputs {
    pub max_size: usize,
    #[serde(default)]
    pub aggregator: CostAggregator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustOutputs {
    /// `ok`, or `failure` when no valid set exists within `max_size`.
    pub status: String,
    pub treatment: String,
    pub outcome: String,
    pub max_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub muas: Option<MuasReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<ApiError>,
    /// `u(e)` of every directed edge, by label.
    pub uncertainty: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateInputs {
    pub estimator: String,
    pub z: ZSpec,
    pub n_runs: usize,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_true_ref: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutputs {
    pub estimator: String,
    /// `muas`, `all`, `selected` or `explicit`.
    pub mode: String,
    pub z: Vec<String>,
    /// Set when `Z` is every covariate rather than a graph-based choice.
    pub no_discovery: bool,
    pub result: EstimationResult,
    pub positivity: PositivityReport,
    pub seeds: Vec<u64>,
    pub learner: String,
}

/// Artifacts visible from a point in the log.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub dataset: Option<(u64, IngestOutputs)>,
    pub graph: Option<(u64, GraphOutputs)>,
    pub adjust: Option<(u64, AdjustOutputs)>,
    pub selection: Option<(u64, Selection)>,
    pub estimate: Option<(u64, EstimateOutputs)>,
}

enum Slot {
    Dataset,
    Graph,
    Adjust,
    Selection,
    Estimate,
}

/// Slot and level of the artifact a step produces. A later artifact at a
/// lower level makes earlier higher-level artifacts stale.
fn slot_of(step: &Step) -> (Slot, u8) {
    match step.kind {
        StepKind::Ingest => (Slot::Dataset, 0),
        StepKind::Discover | StepKind::Orient => (Slot::Graph, 1),
        StepKind::Adjust => (Slot::Adjust, 2),
        StepKind::Estimate => (Slot::Estimate, 3),
        StepKind::UserDecision => match step.inputs.get("action").and_then(Value::as_str) {
            Some("select_adjustment") => (Slot::Selection, 2),
            _ => (Slot::Graph, 1),
        },
    }
}

fn decode<T: for<'de> Deserialize<'de>>(v: &Value, what: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Internal(format!("stored {what} unreadable: {e}")))
}

pub fn resolve(session: &SessionState, from: Option<u64>) -> Result<Context> {
    let mut ctx = Context::default();
    let mut barrier = u8::MAX;
    for id in session.chain(from).into_iter().rev() {
        let step = session.step(id)?;
        let (slot, level) = slot_of(step);
        if level > barrier {
            continue;
        }
        let out = || session.get_blob(&step.outputs_ref);
        let taken = match slot {
            Slot::Dataset if ctx.dataset.is_none() => {
                ctx.dataset = Some((id, decode(&*out()?, "dataset")?));
                true
            }
            Slot::Graph if ctx.graph.is_none() => {
                let v = out()?;
                ctx.graph = Some((id, decode(&v, "graph")?));
                true
            }
            Slot::Adjust if ctx.adjust.is_none() => {
                ctx.adjust = Some((id, decode(&*out()?, "adjustment")?));
                true
            }
            Slot::Selection if ctx.selection.is_none() => {
                let v = out()?;
                ctx.selection = Some((id, decode(&v["selection"], "selection")?));
                true
            }
            Slot::Estimate if ctx.estimate.is_none() => {
                ctx.estimate = Some((id, decode(&*out()?, "estimate")?));
                true
            }
            _ => false,
        };
        if taken {
            barrier = barrier.min(level);
        }
    }
    Ok(ctx)
}

fn out_of_order(what: &str) -> Error {
    Error::OutOfOrder(what.to_string())
}

fn load_dataset(session: &SessionState, ctx: &Context) -> Result<Dataset> {
    let (_, ing) = ctx.dataset.as_ref().ok_or_else(|| out_of_order("no dataset ingested"))?;
    decode(&*session.get_blob(&ing.dataset_ref)?, "dataset")
}

fn graph_of(ctx: &Context) -> Result<&CausalGraph> {
    ctx.graph
        .as_ref()
        .map(|(_, g)| &g.graph)
        .ok_or_else(|| out_of_order("no graph discovered"))
}

fn labels(g: &CausalGraph, edges: &[Edge]) -> Vec<String> {
    edges.iter().map(|e| g.edge_label(e)).collect()
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Result of executing one step: outputs plus the assumptions it introduces.
pub struct Executed {
    pub outputs: Value,
    pub assumptions: Vec<AssumptionDraft>,
}

/// Runs a step from its inputs against the artifacts visible from `parent`.
/// Derived blobs (the parsed dataset) are stored in `session`.
pub fn execute(
    engine: &Engine,
    session: &mut SessionState,
    kind: StepKind,
    inputs: &Value,
    parent: Option<u64>,
) -> Result<Executed> {
    let ctx = resolve(session, parent)?;
    match kind {
        StepKind::Ingest => {
            let inp: IngestInputs = decode(inputs, "ingest inputs")?;
            let csv = session.get_blob(&inp.csv_ref)?;
            let text = csv.as_str().ok_or_else(|| Error::Internal("csv blob is not text".into()))?;
            let ds = read_csv(text.as_bytes(), &inp.treatment, &inp.outcome)?;
            let warnings = validate_admissibility(&ds);
            let dataset_ref = session.put_blob(&to_value(&ds)?)?;
            let mut assumptions: Vec<AssumptionDraft> = warnings
                .iter()
                .map(|w| AssumptionDraft::new(A::DiscoveryFaithfulness, S::Warned, w.message()))
                .collect();
            if ds.dropped_rows() > 0 {
                assumptions.push(AssumptionDraft::new(
                    A::DiscoveryFaithfulness,
                    S::Warned,
                    format!("{} rows with missing cells dropped", ds.dropped_rows()),
                ));
            }
            let out = IngestOutputs {
                dataset_ref,
                columns: ds.columns().to_vec(),
                n_rows: ds.n_rows(),
                dropped_rows: ds.dropped_rows(),
                treatment: inp.treatment,
                outcome: inp.outcome,
                warnings,
            };
            Ok(Executed {
                outputs: to_value(&out)?,
                assumptions,
            })
        }
        StepKind::Discover => {
            let inp: DiscoverInputs = decode(inputs, "discover inputs")?;
            let ds = load_dataset(session, &ctx)?;
            let found = engine
                .discovery
                .run_detailed(&inp.method, ds.data(), &ds.names(), &inp.options)?;
            let unresolved = labels(&found.graph, &found.graph.undirected_edges());
            let low_ident = found.notes.get("low_identifiability").and_then(Value::as_bool) == Some(true);
            let evidence = format!(
                "{} over {} columns; {} directed, {} unresolved edges",
                inp.method,
                ds.n_cols(),
                found.graph.directed_edges().len(),
                unresolved.len()
            );
            let status = if low_ident { S::Warned } else { S::Asserted };
            let out = GraphOutputs {
                graph: found.graph,
                notes: found.notes,
                unresolved,
            };
            Ok(Executed {
                outputs: to_value(&out)?,
                assumptions: vec![AssumptionDraft::new(A::DiscoveryFaithfulness, status, evidence)],
            })
        }
        StepKind::Orient => {
            let inp: OrientInputs = decode(inputs, "orient inputs")?;
            let g = graph_of(&ctx)?;
            let (graph, report) = apply_beliefs(g, &inp.beliefs)?;
            let mut assumptions = Vec::new();
            for label in &report.applied {
                let conf = belief_confidence(&inp.beliefs, label);
                assumptions.push(AssumptionDraft::new(
                    A::OrientationBelief,
                    S::Asserted,
                    format!("{label} (confidence {conf:.2})"),
                ));
            }
            for label in &report.contested {
                assumptions.push(AssumptionDraft::new(
                    A::OrientationBelief,
                    S::Warned,
                    format!("statistically forced {label} contested by external belief"),
                ));
            }
            for label in &report.rejected_cycles {
                assumptions.push(AssumptionDraft::new(
                    A::OrientationBelief,
                    S::Warned,
                    format!("{label} rejected: would create a directed cycle"),
                ));
            }
            let unresolved = labels(&graph, &graph.undirected_edges());
            let out = OrientOutputs {
                graph,
                report,
                unresolved,
            };
            Ok(Executed {
                outputs: to_value(&out)?,
                assumptions,
            })
        }
        StepKind::UserDecision => {
            let d: Decision = decode(inputs, "decision")?;
            match d {
                Decision::OverrideEdge { from, to, confidence } => {
                    let g = graph_of(&ctx)?;
                    let graph = override_edge(g, &from, &to, confidence)?;
                    let out = GraphOutputs {
                        unresolved: labels(&graph, &graph.undirected_edges()),
                        graph,
                        notes: BTreeMap::new(),
                    };
                    Ok(Executed {
                        outputs: to_value(&out)?,
                        assumptions: vec![AssumptionDraft::new(
                            A::OrientationBelief,
                            S::UserOverridden,
                            format!("{from}->{to} set by user (confidence {confidence:.2})"),
                        )],
                    })
                }
                Decision::SelectAdjustment { z } => {
                    let ds = load_dataset(session, &ctx)?;
                    let selection = match z {
                        ZSpec::Mode(ZMode::All) => Selection {
                            mode: "all".into(),
                            z: ds.covariates(),
                        },
                        ZSpec::Names(names) => {
                            check_z(&ds, &names)?;
                            Selection {
                                mode: "explicit".into(),
                                z: names,
                            }
                        }
                        ZSpec::Mode(m) => {
                            return Err(Error::InvalidInput(format!(
                                "selection must be `all` or a list of covariates, not {m:?}"
                            )))
                        }
                    };
                    Ok(Executed {
                        outputs: json!({ "selection": selection }),
                        assumptions: Vec::new(),
                    })
                }
            }
        }
        StepKind::Adjust => {
            let inp: AdjustInputs = decode(inputs, "adjust inputs")?;
            let ds = load_dataset(session, &ctx)?;
            let g = graph_of(&ctx)?;
            let out = adjust_on(g, &ds, &inp)?;
            Ok(Executed {
                outputs: to_value(&out)?,
                assumptions: Vec::new(),
            })
        }
        StepKind::Estimate => {
            let inp: EstimateInputs = decode(inputs, "estimate inputs")?;
            let ds = load_dataset(session, &ctx)?;
            let plugin = engine.estimators.get(&inp.estimator)?;
            let (mode, z) = resolve_z(&ds, &ctx, &inp.z)?;
            let tau_true: Option<Vec<f64>> = match &inp.tau_true_ref {
                Some(r) => Some(decode(&*session.get_blob(r)?, "tau_true")?),
                None => None,
            };
            let y = ds.outcome_vector();
            let t = ds.treatment_vector();
            let x = ds.select(&z)?;
            let learner = learner_from_options(&inp.options)?;
            let result = run_estimator(plugin.as_ref(), &y, &t, &x, inp.n_runs, tau_true.as_deref(), &inp.options)?;
            let positivity = positivity_check(&t, &x, DEFAULT_TRIM);
            let zs = if z.is_empty() { "{}".to_string() } else { format!("{{{}}}", z.join(", ")) };
            let no_discovery = mode == "all";
            let learner_label = serde_json::to_string(&learner)?;
            let mut assumptions = vec![
                AssumptionDraft::new(
                    A::NoInterference,
                    S::Asserted,
                    "one unit's treatment does not affect another unit's outcome",
                ),
                AssumptionDraft::new(A::Consistency, S::Asserted, "observed outcome equals the potential outcome under the received treatment"),
                AssumptionDraft::new(
                    A::IgnorabilityGivenZ,
                    if no_discovery { S::Warned } else { S::Asserted },
                    if no_discovery {
                        format!("Z = all covariates {zs}; not chosen from a graph")
                    } else {
                        format!("Z = {zs} ({mode})")
                    },
                ),
                AssumptionDraft::new(
                    A::Positivity,
                    if positivity.violated { S::Warned } else { S::Asserted },
                    format!(
                        "{:.1}% of propensities outside [{}, {}]",
                        positivity.fraction_outside * 100.0,
                        DEFAULT_TRIM.0,
                        DEFAULT_TRIM.1
                    ),
                ),
            ];
            assumptions.push(AssumptionDraft::new(
                A::ParametricModel,
                S::Asserted,
                format!("{} with outcome model {learner_label}", inp.estimator),
            ));
            let out = EstimateOutputs {
                estimator: inp.estimator,
                mode,
                z,
                no_discovery,
                result,
                positivity,
                seeds: (0..inp.n_runs as u64).collect(),
                learner: learner_label,
            };
            Ok(Executed {
                outputs: to_value(&out)?,
                assumptions,
            })
        }
    }
}

fn belief_confidence(beliefs: &[EdgeBelief], label: &str) -> f64 {
    beliefs
        .iter()
        .filter(|b| b.label() == label)
        .map(|b| b.confidence)
        .fold(0.0, f64::max)
}

fn check_z(ds: &Dataset, z: &[String]) -> Result<()> {
    ds.indices_of(z)?;
    if z.iter().any(|c| c == ds.treatment() || c == ds.outcome()) {
        return Err(Error::InvalidZ("adjustment set contains treatment or outcome".into()));
    }
    Ok(())
}

fn resolve_z(ds: &Dataset, ctx: &Context, spec: &ZSpec) -> Result<(String, Vec<String>)> {
    let need_choice = || {
        if ctx.adjust.is_none() && ctx.selection.is_none() {
            Err(out_of_order(
                "estimate needs an adjust step or an explicit adjustment-set decision first",
            ))
        } else {
            Ok(())
        }
    };
    match spec {
        ZSpec::Mode(ZMode::Muas) => {
            let (_, adj) = ctx.adjust.as_ref().ok_or_else(|| out_of_order("no adjust step"))?;
            match &adj.muas {
                Some(m) => Ok(("muas".into(), m.chosen.z.clone())),
                None => Err(Error::NoValidAdjustmentSet { max_size: adj.max_size }),
            }
        }
        ZSpec::Mode(ZMode::Selected) => {
            let (_, sel) = ctx
                .selection
                .as_ref()
                .ok_or_else(|| out_of_order("no adjustment-set selection"))?;
            Ok(("selected".into(), sel.z.clone()))
        }
        ZSpec::Mode(ZMode::All) => {
            need_choice()?;
            Ok(("all".into(), ds.covariates()))
        }
        ZSpec::Names(names) => {
            need_choice()?;
            check_z(ds, names)?;
            Ok(("explicit".into(), names.clone()))
        }
    }
}

/// MUAS on `g` restricted to dataset columns; "no valid set" becomes a failure payload.
pub fn adjust_on(g: &CausalGraph, ds: &Dataset, inp: &AdjustInputs) -> Result<AdjustOutputs> {
    let w = g.index_of(ds.treatment())?;
    let y = g.index_of(ds.outcome())?;
    let undirected = g.undirected_edges();
    if !undirected.is_empty() {
        return Err(Error::GraphNotDag(format!(
            "{} undirected edges remain ({}); orient them first",
            undirected.len(),
            labels(g, &undirected).join(", ")
        )));
    }
    let cols = ds.names();
    let allowed = (0..g.n()).filter(|&v| cols.iter().any(|c| c == g.name(v))).collect();
    let opts = AdjustmentOptions {
        max_size: inp.max_size,
        allowed: Some(allowed),
        aggregator: inp.aggregator,
    };
    let u = uncertainty_map(g);
    let uncertainty = u
        .iter()
        .map(|(&(a, b), &x)| (format!("{}->{}", g.name(a), g.name(b)), x))
        .collect();
    let base = AdjustOutputs {
        status: "ok".into(),
        treatment: ds.treatment().to_string(),
        outcome: ds.outcome().to_string(),
        max_size: inp.max_size,
        muas: None,
        failure: None,
        uncertainty,
    };
    match find_muas(g, w, y, &u, &opts) {
        Ok(r) => Ok(AdjustOutputs {
            muas: Some(r.report(g)),
            ..base
        }),
        Err(e @ Error::NoValidAdjustmentSet { .. }) => Ok(AdjustOutputs {
            status: "failure".into(),
            failure: Some(ApiError::from(&e)),
            ..base
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub step_id: u64,
    pub kind: StepKind,
    pub expected: String,
    pub actual: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ok: bool,
    pub steps: Vec<ReplayStep>,
}

/// One recorded step, as printed by the CLI and returned by the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: Step,
    pub outputs: Value,
}

pub struct Analysis {
    pub session: SessionState,
    engine: Arc<Engine>,
}

impl Analysis {
    pub fn new(session: SessionState, engine: Arc<Engine>) -> Self {
        Analysis { session, engine }
    }

    pub fn in_memory(id: &str) -> Self {
        Self::new(SessionState::in_memory(id), Arc::new(Engine::default()))
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn context(&self) -> Result<Context> {
        resolve(&self.session, self.session.head())
    }

    fn record(&mut self, kind: StepKind, inputs: Value) -> Result<StepOutcome> {
        if self.session.is_closed() {
            return Err(Error::SessionClosed);
        }
        let head = self.session.head();
        let ex = execute(&self.engine, &mut self.session, kind, &inputs, head)?;
        let step = self
            .session
            .record_step(kind, inputs, &ex.outputs, ex.assumptions)?
            .clone();
        Ok(StepOutcome {
            step,
            outputs: ex.outputs,
        })
    }

    pub fn ingest_csv(&mut self, csv: &str, treatment: &str, outcome: &str, source: Option<String>) -> Result<StepOutcome> {
        if self.session.is_closed() {
            return Err(Error::SessionClosed);
        }
        let csv_ref = self.session.put_blob(&Value::String(csv.to_string()))?;
        let inputs = to_value(&IngestInputs {
            csv_ref,
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            source,
        })?;
        self.record(StepKind::Ingest, inputs)
    }

    pub fn discover(&mut self, method: &str, options: Options) -> Result<StepOutcome> {
        let inputs = to_value(&DiscoverInputs {
            method: method.to_string(),
            options,
        })?;
        self.record(StepKind::Discover, inputs)
    }

    /// Queries the provider for every undirected or contested edge and records
    /// the answers as beliefs, so replay does not depend on the provider.
    pub fn orient_with_provider(
        &mut self,
        provider: &dyn OrientationProvider,
        provider_label: &str,
        descriptions: &BTreeMap<String, String>,
        context: &str,
    ) -> Result<StepOutcome> {
        let ctx = self.context()?;
        let g = graph_of(&ctx)?;
        let beliefs = propose_orientations(g, provider, descriptions, context)?;
        self.orient_with_beliefs(beliefs, Some(provider_label.to_string()))
    }

    pub fn orient_with_beliefs(&mut self, beliefs: Vec<EdgeBelief>, provider: Option<String>) -> Result<StepOutcome> {
        let inputs = to_value(&OrientInputs { beliefs, provider })?;
        self.record(StepKind::Orient, inputs)
    }

    pub fn override_edge(&mut self, from: &str, to: &str, confidence: f64) -> Result<StepOutcome> {
        let inputs = to_value(&Decision::OverrideEdge {
            from: from.to_string(),
            to: to.to_string(),
            confidence,
        })?;
        self.record(StepKind::UserDecision, inputs)
    }

    pub fn select_adjustment(&mut self, z: ZSpec) -> Result<StepOutcome> {
        let inputs = to_value(&Decision::SelectAdjustment { z })?;
        self.record(StepKind::UserDecision, inputs)
    }

    pub fn adjust(&mut self, max_size: usize) -> Result<StepOutcome> {
        let inputs = to_value(&AdjustInputs {
            max_size,
            aggregator: CostAggregator::Max,
        })?;
        self.record(StepKind::Adjust, inputs)
    }

    /// MUAS after reversing one edge of the current graph; records nothing.
    pub fn whatif_flip(&self, edge: &str, max_size: usize) -> Result<AdjustOutputs> {
        let ctx = self.context()?;
        let ds = load_dataset(&self.session, &ctx)?;
        let g = graph_of(&ctx)?;
        let e = g.parse_edge(edge)?;
        let flipped = g.flip_edge(&e)?;
        if !flipped.is_acyclic() {
            return Err(Error::WouldCreateCycle(g.edge_label(&e.reversed())));
        }
        adjust_on(
            &flipped,
            &ds,
            &AdjustInputs {
                max_size,
                aggregator: CostAggregator::Max,
            },
        )
    }

    pub fn estimate(
        &mut self,
        estimator: &str,
        z: ZSpec,
        n_runs: usize,
        options: Options,
        tau_true: Option<Vec<f64>>,
    ) -> Result<StepOutcome> {
        let tau_true_ref = match tau_true {
            Some(t) => Some(self.session.put_blob(&to_value(&t)?)?),
            None => None,
        };
        let inputs = to_value(&EstimateInputs {
            estimator: estimator.to_string(),
            z,
            n_runs,
            options,
            tau_true_ref,
        })?;
        self.record(StepKind::Estimate, inputs)
    }

    pub fn trackback(&mut self, step_id: u64) -> Result<Option<u64>> {
        self.session.trackback(step_id)?;
        Ok(self.session.head())
    }

    /// Re-executes every step (all branches) against its own parent chain and
    /// compares output hashes.
    pub fn replay(&self) -> Result<ReplayReport> {
        let mut scratch = self.session.clone();
        let mut steps = Vec::new();
        for st in self.session.steps() {
            let mut rs = ReplayStep {
                step_id: st.step_id,
                kind: st.kind,
                expected: st.outputs_ref.clone(),
                actual: None,
                ok: false,
                error: None,
            };
            if content_hash(&st.inputs) != st.inputs_hash {
                rs.error = Some("inputs_hash mismatch".into());
            } else {
                match execute(&self.engine, &mut scratch, st.kind, &st.inputs, st.parent) {
                    Ok(ex) => {
                        let h = content_hash(&ex.outputs);
                        rs.ok = h == st.outputs_ref;
                        rs.actual = Some(h);
                    }
                    Err(e) => rs.error = Some(e.to_string()),
                }
            }
            steps.push(rs);
        }
        Ok(ReplayReport {
            ok: steps.iter().all(|s| s.ok),
            steps,
        })
    }

    /// Active artifacts: what the head of the session currently shows.
    pub fn active_summary(&self) -> Result<Value> {
        let ctx = self.context()?;
        Ok(json!({
            "head": self.session.head(),
            "dataset": ctx.dataset.as_ref().map(|(id, d)| json!({"step_id": id, "columns": d.columns, "n_rows": d.n_rows, "dropped_rows": d.dropped_rows, "treatment": d.treatment, "outcome": d.outcome, "warnings": d.warnings})),
            "graph": ctx.graph.as_ref().map(|(id, g)| json!({"step_id": id, "graph": g.graph, "unresolved": g.unresolved})),
            "adjustment": ctx.adjust.as_ref().map(|(id, a)| json!({"step_id": id, "result": a})),
            "selection": ctx.selection.as_ref().map(|(id, s)| json!({"step_id": id, "selection": s})),
            "estimate": ctx.estimate.as_ref().map(|(id, e)| json!({"step_id": id, "result": e})),
            "assumptions": self.session.list_assumptions(),
        }))
    }

    /// Report document: every step (with active flags and outputs), the
    /// assumptions ledger, the active artifacts, seeds and tool version.
    /// `include_data` embeds the uploaded CSV and parsed dataset blobs.
    pub fn export_report(&self, include_data: bool) -> Result<Value> {
        let mut doc = self.session.export(include_data, &|_| false)?;
        let active = self.session.active_set();
        let decision_log: Vec<Value> = self
            .session
            .steps()
            .iter()
            .map(|s| json!({"step_id": s.step_id, "parent": s.parent, "kind": s.kind, "inputs": s.inputs, "active": active.contains(&s.step_id)}))
            .collect();
        let seeds: BTreeMap<String, Value> = self
            .session
            .steps()
            .iter()
            .filter(|s| s.kind == StepKind::Estimate)
            .map(|s| {
                let n = s.inputs.get("n_runs").and_then(Value::as_u64).unwrap_or(0);
                (s.step_id.to_string(), json!((0..n).collect::<Vec<_>>()))
            })
            .collect();
        doc["tool"] = json!({"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")});
        doc["active_state"] = self.active_summary()?;
        doc["decision_log"] = Value::Array(decision_log);
        doc["seeds"] = to_value(&seeds)?;
        doc["schema_version"] = json!(SCHEMA_VERSION);
        Ok(doc)
    }
}

pub fn default_n_runs() -> usize {
    DEFAULT_N_RUNS
}

pub fn default_max_size() -> usize {
    DEFAULT_MAX_SIZE
}
