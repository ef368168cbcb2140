//! Structure learning: CI tests, PC, DirectLiNGAM and the plugin registry.

pub mod ci;
pub mod lingam;
pub mod pc;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, EdgeMeta, SignedMatrix};
use crate::options::{opt_f64, opt_usize, Options};

pub use ci::{fisher_z_test, AutoTest, CITestResult, ChiSquare, CiTest, DSeparationOracle, FisherZ};
pub use lingam::{direct_lingam, LingamFit};
pub use pc::{pc_discover, pc_discover_with, pc_with_test, PcOptions, PcOutput};

/// Raw output of a discovery plugin before validation.
#[derive(Clone, Debug, Default)]
pub struct PluginOutput {
    pub matrix: SignedMatrix,
    /// Free-form metadata surfaced to callers (e.g. identifiability flags).
    pub notes: BTreeMap<String, Value>,
}

pub trait DiscoveryPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, data: &DMatrix<f64>, names: &[String], options: &Options) -> Result<PluginOutput>;
}

/// Validated discovery output.
#[derive(Clone, Debug)]
pub struct Discovered {
    pub graph: CausalGraph,
    pub notes: BTreeMap<String, Value>,
}

#[derive(Clone, Default)]
pub struct DiscoveryRegistry {
    plugins: BTreeMap<String, Arc<dyn DiscoveryPlugin>>,
}

impl DiscoveryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(PcPlugin)).expect("fresh registry");
        r.register(Arc::new(LingamPlugin)).expect("fresh registry");
        r
    }

    pub fn register(&mut self, plugin: Arc<dyn DiscoveryPlugin>) -> Result<()> {
        let name = plugin.name().to_string();
        if name.is_empty() {
            return Err(Error::InvalidInput("plugin name must be nonempty".into()));
        }
        if self.plugins.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.plugins.insert(name, plugin);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.plugins.keys().cloned().collect()
    }

    pub fn run(&self, name: &str, data: &DMatrix<f64>, names: &[String], options: &Options) -> Result<CausalGraph> {
        self.run_detailed(name, data, names, options).map(|d| d.graph)
    }

    /// Runs a plugin and validates its matrix against the sign convention.
    /// Directed edges are tagged as statistically derived.
    pub fn run_detailed(
        &self,
        name: &str,
        data: &DMatrix<f64>,
        names: &[String],
        options: &Options,
    ) -> Result<Discovered> {
        let plugin = self
            .plugins
            .get(name)
            .ok_or_else(|| Error::UnknownPlugin(name.to_string()))?;
        let out = plugin.run(data, names, options)?;
        let mut graph = CausalGraph::from_signed_matrix(&out.matrix, names)?;
        for e in graph.directed_edges() {
            graph.set_meta(&e, EdgeMeta::statistical())?;
        }
        Ok(Discovered {
            graph,
            notes: out.notes,
        })
    }
}

/// `pc`. Options: `alpha` (default 0.05), `max_cond_size` (default 3).
pub struct PcPlugin;

impl DiscoveryPlugin for PcPlugin {
    fn name(&self) -> &str {
        "pc"
    }

    fn run(&self, data: &DMatrix<f64>, names: &[String], options: &Options) -> Result<PluginOutput> {
        let opts = PcOptions {
            alpha: opt_f64(options, "alpha", pc::DEFAULT_ALPHA)?,
            max_cond_size: Some(opt_usize(options, "max_cond_size", pc::DEFAULT_MAX_COND_SIZE)?),
        };
        if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        let out = pc_discover_with(data, names, &opts)?;
        let mut notes = BTreeMap::new();
        notes.insert("n_tests".into(), Value::from(out.n_tests));
        notes.insert(
            "unresolved_edges".into(),
            Value::from(out.graph.undirected_edges().len()),
        );
        Ok(PluginOutput {
            matrix: out.graph.to_signed_matrix(),
            notes,
        })
    }
}

/// `direct_lingam`. Options: `prune_threshold` (default 0.05).
pub struct LingamPlugin;

impl DiscoveryPlugin for LingamPlugin {
    fn name(&self) -> &str {
        "direct_lingam"
    }

    fn run(&self, data: &DMatrix<f64>, names: &[String], options: &Options) -> Result<PluginOutput> {
        let threshold = opt_f64(options, "prune_threshold", lingam::DEFAULT_PRUNE_THRESHOLD)?;
        let fit = lingam::direct_lingam_with(data, names, threshold)?;
        let mut notes = BTreeMap::new();
        notes.insert("low_identifiability".into(), Value::from(fit.low_identifiability));
        notes.insert(
            "causal_order".into(),
            Value::from(
                fit.causal_order
                    .iter()
                    .map(|&i| names[i].clone())
                    .collect::<Vec<_>>(),
            ),
        );
        Ok(PluginOutput {
            matrix: fit.graph.to_signed_matrix(),
            notes,
        })
    }
}
