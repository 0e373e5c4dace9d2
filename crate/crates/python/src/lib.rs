//! Python bindings: load catalogs and instruction databases, run leaks
//! and sweeps, and evaluate mitigation policies from Python.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use pmuspill_core::attack::{leak_bytes, sweep::SweepPlan, GadgetSpec, SecretPlant};
use pmuspill_core::catalog::{
    load_event_catalog, load_instruction_set, load_mapping, IngestOptions, InstructionFilter,
};
use pmuspill_core::isa::SignatureAssignment;
use pmuspill_core::mitigation::{tee_launch_check, LaunchStatus, MitigationPolicy};
use pmuspill_core::pmu::{NoiseParams, PmuPolicy};
use pmuspill_core::sim::SuppressionMode;
use pmuspill_core::{Decode, Metrics, RecoveryTrace, SimEnv};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_policy(s: &str) -> PyResult<PmuPolicy> {
    match s.to_ascii_lowercase().as_str() {
        "vulnerable" => Ok(PmuPolicy::Vulnerable),
        "retire_only" => Ok(PmuPolicy::RetireOnly),
        "renamed" => Ok(PmuPolicy::Renamed),
        "disabled" => Ok(PmuPolicy::Disabled),
        other => Err(value_err(format!("unknown policy {other:?}"))),
    }
}

fn parse_suppression(s: &str) -> PyResult<SuppressionMode> {
    match s.to_ascii_lowercase().as_str() {
        "tsx_like" | "tsx" => Ok(SuppressionMode::TsxLike),
        "software_handler" | "software" => Ok(SuppressionMode::SoftwareHandler),
        other => Err(value_err(format!("unknown suppression {other:?}"))),
    }
}

/// One simulation environment: catalog + instruction set + policies.
#[pyclass]
struct Environment {
    env: SimEnv,
}

#[pymethods]
impl Environment {
    /// Load an environment from catalog and instruction database files.
    #[new]
    #[pyo3(signature = (catalog, instructions, augment=None, filter=None, mapping=None,
                        seed=0, noise=0.0, noise_burst=0.0, policy="vulnerable",
                        tee_gate=false, suppression="tsx_like",
                        signature_seed=42, signature_probability=0.15))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        catalog: PathBuf,
        instructions: PathBuf,
        augment: Option<PathBuf>,
        filter: Option<PathBuf>,
        mapping: Option<PathBuf>,
        seed: u64,
        noise: f64,
        noise_burst: f64,
        policy: &str,
        tee_gate: bool,
        suppression: &str,
        signature_seed: u64,
        signature_probability: f64,
    ) -> PyResult<Self> {
        let catalog = Arc::new(
            load_event_catalog(&catalog, augment.as_deref()).map_err(value_err)?,
        );
        let options = IngestOptions {
            filter: match filter {
                Some(p) => InstructionFilter::from_file(p).map_err(value_err)?,
                None => InstructionFilter::accept_all(),
            },
            mapping: match mapping {
                Some(p) => Some(load_mapping(p).map_err(value_err)?),
                None => None,
            },
            assignment: SignatureAssignment {
                attach_probability: signature_probability,
                seed: signature_seed,
            },
        };
        let (iset, _stats) =
            load_instruction_set(&instructions, &options, &catalog).map_err(value_err)?;
        let mut env = SimEnv::new(catalog, Arc::new(iset));
        env.seed = seed;
        env.noise = NoiseParams {
            p: noise,
            p_burst: noise_burst,
        };
        env.suppression = parse_suppression(suppression)?;
        let policy = MitigationPolicy {
            pmu_policy: parse_policy(policy)?,
            tee_gate,
            per_event_disable: Vec::new(),
        };
        pmuspill_core::mitigation::apply_policy(&mut env, policy).map_err(value_err)?;
        Ok(Self { env })
    }

    /// Number of catalog events loaded.
    fn event_count(&self) -> usize {
        self.env.catalog.len()
    }

    /// Number of ingested instruction classes.
    fn instruction_count(&self) -> usize {
        self.env.iset.ingested().count()
    }

    fn event_names(&self) -> Vec<String> {
        self.env
            .catalog
            .events()
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    #[pyo3(signature = (limit=None))]
    fn instruction_ids(&self, limit: Option<usize>) -> Vec<String> {
        let it = self.env.iset.ingested().map(|i| self.env.iset.get(i).id.clone());
        match limit {
            Some(n) => it.take(n).collect(),
            None => it.collect(),
        }
    }

    /// Switch the mitigation policy.
    #[pyo3(signature = (policy, tee_gate=false, per_event_disable=None))]
    fn set_policy(
        &mut self,
        policy: &str,
        tee_gate: bool,
        per_event_disable: Option<Vec<String>>,
    ) -> PyResult<()> {
        let policy = MitigationPolicy {
            pmu_policy: parse_policy(policy)?,
            tee_gate,
            per_event_disable: per_event_disable.unwrap_or_default(),
        };
        pmuspill_core::mitigation::apply_policy(&mut self.env, policy).map_err(value_err)
    }

    /// TEE launch check under the current policy: "ok" or "refused".
    fn tee_launch_check(&self) -> &'static str {
        match tee_launch_check(&self.env) {
            LaunchStatus::LaunchOk => "ok",
            LaunchStatus::Refused => "refused",
        }
    }

    /// Leak a planted secret. Returns a dict with recovered bytes
    /// (None for failures) and metrics.
    #[pyo3(signature = (secret, event="BR_MISP_EXEC.ALL_BRANCHES", rounds=10, jobs=1))]
    fn leak<'py>(
        &self,
        py: Python<'py>,
        secret: Vec<u8>,
        event: &str,
        rounds: u32,
        jobs: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        if secret.is_empty() {
            return Err(value_err("secret is empty"));
        }
        let spec = GadgetSpec {
            suppression: self.env.suppression,
            ..Default::default()
        };
        let plant = SecretPlant {
            bytes: secret.clone(),
            base: spec.secret_addr,
        };
        let outcomes =
            leak_bytes(&self.env, &spec, event, rounds, &plant, jobs).map_err(runtime_err)?;
        let metrics = Metrics::from_outcomes(&secret, &outcomes, self.env.sim.clock_hz);

        let recovered: Vec<Option<u8>> = outcomes.iter().map(|o| o.decoded.ok()).collect();
        let out = PyDict::new(py);
        out.set_item("recovered", recovered)?;
        out.set_item("correct", metrics.bytes_correct)?;
        out.set_item("wrong", metrics.bytes_wrong)?;
        out.set_item("failed", metrics.bytes_failed)?;
        out.set_item("error_rate", metrics.error_rate)?;
        out.set_item("executions_per_byte", metrics.executions_per_byte)?;
        out.set_item("cycles_per_byte", metrics.cycles_per_byte)?;
        out.set_item("throughput_bps", metrics.throughput_bps)?;
        Ok(out)
    }

    /// Sweep events x instructions for trigger pairs. Returns aggregated
    /// rows as dicts.
    #[pyo3(signature = (events=None, instructions=None, reps=10, scenario="both", jobs=0))]
    fn sweep<'py>(
        &self,
        py: Python<'py>,
        events: Option<Vec<String>>,
        instructions: Option<Vec<String>>,
        reps: u32,
        scenario: &str,
        jobs: usize,
    ) -> PyResult<Bound<'py, PyList>> {
        let scenarios = pmuspill_core::Scenario::parse(scenario)
            .ok_or_else(|| value_err(format!("bad scenario {scenario:?}")))?;
        let plan = SweepPlan {
            scenarios,
            reps,
            events: events.unwrap_or_default(),
            instructions: instructions.unwrap_or_default(),
            jobs,
            ..Default::default()
        };
        let report = pmuspill_core::sweep(&self.env, &plan).map_err(runtime_err)?;
        let rows = PyList::empty(py);
        for row in &report.rows {
            let d = PyDict::new(py);
            d.set_item("event", &row.event)?;
            d.set_item("category", &row.category)?;
            d.set_item("scenario", row.scenario.as_str())?;
            d.set_item("trigger_count", row.trigger_count)?;
            d.set_item("vulnerable", row.vulnerable)?;
            rows.append(d)?;
        }
        Ok(rows)
    }
}

/// Occurrence-count decode of one 256-delta trace. Returns the byte or
/// None when inconclusive.
#[pyfunction]
fn decode_trace(deltas: Vec<u64>) -> PyResult<Option<u8>> {
    let trace = RecoveryTrace {
        deltas,
        round_index: 0,
    };
    match pmuspill_core::decode_trace(&trace) {
        Decode::Byte(b) => Ok(Some(b)),
        Decode::Inconclusive => Ok(None),
    }
}

/// Majority vote over per-round decodes (None entries are inconclusive).
#[pyfunction]
fn majority_vote(decodes: Vec<Option<u8>>) -> Option<u8> {
    let decodes: Vec<Decode> = decodes
        .into_iter()
        .map(|d| match d {
            Some(b) => Decode::Byte(b),
            None => Decode::Inconclusive,
        })
        .collect();
    pmuspill_core::majority_vote(&decodes).ok()
}

#[pymodule]
fn pmuspill(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Environment>()?;
    m.add_function(wrap_pyfunction!(decode_trace, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    Ok(())
}
