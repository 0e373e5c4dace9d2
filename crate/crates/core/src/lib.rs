//! Deterministic microarchitecture simulator with a configurable PMU.
//!
//! Models how performance counters that record events from uncommitted
//! (transient) execution leak transiently loaded data: a branch-divergence
//! gadget encodes a secret byte into PMU events, an occurrence-count
//! decoder recovers it, a sweep engine discovers which counters are
//! usable, and switchable policies evaluate the countermeasures.

pub mod attack;
pub mod catalog;
pub mod config;
pub mod env;
pub mod isa;
pub mod mitigation;
pub mod pmu;
pub mod report;
pub mod rng;
pub mod sim;

pub use attack::{
    build_gadget, decode_trace, leak_byte, leak_bytes, majority_vote, Decode, DecodeFailure,
    GadgetSpec, LeakOutcome, RecoveryTrace,
};
pub use attack::metrics::Metrics;
pub use attack::sweep::{sweep, Scenario, SweepPlan, SweepReport, SweepRow};
pub use catalog::{
    load_event_catalog, load_instruction_set, load_mapping, Catalog, EventDef, EventTrigger,
    IngestError, IngestOptions, IngestStats, InstructionFilter, Persistence, StructuralKind,
};
pub use config::RunConfig;
pub use env::SimEnv;
pub use isa::{assemble, classify, render, InstrClass, InstrKind, InstructionSet, IsaError, Program};
pub use mitigation::{apply_policy, tee_launch_check, LaunchStatus, MitigationPolicy};
pub use pmu::{CounterFile, NoiseParams, PmuError, PmuPolicy};
pub use sim::{
    run, ExecutionLog, MachineState, RunOptions, SimConfig, SimError, Simulator, SuppressionMode,
};
