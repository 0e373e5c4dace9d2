//! Gadget construction, the leak loop, and the occurrence-count decoder.
//!
//! The gadget leaks one byte per pass over the comparison domain. For
//! every comparison value j it prepares the cache (flush the equal-path
//! line, touch the unequal-path line), then runs the core block
//! `training_rounds + 1` times through a pointer chain: the first
//! `training_rounds` loads walk controlled chain slots whose values can
//! never equal j, steering the branch predictor toward the unequal path;
//! the final load dereferences the protected secret address and faults.
//! The transiently forwarded secret then drives the compare: only when
//! secret == j does the branch resolve down the equal path, mispredicted,
//! and the two paths differ in the events they fire. Counter reads
//! bracket each probe execution; the value whose delta is the unique
//! singleton among the domain identifies the secret.

pub mod metrics;
pub mod sweep;

use serde::Serialize;
use thiserror::Error;

use crate::env::SimEnv;
use crate::isa::{InstrKind, InstructionSet, Program, ProgramBuilder};
use crate::pmu::PmuError;
use crate::rng::derive_seed;
use crate::sim::{run, ReadSample, RunOptions, SimError, SuppressionMode};

/// Register allocation used by the gadget builder.
mod regs {
    /// Walk / comparand register: holds the chain pointer, then the
    /// transiently forwarded secret.
    pub const WALK: u8 = 0;
    /// Comparison value j.
    pub const GUESS: u8 = 1;
    /// Unequal-path pointer (cached line).
    pub const NEQ_PTR: u8 = 2;
    /// Equal-path pointer (flushed line).
    pub const EQ_PTR: u8 = 3;
    /// Path-load destination.
    pub const SCRATCH: u8 = 4;
    /// Chain-slot address scratch.
    pub const CHAIN_ADDR: u8 = 5;
    /// Chain-slot value scratch.
    pub const CHAIN_VAL: u8 = 6;
    /// PMU read destination.
    pub const PMU_DST: u8 = 7;
}

/// The parameterized leak gadget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetSpec {
    /// Class id filling the unequal-path slot.
    pub unequal_slot: String,
    /// Class id filling the equal-path slot.
    pub equal_slot: String,
    pub training_rounds: u32,
    pub comparison_domain: u32,
    /// Probe address loaded on the equal path; flushed before each window.
    pub addr_eq: u64,
    /// Probe address loaded on the unequal path; touched before each window.
    pub addr_neq: u64,
    pub secret_addr: u64,
    pub suppression: SuppressionMode,
    /// Counter slots read by the measurement brackets.
    pub read_slots: Vec<u8>,
    /// Base of the training pointer chain.
    pub chain_base: u64,
}

impl Default for GadgetSpec {
    fn default() -> Self {
        Self {
            unequal_slot: "nop".to_string(),
            equal_slot: "nop".to_string(),
            training_rounds: 5,
            comparison_domain: 256,
            addr_eq: 0x3000,
            addr_neq: 0x2000,
            secret_addr: 0x10000,
            suppression: SuppressionMode::TsxLike,
            read_slots: vec![0],
            chain_base: 0x4000,
        }
    }
}

impl GadgetSpec {
    /// Controlled comparand values loaded during the training executions
    /// for window `j`. All are chain addresses above the byte range, so
    /// none can equal j; the slot addresses embed `(j+1) mod domain` in
    /// their low byte.
    pub fn trainer_comparands(&self, j: u32) -> Vec<u64> {
        let mut out = Vec::new();
        for m in 1..self.training_rounds {
            out.push(self.chain_slot(j, m));
        }
        if self.training_rounds >= 1 {
            out.push(self.secret_addr);
        }
        out
    }

    fn chain_slot(&self, j: u32, m: u32) -> u64 {
        let tag = ((j + 1) % self.comparison_domain) as u64;
        self.chain_base + 0x100 * m as u64 + tag
    }

    fn validate(&self, iset: &InstructionSet) -> Result<(), AttackError> {
        let bad = |msg: String| Err(AttackError::InvalidSpec(msg));
        if self.comparison_domain < 2
            || self.comparison_domain > 256
            || !self.comparison_domain.is_power_of_two()
        {
            return bad(format!(
                "comparison_domain must be a power of two in 2..=256, got {}",
                self.comparison_domain
            ));
        }
        if crate::sim::cache::CacheState::line_of(self.addr_eq)
            == crate::sim::cache::CacheState::line_of(self.addr_neq)
        {
            return bad("addr_eq and addr_neq must map to distinct cache lines".to_string());
        }
        if self.read_slots.is_empty() {
            return bad("at least one read slot is required".to_string());
        }
        let chain_end = self.chain_base + 0x100 * self.training_rounds.max(1) as u64 + 0x100;
        for (name, addr) in [("addr_eq", self.addr_eq), ("addr_neq", self.addr_neq)] {
            if addr >= self.chain_base && addr < chain_end {
                return bad(format!("{name} overlaps the training chain region"));
            }
        }
        if self.secret_addr >= self.chain_base && self.secret_addr < chain_end {
            return bad("secret_addr overlaps the training chain region".to_string());
        }
        for (slot_name, id) in [("unequal", &self.unequal_slot), ("equal", &self.equal_slot)] {
            match iset.lookup(id) {
                None => return bad(format!("{slot_name} slot class {id:?} not in instruction set")),
                Some(idx) => {
                    let kind = iset.get(idx).kind;
                    if kind != InstrKind::Trigger && kind != InstrKind::Nop {
                        return bad(format!(
                            "{slot_name} slot class {id:?} must be a trigger or nop, got {kind:?}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Micro-ops one run of the built gadget is expected to execute; used
    /// as the ambient-noise landing horizon.
    pub fn estimated_uops(&self, handler_uops: u32) -> u64 {
        let t = self.training_rounds as u64;
        let k = self.read_slots.len() as u64;
        let per_window = 6 + 3 * t            // prologue
            + (t + 1) * (k + 8)               // core-block executions
            + k                               // closing bracket
            + if self.suppression == SuppressionMode::SoftwareHandler {
                handler_uops as u64
            } else {
                0
            };
        per_window * self.comparison_domain as u64
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid gadget spec: {0}")]
    InvalidSpec(String),
    #[error("unknown event {0:?}")]
    UnknownEvent(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pmu(PmuError),
}

/// Build the leak program: one window per comparison value, each with
/// cache preparation, `training_rounds` trained core-block executions, a
/// faulting probe execution, and counter reads bracketing the probe.
pub fn build_gadget(iset: &InstructionSet, spec: &GadgetSpec) -> Result<Program, AttackError> {
    spec.validate(iset)?;
    let unequal = iset.lookup(&spec.unequal_slot).expect("validated");
    let equal = iset.lookup(&spec.equal_slot).expect("validated");
    let t = spec.training_rounds;

    let mut b = ProgramBuilder::new(iset);
    for j in 0..spec.comparison_domain {
        let core = format!("core_{j}");
        let eq = format!("eq_{j}");
        let join = format!("join_{j}");
        let cont = format!("cont_{j}");

        // Cache preparation: the equal-path line misses, the unequal-path
        // line hits.
        b.set_onfault(None);
        b.mov(regs::NEQ_PTR, spec.addr_neq);
        b.mov(regs::EQ_PTR, spec.addr_eq);
        b.clflush(regs::EQ_PTR);
        b.load(regs::SCRATCH, regs::NEQ_PTR);
        b.mov(regs::GUESS, j as u64);

        // Training chain: slot m holds the next slot's address; the last
        // slot holds the protected secret address. Walking it yields
        // training_rounds non-faulting core executions whose comparands
        // can never equal j, then one faulting probe execution.
        for m in 0..t {
            let next = if m + 1 < t {
                spec.chain_slot(j, m + 1)
            } else {
                spec.secret_addr
            };
            b.mov(regs::CHAIN_ADDR, spec.chain_slot(j, m));
            b.mov(regs::CHAIN_VAL, next);
            b.store(regs::CHAIN_ADDR, regs::CHAIN_VAL);
        }
        let start = if t == 0 {
            spec.secret_addr
        } else {
            spec.chain_slot(j, 0)
        };
        b.mov(regs::WALK, start);

        b.set_onfault(Some(&cont));
        b.label(&core);
        for &slot in &spec.read_slots {
            b.read_pmu(regs::PMU_DST, slot);
        }
        b.load(regs::WALK, regs::WALK);
        b.cmp(regs::WALK, regs::GUESS);
        b.je(&eq);
        // Unequal path: the predictor is trained here.
        b.push_class(unequal, crate::isa::Operands::None);
        b.load(regs::SCRATCH, regs::NEQ_PTR);
        b.jmp(&join);
        b.label(&eq);
        b.push_class(equal, crate::isa::Operands::None);
        b.load(regs::SCRATCH, regs::EQ_PTR);
        b.label(&join);
        b.fence();
        b.jmp(&core);
        b.label(&cont);
        for &slot in &spec.read_slots {
            b.read_pmu(regs::PMU_DST, slot);
        }
    }
    b.set_onfault(None);
    b.finish().map_err(|e| AttackError::InvalidSpec(e.to_string()))
}

/// Counter deltas observed for one pass over the comparison domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryTrace {
    pub deltas: Vec<u64>,
    pub round_index: u32,
}

impl RecoveryTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.deltas).expect("serializable")
    }
}

/// Outcome of decoding a single trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decode {
    Byte(u8),
    Inconclusive,
}

/// Why a leak produced no byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
pub enum DecodeFailure {
    #[error("no round produced a conclusive decode")]
    NoConclusiveRounds,
    #[error("majority vote tied")]
    Tie,
    #[error("counter could not be programmed")]
    CounterUnavailable,
    #[error("counter reads produced no usable samples")]
    MissingSamples,
}

/// Occurrence-count rule: the comparison value whose delta is the unique
/// singleton in the multiset of deltas is the secret. Anything else
/// (all-equal deltas, several singletons) is inconclusive.
pub fn decode_trace(trace: &RecoveryTrace) -> Decode {
    let mut sorted: Vec<u64> = trace.deltas.clone();
    sorted.sort_unstable();
    let mut singleton: Option<u64> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut runlen = 1;
        while i + runlen < sorted.len() && sorted[i + runlen] == sorted[i] {
            runlen += 1;
        }
        if runlen == 1 {
            if singleton.is_some() {
                return Decode::Inconclusive;
            }
            singleton = Some(sorted[i]);
        }
        i += runlen;
    }
    match singleton {
        Some(value) => {
            let index = trace
                .deltas
                .iter()
                .position(|&d| d == value)
                .expect("singleton value present");
            Decode::Byte(index as u8)
        }
        None => Decode::Inconclusive,
    }
}

/// Majority vote across rounds. Inconclusive rounds are discarded; the
/// winner must hold a strict plurality of the remainder.
pub fn majority_vote(decodes: &[Decode]) -> Result<u8, DecodeFailure> {
    let mut counts = [0u32; 256];
    let mut any = false;
    for d in decodes {
        if let Decode::Byte(b) = d {
            counts[*b as usize] += 1;
            any = true;
        }
    }
    if !any {
        return Err(DecodeFailure::NoConclusiveRounds);
    }
    let best = counts.iter().copied().max().unwrap();
    let winners: Vec<usize> = (0..256).filter(|&i| counts[i] == best).collect();
    if winners.len() == 1 {
        Ok(winners[0] as u8)
    } else {
        Err(DecodeFailure::Tie)
    }
}

/// Where the planted secret lives.
#[derive(Debug, Clone)]
pub struct SecretPlant {
    pub bytes: Vec<u8>,
    pub base: u64,
}

impl SecretPlant {
    pub fn single(byte: u8, base: u64) -> Self {
        Self {
            bytes: vec![byte],
            base,
        }
    }
}

/// Result of leaking one byte.
#[derive(Debug, Clone)]
pub struct LeakOutcome {
    pub decoded: Result<u8, DecodeFailure>,
    pub per_round: Vec<Decode>,
    pub traces: Vec<RecoveryTrace>,
    pub core_executions: u64,
    pub cycles: u64,
}

fn extract_trace(
    reads: &[ReadSample],
    slot: u8,
    windows: usize,
    brackets_per_window: usize,
    round_index: u32,
) -> Option<RecoveryTrace> {
    let values: Vec<u64> = reads
        .iter()
        .filter(|r| r.slot == slot)
        .map(|r| r.value)
        .collect();
    if values.len() != windows * brackets_per_window {
        return None;
    }
    let mut deltas = Vec::with_capacity(windows);
    for w in 0..windows {
        let base = w * brackets_per_window;
        let before = values[base + brackets_per_window - 2];
        let after = values[base + brackets_per_window - 1];
        deltas.push(after.saturating_sub(before));
    }
    Some(RecoveryTrace {
        deltas,
        round_index,
    })
}

/// Leak the byte at `spec.secret_addr` with `event_name` programmed on
/// the first read slot, over `rounds` gadget executions.
pub fn leak_byte(
    env: &SimEnv,
    spec: &GadgetSpec,
    event_name: &str,
    rounds: u32,
    plant: &SecretPlant,
) -> Result<LeakOutcome, AttackError> {
    if env.catalog.lookup(event_name).is_none() {
        return Err(AttackError::UnknownEvent(event_name.to_string()));
    }
    let program = build_gadget(&env.iset, spec)?;
    let stream = stream_tag(spec, event_name);
    leak_with_program(env, spec, &program, &[event_name], rounds, plant, stream).map(
        |mut outcomes| outcomes.pop().expect("one event requested"),
    )
}

fn stream_tag(spec: &GadgetSpec, event_name: &str) -> u64 {
    let mut h: u64 = 0xFEED_FACE;
    for b in event_name.bytes().chain(spec.unequal_slot.bytes()).chain(spec.equal_slot.bytes()) {
        h = h.wrapping_mul(0x100_0000_01B3).wrapping_add(b as u64);
    }
    h ^ spec.secret_addr
}

/// Batched leak: `events` are programmed on consecutive slots and decoded
/// from a shared set of runs. Returns one outcome per event.
pub(crate) fn leak_with_program(
    env: &SimEnv,
    spec: &GadgetSpec,
    program: &Program,
    events: &[&str],
    rounds: u32,
    plant: &SecretPlant,
    stream: u64,
) -> Result<Vec<LeakOutcome>, AttackError> {
    assert!(events.len() <= spec.read_slots.len());
    let windows = spec.comparison_domain as usize;
    let brackets = spec.training_rounds as usize + 2;
    let est = spec.estimated_uops(env.sim.handler_uops);

    let mut per_event_rounds: Vec<Vec<Decode>> = vec![Vec::new(); events.len()];
    let mut per_event_traces: Vec<Vec<RecoveryTrace>> = vec![Vec::new(); events.len()];
    let mut per_event_unavailable = vec![false; events.len()];
    let mut core_executions = 0u64;
    let mut cycles = 0u64;

    for round in 0..rounds {
        let mut pmu = env.counter_file(&[stream, round as u64]);
        for (slot, event) in events.iter().enumerate() {
            match pmu.program_counter(spec.read_slots[slot] as usize, event, &env.iset) {
                Ok(()) => {}
                Err(PmuError::EventDisabled(_)) => per_event_unavailable[slot] = true,
                Err(PmuError::UnknownEvent(name)) => {
                    return Err(AttackError::UnknownEvent(name));
                }
                Err(e) => return Err(AttackError::Pmu(e)),
            }
        }
        let mut state = env.attack_machine(&plant.bytes, plant.base);
        pmu.begin_run(est);
        let log = run(
            program,
            &mut state,
            &mut pmu,
            &env.iset,
            &env.sim,
            RunOptions {
                suppression: spec.suppression,
                collect_log: false,
            },
        )?;
        pmu.end_run();
        cycles += state.cycle;
        core_executions += windows as u64 * (spec.training_rounds as u64 + 1);

        for (i, _) in events.iter().enumerate() {
            if per_event_unavailable[i] {
                continue;
            }
            match extract_trace(&log.reads, spec.read_slots[i], windows, brackets, round) {
                Some(trace) => {
                    per_event_rounds[i].push(decode_trace(&trace));
                    per_event_traces[i].push(trace);
                }
                None => {
                    // Reads errored (disabled PMU or missing privilege).
                }
            }
        }
    }

    let outcomes = (0..events.len())
        .map(|i| {
            let decoded = if per_event_unavailable[i] {
                Err(DecodeFailure::CounterUnavailable)
            } else if per_event_rounds[i].is_empty() {
                Err(DecodeFailure::MissingSamples)
            } else {
                majority_vote(&per_event_rounds[i])
            };
            LeakOutcome {
                decoded,
                per_round: per_event_rounds[i].clone(),
                traces: std::mem::take(&mut per_event_traces[i]),
                core_executions,
                cycles,
            }
        })
        .collect();
    Ok(outcomes)
}

/// Leak every byte of the planted secret, one leak per byte. Bytes are
/// independent and run in parallel when `jobs != 1`.
pub fn leak_bytes(
    env: &SimEnv,
    spec: &GadgetSpec,
    event_name: &str,
    rounds: u32,
    plant: &SecretPlant,
    jobs: usize,
) -> Result<Vec<LeakOutcome>, AttackError> {
    use rayon::prelude::*;

    let indices: Vec<usize> = (0..plant.bytes.len()).collect();
    let work = |i: &usize| -> Result<LeakOutcome, AttackError> {
        let mut byte_spec = spec.clone();
        byte_spec.secret_addr = plant.base + *i as u64;
        let mut byte_env = env.clone();
        byte_env.seed = derive_seed(env.seed, &[*i as u64]);
        // Traces are dropped in bulk mode; callers wanting them leak one
        // byte at a time.
        leak_byte(&byte_env, &byte_spec, event_name, rounds, plant).map(|mut o| {
            o.traces = Vec::new();
            o
        })
    };

    if jobs == 1 {
        indices.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| indices.par_iter().map(work).collect())
    }
}
