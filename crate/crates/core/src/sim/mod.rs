//! Cycle-driven execution engine with branch prediction, transient
//! (post-fault and wrong-path) execution, architectural rollback and an
//! L1 data cache.
//!
//! Architectural state (registers, flag, memory, pc) is snapshotted on
//! entry to a transient region and restored bit-exactly on squash. Cache,
//! predictor and cycle counter persist across squashes: they model
//! microarchitectural state the hardware does not roll back.

pub mod cache;
pub mod predictor;
pub mod reference;

use std::collections::HashMap;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::StructuralKind;
use crate::isa::{BranchCond, FaultBehavior, InstrKind, InstructionSet, Operands, Program};
use crate::pmu::CounterFile;

pub use cache::{CacheOutcome, CacheState};
pub use predictor::PredictorState;

/// How exceptions raised by the measured code are suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionMode {
    /// Transaction-style abort: control transfers past the faulting
    /// region with zero extra instructions.
    TsxLike,
    /// OS signal handler: a fixed stub of architectural micro-ops runs
    /// before control transfers; its event emissions are constant per
    /// invocation.
    SoftwareHandler,
}

impl SuppressionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuppressionMode::TsxLike => "tsx_like",
            SuppressionMode::SoftwareHandler => "software_handler",
        }
    }
}

/// Simulator tuning knobs. Defaults model the experiment machine.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Transient window: micro-ops that may execute past a fault.
    pub transient_window: u32,
    /// Micro-ops executed down a mispredicted path before resolution.
    pub wrong_path_depth: u32,
    /// Global cycle cap; exceeding it means an architectural runaway loop.
    pub cycle_cap: u64,
    pub slots: usize,
    /// Initial 2-bit counter value for unseen branches.
    pub predictor_init: u8,
    /// Forward zero instead of the true value on faulting loads
    /// (patched-hardware model; the attack must fail).
    pub forward_zero: bool,
    pub miss_penalty: u64,
    pub fetch_stall_cycles: u64,
    pub mispredict_recovery_cycles: u64,
    pub fault_recovery_cycles: u64,
    pub resteer_cycles: u64,
    pub mispredict_stall_cycles: u64,
    pub squash_stall_cycles: u64,
    pub handler_uops: u32,
    pub clock_hz: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            transient_window: 64,
            wrong_path_depth: 3,
            cycle_cap: 50_000_000,
            slots: crate::pmu::DEFAULT_SLOTS,
            predictor_init: predictor::WEAK_NOT_TAKEN,
            forward_zero: false,
            miss_penalty: 12,
            fetch_stall_cycles: 3,
            mispredict_recovery_cycles: 12,
            fault_recovery_cycles: 24,
            resteer_cycles: 8,
            mispredict_stall_cycles: 4,
            squash_stall_cycles: 6,
            handler_uops: 12,
            clock_hz: 3.4e9,
        }
    }
}

/// Sparse byte-addressed memory with a rollback journal for transient
/// writes.
#[derive(Debug, Clone, Default)]
pub struct SparseMem {
    map: HashMap<u64, u8>,
    journal: Vec<(u64, Option<u8>)>,
    journaling: bool,
}

impl SparseMem {
    pub fn read_u8(&self, addr: u64) -> u8 {
        *self.map.get(&addr).unwrap_or(&0)
    }

    pub fn write_u8(&mut self, addr: u64, value: u8) {
        if self.journaling {
            self.journal.push((addr, self.map.get(&addr).copied()));
        }
        self.map.insert(addr, value);
    }

    pub fn read_u64(&self, addr: u64) -> u64 {
        let mut out = 0u64;
        for i in 0..8 {
            out |= (self.read_u8(addr.wrapping_add(i)) as u64) << (i * 8);
        }
        out
    }

    pub fn write_u64(&mut self, addr: u64, value: u64) {
        for i in 0..8 {
            self.write_u8(addr.wrapping_add(i), (value >> (i * 8)) as u8);
        }
    }

    fn journal_mark(&self) -> usize {
        self.journal.len()
    }

    fn rollback_to(&mut self, mark: usize) {
        while self.journal.len() > mark {
            let (addr, old) = self.journal.pop().expect("journal entry");
            match old {
                Some(v) => {
                    self.map.insert(addr, v);
                }
                None => {
                    self.map.remove(&addr);
                }
            }
        }
    }

    fn set_journaling(&mut self, on: bool) {
        self.journaling = on;
        if !on {
            self.journal.clear();
        }
    }

    /// Deep snapshot of contents, for oracle comparisons in tests.
    pub fn snapshot_map(&self) -> std::collections::BTreeMap<u64, u8> {
        self.map
            .iter()
            .filter(|&(_, &v)| v != 0)
            .map(|(&k, &v)| (k, v))
            .collect()
    }
}

/// Execution mode of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Architectural,
    Transient,
}

/// Architectural and microarchitectural simulator state.
#[derive(Debug, Clone)]
pub struct MachineState {
    pub regs: [u64; crate::isa::NUM_REGS],
    pub flag_eq: bool,
    pub pc: u32,
    pub mem: SparseMem,
    pub secret_region: Range<u64>,
    pub tee_protection: bool,
    pub cache: CacheState,
    pub predictor: PredictorState,
    pub transient_budget: u32,
    pub cycle: u64,
}

impl MachineState {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            regs: [0; crate::isa::NUM_REGS],
            flag_eq: false,
            pc: 0,
            mem: SparseMem::default(),
            secret_region: 0..0,
            tee_protection: true,
            cache: CacheState::new(),
            predictor: PredictorState::new(cfg.predictor_init),
            transient_budget: cfg.transient_window,
            cycle: 0,
        }
    }

    fn is_protected(&self, addr: u64) -> bool {
        self.tee_protection && self.secret_region.contains(&addr)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cycle cap of {cap} exceeded: architectural runaway loop")]
    BudgetExhausted { cap: u64 },
    #[error("squash requested in architectural mode")]
    IllegalSquash,
}

/// One architectural PMU read observed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReadSample {
    pub slot: u8,
    pub value: u64,
    pub cycle: u64,
    pub uop_index: u64,
}

/// One executed micro-op, for the JSON-lines log.
#[derive(Debug, Clone, Serialize)]
pub struct UopRecord {
    pub index: u64,
    pub pc: u32,
    pub kind: String,
    pub mode: ExecMode,
    pub wrong_path: bool,
    pub events: Vec<(String, u64)>,
    pub cycle: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub read: Option<ReadSample>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub uops: u64,
    pub faults: u64,
    pub squashes: u64,
    pub mispredicts: u64,
    pub handler_invocations: u64,
}

/// Result of a run: architectural PMU reads (always collected) and the
/// full per-uop log when requested.
#[derive(Debug, Default)]
pub struct ExecutionLog {
    pub records: Vec<UopRecord>,
    pub reads: Vec<ReadSample>,
    pub stats: RunStats,
}

impl ExecutionLog {
    /// Export as JSON lines, one record per retired or squashed micro-op.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("serializable record"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub suppression: SuppressionMode,
    pub collect_log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            suppression: SuppressionMode::TsxLike,
            collect_log: false,
        }
    }
}

struct Snapshot {
    regs: [u64; crate::isa::NUM_REGS],
    flag_eq: bool,
    pc: u32,
    journal_mark: usize,
}

enum Frame {
    Fault {
        snapshot: Snapshot,
        continuation: Option<u32>,
    },
    WrongPath {
        snapshot: Snapshot,
        resume_pc: u32,
        remaining: u32,
    },
}

/// The execution engine. Borrows the machine, PMU and program for the
/// duration of one run.
pub struct Simulator<'a> {
    program: &'a Program,
    iset: &'a InstructionSet,
    cfg: &'a SimConfig,
    opts: RunOptions,
    state: &'a mut MachineState,
    pmu: &'a mut CounterFile,
    frames: Vec<Frame>,
    fetch_stall: bool,
    log: ExecutionLog,
    scratch_events: Vec<(StructuralKind, u64)>,
}

/// Execute `program` to completion. Deterministic given (program, state,
/// pmu policy and seed).
pub fn run(
    program: &Program,
    state: &mut MachineState,
    pmu: &mut CounterFile,
    iset: &InstructionSet,
    cfg: &SimConfig,
    opts: RunOptions,
) -> Result<ExecutionLog, SimError> {
    let mut sim = Simulator::new(program, state, pmu, iset, cfg, opts);
    sim.run_to_end()?;
    Ok(sim.into_log())
}

impl<'a> Simulator<'a> {
    pub fn new(
        program: &'a Program,
        state: &'a mut MachineState,
        pmu: &'a mut CounterFile,
        iset: &'a InstructionSet,
        cfg: &'a SimConfig,
        opts: RunOptions,
    ) -> Self {
        state.transient_budget = cfg.transient_window;
        Self {
            program,
            iset,
            cfg,
            opts,
            state,
            pmu,
            frames: Vec::new(),
            fetch_stall: false,
            log: ExecutionLog::default(),
            scratch_events: Vec::new(),
        }
    }

    pub fn into_log(self) -> ExecutionLog {
        self.log
    }

    #[inline]
    fn transient(&self) -> bool {
        !self.frames.is_empty()
    }

    #[inline]
    fn in_wrong_path(&self) -> bool {
        matches!(self.frames.last(), Some(Frame::WrongPath { .. }))
    }

    pub fn mode(&self) -> ExecMode {
        if self.transient() {
            ExecMode::Transient
        } else {
            ExecMode::Architectural
        }
    }

    #[inline]
    fn emit(&mut self, kind: StructuralKind, magnitude: u64, transient: bool) {
        self.pmu.on_structural(kind, magnitude, transient);
        if self.opts.collect_log {
            self.scratch_events.push((kind, magnitude));
        }
    }

    fn take_snapshot(&self) -> Snapshot {
        Snapshot {
            regs: self.state.regs,
            flag_eq: self.state.flag_eq,
            pc: self.state.pc,
            journal_mark: self.state.mem.journal_mark(),
        }
    }

    fn restore_snapshot(&mut self, snapshot: &Snapshot) {
        self.state.regs = snapshot.regs;
        self.state.flag_eq = snapshot.flag_eq;
        self.state.pc = snapshot.pc;
        self.state.mem.rollback_to(snapshot.journal_mark);
    }

    fn enter_region(&mut self, frame: Frame) {
        if self.frames.is_empty() {
            self.state.mem.set_journaling(true);
            self.state.transient_budget = self.cfg.transient_window;
        }
        self.frames.push(frame);
    }

    fn leave_regions_check(&mut self) {
        if self.frames.is_empty() {
            self.state.mem.set_journaling(false);
            self.state.transient_budget = self.cfg.transient_window;
        }
    }

    /// Squash the innermost fault region: restore the snapshot, notify the
    /// PMU, charge recovery, and transfer control per the suppression
    /// mode. Errors when no transient region is active.
    pub fn squash(&mut self) -> Result<(), SimError> {
        match self.frames.pop() {
            Some(Frame::Fault {
                snapshot,
                continuation,
            }) => {
                self.restore_snapshot(&snapshot);
                self.pmu.on_squash();
                self.log.stats.squashes += 1;
                let transient_after = self.transient();
                self.emit(
                    StructuralKind::RecoveryCycles,
                    self.cfg.fault_recovery_cycles,
                    transient_after,
                );
                self.emit(
                    StructuralKind::ResteerCycles,
                    self.cfg.resteer_cycles,
                    transient_after,
                );
                self.emit(
                    StructuralKind::ResourceStallCycles,
                    self.cfg.squash_stall_cycles,
                    transient_after,
                );
                self.state.cycle += self.cfg.fault_recovery_cycles;
                self.fetch_stall = true;
                self.leave_regions_check();
                if self.opts.suppression == SuppressionMode::SoftwareHandler {
                    self.run_handler_stub();
                }
                self.state.pc = continuation.unwrap_or(self.program.len() as u32);
                Ok(())
            }
            Some(frame) => {
                // Not a fault region; put it back.
                self.frames.push(frame);
                Err(SimError::IllegalSquash)
            }
            None => Err(SimError::IllegalSquash),
        }
    }

    /// Resolve the innermost wrong-path region: discard its effects and
    /// resteer to the actual branch target.
    fn resolve_wrong_path(&mut self) {
        if let Some(Frame::WrongPath {
            snapshot,
            resume_pc,
            ..
        }) = self.frames.pop()
        {
            self.restore_snapshot(&snapshot);
            self.pmu.on_squash();
            let transient_after = self.transient();
            self.emit(
                StructuralKind::RecoveryCycles,
                self.cfg.mispredict_recovery_cycles,
                transient_after,
            );
            self.emit(
                StructuralKind::ResteerCycles,
                self.cfg.resteer_cycles,
                transient_after,
            );
            self.emit(
                StructuralKind::ResourceStallCycles,
                self.cfg.mispredict_stall_cycles,
                transient_after,
            );
            self.state.cycle += self.cfg.mispredict_recovery_cycles;
            self.fetch_stall = true;
            self.state.pc = resume_pc;
            self.leave_regions_check();
        }
    }

    /// Fixed exception-handler stub executed architecturally under
    /// software suppression. Emissions are constant per invocation.
    fn run_handler_stub(&mut self) {
        self.log.stats.handler_invocations += 1;
        for _ in 0..self.cfg.handler_uops {
            let stalled = std::mem::take(&mut self.fetch_stall);
            if stalled {
                self.emit(StructuralKind::IcacheFetchStall, self.cfg.fetch_stall_cycles, false);
                self.state.cycle += self.cfg.fetch_stall_cycles;
            } else {
                self.emit(StructuralKind::IcacheFetchHit, 1, false);
            }
            self.emit(StructuralKind::Cycles, 1, false);
            self.emit(StructuralKind::UopsRetired, 1, false);
            self.emit(StructuralKind::InstructionsRetired, 1, false);
            self.state.cycle += 1;
            self.pmu.tick_uop();
            self.log.stats.uops += 1;
            if self.opts.collect_log {
                let events = self.drain_events();
                self.log.records.push(UopRecord {
                    index: self.log.stats.uops,
                    pc: self.state.pc,
                    kind: "handler".to_string(),
                    mode: ExecMode::Architectural,
                    wrong_path: false,
                    events,
                    cycle: self.state.cycle,
                    read: None,
                });
            }
        }
    }

    fn drain_events(&mut self) -> Vec<(String, u64)> {
        self.scratch_events
            .drain(..)
            .map(|(k, m)| (k.to_string(), m))
            .collect()
    }

    fn data_access(&mut self, addr: u64, transient: bool) {
        match self.state.cache.access(addr) {
            CacheOutcome::Hit => self.emit(StructuralKind::L1dHit, 1, transient),
            CacheOutcome::Miss => {
                self.emit(StructuralKind::L1dMiss, 1, transient);
                self.emit(StructuralKind::L1dMissCycles, self.cfg.miss_penalty, transient);
                self.emit(
                    StructuralKind::ResourceStallCycles,
                    self.cfg.miss_penalty,
                    transient,
                );
                self.state.cycle += self.cfg.miss_penalty;
            }
        }
    }

    /// Execute one scheduling step: either an unwind action (squash or
    /// wrong-path resolution) or one micro-op. Returns false once the
    /// program has halted.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.state.cycle > self.cfg.cycle_cap {
            return Err(SimError::BudgetExhausted {
                cap: self.cfg.cycle_cap,
            });
        }

        // Program end: unwind transient regions, then halt.
        if self.state.pc as usize >= self.program.len() {
            if self.in_wrong_path() {
                self.resolve_wrong_path();
                return Ok(true);
            }
            if self.transient() {
                self.squash().expect("fault frame present");
                return Ok(true);
            }
            return Ok(false);
        }

        // Transient budget exhaustion squashes the fault region.
        if self.transient() && self.state.transient_budget == 0 {
            if self.in_wrong_path() {
                self.resolve_wrong_path();
            } else {
                self.squash().expect("fault frame present");
            }
            return Ok(true);
        }

        let instr = self.program.instrs[self.state.pc as usize];
        let class = self.iset.get(instr.class);

        // A fence bounds speculation: a wrong path resolves at it and a
        // post-fault region squashes at it.
        if class.kind == InstrKind::Fence && self.transient() {
            if self.in_wrong_path() {
                self.resolve_wrong_path();
            } else {
                self.squash().expect("fault frame present");
            }
            return Ok(true);
        }

        self.step_instr(instr.class, instr.ops)?;
        Ok(true)
    }

    /// Execute until the program halts. Returns an error only for
    /// architectural runaway loops.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.step()? {}
        Ok(())
    }

    /// Peek at the instruction the next step would issue.
    pub fn next_instr(&self) -> Option<crate::isa::Instr> {
        self.program.instrs.get(self.state.pc as usize).copied()
    }

    /// Read-only view of the machine mid-run.
    pub fn machine(&self) -> &MachineState {
        self.state
    }

    /// Read-only view of the counter file mid-run.
    pub fn pmu(&self) -> &CounterFile {
        self.pmu
    }

    fn step_instr(&mut self, class_idx: u32, ops: Operands) -> Result<(), SimError> {
        let class = self.iset.get(class_idx);
        let pc = self.state.pc;
        let pre_transient = self.transient();
        let wrong_path = self.in_wrong_path();
        let frames_before = self.frames.len();
        let is_read = class.kind == InstrKind::ReadPmu;

        // Fetch. PMU reads fire no monitored events at all.
        let stalled = std::mem::take(&mut self.fetch_stall);
        if !is_read {
            if stalled {
                self.emit(
                    StructuralKind::IcacheFetchStall,
                    self.cfg.fetch_stall_cycles,
                    pre_transient,
                );
                self.state.cycle += self.cfg.fetch_stall_cycles;
            } else {
                self.emit(StructuralKind::IcacheFetchHit, 1, pre_transient);
            }
        }

        let mut next_pc = pc + 1;
        let mut read_sample = None;

        match (class.kind, ops) {
            (InstrKind::Nop, _) | (InstrKind::Trigger, _) => {}
            (InstrKind::MovImm, Operands::RegImm { reg, imm }) => {
                self.state.regs[reg as usize] = imm;
            }
            (InstrKind::LoadIndirect, Operands::RegMem { reg, addr_reg }) => {
                let addr = self.state.regs[addr_reg as usize];
                if self.state.is_protected(addr) && !pre_transient {
                    // Privileged fault: subsequent micro-ops run
                    // transiently with the loaded value forwarded. The
                    // leak primitive is byte granular: one zero-extended
                    // byte crosses the protection boundary per access.
                    self.log.stats.faults += 1;
                    let continuation = self.program.fault_continuation(pc);
                    let snapshot = self.take_snapshot();
                    self.enter_region(Frame::Fault {
                        snapshot,
                        continuation,
                    });
                    self.data_access(addr, true);
                    let value = if self.cfg.forward_zero {
                        0
                    } else {
                        self.state.mem.read_u8(addr) as u64
                    };
                    self.state.regs[reg as usize] = value;
                } else {
                    let transient = pre_transient;
                    self.data_access(addr, transient);
                    let value = if self.state.is_protected(addr) {
                        if self.cfg.forward_zero {
                            0
                        } else {
                            self.state.mem.read_u8(addr) as u64
                        }
                    } else {
                        self.state.mem.read_u64(addr)
                    };
                    self.state.regs[reg as usize] = value;
                }
            }
            (InstrKind::Store, Operands::MemReg { addr_reg, reg }) => {
                let addr = self.state.regs[addr_reg as usize];
                if self.state.is_protected(addr) && !pre_transient {
                    self.log.stats.faults += 1;
                    let continuation = self.program.fault_continuation(pc);
                    let snapshot = self.take_snapshot();
                    self.enter_region(Frame::Fault {
                        snapshot,
                        continuation,
                    });
                    // The store never reaches memory, architecturally or
                    // transiently.
                } else {
                    self.data_access(addr, pre_transient);
                    let value = self.state.regs[reg as usize];
                    self.state.mem.write_u64(addr, value);
                }
            }
            (InstrKind::CmpReg, Operands::RegReg { a, b }) => {
                self.state.flag_eq = self.state.regs[a as usize] == self.state.regs[b as usize];
            }
            (InstrKind::Jcc, Operands::Target { index }) => {
                let want_equal = class.cond == Some(BranchCond::Equal);
                let taken = self.state.flag_eq == want_equal;
                let predicted = self.state.predictor.predict(pc);
                self.state.predictor.update(pc, taken);
                self.emit(StructuralKind::BranchExecuted, 1, pre_transient);
                if taken {
                    self.emit(StructuralKind::BranchTaken, 1, pre_transient);
                } else {
                    self.emit(StructuralKind::BranchNontaken, 1, pre_transient);
                }
                let actual_target = if taken { index } else { pc + 1 };
                if predicted == taken || wrong_path {
                    // Correct prediction, or a branch inside an already
                    // wrong path: follow the resolved direction.
                    next_pc = actual_target;
                } else {
                    self.emit(StructuralKind::BranchMispredicted, 1, pre_transient);
                    self.log.stats.mispredicts += 1;
                    if self.cfg.wrong_path_depth == 0 {
                        // Resolution before any wrong-path issue.
                        self.emit(
                            StructuralKind::RecoveryCycles,
                            self.cfg.mispredict_recovery_cycles,
                            pre_transient,
                        );
                        self.emit(
                            StructuralKind::ResteerCycles,
                            self.cfg.resteer_cycles,
                            pre_transient,
                        );
                        self.state.cycle += self.cfg.mispredict_recovery_cycles;
                        self.fetch_stall = true;
                        next_pc = actual_target;
                    } else {
                        let predicted_target = if predicted { index } else { pc + 1 };
                        let snapshot = self.take_snapshot();
                        self.enter_region(Frame::WrongPath {
                            snapshot,
                            resume_pc: actual_target,
                            remaining: self.cfg.wrong_path_depth,
                        });
                        next_pc = predicted_target;
                    }
                }
            }
            (InstrKind::Jmp, Operands::Target { index }) => {
                next_pc = index;
            }
            (InstrKind::Clflush, Operands::Mem { addr_reg }) => {
                let addr = self.state.regs[addr_reg as usize];
                self.state.cache.flush(addr);
            }
            (InstrKind::Fence, _) => {
                // Architectural fence: serialization only.
                debug_assert!(!pre_transient, "transient fences are handled by the loop");
            }
            (InstrKind::ReadPmu, Operands::ReadPmu { reg, slot }) => {
                if pre_transient {
                    // Transient reads observe the counter without
                    // accruing baseline or ambient noise and leave no
                    // architectural sample.
                    self.state.regs[reg as usize] = self.pmu.peek(slot as usize).unwrap_or(0);
                } else {
                    match self.pmu.read(slot as usize) {
                        Ok(value) => {
                            self.state.regs[reg as usize] = value;
                            let sample = ReadSample {
                                slot,
                                value,
                                cycle: self.state.cycle,
                                uop_index: self.log.stats.uops,
                            };
                            self.log.reads.push(sample);
                            read_sample = Some(sample);
                        }
                        Err(_) => {
                            self.state.regs[reg as usize] = 0;
                        }
                    }
                }
            }
            (kind, ops) => {
                unreachable!("operand shape {ops:?} invalid for {kind:?} (assembler enforces)")
            }
        }

        // Privileged-fault trigger classes fault at issue, like the
        // protected loads: they enter a transient region covering
        // themselves and the following micro-ops.
        if class.fault == FaultBehavior::PrivilegedFault && !pre_transient {
            self.log.stats.faults += 1;
            let continuation = self.program.fault_continuation(pc);
            let snapshot = self.take_snapshot();
            self.enter_region(Frame::Fault {
                snapshot,
                continuation,
            });
        }

        // Class-level PMU delivery and bookkeeping. A class that faulted
        // this step is already transient for its own emissions. Wrong-path
        // micro-ops are canceled at branch resolution before their
        // instruction-class events deliver; their structural footprint
        // (fetches, branches, cycles) remains.
        let post_transient = self.transient();
        if !is_read {
            if !wrong_path {
                self.pmu
                    .on_instruction(class_idx, &class.signature, post_transient);
            }
            self.emit(StructuralKind::Cycles, class.latency as u64, post_transient);
            if !post_transient {
                self.emit(StructuralKind::UopsRetired, 1, false);
                self.emit(StructuralKind::InstructionsRetired, 1, false);
            }
        }
        self.state.cycle += class.latency as u64;
        self.pmu.tick_uop();
        self.log.stats.uops += 1;

        if self.opts.collect_log {
            let events = self.drain_events();
            self.log.records.push(UopRecord {
                index: self.log.stats.uops,
                pc,
                kind: class.id.clone(),
                mode: if post_transient {
                    ExecMode::Transient
                } else {
                    ExecMode::Architectural
                },
                wrong_path,
                events,
                cycle: self.state.cycle,
                read: read_sample,
            });
        }

        self.state.pc = next_pc;

        // Budget and wrong-path accounting for the micro-op just executed.
        if self.transient() {
            self.state.transient_budget = self.state.transient_budget.saturating_sub(1);
            // The micro-op that opened a region (a mispredicted branch or
            // a faulting access) does not consume wrong-path issue slots;
            // only micro-ops issued after it do.
            let opened_region = self.frames.len() > frames_before;
            if !opened_region {
                if let Some(Frame::WrongPath { remaining, .. }) = self.frames.last_mut() {
                    *remaining = remaining.saturating_sub(1);
                    if *remaining == 0 {
                        self.resolve_wrong_path();
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, EventDef, EventTrigger, Persistence};
    use crate::isa::{assemble, InstructionSet};
    use crate::pmu::{NoiseParams, PmuPolicy};
    use std::sync::Arc;

    fn catalog() -> Arc<Catalog> {
        let mk = |name: &str, code: u8, umask: u8, kind: StructuralKind, persist: Persistence| EventDef {
            name: name.into(),
            category: String::new(),
            event_code: code,
            umask,
            description: String::new(),
            trigger: EventTrigger::Structural(kind),
            persistence: persist,
            baseline: 0,
            provenance: "test".into(),
        };
        Arc::new(
            Catalog::from_events(vec![
                mk("MISP", 0x89, 0xFF, StructuralKind::BranchMispredicted, Persistence::SpeculativeCounted),
                mk("NONTAKEN", 0x88, 0x41, StructuralKind::BranchNontaken, Persistence::SpeculativeCounted),
                mk("RETIRED", 0xC0, 0x00, StructuralKind::InstructionsRetired, Persistence::RetirementCounted),
            ])
            .unwrap(),
        )
    }

    fn setup(policy: PmuPolicy) -> (InstructionSet, SimConfig, MachineState, CounterFile) {
        let iset = InstructionSet::base();
        let cfg = SimConfig::default();
        let state = MachineState::new(&cfg);
        let mut pmu = CounterFile::new(catalog(), cfg.slots, policy, NoiseParams::silent(), 3);
        pmu.program_counter(0, "MISP", &iset).unwrap();
        (iset, cfg, state, pmu)
    }

    #[test]
    fn single_nop_advances_pc_and_cycle_only() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        let program = assemble("nop", &iset).unwrap();
        let before_regs = state.regs;
        let log = run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default()).unwrap();
        assert_eq!(state.pc, 1);
        assert!(state.cycle > 0);
        assert_eq!(state.regs, before_regs);
        assert_eq!(log.stats.uops, 1);
        assert_eq!(pmu.read(0).unwrap(), 0);
    }

    #[test]
    fn faulting_load_rolls_back_architectural_state() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        state.secret_region = 0x10000..0x10100;
        state.mem.write_u64(0x10000, 0x41);
        let src = "
            mov r3, 7
            mov r1, 0x10000
            .onfault DONE
            load r2, [r1]
            mov r3, 9
            store [r1], r3
            fence
            DONE: nop
        ";
        let program = assemble(src, &iset).unwrap();
        let log = run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions {
            collect_log: true,
            ..Default::default()
        })
        .unwrap();
        // r3 was transiently set to 9 and must be restored to 7; r2 must
        // not retain the forwarded secret.
        assert_eq!(state.regs[3], 7);
        assert_eq!(state.regs[2], 0);
        assert_eq!(log.stats.faults, 1);
        assert_eq!(log.stats.squashes, 1);
        // The transient store never became architectural.
        assert_eq!(state.mem.read_u64(0x10000), 0x41);
        // But the transient micro-ops did execute.
        let transient_movs = log
            .records
            .iter()
            .filter(|r| r.kind == "mov" && r.mode == ExecMode::Transient)
            .count();
        assert_eq!(transient_movs, 1);
    }

    #[test]
    fn transient_cache_fill_survives_squash() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        state.secret_region = 0x10000..0x10100;
        let src = "
            mov r1, 0x10000
            mov r4, 0x2000
            .onfault DONE
            load r2, [r1]
            load r3, [r4]
            fence
            DONE: nop
        ";
        let program = assemble(src, &iset).unwrap();
        run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default()).unwrap();
        // 0x2000 was touched only transiently, yet remains cached.
        assert!(state.cache.contains(0x2000));
    }

    #[test]
    fn untrained_taken_biased_predictor_executes_equal_path_transiently() {
        let (iset, mut cfg, _, mut pmu) = setup(PmuPolicy::Vulnerable);
        cfg.predictor_init = predictor::STRONG_TAKEN;
        let mut state = MachineState::new(&cfg);
        // Unequal operands: je must fall through, but the taken-biased
        // predictor speculates into the equal path first.
        let src = "
            mov r1, 1
            mov r2, 2
            cmp r1, r2
            je EQ
            nop
            jmp END
            EQ: mov r5, 0xEE
            nop
            END: nop
        ";
        let program = assemble(src, &iset).unwrap();
        let log = run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions {
            collect_log: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(log.stats.mispredicts, 1);
        let wrong = log
            .records
            .iter()
            .find(|r| r.wrong_path && r.kind == "mov")
            .expect("equal-path mov executed on the wrong path");
        assert_eq!(wrong.mode, ExecMode::Transient);
        // Architecturally the write never happened.
        assert_eq!(state.regs[5], 0);
        assert_eq!(pmu.read(0).unwrap(), 1);
    }

    #[test]
    fn retire_only_policy_sees_no_transient_counts() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::RetireOnly);
        state.secret_region = 0x10000..0x10100;
        state.mem.write_u64(0x10000, 5);
        // Mispredict inside the transient window.
        let src = "
            mov r1, 0x10000
            mov r2, 5
            .onfault DONE
            load r3, [r1]
            cmp r3, r2
            je EQ
            nop
            jmp J
            EQ: nop
            J: fence
            DONE: nop
        ";
        let program = assemble(src, &iset).unwrap();
        let before = pmu.read(0).unwrap();
        run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default()).unwrap();
        assert_eq!(pmu.read(0).unwrap(), before);
    }

    #[test]
    fn architectural_infinite_loop_hits_cycle_cap() {
        let (iset, mut cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        cfg.cycle_cap = 10_000;
        let program = assemble("L: jmp L", &iset).unwrap();
        let err = run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default())
            .unwrap_err();
        assert_eq!(err, SimError::BudgetExhausted { cap: 10_000 });
    }

    #[test]
    fn fault_without_continuation_halts() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        state.secret_region = 0x100..0x200;
        let src = "
            mov r1, 0x100
            load r2, [r1]
            mov r3, 1
        ";
        let program = assemble(src, &iset).unwrap();
        run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default()).unwrap();
        // mov r3 ran only transiently; the program halted at squash.
        assert_eq!(state.regs[3], 0);
    }

    #[test]
    fn software_handler_adds_constant_architectural_uops() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        state.secret_region = 0x100..0x200;
        let src = "
            mov r1, 0x100
            .onfault DONE
            load r2, [r1]
            fence
            DONE: nop
        ";
        let program = assemble(src, &iset).unwrap();
        let tsx = run(
            &program,
            &mut state.clone(),
            &mut pmu.clone(),
            &iset,
            &cfg,
            RunOptions {
                suppression: SuppressionMode::TsxLike,
                collect_log: false,
            },
        )
        .unwrap();
        let sw = run(
            &program,
            &mut state,
            &mut pmu,
            &iset,
            &cfg,
            RunOptions {
                suppression: SuppressionMode::SoftwareHandler,
                collect_log: false,
            },
        )
        .unwrap();
        assert_eq!(sw.stats.handler_invocations, 1);
        assert_eq!(sw.stats.uops, tsx.stats.uops + cfg.handler_uops as u64);
    }

    #[test]
    fn budget_exhaustion_squashes_transient_loop() {
        let (iset, cfg, mut state, mut pmu) = setup(PmuPolicy::Vulnerable);
        state.secret_region = 0x100..0x200;
        // The transient region loops; the window budget must end it.
        let src = "
            mov r1, 0x100
            .onfault DONE
            load r2, [r1]
            L: jmp L
            DONE: nop
        ";
        let program = assemble(src, &iset).unwrap();
        let log = run(&program, &mut state, &mut pmu, &iset, &cfg, RunOptions::default()).unwrap();
        assert_eq!(log.stats.squashes, 1);
        assert_eq!(state.pc as usize, program.len());
    }

    #[test]
    fn deterministic_replay() {
        let (iset, cfg, state, pmu) = setup(PmuPolicy::Vulnerable);
        let mut s1 = state.clone();
        let mut s2 = state;
        let mut p1 = pmu.clone();
        let mut p2 = pmu;
        let src = "
            mov r1, 3
            mov r2, 3
            cmp r1, r2
            je A
            nop
            A: store [r1], r2
            load r4, [r1]
        ";
        let iset2 = iset.clone();
        let program = assemble(src, &iset).unwrap();
        let l1 = run(&program, &mut s1, &mut p1, &iset, &cfg, RunOptions { collect_log: true, ..Default::default() }).unwrap();
        let l2 = run(&program, &mut s2, &mut p2, &iset2, &cfg, RunOptions { collect_log: true, ..Default::default() }).unwrap();
        assert_eq!(l1.to_jsonl(), l2.to_jsonl());
        assert_eq!(s1.cycle, s2.cycle);
        assert_eq!(s1.regs, s2.regs);
    }
}
