//! Architectural reference interpreter with speculation disabled.
//!
//! Validation oracle for the full engine: it executes instructions in
//! order, resolves branches directly, and treats faults as an immediate
//! transfer to the fault continuation (or a halt). No transient window,
//! no wrong paths, no PMU, no cache. Any program must leave identical
//! architectural state (registers, flag, memory) under both engines.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::isa::{BranchCond, FaultBehavior, InstrKind, InstructionSet, Operands, Program};

#[derive(Debug, Clone, Default)]
pub struct RefState {
    pub regs: [u64; crate::isa::NUM_REGS],
    pub flag_eq: bool,
    pub pc: u32,
    pub mem: BTreeMap<u64, u8>,
    pub secret_region: Range<u64>,
    pub tee_protection: bool,
}

impl RefState {
    fn read_u64(&self, addr: u64) -> u64 {
        let mut out = 0u64;
        for i in 0..8 {
            out |= (*self.mem.get(&addr.wrapping_add(i)).unwrap_or(&0) as u64) << (i * 8);
        }
        out
    }

    fn write_u64(&mut self, addr: u64, value: u64) {
        for i in 0..8 {
            let b = (value >> (i * 8)) as u8;
            let a = addr.wrapping_add(i);
            if b == 0 {
                self.mem.remove(&a);
            } else {
                self.mem.insert(a, b);
            }
        }
    }

    fn protected(&self, addr: u64) -> bool {
        self.tee_protection && self.secret_region.contains(&addr)
    }
}

/// Run `program` architecturally. `max_steps` guards runaway loops.
pub fn run_reference(
    program: &Program,
    state: &mut RefState,
    iset: &InstructionSet,
    max_steps: u64,
) -> Result<(), String> {
    let mut steps = 0u64;
    while (state.pc as usize) < program.len() {
        steps += 1;
        if steps > max_steps {
            return Err("reference interpreter exceeded step cap".to_string());
        }
        let instr = program.instrs[state.pc as usize];
        let class = iset.get(instr.class);
        let pc = state.pc;
        let mut next = pc + 1;

        let mut fault = false;
        match (class.kind, instr.ops) {
            (InstrKind::Nop, _) | (InstrKind::Trigger, _) | (InstrKind::Fence, _) => {}
            (InstrKind::MovImm, Operands::RegImm { reg, imm }) => {
                state.regs[reg as usize] = imm;
            }
            (InstrKind::LoadIndirect, Operands::RegMem { reg, addr_reg }) => {
                let addr = state.regs[addr_reg as usize];
                if state.protected(addr) {
                    fault = true;
                } else {
                    state.regs[reg as usize] = state.read_u64(addr);
                }
            }
            (InstrKind::Store, Operands::MemReg { addr_reg, reg }) => {
                let addr = state.regs[addr_reg as usize];
                if state.protected(addr) {
                    fault = true;
                } else {
                    state.write_u64(addr, state.regs[reg as usize]);
                }
            }
            (InstrKind::CmpReg, Operands::RegReg { a, b }) => {
                state.flag_eq = state.regs[a as usize] == state.regs[b as usize];
            }
            (InstrKind::Jcc, Operands::Target { index }) => {
                let want_equal = class.cond == Some(BranchCond::Equal);
                if state.flag_eq == want_equal {
                    next = index;
                }
            }
            (InstrKind::Jmp, Operands::Target { index }) => {
                next = index;
            }
            (InstrKind::Clflush, _) => {}
            (InstrKind::ReadPmu, Operands::ReadPmu { reg, .. }) => {
                // The engine's architectural read also writes the counter
                // value; zero on both sides keeps the comparison honest
                // only for programs without architectural reads, so
                // randomized oracle programs avoid read_pmu.
                state.regs[reg as usize] = 0;
            }
            (kind, ops) => return Err(format!("operand shape {ops:?} invalid for {kind:?}")),
        }

        if class.fault == FaultBehavior::PrivilegedFault {
            fault = true;
        }

        if fault {
            match program.fault_continuation(pc) {
                Some(target) => next = target,
                None => {
                    state.pc = program.len() as u32;
                    return Ok(());
                }
            }
        }
        state.pc = next;
    }
    Ok(())
}
