//! Shared test utilities: a seeded random-program generator and the
//! oracle harness comparing the full engine against the architectural
//! reference interpreter.

use pmuspill_core::catalog::{Catalog, EventDef, EventTrigger, Persistence, StructuralKind};
use pmuspill_core::isa::{InstructionSet, Program, ProgramBuilder};
use pmuspill_core::pmu::{CounterFile, NoiseParams, PmuPolicy};
use pmuspill_core::rng::SplitMix64;
use pmuspill_core::sim::reference::{run_reference, RefState};
use pmuspill_core::sim::{MachineState, RunOptions, SimConfig, Simulator};
use std::sync::Arc;

pub const SECRET_BASE: u64 = 0x10000;

/// Address pool: ordinary lines, aliases in one cache set, and two
/// protected addresses.
pub const ADDR_POOL: [u64; 8] = [
    0x1000,
    0x1008,
    0x2000,
    0x3000,
    0x40,
    0x2000 + 64 * 64, // same set as 0x2000, different tag
    SECRET_BASE,
    SECRET_BASE + 8,
];

/// Structured random program: straight-line blocks with forward branches,
/// loads and stores over the pool, occasional fences and flushes, and
/// `.onfault` continuations that land on later blocks.
pub fn random_program(seed: u64, iset: &InstructionSet) -> Program {
    let mut rng = SplitMix64::new(seed);
    let mut b = ProgramBuilder::new(iset);
    let n_blocks = 3 + rng.next_below(5) as usize;

    // Pre-declare block labels so branches always resolve forward.
    let labels: Vec<String> = (0..=n_blocks).map(|i| format!("blk_{i}")).collect();

    for blk in 0..n_blocks {
        b.label(&labels[blk]);
        // Fault continuation: usually some later block.
        if rng.next_below(3) == 0 {
            b.set_onfault(None);
        } else {
            let target = blk + 1 + rng.next_below((n_blocks - blk) as u64) as usize;
            b.set_onfault(Some(&labels[target]));
        }
        let n_instrs = 2 + rng.next_below(5);
        for _ in 0..n_instrs {
            let reg = || 0u8;
            let _ = reg;
            let r1 = rng.next_below(8) as u8;
            let r2 = rng.next_below(8) as u8;
            match rng.next_below(12) {
                0 | 1 => {
                    let imm = if rng.next_below(2) == 0 {
                        ADDR_POOL[rng.next_below(ADDR_POOL.len() as u64) as usize]
                    } else {
                        rng.next_below(16)
                    };
                    b.mov(r1, imm);
                }
                2 | 3 => b.load(r1, r2),
                4 => b.store(r1, r2),
                5 => b.cmp(r1, r2),
                6 => {
                    let target = blk + 1 + rng.next_below((n_blocks - blk) as u64) as usize;
                    if rng.next_below(2) == 0 {
                        b.je(&labels[target]);
                    } else {
                        b.jne(&labels[target]);
                    }
                }
                7 => {
                    let target = blk + 1 + rng.next_below((n_blocks - blk) as u64) as usize;
                    b.jmp(&labels[target]);
                }
                8 => b.clflush(r1),
                9 => b.fence(),
                _ => b.nop(),
            }
        }
    }
    b.label(&labels[n_blocks]);
    b.nop();
    b.finish().expect("generator emits valid programs")
}

pub fn oracle_catalog() -> Arc<Catalog> {
    let mk = |name: &str, code: u8, kind: StructuralKind, persist: Persistence| EventDef {
        name: name.into(),
        category: String::new(),
        event_code: code,
        umask: 0x01,
        description: String::new(),
        trigger: EventTrigger::Structural(kind),
        persistence: persist,
        baseline: 0,
        provenance: "test".into(),
    };
    Arc::new(
        Catalog::from_events(vec![
            mk("ORACLE.MISP", 0x89, StructuralKind::BranchMispredicted, Persistence::SpeculativeCounted),
            mk("ORACLE.RETIRED", 0xC0, StructuralKind::InstructionsRetired, Persistence::RetirementCounted),
        ])
        .unwrap(),
    )
}

/// Initial register file pointing into the address pool.
pub fn initial_regs() -> [u64; 16] {
    let mut regs = [0u64; 16];
    for (i, r) in regs.iter_mut().enumerate().take(8) {
        *r = ADDR_POOL[i % ADDR_POOL.len()];
    }
    regs
}

pub struct OracleRun {
    pub machine: MachineState,
    pub reference: RefState,
    pub squashes: u64,
    pub rollback_checks: u64,
}

/// Run `program` under both engines, checking bit-exact rollback at every
/// squash boundary, and return both final states for comparison.
pub fn run_both(program: &Program, iset: &InstructionSet, policy: PmuPolicy) -> OracleRun {
    let cfg = SimConfig {
        cycle_cap: 1_000_000,
        ..Default::default()
    };
    let mut state = MachineState::new(&cfg);
    state.regs = initial_regs();
    state.secret_region = SECRET_BASE..SECRET_BASE + 0x100;
    state.mem.write_u64(SECRET_BASE, 0x4141_4141);
    state.mem.write_u64(0x1000, 7);
    let mut pmu = CounterFile::new(oracle_catalog(), 8, policy, NoiseParams::silent(), 1);
    pmu.program_counter(0, "ORACLE.MISP", iset).unwrap();

    let mut reference = RefState {
        regs: state.regs,
        secret_region: state.secret_region.clone(),
        tee_protection: true,
        ..Default::default()
    };
    reference.mem = state.mem.snapshot_map();

    let mut sim = Simulator::new(program, &mut state, &mut pmu, iset, &cfg, RunOptions::default());
    let mut squashes = 0u64;
    let mut rollback_checks = 0u64;
    let mut last_count = 0u64;
    // Pending snapshot taken when the next micro-op will fault
    // architecturally; verified once the machine is architectural again.
    let mut pending: Option<([u64; 16], std::collections::BTreeMap<u64, u8>)> = None;
    loop {
        let arch_before = sim.mode() == pmuspill_core::sim::ExecMode::Architectural;
        if arch_before && pending.is_none() {
            if let Some(instr) = sim.next_instr() {
                if let pmuspill_core::isa::Operands::RegMem { addr_reg, .. } = instr.ops {
                    let addr = sim.machine().regs[addr_reg as usize];
                    let m = sim.machine();
                    if m.tee_protection && m.secret_region.contains(&addr) {
                        pending = Some((m.regs, m.mem.snapshot_map()));
                    }
                }
            }
        }
        let running = sim.step().expect("within cycle cap");
        let count = sim.pmu().peek(0).expect("slot 0 programmed");
        assert!(
            count >= last_count,
            "counter went backwards: {count} < {last_count}"
        );
        last_count = count;
        if let Some((regs, mem)) = &pending {
            if sim.mode() == pmuspill_core::sim::ExecMode::Architectural {
                // The fault region fully unwound: architectural state must
                // match the snapshot bit for bit.
                assert_eq!(&sim.machine().regs, regs, "registers not rolled back");
                assert_eq!(&sim.machine().mem.snapshot_map(), mem, "memory not rolled back");
                squashes += 1;
                rollback_checks += 1;
                pending = None;
            }
        }
        if !running {
            break;
        }
    }
    drop(sim);

    run_reference(program, &mut reference, iset, 1_000_000).expect("reference terminates");

    OracleRun {
        machine: state,
        reference,
        squashes,
        rollback_checks,
    }
}

/// Assert the two engines agree on all architectural state.
pub fn assert_architectural_equivalence(run: &OracleRun) {
    assert_eq!(run.machine.regs, run.reference.regs, "register mismatch");
    assert_eq!(run.machine.flag_eq, run.reference.flag_eq, "flag mismatch");
    let sim_mem = run.machine.mem.snapshot_map();
    let ref_mem: std::collections::BTreeMap<u64, u8> = run
        .reference
        .mem
        .iter()
        .filter(|&(_, &v)| v != 0)
        .map(|(&k, &v)| (k, v))
        .collect();
    assert_eq!(sim_mem, ref_mem, "memory mismatch");
}
