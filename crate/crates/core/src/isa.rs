//! The minimal micro-ISA executed by the simulator.
//!
//! Real-ISA instructions ingested from an instruction database are not
//! emulated; each becomes a `Trigger` class that fires a synthetic event
//! signature when executed. The builtin classes are the plumbing the
//! gadget builder needs: moves, indirect loads/stores, compare, branches,
//! cache control, fences and PMU reads.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::rng::SplitMix64;

pub const NUM_REGS: usize = 16;

/// Kind of a micro-instruction class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrKind {
    LoadIndirect,
    Store,
    MovImm,
    CmpReg,
    Jcc,
    Jmp,
    Nop,
    Clflush,
    Fence,
    ReadPmu,
    Trigger,
}

/// Fault behavior of a class when it touches protected state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultBehavior {
    None,
    PrivilegedFault,
}

/// Condition checked by a conditional branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchCond {
    Equal,
    NotEqual,
}

/// A micro-instruction template.
///
/// `signature` lists `(catalog event index, increment)` pairs fired every
/// time the class executes, architecturally or transiently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrClass {
    pub id: String,
    pub mnemonic: String,
    pub kind: InstrKind,
    pub fault: FaultBehavior,
    pub signature: Vec<(u32, u32)>,
    pub latency: u32,
    pub cond: Option<BranchCond>,
    /// Source record this class was derived from (builtin classes say so).
    pub provenance: String,
}

impl InstrClass {
    fn builtin(id: &str, kind: InstrKind, latency: u32, cond: Option<BranchCond>) -> Self {
        Self {
            id: id.to_string(),
            mnemonic: id.to_string(),
            kind,
            fault: FaultBehavior::None,
            signature: Vec::new(),
            latency,
            cond,
            provenance: "builtin".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IsaError {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("mapping conflict: mnemonic {0:?} is assigned two different signatures")]
    MappingConflict(String),
    #[error("mapping references unknown event {0:?}")]
    UnknownMappedEvent(String),
    #[error("duplicate instruction class id {0:?}")]
    DuplicateClass(String),
}

/// The set of instruction classes a program may reference.
///
/// Builtins are always present; ingested classes are appended in source
/// order so id assignment is reproducible.
#[derive(Debug, Clone)]
pub struct InstructionSet {
    classes: Vec<InstrClass>,
    by_id: HashMap<String, u32>,
    builtin_count: u32,
}

impl InstructionSet {
    /// The builtin micro-ISA on its own.
    pub fn base() -> Self {
        let classes = vec![
            InstrClass::builtin("nop", InstrKind::Nop, 1, None),
            InstrClass::builtin("mov", InstrKind::MovImm, 1, None),
            InstrClass::builtin("load", InstrKind::LoadIndirect, 4, None),
            InstrClass::builtin("store", InstrKind::Store, 4, None),
            InstrClass::builtin("cmp", InstrKind::CmpReg, 1, None),
            InstrClass::builtin("je", InstrKind::Jcc, 1, Some(BranchCond::Equal)),
            InstrClass::builtin("jne", InstrKind::Jcc, 1, Some(BranchCond::NotEqual)),
            InstrClass::builtin("jmp", InstrKind::Jmp, 1, None),
            InstrClass::builtin("clflush", InstrKind::Clflush, 6, None),
            InstrClass::builtin("fence", InstrKind::Fence, 2, None),
            InstrClass::builtin("read_pmu", InstrKind::ReadPmu, 8, None),
        ];
        let by_id = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i as u32))
            .collect();
        let builtin_count = classes.len() as u32;
        Self {
            classes,
            by_id,
            builtin_count,
        }
    }

    /// Append an ingested class. A class identical to an existing one is
    /// reused; a different class under the same id is an error.
    pub fn insert(&mut self, class: InstrClass) -> Result<u32, IsaError> {
        if let Some(&idx) = self.by_id.get(&class.id) {
            let existing = &self.classes[idx as usize];
            if existing.kind == class.kind && existing.signature == class.signature {
                return Ok(idx);
            }
            return Err(IsaError::DuplicateClass(class.id));
        }
        let idx = self.classes.len() as u32;
        self.by_id.insert(class.id.clone(), idx);
        self.classes.push(class);
        Ok(idx)
    }

    pub fn lookup(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, idx: u32) -> &InstrClass {
        &self.classes[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn builtin_count(&self) -> u32 {
        self.builtin_count
    }

    /// Indices of ingested (non-builtin) classes, in load order.
    pub fn ingested(&self) -> impl Iterator<Item = u32> + '_ {
        self.builtin_count..self.classes.len() as u32
    }

    pub fn classes(&self) -> &[InstrClass] {
        &self.classes
    }
}

/// Operands of one program instruction. Jump targets are resolved indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operands {
    None,
    RegImm { reg: u8, imm: u64 },
    RegMem { reg: u8, addr_reg: u8 },
    MemReg { addr_reg: u8, reg: u8 },
    RegReg { a: u8, b: u8 },
    Mem { addr_reg: u8 },
    Target { index: u32 },
    ReadPmu { reg: u8, slot: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instr {
    pub class: u32,
    pub ops: Operands,
}

pub const NO_CONTINUATION: u32 = u32::MAX;

/// An assembled program: instructions plus resolved labels and the
/// per-instruction fault continuation set by `.onfault` directives.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub instrs: Vec<Instr>,
    pub labels: BTreeMap<String, u32>,
    pub onfault: Vec<u32>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn fault_continuation(&self, pc: u32) -> Option<u32> {
        match self.onfault.get(pc as usize) {
            Some(&t) if t != NO_CONTINUATION => Some(t),
            _ => None,
        }
    }
}

fn parse_reg(tok: &str, line: usize) -> Result<u8, IsaError> {
    let rest = tok
        .strip_prefix('r')
        .ok_or_else(|| syntax(line, format!("expected register, got {tok:?}")))?;
    let n: u8 = rest
        .parse()
        .map_err(|_| syntax(line, format!("bad register {tok:?}")))?;
    if (n as usize) < NUM_REGS {
        Ok(n)
    } else {
        Err(syntax(line, format!("register {tok:?} out of range")))
    }
}

fn parse_imm(tok: &str, line: usize) -> Result<u64, IsaError> {
    let v = if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        tok.parse()
    };
    v.map_err(|_| syntax(line, format!("bad immediate {tok:?}")))
}

fn parse_mem(tok: &str, line: usize) -> Result<u8, IsaError> {
    let inner = tok
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("expected [reg], got {tok:?}")))?;
    parse_reg(inner.trim(), line)
}

fn syntax(line: usize, msg: String) -> IsaError {
    IsaError::Syntax { line, msg }
}

fn is_label_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_') == Some(true)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

enum PendingOps {
    Resolved(Operands),
    Label(String),
}

/// Assemble line-oriented micro-assembly into a `Program`.
///
/// One instruction per line; labels end in ':' and may prefix an
/// instruction; '#' starts a comment; `.onfault LABEL` sets the fault
/// continuation for subsequent instructions (`.onfault none` clears it).
pub fn assemble(source: &str, iset: &InstructionSet) -> Result<Program, IsaError> {
    struct Pending {
        class: u32,
        ops: PendingOps,
        line: usize,
        onfault: Option<String>,
    }

    let mut labels: BTreeMap<String, u32> = BTreeMap::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut current_onfault: Option<String> = None;

    for (lineno, raw) in source.lines().enumerate() {
        let line = lineno + 1;
        let mut text = raw;
        if let Some(pos) = text.find('#') {
            text = &text[..pos];
        }
        let mut text = text.trim();
        if text.is_empty() {
            continue;
        }

        // Leading labels, possibly several, possibly followed by an instruction.
        while let Some(colon) = text.find(':') {
            let (head, tail) = text.split_at(colon);
            let head = head.trim();
            if !is_label_name(head) {
                break;
            }
            if labels.insert(head.to_string(), pending.len() as u32).is_some() {
                return Err(syntax(line, format!("duplicate label {head:?}")));
            }
            text = tail[1..].trim();
        }
        if text.is_empty() {
            continue;
        }

        if let Some(rest) = text.strip_prefix(".onfault") {
            let target = rest.trim();
            if target.eq_ignore_ascii_case("none") {
                current_onfault = None;
            } else if is_label_name(target) {
                current_onfault = Some(target.to_string());
            } else {
                return Err(syntax(line, format!("bad .onfault target {target:?}")));
            }
            continue;
        }

        let (mnemonic, rest) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], text[pos..].trim()),
            None => (text, ""),
        };
        let args: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(|a| a.trim()).collect()
        };

        let arity = |want: usize| -> Result<(), IsaError> {
            if args.len() == want {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("{mnemonic} expects {want} operand(s), got {}", args.len()),
                ))
            }
        };

        let (class, ops) = match mnemonic {
            "nop" | "fence" => {
                arity(0)?;
                (iset.lookup(mnemonic).unwrap(), PendingOps::Resolved(Operands::None))
            }
            "mov" => {
                arity(2)?;
                let reg = parse_reg(args[0], line)?;
                let imm = parse_imm(args[1], line)?;
                (
                    iset.lookup("mov").unwrap(),
                    PendingOps::Resolved(Operands::RegImm { reg, imm }),
                )
            }
            "load" => {
                arity(2)?;
                let reg = parse_reg(args[0], line)?;
                let addr_reg = parse_mem(args[1], line)?;
                (
                    iset.lookup("load").unwrap(),
                    PendingOps::Resolved(Operands::RegMem { reg, addr_reg }),
                )
            }
            "store" => {
                arity(2)?;
                let addr_reg = parse_mem(args[0], line)?;
                let reg = parse_reg(args[1], line)?;
                (
                    iset.lookup("store").unwrap(),
                    PendingOps::Resolved(Operands::MemReg { addr_reg, reg }),
                )
            }
            "cmp" => {
                arity(2)?;
                let a = parse_reg(args[0], line)?;
                let b = parse_reg(args[1], line)?;
                (
                    iset.lookup("cmp").unwrap(),
                    PendingOps::Resolved(Operands::RegReg { a, b }),
                )
            }
            "je" | "jne" | "jmp" => {
                arity(1)?;
                if !is_label_name(args[0]) {
                    return Err(syntax(line, format!("bad jump target {:?}", args[0])));
                }
                (
                    iset.lookup(mnemonic).unwrap(),
                    PendingOps::Label(args[0].to_string()),
                )
            }
            "clflush" => {
                arity(1)?;
                let addr_reg = parse_mem(args[0], line)?;
                (
                    iset.lookup("clflush").unwrap(),
                    PendingOps::Resolved(Operands::Mem { addr_reg }),
                )
            }
            "read_pmu" => {
                arity(2)?;
                let reg = parse_reg(args[0], line)?;
                let slot = parse_imm(args[1], line)?;
                if slot > u8::MAX as u64 {
                    return Err(syntax(line, format!("bad slot {:?}", args[1])));
                }
                (
                    iset.lookup("read_pmu").unwrap(),
                    PendingOps::Resolved(Operands::ReadPmu {
                        reg,
                        slot: slot as u8,
                    }),
                )
            }
            "trigger" => {
                arity(1)?;
                let idx = iset
                    .lookup(args[0])
                    .ok_or_else(|| syntax(line, format!("unknown instruction class {:?}", args[0])))?;
                (idx, PendingOps::Resolved(Operands::None))
            }
            other => {
                return Err(syntax(line, format!("unknown mnemonic {other:?}")));
            }
        };

        pending.push(Pending {
            class,
            ops,
            line,
            onfault: current_onfault.clone(),
        });
    }

    let mut program = Program {
        instrs: Vec::with_capacity(pending.len()),
        labels: labels.clone(),
        onfault: Vec::with_capacity(pending.len()),
    };
    for p in pending {
        let ops = match p.ops {
            PendingOps::Resolved(ops) => ops,
            PendingOps::Label(name) => {
                let index = *labels
                    .get(&name)
                    .ok_or_else(|| syntax(p.line, format!("unresolved label {name:?}")))?;
                Operands::Target { index }
            }
        };
        let onfault = match p.onfault {
            Some(name) => *labels
                .get(&name)
                .ok_or_else(|| syntax(p.line, format!("unresolved .onfault label {name:?}")))?,
            None => NO_CONTINUATION,
        };
        program.instrs.push(Instr { class: p.class, ops });
        program.onfault.push(onfault);
    }
    Ok(program)
}

/// Render a program back to micro-assembly. `assemble(render(p))` yields
/// the same instruction sequence.
pub fn render(program: &Program, iset: &InstructionSet) -> String {
    let mut label_at: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        label_at.entry(idx).or_default().push(name);
    }
    // Targets that never got a user label need synthetic ones.
    let mut synth: BTreeMap<u32, String> = BTreeMap::new();
    for instr in &program.instrs {
        if let Operands::Target { index } = instr.ops {
            if !label_at.contains_key(&index) && !synth.contains_key(&index) {
                synth.insert(index, format!("L_{index}"));
            }
        }
    }
    for &t in program.onfault.iter().filter(|&&t| t != NO_CONTINUATION) {
        if !label_at.contains_key(&t) && !synth.contains_key(&t) {
            synth.insert(t, format!("L_{t}"));
        }
    }

    let label_for = |idx: u32| -> String {
        if let Some(names) = label_at.get(&idx) {
            names[0].to_string()
        } else {
            synth[&idx].clone()
        }
    };

    let mut out = String::new();
    let mut current_onfault = NO_CONTINUATION;
    for (i, instr) in program.instrs.iter().enumerate() {
        let idx = i as u32;
        if let Some(names) = label_at.get(&idx) {
            for name in names {
                let _ = writeln!(out, "{name}:");
            }
        }
        if let Some(name) = synth.get(&idx) {
            let _ = writeln!(out, "{name}:");
        }
        let of = program.onfault[i];
        if of != current_onfault {
            if of == NO_CONTINUATION {
                let _ = writeln!(out, ".onfault none");
            } else {
                let _ = writeln!(out, ".onfault {}", label_for(of));
            }
            current_onfault = of;
        }
        let class = iset.get(instr.class);
        let text = match instr.ops {
            Operands::None => {
                if class.kind == InstrKind::Trigger {
                    format!("trigger {}", class.id)
                } else {
                    class.id.clone()
                }
            }
            Operands::RegImm { reg, imm } => format!("{} r{reg}, {:#x}", class.id, imm),
            Operands::RegMem { reg, addr_reg } => format!("{} r{reg}, [r{addr_reg}]", class.id),
            Operands::MemReg { addr_reg, reg } => format!("{} [r{addr_reg}], r{reg}", class.id),
            Operands::RegReg { a, b } => format!("{} r{a}, r{b}", class.id),
            Operands::Mem { addr_reg } => format!("{} [r{addr_reg}]", class.id),
            Operands::Target { index } => format!("{} {}", class.id, label_for(index)),
            Operands::ReadPmu { reg, slot } => format!("read_pmu r{reg}, {slot}"),
        };
        let _ = writeln!(out, "    {text}");
    }
    // Trailing labels (targets one past the end are not valid, but labels
    // at the end index can exist for empty tails).
    let end = program.instrs.len() as u32;
    if let Some(names) = label_at.get(&end) {
        for name in names {
            let _ = writeln!(out, "{name}:");
        }
    }
    out
}

/// Programmatic program construction with label patching, used by the
/// gadget builder and by randomized test-program generators.
pub struct ProgramBuilder<'a> {
    iset: &'a InstructionSet,
    instrs: Vec<Instr>,
    onfault_names: Vec<Option<String>>,
    labels: BTreeMap<String, u32>,
    patches: Vec<(usize, String)>,
    current_onfault: Option<String>,
}

impl<'a> ProgramBuilder<'a> {
    pub fn new(iset: &'a InstructionSet) -> Self {
        Self {
            iset,
            instrs: Vec::new(),
            onfault_names: Vec::new(),
            labels: BTreeMap::new(),
            patches: Vec::new(),
            current_onfault: None,
        }
    }

    pub fn here(&self) -> u32 {
        self.instrs.len() as u32
    }

    pub fn label(&mut self, name: impl Into<String>) {
        let name = name.into();
        let at = self.here();
        assert!(
            self.labels.insert(name.clone(), at).is_none(),
            "duplicate label {name}"
        );
    }

    pub fn set_onfault(&mut self, label: Option<&str>) {
        self.current_onfault = label.map(|s| s.to_string());
    }

    fn push(&mut self, class: &str, ops: Operands) {
        let class = self.iset.lookup(class).expect("builtin class");
        self.push_class(class, ops);
    }

    pub fn push_class(&mut self, class: u32, ops: Operands) {
        self.instrs.push(Instr { class, ops });
        self.onfault_names.push(self.current_onfault.clone());
    }

    fn push_jump(&mut self, class: &str, label: &str) {
        self.patches.push((self.instrs.len(), label.to_string()));
        self.push(class, Operands::Target { index: 0 });
    }

    pub fn nop(&mut self) {
        self.push("nop", Operands::None);
    }

    pub fn mov(&mut self, reg: u8, imm: u64) {
        self.push("mov", Operands::RegImm { reg, imm });
    }

    pub fn load(&mut self, reg: u8, addr_reg: u8) {
        self.push("load", Operands::RegMem { reg, addr_reg });
    }

    pub fn store(&mut self, addr_reg: u8, reg: u8) {
        self.push("store", Operands::MemReg { addr_reg, reg });
    }

    pub fn cmp(&mut self, a: u8, b: u8) {
        self.push("cmp", Operands::RegReg { a, b });
    }

    pub fn je(&mut self, label: &str) {
        self.push_jump("je", label);
    }

    pub fn jne(&mut self, label: &str) {
        self.push_jump("jne", label);
    }

    pub fn jmp(&mut self, label: &str) {
        self.push_jump("jmp", label);
    }

    pub fn clflush(&mut self, addr_reg: u8) {
        self.push("clflush", Operands::Mem { addr_reg });
    }

    pub fn fence(&mut self) {
        self.push("fence", Operands::None);
    }

    pub fn read_pmu(&mut self, reg: u8, slot: u8) {
        self.push("read_pmu", Operands::ReadPmu { reg, slot });
    }

    pub fn finish(mut self) -> Result<Program, IsaError> {
        for (at, label) in &self.patches {
            let target = *self.labels.get(label).ok_or_else(|| IsaError::Syntax {
                line: 0,
                msg: format!("unresolved label {label:?}"),
            })?;
            self.instrs[*at].ops = Operands::Target { index: target };
        }
        let mut onfault = Vec::with_capacity(self.instrs.len());
        for name in &self.onfault_names {
            match name {
                Some(n) => {
                    let target = *self.labels.get(n).ok_or_else(|| IsaError::Syntax {
                        line: 0,
                        msg: format!("unresolved .onfault label {n:?}"),
                    })?;
                    onfault.push(target);
                }
                None => onfault.push(NO_CONTINUATION),
            }
        }
        Ok(Program {
            instrs: self.instrs,
            labels: self.labels,
            onfault,
        })
    }
}

/// Normalize an instruction database asm string into a class id:
/// lowercase, non-alphanumerics collapse to single underscores.
pub fn normalize_mnemonic(asm: &str) -> String {
    let mut out = String::with_capacity(asm.len());
    let mut last_us = false;
    for c in asm.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            last_us = false;
        } else if !last_us && !out.is_empty() {
            out.push('_');
            last_us = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// Explicit mnemonic-to-signature mapping loaded from a JSON file:
/// `{ "mnemonic": [["EVENT_NAME", increment], ...], ... }`.
pub type ExplicitMapping = BTreeMap<String, Vec<(String, u32)>>;

/// Signature assignment parameters for ingested instructions.
#[derive(Debug, Clone)]
pub struct SignatureAssignment {
    /// Probability that an ingested instruction carries one tagged event.
    pub attach_probability: f64,
    pub seed: u64,
}

impl Default for SignatureAssignment {
    fn default() -> Self {
        Self {
            attach_probability: 0.15,
            seed: 42,
        }
    }
}

/// Classify one ingested instruction record into an `InstrClass`.
///
/// Pure in (record, mapping, assignment seed): the synthetic signature is
/// a seeded function of the normalized mnemonic, so re-running the
/// assignment reproduces it exactly.
pub fn classify(
    asm: &str,
    provenance: &str,
    mapping: Option<&ExplicitMapping>,
    assignment: &SignatureAssignment,
    catalog: &Catalog,
) -> Result<InstrClass, IsaError> {
    let id = normalize_mnemonic(asm);
    if id == "nop" {
        return Ok(InstrClass {
            id,
            mnemonic: asm.to_string(),
            kind: InstrKind::Nop,
            fault: FaultBehavior::None,
            signature: Vec::new(),
            latency: 1,
            cond: None,
            provenance: provenance.to_string(),
        });
    }

    let signature = if let Some(entries) = mapping.and_then(|m| m.get(&id).or_else(|| m.get(asm))) {
        let mut sig = Vec::with_capacity(entries.len());
        for (event_name, inc) in entries {
            let key = catalog
                .lookup(event_name)
                .ok_or_else(|| IsaError::UnknownMappedEvent(event_name.clone()))?;
            if *inc == 0 {
                return Err(IsaError::MappingConflict(id.clone()));
            }
            sig.push((key, *inc));
        }
        sig.sort_unstable();
        sig.dedup();
        let mut seen = std::collections::HashSet::new();
        for (key, _) in &sig {
            if !seen.insert(*key) {
                return Err(IsaError::MappingConflict(id));
            }
        }
        sig
    } else {
        synthetic_signature(&id, assignment, catalog)
    };

    Ok(InstrClass {
        id,
        mnemonic: asm.to_string(),
        kind: InstrKind::Trigger,
        fault: FaultBehavior::None,
        signature,
        latency: 1,
        cond: None,
        provenance: provenance.to_string(),
    })
}

/// Seeded synthetic signature: with probability `attach_probability` the
/// instruction fires one event drawn uniformly from the catalog's
/// instruction-tagged events. Shared-module events are structural and are
/// never assigned here.
fn synthetic_signature(
    id: &str,
    assignment: &SignatureAssignment,
    catalog: &Catalog,
) -> Vec<(u32, u32)> {
    let tagged = catalog.instruction_tagged_events();
    if tagged.is_empty() {
        return Vec::new();
    }
    let mut h: u64 = assignment.seed;
    for b in id.bytes() {
        h = h.wrapping_mul(0x100_0000_01B3).wrapping_add(b as u64);
    }
    let mut rng = SplitMix64::new(h);
    if rng.next_bool(assignment.attach_probability) {
        let pick = tagged[rng.next_below(tagged.len() as u64) as usize];
        vec![(pick, 1)]
    } else {
        Vec::new()
    }
}

/// Validate `set` invariants: trigger classes carry well-formed signatures
/// and every signature event exists in the catalog.
pub fn validate_set(set: &InstructionSet, catalog: &Catalog) -> Result<(), IsaError> {
    for class in set.classes() {
        for &(key, inc) in &class.signature {
            if catalog.get(key).is_none() {
                return Err(IsaError::UnknownMappedEvent(format!("#{key}")));
            }
            if inc == 0 {
                return Err(IsaError::MappingConflict(class.id.clone()));
            }
        }
    }
    Ok(())
}

/// Convenience: a shareable instruction set.
pub type SharedInstructionSet = Arc<InstructionSet>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    fn base() -> InstructionSet {
        InstructionSet::base()
    }

    #[test]
    fn assemble_single_nop() {
        let p = assemble("nop", &base()).unwrap();
        assert_eq!(p.len(), 1);
        let iset = base();
        assert_eq!(iset.get(p.instrs[0].class).kind, InstrKind::Nop);
    }

    #[test]
    fn assemble_label_resolution() {
        let src = "cmp r1, r2\njne L\nnop\nL: nop";
        let p = assemble(src, &base()).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.labels["L"], 3);
        assert_eq!(p.instrs[1].ops, Operands::Target { index: 3 });
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let src = "# header\n\nnop # trailing\n";
        let p = assemble(src, &base()).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn unknown_mnemonic_errors() {
        let err = assemble("frobnicate r1", &base()).unwrap_err();
        assert!(matches!(err, IsaError::Syntax { line: 1, .. }));
    }

    #[test]
    fn unresolved_label_errors() {
        let err = assemble("jmp NOWHERE", &base()).unwrap_err();
        assert!(matches!(err, IsaError::Syntax { .. }));
    }

    #[test]
    fn arity_mismatch_errors() {
        let err = assemble("mov r1", &base()).unwrap_err();
        assert!(matches!(err, IsaError::Syntax { .. }));
    }

    #[test]
    fn onfault_directive_applies_forward() {
        let src = ".onfault H\nload r0, [r1]\nnop\n.onfault none\nnop\nH: nop";
        let p = assemble(src, &base()).unwrap();
        assert_eq!(p.fault_continuation(0), Some(3));
        assert_eq!(p.fault_continuation(1), Some(3));
        assert_eq!(p.fault_continuation(2), None);
    }

    #[test]
    fn render_roundtrip_sequence_identity() {
        let src = "start: mov r1, 0x2000\nload r2, [r1]\ncmp r1, r2\nje done\nstore [r1], r2\nclflush [r1]\nfence\nread_pmu r3, 2\njmp start\ndone: nop";
        let iset = base();
        let p = assemble(src, &iset).unwrap();
        let rendered = render(&p, &iset);
        let p2 = assemble(&rendered, &iset).unwrap();
        assert_eq!(p.instrs, p2.instrs);
        assert_eq!(p.onfault, p2.onfault);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_mnemonic("VADDPS (XMM, XMM, XMM)"), "vaddps_xmm_xmm_xmm");
        assert_eq!(normalize_mnemonic("NOP"), "nop");
        assert_eq!(normalize_mnemonic("ADD (R64, I32)"), "add_r64_i32");
    }

    #[test]
    fn classify_nop_is_nop_kind() {
        let cat = Catalog::empty();
        let mut mapping = ExplicitMapping::new();
        mapping.insert("nop".to_string(), Vec::new());
        let c = classify("NOP", "test", Some(&mapping), &SignatureAssignment::default(), &cat)
            .unwrap();
        assert_eq!(c.kind, InstrKind::Nop);
        assert!(c.signature.is_empty());
    }

    #[test]
    fn classify_is_pure() {
        let cat = Catalog::empty();
        let a = classify("VPXOR (XMM, XMM, XMM)", "t", None, &SignatureAssignment::default(), &cat)
            .unwrap();
        let b = classify("VPXOR (XMM, XMM, XMM)", "t", None, &SignatureAssignment::default(), &cat)
            .unwrap();
        assert_eq!(a, b);
    }
}
