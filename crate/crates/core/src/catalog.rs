//! PMU event catalogs and instruction database ingestion.
//!
//! Catalogs are JSON arrays of event objects (pmu-tools style, with the
//! simulator's trigger/persistence/baseline extensions). Instruction
//! databases are the uops.info XML subset: only the `asm` attribute of
//! `instruction` elements is read; the enclosing `extension` name tags the
//! record and every other attribute is ignored behind a warning counter.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{
    classify, ExplicitMapping, InstructionSet, IsaError, SignatureAssignment,
};

/// Structural event kinds emitted by the pipeline itself, independent of
/// which instruction classes execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralKind {
    IcacheFetchHit,
    IcacheFetchStall,
    BranchExecuted,
    BranchTaken,
    BranchNontaken,
    BranchMispredicted,
    RecoveryCycles,
    ResteerCycles,
    ResourceStallCycles,
    L1dHit,
    L1dMiss,
    L1dMissCycles,
    Cycles,
    UopsRetired,
    InstructionsRetired,
}

impl fmt::Display for StructuralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).unwrap();
        f.write_str(s.trim_matches('"'))
    }
}

/// How an event is triggered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTrigger {
    Structural(StructuralKind),
    /// Fired when one of the listed instruction class ids executes.
    Instructions(Vec<String>),
}

/// Whether the counter records events from uncommitted execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    SpeculativeCounted,
    RetirementCounted,
}

/// A PMU event definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDef {
    pub name: String,
    pub category: String,
    pub event_code: u8,
    pub umask: u8,
    pub description: String,
    pub trigger: EventTrigger,
    pub persistence: Persistence,
    /// Constant ambient increment accrued per measurement interval.
    pub baseline: u64,
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}{at}: {msg}")]
    Parse {
        path: String,
        at: String,
        msg: String,
    },
    #[error("duplicate event (code {code:#04x}, umask {umask:#04x}) for {name:?}")]
    DuplicateEvent { code: u8, umask: u8, name: String },
    #[error("duplicate event name {0:?}")]
    DuplicateName(String),
    #[error("event {name:?} declares an empty instruction trigger set")]
    EmptyTriggerSet { name: String },
    #[error(transparent)]
    Isa(#[from] IsaError),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, at: impl Into<String>, msg: impl Into<String>) -> IngestError {
    IngestError::Parse {
        path: path.display().to_string(),
        at: at.into(),
        msg: msg.into(),
    }
}

/// The loaded bank of event definitions.
#[derive(Debug, Default)]
pub struct Catalog {
    events: Vec<EventDef>,
    by_name: HashMap<String, u32>,
    tagged: Vec<u32>,
}

impl Catalog {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_events(events: Vec<EventDef>) -> Result<Self, IngestError> {
        let mut cat = Catalog::default();
        for ev in events {
            cat.push(ev)?;
        }
        Ok(cat)
    }

    fn push(&mut self, event: EventDef) -> Result<(), IngestError> {
        if self
            .events
            .iter()
            .any(|e| e.event_code == event.event_code && e.umask == event.umask)
        {
            return Err(IngestError::DuplicateEvent {
                code: event.event_code,
                umask: event.umask,
                name: event.name,
            });
        }
        if self.by_name.contains_key(&event.name) {
            return Err(IngestError::DuplicateName(event.name));
        }
        if let EventTrigger::Instructions(ids) = &event.trigger {
            if ids.is_empty() {
                return Err(IngestError::EmptyTriggerSet {
                    name: event.name.clone(),
                });
            }
        }
        let key = self.events.len() as u32;
        if matches!(event.trigger, EventTrigger::Instructions(_)) {
            self.tagged.push(key);
        }
        self.by_name.insert(event.name.clone(), key);
        self.events.push(event);
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, key: u32) -> Option<&EventDef> {
        self.events.get(key as usize)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[EventDef] {
        &self.events
    }

    /// Keys of events with an instruction trigger set.
    pub fn instruction_tagged_events(&self) -> &[u32] {
        &self.tagged
    }

    /// Keys of events whose counters record transient activity.
    pub fn speculative_counted(&self) -> Vec<u32> {
        (0..self.events.len() as u32)
            .filter(|&k| self.events[k as usize].persistence == Persistence::SpeculativeCounted)
            .collect()
    }
}

/// Raw catalog record as it appears in JSON. pmu-tools key spellings are
/// accepted as aliases; unknown keys are ignored.
#[derive(Debug, Deserialize)]
struct RawEventRecord {
    #[serde(alias = "EventName")]
    name: String,
    #[serde(default, alias = "Category")]
    category: Option<String>,
    #[serde(alias = "EventCode")]
    event_code: String,
    #[serde(alias = "UMask")]
    umask: String,
    #[serde(default, alias = "BriefDescription")]
    description: Option<String>,
    #[serde(default)]
    trigger: Option<EventTrigger>,
    #[serde(default)]
    persistence: Option<Persistence>,
    #[serde(default)]
    baseline: Option<u64>,
}

fn parse_hex8(field: &str, value: &str, path: &Path, name: &str) -> Result<u8, IngestError> {
    let trimmed = value.trim();
    let digits = trimmed
        .strip_prefix("0x")
        .or_else(|| trimmed.strip_prefix("0X"))
        .unwrap_or(trimmed);
    let wide = u64::from_str_radix(digits, 16)
        .map_err(|_| parse_err(path, format!(" (event {name:?})"), format!("bad {field} {value:?}")))?;
    u8::try_from(wide).map_err(|_| {
        parse_err(
            path,
            format!(" (event {name:?})"),
            format!("{field} {value:?} exceeds 8 bits"),
        )
    })
}

fn load_catalog_file(path: &Path, provenance: &str) -> Result<Vec<EventDef>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw: Vec<RawEventRecord> = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, format!(" at line {}", e.line()), e.to_string()))?;
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let event_code = parse_hex8("event_code", &r.event_code, path, &r.name)?;
        let umask = parse_hex8("umask", &r.umask, path, &r.name)?;
        out.push(EventDef {
            category: r.category.unwrap_or_default(),
            description: r.description.unwrap_or_default(),
            event_code,
            umask,
            trigger: r.trigger.unwrap_or(EventTrigger::Structural(StructuralKind::Cycles)),
            persistence: r.persistence.unwrap_or(Persistence::RetirementCounted),
            baseline: r.baseline.unwrap_or(0),
            name: r.name,
            provenance: provenance.to_string(),
        });
    }
    Ok(out)
}

/// Load an event catalog, optionally appending an augment file that shares
/// the schema. Duplicate (event_code, umask) pairs are rejected across
/// both files.
pub fn load_event_catalog(
    path: impl AsRef<Path>,
    augment: Option<&Path>,
) -> Result<Catalog, IngestError> {
    let path = path.as_ref();
    let mut events = load_catalog_file(path, &format!("catalog:{}", path.display()))?;
    if let Some(aug) = augment {
        events.extend(load_catalog_file(aug, &format!("augment:{}", aug.display()))?);
    }
    Catalog::from_events(events)
}

/// A raw instruction database record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInstrRecord {
    pub asm: String,
    pub extension: String,
}

/// Ingestion statistics surfaced to callers and reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub raw_records: usize,
    pub filtered_out: usize,
    pub classified: usize,
    pub ignored_attributes: u64,
    pub deduplicated_ids: usize,
}

/// Parse the instruction XML subset: every `<instruction asm="...">`
/// element, tagged with the enclosing `<extension name="...">`.
pub fn parse_instruction_xml(path: impl AsRef<Path>) -> Result<(Vec<RawInstrRecord>, u64), IngestError> {
    use quick_xml::events::Event;
    use quick_xml::Reader;

    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = Reader::from_str(&text);
    let mut records = Vec::new();
    let mut ignored_attributes: u64 = 0;
    let mut extension_stack: Vec<String> = Vec::new();

    let mut handle = |start: &quick_xml::events::BytesStart<'_>,
                      empty: bool,
                      extension_stack: &mut Vec<String>,
                      pos: u64|
     -> Result<(), IngestError> {
        let tag = String::from_utf8_lossy(start.name().as_ref()).to_string();
        match tag.as_str() {
            "extension" => {
                let mut name = String::new();
                for attr in start.attributes() {
                    let attr = attr.map_err(|e| {
                        parse_err(path, format!(" at offset {pos}"), e.to_string())
                    })?;
                    if attr.key.as_ref() == b"name" {
                        name = String::from_utf8_lossy(&attr.value).to_string();
                    } else {
                        ignored_attributes += 1;
                    }
                }
                if !empty {
                    extension_stack.push(name);
                }
            }
            "instruction" => {
                let mut asm: Option<String> = None;
                for attr in start.attributes() {
                    let attr = attr.map_err(|e| {
                        parse_err(path, format!(" at offset {pos}"), e.to_string())
                    })?;
                    if attr.key.as_ref() == b"asm" {
                        asm = Some(
                            attr.normalized_value(quick_xml::XmlVersion::default())
                                .map_err(|e| {
                                    parse_err(path, format!(" at offset {pos}"), e.to_string())
                                })?
                                .to_string(),
                        );
                    } else {
                        ignored_attributes += 1;
                    }
                }
                let asm = asm.ok_or_else(|| {
                    parse_err(
                        path,
                        format!(" at offset {pos}"),
                        "instruction element missing asm attribute",
                    )
                })?;
                if asm.trim().is_empty() {
                    return Err(parse_err(
                        path,
                        format!(" at offset {pos}"),
                        "instruction element has empty asm attribute",
                    ));
                }
                records.push(RawInstrRecord {
                    asm,
                    extension: extension_stack.last().cloned().unwrap_or_default(),
                });
            }
            _ => {}
        }
        Ok(())
    };

    loop {
        let pos = reader.buffer_position();
        match reader.read_event() {
            Ok(Event::Start(start)) => handle(&start, false, &mut extension_stack, pos)?,
            Ok(Event::Empty(start)) => handle(&start, true, &mut extension_stack, pos)?,
            Ok(Event::End(end)) => {
                if end.name().as_ref() == b"extension" {
                    extension_stack.pop();
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(parse_err(path, format!(" at offset {pos}"), e.to_string()));
            }
        }
    }
    Ok((records, ignored_attributes))
}

/// Declarative validity filter standing in for compile-and-run screening.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InstructionFilter {
    /// When present, only these extensions pass.
    #[serde(default)]
    pub allow_extensions: Option<Vec<String>>,
    #[serde(default)]
    pub deny_extensions: Vec<String>,
    #[serde(default)]
    pub deny_asm: Vec<String>,
}

impl InstructionFilter {
    pub fn accept_all() -> Self {
        Self::default()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| parse_err(path, format!(" at line {}", e.line()), e.to_string()))
    }

    pub fn accepts(&self, record: &RawInstrRecord) -> bool {
        if let Some(allow) = &self.allow_extensions {
            if !allow.iter().any(|e| e == &record.extension) {
                return false;
            }
        }
        if self.deny_extensions.iter().any(|e| e == &record.extension) {
            return false;
        }
        !self.deny_asm.iter().any(|a| a == &record.asm)
    }
}

/// Options for instruction-set ingestion.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub filter: InstructionFilter,
    pub mapping: Option<ExplicitMapping>,
    pub assignment: SignatureAssignment,
}

/// Load and classify an instruction database into the builtin set.
///
/// Deterministic and order-preserving: the same files yield identical id
/// assignments on every load. Duplicate normalized mnemonics get a
/// deterministic numeric suffix.
pub fn load_instruction_set(
    path: impl AsRef<Path>,
    options: &IngestOptions,
    catalog: &Catalog,
) -> Result<(InstructionSet, IngestStats), IngestError> {
    let (records, ignored_attributes) = parse_instruction_xml(path)?;
    let mut stats = IngestStats {
        raw_records: records.len(),
        ignored_attributes,
        ..Default::default()
    };

    let mut set = InstructionSet::base();
    let mut seen_ids: HashSet<String> = set.classes().iter().map(|c| c.id.clone()).collect();

    for record in &records {
        if !options.filter.accepts(record) {
            stats.filtered_out += 1;
            continue;
        }
        let provenance = format!("{}:{}", record.extension, record.asm);
        let mut class = classify(
            &record.asm,
            &provenance,
            options.mapping.as_ref(),
            &options.assignment,
            catalog,
        )?;
        // A record that normalizes onto an existing identical class (the
        // builtin nop, or an exact duplicate row) is reused; otherwise the
        // id gets a deterministic suffix.
        if seen_ids.contains(&class.id) {
            let existing = set.lookup(&class.id).map(|i| set.get(i).clone());
            let identical = existing
                .as_ref()
                .map(|e| e.kind == class.kind && e.signature == class.signature)
                .unwrap_or(false);
            if !identical {
                let base_id = class.id.clone();
                let mut n = 2;
                loop {
                    let candidate = format!("{base_id}_{n}");
                    if !seen_ids.contains(&candidate) {
                        class.id = candidate;
                        stats.deduplicated_ids += 1;
                        break;
                    }
                    n += 1;
                }
            }
        }
        seen_ids.insert(class.id.clone());
        set.insert(class)?;
        stats.classified += 1;
    }
    Ok((set, stats))
}

/// Load an explicit mnemonic-to-signature mapping file.
pub fn load_mapping(path: impl AsRef<Path>) -> Result<ExplicitMapping, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw: BTreeMap<String, Vec<(String, u32)>> = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, format!(" at line {}", e.line()), e.to_string()))?;
    Ok(raw)
}

/// Resolve the instruction trigger sets of `catalog` against a loaded
/// instruction set, producing per-event membership vectors over class
/// indices. Unknown ids are ignored: catalogs may name instructions that
/// a particular database load does not contain.
pub fn resolve_tagged_sets(catalog: &Catalog, iset: &InstructionSet) -> Vec<Option<Vec<u32>>> {
    catalog
        .events()
        .iter()
        .map(|ev| match &ev.trigger {
            EventTrigger::Instructions(ids) => Some(
                ids.iter()
                    .filter_map(|id| iset.lookup(id))
                    .collect::<Vec<u32>>(),
            ),
            EventTrigger::Structural(_) => None,
        })
        .collect()
}

/// Events an instruction class triggers through catalog-side tag sets.
pub fn classes_tagged_by(catalog: &Catalog, iset: &InstructionSet, event: u32) -> Vec<u32> {
    match catalog.get(event).map(|e| &e.trigger) {
        Some(EventTrigger::Instructions(ids)) => {
            ids.iter().filter_map(|id| iset.lookup(id)).collect()
        }
        _ => Vec::new(),
    }
}

pub type SharedCatalog = Arc<Catalog>;

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("pmuspill-core-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{}-{}", std::process::id(), name));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn catalog_roundtrip_minimal() {
        let path = write_tmp(
            "cat.json",
            r#"[{"name":"A.B","category":"A","event_code":"0x10","umask":"0x01",
                 "trigger":{"structural":"branch_mispredicted"},
                 "persistence":"speculative_counted","baseline":0}]"#,
        );
        let cat = load_event_catalog(&path, None).unwrap();
        assert_eq!(cat.len(), 1);
        let ev = cat.get(0).unwrap();
        assert_eq!(ev.event_code, 0x10);
        assert_eq!(ev.persistence, Persistence::SpeculativeCounted);
    }

    #[test]
    fn empty_catalog_is_valid() {
        let path = write_tmp("empty.json", "[]");
        let cat = load_event_catalog(&path, None).unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn oversized_event_code_rejected() {
        let path = write_tmp(
            "big.json",
            r#"[{"name":"X","event_code":"0x1FF","umask":"0x00"}]"#,
        );
        let err = load_event_catalog(&path, None).unwrap_err();
        assert!(matches!(err, IngestError::Parse { .. }), "{err}");
    }

    #[test]
    fn duplicate_code_umask_rejected() {
        let path = write_tmp(
            "dup.json",
            r#"[{"name":"X","event_code":"0x10","umask":"0x01"},
                {"name":"Y","event_code":"0x10","umask":"0x01"}]"#,
        );
        let err = load_event_catalog(&path, None).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateEvent { .. }));
    }

    #[test]
    fn pmu_tools_key_aliases_accepted() {
        let path = write_tmp(
            "pmutools.json",
            r#"[{"EventName":"CPU_CLK.THREAD","EventCode":"0x3C","UMask":"0x00",
                 "BriefDescription":"Core cycles","SampleAfterValue":"2000003"}]"#,
        );
        let cat = load_event_catalog(&path, None).unwrap();
        assert_eq!(cat.get(0).unwrap().name, "CPU_CLK.THREAD");
        assert_eq!(cat.get(0).unwrap().persistence, Persistence::RetirementCounted);
    }

    #[test]
    fn xml_subset_parses_and_counts_ignored_attrs() {
        let path = write_tmp(
            "instr.xml",
            r#"<?xml version="1.0"?>
<root>
  <extension name="AVX">
    <instruction asm="VADDPS (XMM, XMM, XMM)" category="arith" uops="1"/>
    <instruction asm="VMULPS (XMM, XMM, XMM)"/>
  </extension>
  <extension name="BASE">
    <instruction asm="NOP"/>
  </extension>
</root>"#,
        );
        let (records, ignored) = parse_instruction_xml(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].extension, "AVX");
        assert_eq!(records[2].extension, "BASE");
        assert_eq!(ignored, 2);
    }

    #[test]
    fn filter_rejecting_everything_yields_empty_set() {
        let path = write_tmp(
            "instr2.xml",
            r#"<root><extension name="AVX"><instruction asm="VXORPS (XMM, XMM, XMM)"/></extension></root>"#,
        );
        let cat = Catalog::empty();
        let options = IngestOptions {
            filter: InstructionFilter {
                allow_extensions: Some(vec![]),
                ..Default::default()
            },
            ..Default::default()
        };
        let (set, stats) = load_instruction_set(&path, &options, &cat).unwrap();
        assert_eq!(set.ingested().count(), 0);
        assert_eq!(stats.raw_records, 1);
        assert_eq!(stats.filtered_out, 1);
    }

    #[test]
    fn double_load_is_deterministic() {
        let path = write_tmp(
            "instr3.xml",
            r#"<root><extension name="SSE2">
                 <instruction asm="PADDQ (XMM, XMM)"/>
                 <instruction asm="PSUBQ (XMM, XMM)"/>
                 <instruction asm="NOP"/>
               </extension></root>"#,
        );
        let cat = Catalog::empty();
        let options = IngestOptions::default();
        let (a, _) = load_instruction_set(&path, &options, &cat).unwrap();
        let (b, _) = load_instruction_set(&path, &options, &cat).unwrap();
        let ids_a: Vec<_> = a.classes().iter().map(|c| c.id.clone()).collect();
        let ids_b: Vec<_> = b.classes().iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids_a, ids_b);
        // NOP collapses onto the builtin.
        assert_eq!(a.ingested().count(), 2);
    }
}
