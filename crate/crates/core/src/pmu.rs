//! The PMU counter file: programming, event delivery, persistence
//! policies and the seeded ambient-noise model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, EventTrigger, Persistence, StructuralKind};
use crate::isa::InstructionSet;
use crate::rng::SplitMix64;

pub const DEFAULT_SLOTS: usize = 8;

/// Counter-file wide persistence policy. `Vulnerable` is stock hardware:
/// each event counts according to its own persistence class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmuPolicy {
    Vulnerable,
    RetireOnly,
    Renamed,
    Disabled,
}

impl PmuPolicy {
    pub const ALL: [PmuPolicy; 4] = [
        PmuPolicy::Vulnerable,
        PmuPolicy::RetireOnly,
        PmuPolicy::Renamed,
        PmuPolicy::Disabled,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PmuPolicy::Vulnerable => "vulnerable",
            PmuPolicy::RetireOnly => "retire_only",
            PmuPolicy::Renamed => "renamed",
            PmuPolicy::Disabled => "disabled",
        }
    }
}

/// Ambient spurious-increment model. `p` is the per-gadget-run probability
/// that a programmed counter gains one stray increment; `p_burst` adds a
/// short geometric burst, modeling an unisolated core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p: f64,
    #[serde(default)]
    pub p_burst: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { p: 0.0, p_burst: 0.0 }
    }
}

impl NoiseParams {
    pub fn silent() -> Self {
        Self::default()
    }

    pub fn is_silent(&self) -> bool {
        self.p <= 0.0 && self.p_burst <= 0.0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PmuError {
    #[error("invalid counter slot {0}")]
    InvalidSlot(usize),
    #[error("unknown event {0:?}")]
    UnknownEvent(String),
    #[error("event {0:?} is administratively disabled")]
    EventDisabled(String),
    #[error("pmu is disabled")]
    PmuDisabled,
    #[error("reading the pmu requires the root capability")]
    NoPrivilege,
    #[error("slot {0} is not programmed")]
    NotProgrammed(usize),
}

/// Compact membership set over instruction class indices.
#[derive(Debug, Clone, Default)]
struct ClassBitSet {
    words: Vec<u64>,
}

impl ClassBitSet {
    fn with_capacity(classes: usize) -> Self {
        Self {
            words: vec![0; classes.div_ceil(64)],
        }
    }

    fn insert(&mut self, idx: u32) {
        let w = idx as usize / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1u64 << (idx % 64);
    }

    #[inline]
    fn contains(&self, idx: u32) -> bool {
        let w = idx as usize / 64;
        self.words
            .get(w)
            .map(|word| word & (1u64 << (idx % 64)) != 0)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone)]
struct Slot {
    event: u32,
    structural: Option<StructuralKind>,
    tagged: Option<ClassBitSet>,
    persistence: Persistence,
    baseline: u64,
    count: u64,
    shadow: u64,
    /// Scheduled ambient increments: (land at uop index, amount).
    pending_noise: Vec<(u64, u64)>,
    spurious: u64,
}

pub(crate) const STRUCTURAL_KIND_COUNT: usize = 15;

/// The bank of programmable counters attached to one simulator instance.
///
/// Dispatch tables keep event delivery off the slot scan: structural
/// emissions touch only the slots listening for that kind, and
/// instruction emissions touch only tagged or signature-bound slots.
#[derive(Debug, Clone)]
pub struct CounterFile {
    catalog: Arc<Catalog>,
    slots: Vec<Option<Slot>>,
    policy: PmuPolicy,
    noise: NoiseParams,
    rng: SplitMix64,
    root_capability: bool,
    disabled_events: Vec<u32>,
    uops_seen: u64,
    kind_slots: [Vec<u8>; STRUCTURAL_KIND_COUNT],
    tagged_slots: Vec<u8>,
    event_slots: Vec<(u32, u8)>,
}

impl CounterFile {
    pub fn new(
        catalog: Arc<Catalog>,
        slots: usize,
        policy: PmuPolicy,
        noise: NoiseParams,
        seed: u64,
    ) -> Self {
        Self {
            catalog,
            slots: vec![None; slots],
            policy,
            noise,
            rng: SplitMix64::new(seed),
            root_capability: true,
            disabled_events: Vec::new(),
            uops_seen: 0,
            kind_slots: Default::default(),
            tagged_slots: Vec::new(),
            event_slots: Vec::new(),
        }
    }

    fn rebuild_dispatch(&mut self) {
        for list in &mut self.kind_slots {
            list.clear();
        }
        self.tagged_slots.clear();
        self.event_slots.clear();
        for (idx, slot) in self.slots.iter().enumerate() {
            let Some(slot) = slot else { continue };
            if let Some(kind) = slot.structural {
                self.kind_slots[kind as usize].push(idx as u8);
            }
            if slot.tagged.is_some() {
                self.tagged_slots.push(idx as u8);
            }
            self.event_slots.push((slot.event, idx as u8));
        }
    }

    pub fn policy(&self) -> PmuPolicy {
        self.policy
    }

    pub fn set_policy(&mut self, policy: PmuPolicy) {
        self.policy = policy;
    }

    pub fn set_root_capability(&mut self, root: bool) {
        self.root_capability = root;
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Administratively disable a set of events; programming them fails.
    pub fn set_disabled_events(&mut self, events: Vec<u32>) {
        self.disabled_events = events;
    }

    /// Bind `event_name` to `slot`, resetting its count. Rebinding an
    /// occupied slot replaces the previous binding.
    pub fn program_counter(
        &mut self,
        slot: usize,
        event_name: &str,
        iset: &InstructionSet,
    ) -> Result<(), PmuError> {
        if slot >= self.slots.len() {
            return Err(PmuError::InvalidSlot(slot));
        }
        let key = self
            .catalog
            .lookup(event_name)
            .ok_or_else(|| PmuError::UnknownEvent(event_name.to_string()))?;
        if self.disabled_events.contains(&key) {
            return Err(PmuError::EventDisabled(event_name.to_string()));
        }
        let def = self.catalog.get(key).expect("key from lookup");
        let (structural, tagged) = match &def.trigger {
            EventTrigger::Structural(kind) => (Some(*kind), None),
            EventTrigger::Instructions(ids) => {
                let mut set = ClassBitSet::with_capacity(iset.len());
                for id in ids {
                    if let Some(idx) = iset.lookup(id) {
                        set.insert(idx);
                    }
                }
                (None, Some(set))
            }
        };
        self.slots[slot] = Some(Slot {
            event: key,
            structural,
            tagged,
            persistence: def.persistence,
            baseline: def.baseline,
            count: 0,
            shadow: 0,
            pending_noise: Vec::new(),
            spurious: 0,
        });
        self.rebuild_dispatch();
        Ok(())
    }

    pub fn programmed_event(&self, slot: usize) -> Option<u32> {
        self.slots.get(slot).and_then(|s| s.as_ref()).map(|s| s.event)
    }

    /// Draw this run's ambient-noise schedule. `expected_uops` bounds where
    /// stray increments may land; anything not reached by run end is
    /// accrued by `end_run`.
    pub fn begin_run(&mut self, expected_uops: u64) {
        self.uops_seen = 0;
        if self.noise.is_silent() {
            for slot in self.slots.iter_mut().flatten() {
                slot.pending_noise.clear();
            }
            return;
        }
        let horizon = expected_uops.max(1);
        for slot in self.slots.iter_mut().flatten() {
            slot.pending_noise.clear();
            if self.rng.next_bool(self.noise.p) {
                slot.pending_noise.push((self.rng.next_below(horizon), 1));
            }
            if self.rng.next_bool(self.noise.p_burst) {
                let mut amount = 1;
                while amount < 8 && self.rng.next_bool(0.5) {
                    amount += 1;
                }
                slot.pending_noise.push((self.rng.next_below(horizon), amount));
            }
            slot.pending_noise.sort_unstable();
        }
    }

    /// Accrue any noise that never landed during the run.
    pub fn end_run(&mut self) {
        for slot in self.slots.iter_mut().flatten() {
            for &(_, amount) in slot.pending_noise.iter() {
                slot.spurious += amount;
            }
            slot.pending_noise.clear();
        }
    }

    #[inline]
    pub fn tick_uop(&mut self) {
        self.uops_seen += 1;
    }

    #[inline]
    fn bump(slot: &mut Slot, policy: PmuPolicy, inc: u64, transient: bool) {
        match policy {
            PmuPolicy::Vulnerable => {
                if !transient || slot.persistence == Persistence::SpeculativeCounted {
                    slot.count += inc;
                }
            }
            PmuPolicy::RetireOnly => {
                if !transient {
                    slot.count += inc;
                }
            }
            PmuPolicy::Renamed => {
                if transient {
                    if slot.persistence == Persistence::SpeculativeCounted {
                        slot.shadow += inc;
                    }
                } else {
                    slot.count += inc;
                }
            }
            PmuPolicy::Disabled => {}
        }
    }

    /// Deliver a structural event.
    #[inline]
    pub fn on_structural(&mut self, kind: StructuralKind, magnitude: u64, transient: bool) {
        let policy = self.policy;
        let slots = &mut self.slots;
        for &s in &self.kind_slots[kind as usize] {
            if let Some(slot) = slots[s as usize].as_mut() {
                Self::bump(slot, policy, magnitude, transient);
            }
        }
    }

    /// Deliver the execution of an instruction class: catalog-side tag
    /// sets match on the class index, instruction-side signatures match on
    /// the event key.
    #[inline]
    pub fn on_instruction(&mut self, class_idx: u32, signature: &[(u32, u32)], transient: bool) {
        let policy = self.policy;
        let slots = &mut self.slots;
        for &s in &self.tagged_slots {
            if let Some(slot) = slots[s as usize].as_mut() {
                if slot.tagged.as_ref().is_some_and(|t| t.contains(class_idx)) {
                    Self::bump(slot, policy, 1, transient);
                }
            }
        }
        for &(event, inc) in signature {
            for &(bound, s) in &self.event_slots {
                if bound == event {
                    if let Some(slot) = slots[s as usize].as_mut() {
                        Self::bump(slot, policy, inc as u64, transient);
                    }
                }
            }
        }
    }

    /// A transient region was squashed: renamed counters discard their
    /// pending increments.
    pub fn on_squash(&mut self) {
        if self.policy == PmuPolicy::Renamed {
            for slot in self.slots.iter_mut().flatten() {
                slot.shadow = 0;
            }
        }
    }

    /// A speculative region retired: renamed counters commit.
    pub fn on_retire(&mut self) {
        if self.policy == PmuPolicy::Renamed {
            for slot in self.slots.iter_mut().flatten() {
                slot.count += slot.shadow;
                slot.shadow = 0;
            }
        }
    }

    /// Read a programmed counter. Accrues the per-interval baseline and
    /// any ambient noise scheduled at or before the current micro-op.
    pub fn read(&mut self, slot: usize) -> Result<u64, PmuError> {
        if !self.root_capability {
            return Err(PmuError::NoPrivilege);
        }
        if self.policy == PmuPolicy::Disabled {
            return Err(PmuError::PmuDisabled);
        }
        let uops_seen = self.uops_seen;
        let s = self
            .slots
            .get_mut(slot)
            .ok_or(PmuError::InvalidSlot(slot))?
            .as_mut()
            .ok_or(PmuError::NotProgrammed(slot))?;
        s.count += s.baseline;
        while let Some(&(land, amount)) = s.pending_noise.first() {
            if land <= uops_seen {
                s.spurious += amount;
                s.pending_noise.remove(0);
            } else {
                break;
            }
        }
        Ok(s.count + s.spurious)
    }

    /// Peek at a counter without side effects (no baseline, no noise
    /// accrual, no privilege check). Used by transient reads and tests.
    pub fn peek(&self, slot: usize) -> Option<u64> {
        self.slots
            .get(slot)
            .and_then(|s| s.as_ref())
            .map(|s| s.count + s.spurious)
    }
}
