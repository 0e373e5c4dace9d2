//! Event x instruction sweep: discover which counters can carry the leak
//! and which instruction classes trigger them.
//!
//! Scenario S1 fixes the equal slot to nop and iterates the unequal slot;
//! S2 does the opposite. A (event, class) cell is a trigger pair when a
//! majority-vote leak of a planted known byte recovers it exactly. Cells
//! are independent; classes run in parallel and events are batched onto
//! the counter file's slots, which changes nothing at noise zero and is
//! deterministic for a fixed configuration either way.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_gadget, leak_with_program, AttackError, GadgetSpec, SecretPlant};
use crate::env::SimEnv;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Equal slot fixed to nop; iterate the unequal slot.
    S1,
    /// Unequal slot fixed to nop; iterate the equal slot.
    S2,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<Scenario>> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Some(vec![Scenario::S1]),
            "s2" => Some(vec![Scenario::S2]),
            "both" => Some(vec![Scenario::S1, Scenario::S2]),
            _ => None,
        }
    }
}

/// What to sweep.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub scenarios: Vec<Scenario>,
    pub reps: u32,
    pub known_secret: u8,
    /// Event names; empty means the whole catalog.
    pub events: Vec<String>,
    /// Instruction class ids; empty means every ingested class.
    pub instructions: Vec<String>,
    pub jobs: usize,
    /// Collect per-cell verdicts (memory-heavy at full scale).
    pub collect_cells: bool,
    pub spec: GadgetSpec,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::S1, Scenario::S2],
            reps: 10,
            known_secret: 0x5A,
            events: Vec::new(),
            instructions: Vec::new(),
            jobs: 0,
            collect_cells: false,
            spec: GadgetSpec::default(),
        }
    }
}

/// Aggregated verdict for one (event, scenario).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub event: String,
    pub category: String,
    pub scenario: Scenario,
    pub trigger_count: u32,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellVerdict {
    pub event: String,
    pub scenario: Scenario,
    pub class: String,
    pub trigger: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Union of events vulnerable in any scenario, sorted by name.
    pub vulnerable_events: Vec<String>,
    pub cells_tested: u64,
    /// Gadget executions performed: cells x reps.
    pub gadget_executions: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<CellVerdict>>,
}

impl SweepReport {
    pub fn row(&self, event: &str, scenario: Scenario) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.event == event && r.scenario == scenario)
    }
}

/// Run the sweep described by `plan` under `env`.
pub fn sweep(env: &SimEnv, plan: &SweepPlan) -> Result<SweepReport, AttackError> {
    let event_names: Vec<String> = if plan.events.is_empty() {
        env.catalog.events().iter().map(|e| e.name.clone()).collect()
    } else {
        for name in &plan.events {
            if env.catalog.lookup(name).is_none() {
                return Err(AttackError::UnknownEvent(name.clone()));
            }
        }
        plan.events.clone()
    };
    let class_ids: Vec<String> = if plan.instructions.is_empty() {
        env.iset
            .ingested()
            .map(|i| env.iset.get(i).id.clone())
            .collect()
    } else {
        for id in &plan.instructions {
            if env.iset.lookup(id).is_none() {
                return Err(AttackError::InvalidSpec(format!(
                    "unknown instruction class {id:?}"
                )));
            }
        }
        plan.instructions.clone()
    };

    let slots = env.sim.slots.max(1);
    let batches: Vec<Vec<String>> = event_names
        .chunks(slots)
        .map(|c| c.to_vec())
        .collect();

    // Work units: (scenario, class). Results merge in deterministic order.
    let mut units: Vec<(Scenario, String)> = Vec::new();
    for &scenario in &plan.scenarios {
        for id in &class_ids {
            units.push((scenario, id.clone()));
        }
    }

    let run_unit = |(scenario, class_id): &(Scenario, String)| -> Result<Vec<(String, bool)>, AttackError> {
        let mut spec = plan.spec.clone();
        match scenario {
            Scenario::S1 => {
                spec.unequal_slot = class_id.clone();
                spec.equal_slot = "nop".to_string();
            }
            Scenario::S2 => {
                spec.unequal_slot = "nop".to_string();
                spec.equal_slot = class_id.clone();
            }
        }
        spec.read_slots = (0..slots as u8).collect();
        let program = build_gadget(&env.iset, &spec)?;
        let plant = SecretPlant::single(plan.known_secret, spec.secret_addr);
        let class_idx = env.iset.lookup(class_id).expect("validated") as u64;

        let mut verdicts = Vec::with_capacity(event_names.len());
        for (batch_idx, batch) in batches.iter().enumerate() {
            let names: Vec<&str> = batch.iter().map(|s| s.as_str()).collect();
            let stream = derive_seed(
                env.seed,
                &[*scenario as u64, class_idx, batch_idx as u64],
            );
            let outcomes =
                leak_with_program(env, &spec, &program, &names, plan.reps, &plant, stream)?;
            for (name, outcome) in batch.iter().zip(outcomes) {
                let trigger = outcome.decoded == Ok(plan.known_secret);
                verdicts.push((name.clone(), trigger));
            }
        }
        Ok(verdicts)
    };

    let results: Vec<(usize, Vec<(String, bool)>)> = if plan.jobs == 1 {
        units
            .iter()
            .enumerate()
            .map(|(i, u)| run_unit(u).map(|v| (i, v)))
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            units
                .par_iter()
                .enumerate()
                .map(|(i, u)| run_unit(u).map(|v| (i, v)))
                .collect::<Result<_, _>>()
        })?
    };

    // Deterministic aggregation regardless of execution order.
    let mut ordered = results;
    ordered.sort_by_key(|(i, _)| *i);

    let mut counts: std::collections::BTreeMap<(String, Scenario), u32> =
        std::collections::BTreeMap::new();
    for name in &event_names {
        for &scenario in &plan.scenarios {
            counts.insert((name.clone(), scenario), 0);
        }
    }
    let mut cells = plan.collect_cells.then(Vec::new);
    for (unit_idx, verdicts) in &ordered {
        let (scenario, class_id) = &units[*unit_idx];
        for (event, trigger) in verdicts {
            if *trigger {
                *counts.get_mut(&(event.clone(), *scenario)).expect("seeded") += 1;
            }
            if let Some(cells) = cells.as_mut() {
                cells.push(CellVerdict {
                    event: event.clone(),
                    scenario: *scenario,
                    class: class_id.clone(),
                    trigger: *trigger,
                });
            }
        }
    }

    let mut rows: Vec<SweepRow> = counts
        .into_iter()
        .map(|((event, scenario), trigger_count)| {
            let category = env
                .catalog
                .lookup(&event)
                .and_then(|k| env.catalog.get(k))
                .map(|e| e.category.clone())
                .unwrap_or_default();
            SweepRow {
                event,
                category,
                scenario,
                trigger_count,
                vulnerable: trigger_count > 0,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.event.cmp(&b.event).then(a.scenario.cmp(&b.scenario)));

    let mut vulnerable_events: Vec<String> = rows
        .iter()
        .filter(|r| r.vulnerable)
        .map(|r| r.event.clone())
        .collect();
    vulnerable_events.sort();
    vulnerable_events.dedup();

    let cells_tested = units.len() as u64 * event_names.len() as u64;
    Ok(SweepReport {
        rows,
        vulnerable_events,
        cells_tested,
        gadget_executions: cells_tested * plan.reps as u64,
        cells,
    })
}
