//! End-to-end checks of the leak pipeline on the shipped sample inputs.

use std::path::Path;
use std::sync::Arc;

use pmuspill_core::attack::{leak_byte, sweep::Scenario, GadgetSpec, SecretPlant};
use pmuspill_core::catalog::{load_event_catalog, load_instruction_set, IngestOptions, InstructionFilter};
use pmuspill_core::env::SimEnv;
use pmuspill_core::pmu::PmuPolicy;
use pmuspill_core::{Decode, DecodeFailure, SuppressionMode};

fn data(file: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
}

fn sample_env() -> SimEnv {
    let catalog = Arc::new(
        load_event_catalog(data("skylake_sample.json"), Some(&data("skylake_augment.json")))
            .expect("catalog loads"),
    );
    let options = IngestOptions {
        filter: InstructionFilter::from_file(data("instruction_filter.json")).expect("filter"),
        ..Default::default()
    };
    let (iset, stats) =
        load_instruction_set(data("instructions_sample.xml"), &options, &catalog).expect("iset");
    assert_eq!(stats.classified, 3069);
    SimEnv::new(catalog, Arc::new(iset))
}

fn plant(byte: u8) -> SecretPlant {
    SecretPlant::single(byte, GadgetSpec::default().secret_addr)
}

#[test]
fn leak_single_byte_with_mispredict_event() {
    let env = sample_env();
    let spec = GadgetSpec::default();
    let outcome = leak_byte(&env, &spec, "BR_MISP_EXEC.ALL_BRANCHES", 1, &plant(0x5A)).unwrap();
    assert_eq!(outcome.decoded, Ok(0x5A), "per-round: {:?}", outcome.per_round);
    // One round over 256 values with 5 trainings plus the probe.
    assert_eq!(outcome.core_executions, 256 * 6);
    // The delta at the secret index is the unique outlier; every other
    // window shares one common value.
    let trace = &outcome.traces[0];
    let common = trace.deltas[0];
    assert_ne!(trace.deltas[0x5A], common);
    for (i, &d) in trace.deltas.iter().enumerate() {
        if i != 0x5A {
            assert_eq!(d, common, "window {i} deviates from the common delta");
        }
    }
}

#[test]
fn leak_fails_under_retire_only() {
    let env = {
        let mut e = sample_env();
        e.policy.pmu_policy = PmuPolicy::RetireOnly;
        e
    };
    let spec = GadgetSpec::default();
    let outcome = leak_byte(&env, &spec, "BR_MISP_EXEC.ALL_BRANCHES", 2, &plant(0x77)).unwrap();
    assert!(outcome.decoded.is_err(), "got {:?}", outcome.decoded);
    // All 256 deltas equal: the policy hides the divergence entirely.
    for trace in &outcome.traces {
        let first = trace.deltas[0];
        assert!(trace.deltas.iter().all(|&d| d == first));
    }
}

#[test]
fn leak_all_byte_values_noiselessly() {
    let env = sample_env();
    let spec = GadgetSpec::default();
    for byte in [0x00u8, 0x01, 0x41, 0x80, 0xFE, 0xFF] {
        let outcome = leak_byte(&env, &spec, "BR_MISP_EXEC.ALL_BRANCHES", 1, &plant(byte)).unwrap();
        assert_eq!(outcome.decoded, Ok(byte));
    }
}

#[test]
fn software_handler_decodes_identically() {
    let env = sample_env();
    let tsx = GadgetSpec::default();
    let sw = GadgetSpec {
        suppression: SuppressionMode::SoftwareHandler,
        ..Default::default()
    };
    for byte in [0x00u8, 0x33, 0xC8] {
        let a = leak_byte(&env, &tsx, "ICACHE_64B.IFTAG_HIT", 1, &plant(byte)).unwrap();
        let b = leak_byte(&env, &sw, "ICACHE_64B.IFTAG_HIT", 1, &plant(byte)).unwrap();
        assert_eq!(a.decoded, Ok(byte));
        assert_eq!(b.decoded, Ok(byte));
        // The handler shifts every delta by the same constant.
        let da = &a.traces[0].deltas;
        let db = &b.traces[0].deltas;
        let shift = db[0] - da[0];
        assert!(da.iter().zip(db).all(|(&x, &y)| y - x == shift));
    }
}

#[test]
fn tagged_event_triggers_through_either_slot() {
    let env = sample_env();
    let key = env
        .catalog
        .lookup("CYCLE_ACTIVITY.CYCLES_L1D_MISS")
        .unwrap();
    let trigger_ids = match &env.catalog.get(key).unwrap().trigger {
        pmuspill_core::EventTrigger::Instructions(ids) => ids.clone(),
        other => panic!("expected tagged trigger, got {other:?}"),
    };
    let class = trigger_ids
        .iter()
        .find(|id| env.iset.lookup(id).is_some())
        .expect("a trigger class exists in the loaded set")
        .clone();

    // Equal-slot placement (scenario S2): the class executes only on the
    // secret-matching window.
    let s2 = GadgetSpec {
        equal_slot: class.clone(),
        ..Default::default()
    };
    let outcome = leak_byte(&env, &s2, "CYCLE_ACTIVITY.CYCLES_L1D_MISS", 1, &plant(0x5A)).unwrap();
    assert_eq!(outcome.decoded, Ok(0x5A));

    // Unequal-slot placement (scenario S1): the class fires on every
    // window except the secret-matching one, where the wrong-path bubble
    // is canceled before its class events deliver.
    let s1 = GadgetSpec {
        unequal_slot: class,
        ..Default::default()
    };
    let outcome = leak_byte(&env, &s1, "CYCLE_ACTIVITY.CYCLES_L1D_MISS", 1, &plant(0x5A)).unwrap();
    assert_eq!(outcome.decoded, Ok(0x5A));
}

#[test]
fn identical_slots_and_nonstructural_event_are_inconclusive() {
    // Path-divergence necessity: when both slots carry the same class,
    // an event fired only by that class sees the same delta on every
    // window and cannot encode the secret.
    let env = sample_env();
    let key = env
        .catalog
        .lookup("CYCLE_ACTIVITY.STALLS_MEM_ANY")
        .unwrap();
    let trigger_ids = match &env.catalog.get(key).unwrap().trigger {
        pmuspill_core::EventTrigger::Instructions(ids) => ids.clone(),
        other => panic!("expected tagged trigger, got {other:?}"),
    };
    let class = trigger_ids
        .iter()
        .find(|id| env.iset.lookup(id).is_some())
        .expect("a trigger class exists in the loaded set")
        .clone();
    let spec = GadgetSpec {
        unequal_slot: class.clone(),
        equal_slot: class,
        ..Default::default()
    };
    let outcome = leak_byte(&env, &spec, "CYCLE_ACTIVITY.STALLS_MEM_ANY", 2, &plant(0x5A)).unwrap();
    assert!(
        outcome.per_round.iter().all(|d| *d == Decode::Inconclusive),
        "identical slots must not be decodable: {:?}",
        outcome.per_round
    );
    assert_eq!(outcome.decoded, Err(DecodeFailure::NoConclusiveRounds));
}

#[test]
fn sweep_matches_per_cell_brute_force() {
    // Oracle: rerun every (event, scenario, class) cell as an individual
    // single-event leak and compare verdicts with the batched sweep.
    let env = sample_env();
    let events: Vec<String> = [
        "BR_MISP_EXEC.ALL_BRANCHES",
        "INT_MISC.RECOVERY_CYCLES",
        "INST_RETIRED.ANY_P",
        "UOPS_RETIRED.RETIRE_SLOTS",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let instructions: Vec<String> = env
        .iset
        .ingested()
        .take(6)
        .map(|i| env.iset.get(i).id.clone())
        .collect();
    let plan = pmuspill_core::SweepPlan {
        events: events.clone(),
        instructions: instructions.clone(),
        reps: 3,
        collect_cells: true,
        ..Default::default()
    };
    let report = pmuspill_core::sweep(&env, &plan).unwrap();
    let cells = report.cells.as_ref().unwrap();
    assert_eq!(cells.len(), 4 * 6 * 2);

    for cell in cells {
        let mut spec = plan.spec.clone();
        match cell.scenario {
            Scenario::S1 => spec.unequal_slot = cell.class.clone(),
            Scenario::S2 => spec.equal_slot = cell.class.clone(),
        }
        let outcome = leak_byte(&env, &spec, &cell.event, plan.reps, &plant(plan.known_secret))
            .unwrap();
        let trigger = outcome.decoded == Ok(plan.known_secret);
        assert_eq!(
            trigger, cell.trigger,
            "brute-force disagrees on ({}, {:?}, {})",
            cell.event, cell.scenario, cell.class
        );
    }
}

#[test]
fn noisy_majority_vote_meets_monte_carlo_bound() {
    // 1000 seeded majority-vote trials at noise p = 0.05, R = 10, true
    // byte 0x5A. The bound comes from the abstract noise model: a trial
    // fails only when every round's measurement window catches a stray
    // increment, which at in-window fraction ~0.12 has probability
    // (0.05 * 0.12)^10; the bound below leaves three orders of margin.
    const MC_BOUND: f64 = 0.995;
    let mut env = sample_env().clone();
    env.noise.p = 0.05;
    let spec = GadgetSpec::default();
    let trials = 1000;
    let mut ok = 0u32;
    for trial in 0..trials {
        env.seed = pmuspill_core::rng::derive_seed(0x305A, &[trial as u64]);
        let outcome = leak_byte(&env, &spec, "BR_MISP_EXEC.ALL_BRANCHES", 10, &plant(0x5A)).unwrap();
        if outcome.decoded == Ok(0x5A) {
            ok += 1;
        }
    }
    let rate = ok as f64 / trials as f64;
    assert!(
        rate >= MC_BOUND,
        "majority-vote success rate {rate:.4} below Monte-Carlo bound {MC_BOUND}"
    );
}

#[test]
fn sweep_smoke_flags_only_speculative_events() {
    let env = sample_env();
    // A small but representative event slate: structural vulnerable,
    // tagged vulnerable, and safe events of both flavors.
    let events: Vec<String> = [
        "BR_MISP_EXEC.ALL_BRANCHES",
        "BR_INST_EXEC.NONTAKEN_CONDITIONAL",
        "INT_MISC.RECOVERY_CYCLES",
        "CYCLE_ACTIVITY.STALLS_MEM_ANY",
        "ILD_STALL.LCP",
        "INST_RETIRED.ANY_P",
        "CPU_CLK_UNHALTED.THREAD_P",
        "MEM_LOAD_RETIRED.L1_HIT",
        "FP_ARITH_INST_RETIRED.SCALAR_SINGLE",
        "BR_MISP_RETIRED.ALL_BRANCHES",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let instructions: Vec<String> = env
        .iset
        .ingested()
        .take(40)
        .map(|i| env.iset.get(i).id.clone())
        .collect();
    // Fold the tagged events' known triggers in so their S2 rows light up.
    let mut instructions = instructions;
    for name in ["CYCLE_ACTIVITY.STALLS_MEM_ANY", "ILD_STALL.LCP"] {
        let key = env.catalog.lookup(name).unwrap();
        if let pmuspill_core::EventTrigger::Instructions(ids) = &env.catalog.get(key).unwrap().trigger {
            let id = ids.iter().find(|id| env.iset.lookup(id).is_some()).unwrap();
            if !instructions.contains(id) {
                instructions.push(id.clone());
            }
        }
    }

    let plan = pmuspill_core::SweepPlan {
        events: events.clone(),
        instructions,
        reps: 3,
        ..Default::default()
    };
    let report = pmuspill_core::sweep(&env, &plan).unwrap();

    let expected_vulnerable: Vec<&str> = vec![
        "BR_INST_EXEC.NONTAKEN_CONDITIONAL",
        "BR_MISP_EXEC.ALL_BRANCHES",
        "CYCLE_ACTIVITY.STALLS_MEM_ANY",
        "ILD_STALL.LCP",
        "INT_MISC.RECOVERY_CYCLES",
    ];
    assert_eq!(report.vulnerable_events, expected_vulnerable);

    // Structural vulnerable events trigger for every instruction choice.
    let n = plan.instructions.len() as u32;
    for name in [
        "BR_MISP_EXEC.ALL_BRANCHES",
        "BR_INST_EXEC.NONTAKEN_CONDITIONAL",
        "INT_MISC.RECOVERY_CYCLES",
    ] {
        assert_eq!(report.row(name, Scenario::S1).unwrap().trigger_count, n);
        assert_eq!(report.row(name, Scenario::S2).unwrap().trigger_count, n);
    }
    // Safe events never trigger anywhere.
    for name in [
        "INST_RETIRED.ANY_P",
        "CPU_CLK_UNHALTED.THREAD_P",
        "MEM_LOAD_RETIRED.L1_HIT",
        "FP_ARITH_INST_RETIRED.SCALAR_SINGLE",
        "BR_MISP_RETIRED.ALL_BRANCHES",
    ] {
        assert_eq!(report.row(name, Scenario::S1).unwrap().trigger_count, 0);
        assert_eq!(report.row(name, Scenario::S2).unwrap().trigger_count, 0);
    }
}
