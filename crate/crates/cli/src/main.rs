//! pmuspill: drive the PMU transient-leak simulator from the command
//! line. Subcommands: demo-leak, sweep, mitigation-eval, report.
//!
//! Progress goes to stderr; data goes to stdout and the configured
//! output files. Exit codes: 0 ok, 1 configuration or ingestion error,
//! 2 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use pmuspill_core::attack::{leak_bytes, sweep::SweepPlan, GadgetSpec, SecretPlant};
use pmuspill_core::catalog::{
    load_event_catalog, load_instruction_set, load_mapping, IngestOptions, InstructionFilter,
};
use pmuspill_core::config::RunConfig;
use pmuspill_core::env::SimEnv;
use pmuspill_core::isa::SignatureAssignment;
use pmuspill_core::mitigation::{tee_launch_check, LaunchStatus, MitigationPolicy};
use pmuspill_core::pmu::{NoiseParams, PmuPolicy};
use pmuspill_core::report::{format_rows_table, read_sweep_csv, write_sweep_csv, write_sweep_json};
use pmuspill_core::rng::SplitMix64;
use pmuspill_core::sim::SuppressionMode;
use pmuspill_core::Metrics;

#[derive(Parser)]
#[command(name = "pmuspill", version, about = "Deterministic PMU transient-leak simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Configuration file (flat JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Counter-file policy: vulnerable, retire_only, renamed, disabled.
    #[arg(long)]
    policy: Option<String>,
    /// Exception suppression: tsx_like or software_handler.
    #[arg(long)]
    suppression: Option<String>,
    /// Spurious-increment probability per gadget run.
    #[arg(long)]
    noise: Option<f64>,
    /// Gadget rounds per leaked byte.
    #[arg(long)]
    rounds: Option<u32>,
    /// Master seed (falls back to PMUSPILL_SEED, then 0 for quiet runs).
    #[arg(long)]
    seed: Option<u64>,
    /// Event catalog JSON.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Extra-events file appended to the catalog.
    #[arg(long)]
    augment: Option<PathBuf>,
    /// Instruction database XML.
    #[arg(long)]
    instructions: Option<PathBuf>,
    /// Validity filter JSON.
    #[arg(long)]
    filter: Option<PathBuf>,
    /// Explicit mnemonic-to-signature mapping JSON.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Sweep scenario: s1, s2 or both.
    #[arg(long)]
    scenario: Option<String>,
    /// Gadget executions per sweep cell.
    #[arg(long)]
    reps: Option<u32>,
    /// Event leaked in demo mode.
    #[arg(long)]
    event: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV output path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Cap the number of events tested (smoke runs).
    #[arg(long)]
    max_events: Option<usize>,
    /// Cap the number of instruction classes tested (smoke runs).
    #[arg(long)]
    max_instructions: Option<usize>,
    /// Enable the TEE launch gate.
    #[arg(long)]
    tee_gate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Plant a secret, leak every byte, and report accuracy and
    /// throughput.
    DemoLeak {
        #[command(flatten)]
        common: CommonArgs,
        /// Secret as a hex string (e.g. deadbeef).
        #[arg(long, conflicts_with = "secret_file")]
        secret: Option<String>,
        /// Secret read from a file.
        #[arg(long)]
        secret_file: Option<PathBuf>,
    },
    /// Iterate event x instruction space for vulnerable counters.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the same leak workload under every policy and compare.
    MitigationEval {
        #[command(flatten)]
        common: CommonArgs,
        /// Bytes leaked per policy row.
        #[arg(long, default_value_t = 64)]
        bytes: usize,
    },
    /// Pretty-print a saved sweep CSV.
    Report {
        /// CSV file written by the sweep subcommand.
        path: PathBuf,
    },
}

fn parse_policy(s: &str) -> Result<PmuPolicy, String> {
    match s.to_ascii_lowercase().as_str() {
        "vulnerable" => Ok(PmuPolicy::Vulnerable),
        "retire_only" | "retire-only" => Ok(PmuPolicy::RetireOnly),
        "renamed" => Ok(PmuPolicy::Renamed),
        "disabled" => Ok(PmuPolicy::Disabled),
        other => Err(format!("unknown policy {other:?}")),
    }
}

fn parse_suppression(s: &str) -> Result<SuppressionMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "tsx" | "tsx_like" | "tsx-like" => Ok(SuppressionMode::TsxLike),
        "software" | "software_handler" | "software-handler" => {
            Ok(SuppressionMode::SoftwareHandler)
        }
        other => Err(format!("unknown suppression mode {other:?}")),
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(config_err)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.policy {
        cfg.policy = parse_policy(p).map_err(CliError::Config)?;
    }
    if let Some(s) = &common.suppression {
        cfg.suppression = parse_suppression(s).map_err(CliError::Config)?;
    }
    if let Some(n) = common.noise {
        cfg.noise = n;
    }
    if let Some(r) = common.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(p) = &common.catalog {
        cfg.catalog = p.clone();
    }
    if let Some(p) = &common.augment {
        cfg.augment = Some(p.clone());
    }
    if let Some(p) = &common.instructions {
        cfg.instructions = p.clone();
    }
    if let Some(p) = &common.filter {
        cfg.filter = Some(p.clone());
    }
    if let Some(p) = &common.mapping {
        cfg.mapping = Some(p.clone());
    }
    if let Some(s) = &common.scenario {
        cfg.scenario = s.clone();
    }
    if let Some(r) = common.reps {
        cfg.reps = r;
    }
    if let Some(e) = &common.event {
        cfg.event = e.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(p) = &common.out_csv {
        cfg.out_csv = Some(p.clone());
    }
    if let Some(p) = &common.out_json {
        cfg.out_json = Some(p.clone());
    }
    if let Some(m) = common.max_events {
        cfg.max_events = Some(m);
    }
    if let Some(m) = common.max_instructions {
        cfg.max_instructions = Some(m);
    }
    if common.tee_gate {
        cfg.tee_gate = true;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn build_env(cfg: &RunConfig) -> Result<SimEnv, CliError> {
    let seed = cfg.effective_seed().map_err(config_err)?;
    eprintln!("loading catalog {}", cfg.catalog.display());
    let catalog = Arc::new(
        load_event_catalog(&cfg.catalog, cfg.augment.as_deref()).map_err(config_err)?,
    );
    eprintln!("loaded {} events", catalog.len());
    let filter = match &cfg.filter {
        Some(path) => InstructionFilter::from_file(path).map_err(config_err)?,
        None => InstructionFilter::accept_all(),
    };
    let mapping = match &cfg.mapping {
        Some(path) => Some(load_mapping(path).map_err(config_err)?),
        None => None,
    };
    let options = IngestOptions {
        filter,
        mapping,
        assignment: SignatureAssignment {
            attach_probability: cfg.signature_probability,
            seed: cfg.signature_seed,
        },
    };
    eprintln!("loading instruction database {}", cfg.instructions.display());
    let (iset, stats) =
        load_instruction_set(&cfg.instructions, &options, &catalog).map_err(config_err)?;
    eprintln!(
        "parsed {} records, {} filtered out, {} classified ({} attribute(s) ignored)",
        stats.raw_records, stats.filtered_out, stats.classified, stats.ignored_attributes
    );
    let mut env = SimEnv::new(catalog, Arc::new(iset));
    env.seed = seed;
    env.noise = NoiseParams {
        p: cfg.noise,
        p_burst: cfg.noise_burst,
    };
    env.suppression = cfg.suppression;
    env.sim.clock_hz = cfg.clock_hz;
    let policy = MitigationPolicy {
        pmu_policy: cfg.policy,
        tee_gate: cfg.tee_gate,
        per_event_disable: cfg.per_event_disable.clone(),
    };
    pmuspill_core::mitigation::apply_policy(&mut env, policy).map_err(config_err)?;
    Ok(env)
}

fn parse_hex_secret(s: &str) -> Result<Vec<u8>, CliError> {
    let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if !cleaned.len().is_multiple_of(2) || cleaned.is_empty() {
        return Err(CliError::Config(format!(
            "hex secret must have an even, nonzero number of digits, got {}",
            cleaned.len()
        )));
    }
    (0..cleaned.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&cleaned[i..i + 2], 16)
                .map_err(|_| CliError::Config(format!("bad hex at offset {i}")))
        })
        .collect()
}

fn gadget_for(cfg: &RunConfig) -> GadgetSpec {
    GadgetSpec {
        suppression: cfg.suppression,
        ..Default::default()
    }
}

fn cmd_demo_leak(
    common: &CommonArgs,
    secret: Option<&str>,
    secret_file: Option<&PathBuf>,
) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let env = build_env(&cfg)?;

    let bytes: Vec<u8> = match (secret, secret_file) {
        (Some(hex), None) => parse_hex_secret(hex)?,
        (None, Some(path)) => std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read secret file: {e}")))?,
        (None, None) => {
            // No secret given: leak a seeded random 64-byte payload.
            let mut rng = SplitMix64::new(env.seed ^ 0x5EC2E7);
            (0..64).map(|_| rng.next_below(256) as u8).collect()
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if bytes.is_empty() {
        return Err(CliError::Config("secret is empty".to_string()));
    }

    if tee_launch_check(&env) == LaunchStatus::Refused {
        eprintln!(
            "tee launch check: REFUSED (pmu enabled under gating); secrets stay unprovisioned"
        );
    }

    let spec = gadget_for(&cfg);
    let plant = SecretPlant {
        bytes: bytes.clone(),
        base: spec.secret_addr,
    };
    eprintln!(
        "leaking {} byte(s) via {} rounds of event {}",
        bytes.len(),
        cfg.rounds,
        cfg.event
    );
    let outcomes = leak_bytes(&env, &spec, &cfg.event, cfg.rounds, &plant, cfg.jobs)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    let recovered: Vec<String> = outcomes
        .iter()
        .map(|o| match &o.decoded {
            Ok(b) => format!("{b:02x}"),
            Err(_) => "??".to_string(),
        })
        .collect();
    println!("recovered: {}", recovered.join(""));

    let metrics = Metrics::from_outcomes(&bytes, &outcomes, cfg.clock_hz);
    println!(
        "bytes: {} correct: {} wrong: {} failed: {}",
        metrics.bytes_total, metrics.bytes_correct, metrics.bytes_wrong, metrics.bytes_failed
    );
    println!("error_rate: {:.4}%", metrics.error_rate * 100.0);
    println!("executions_per_byte: {:.0}", metrics.executions_per_byte);
    println!("cycles_per_byte: {:.0}", metrics.cycles_per_byte);
    println!(
        "modeled_throughput: {:.1} B/s ({:.3} KB/s) at {:.2e} Hz",
        metrics.throughput_bps,
        metrics.throughput_bps / 1000.0,
        cfg.clock_hz
    );
    if let Some(path) = &cfg.out_json {
        let payload = serde_json::json!({
            "recovered": recovered,
            "metrics": metrics,
        });
        std::fs::write(path, serde_json::to_string_pretty(&payload).unwrap())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(common: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let env = build_env(&cfg)?;
    let scenarios = pmuspill_core::Scenario::parse(&cfg.scenario)
        .ok_or_else(|| CliError::Config(format!("bad scenario {:?}", cfg.scenario)))?;

    let mut events: Vec<String> =
        env.catalog.events().iter().map(|e| e.name.clone()).collect();
    if let Some(cap) = cfg.max_events {
        events.truncate(cap);
    }
    let mut instructions: Vec<String> = env
        .iset
        .ingested()
        .map(|i| env.iset.get(i).id.clone())
        .collect();
    if let Some(cap) = cfg.max_instructions {
        instructions.truncate(cap);
    }

    let plan = SweepPlan {
        scenarios,
        reps: cfg.reps,
        events,
        instructions,
        jobs: cfg.jobs,
        spec: gadget_for(&cfg),
        ..Default::default()
    };
    eprintln!(
        "sweeping {} event(s) x {} instruction(s) x {} scenario(s), reps {}",
        plan.events.len(),
        plan.instructions.len(),
        plan.scenarios.len(),
        plan.reps
    );
    let report =
        pmuspill_core::sweep(&env, &plan).map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!(
        "tested {} cells ({} gadget executions)",
        report.cells_tested, report.gadget_executions
    );

    // Summary table: rows for the events found vulnerable somewhere.
    let vulnerable_rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| report.vulnerable_events.contains(&r.event))
        .cloned()
        .collect();
    println!("vulnerable events: {}", report.vulnerable_events.len());
    print!("{}", format_rows_table(&vulnerable_rows));

    if let Some(path) = &cfg.out_csv {
        write_sweep_csv(&report, path).map_err(|e| CliError::Internal(e.to_string()))?;
        eprintln!("wrote {}", path.display());
    }
    if let Some(path) = &cfg.out_json {
        write_sweep_json(&report, path).map_err(|e| CliError::Internal(e.to_string()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_mitigation_eval(common: &CommonArgs, bytes: usize) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let base_env = build_env(&cfg)?;

    let mut rng = SplitMix64::new(base_env.seed ^ 0x317162);
    let secret: Vec<u8> = (0..bytes).map(|_| rng.next_below(256) as u8).collect();
    let spec = gadget_for(&cfg);
    let plant = SecretPlant {
        bytes: secret.clone(),
        base: spec.secret_addr,
    };

    println!(
        "{:<22}  {:<8}  {:>9}  {:>9}  {:>8}  failure mode",
        "configuration", "launch", "correct", "failed", "accuracy"
    );
    let rows: Vec<(&str, PmuPolicy, bool)> = vec![
        ("vulnerable", PmuPolicy::Vulnerable, false),
        ("retire_only", PmuPolicy::RetireOnly, false),
        ("renamed", PmuPolicy::Renamed, false),
        ("disabled", PmuPolicy::Disabled, false),
        ("tee_gate+vulnerable", PmuPolicy::Vulnerable, true),
    ];
    for (label, policy, tee_gate) in rows {
        let mut env = base_env.clone();
        env.policy.pmu_policy = policy;
        env.policy.tee_gate = tee_gate;
        let launch = tee_launch_check(&env);
        let outcomes = leak_bytes(&env, &spec, &cfg.event, cfg.rounds, &plant, cfg.jobs)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let metrics = Metrics::from_outcomes(&secret, &outcomes, cfg.clock_hz);
        let mode = if metrics.bytes_failed == metrics.bytes_total {
            "all decode failures"
        } else if metrics.bytes_correct == metrics.bytes_total {
            "full recovery"
        } else if metrics.accuracy() <= 2.0 / 256.0 {
            "chance-level recovery"
        } else {
            "partial recovery"
        };
        println!(
            "{:<22}  {:<8}  {:>9}  {:>9}  {:>7.2}%  {}",
            label,
            match launch {
                LaunchStatus::LaunchOk => "ok",
                LaunchStatus::Refused => "refused",
            },
            metrics.bytes_correct,
            metrics.bytes_failed,
            metrics.accuracy() * 100.0,
            mode
        );
    }

    // Profiling-fidelity check: a benign fault-free workload must count
    // identically under renamed and stock policies.
    let program = profiling_benchmark(&base_env);
    let counts_vulnerable = profile_counts(&base_env, PmuPolicy::Vulnerable, &program)?;
    let counts_renamed = profile_counts(&base_env, PmuPolicy::Renamed, &program)?;
    let identical = counts_vulnerable == counts_renamed;
    println!(
        "profiling fidelity (renamed vs vulnerable on fault-free benchmark): {}",
        if identical { "bit-identical" } else { "DIVERGED" }
    );
    if !identical {
        return Err(CliError::Internal(
            "renamed policy altered fault-free profiling counts".to_string(),
        ));
    }
    Ok(())
}

fn profiling_benchmark(env: &SimEnv) -> pmuspill_core::Program {
    let mut b = pmuspill_core::isa::ProgramBuilder::new(&env.iset);
    b.mov(0, 0x1000);
    b.mov(1, 0x2000);
    b.mov(2, 5);
    for i in 0..40 {
        b.store(0, 2);
        b.load(3, 0);
        b.cmp(3, 2);
        // Never-taken branches: the fresh predictor agrees, so the
        // benchmark is mispredict-free.
        b.jne(&format!("skip_{i}"));
        b.load(4, 1);
        b.label(format!("skip_{i}"));
        b.clflush(1);
        b.nop();
    }
    b.fence();
    b.finish().expect("benchmark assembles")
}

fn profile_counts(
    env: &SimEnv,
    policy: PmuPolicy,
    program: &pmuspill_core::Program,
) -> Result<Vec<u64>, CliError> {
    let mut env = env.clone();
    env.policy.pmu_policy = policy;
    let mut pmu = env.counter_file(&[0xBE7C]);
    let mut names = Vec::new();
    for (slot, ev) in env.catalog.events().iter().take(env.sim.slots).enumerate() {
        pmu.program_counter(slot, &ev.name, &env.iset)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        names.push(ev.name.clone());
    }
    let mut state = pmuspill_core::MachineState::new(&env.sim);
    pmuspill_core::run(
        program,
        &mut state,
        &mut pmu,
        &env.iset,
        &env.sim,
        pmuspill_core::RunOptions::default(),
    )
    .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok((0..names.len()).map(|s| pmu.peek(s).unwrap_or(0)).collect())
}

fn cmd_report(path: &PathBuf) -> Result<(), CliError> {
    let rows = read_sweep_csv(path).map_err(config_err)?;
    print!("{}", format_rows_table(&rows));
    let vulnerable: Vec<_> = rows.iter().filter(|r| r.vulnerable).collect();
    println!("rows: {}  vulnerable rows: {}", rows.len(), vulnerable.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DemoLeak {
            common,
            secret,
            secret_file,
        } => cmd_demo_leak(common, secret.as_deref(), secret_file.as_ref()),
        Command::Sweep { common } => cmd_sweep(common),
        Command::MitigationEval { common, bytes } => cmd_mitigation_eval(common, *bytes),
        Command::Report { path } => cmd_report(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
