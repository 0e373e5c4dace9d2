//! Simulation environment: loaded catalog + instruction set + policies,
//! bundled so harness code can spin up per-run simulator instances.

use std::sync::Arc;

use crate::catalog::Catalog;
use crate::isa::InstructionSet;
use crate::mitigation::MitigationPolicy;
use crate::pmu::{CounterFile, NoiseParams};
use crate::rng::derive_seed;
use crate::sim::{MachineState, SimConfig, SuppressionMode};

/// Everything a leak, sweep or profiling run needs. Cheap to clone; the
/// catalog and instruction set are shared.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub catalog: Arc<Catalog>,
    pub iset: Arc<InstructionSet>,
    pub sim: SimConfig,
    pub policy: MitigationPolicy,
    pub noise: NoiseParams,
    pub suppression: SuppressionMode,
    pub seed: u64,
}

impl SimEnv {
    pub fn new(catalog: Arc<Catalog>, iset: Arc<InstructionSet>) -> Self {
        Self {
            catalog,
            iset,
            sim: SimConfig::default(),
            policy: MitigationPolicy::default(),
            noise: NoiseParams::silent(),
            suppression: SuppressionMode::TsxLike,
            seed: 0,
        }
    }

    /// A counter file honoring the environment policy, seeded from the
    /// environment seed and a caller-supplied stream label.
    pub fn counter_file(&self, stream: &[u64]) -> CounterFile {
        let mut pmu = CounterFile::new(
            Arc::clone(&self.catalog),
            self.sim.slots,
            self.policy.pmu_policy,
            self.noise,
            derive_seed(self.seed, stream),
        );
        let disabled: Vec<u32> = self
            .policy
            .per_event_disable
            .iter()
            .filter_map(|name| self.catalog.lookup(name))
            .collect();
        pmu.set_disabled_events(disabled);
        pmu
    }

    /// Fresh machine state for an attack run: the secret is planted in
    /// the protected region and its lines are warmed, modeling a victim
    /// that recently touched its own data. When the TEE launch check
    /// refuses (PMU still enabled under gating), the region stays
    /// unpopulated and any leak attempt fails measurably.
    pub fn attack_machine(&self, secret: &[u8], region_base: u64) -> MachineState {
        let mut state = MachineState::new(&self.sim);
        state.secret_region = region_base..region_base + secret.len().max(1) as u64 + 8;
        state.tee_protection = true;
        if crate::mitigation::tee_launch_check(self) == crate::mitigation::LaunchStatus::LaunchOk {
            for (i, &b) in secret.iter().enumerate() {
                state.mem.write_u8(region_base + i as u64, b);
            }
            let mut addr = region_base;
            while addr < region_base + secret.len().max(1) as u64 {
                state.cache.access(addr);
                addr += crate::sim::cache::LINE_BYTES;
            }
        }
        state
    }
}
