//! Countermeasures as switchable environment policies: counter-file
//! persistence modes, per-event disabling, and TEE launch gating.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::SimEnv;
use crate::pmu::PmuPolicy;

/// The policy knobs an operator can set before a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationPolicy {
    pub pmu_policy: PmuPolicy,
    /// Refuse to provision TEE secrets while the PMU is enabled.
    pub tee_gate: bool,
    /// Event names that may not be programmed onto any counter.
    #[serde(default)]
    pub per_event_disable: Vec<String>,
}

impl Default for MitigationPolicy {
    fn default() -> Self {
        Self {
            pmu_policy: PmuPolicy::Vulnerable,
            tee_gate: false,
            per_event_disable: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("per_event_disable names unknown event {0:?}")]
    UnknownEvent(String),
}

/// Install `policy` on the environment. Disabled event names must exist
/// in the loaded catalog.
pub fn apply_policy(env: &mut SimEnv, policy: MitigationPolicy) -> Result<(), PolicyError> {
    for name in &policy.per_event_disable {
        if env.catalog.lookup(name).is_none() {
            return Err(PolicyError::UnknownEvent(name.clone()));
        }
    }
    env.policy = policy;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LaunchStatus {
    LaunchOk,
    Refused,
}

/// TEE launch check: refuse secret provisioning whenever the gate is on
/// and the PMU is not disabled.
pub fn tee_launch_check(env: &SimEnv) -> LaunchStatus {
    if env.policy.tee_gate && env.policy.pmu_policy != PmuPolicy::Disabled {
        LaunchStatus::Refused
    } else {
        LaunchStatus::LaunchOk
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::isa::InstructionSet;
    use std::sync::Arc;

    fn env() -> SimEnv {
        SimEnv::new(
            Arc::new(Catalog::empty()),
            Arc::new(InstructionSet::base()),
        )
    }

    #[test]
    fn gate_on_pmu_disabled_launches() {
        let mut e = env();
        e.policy.tee_gate = true;
        e.policy.pmu_policy = PmuPolicy::Disabled;
        assert_eq!(tee_launch_check(&e), LaunchStatus::LaunchOk);
    }

    #[test]
    fn gate_on_pmu_enabled_refuses() {
        let mut e = env();
        e.policy.tee_gate = true;
        e.policy.pmu_policy = PmuPolicy::Vulnerable;
        assert_eq!(tee_launch_check(&e), LaunchStatus::Refused);
    }

    #[test]
    fn gate_off_always_launches() {
        let mut e = env();
        e.policy.tee_gate = false;
        for policy in PmuPolicy::ALL {
            e.policy.pmu_policy = policy;
            assert_eq!(tee_launch_check(&e), LaunchStatus::LaunchOk);
        }
    }

    #[test]
    fn unknown_disabled_event_rejected() {
        let mut e = env();
        let err = apply_policy(
            &mut e,
            MitigationPolicy {
                per_event_disable: vec!["NOPE".into()],
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err, PolicyError::UnknownEvent("NOPE".into()));
    }

    #[test]
    fn refused_launch_leaves_secret_region_unpopulated() {
        let mut e = env();
        e.policy.tee_gate = true;
        e.policy.pmu_policy = PmuPolicy::Vulnerable;
        let state = e.attack_machine(&[0xAB, 0xCD], 0x10000);
        assert_eq!(state.mem.read_u8(0x10000), 0);
        assert_eq!(state.mem.read_u8(0x10001), 0);

        e.policy.tee_gate = false;
        let state = e.attack_machine(&[0xAB, 0xCD], 0x10000);
        assert_eq!(state.mem.read_u8(0x10000), 0xAB);
        assert_eq!(state.mem.read_u8(0x10001), 0xCD);
    }
}
