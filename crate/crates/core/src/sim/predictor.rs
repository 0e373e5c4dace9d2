//! Per-pc 2-bit saturating branch predictor.
//!
//! Counter encoding: 0 strongly not-taken, 1 weakly not-taken, 2 weakly
//! taken, 3 strongly taken. Unseen branches read as the configured
//! initial value (weakly not-taken by default).

pub const STRONG_NOT_TAKEN: u8 = 0;
pub const WEAK_NOT_TAKEN: u8 = 1;
pub const WEAK_TAKEN: u8 = 2;
pub const STRONG_TAKEN: u8 = 3;

#[derive(Debug, Clone)]
pub struct PredictorState {
    table: std::collections::HashMap<u32, u8>,
    initial: u8,
}

impl Default for PredictorState {
    fn default() -> Self {
        Self::new(WEAK_NOT_TAKEN)
    }
}

impl PredictorState {
    pub fn new(initial: u8) -> Self {
        assert!(initial <= STRONG_TAKEN);
        Self {
            table: std::collections::HashMap::new(),
            initial,
        }
    }

    pub fn counter(&self, branch_pc: u32) -> u8 {
        *self.table.get(&branch_pc).unwrap_or(&self.initial)
    }

    /// Predicted direction: taken when the counter is in a taken state.
    pub fn predict(&self, branch_pc: u32) -> bool {
        self.counter(branch_pc) >= WEAK_TAKEN
    }

    /// Update toward the architecturally resolved outcome, saturating at
    /// the strong states.
    pub fn update(&mut self, branch_pc: u32, taken: bool) {
        let entry = self.table.entry(branch_pc).or_insert(self.initial);
        if taken {
            *entry = (*entry + 1).min(STRONG_TAKEN);
        } else {
            *entry = entry.saturating_sub(1);
        }
    }
}
