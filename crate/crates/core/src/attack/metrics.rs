//! Leak-run metrics: error rate, work per byte, and the modeled
//! throughput derived from simulated cycles and a configured clock.

use serde::Serialize;

use super::{DecodeFailure, LeakOutcome};

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub bytes_total: u64,
    pub bytes_correct: u64,
    pub bytes_wrong: u64,
    pub bytes_failed: u64,
    /// Wrong or failed bytes over total bytes.
    pub error_rate: f64,
    pub executions_per_byte: f64,
    pub cycles_per_byte: f64,
    /// Modeled throughput at the configured clock, bytes per second.
    pub throughput_bps: f64,
}

impl Metrics {
    /// Summarize leak outcomes against the true planted bytes.
    pub fn from_outcomes(truth: &[u8], outcomes: &[LeakOutcome], clock_hz: f64) -> Self {
        assert_eq!(truth.len(), outcomes.len());
        let mut correct = 0u64;
        let mut wrong = 0u64;
        let mut failed = 0u64;
        let mut executions = 0u64;
        let mut cycles = 0u64;
        for (t, o) in truth.iter().zip(outcomes) {
            match o.decoded {
                Ok(b) if b == *t => correct += 1,
                Ok(_) => wrong += 1,
                Err(DecodeFailure::NoConclusiveRounds)
                | Err(DecodeFailure::Tie)
                | Err(DecodeFailure::CounterUnavailable)
                | Err(DecodeFailure::MissingSamples) => failed += 1,
            }
            executions += o.core_executions;
            cycles += o.cycles;
        }
        let total = truth.len() as u64;
        let cycles_per_byte = cycles as f64 / total.max(1) as f64;
        Metrics {
            bytes_total: total,
            bytes_correct: correct,
            bytes_wrong: wrong,
            bytes_failed: failed,
            error_rate: (wrong + failed) as f64 / total.max(1) as f64,
            executions_per_byte: executions as f64 / total.max(1) as f64,
            cycles_per_byte,
            throughput_bps: if cycles_per_byte > 0.0 {
                clock_hz / cycles_per_byte
            } else {
                0.0
            },
        }
    }

    /// Fraction of decodes that failed outright (no byte produced).
    pub fn failure_rate(&self) -> f64 {
        self.bytes_failed as f64 / self.bytes_total.max(1) as f64
    }

    /// Fraction of produced-or-failed decodes equal to the truth.
    pub fn accuracy(&self) -> f64 {
        self.bytes_correct as f64 / self.bytes_total.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Decode;

    fn outcome(decoded: Result<u8, DecodeFailure>) -> LeakOutcome {
        LeakOutcome {
            decoded,
            per_round: vec![Decode::Inconclusive],
            traces: Vec::new(),
            core_executions: 15_360,
            cycles: 100_000,
        }
    }

    #[test]
    fn counts_and_rates() {
        let truth = [1u8, 2, 3, 4];
        let outcomes = vec![
            outcome(Ok(1)),
            outcome(Ok(9)),
            outcome(Err(DecodeFailure::NoConclusiveRounds)),
            outcome(Ok(4)),
        ];
        let m = Metrics::from_outcomes(&truth, &outcomes, 1e9);
        assert_eq!(m.bytes_correct, 2);
        assert_eq!(m.bytes_wrong, 1);
        assert_eq!(m.bytes_failed, 1);
        assert!((m.error_rate - 0.5).abs() < 1e-12);
        assert!((m.executions_per_byte - 15_360.0).abs() < 1e-9);
        assert!((m.throughput_bps - 1e9 / 100_000.0).abs() < 1e-6);
    }
}
