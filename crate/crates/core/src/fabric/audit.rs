use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::store::Split;

/// One label read, tagged with the phase that was active at the time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAccess {
    pub phase: String,
    pub split: Split,
}

/// Label-access instrumentation shared between an evaluator and its workers.
#[derive(Debug, Default)]
pub struct AccessLog {
    phase: Mutex<String>,
    events: Mutex<Vec<LabelAccess>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_phase(&self, phase: &str) {
        *self.phase.lock().unwrap() = phase.to_string();
    }

    pub fn phase(&self) -> String {
        self.phase.lock().unwrap().clone()
    }

    pub fn record(&self, split: Split) {
        let phase = self.phase();
        self.events.lock().unwrap().push(LabelAccess { phase, split });
    }

    pub fn events(&self) -> Vec<LabelAccess> {
        self.events.lock().unwrap().clone()
    }

    /// Reads of `split` labels made while the phase differed from `allowed`.
    pub fn reads_outside(&self, split: Split, allowed: &str) -> usize {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.split == split && e.phase != allowed)
            .count()
    }
}
