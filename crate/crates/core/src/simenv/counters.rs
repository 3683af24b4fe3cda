use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Synthetic per-second counter rates for one HP workload.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CounterVector {
    pub instructions_retired: f64,
    pub unhalted_cycles: f64,
    pub frontend_stall_retired: f64,
    pub l2_code_reads: f64,
    pub offcore_requests: f64,
    pub offcore_buffer_full: f64,
}

impl CounterVector {
    pub const LEN: usize = 6;

    pub const NAMES: [&'static str; 6] = [
        "instructions_retired",
        "unhalted_cycles",
        "frontend_stall_retired",
        "l2_code_reads",
        "offcore_requests",
        "offcore_buffer_full",
    ];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.instructions_retired,
            self.unhalted_cycles,
            self.frontend_stall_retired,
            self.l2_code_reads,
            self.offcore_requests,
            self.offcore_buffer_full,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            instructions_retired: v[0],
            unhalted_cycles: v[1],
            frontend_stall_retired: v[2],
            l2_code_reads: v[3],
            offcore_requests: v[4],
            offcore_buffer_full: v[5],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; 6] = v.try_into().map_err(|_| Error::Shape {
            expected: 6,
            actual: v.len(),
        })?;
        Ok(Self::from_array(arr))
    }

    pub fn index_of(name: &str) -> Option<usize> {
        Self::NAMES.iter().position(|n| *n == name)
    }

    pub fn ipc(&self) -> f64 {
        if self.unhalted_cycles > 0.0 {
            self.instructions_retired / self.unhalted_cycles
        } else {
            0.0
        }
    }

    pub fn mean(vectors: &[CounterVector]) -> CounterVector {
        if vectors.is_empty() {
            return CounterVector::default();
        }
        let mut acc = [0.0; 6];
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v.to_array()) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        CounterVector::from_array(acc.map(|a| a / n))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}
