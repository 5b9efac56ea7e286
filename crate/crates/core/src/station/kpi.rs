use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Lifecycle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub sim_time_s: f64,
    pub lifecycle: Lifecycle,
    pub connected_ues: u32,
    pub attach_attempts: u32,
    pub attach_successes: u32,
    pub avg_rsrp_dbm: f64,
    pub dl_throughput_mbps: f64,
}

/// Aggregate view over a run of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub samples: usize,
    pub attach_attempts: u32,
    pub attach_successes: u32,
    /// `None` when the window saw no attach attempts.
    pub attach_success_rate: Option<f64>,
    pub mean_connected_ues: f64,
    pub mean_throughput_mbps: f64,
    pub mean_rsrp_dbm: f64,
}

impl KpiSummary {
    pub fn from_samples(samples: &[KpiSample]) -> Self {
        let n = samples.len();
        let attempts: u32 = samples.iter().map(|s| s.attach_attempts).sum();
        let successes: u32 = samples.iter().map(|s| s.attach_successes).sum();
        let mean = |f: fn(&KpiSample) -> f64| {
            if n == 0 {
                0.0
            } else {
                samples.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            samples: n,
            attach_attempts: attempts,
            attach_successes: successes,
            attach_success_rate: (attempts > 0).then(|| f64::from(successes) / f64::from(attempts)),
            mean_connected_ues: mean(|s| f64::from(s.connected_ues)),
            mean_throughput_mbps: mean(|s| s.dl_throughput_mbps),
            mean_rsrp_dbm: mean(|s| s.avg_rsrp_dbm),
        }
    }
}

pub const KPI_RING_CAPACITY: usize = 3600;

/// Bounded, time-ordered history of KPI samples.
#[derive(Debug, Clone)]
pub struct KpiRing {
    capacity: usize,
    buf: VecDeque<KpiSample>,
}

impl Default for KpiRing {
    fn default() -> Self {
        Self::with_capacity(KPI_RING_CAPACITY)
    }
}

impl KpiRing {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            buf: VecDeque::with_capacity(capacity.min(1024)),
        }
    }

    pub fn push(&mut self, sample: KpiSample) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &KpiSample> {
        self.buf.iter()
    }

    pub fn last_n(&self, n: usize) -> Vec<KpiSample> {
        let skip = self.buf.len().saturating_sub(n);
        self.buf.iter().skip(skip).cloned().collect()
    }

    /// Samples stamped within the last `window_s` seconds of the newest one.
    pub fn window(&self, window_s: f64) -> Vec<KpiSample> {
        let Some(newest) = self.buf.back() else {
            return Vec::new();
        };
        let cutoff = newest.sim_time_s - window_s;
        let start = self.buf.partition_point(|s| s.sim_time_s <= cutoff);
        self.buf.range(start..).cloned().collect()
    }
}
