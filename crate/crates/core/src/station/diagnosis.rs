use super::{FaultKind, KpiSample};

/// Configured tx power minus mean attached RSRP above which the PA is taken
/// to be derated. Healthy cells sit near the mean pathloss (~100 dB).
pub const PA_GAP_THRESHOLD_DB: f64 = 110.0;

/// Threshold classifier over post-fault samples.
///
/// Checks the three fault signatures in turn: throughput flat at zero while
/// UEs stay connected, attach attempts that never succeed, and an RSRP gap
/// well beyond the pathloss population.
pub fn classify_fault(samples: &[KpiSample], configured_tx_power_dbm: f64) -> Option<FaultKind> {
    if samples.is_empty() {
        return None;
    }
    let connected = samples.iter().any(|s| s.connected_ues > 0);
    let zero_tput = samples.iter().all(|s| s.dl_throughput_mbps == 0.0);
    if connected && zero_tput {
        return Some(FaultKind::BackhaulDown);
    }

    let attempts: u32 = samples.iter().map(|s| s.attach_attempts).sum();
    let successes: u32 = samples.iter().map(|s| s.attach_successes).sum();
    if attempts > 0 && successes == 0 {
        return Some(FaultKind::SyncLoss);
    }

    let attached: Vec<f64> = samples
        .iter()
        .filter(|s| s.connected_ues > 0)
        .map(|s| s.avg_rsrp_dbm)
        .collect();
    if !attached.is_empty() {
        let mean_rsrp = attached.iter().sum::<f64>() / attached.len() as f64;
        if configured_tx_power_dbm - mean_rsrp > PA_GAP_THRESHOLD_DB {
            return Some(FaultKind::PaOverheat);
        }
    }
    None
}
